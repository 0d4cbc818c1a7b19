//! Simulated datasets:
//!
//! ```text
//! opcodes ADD MUL
//! block b0<TAB>ADD W:r1 R:r1
//! triple <block index> <timing> <dispatch_width> <reorder_buffer_size> <row entries, comma separated>
//! ```
//!
//! Blocks are numbered in order of appearance; row entries follow the
//! opcode order of the `opcodes` line.

use difftune_core::difftune::{SimTriple, SimulatedDataset};
use difftune_core::params::{TableLayout, ROW_WIDTH};

use super::{content_lines, format_block, parse_block, FormatError};

pub fn write_simdata(d: &SimulatedDataset) -> String {
    let mut s = format!("opcodes {}\n", d.layout.opcodes().join(" "));
    for b in &d.blocks {
        s.push_str(&format!("block {}\n", format_block(b)));
    }
    for t in &d.triples {
        let rows: Vec<String> = t.rows.iter().map(u32::to_string).collect();
        s.push_str(&format!(
            "triple {} {} {} {} {}\n",
            t.block,
            t.timing,
            t.globals[0],
            t.globals[1],
            rows.join(",")
        ));
    }
    if d.skipped > 0 {
        s.push_str(&format!("skipped {}\n", d.skipped));
    }
    s
}

pub fn parse_simdata(text: &str) -> Result<SimulatedDataset, FormatError> {
    let mut layout: Option<TableLayout> = None;
    let mut blocks = Vec::new();
    let mut triples = Vec::new();
    let mut skipped = 0;
    for (n, l) in content_lines(text) {
        let (kind, rest) = l.split_once(' ').unwrap_or((l, ""));
        match kind {
            "opcodes" => layout = Some(TableLayout::new(rest.split_whitespace().map(String::from).collect())),
            "block" => blocks.push(parse_block(rest).map_err(|m| FormatError::at(n, m))?),
            "skipped" => skipped = rest.trim().parse().map_err(|_| FormatError::at(n, "bad skipped count"))?,
            "triple" => {
                let lay = layout.as_ref().ok_or_else(|| FormatError::at(n, "triple before opcodes line"))?;
                let f: Vec<&str> = rest.split_whitespace().collect();
                let [b, t, dw, rob, rows] = f[..] else {
                    return Err(FormatError::at(n, "expected 5 triple fields"));
                };
                let bad = |what: &str| FormatError::at(n, format!("bad {what}"));
                let block: usize = b.parse().map_err(|_| bad("block index"))?;
                if block >= blocks.len() {
                    return Err(FormatError::at(n, format!("block index {block} not defined yet")));
                }
                let rows: Vec<u32> = rows
                    .split(',')
                    .map(|x| x.parse().map_err(|_| bad("row entry")))
                    .collect::<Result<_, _>>()?;
                if rows.len() != lay.len() * ROW_WIDTH {
                    return Err(FormatError::at(n, "row entry count does not match opcodes"));
                }
                triples.push(SimTriple {
                    rows,
                    globals: [dw.parse().map_err(|_| bad("dispatch width"))?, rob.parse().map_err(|_| bad("reorder buffer size"))?],
                    block,
                    timing: t.parse().map_err(|_| bad("timing"))?,
                });
            }
            other => return Err(FormatError::at(n, format!("unknown record {other:?}"))),
        }
    }
    Ok(SimulatedDataset {
        layout: layout.ok_or_else(|| FormatError::Invalid("missing opcodes line".into()))?,
        blocks,
        triples,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use difftune_core::dataset::{opcode_vocabulary, Measurement};
    use difftune_core::difftune::{generate_simulated_dataset, SamplingSpec};
    use difftune_core::synth::{random_blocks, SynthConfig};
    use difftune_core::{seeded_rng, Dataset, PipelineSimulator};

    fn sample() -> SimulatedDataset {
        let synth = SynthConfig {
            opcodes: 5,
            blocks: 12,
            ..SynthConfig::default()
        };
        let mut rng = seeded_rng(4);
        let blocks = random_blocks(&synth, &mut rng).unwrap();
        let ms = blocks
            .iter()
            .map(|b| Measurement {
                block_id: b.id.clone(),
                timing: 1.0,
            })
            .collect();
        let data = Dataset::new(blocks, ms).unwrap();
        let layout = TableLayout::new(opcode_vocabulary(&data));
        generate_simulated_dataset(&PipelineSimulator::default(), &data, &layout, &SamplingSpec::default(), 3, &mut rng).unwrap()
    }

    #[test]
    fn round_trips_exactly() {
        let mut d = sample();
        d.skipped = 2;
        assert_eq!(d.len(), 36);
        assert_eq!(parse_simdata(&write_simdata(&d)).unwrap(), d);
    }

    #[test]
    fn rejects_malformed() {
        let text = write_simdata(&sample());
        let body: Vec<&str> = text.lines().collect();
        let first_triple = body.iter().position(|l| l.starts_with("triple")).unwrap();

        // triple before the opcodes line
        let moved = format!("{}\n{}\n", body[first_triple], body[..first_triple].join("\n"));
        assert!(matches!(parse_simdata(&moved), Err(FormatError::Parse { line: 1, .. })));

        let bad_block = format!("{}\ntriple 99 1.0 4 100 0\n", body[..first_triple].join("\n"));
        assert!(parse_simdata(&bad_block).is_err());

        let short_row = format!("{}\ntriple 0 1.0 4 100 1,2,3\n", body[..first_triple].join("\n"));
        assert!(parse_simdata(&short_row).is_err());

        assert!(parse_simdata("bogus 1\n").is_err());
        assert!(matches!(parse_simdata("# nothing\n"), Err(FormatError::Invalid(_))));
    }
}
