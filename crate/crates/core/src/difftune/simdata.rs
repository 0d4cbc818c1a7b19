use alloc::vec::Vec;

use rand::Rng;

use super::SamplingSpec;
use super::sample_parameter_table;
use crate::dataset::{BasicBlock, Dataset};
use crate::params::{IntTable, TableLayout, GLOBAL_WIDTH, ROW_WIDTH};
use crate::sim::{SimError, Simulator};
use crate::surrogate::{row_features, FEATURE_WIDTH};

/// One simulated example: a sampled table (flattened in the dataset's
/// layout), a block, and the simulator's timing for the pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTriple {
    /// Row-major `[opcodes, ROW_WIDTH]`.
    pub rows: Vec<u32>,
    pub globals: [u32; GLOBAL_WIDTH],
    /// Index into [`SimulatedDataset::blocks`].
    pub block: usize,
    pub timing: f64,
}

/// Triples over a fixed set of blocks and a fixed opcode layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedDataset {
    pub layout: TableLayout,
    pub blocks: Vec<BasicBlock>,
    pub triples: Vec<SimTriple>,
    /// Draws the simulator rejected; they are not in `triples`.
    pub skipped: usize,
}

impl SimulatedDataset {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn table(&self, i: usize) -> IntTable {
        let t = &self.triples[i];
        self.layout.unflatten(&t.rows, t.globals)
    }

    pub fn block_of(&self, i: usize) -> &BasicBlock {
        &self.blocks[self.triples[i].block]
    }

    /// Surrogate input features of triple `i`, one row per instruction.
    pub fn features(&self, i: usize) -> Vec<[f64; FEATURE_WIDTH]> {
        let t = &self.triples[i];
        self.block_of(i)
            .instructions
            .iter()
            .map(|inst| {
                let r = self.layout.index_of(&inst.opcode).expect("block opcode in layout");
                let row: &[u32; ROW_WIDTH] = t.rows[r * ROW_WIDTH..(r + 1) * ROW_WIDTH]
                    .try_into()
                    .expect("row width");
                row_features(row, t.globals)
            })
            .collect()
    }
}

/// `multiplier · |source|` triples. Triple `i` pairs a fresh table with the
/// block of measurement `i mod |source|`, so every block appears
/// `multiplier` times. Tables the simulator rejects as unschedulable are
/// skipped and counted; other simulator errors abort.
pub fn generate_simulated_dataset<S: Simulator + ?Sized>(
    sim: &S,
    source: &Dataset,
    layout: &TableLayout,
    spec: &SamplingSpec,
    multiplier: usize,
    rng: &mut impl Rng,
) -> Result<SimulatedDataset, SimError> {
    let blocks: Vec<BasicBlock> = source.examples().map(|(b, _)| b.clone()).collect();
    let mut triples = Vec::with_capacity(blocks.len() * multiplier);
    let mut skipped = 0;
    for _ in 0..multiplier {
        for (bi, block) in blocks.iter().enumerate() {
            let table = sample_parameter_table(spec, layout.opcodes(), rng);
            match sim.simulate(&table, block) {
                Ok(r) => {
                    let (rows, globals) = layout.flatten(&table).expect("sampled over layout");
                    triples.push(SimTriple {
                        rows,
                        globals,
                        block: bi,
                        timing: r.cycles_per_iteration,
                    });
                }
                Err(SimError::Unschedulable { .. }) => {
                    log::debug!("skipping unschedulable draw for block {}", block.id);
                    skipped += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(SimulatedDataset {
        layout: layout.clone(),
        blocks,
        triples,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{opcode_vocabulary, Instruction, Measurement};
    use crate::sim::PipelineSimulator;
    use alloc::format;
    use alloc::vec;
    use rand::seq::SliceRandom;

    fn toy(n: usize) -> Dataset {
        let blocks: Vec<BasicBlock> = (0..n)
            .map(|i| {
                BasicBlock::new(
                    format!("b{i}"),
                    vec![
                        Instruction::new(format!("OP{}", i % 4), vec![(i % 16) as u16], vec![1]),
                        Instruction::new("ADD", vec![1], vec![(i % 16) as u16, 1]),
                    ],
                )
                .unwrap()
            })
            .collect();
        let ms = blocks
            .iter()
            .map(|b| Measurement {
                block_id: b.id.clone(),
                timing: 1.0,
            })
            .collect();
        Dataset::new(blocks, ms).unwrap()
    }

    #[test]
    fn size_labels_and_determinism() {
        let d = toy(300);
        let layout = TableLayout::new(opcode_vocabulary(&d));
        let sim = PipelineSimulator { iterations: 20 };
        let spec = SamplingSpec::default();
        let s = generate_simulated_dataset(&sim, &d, &layout, &spec, 10, &mut crate::seeded_rng(3)).unwrap();
        assert_eq!(s.len(), 3000);
        assert_eq!(s.skipped, 0);

        let mut rng = crate::seeded_rng(4);
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..50] {
            let r = sim.simulate(&s.table(i), s.block_of(i)).unwrap();
            assert_eq!(r.cycles_per_iteration, s.triples[i].timing);
        }

        let a = generate_simulated_dataset(&sim, &d, &layout, &spec, 1, &mut crate::seeded_rng(8)).unwrap();
        let b = generate_simulated_dataset(&sim, &d, &layout, &spec, 1, &mut crate::seeded_rng(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn features_match_table_features() {
        let d = toy(8);
        let layout = TableLayout::new(opcode_vocabulary(&d));
        let sim = PipelineSimulator { iterations: 5 };
        let s = generate_simulated_dataset(&sim, &d, &layout, &SamplingSpec::default(), 2, &mut crate::seeded_rng(1)).unwrap();
        for i in 0..s.len() {
            let want = crate::surrogate::fixed_features(&s.table(i), s.block_of(i)).unwrap();
            assert_eq!(s.features(i), want);
        }
    }
}
