//! Measurements: `block_id<TAB>cycles_per_iteration`.

use difftune_core::Measurement;

use super::{content_lines, FormatError};

pub fn parse_measurements(text: &str) -> Result<Vec<Measurement>, FormatError> {
    content_lines(text)
        .map(|(n, l)| {
            let mut f = l.split_whitespace();
            let (Some(id), Some(t), None) = (f.next(), f.next(), f.next()) else {
                return Err(FormatError::at(n, "expected <block_id> <timing>"));
            };
            let timing: f64 = t.parse().map_err(|_| FormatError::at(n, format!("bad timing {t:?}")))?;
            Ok(Measurement {
                block_id: id.into(),
                timing,
            })
        })
        .collect()
}

pub fn write_measurements(ms: &[Measurement]) -> String {
    ms.iter().map(|m| format!("{}\t{}\n", m.block_id, m.timing)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let ms = parse_measurements("a\t1.5\nb 2 # note\n").unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[1].timing, 2.0);
        assert_eq!(parse_measurements(&write_measurements(&ms)).unwrap(), ms);
        assert!(parse_measurements("a\n").is_err());
        assert!(parse_measurements("a x\n").is_err());
    }
}
