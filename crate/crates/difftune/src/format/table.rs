//! Parameter tables:
//!
//! ```text
//! dispatch_width 4
//! reorder_buffer_size 100
//! ADD uops=1 lat=1 ra=0,0,0 ports=1,0,0,0,0,0,0,0,0,0
//! ```
//!
//! The same layout holds integer tables and relaxed (real-valued) ones.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use difftune_core::params::{NUM_PORTS, NUM_READ_ADVANCE};
use difftune_core::{OpcodeParams, ParameterTable};

use super::{content_lines, FormatError};

fn list<T: FromStr, const N: usize>(s: &str) -> Result<[T; N], String> {
    let v: Vec<T> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("bad value {x:?}")))
        .collect::<Result<_, _>>()?;
    let n = v.len();
    v.try_into().map_err(|_| format!("expected {N} values, got {n}"))
}

fn row<T: FromStr + Copy>(fields: &[&str]) -> Result<OpcodeParams<T>, String> {
    let (mut uops, mut lat, mut ra, mut ports) = (None, None, None, None);
    for f in fields {
        let (k, v) = f.split_once('=').ok_or_else(|| format!("expected key=value, got {f:?}"))?;
        let one = || v.parse::<T>().map_err(|_| format!("bad value {v:?}"));
        match k {
            "uops" => uops = Some(one()?),
            "lat" => lat = Some(one()?),
            "ra" => ra = Some(list::<T, NUM_READ_ADVANCE>(v)?),
            "ports" => ports = Some(list::<T, NUM_PORTS>(v)?),
            _ => return Err(format!("unknown field {k:?}")),
        }
    }
    Ok(OpcodeParams {
        num_micro_ops: uops.ok_or("missing uops=")?,
        write_latency: lat.ok_or("missing lat=")?,
        read_advance: ra.ok_or("missing ra=")?,
        port_map: ports.ok_or("missing ports=")?,
    })
}

pub fn parse_table<T: FromStr + Copy>(text: &str) -> Result<ParameterTable<T>, FormatError> {
    let (mut dw, mut rob) = (None, None);
    let mut rows = BTreeMap::new();
    for (n, l) in content_lines(text) {
        let fields: Vec<&str> = l.split_whitespace().collect();
        let scalar = |fields: &[&str]| match fields {
            [_, v] => v.parse::<T>().map_err(|_| FormatError::at(n, format!("bad value {v:?}"))),
            _ => Err(FormatError::at(n, "expected <name> <value>")),
        };
        match fields[0] {
            "dispatch_width" => dw = Some(scalar(&fields)?),
            "reorder_buffer_size" => rob = Some(scalar(&fields)?),
            op => {
                let r = row(&fields[1..]).map_err(|m| FormatError::at(n, m))?;
                if rows.insert(op.to_string(), r).is_some() {
                    return Err(FormatError::at(n, format!("duplicate opcode {op:?}")));
                }
            }
        }
    }
    Ok(ParameterTable {
        dispatch_width: dw.ok_or_else(|| FormatError::Invalid("missing dispatch_width".into()))?,
        reorder_buffer_size: rob.ok_or_else(|| FormatError::Invalid("missing reorder_buffer_size".into()))?,
        rows,
    })
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn write_table<T: Display + Copy>(t: &ParameterTable<T>) -> String {
    let mut s = format!("dispatch_width {}\nreorder_buffer_size {}\n", t.dispatch_width, t.reorder_buffer_size);
    for (op, r) in &t.rows {
        s.push_str(&format!(
            "{op} uops={} lat={} ra={} ports={}\n",
            r.num_micro_ops,
            r.write_latency,
            join(&r.read_advance),
            join(&r.port_map)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use difftune_core::{IntTable, RealTable};

    const TEXT: &str = "# example\ndispatch_width 4\nreorder_buffer_size 100\n\
        ADD uops=1 lat=1 ra=0,0,0 ports=1,0,0,0,0,0,0,0,0,0\n\
        MUL uops=2 lat=3 ra=1,0,0 ports=0,2,0,0,0,0,0,0,0,1\n";

    #[test]
    fn round_trips() {
        let t: IntTable = parse_table(TEXT).unwrap();
        assert_eq!(t.dispatch_width, 4);
        assert_eq!(t.rows["MUL"].port_map[9], 1);
        assert_eq!(parse_table::<u32>(&write_table(&t)).unwrap(), t);
        let r: RealTable = t.relax().map(|_, v| v - 0.25);
        assert_eq!(parse_table::<f64>(&write_table(&r)).unwrap(), r);
    }

    #[test]
    fn errors() {
        assert!(parse_table::<u32>("dispatch_width 4\n").is_err());
        assert!(matches!(
            parse_table::<u32>("dispatch_width 4\nreorder_buffer_size 9\nADD uops=1 lat=1 ra=0,0 ports=0,0,0,0,0,0,0,0,0,0\n"),
            Err(FormatError::Parse { line: 3, .. })
        ));
        assert!(parse_table::<u32>("dispatch_width x\n").is_err());
        let dup = format!("{TEXT}ADD uops=1 lat=1 ra=0,0,0 ports=0,0,0,0,0,0,0,0,0,0\n");
        assert!(parse_table::<u32>(&dup).is_err());
    }
}
