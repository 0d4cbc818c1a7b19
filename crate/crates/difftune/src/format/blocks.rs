//! Blocks: `id<TAB>instr | instr | ...`, where an instruction is
//! `OPCODE [W:r1,r2] [R:r3,r4] [LD:mem] [ST:mem]`.

use std::fmt::Write;

use difftune_core::{BasicBlock, Instruction};

use super::{content_lines, FormatError};

fn parse_regs(s: &str) -> Result<Vec<u16>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|r| {
            let r = r.trim();
            r.strip_prefix('r')
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| format!("bad register {r:?}"))
        })
        .collect()
}

pub fn parse_instruction(text: &str) -> Result<Instruction, String> {
    let mut parts = text.split_whitespace();
    let op = parts.next().ok_or("empty instruction")?;
    if op.contains(':') {
        return Err(format!("instruction must start with an opcode, got {op:?}"));
    }
    let mut inst = Instruction::new(op, Vec::new(), Vec::new());
    for p in parts {
        let (key, val) = p.split_once(':').ok_or_else(|| format!("bad operand {p:?}"))?;
        match key {
            "W" => inst.writes.extend(parse_regs(val)?),
            "R" => inst.reads.extend(parse_regs(val)?),
            "LD" if !val.is_empty() && inst.load.is_none() => inst.load = Some(val.into()),
            "ST" if !val.is_empty() && inst.store.is_none() => inst.store = Some(val.into()),
            _ => return Err(format!("bad operand {p:?}")),
        }
    }
    Ok(inst)
}

/// Parses one `id<TAB>instructions` line.
pub fn parse_block(line: &str) -> Result<BasicBlock, String> {
    let (id, body) = line.split_once('\t').ok_or("expected <id><TAB><instructions>")?;
    let id = id.trim();
    if id.is_empty() {
        return Err("empty block id".into());
    }
    let insts = body
        .split('|')
        .map(|s| parse_instruction(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    BasicBlock::new(id, insts).map_err(|e| e.to_string())
}

pub fn parse_blocks(text: &str) -> Result<Vec<BasicBlock>, FormatError> {
    content_lines(text)
        .map(|(n, l)| parse_block(l).map_err(|m| FormatError::at(n, m)))
        .collect()
}

fn regs(r: &[u16]) -> String {
    r.iter().map(|r| format!("r{r}")).collect::<Vec<_>>().join(",")
}

pub fn format_instruction(i: &Instruction) -> String {
    let mut s = i.opcode.clone();
    if !i.writes.is_empty() {
        let _ = write!(s, " W:{}", regs(&i.writes));
    }
    if !i.reads.is_empty() {
        let _ = write!(s, " R:{}", regs(&i.reads));
    }
    if let Some(m) = &i.load {
        let _ = write!(s, " LD:{m}");
    }
    if let Some(m) = &i.store {
        let _ = write!(s, " ST:{m}");
    }
    s
}

pub fn format_block(b: &BasicBlock) -> String {
    let body: Vec<String> = b.instructions.iter().map(format_instruction).collect();
    format!("{}\t{}", b.id, body.join(" | "))
}

pub fn write_blocks(blocks: &[BasicBlock]) -> String {
    let mut s = String::new();
    for b in blocks {
        s.push_str(&format_block(b));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_grammar() {
        let b = parse_block("b1\tADD W:r1 R:r1,r2 | MOV W:r3 R:r1 LD:m0 | PUSH R:r3 ST:stack").unwrap();
        assert_eq!(b.id, "b1");
        assert_eq!(b.len(), 3);
        assert_eq!(b.instructions[0].reads, vec![1, 2]);
        assert_eq!(b.instructions[1].load.as_deref(), Some("m0"));
        assert_eq!(b.instructions[2].store.as_deref(), Some("stack"));
        assert!(b.instructions[2].writes.is_empty());
        assert_eq!(parse_block(&format_block(&b)).unwrap(), b);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_block("no tab here").is_err());
        assert!(parse_block("b\t").is_err());
        assert!(parse_block("b\tADD W:x1").is_err());
        assert!(parse_block("b\tADD Q:r1").is_err());
        assert!(parse_block("b\tW:r1").is_err());
        assert!(parse_block("b\tADD LD:a LD:b").is_err());
        let e = parse_blocks("# header\nb0\tNOP\n\nb1\tADD W:r").unwrap_err();
        assert!(matches!(e, FormatError::Parse { line: 4, .. }), "{e}");
    }
}
