use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::dataset::Instruction;

const PAD: &str = "<PAD>";
const UNK: &str = "<UNK>";
const LOAD: &str = "<LD>";
const STORE: &str = "<ST>";

/// Token vocabulary of the surrogate. Order matters: it indexes the
/// embedding table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl TokenVocab {
    /// Markers, `R:`/`W:` register tokens, `M:` memory ids, then `O:` opcodes.
    pub fn build(opcodes: &[String], memory_ids: &[String], register_count: u16) -> Self {
        let mut tokens: Vec<String> = [PAD, UNK, LOAD, STORE].iter().map(|s| s.to_string()).collect();
        for r in 0..register_count {
            tokens.push(format!("R:r{r}"));
            tokens.push(format!("W:r{r}"));
        }
        tokens.extend(memory_ids.iter().map(|m| format!("M:{m}")));
        tokens.extend(opcodes.iter().map(|o| format!("O:{o}")));
        TokenVocab::from_tokens(tokens)
    }

    /// Rebuilds a vocabulary from its ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        TokenVocab { tokens, index }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(1)
    }

    pub fn unk(&self) -> usize {
        self.id(UNK)
    }

    pub fn encode(&self, inst: &Instruction) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 + inst.reads.len() + inst.writes.len() + 4);
        out.push(self.id(&format!("O:{}", inst.opcode)));
        out.extend(inst.reads.iter().map(|r| self.id(&format!("R:r{r}"))));
        if let Some(m) = &inst.load {
            out.push(self.id(LOAD));
            out.push(self.id(&format!("M:{m}")));
        }
        out.extend(inst.writes.iter().map(|r| self.id(&format!("W:r{r}"))));
        if let Some(m) = &inst.store {
            out.push(self.id(STORE));
            out.push(self.id(&format!("M:{m}")));
        }
        out
    }
}
