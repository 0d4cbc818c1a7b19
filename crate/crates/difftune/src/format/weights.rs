//! Surrogate weights.
//!
//! The weights file is binary, little-endian: the magic `DTWT`, a `u32`
//! format version, a `u32` tensor count, then per tensor a `u32` name length,
//! the UTF-8 name, a `u32` rank, `u64` dimensions and `f64` values. A model
//! adds a text sidecar (`<weights>.model`) holding the dimensions and the
//! ordered token vocabulary.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use difftune_core::autodiff::{ParamStore, Tensor};
use difftune_core::surrogate::{Surrogate, SurrogateConfig, TokenVocab};

use super::{content_lines, FormatError};

const MAGIC: &[u8; 4] = b"DTWT";
const VERSION: u32 = 1;
pub const MODEL_SIDECAR_EXT: &str = "model";

pub fn write_weights(w: &mut impl Write, store: &ParamStore) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, t) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N], FormatError> {
    let mut b = [0; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn u32_of(r: &mut impl Read) -> Result<u32, FormatError> {
    Ok(u32::from_le_bytes(take(r)?))
}

pub fn read_weights(r: &mut impl Read) -> Result<ParamStore, FormatError> {
    if &take::<4>(r)? != MAGIC {
        return Err(FormatError::Invalid("not a weights file".into()));
    }
    let v = u32_of(r)?;
    if v != VERSION {
        return Err(FormatError::Invalid(format!("unsupported weights version {v}")));
    }
    let mut store = ParamStore::new();
    for _ in 0..u32_of(r)? {
        let len = u32_of(r)? as usize;
        let mut name = vec![0; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| FormatError::Invalid("tensor name is not UTF-8".into()))?;
        let rank = u32_of(r)? as usize;
        let shape = (0..rank)
            .map(|_| Ok(u64::from_le_bytes(take(r)?) as usize))
            .collect::<Result<Vec<_>, FormatError>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| Ok(f64::from_le_bytes(take(r)?)))
            .collect::<Result<Vec<_>, FormatError>>()?;
        let t = Tensor::new(shape, data).map_err(|e| FormatError::Invalid(e.to_string()))?;
        store.push(name, t);
    }
    Ok(store)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".");
    p.push(MODEL_SIDECAR_EXT);
    PathBuf::from(p)
}

/// Writes the weights to `path` and the configuration and vocabulary to
/// the sidecar next to it.
pub fn write_model(path: &Path, model: &Surrogate) -> Result<(), FormatError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_weights(&mut f, model.weights())?;
    f.flush()?;
    let c = model.config();
    let mut s = format!("embed_dim={}\nhidden_dim={}\ndepth={}\n", c.embed_dim, c.hidden_dim, c.depth);
    for t in model.vocab().tokens() {
        s.push_str(&format!("token {t}\n"));
    }
    std::fs::write(sidecar(path), s)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<Surrogate, FormatError> {
    let weights = read_weights(&mut std::io::BufReader::new(std::fs::File::open(path)?))?;
    let text = std::fs::read_to_string(sidecar(path))?;
    let mut config = SurrogateConfig::default();
    let mut tokens = Vec::new();
    for (n, l) in content_lines(&text) {
        if let Some(t) = l.strip_prefix("token ") {
            tokens.push(t.to_string());
            continue;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| FormatError::at(n, "expected key=value"))?;
        let v: usize = v.trim().parse().map_err(|_| FormatError::at(n, "bad number"))?;
        match k.trim() {
            "embed_dim" => config.embed_dim = v,
            "hidden_dim" => config.hidden_dim = v,
            "depth" => config.depth = v,
            other => return Err(FormatError::at(n, format!("unknown key {other:?}"))),
        }
    }
    Surrogate::from_weights(config, TokenVocab::from_tokens(tokens), weights).map_err(|e| FormatError::Invalid(e.to_string()))
}
