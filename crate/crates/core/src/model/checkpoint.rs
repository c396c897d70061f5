//! Binary checkpoints.
//!
//! Layout (little endian): magic `AFDGCKPT`, format version `u32`, width of
//! the scalar that wrote it `u8`, then a length-prefixed JSON header holding
//! the model config and optional vocabulary, then a `u32` tensor count and
//! for each tensor its name, rank, `u64` dims and `f64` values. The word VAD
//! table travels as the tensor `vocab_vad` of shape `[V, 3]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::affective::VocabVad;
use super::config::ModelConfig;
use super::seq2seq::Seq2Seq;
use crate::affect::VadVector;
use crate::error::{Error, Result};
use crate::neural::{ParamStore, Tensor};
use crate::scalar::Scalar;
use crate::text::Vocabulary;

pub const MAGIC: &[u8; 8] = b"AFDGCKPT";
pub const FORMAT_VERSION: u32 = 1;
const VAD_TENSOR: &str = "vocab_vad";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Option<Vocabulary>,
}

/// A loaded model together with the vocabulary it was trained on, if saved.
#[derive(Debug, Clone)]
pub struct Checkpoint<T: Scalar> {
    pub model: Seq2Seq<T>,
    pub vocab: Option<Vocabulary>,
}

pub fn save_checkpoint<T: Scalar>(model: &Seq2Seq<T>, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(model, None, path)
}

pub fn write_checkpoint<T: Scalar>(model: &Seq2Seq<T>, vocab: Option<&Vocabulary>, path: impl AsRef<Path>) -> Result<()> {
    if let Some(v) = vocab {
        if v.len() != model.config().vocab_size {
            return Err(Error::Checkpoint(format!("vocabulary has {} words, model {}", v.len(), model.config().vocab_size)));
        }
    }
    let path = path.as_ref();
    // write to a sibling file first so a crash never leaves a torn checkpoint
    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[T::WIDTH])?;
        let header = serde_json::to_vec(&Header { config: model.config().clone(), vocab: vocab.cloned() })?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;

        let count = model.params().len() + 1;
        w.write_all(&(count as u32).to_le_bytes())?;
        for (_, name, t) in model.params().iter() {
            write_tensor(&mut w, name, t.shape(), t.data())?;
        }
        let vad: Vec<T> = model.vad().vads().iter().flat_map(|x| x.to_array()).collect();
        write_tensor(&mut w, VAD_TENSOR, &[model.vad().len(), 3], &vad)?;
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_tensor<T: Scalar>(w: &mut impl Write, name: &str, shape: &[usize], data: &[T]) -> Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for x in data {
        w.write_all(&x.as_f64().to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| Error::Checkpoint(format!("truncated while reading {what}: {e}")))?;
    Ok(b)
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r, what)?))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r, what)?))
}

// Upper bound on any single length field, guarding allocations against
// corrupt files.
const MAX_LEN: u64 = 1 << 32;

fn read_len(r: &mut impl Read, what: &str) -> Result<usize> {
    let n = read_u64(r, what)?;
    if n > MAX_LEN {
        return Err(Error::Checkpoint(format!("implausible {what} {n}")));
    }
    Ok(n as usize)
}

/// Loads a checkpoint into scalar type `T`, converting if it was written
/// with a different width.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?);
    if &read_array::<8>(&mut r, "magic")? != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = read_u32(&mut r, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let width = read_array::<1>(&mut r, "scalar width")?[0];
    if width != 4 && width != 8 {
        return Err(Error::Checkpoint(format!("bad scalar width {width}")));
    }
    let hlen = read_len(&mut r, "header length")?;
    let mut hbuf = vec![0u8; hlen];
    r.read_exact(&mut hbuf).map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    let header: Header = serde_json::from_slice(&hbuf)?;

    let count = read_u32(&mut r, "tensor count")?;
    let mut store = ParamStore::new();
    let mut vad = None;
    for _ in 0..count {
        let nlen = read_u32(&mut r, "name length")? as usize;
        if nlen > 1024 {
            return Err(Error::Checkpoint(format!("implausible name length {nlen}")));
        }
        let mut name = vec![0u8; nlen];
        r.read_exact(&mut name).map_err(|e| Error::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let ndim = read_u32(&mut r, "rank")?;
        if ndim > 4 {
            return Err(Error::Checkpoint(format!("{name}: rank {ndim}")));
        }
        let shape = (0..ndim).map(|_| read_len(&mut r, "dimension")).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        if n as u64 > MAX_LEN {
            return Err(Error::Checkpoint(format!("{name}: {n} values")));
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(T::of(f64::from_le_bytes(read_array(&mut r, &name)?)));
        }
        if name == VAD_TENSOR {
            if shape.len() != 2 || shape[1] != 3 {
                return Err(Error::Checkpoint(format!("{VAD_TENSOR} has shape {shape:?}")));
            }
            vad = Some(VocabVad::new(data.chunks(3).map(|c| VadVector::from_array([c[0], c[1], c[2]])).collect()));
        } else {
            if store.id(&name).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
            }
            let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            store.add(name, t);
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    let vad = vad.ok_or_else(|| Error::Checkpoint(format!("missing {VAD_TENSOR}")))?;
    if let Some(v) = &header.vocab {
        if v.len() != header.config.vocab_size {
            return Err(Error::Checkpoint("stored vocabulary disagrees with vocab_size".into()));
        }
    }
    let model = Seq2Seq::from_parts(header.config, store, vad)?;
    Ok(Checkpoint { model, vocab: header.vocab })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affect::EmotionDistribution;
    use crate::model::ModelVariant;

    fn model(variant: ModelVariant) -> Seq2Seq<f64> {
        let mut cfg = ModelConfig::small(8, 4, 3, variant);
        cfg.max_length = 5;
        let vad = VocabVad::new((0..8).map(|i| VadVector::splat(i as f64 / 8.0)).collect());
        Seq2Seq::new(cfg, vad, 11).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for v in [ModelVariant::BASELINE, ModelVariant { see: true, sed: true, wi: true, we: true }] {
            let m = model(v);
            let vocab = Vocabulary::from_words(["a", "b", "c", "d"]);
            let p = dir.path().join(format!("{v}.ckpt"));
            write_checkpoint(&m, Some(&vocab), &p).unwrap();
            let back = load_checkpoint::<f64>(&p).unwrap();
            assert_eq!(back.model, m);
            assert_eq!(back.vocab.unwrap(), vocab);
        }
    }

    #[test]
    fn loads_as_f32() {
        let dir = tempfile::tempdir().unwrap();
        let m = model(ModelVariant::WE);
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&m, &p).unwrap();
        let back = load_checkpoint::<f32>(&p).unwrap().model;
        let e = EmotionDistribution::uniform();
        let a = m.sequence_log_prob(&[4, 5], &[6], &e).unwrap();
        let b = back.sequence_log_prob(&[4, 5], &[6], &e.cast()).unwrap();
        assert!((a - b as f64).abs() < 1e-4);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&model(ModelVariant::SEE), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_checkpoint::<f64>(&p), Err(Error::Checkpoint(_))));
        std::fs::write(&p, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_checkpoint::<f64>(&p), Err(Error::Checkpoint(_))));
        assert!(load_checkpoint::<f64>(dir.path().join("missing")).is_err());
    }
}
