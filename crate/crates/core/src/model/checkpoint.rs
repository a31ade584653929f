//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `PNCK`, version, encoder kind code, input,
//! hidden, head hidden (all u32), output scale, normalization mean and std
//! (f64), tensor count (u32), then per tensor: name length (u32), UTF-8 name,
//! rank (u32), dims (u32 each), row-major f32 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::FormatError;
use crate::model::params::{BatchNorm, EncoderKind, InputNorm, ModelConfig, ModelParams};
use crate::Scalar;

const MAGIC: [u8; 4] = *b"PNCK";
const VERSION: u32 = 1;

struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn tensors<T: Scalar>(m: &ModelParams<T>) -> Vec<Tensor> {
    let f = |v: &[T]| v.iter().map(|x| x.f64() as f32).collect::<Vec<_>>();
    let mut out: Vec<Tensor> =
        m.params().into_iter().map(|p| Tensor { name: p.name.clone(), shape: p.shape.clone(), data: f(&p.value) }).collect();
    for bn in m.batch_norms() {
        let c = bn.features();
        out.push(Tensor { name: format!("{}.running_mean", bn.name()), shape: vec![c], data: f(&bn.running_mean) });
        out.push(Tensor { name: format!("{}.running_var", bn.name()), shape: vec![c], data: f(&bn.running_var) });
        // Batch counts stay exact in f32 well past any realistic run length.
        out.push(Tensor { name: format!("{}.count", bn.name()), shape: vec![1], data: vec![bn.count as f32] });
    }
    out
}

pub fn write_checkpoint<T: Scalar, W: Write>(m: &ModelParams<T>, mut w: W) -> Result<(), FormatError> {
    let c = &m.config;
    w.write_all(&MAGIC)?;
    for v in [VERSION, c.kind.code(), c.input as u32, c.hidden as u32, c.head_hidden as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in [c.output_scale, m.input_norm.mean, m.input_norm.std] {
        w.write_all(&v.to_le_bytes())?;
    }
    let ts = tensors(m);
    w.write_all(&(ts.len() as u32).to_le_bytes())?;
    for t in ts {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for d in &t.shape {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.data.len() * 4);
        t.data.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
        w.write_all(&buf)?;
    }
    Ok(())
}

struct Reader<R> {
    r: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        let mut b = [0u8; N];
        self.r.read_exact(&mut b)?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_checkpoint<T: Scalar, R: Read>(r: R) -> Result<ModelParams<T>, FormatError> {
    let mut r = Reader { r };
    let magic = r.bytes::<4>()?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic, expected: MAGIC });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let code = r.u32()?;
    let kind = EncoderKind::from_code(code).ok_or_else(|| FormatError::Malformed(format!("encoder kind {code}")))?;
    let (input, hidden, head_hidden) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let output_scale = r.f64()?;
    let input_norm = InputNorm { mean: r.f64()?, std: r.f64()? };
    let config = ModelConfig { kind, input, hidden, head_hidden, output_scale };
    let mut m = ModelParams::<T>::init(config, 0);
    m.input_norm = input_norm;

    let expected = tensors(&m);
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(FormatError::Malformed(format!("{count} tensors, expected {}", expected.len())));
    }
    let mut read = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let mut name = vec![0u8; len];
        r.r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| FormatError::Malformed("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.r.read_exact(&mut raw)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        read.push(Tensor { name, shape, data });
    }
    let find = |name: &str, shape: &[usize]| -> Result<Vec<T>, FormatError> {
        let t = read
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| FormatError::Malformed(format!("missing tensor `{name}`")))?;
        if t.shape != shape {
            return Err(FormatError::Malformed(format!("tensor `{name}` has shape {:?}, expected {shape:?}", t.shape)));
        }
        Ok(t.data.iter().map(|&v| T::of(v as f64)).collect())
    };
    for p in m.params_mut() {
        p.value = find(&p.name, &p.shape)?;
    }
    for bn in m.batch_norms_mut() {
        load_stats(bn, &find)?;
    }
    Ok(m)
}

fn load_stats<T: Scalar>(
    bn: &mut BatchNorm<T>,
    find: &dyn Fn(&str, &[usize]) -> Result<Vec<T>, FormatError>,
) -> Result<(), FormatError> {
    let c = bn.features();
    let name = bn.name().to_string();
    bn.running_mean = find(&format!("{name}.running_mean"), &[c])?;
    bn.running_var = find(&format!("{name}.running_var"), &[c])?;
    bn.count = find(&format!("{name}.count"), &[1])?[0].f64() as u64;
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(m: &ModelParams<T>, path: &Path) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ModelParams<T>, FormatError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
