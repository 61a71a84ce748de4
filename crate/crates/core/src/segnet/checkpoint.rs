//! Versioned binary checkpoints.
//!
//! Layout (little-endian): `b"OODC"`, `u32` version, `u32` tag length + tag
//! bytes, `u32` classes, `u32` tensor count, then per tensor `u64` length and
//! `f64` values. An optional optimizer section follows: `u8` flag, `u64` step,
//! hyperparameters, and the first/second moment tensors.

use std::fs;
use std::path::Path;

use super::net::{SegNet, ARCHITECTURE, NUM_TENSORS};
use super::optim::AdamW;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"OODC";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: SegNet,
    pub optimizer: Option<AdamW>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor(&mut self, t: &[f64]) {
        self.u64(t.len() as u64);
        t.iter().for_each(|&v| self.f64(v));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(
            Error::Truncated {
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            },
        )?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        let v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Data("non-finite value in checkpoint".into()));
        }
        Ok(v)
    }
    fn tensor(&mut self, expected: usize) -> Result<Vec<f64>> {
        let len = self.u64()? as usize;
        if len != expected {
            return Err(Error::Format(format!(
                "tensor length {len}, architecture expects {expected}"
            )));
        }
        (0..len).map(|_| self.f64()).collect()
    }
}

pub fn encode(net: &SegNet, optimizer: Option<&AdamW>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(ARCHITECTURE.len() as u32);
    w.0.extend_from_slice(ARCHITECTURE.as_bytes());
    w.u32(net.classes() as u32);
    w.u32(NUM_TENSORS as u32);
    for t in net.tensors() {
        w.tensor(t);
    }
    match optimizer {
        None => w.u8(0),
        Some(opt) => {
            w.u8(1);
            w.u64(opt.step);
            for v in [opt.base_lr, opt.beta1, opt.beta2, opt.eps, opt.weight_decay] {
                w.f64(v);
            }
            w.u64(opt.total_steps);
            w.f64(opt.poly_power);
            w.u32(opt.m.len() as u32);
            for (m, v) in opt.m.iter().zip(&opt.v) {
                w.tensor(m);
                w.tensor(v);
            }
        }
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::Format("not a checkpoint".into()))? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let tag_len = r.u32()? as usize;
    let tag = r.take(tag_len)?;
    if tag != ARCHITECTURE.as_bytes() {
        return Err(Error::Format(format!(
            "architecture {:?} is not {ARCHITECTURE}",
            String::from_utf8_lossy(tag)
        )));
    }
    let classes = r.u32()? as usize;
    if !(2..=crate::imagery::MAX_CLASSES).contains(&classes) {
        return Err(Error::Format(format!("invalid class count {classes}")));
    }
    if r.u32()? as usize != NUM_TENSORS {
        return Err(Error::Format("unexpected tensor count".into()));
    }
    let mut net = SegNet::zeroed(classes);
    let sizes: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
    for (t, &n) in net.tensors_mut().into_iter().zip(&sizes) {
        *t = r.tensor(n)?;
    }
    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let [base_lr, beta1, beta2, eps, weight_decay] =
                [r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?];
            let total_steps = r.u64()?;
            let poly_power = r.f64()?;
            let n = r.u32()? as usize;
            if n > NUM_TENSORS {
                return Err(Error::Format("too many optimizer tensors".into()));
            }
            // optimizer tensors cover the trailing n parameter tensors
            let tail = &sizes[NUM_TENSORS - n..];
            let mut m = Vec::with_capacity(n);
            let mut v = Vec::with_capacity(n);
            for &len in tail {
                m.push(r.tensor(len)?);
                v.push(r.tensor(len)?);
            }
            Some(AdamW {
                base_lr,
                beta1,
                beta2,
                eps,
                weight_decay,
                total_steps,
                poly_power,
                step,
                m,
                v,
            })
        }
        f => return Err(Error::Format(format!("bad optimizer flag {f}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint { net, optimizer })
}

pub fn save(path: impl AsRef<Path>, net: &SegNet, optimizer: Option<&AdamW>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(net, optimizer)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_and_without_optimizer() {
        let net = SegNet::new(6, 42);
        let bytes = encode(&net, None);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.net.tensors(), net.tensors());
        assert_eq!(encode(&back.net, None), bytes);

        let mut opt = AdamW::new(1e-3, 0.01, 10);
        let mut copy = net.clone();
        let grads = [vec![0.1; copy.tensors()[6].len()], vec![0.2; copy.classes()]];
        let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        opt.update(&mut copy.head_tensors_mut(), &refs);
        let bytes = encode(&copy, Some(&opt));
        let back = decode(&bytes).unwrap();
        assert_eq!(back.optimizer.as_ref(), Some(&opt));
        assert_eq!(encode(&back.net, back.optimizer.as_ref()), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&SegNet::new(3, 1), None);
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
