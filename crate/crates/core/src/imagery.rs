//! Image, label, logit and score maps plus their on-disk formats.
//!
//! Images are binary PPM (P6), label maps and heatmaps binary PGM (P5), and
//! logit/score dumps use the little-endian "OODL" container:
//! `b"OODL"`, `u32` version (1), `u32` H, `u32` W, `u32` C, then `H*W*C`
//! `f32` values, pixel-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Label code for pixels belonging to an out-of-distribution object.
pub const OOD_ID: u8 = 254;
/// Label code for pixels excluded from every loss and metric.
pub const IGNORE_ID: u8 = 255;
/// Largest number of regular classes a label map can encode.
pub const MAX_CLASSES: usize = 254;

const DUMP_MAGIC: &[u8; 4] = b"OODL";
const DUMP_VERSION: u32 = 1;
const DUMP_HEADER_LEN: usize = 20;

/// RGB image with values in `[0, 1]`, row-major and channel-interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::arg(format!(
                "image data length {} does not match {height}x{width}x3",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("image value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    /// Builds an image from 8-bit RGB bytes, mapping `b -> b / 255`.
    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width * 3 {
            return Err(Error::arg("byte length does not match image shape"));
        }
        Ok(Self {
            height,
            width,
            data: bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
    }

    /// Quantizes to 8-bit RGB with round-half-up.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Stores a pixel, clamping each channel into `[0, 1]`.
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let i = (row * self.width + col) * 3;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[i + c] = v.clamp(0.0, 1.0);
        }
    }
}

/// Per-pixel class codes; see [`OOD_ID`] and [`IGNORE_ID`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::arg(format!(
                "label data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, code: u8) -> Self {
        Self {
            height,
            width,
            data: vec![code; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, code: u8) {
        self.data[row * self.width + col] = code;
    }

    /// Checks every code is a class below `classes` or one of the sentinels.
    pub fn validate(&self, classes: usize) -> Result<()> {
        if classes > MAX_CLASSES {
            return Err(Error::arg(format!("at most {MAX_CLASSES} classes")));
        }
        match self
            .data
            .iter()
            .find(|&&c| usize::from(c) >= classes && c != OOD_ID && c != IGNORE_ID)
        {
            Some(&code) => Err(Error::InvalidClass { code, classes }),
            None => Ok(()),
        }
    }

    pub fn count(&self, code: u8) -> usize {
        self.data.iter().filter(|&&c| c == code).count()
    }

    pub fn has_ood(&self) -> bool {
        self.data.contains(&OOD_ID)
    }
}

/// Checks that an image and label map describe the same pixel grid.
pub fn check_paired(image: &Image, labels: &LabelMap) -> Result<()> {
    if image.height() != labels.height() || image.width() != labels.width() {
        return Err(Error::arg(format!(
            "image {}x{} and label map {}x{} differ in shape",
            image.height(),
            image.width(),
            labels.height(),
            labels.width()
        )));
    }
    Ok(())
}

/// An image with its per-pixel labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SegSample {
    pub image: Image,
    pub labels: LabelMap,
}

impl SegSample {
    pub fn new(image: Image, labels: LabelMap) -> Result<Self> {
        check_paired(&image, &labels)?;
        Ok(Self { image, labels })
    }
}

/// Per-pixel class logits, pixel-major then class.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMap {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f64>,
}

impl LogitMap {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Data(format!(
                "logit maps need at least 2 classes, got {classes}"
            )));
        }
        if data.len() != height * width * classes {
            return Err(Error::arg(format!(
                "logit data length {} does not match {height}x{width}x{classes}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite logit {v}")));
        }
        Ok(Self {
            height,
            width,
            classes,
            data,
        })
    }

    /// Single-pixel map, handy for tests and examples.
    pub fn from_pixel(logits: &[f64]) -> Result<Self> {
        Self::new(1, 1, logits.len(), logits.to_vec())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Logits of pixel `i` (row-major index).
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn iter_pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.classes)
    }

    /// Argmax class per pixel, ties to the lowest class index.
    pub fn predict(&self) -> LabelMap {
        let data = self
            .iter_pixels()
            .map(|px| crate::numeric::argmax(px) as u8)
            .collect();
        LabelMap {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn same_grid(&self, labels: &LabelMap) -> bool {
        self.height == labels.height() && self.width == labels.width()
    }
}

/// Per-pixel anomaly scores; higher means more anomalous.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::arg("score data length does not match shape"));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite score {v}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

// ---------------------------------------------------------------------------
// Netpbm

struct Netpbm<'a> {
    width: usize,
    height: usize,
    maxval: usize,
    payload: &'a [u8],
}

fn parse_netpbm<'a>(bytes: &'a [u8], magic: &[u8; 2]) -> Result<Netpbm<'a>> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::Format(format!(
            "expected magic {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Format("header ends early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("expected a decimal header field".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("header field out of range".into()))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing whitespace after maxval".into())),
    }
    let [width, height, maxval] = fields;
    Ok(Netpbm {
        width,
        height,
        maxval,
        payload: &bytes[pos..],
    })
}

fn take_payload<'a>(pbm: &Netpbm<'a>, channels: usize) -> Result<&'a [u8]> {
    if pbm.maxval != 255 {
        return Err(Error::Format(format!(
            "maxval {} unsupported, need 255",
            pbm.maxval
        )));
    }
    let expected = pbm.width * pbm.height * channels;
    if pbm.payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: pbm.payload.len(),
        });
    }
    Ok(&pbm.payload[..expected])
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let pbm = parse_netpbm(bytes, b"P6")?;
    let payload = take_payload(&pbm, 3)?;
    Image::from_bytes(pbm.height, pbm.width, payload)
}

pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.to_bytes());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<LabelMap> {
    let pbm = parse_netpbm(bytes, b"P5")?;
    let payload = take_payload(&pbm, 1)?;
    LabelMap::new(pbm.height, pbm.width, payload.to_vec())
}

pub fn encode_pgm(height: usize, width: usize, bytes: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(bytes);
    out
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_ppm(&read_file(path.as_ref())?)
}

pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_ppm(image))
}

pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    decode_pgm(&read_file(path.as_ref())?)
}

pub fn write_label_map(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(
        path.as_ref(),
        &encode_pgm(labels.height, labels.width, &labels.data),
    )
}

/// Affine rescale to bytes: min maps to 0, max to 255, round-half-up.
/// A constant map becomes uniform 128.
pub fn heatmap_bytes(scores: &ScoreMap) -> Vec<u8> {
    let lo = crate::numeric::min(&scores.data);
    let hi = crate::numeric::max(&scores.data);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return vec![128; scores.data.len()];
    }
    let range = hi - lo;
    scores
        .data
        .iter()
        .map(|&s| ((s - lo) / range * 255.0 + 0.5).floor().min(255.0) as u8)
        .collect()
}

pub fn write_heatmap(scores: &ScoreMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(
        path.as_ref(),
        &encode_pgm(scores.height, scores.width, &heatmap_bytes(scores)),
    )
}

// ---------------------------------------------------------------------------
// OODL dumps

/// Raw contents of an OODL container before any channel-count policy.
#[derive(Clone, Debug, PartialEq)]
pub struct Dump {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

pub fn encode_dump(height: usize, width: usize, channels: usize, data: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(DUMP_HEADER_LEN + data.len() * 4);
    out.extend_from_slice(DUMP_MAGIC);
    for v in [DUMP_VERSION, height as u32, width as u32, channels as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_dump(bytes: &[u8]) -> Result<Dump> {
    if bytes.len() < DUMP_HEADER_LEN {
        return Err(Error::Format("dump shorter than its header".into()));
    }
    if &bytes[..4] != DUMP_MAGIC {
        return Err(Error::Format("bad dump magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != DUMP_VERSION {
        return Err(Error::Format(format!("unsupported dump version {version}")));
    }
    let (height, width, channels) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let expected = height * width * channels * 4;
    let payload = &bytes[DUMP_HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let mut data = Vec::with_capacity(height * width * channels);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite value {v} in dump")));
        }
        data.push(f64::from(v));
    }
    Ok(Dump {
        height,
        width,
        channels,
        data,
    })
}

pub fn read_logit_dump(path: impl AsRef<Path>) -> Result<LogitMap> {
    let dump = decode_dump(&read_file(path.as_ref())?)?;
    LogitMap::new(dump.height, dump.width, dump.channels, dump.data)
}

pub fn write_logit_dump(logits: &LogitMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(
        path.as_ref(),
        &encode_dump(logits.height, logits.width, logits.classes, &logits.data),
    )
}

/// Scores travel in the OODL container with a single channel.
pub fn write_score_dump(scores: &ScoreMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(
        path.as_ref(),
        &encode_dump(scores.height, scores.width, 1, &scores.data),
    )
}

pub fn read_score_dump(path: impl AsRef<Path>) -> Result<ScoreMap> {
    let dump = decode_dump(&read_file(path.as_ref())?)?;
    if dump.channels != 1 {
        return Err(Error::Data(format!(
            "score dumps carry 1 channel, found {}",
            dump.channels
        )));
    }
    ScoreMap::new(dump.height, dump.width, dump.data)
}
