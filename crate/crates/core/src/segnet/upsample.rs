//! Fixed bilinear x4 upsampling on pixel-major maps and its exact transpose.
//!
//! Output pixel `(y, x)` samples the input at `(y / 4, x / 4)`, so every
//! fourth output pixel lands exactly on an input pixel. Beyond the last input
//! row/column the edge value is replicated.

pub const FACTOR: usize = 4;

#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(out_len: usize, in_len: usize) -> Vec<Tap> {
    (0..out_len)
        .map(|o| {
            let lo = (o / FACTOR).min(in_len - 1);
            Tap {
                lo,
                hi: (lo + 1).min(in_len - 1),
                frac: (o % FACTOR) as f64 / FACTOR as f64,
            }
        })
        .collect()
}

/// Upsamples `h x w x c` to `4h x 4w x c`.
pub fn upsample(data: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let (oh, ow) = (h * FACTOR, w * FACTOR);
    let ty = taps(oh, h);
    let tx = taps(ow, w);
    let mut out = vec![0.0; oh * ow * c];
    for (y, a) in ty.iter().enumerate() {
        for (x, b) in tx.iter().enumerate() {
            let p00 = &data[(a.lo * w + b.lo) * c..][..c];
            let p01 = &data[(a.lo * w + b.hi) * c..][..c];
            let p10 = &data[(a.hi * w + b.lo) * c..][..c];
            let p11 = &data[(a.hi * w + b.hi) * c..][..c];
            let dst = &mut out[(y * ow + x) * c..][..c];
            for k in 0..c {
                let top = (1.0 - b.frac) * p00[k] + b.frac * p01[k];
                let bot = (1.0 - b.frac) * p10[k] + b.frac * p11[k];
                dst[k] = (1.0 - a.frac) * top + a.frac * bot;
            }
        }
    }
    out
}

/// Adjoint of [`upsample`]: maps a `4h x 4w x c` gradient back to `h x w x c`.
pub fn upsample_transpose(grad: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let (oh, ow) = (h * FACTOR, w * FACTOR);
    let ty = taps(oh, h);
    let tx = taps(ow, w);
    let mut out = vec![0.0; h * w * c];
    for (y, a) in ty.iter().enumerate() {
        for (x, b) in tx.iter().enumerate() {
            let g = &grad[(y * ow + x) * c..][..c];
            let weights = [
                (a.lo, b.lo, (1.0 - a.frac) * (1.0 - b.frac)),
                (a.lo, b.hi, (1.0 - a.frac) * b.frac),
                (a.hi, b.lo, a.frac * (1.0 - b.frac)),
                (a.hi, b.hi, a.frac * b.frac),
            ];
            for (r, col, wgt) in weights {
                if wgt == 0.0 {
                    continue;
                }
                let dst = &mut out[(r * w + col) * c..][..c];
                for k in 0..c {
                    dst[k] += wgt * g[k];
                }
            }
        }
    }
    out
}
