use rand::Rng;
use rand_distr::StandardNormal;

use super::tensor::Tensor;

/// Square convolution with zero padding `kernel / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Output positions `o` with `o * stride + k - pad` inside `0..len`.
fn valid_range(len: usize, out_len: usize, k: usize, pad: usize, stride: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // o * stride + k - pad <= len - 1
    let hi = if len + pad > k {
        ((len - 1 + pad - k) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    /// Zero-mean normal weights with the given gain over fan-in; zero bias.
    pub fn init<R: Rng>(&mut self, gain: f64, rng: &mut R) {
        let fan_in = (self.in_channels * self.kernel * self.kernel) as f64;
        let std = (gain / fan_in).sqrt();
        for w in &mut self.weight {
            let n: f64 = rng.sample(StandardNormal);
            *w = std * n;
        }
        self.bias.fill(0.0);
    }

    fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn output_dims(&self, height: usize, width: usize) -> (usize, usize) {
        let p = self.pad();
        (
            (height + 2 * p - self.kernel) / self.stride + 1,
            (width + 2 * p - self.kernel) / self.stride + 1,
        )
    }

    fn w_index(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> usize {
        ((oc * self.in_channels + ic) * self.kernel + ky) * self.kernel + kx
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(x.channels, self.in_channels);
        let (oh, ow) = self.output_dims(x.height, x.width);
        let (s, p, k) = (self.stride, self.pad(), self.kernel);
        let mut out = Tensor::zeros(self.out_channels, oh, ow);
        for oc in 0..self.out_channels {
            let plane = out.plane_mut(oc);
            plane.fill(self.bias[oc]);
            for ic in 0..self.in_channels {
                let inp = x.plane(ic);
                for ky in 0..k {
                    let (oy0, oy1) = valid_range(x.height, oh, ky, p, s);
                    for kx in 0..k {
                        let wv = self.weight[self.w_index(oc, ic, ky, kx)];
                        let (ox0, ox1) = valid_range(x.width, ow, kx, p, s);
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - p;
                            let in_row = &inp[iy * x.width..(iy + 1) * x.width];
                            let out_row = &mut plane[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let shift = kx as isize - p as isize;
                                let src = &in_row[(ox0 as isize + shift) as usize..(ox1 as isize + shift) as usize];
                                for (o, &v) in out_row[ox0..ox1].iter_mut().zip(src) {
                                    *o += wv * v;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    out_row[ox] += wv * in_row[ox * s + kx - p];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients and, if requested, returns the input gradient.
    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
        grad_w: &mut [f64],
        grad_b: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Tensor> {
        let (oh, ow) = (grad_out.height, grad_out.width);
        let (s, p, k) = (self.stride, self.pad(), self.kernel);
        let mut grad_in = want_input_grad.then(|| Tensor::zeros(x.channels, x.height, x.width));
        for (oc, gb) in grad_b.iter_mut().enumerate().take(self.out_channels) {
            let g = grad_out.plane(oc);
            *gb += g.iter().sum::<f64>();
            for ic in 0..self.in_channels {
                let inp = x.plane(ic);
                for ky in 0..k {
                    let (oy0, oy1) = valid_range(x.height, oh, ky, p, s);
                    for kx in 0..k {
                        let wi = self.w_index(oc, ic, ky, kx);
                        let wv = self.weight[wi];
                        let (ox0, ox1) = valid_range(x.width, ow, kx, p, s);
                        let mut acc = 0.0;
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - p;
                            let in_row = &inp[iy * x.width..(iy + 1) * x.width];
                            let g_row = &g[oy * ow..(oy + 1) * ow];
                            for ox in ox0..ox1 {
                                acc += g_row[ox] * in_row[ox * s + kx - p];
                            }
                            if let Some(gi) = grad_in.as_mut() {
                                let gi_row = &mut gi.plane_mut(ic)[iy * x.width..(iy + 1) * x.width];
                                for ox in ox0..ox1 {
                                    gi_row[ox * s + kx - p] += wv * g_row[ox];
                                }
                            }
                        }
                        grad_w[wi] += acc;
                    }
                }
            }
        }
        grad_in
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_ranges() {
        // stride 2, pad 1, len 8 -> out 4; kx = 0 needs ox >= 1
        assert_eq!(valid_range(8, 4, 0, 1, 2), (1, 4));
        assert_eq!(valid_range(8, 4, 2, 1, 2), (0, 4));
        assert_eq!(valid_range(5, 5, 2, 1, 1), (0, 4));
        assert_eq!(valid_range(5, 5, 0, 0, 1), (0, 5));
    }

    #[test]
    fn identity_kernel_copies_input() {
        let mut conv = Conv2d::new(1, 1, 3, 1);
        conv.weight[4] = 1.0;
        let x = Tensor {
            channels: 1,
            height: 2,
            width: 3,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        assert_eq!(conv.forward(&x).data, x.data);
    }

    #[test]
    fn strided_output_shape() {
        let conv = Conv2d::new(3, 4, 3, 2);
        assert_eq!(conv.output_dims(16, 32), (8, 16));
        let conv = Conv2d::new(3, 4, 1, 1);
        assert_eq!(conv.output_dims(5, 7), (5, 7));
    }
}
