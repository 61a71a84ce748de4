/// Channel-major feature map (`C x H x W`).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// From an interleaved RGB image.
    pub fn from_image(image: &crate::imagery::Image) -> Self {
        let (h, w) = (image.height(), image.width());
        let mut t = Self::zeros(3, h, w);
        for (i, px) in image.data().chunks_exact(3).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                t.data[c * h * w + i] = v;
            }
        }
        t
    }

    pub fn relu_in_place(&mut self) {
        for v in &mut self.data {
            *v = v.max(0.0);
        }
    }
}
