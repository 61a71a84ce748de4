use rand::SeedableRng;

use super::conv::Conv2d;
use super::tensor::Tensor;
use super::upsample::{upsample, upsample_transpose, FACTOR};
use crate::error::{Error, Result};
use crate::imagery::{Image, LabelMap, LogitMap};
use crate::synth::SceneRng;

/// Architecture tag stored in checkpoints.
pub const ARCHITECTURE: &str = "segnet-v1";
/// Number of parameter tensors: three backbone convs and the head, weight + bias each.
pub const NUM_TENSORS: usize = 8;
/// Tensors `0..BACKBONE_TENSORS` belong to the backbone.
pub const BACKBONE_TENSORS: usize = 6;

/// Three-conv backbone (stride 2, 2, 1) with a 1x1 classification head and a
/// fixed bilinear x4 upsampler.
#[derive(Clone, Debug, PartialEq)]
pub struct SegNet {
    pub(crate) convs: [Conv2d; 3],
    pub(crate) head: Conv2d,
    version: u64,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    input: Tensor,
    acts: [Tensor; 3],
    version: u64,
}

#[derive(Clone, Debug)]
pub struct Forward {
    pub logits_pre: LogitMap,
    pub logits_post: LogitMap,
    pub cache: ForwardCache,
}

/// One gradient buffer per parameter tensor, same order as [`SegNet::tensors`].
pub type Gradients = Vec<Vec<f64>>;

impl SegNet {
    pub fn new(classes: usize, seed: u64) -> Self {
        let mut net = Self::zeroed(classes);
        let mut rng = SceneRng::seed_from_u64(seed);
        for conv in &mut net.convs {
            conv.init(2.0, &mut rng);
        }
        net.head.init(1.0, &mut rng);
        net
    }

    /// All weights and biases zero.
    pub fn zeroed(classes: usize) -> Self {
        Self {
            convs: [
                Conv2d::new(3, 16, 3, 2),
                Conv2d::new(16, 32, 3, 2),
                Conv2d::new(32, 32, 3, 1),
            ],
            head: Conv2d::new(32, classes, 1, 1),
            version: 0,
        }
    }

    pub fn classes(&self) -> usize {
        self.head.out_channels
    }

    pub fn feature_channels(&self) -> usize {
        self.head.in_channels
    }

    pub fn tensors(&self) -> [&[f64]; NUM_TENSORS] {
        let [c1, c2, c3] = &self.convs;
        [
            &c1.weight, &c1.bias, &c2.weight, &c2.bias, &c3.weight, &c3.bias, &self.head.weight,
            &self.head.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; NUM_TENSORS] {
        self.version += 1;
        let [c1, c2, c3] = &mut self.convs;
        [
            &mut c1.weight,
            &mut c1.bias,
            &mut c2.weight,
            &mut c2.bias,
            &mut c3.weight,
            &mut c3.bias,
            &mut self.head.weight,
            &mut self.head.bias,
        ]
    }

    pub fn head_tensors_mut(&mut self) -> [&mut Vec<f64>; 2] {
        self.version += 1;
        [&mut self.head.weight, &mut self.head.bias]
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.tensors().iter().map(|t| vec![0.0; t.len()]).collect()
    }

    fn check_dims(image: &Image) -> Result<()> {
        let (h, w) = (image.height(), image.width());
        if h == 0 || w == 0 || h % FACTOR != 0 || w % FACTOR != 0 {
            return Err(Error::arg(format!(
                "image {h}x{w} must have nonzero dimensions divisible by {FACTOR}"
            )));
        }
        Ok(())
    }

    /// Backbone activations after the last ReLU (`32 x H/4 x W/4`).
    pub fn features(&self, image: &Image) -> Result<Tensor> {
        Self::check_dims(image)?;
        let mut x = Tensor::from_image(image);
        for conv in &self.convs {
            x = conv.forward(&x);
            x.relu_in_place();
        }
        Ok(x)
    }

    /// Pre-upsampling logits from backbone features.
    pub fn head_logits(&self, features: &Tensor) -> LogitMap {
        let z = self.head.forward(features);
        let (h, w, c) = (z.height, z.width, z.channels);
        let mut data = vec![0.0; h * w * c];
        for k in 0..c {
            for (i, &v) in z.plane(k).iter().enumerate() {
                data[i * c + k] = v;
            }
        }
        LogitMap::new(h, w, c, data).expect("finite parameters give finite logits")
    }

    pub fn upsample_logits(pre: &LogitMap) -> LogitMap {
        let (h, w, c) = (pre.height(), pre.width(), pre.classes());
        let data = upsample(pre.data(), h, w, c);
        LogitMap::new(h * FACTOR, w * FACTOR, c, data).expect("interpolation of finite values")
    }

    pub fn forward(&self, image: &Image) -> Result<Forward> {
        Self::check_dims(image)?;
        let input = Tensor::from_image(image);
        let mut acts: Vec<Tensor> = Vec::with_capacity(3);
        for conv in &self.convs {
            let mut a = conv.forward(acts.last().unwrap_or(&input));
            a.relu_in_place();
            acts.push(a);
        }
        let acts: [Tensor; 3] = acts.try_into().expect("three layers");
        let logits_pre = self.head_logits(&acts[2]);
        let logits_post = Self::upsample_logits(&logits_pre);
        Ok(Forward {
            logits_pre,
            logits_post,
            cache: ForwardCache {
                input,
                acts,
                version: self.version,
            },
        })
    }

    /// Predicted label map at full resolution.
    pub fn predict(&self, image: &Image) -> Result<LabelMap> {
        Ok(self.forward(image)?.logits_post.predict())
    }

    /// Head gradients from a pre-upsampling logit gradient (pixel-major),
    /// accumulated into `grads[6..8]`; returns the feature gradient.
    pub fn head_backward(
        &self,
        features: &Tensor,
        grad_pre: &[f64],
        grads: &mut Gradients,
        want_feature_grad: bool,
    ) -> Option<Tensor> {
        let c = self.classes();
        let (h, w) = (features.height, features.width);
        let mut g = Tensor::zeros(c, h, w);
        for i in 0..h * w {
            for k in 0..c {
                g.data[k * h * w + i] = grad_pre[i * c + k];
            }
        }
        let (gw, rest) = grads[6..].split_at_mut(1);
        self.head
            .backward(features, &g, &mut gw[0], &mut rest[0], want_feature_grad)
    }

    /// Reverse pass for gradients on pre- and/or post-upsampling logits.
    /// With `freeze_backbone` only the head tensors receive gradient and the
    /// backbone buffers stay exactly zero.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_pre: Option<&[f64]>,
        grad_post: Option<&[f64]>,
        freeze_backbone: bool,
    ) -> Result<Gradients> {
        if cache.version != self.version {
            return Err(Error::State(
                "forward cache predates the latest parameter update".into(),
            ));
        }
        let feats = &cache.acts[2];
        let (h, w, c) = (feats.height, feats.width, self.classes());
        let mut total = vec![0.0; h * w * c];
        if let Some(g) = grad_pre {
            if g.len() != total.len() {
                return Err(Error::arg("pre-upsampling gradient has wrong length"));
            }
            total.iter_mut().zip(g).for_each(|(t, v)| *t += v);
        }
        if let Some(g) = grad_post {
            if g.len() != total.len() * FACTOR * FACTOR {
                return Err(Error::arg("post-upsampling gradient has wrong length"));
            }
            let back = upsample_transpose(g, h, w, c);
            total.iter_mut().zip(&back).for_each(|(t, v)| *t += v);
        }
        let mut grads = self.zero_gradients();
        let mut g = match self.head_backward(feats, &total, &mut grads, !freeze_backbone) {
            Some(g) => g,
            None => return Ok(grads),
        };
        for layer in (0..3).rev() {
            // ReLU gate
            for (gv, &a) in g.data.iter_mut().zip(&cache.acts[layer].data) {
                if a <= 0.0 {
                    *gv = 0.0;
                }
            }
            let input = if layer == 0 {
                &cache.input
            } else {
                &cache.acts[layer - 1]
            };
            let (gw, gb) = grads[2 * layer..2 * layer + 2].split_at_mut(1);
            match self.convs[layer].backward(input, &g, &mut gw[0], &mut gb[0], layer > 0) {
                Some(next) => g = next,
                None => break,
            }
        }
        Ok(grads)
    }

    /// Raw little-endian bytes of the backbone parameters.
    pub fn backbone_bytes(&self) -> Vec<u8> {
        self.tensors()[..BACKBONE_TENSORS]
            .iter()
            .flat_map(|t| t.iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }

    pub fn backbone_hash(&self) -> String {
        crate::sha256_hex(&self.backbone_bytes())
    }

    pub fn parameter_hash(&self) -> String {
        let bytes: Vec<u8> = self
            .tensors()
            .iter()
            .flat_map(|t| t.iter().flat_map(|v| v.to_le_bytes()))
            .collect();
        crate::sha256_hex(&bytes)
    }
}

/// Nearest-neighbour label downsampling by 4, sampling offset `(1, 1)` of
/// every 4x4 block.
pub fn downsample_labels(labels: &LabelMap) -> Result<LabelMap> {
    let (h, w) = (labels.height(), labels.width());
    if h % FACTOR != 0 || w % FACTOR != 0 {
        return Err(Error::arg(format!(
            "label map {h}x{w} not divisible by {FACTOR}"
        )));
    }
    let (oh, ow) = (h / FACTOR, w / FACTOR);
    let data = (0..oh * ow)
        .map(|i| labels.get((i / ow) * FACTOR + 1, (i % ow) * FACTOR + 1))
        .collect();
    LabelMap::new(oh, ow, data)
}
