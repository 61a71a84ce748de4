//! Style alignment and AnomalyMix: recolor an outlier object with the
//! target scene's channel statistics, then hard-paste it with OoD labels.

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::imagery::{Image, SegSample, OOD_ID};
use crate::numeric::KahanSum;
use crate::synth::{generate_ood_object_with, Family, ObjectExtent, OodObject, SceneRng, StyleDomain};

/// Floor applied to every channel standard deviation.
pub const STD_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct MixConfig {
    pub mix_probability: f64,
    pub style_align: bool,
    pub max_objects_per_scene: usize,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            mix_probability: 0.1,
            style_align: true,
            max_objects_per_scene: 1,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mix_probability) {
            return Err(Error::arg(format!(
                "mix_probability {} outside [0, 1]",
                self.mix_probability
            )));
        }
        if self.max_objects_per_scene == 0 {
            return Err(Error::arg("max_objects_per_scene must be at least 1"));
        }
        Ok(())
    }
}

/// Per-channel mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

/// Channel moments over the whole image or over the pixels selected by `region`.
pub fn extract_style(image: &Image, region: Option<&[bool]>) -> Result<ChannelStats> {
    let n_px = image.height() * image.width();
    if let Some(mask) = region {
        if mask.len() != n_px {
            return Err(Error::arg("region mask does not match image size"));
        }
    }
    let selected = |i: usize| region.is_none_or(|m| m[i]);
    let count = (0..n_px).filter(|&i| selected(i)).count();
    if count == 0 {
        return Err(Error::arg("style region is empty"));
    }
    let data = image.data();
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    for c in 0..3 {
        let sum: KahanSum = (0..n_px).filter(|&i| selected(i)).map(|i| data[i * 3 + c]).collect();
        mean[c] = sum.value() / count as f64;
        let sq: KahanSum = (0..n_px)
            .filter(|&i| selected(i))
            .map(|i| (data[i * 3 + c] - mean[c]).powi(2))
            .collect();
        std[c] = (sq.value() / count as f64).sqrt().max(STD_EPS);
    }
    Ok(ChannelStats { mean, std })
}

/// Recolors an object so that its appearance matches a target style.
pub trait StyleAligner {
    fn align(&self, obj: &OodObject, target: &ChannelStats) -> OodObject;
}

/// Per-channel affine moment matching over the object mask.
#[derive(Clone, Copy, Debug, Default)]
pub struct MomentMatching;

impl StyleAligner for MomentMatching {
    fn align(&self, obj: &OodObject, target: &ChannelStats) -> OodObject {
        let src = extract_style(&obj.texture, Some(&obj.mask))
            .expect("objects always have a nonempty mask");
        let mut out = obj.clone();
        for (r, c) in obj.masked_pixels() {
            let px = obj.texture.pixel(r, c);
            let mut rgb = [0.0; 3];
            for ch in 0..3 {
                rgb[ch] = (px[ch] - src.mean[ch]) / src.std[ch] * target.std[ch] + target.mean[ch];
            }
            out.texture.set_pixel(r, c, rgb);
        }
        out
    }
}

pub fn style_align(obj: &OodObject, target: &ChannelStats) -> OodObject {
    MomentMatching.align(obj, target)
}

/// Hard-mask copy-paste with the object's top-left corner at `position`.
/// Masked pixels take the object texture and the OoD label; everything else
/// is left untouched.
pub fn paste(sample: &SegSample, obj: &OodObject, position: (usize, usize)) -> Result<SegSample> {
    let (row, col) = position;
    let (h, w) = (sample.image.height(), sample.image.width());
    if row + obj.height() > h || col + obj.width() > w {
        return Err(Error::arg(format!(
            "object {}x{} at ({row}, {col}) exceeds {h}x{w} image",
            obj.height(),
            obj.width()
        )));
    }
    let mut out = sample.clone();
    for (r, c) in obj.masked_pixels() {
        out.image.set_pixel(row + r, col + c, obj.texture.pixel(r, c));
        out.labels.set(row + r, col + c, OOD_ID);
    }
    Ok(out)
}

/// Supplies outlier objects to [`anomaly_mix`].
pub trait ObjectSource {
    fn draw(&self, rng: &mut SceneRng) -> OodObject;
}

/// A fixed pool of proxy-family objects, optionally rendered in a style domain.
#[derive(Clone, Debug)]
pub struct ProxyPool {
    objects: Vec<OodObject>,
}

impl ProxyPool {
    pub fn generate(size: usize, extent: ObjectExtent, style: Option<&StyleDomain>, seed: u64) -> Self {
        let mut rng = SceneRng::seed_from_u64(seed);
        let objects = (0..size.max(1))
            .map(|i| {
                let mut obj =
                    generate_ood_object_with(Family::Proxy, extent, crate::numeric::mix_seed(seed, i as u64));
                if let Some(style) = style {
                    let mask = obj.mask.clone();
                    style.apply(&mut obj.texture, Some(&mask), &mut rng);
                }
                obj
            })
            .collect();
        Self { objects }
    }

    pub fn objects(&self) -> &[OodObject] {
        &self.objects
    }
}

impl ObjectSource for ProxyPool {
    fn draw(&self, rng: &mut SceneRng) -> OodObject {
        self.objects[rng.random_range(0..self.objects.len())].clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixOutput {
    pub sample: SegSample,
    /// Number of objects pasted; zero when the mixing draw did not fire.
    pub pasted: usize,
}

impl MixOutput {
    pub fn fired(&self) -> bool {
        self.pasted > 0
    }
}

/// With probability `cfg.mix_probability`, pastes up to
/// `cfg.max_objects_per_scene` objects at uniformly random positions,
/// style-aligning each to the whole scene first when `cfg.style_align` is set.
pub fn anomaly_mix(
    sample: &SegSample,
    cfg: &MixConfig,
    source: &dyn ObjectSource,
    seed: u64,
) -> MixOutput {
    anomaly_mix_with(sample, cfg, source, &MomentMatching, seed)
}

pub fn anomaly_mix_with(
    sample: &SegSample,
    cfg: &MixConfig,
    source: &dyn ObjectSource,
    aligner: &dyn StyleAligner,
    seed: u64,
) -> MixOutput {
    let mut rng = SceneRng::seed_from_u64(seed);
    let u: f64 = rng.random();
    if u >= cfg.mix_probability {
        return MixOutput {
            sample: sample.clone(),
            pasted: 0,
        };
    }
    let (h, w) = (sample.image.height(), sample.image.width());
    let scene_stats = if cfg.style_align {
        extract_style(&sample.image, None).ok()
    } else {
        None
    };
    let count = rng.random_range(1..=cfg.max_objects_per_scene.max(1));
    let mut out = sample.clone();
    let mut pasted = 0;
    for _ in 0..count {
        let mut obj = source.draw(&mut rng);
        if obj.height() > h || obj.width() > w {
            continue;
        }
        if let Some(stats) = &scene_stats {
            obj = aligner.align(&obj, stats);
        }
        let row = rng.random_range(0..=h - obj.height());
        let col = rng.random_range(0..=w - obj.width());
        out = paste(&out, &obj, (row, col)).expect("position drawn inside bounds");
        pasted += 1;
    }
    MixOutput {
        sample: out,
        pasted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagery::LabelMap;
    use crate::synth::{generate_ood_object, generate_scene, SceneSpec};
    use proptest::prelude::*;

    fn constant_image(h: usize, w: usize, v: f64) -> Image {
        Image::new(h, w, vec![v; h * w * 3]).unwrap()
    }

    fn flat_object(h: usize, w: usize, v: f64) -> OodObject {
        let mut obj = generate_ood_object(Family::Proxy, 0);
        obj.mask = vec![true; h * w];
        obj.texture = constant_image(h, w, v);
        obj
    }

    #[test]
    fn constant_image_stats() {
        let s = extract_style(&constant_image(3, 3, 0.5), None).unwrap();
        assert_eq!(s.mean, [0.5; 3]);
        assert_eq!(s.std, [STD_EPS; 3]);
    }

    #[test]
    fn two_pixel_population_moments() {
        let img = Image::new(1, 2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let s = extract_style(&img, None).unwrap();
        assert_eq!(s.mean, [0.5; 3]);
        assert_eq!(s.std, [0.5; 3]);
    }

    #[test]
    fn single_pixel_region() {
        let img = Image::new(1, 2, vec![0.3, 0.3, 0.3, 0.9, 0.9, 0.9]).unwrap();
        let s = extract_style(&img, Some(&[true, false])).unwrap();
        assert_eq!(s.mean, [0.3; 3]);
        assert_eq!(s.std, [STD_EPS; 3]);
        assert!(extract_style(&img, Some(&[false, false])).is_err());
    }

    #[test]
    fn affine_transfer_example() {
        // two pixels at 0.1 / 0.3 give source mean 0.2, std 0.1
        let mut obj = flat_object(1, 2, 0.1);
        obj.texture = Image::new(1, 2, vec![0.1, 0.1, 0.1, 0.3, 0.3, 0.3]).unwrap();
        let target = ChannelStats {
            mean: [0.5; 3],
            std: [0.2; 3],
        };
        let out = style_align(&obj, &target);
        for v in out.texture.pixel(0, 1) {
            assert!((v - 0.7).abs() < 1e-12);
        }
        for v in out.texture.pixel(0, 0) {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn matching_own_stats_is_identity() {
        let obj = generate_ood_object(Family::Test, 7);
        let src = extract_style(&obj.texture, Some(&obj.mask)).unwrap();
        let out = style_align(&obj, &src);
        for (a, b) in out.texture.data().iter().zip(obj.texture.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(out.mask, obj.mask);
    }

    #[test]
    fn degenerate_source_recenters() {
        let obj = flat_object(2, 3, 0.9);
        let target = ChannelStats {
            mean: [0.4; 3],
            std: [0.2; 3],
        };
        let out = style_align(&obj, &target);
        // (0.9 - 0.9) / 1e-6 * 0.2 + 0.4: any rounding in the source mean is
        // amplified by 0.2 / 1e-6 = 2e5, far below 1e-9
        for &v in out.texture.data() {
            assert!((v - 0.4).abs() < 1e-9, "{v}");
        }
    }

    fn blank_sample(h: usize, w: usize) -> SegSample {
        SegSample::new(constant_image(h, w, 0.2), LabelMap::filled(h, w, 0)).unwrap()
    }

    #[test]
    fn paste_counts_and_locality() {
        let sample = blank_sample(40, 60);
        let obj = generate_ood_object(Family::Proxy, 3);
        let out = paste(&sample, &obj, (2, 5)).unwrap();
        assert_eq!(out.labels.count(OOD_ID), obj.area());
        let mut inside = vec![false; 40 * 60];
        for (r, c) in obj.masked_pixels() {
            inside[(r + 2) * 60 + c + 5] = true;
        }
        let before = sample.image.to_bytes();
        let after = out.image.to_bytes();
        for i in 0..40 * 60 {
            if !inside[i] {
                assert_eq!(before[i * 3..i * 3 + 3], after[i * 3..i * 3 + 3]);
                assert_eq!(sample.labels.data()[i], out.labels.data()[i]);
            }
        }
    }

    #[test]
    fn paste_twice_is_additive() {
        let sample = blank_sample(64, 128);
        let obj = generate_ood_object(Family::Test, 1);
        let once = paste(&sample, &obj, (0, 0)).unwrap();
        let twice = paste(&once, &obj, (0, 64)).unwrap();
        assert_eq!(twice.labels.count(OOD_ID), 2 * obj.area());
    }

    #[test]
    fn paste_out_of_bounds_fails() {
        let sample = blank_sample(10, 10);
        let obj = flat_object(4, 4, 0.5);
        assert!(paste(&sample, &obj, (7, 0)).is_err());
        assert!(paste(&sample, &obj, (6, 6)).is_ok());
    }

    #[test]
    fn mix_probability_endpoints() {
        let spec = SceneSpec {
            height: 32,
            width: 64,
            ..SceneSpec::default()
        };
        let sample = generate_scene(&spec).unwrap();
        let pool = ProxyPool::generate(4, ObjectExtent::for_scene(32, 64), None, 1);
        let never = MixConfig {
            mix_probability: 0.0,
            ..MixConfig::default()
        };
        let always = MixConfig {
            mix_probability: 1.0,
            ..MixConfig::default()
        };
        for seed in 0..50 {
            let a = anomaly_mix(&sample, &never, &pool, seed);
            assert_eq!(a.sample, sample);
            assert!(!a.fired());
            let b = anomaly_mix(&sample, &always, &pool, seed);
            assert!(b.fired() && b.sample.labels.has_ood());
            assert_eq!(b, anomaly_mix(&sample, &always, &pool, seed));
        }
    }

    #[test]
    fn config_range_is_checked() {
        let bad = MixConfig {
            mix_probability: 1.5,
            ..MixConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(MixConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn moments_match_target_without_clamping(seed in 0u64..500, tm in 0.35f64..0.65, ts in 0.01f64..0.05) {
            let obj = generate_ood_object(Family::Test, seed);
            let src = extract_style(&obj.texture, Some(&obj.mask)).unwrap();
            prop_assume!(src.std.iter().all(|&s| s > 1e-3));
            let target = ChannelStats { mean: [tm; 3], std: [ts; 3] };
            let out = style_align(&obj, &target);
            let got = extract_style(&out.texture, Some(&out.mask)).unwrap();
            // skip instances where the affine map would leave [0, 1]
            let clamped = obj.masked_pixels().any(|(r, c)| {
                let px = obj.texture.pixel(r, c);
                (0..3).any(|ch| {
                    let v = (px[ch] - src.mean[ch]) / src.std[ch] * ts + tm;
                    !(0.0..=1.0).contains(&v)
                })
            });
            prop_assume!(!clamped);
            for ch in 0..3 {
                prop_assert!((got.mean[ch] - tm).abs() < 1e-9);
                prop_assert!((got.std[ch] - ts).abs() < 1e-9);
            }
        }

        #[test]
        fn paste_never_writes_outside_mask(seed in any::<u64>(), row in 0usize..20, col in 0usize..40) {
            let sample = blank_sample(60, 80);
            let obj = generate_ood_object_with(Family::Proxy, ObjectExtent { min: 5, max: 30 }, seed);
            let out = paste(&sample, &obj, (row, col)).unwrap();
            for r in 0..60 {
                for c in 0..80 {
                    let in_box = r >= row && r < row + obj.height() && c >= col && c < col + obj.width();
                    let masked = in_box && obj.mask[(r - row) * obj.width() + (c - col)];
                    if !masked {
                        prop_assert_eq!(out.labels.get(r, c), 0);
                        prop_assert_eq!(out.image.pixel(r, c), sample.image.pixel(r, c));
                    } else {
                        prop_assert_eq!(out.labels.get(r, c), OOD_ID);
                    }
                }
            }
        }

        #[test]
        fn aligned_paste_matches_scene_mean(seed in 0u64..200) {
            let spec = SceneSpec { seed, ..SceneSpec::default() };
            let sample = generate_scene(&spec).unwrap();
            let scene = extract_style(&sample.image, None).unwrap();
            let obj = generate_ood_object(Family::Proxy, seed ^ 0xabc);
            let aligned = style_align(&obj, &scene);
            let out = paste(&sample, &aligned, (10, 20)).unwrap();
            let region: Vec<bool> = out.labels.data().iter().map(|&c| c == OOD_ID).collect();
            let got = extract_style(&out.image, Some(&region)).unwrap();
            for ch in 0..3 {
                prop_assert!((got.mean[ch] - scene.mean[ch]).abs() < 0.05);
            }
        }

        #[test]
        fn ood_labels_iff_mix_fired(seed in any::<u64>()) {
            let spec = SceneSpec { height: 32, width: 64, ..SceneSpec::default() };
            let sample = generate_scene(&spec).unwrap();
            let pool = ProxyPool::generate(3, ObjectExtent::for_scene(32, 64), None, 9);
            let out = anomaly_mix(&sample, &MixConfig { mix_probability: 0.5, ..MixConfig::default() }, &pool, seed);
            prop_assert_eq!(out.sample.labels.has_ood(), out.fired());
        }
    }
}
