use rand::Rng;
use rand_distr::StandardNormal;

use crate::imagery::Image;

/// Photometric domain: `v -> clamp(gain * v^gamma + offset + noise, 0, 1)` per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleDomain {
    pub name: String,
    pub channel_gains: [f64; 3],
    pub channel_offsets: [f64; 3],
    pub gamma: f64,
    pub noise_sigma: f64,
}

impl StyleDomain {
    /// Training domain of the default corpus.
    pub fn style_a() -> Self {
        Self {
            name: "styleA".into(),
            channel_gains: [1.0, 1.0, 1.0],
            channel_offsets: [0.0, 0.0, 0.0],
            gamma: 1.0,
            noise_sigma: 0.02,
        }
    }

    /// Shifted domain (darker, bluer, contrast-boosted).
    pub fn style_b() -> Self {
        Self {
            name: "styleB".into(),
            channel_gains: [0.8, 0.9, 1.1],
            channel_offsets: [0.05, 0.0, -0.05],
            gamma: 1.3,
            noise_sigma: 0.04,
        }
    }

    /// Saturated, warm "photo collection" look used for mismatched proxy objects.
    pub fn vivid() -> Self {
        Self {
            name: "vivid".into(),
            channel_gains: [1.25, 1.05, 0.6],
            channel_offsets: [0.12, 0.05, 0.0],
            gamma: 0.6,
            noise_sigma: 0.0,
        }
    }

    /// No-op domain.
    pub fn identity() -> Self {
        Self {
            name: "identity".into(),
            channel_gains: [1.0; 3],
            channel_offsets: [0.0; 3],
            gamma: 1.0,
            noise_sigma: 0.0,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "styleA" => Some(Self::style_a()),
            "styleB" => Some(Self::style_b()),
            "vivid" => Some(Self::vivid()),
            "identity" => Some(Self::identity()),
            _ => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.gamma > 0.0
            && self.noise_sigma >= 0.0
            && self
                .channel_gains
                .iter()
                .chain(&self.channel_offsets)
                .all(|v| v.is_finite())
    }

    /// Noise-free transform of a single channel value.
    #[inline]
    pub fn map_value(&self, channel: usize, v: f64) -> f64 {
        let g = if self.gamma == 1.0 { v } else { v.powf(self.gamma) };
        self.channel_gains[channel] * g + self.channel_offsets[channel]
    }

    pub fn apply_pixel<R: Rng + ?Sized>(&self, rgb: [f64; 3], rng: &mut R) -> [f64; 3] {
        let mut out = [0.0; 3];
        for c in 0..3 {
            let mut v = self.map_value(c, rgb[c]);
            if self.noise_sigma > 0.0 {
                let n: f64 = rng.sample(StandardNormal);
                v += self.noise_sigma * n;
            }
            out[c] = v.clamp(0.0, 1.0);
        }
        out
    }

    /// Styles every pixel, optionally only those where `mask` is set.
    pub fn apply<R: Rng + ?Sized>(&self, image: &mut Image, mask: Option<&[bool]>, rng: &mut R) {
        for row in 0..image.height() {
            for col in 0..image.width() {
                if mask.is_some_and(|m| !m[row * image.width() + col]) {
                    continue;
                }
                let styled = self.apply_pixel(image.pixel(row, col), rng);
                image.set_pixel(row, col, styled);
            }
        }
    }

    /// Inverse of the noise-free affine part; only meaningful for `gamma == 1`.
    pub fn invert_affine(&self, channel: usize, v: f64) -> f64 {
        (v - self.channel_offsets[channel]) / self.channel_gains[channel]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_style_inverts_without_clamping() {
        let style = StyleDomain {
            name: "t".into(),
            channel_gains: [0.5, 0.8, 0.9],
            channel_offsets: [0.1, 0.05, 0.0],
            gamma: 1.0,
            noise_sigma: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for &v in &[0.0, 0.25, 0.6, 1.0] {
            let out = style.apply_pixel([v; 3], &mut rng);
            for (c, &o) in out.iter().enumerate() {
                assert!((style.invert_affine(c, o) - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn styled_values_stay_in_unit_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for style in [StyleDomain::style_b(), StyleDomain::vivid()] {
            let mut img = Image::from_bytes(1, 3, &[0, 128, 255, 255, 255, 255, 0, 0, 0]).unwrap();
            style.apply(&mut img, None, &mut rng);
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn builtin_names_resolve() {
        for name in ["styleA", "styleB", "vivid", "identity"] {
            assert_eq!(StyleDomain::by_name(name).unwrap().name, name);
        }
        assert!(StyleDomain::by_name("nope").is_none());
    }
}
