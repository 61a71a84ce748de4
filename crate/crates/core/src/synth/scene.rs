use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use super::{SceneRng, StyleDomain};
use crate::error::{Error, Result};
use crate::imagery::{Image, LabelMap, SegSample};

pub const NUM_CLASSES: usize = 6;
pub const ROAD: u8 = 0;
pub const SKY: u8 = 1;
pub const BUILDING: u8 = 2;
pub const VEGETATION: u8 = 3;
pub const CAR: u8 = 4;
pub const PEDESTRIAN: u8 = 5;

pub const CLASS_NAMES: [&str; NUM_CLASSES] =
    ["road", "sky", "building", "vegetation", "car", "pedestrian"];

/// Minimum share of road pixels in every generated scene.
pub const MIN_ROAD_FRACTION: f64 = 0.30;

// Mean RGB of each class before per-scene jitter and styling.
const CLASS_COLORS: [[f64; 3]; NUM_CLASSES] = [
    [0.40, 0.40, 0.42],
    [0.55, 0.72, 0.92],
    [0.62, 0.50, 0.42],
    [0.22, 0.50, 0.20],
    [0.20, 0.25, 0.65],
    [0.85, 0.55, 0.25],
];
const SCENE_JITTER: f64 = 0.04;
const PIXEL_NOISE: f64 = 0.03;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub style: StyleDomain,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            height: 128,
            width: 256,
            style: StyleDomain::style_a(),
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn scaled(len: usize, lo: f64, hi: f64, rng: &mut SceneRng) -> usize {
    (len as f64 * rng.random_range(lo..hi)).round() as usize
}

struct Painter {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl Painter {
    fn fill(&mut self, r0: usize, r1: usize, c0: usize, c1: usize, class: u8) {
        for r in r0..r1.min(self.height) {
            for c in c0..c1.min(self.width) {
                self.labels[r * self.width + c] = class;
            }
        }
    }

    fn count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&c| c == class).count()
    }

    fn road_loss(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> usize {
        let mut n = 0;
        for r in r0..r1.min(self.height) {
            for c in c0..c1.min(self.width) {
                n += usize::from(self.labels[r * self.width + c] == ROAD);
            }
        }
        n
    }
}

/// Renders a driving-like scene: sky on top, a band of buildings and
/// vegetation, a road band at the bottom, and a few cars and pedestrians.
pub fn generate_scene(spec: &SceneSpec) -> Result<SegSample> {
    let (h, w) = (spec.height, spec.width);
    if h == 0 || w == 0 {
        return Err(Error::arg("scene must have nonzero area"));
    }
    if h < 8 || w < 8 {
        return Err(Error::arg("scene must be at least 8x8"));
    }
    if !spec.style.is_valid() {
        return Err(Error::arg(format!("invalid style domain {}", spec.style.name)));
    }
    let mut rng = SceneRng::seed_from_u64(spec.seed);
    let mut p = Painter {
        height: h,
        width: w,
        labels: vec![SKY; h * w],
    };

    let road_top = scaled(h, 0.50, 0.60, &mut rng).min(h - 1);
    p.fill(road_top, h, 0, w, ROAD);

    // skyline: alternating building / vegetation column segments
    let mut col = 0;
    while col < w {
        let seg_w = scaled(w, 0.08, 0.25, &mut rng).max(2);
        let (class, top) = if rng.random_bool(0.65) {
            (BUILDING, scaled(h, 0.10, 0.35, &mut rng))
        } else {
            (VEGETATION, scaled(h, 0.28, 0.45, &mut rng))
        };
        p.fill(top.min(road_top), road_top, col, col + seg_w, class);
        col += seg_w;
    }

    let min_road = (MIN_ROAD_FRACTION * (h * w) as f64).ceil() as usize;
    let mut road_pixels = p.count(ROAD);
    let mut place = |p: &mut Painter, rng: &mut SceneRng, class: u8, size: (usize, usize)| {
        let (oh, ow) = (size.0.clamp(1, h), size.1.clamp(1, w));
        let lo = road_top.saturating_sub(oh / 3);
        let bottom_lo = (lo + oh).min(h);
        let bottom = if bottom_lo >= h {
            h
        } else {
            rng.random_range(bottom_lo..=h)
        };
        let r0 = bottom - oh;
        let c0 = rng.random_range(0..=w - ow);
        let lost = p.road_loss(r0, bottom, c0, c0 + ow);
        if road_pixels - lost >= min_road {
            p.fill(r0, bottom, c0, c0 + ow, class);
            road_pixels -= lost;
        }
    };
    for _ in 0..rng.random_range(0..=2) {
        let size = (scaled(h, 0.14, 0.20, &mut rng), scaled(w, 0.12, 0.20, &mut rng));
        place(&mut p, &mut rng, CAR, size);
    }
    for _ in 0..rng.random_range(0..=2) {
        let size = (scaled(h, 0.20, 0.30, &mut rng), scaled(w, 0.05, 0.07, &mut rng));
        place(&mut p, &mut rng, PEDESTRIAN, size);
    }

    // per-scene class colors, then per-pixel texture
    let mut palette = CLASS_COLORS;
    for color in palette.iter_mut() {
        for v in color.iter_mut() {
            *v = (*v + SCENE_JITTER * normal(&mut rng)).clamp(0.0, 1.0);
        }
    }
    let mut image = Image::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let class = p.labels[r * w + c];
            let base = palette[usize::from(class)];
            let shade = match class {
                SKY => 0.08 * (r as f64 / h as f64),
                BUILDING if (r / 4 + c / 4) % 3 == 0 => -0.08,
                VEGETATION => 0.05 * ((r as f64 * 0.7).sin() * (c as f64 * 0.9).cos()),
                _ => 0.0,
            };
            let mut rgb = [0.0; 3];
            for (ch, v) in rgb.iter_mut().enumerate() {
                *v = base[ch] + shade + PIXEL_NOISE * normal(&mut rng);
            }
            image.set_pixel(r, c, rgb);
        }
    }
    spec.style.apply(&mut image, None, &mut rng);

    let labels = LabelMap::new(h, w, p.labels)?;
    SegSample::new(image, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn road_fraction(s: &SegSample) -> f64 {
        s.labels.count(ROAD) as f64 / s.labels.data().len() as f64
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec::default().with_seed(9);
        assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
        let other = generate_scene(&SceneSpec::default().with_seed(10)).unwrap();
        assert_ne!(generate_scene(&spec).unwrap(), other);
    }

    #[test]
    fn default_scene_has_enough_road() {
        let s = generate_scene(&SceneSpec::default().with_seed(1)).unwrap();
        assert!(road_fraction(&s) >= 0.30);
    }

    #[test]
    fn labels_are_plain_classes() {
        for seed in 0..20 {
            let s = generate_scene(&SceneSpec::default().with_seed(seed)).unwrap();
            assert!(s.labels.data().iter().all(|&c| usize::from(c) < NUM_CLASSES));
            assert!(road_fraction(&s) >= MIN_ROAD_FRACTION);
        }
    }

    #[test]
    fn zero_area_is_rejected() {
        let spec = SceneSpec {
            height: 0,
            ..SceneSpec::default()
        };
        assert!(matches!(generate_scene(&spec), Err(Error::Argument(_))));
    }

    #[test]
    fn small_scenes_work() {
        let spec = SceneSpec {
            height: 32,
            width: 64,
            ..SceneSpec::default()
        };
        let s = generate_scene(&spec).unwrap();
        assert_eq!((s.labels.height(), s.labels.width()), (32, 64));
        assert!(road_fraction(&s) >= MIN_ROAD_FRACTION);
    }
}
