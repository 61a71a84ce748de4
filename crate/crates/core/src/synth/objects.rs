use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};

use super::SceneRng;
use crate::imagery::Image;

/// Which generator family an object comes from. Proxy objects are used for
/// fine-tuning, test objects only ever appear in evaluation scenes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Proxy,
    Test,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Proxy => "proxy",
            Family::Test => "test",
        }
    }

    pub fn shape_generators(self) -> &'static [&'static str] {
        match self {
            Family::Proxy => &["polygon"],
            Family::Test => &["ellipses"],
        }
    }

    pub fn texture_generators(self) -> &'static [&'static str] {
        match self {
            Family::Proxy => &["checker", "stripe"],
            Family::Test => &["marble", "blob"],
        }
    }
}

/// A binary mask with a texture over its bounding box. Texture values
/// outside the mask are zero and never read.
#[derive(Clone, Debug, PartialEq)]
pub struct OodObject {
    pub mask: Vec<bool>,
    pub texture: Image,
    pub family: Family,
    pub shape_generator: &'static str,
    pub texture_generator: &'static str,
}

impl OodObject {
    pub fn height(&self) -> usize {
        self.texture.height()
    }

    pub fn width(&self) -> usize {
        self.texture.width()
    }

    pub fn area(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn masked_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width();
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(i, _)| (i / w, i % w))
    }
}

/// Bounding-box extent range (pixels) for generated objects.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObjectExtent {
    pub min: usize,
    pub max: usize,
}

impl Default for ObjectExtent {
    fn default() -> Self {
        Self { min: 24, max: 56 }
    }
}

impl ObjectExtent {
    /// Extent range that keeps the bounding box at most a quarter of the scene.
    pub fn for_scene(height: usize, width: usize) -> Self {
        let cap = (height.min(width) / 2).max(2);
        let d = Self::default();
        Self {
            min: d.min.min(cap / 2).max(2),
            max: d.max.min(cap),
        }
    }
}

pub fn generate_ood_object(family: Family, seed: u64) -> OodObject {
    generate_ood_object_with(family, ObjectExtent::default(), seed)
}

pub fn generate_ood_object_with(family: Family, extent: ObjectExtent, seed: u64) -> OodObject {
    let mut rng = SceneRng::seed_from_u64(seed);
    let h = rng.random_range(extent.min..=extent.max);
    let w = rng.random_range(extent.min..=extent.max);
    let raw = match family {
        Family::Proxy => polygon_mask(h, w, &mut rng),
        Family::Test => ellipse_union_mask(h, w, &mut rng),
    };
    let mask = largest_component(&raw, h, w);
    let (texture_generator, texture) = match family {
        Family::Proxy => {
            if rng.random_bool(0.5) {
                ("checker", checker_texture(h, w, &mut rng))
            } else {
                ("stripe", stripe_texture(h, w, &mut rng))
            }
        }
        Family::Test => {
            if rng.random_bool(0.5) {
                ("marble", marble_texture(h, w, &mut rng))
            } else {
                ("blob", blob_texture(h, w, &mut rng))
            }
        }
    };
    let mut texture = texture;
    for r in 0..h {
        for c in 0..w {
            if !mask[r * w + c] {
                texture.set_pixel(r, c, [0.0; 3]);
            }
        }
    }
    OodObject {
        mask,
        texture,
        family,
        shape_generator: family.shape_generators()[0],
        texture_generator,
    }
}

// Star-shaped polygon around the box center: sorted angles make it simple.
fn polygon_mask(h: usize, w: usize, rng: &mut SceneRng) -> Vec<bool> {
    let n = rng.random_range(5..=9);
    let mut angles: Vec<f64> = (0..n)
        .map(|i| (i as f64 + rng.random_range(0.0..0.8)) * 2.0 * PI / n as f64)
        .collect();
    angles.sort_by(f64::total_cmp);
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    let verts: Vec<(f64, f64)> = angles
        .iter()
        .map(|&a| {
            let r = rng.random_range(0.45..1.0);
            (cy + r * cy * a.sin(), cx + r * cx * a.cos())
        })
        .collect();
    let mut mask = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            mask[r * w + c] = point_in_polygon(r as f64 + 0.5, c as f64 + 0.5, &verts);
        }
    }
    mask
}

fn point_in_polygon(y: f64, x: f64, verts: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = verts.len() - 1;
    for i in 0..verts.len() {
        let (yi, xi) = verts[i];
        let (yj, xj) = verts[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn ellipse_union_mask(h: usize, w: usize, rng: &mut SceneRng) -> Vec<bool> {
    let count = rng.random_range(1..=3);
    let ellipses: Vec<[f64; 4]> = (0..count)
        .map(|_| {
            let cy = h as f64 * rng.random_range(0.35..0.65);
            let cx = w as f64 * rng.random_range(0.35..0.65);
            let ry = h as f64 * rng.random_range(0.2..0.5);
            let rx = w as f64 * rng.random_range(0.2..0.5);
            [cy, cx, ry, rx]
        })
        .collect();
    let mut mask = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            mask[r * w + c] = ellipses.iter().any(|&[cy, cx, ry, rx]| {
                let dy = (y - cy) / ry;
                let dx = (x - cx) / rx;
                dy * dy + dx * dx <= 1.0
            });
        }
    }
    mask
}

/// Keeps the largest 4-connected component; falls back to the center pixel.
pub(crate) fn largest_component(mask: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut label = vec![0u32; h * w];
    let mut best = (0usize, 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if mask[j] && label[j] == 0 {
                    label[j] = next;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
        if size > best.0 {
            best = (size, next);
        }
    }
    if best.0 == 0 {
        let mut out = vec![false; h * w];
        out[(h / 2) * w + w / 2] = true;
        return out;
    }
    label.iter().map(|&l| l == best.1).collect()
}

// Proxy colors: saturated HSV draws.
fn hsv_color(rng: &mut SceneRng) -> [f64; 3] {
    let h: f64 = rng.random_range(0.0..6.0);
    let s = rng.random_range(0.55..1.0);
    let v = rng.random_range(0.55..1.0);
    let f = h - h.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match h as usize {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

// Test colors: one channel near full, one near empty, one free.
fn extreme_color(rng: &mut SceneRng) -> [f64; 3] {
    let hi = rng.random_range(0..3);
    let lo = (hi + rng.random_range(1..3)) % 3;
    let mut c = [rng.random::<f64>(); 3];
    c[hi] = rng.random_range(0.8..1.0);
    c[lo] = rng.random_range(0.0..0.25);
    c
}

fn paint(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Image {
    let mut img = Image::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            img.set_pixel(r, c, f(r, c));
        }
    }
    img
}

fn checker_texture(h: usize, w: usize, rng: &mut SceneRng) -> Image {
    let (a, b) = (hsv_color(rng), hsv_color(rng));
    let cell = rng.random_range(3..=8);
    paint(h, w, |r, c| if (r / cell + c / cell) % 2 == 0 { a } else { b })
}

fn stripe_texture(h: usize, w: usize, rng: &mut SceneRng) -> Image {
    let (a, b) = (hsv_color(rng), hsv_color(rng));
    let period = rng.random_range(4..=10);
    let orientation = rng.random_range(0..3);
    paint(h, w, |r, c| {
        let t = match orientation {
            0 => r,
            1 => c,
            _ => r + c,
        };
        if (t % period) * 2 < period {
            a
        } else {
            b
        }
    })
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Bilinearly interpolated lattice noise in [0, 1].
struct ValueNoise {
    grid: Vec<f64>,
    gh: usize,
    gw: usize,
    cell: f64,
}

impl ValueNoise {
    fn new(h: usize, w: usize, cell: f64, rng: &mut SceneRng) -> Self {
        let gh = (h as f64 / cell).ceil() as usize + 2;
        let gw = (w as f64 / cell).ceil() as usize + 2;
        let grid = (0..gh * gw).map(|_| rng.random()).collect();
        Self { grid, gh, gw, cell }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        let y = r as f64 / self.cell;
        let x = c as f64 / self.cell;
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let g = |yy: usize, xx: usize| self.grid[yy.min(self.gh - 1) * self.gw + xx.min(self.gw - 1)];
        let top = g(y0, x0) * (1.0 - fx) + g(y0, x0 + 1) * fx;
        let bot = g(y0 + 1, x0) * (1.0 - fx) + g(y0 + 1, x0 + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }
}

fn marble_texture(h: usize, w: usize, rng: &mut SceneRng) -> Image {
    let (a, b) = (extreme_color(rng), extreme_color(rng));
    let theta = rng.random_range(0.0..PI);
    let freq = rng.random_range(0.25..0.6);
    let turbulence = rng.random_range(2.0..5.0);
    let noise = ValueNoise::new(h, w, rng.random_range(4.0..8.0), rng);
    paint(h, w, |r, c| {
        let u = r as f64 * theta.sin() + c as f64 * theta.cos();
        let t = 0.5 + 0.5 * (freq * u + turbulence * noise.at(r, c)).sin();
        lerp3(a, b, t)
    })
}

fn blob_texture(h: usize, w: usize, rng: &mut SceneRng) -> Image {
    let colors = [extreme_color(rng), extreme_color(rng), extreme_color(rng)];
    let noise = ValueNoise::new(h, w, rng.random_range(3.0..7.0), rng);
    paint(h, w, |r, c| {
        let t = noise.at(r, c) * 2.0;
        if t < 1.0 {
            lerp3(colors[0], colors[1], t)
        } else {
            lerp3(colors[1], colors[2], t - 1.0)
        }
    })
}
