//! Procedural "building" scenes for desk-scale experiments.
//!
//! A scene is a smooth land-cover texture with polygonal objects (the class of
//! interest), their cast shadows, and unlabeled paved strips that look similar
//! to some roofs. Bitemporal pairs share terrain and object geometry but are
//! rendered with independent illumination, palette jitter and per-object
//! appearance, so a per-date segmenter sees the same object differently on the
//! two dates. The change mask of every pair is the xor of the two rendered
//! footprint masks.

use ndarray::{Array2, Array3};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BitemporalSample, Sample};
use crate::error::{Result, StarError};
use crate::pairing::{assign_change_labels, LabelMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Rect,
    RotatedRect,
    LShape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSceneSpec {
    /// Square canvas side in pixels.
    pub size: usize,
    /// Inclusive range of objects per scene.
    pub objects: [usize; 2],
    /// Inclusive range of object side lengths in pixels.
    pub object_size: [usize; 2],
    pub shapes: Vec<ShapeKind>,
    /// Inclusive range of unlabeled paved strips per scene.
    pub distractors: [usize; 2],
    /// Cell size of the terrain value noise, in pixels.
    pub noise_scale: f32,
    /// Weight of the terrain texture in the background color.
    pub noise_amplitude: f32,
    /// Per-tile jitter of the background palette and illumination.
    pub color_jitter: f32,
    /// Per-object, per-date jitter of roof color and contrast.
    pub appearance_jitter: f32,
    /// Standard deviation of i.i.d. pixel noise.
    pub pixel_noise: f32,
    /// Expected number of new objects per existing object between dates.
    pub add_fraction: f32,
    /// Probability that an existing object disappears between dates.
    pub remove_fraction: f32,
    pub seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            size: 128,
            objects: [3, 9],
            object_size: [10, 28],
            shapes: vec![ShapeKind::Rect, ShapeKind::RotatedRect, ShapeKind::LShape],
            distractors: [0, 2],
            noise_scale: 24.0,
            noise_amplitude: 1.0,
            color_jitter: 0.08,
            appearance_jitter: 0.12,
            pixel_noise: 0.03,
            add_fraction: 0.2,
            remove_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(StarError::Config(msg));
        if self.size < 8 {
            return bad(format!("canvas size {} is too small", self.size));
        }
        if self.objects[0] > self.objects[1] {
            return bad(format!("object count range {:?} is empty", self.objects));
        }
        if self.object_size[0] == 0 || self.object_size[0] > self.object_size[1] || self.object_size[1] > self.size {
            return bad(format!("object size range {:?} is invalid", self.object_size));
        }
        if self.distractors[0] > self.distractors[1] {
            return bad(format!("distractor range {:?} is empty", self.distractors));
        }
        if self.shapes.is_empty() {
            return bad("at least one shape kind is required".into());
        }
        for (name, v) in [("add_fraction", self.add_fraction), ("remove_fraction", self.remove_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("noise_scale", self.noise_scale),
            ("noise_amplitude", self.noise_amplitude),
            ("color_jitter", self.color_jitter),
            ("appearance_jitter", self.appearance_jitter),
            ("pixel_noise", self.pixel_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a nonnegative number, got {v}"));
            }
        }
        if self.noise_scale < 1.0 {
            return bad("noise_scale must be at least one pixel".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SyntheticData {
    pub train: Vec<Sample>,
    pub eval: Vec<BitemporalSample>,
}

/// Deterministic in `spec.seed`; every tile draws from its own random stream.
pub fn generate_synthetic(spec: &SyntheticSceneSpec, n_train: usize, n_eval_pairs: usize) -> Result<SyntheticData> {
    spec.validate()?;
    let train = (0..n_train)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(spec.seed, i as u64);
            let scene = Scene::sample(spec, &mut rng);
            let look = Look::sample(spec, &scene, &mut rng);
            let (image, mask) = scene.render(spec, &look, &mut rng);
            Sample::new(format!("train_{i:05}"), image, Some(mask))
        })
        .collect::<Result<Vec<_>>>()?;
    let eval = (0..n_eval_pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(spec.seed, (1 << 32) + i as u64);
            let before = Scene::sample(spec, &mut rng);
            let after = before.evolve(spec, &mut rng);
            let look1 = Look::sample(spec, &before, &mut rng);
            let look2 = Look::sample(spec, &after, &mut rng);
            let (image_t1, sem1) = before.render(spec, &look1, &mut rng);
            let (image_t2, sem2) = after.render(spec, &look2, &mut rng);
            let change = assign_change_labels(&sem1, &sem2, LabelMode::Xor)?;
            let pair = BitemporalSample {
                id: format!("pair_{i:05}"),
                image_t1,
                image_t2,
                change,
                semantic_t1: Some(sem1),
                semantic_t2: Some(sem2),
            };
            pair.validate()?;
            Ok(pair)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticData { train, eval })
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

type Point = [f32; 2];

#[derive(Clone, Debug)]
struct Object {
    polygon: Vec<Point>,
    /// Index into the roof palette.
    roof: usize,
    /// Unit vector along the roof ridge.
    ridge: Point,
}

#[derive(Clone, Debug)]
struct Strip {
    polygon: Vec<Point>,
}

#[derive(Clone, Debug)]
struct Scene {
    size: usize,
    terrain: Array2<f32>,
    objects: Vec<Object>,
    strips: Vec<Strip>,
}

/// Date-specific rendering parameters.
#[derive(Clone, Debug)]
struct Look {
    ground: [[f32; 3]; 2],
    illumination: f32,
    roof_tint: Vec<([f32; 3], f32)>,
    strip_tint: Vec<[f32; 3]>,
}

const GROUND: [[f32; 3]; 2] = [[0.27, 0.37, 0.20], [0.50, 0.44, 0.33]];
const ROOFS: [[f32; 3]; 4] = [
    [0.74, 0.73, 0.70],
    [0.62, 0.32, 0.26],
    [0.44, 0.50, 0.58],
    [0.83, 0.78, 0.62],
];
const PAVEMENT: [f32; 3] = [0.62, 0.61, 0.59];
const SHADOW_OFFSET: f32 = 2.0;
const SHADOW_GAIN: f32 = 0.55;

impl Scene {
    fn sample(spec: &SyntheticSceneSpec, rng: &mut ChaCha8Rng) -> Self {
        let terrain = value_noise(spec.size, spec.noise_scale, rng);
        let count = rng.random_range(spec.objects[0]..=spec.objects[1]);
        let mut objects: Vec<Object> = Vec::with_capacity(count);
        for _ in 0..count {
            if let Some(o) = place_object(spec, &objects, rng) {
                objects.push(o);
            }
        }
        let strips = (0..rng.random_range(spec.distractors[0]..=spec.distractors[1]))
            .map(|_| sample_strip(spec.size as f32, rng))
            .collect();
        Self {
            size: spec.size,
            terrain,
            objects,
            strips,
        }
    }

    /// The same place at a later date: some objects removed, some added.
    fn evolve(&self, spec: &SyntheticSceneSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut occupied = self.objects.clone();
        let mut kept: Vec<Object> = self
            .objects
            .iter()
            .filter(|_| !rng.random_bool(f64::from(spec.remove_fraction)))
            .cloned()
            .collect();
        for _ in 0..self.objects.len() {
            if rng.random_bool(f64::from(spec.add_fraction)) {
                if let Some(o) = place_object(spec, &occupied, rng) {
                    occupied.push(o.clone());
                    kept.push(o);
                }
            }
        }
        Self {
            size: self.size,
            terrain: self.terrain.clone(),
            objects: kept,
            strips: self.strips.clone(),
        }
    }

    fn render(&self, spec: &SyntheticSceneSpec, look: &Look, rng: &mut ChaCha8Rng) -> (Array3<f32>, Array2<u8>) {
        let n = self.size;
        let mut img = Array3::<f32>::zeros((3, n, n));
        let amp = spec.noise_amplitude;
        for y in 0..n {
            for x in 0..n {
                let t = (0.5 + amp * (self.terrain[[y, x]] - 0.5)).clamp(0.0, 1.0);
                for c in 0..3 {
                    img[[c, y, x]] = look.ground[0][c] * (1.0 - t) + look.ground[1][c] * t;
                }
            }
        }
        for (strip, tint) in self.strips.iter().zip(&look.strip_tint) {
            for_each_pixel(&strip.polygon, n, |y, x| {
                for c in 0..3 {
                    img[[c, y, x]] = tint[c];
                }
            });
        }

        let mut mask = Array2::<u8>::zeros((n, n));
        for o in &self.objects {
            for_each_pixel(&o.polygon, n, |y, x| mask[[y, x]] = 1);
        }
        for o in &self.objects {
            let shadow: Vec<Point> = o.polygon.iter().map(|p| [p[0] + SHADOW_OFFSET, p[1] + SHADOW_OFFSET]).collect();
            for_each_pixel(&shadow, n, |y, x| {
                if mask[[y, x]] == 0 {
                    for c in 0..3 {
                        img[[c, y, x]] *= SHADOW_GAIN;
                    }
                }
            });
        }
        for (o, (tint, contrast)) in self.objects.iter().zip(&look.roof_tint) {
            let centre = centroid(&o.polygon);
            for_each_pixel(&o.polygon, n, |y, x| {
                let d = (x as f32 + 0.5 - centre[0]) * o.ridge[1] - (y as f32 + 0.5 - centre[1]) * o.ridge[0];
                let shade = if d > 0.0 { 1.0 } else { 1.0 - contrast };
                for c in 0..3 {
                    img[[c, y, x]] = (ROOFS[o.roof][c] + tint[c]) * shade;
                }
            });
        }

        let sigma = spec.pixel_noise;
        img.mapv_inplace(|v| {
            let noisy = v * look.illumination + sigma * gaussian(rng);
            (noisy.clamp(0.0, 1.0) * 255.0).round() / 255.0
        });
        (img, mask)
    }
}

impl Look {
    fn sample(spec: &SyntheticSceneSpec, scene: &Scene, rng: &mut ChaCha8Rng) -> Self {
        let cj = spec.color_jitter;
        let aj = spec.appearance_jitter;
        let jitter = |scale: f32, rng: &mut ChaCha8Rng| {
            if scale > 0.0 {
                rng.random_range(-scale..=scale)
            } else {
                0.0
            }
        };
        let ground = GROUND.map(|col| {
            let shift = jitter(cj, rng);
            col.map(|v| v + shift + jitter(cj * 0.5, rng))
        });
        let illumination = 1.0 + jitter(cj * 1.5, rng);
        let roof_tint = scene
            .objects
            .iter()
            .map(|_| {
                let shift = jitter(aj, rng);
                let tint = [0, 1, 2].map(|_| shift + jitter(aj * 0.5, rng));
                (tint, 0.08 + jitter(aj, rng).abs())
            })
            .collect();
        let strip_tint = scene
            .strips
            .iter()
            .map(|_| {
                let shift = jitter(aj, rng);
                PAVEMENT.map(|v| v + shift)
            })
            .collect();
        Self {
            ground,
            illumination,
            roof_tint,
            strip_tint,
        }
    }
}

fn place_object(spec: &SyntheticSceneSpec, existing: &[Object], rng: &mut ChaCha8Rng) -> Option<Object> {
    const ATTEMPTS: usize = 30;
    const GAP: f32 = 3.0;
    let size = spec.size as f32;
    for _ in 0..ATTEMPTS {
        let kind = *spec.shapes.choose(rng).expect("validated non-empty");
        let w = rng.random_range(spec.object_size[0]..=spec.object_size[1]) as f32;
        let h = rng.random_range(spec.object_size[0]..=spec.object_size[1]) as f32;
        let cx = rng.random_range(0.0..size);
        let cy = rng.random_range(0.0..size);
        let (polygon, angle) = match kind {
            ShapeKind::Rect => (rect(cx, cy, w, h, 0.0), 0.0),
            ShapeKind::RotatedRect => {
                let a = rng.random_range(0.0..std::f32::consts::FRAC_PI_2);
                (rect(cx, cy, w, h, a), a)
            }
            ShapeKind::LShape => {
                let fx = rng.random_range(0.35..0.65);
                let fy = rng.random_range(0.35..0.65);
                let turns = rng.random_range(0..4);
                (l_shape(cx, cy, w, h, fx, fy, turns), 0.0)
            }
        };
        let bbox = bounds(&polygon);
        let clear = existing.iter().all(|o| {
            let b = bounds(&o.polygon);
            bbox[0] > b[2] + GAP || b[0] > bbox[2] + GAP || bbox[1] > b[3] + GAP || b[1] > bbox[3] + GAP
        });
        let visible = bbox[0] < size - 4.0 && bbox[1] < size - 4.0 && bbox[2] > 4.0 && bbox[3] > 4.0;
        if clear && visible {
            let ridge = if w >= h { [angle.cos(), angle.sin()] } else { [-angle.sin(), angle.cos()] };
            return Some(Object {
                polygon,
                roof: rng.random_range(0..ROOFS.len()),
                ridge,
            });
        }
    }
    None
}

fn sample_strip(size: f32, rng: &mut ChaCha8Rng) -> Strip {
    let width = rng.random_range(3.0..7.0);
    let angle: f32 = rng.random_range(0.0..std::f32::consts::PI);
    let cx = rng.random_range(0.0..size);
    let cy = rng.random_range(0.0..size);
    Strip {
        polygon: rect(cx, cy, size * 3.0, width, angle),
    }
}

fn rect(cx: f32, cy: f32, w: f32, h: f32, angle: f32) -> Vec<Point> {
    let (s, c) = angle.sin_cos();
    [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
        .iter()
        .map(|&(u, v)| {
            let (dx, dy) = (u * w, v * h);
            [cx + dx * c - dy * s, cy + dx * s + dy * c]
        })
        .collect()
}

/// A `w x h` rectangle with one corner notch of `fx*w x fy*h` removed.
fn l_shape(cx: f32, cy: f32, w: f32, h: f32, fx: f32, fy: f32, turns: u32) -> Vec<Point> {
    let (x0, y0) = (-0.5 * w, -0.5 * h);
    let (x1, y1) = (0.5 * w, 0.5 * h);
    let (nx, ny) = (x1 - fx * w, y1 - fy * h);
    let local = [[x0, y0], [x1, y0], [x1, ny], [nx, ny], [nx, y1], [x0, y1]];
    local
        .iter()
        .map(|&[x, y]| {
            let (mut x, mut y) = (x, y);
            for _ in 0..turns {
                (x, y) = (-y, x);
            }
            [cx + x, cy + y]
        })
        .collect()
}

fn bounds(poly: &[Point]) -> [f32; 4] {
    poly.iter().fold([f32::MAX, f32::MAX, f32::MIN, f32::MIN], |b, p| {
        [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])]
    })
}

fn centroid(poly: &[Point]) -> Point {
    let n = poly.len() as f32;
    let s = poly.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
    [s[0] / n, s[1] / n]
}

/// Even-odd test at the pixel centre.
fn inside(poly: &[Point], x: f32, y: f32) -> bool {
    let mut hit = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi[1] > y) != (pj[1] > y) && x < (pj[0] - pi[0]) * (y - pi[1]) / (pj[1] - pi[1]) + pi[0] {
            hit = !hit;
        }
        j = i;
    }
    hit
}

fn for_each_pixel(poly: &[Point], n: usize, mut f: impl FnMut(usize, usize)) {
    let b = bounds(poly);
    let lo = |v: f32| (v.floor().max(0.0) as usize).min(n);
    let hi = |v: f32| (v.ceil().max(0.0) as usize).min(n);
    for y in lo(b[1])..hi(b[3]) {
        for x in lo(b[0])..hi(b[2]) {
            if inside(poly, x as f32 + 0.5, y as f32 + 0.5) {
                f(y, x);
            }
        }
    }
}

/// Two-octave smooth value noise normalized to `[0, 1]`.
fn value_noise(size: usize, cell: f32, rng: &mut ChaCha8Rng) -> Array2<f32> {
    let octave = |cell: f32, rng: &mut ChaCha8Rng| {
        let g = (size as f32 / cell).ceil() as usize + 2;
        let grid = Array2::from_shape_fn((g, g), |_| rng.random::<f32>());
        Array2::from_shape_fn((size, size), |(y, x)| {
            let (fy, fx) = (y as f32 / cell, x as f32 / cell);
            let (iy, ix) = (fy as usize, fx as usize);
            let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
            let (ty, tx) = (smooth(fy - iy as f32), smooth(fx - ix as f32));
            let top = grid[[iy, ix]] * (1.0 - tx) + grid[[iy, ix + 1]] * tx;
            let bottom = grid[[iy + 1, ix]] * (1.0 - tx) + grid[[iy + 1, ix + 1]] * tx;
            top * (1.0 - ty) + bottom * ty
        })
    };
    let coarse = octave(cell, rng);
    let fine = octave((cell / 2.0).max(1.0), rng);
    let mut field = coarse * (2.0 / 3.0) + fine * (1.0 / 3.0);
    let (lo, hi) = field.iter().fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let span = (hi - lo).max(1e-6);
    field.mapv_inplace(|v| (v - lo) / span);
    field
}

fn gaussian(rng: &mut ChaCha8Rng) -> f32 {
    // Box-Muller; one draw per call keeps the stream layout simple.
    let u1 = rng.random::<f32>().max(f32::MIN_POSITIVE);
    let u2 = rng.random::<f32>();
    (-2.0 * u1.ln()).sqrt() * (std::f32::consts::TAU * u2).cos()
}
