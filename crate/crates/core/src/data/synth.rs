//! Synthetic sequences of anti-aliased shapes translating over a flat
//! background, with exactly known motion.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::tensor::Tensor;

use super::FrameTriplet;

/// Distance (px) by which a shape's swept region is grown when assigning flow.
pub const FLOW_DILATION: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShapeKind {
    Rect { width: f64, height: f64 },
    Disk { radius: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    pub color: [f64; 3],
    /// Centre `(x, y)` at frame 0, pixel units.
    pub start: [f64; 2],
    /// Pixels per frame.
    pub velocity: [f64; 2],
}

impl Shape {
    fn half_extent(&self) -> [f64; 2] {
        match self.kind {
            ShapeKind::Rect { width, height } => [width / 2.0, height / 2.0],
            ShapeKind::Disk { radius } => [radius, radius],
        }
    }

    fn centre(&self, t: f64) -> [f64; 2] {
        [self.start[0] + t * self.velocity[0], self.start[1] + t * self.velocity[1]]
    }

    /// Fraction of pixel `(i, j)` covered at time `t`.
    fn coverage(&self, t: f64, i: usize, j: usize) -> f64 {
        let [cx, cy] = self.centre(t);
        let (x, y) = (j as f64, i as f64);
        match self.kind {
            ShapeKind::Rect { width, height } => {
                let ox = ((x + 0.5).min(cx + width / 2.0) - (x - 0.5).max(cx - width / 2.0)).max(0.0);
                let oy = ((y + 0.5).min(cy + height / 2.0) - (y - 0.5).max(cy - height / 2.0)).max(0.0);
                ox * oy
            }
            ShapeKind::Disk { radius } => {
                let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                if d <= radius - 0.75 {
                    1.0
                } else if d >= radius + 0.75 {
                    0.0
                } else {
                    const S: usize = 8;
                    let mut hit = 0;
                    for a in 0..S {
                        for b in 0..S {
                            let sx = x - 0.5 + (b as f64 + 0.5) / S as f64;
                            let sy = y - 0.5 + (a as f64 + 0.5) / S as f64;
                            if (sx - cx).powi(2) + (sy - cy).powi(2) <= radius * radius {
                                hit += 1;
                            }
                        }
                    }
                    hit as f64 / (S * S) as f64
                }
            }
        }
    }

    /// Distance from a pixel centre to the shape at time `t` (0 inside).
    fn distance(&self, t: f64, i: usize, j: usize) -> f64 {
        let [cx, cy] = self.centre(t);
        let (dx, dy) = (j as f64 - cx, i as f64 - cy);
        match self.kind {
            ShapeKind::Rect { width, height } => {
                let ex = (dx.abs() - width / 2.0).max(0.0);
                let ey = (dy.abs() - height / 2.0).max(0.0);
                (ex * ex + ey * ey).sqrt()
            }
            ShapeKind::Disk { radius } => ((dx * dx + dy * dy).sqrt() - radius).max(0.0),
        }
    }
}

/// A canvas, a flat background and shapes drawn in order (later on top).
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub background: [f64; 3],
    pub shapes: Vec<Shape>,
    pub seed: u64,
}

fn in_unit(c: &[f64; 3]) -> bool {
    c.iter().all(|v| (0.0..=1.0).contains(v))
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.frames == 0 {
            return Err(Error::InvalidConfig("canvas and frame count must be positive".into()));
        }
        if !in_unit(&self.background) {
            return Err(Error::InvalidConfig("background colour outside [0, 1]".into()));
        }
        for (k, s) in self.shapes.iter().enumerate() {
            if !in_unit(&s.color) {
                return Err(Error::InvalidConfig(format!("shape {k}: colour outside [0, 1]")));
            }
            let e = s.half_extent();
            if e.iter().any(|v| !(v.is_finite() && *v > 0.0)) || s.start.iter().chain(&s.velocity).any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("shape {k}: invalid geometry")));
            }
            for t in [0.0, (self.frames - 1) as f64] {
                let c = s.centre(t);
                let fits = |axis: usize, n: usize| c[axis] - e[axis] >= -0.5 && c[axis] + e[axis] <= n as f64 - 0.5;
                if !fits(0, self.width) || !fits(1, self.height) {
                    return Err(Error::InvalidConfig(format!("shape {k} leaves the canvas by frame {t}")));
                }
            }
        }
        Ok(())
    }

    /// A random spec: 1–3 rectangles or disks contrasting with the
    /// background, each moving at up to `max_speed` px/frame. With
    /// `integer_velocity` every velocity component is a whole number.
    pub fn random(rng: &mut ChaCha8Rng, width: usize, height: usize, frames: usize, max_speed: f64, integer_velocity: bool) -> Result<Self> {
        let background = [0; 3].map(|_| rng.random_range(0.1..0.9));
        let n = rng.random_range(1..=3);
        let mut shapes = Vec::with_capacity(n);
        let span = (frames.max(1) - 1) as f64;
        for _ in 0..n {
            let kind = if rng.random_bool(0.6) {
                ShapeKind::Rect {
                    width: rng.random_range(6.0..16.0),
                    height: rng.random_range(6.0..16.0),
                }
            } else {
                ShapeKind::Disk {
                    radius: rng.random_range(3.0..8.0),
                }
            };
            let color = loop {
                let c: [f64; 3] = [0; 3].map(|_| rng.random_range(0.0..1.0));
                if c.iter().zip(&background).any(|(a, b)| (a - b).abs() > 0.3) {
                    break c;
                }
            };
            let speed = rng.random_range(0.0..=max_speed);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let mut v = [speed * angle.cos(), speed * angle.sin()];
            if integer_velocity {
                v = v.map(|c| c.round().clamp(-max_speed.floor(), max_speed.floor()));
            }
            let mut shape = Shape {
                kind,
                color,
                start: [0.0; 2],
                velocity: v,
            };
            let e = shape.half_extent();
            let dims = [width as f64, height as f64];
            // shrink the motion until the whole path fits on the canvas
            let start = loop {
                let range = |a: usize| {
                    let travel = shape.velocity[a] * span;
                    (e[a] - 0.5 - travel.min(0.0), dims[a] - 0.5 - e[a] - travel.max(0.0))
                };
                let (rx, ry) = (range(0), range(1));
                if rx.0 <= rx.1 && ry.0 <= ry.1 {
                    break [rng.random_range(rx.0..=rx.1), rng.random_range(ry.0..=ry.1)];
                }
                if shape.velocity == [0.0, 0.0] {
                    return Err(Error::InvalidConfig(format!("canvas {width}x{height} too small for shapes")));
                }
                shape.velocity = shape.velocity.map(|c| {
                    let s = c * 0.8;
                    if integer_velocity { s.trunc() } else { s }
                });
            };
            shape.start = start;
            shapes.push(shape);
        }
        let spec = SynthSpec {
            width,
            height,
            frames,
            background,
            shapes,
            seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// One square of side `size` moving at `velocity`, centred on the canvas at the middle frame.
    pub fn translating_square(width: usize, height: usize, frames: usize, size: f64, velocity: [f64; 2]) -> Result<Self> {
        let mid = (frames.max(1) - 1) as f64 / 2.0;
        let spec = SynthSpec {
            width,
            height,
            frames,
            background: [0.2, 0.3, 0.4],
            shapes: vec![Shape {
                kind: ShapeKind::Rect { width: size, height: size },
                color: [0.9, 0.8, 0.1],
                start: [
                    (width as f64 - 1.0) / 2.0 - mid * velocity[0],
                    (height as f64 - 1.0) / 2.0 - mid * velocity[1],
                ],
                velocity,
            }],
            seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Renders the scene at (possibly fractional) time `t` as `[3, H, W]`.
    pub fn render(&self, t: f64) -> Tensor {
        let (h, w) = (self.height, self.width);
        let n = h * w;
        let mut px: Vec<[f64; 3]> = vec![self.background; n];
        for s in &self.shapes {
            let [cx, cy] = s.centre(t);
            let e = s.half_extent();
            let (i0, i1) = pixel_range(cy, e[1] + 1.0, h);
            let (j0, j1) = pixel_range(cx, e[0] + 1.0, w);
            for i in i0..i1 {
                for j in j0..j1 {
                    let c = s.coverage(t, i, j);
                    if c > 0.0 {
                        let p = &mut px[i * w + j];
                        for k in 0..3 {
                            p[k] = p[k] * (1.0 - c) + s.color[k] * c;
                        }
                    }
                }
            }
        }
        let mut data = vec![0.0; 3 * n];
        for (k, p) in px.iter().enumerate() {
            for c in 0..3 {
                data[c * n + k] = p[c];
            }
        }
        Tensor::from_vec(&[3, h, w], data).expect("canvas extents are positive")
    }

    /// Per-shape masks of pixels within [`FLOW_DILATION`] of the region swept
    /// between `t0` and `t1`.
    fn footprints(&self, t0: f64, t1: f64) -> Vec<Vec<bool>> {
        let (h, w) = (self.height, self.width);
        self.shapes
            .iter()
            .map(|s| {
                let travel = (t1 - t0).abs() * s.velocity[0].hypot(s.velocity[1]);
                let steps = (travel / 0.25).ceil() as usize + 1;
                let mut m = vec![false; h * w];
                let e = s.half_extent();
                for k in 0..=steps {
                    let t = t0 + (t1 - t0) * k as f64 / steps as f64;
                    let [cx, cy] = s.centre(t);
                    let (i0, i1) = pixel_range(cy, e[1] + FLOW_DILATION + 1.0, h);
                    let (j0, j1) = pixel_range(cx, e[0] + FLOW_DILATION + 1.0, w);
                    for i in i0..i1 {
                        for j in j0..j1 {
                            if s.distance(t, i, j) <= FLOW_DILATION {
                                m[i * w + j] = true;
                            }
                        }
                    }
                }
                m
            })
            .collect()
    }

    /// Displacement between times `t0` and `t1`: `(t1 − t0)·v` on each
    /// shape's dilated swept region (topmost shape wins), zero elsewhere.
    pub fn flow_between(&self, t0: f64, t1: f64) -> FlowField {
        let mut f = FlowField::zeros(self.width, self.height);
        for (s, m) in self.shapes.iter().zip(self.footprints(t0, t1)) {
            let d = [(t1 - t0) * s.velocity[0], (t1 - t0) * s.velocity[1]];
            for (v, _) in f.vectors.iter_mut().zip(&m).filter(|(_, &hit)| hit) {
                *v = d;
            }
        }
        f
    }

    /// Pixels whose midpoint reconstruction from `t0` and `t1` involves at
    /// most one shape, with both displaced reads inside the canvas.
    fn interior_mask(&self, t0: f64, t1: f64, flow: &FlowField) -> Vec<bool> {
        let (h, w) = (self.height, self.width);
        let fp = self.footprints(t0, t1);
        let owner = |p: usize| fp.iter().rposition(|m| m[p]);
        let others = |p: usize, own: Option<usize>| fp.iter().enumerate().any(|(k, m)| m[p] && Some(k) != own);
        let mut out = vec![false; h * w];
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                let own = owner(p);
                let [dx, dy] = flow.at(i, j);
                let ok = [-0.5, 0.5].iter().all(|&s| {
                    let (y, x) = (i as f64 + s * dy, j as f64 + s * dx);
                    if y < 0.0 || x < 0.0 || y > (h - 1) as f64 || x > (w - 1) as f64 {
                        return false;
                    }
                    [(y.floor(), x.floor()), (y.ceil(), x.ceil()), (y.floor(), x.ceil()), (y.ceil(), x.floor())]
                        .iter()
                        .all(|&(yy, xx)| !others(yy as usize * w + xx as usize, own))
                });
                out[p] = ok && !others(p, own);
            }
        }
        out
    }

    fn foreground_mask(&self, t: f64) -> Vec<bool> {
        let (h, w) = (self.height, self.width);
        let mut out = vec![false; h * w];
        for s in &self.shapes {
            for i in 0..h {
                for j in 0..w {
                    if s.coverage(t, i, j) >= 0.5 {
                        out[i * w + j] = true;
                    }
                }
            }
        }
        out
    }
}

fn pixel_range(c: f64, r: f64, n: usize) -> (usize, usize) {
    let lo = (c - r).floor().max(0.0) as usize;
    let hi = ((c + r).ceil() + 1.0).clamp(0.0, n as f64) as usize;
    (lo.min(n), hi)
}

/// A rendered sequence together with its scene description.
#[derive(Clone, Debug)]
pub struct SynthSequence {
    pub spec: SynthSpec,
    pub frames: Vec<Tensor>,
}

impl SynthSequence {
    /// Flow from frame `k` to `k + 1` for every consecutive pair.
    pub fn flows(&self) -> Vec<FlowField> {
        (1..self.frames.len())
            .map(|k| self.spec.flow_between((k - 1) as f64, k as f64))
            .collect()
    }

    /// Every consecutive triplet, carrying the flow from its first to its
    /// last frame plus interior and foreground masks.
    pub fn triplets(&self) -> Vec<FrameTriplet> {
        (0..self.frames.len().saturating_sub(2))
            .map(|k| {
                let (t0, t1) = (k as f64, (k + 2) as f64);
                let flow = self.spec.flow_between(t0, t1);
                let interior = self.spec.interior_mask(t0, t1, &flow);
                FrameTriplet {
                    first: self.frames[k].clone(),
                    middle: self.frames[k + 1].clone(),
                    second: self.frames[k + 2].clone(),
                    flow: Some(flow),
                    interior: Some(interior),
                    foreground: Some(self.spec.foreground_mask((k + 1) as f64)),
                }
            })
            .collect()
    }
}

/// Renders every frame of `spec`.
pub fn synth_sequence(spec: &SynthSpec) -> Result<SynthSequence> {
    spec.validate()?;
    Ok(SynthSequence {
        spec: spec.clone(),
        frames: (0..spec.frames).map(|t| spec.render(t as f64)).collect(),
    })
}

/// Settings for a whole random dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthDatasetSpec {
    pub width: usize,
    pub height: usize,
    pub sequences: usize,
    pub frames: usize,
    pub max_speed: f64,
    pub integer_velocity: bool,
    pub seed: u64,
}

impl Default for SynthDatasetSpec {
    fn default() -> Self {
        SynthDatasetSpec {
            width: 64,
            height: 64,
            sequences: 250,
            frames: 4,
            max_speed: 6.0,
            integer_velocity: false,
            seed: 0,
        }
    }
}

impl SynthDatasetSpec {
    pub fn generate(&self) -> Result<Vec<SynthSequence>> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.sequences)
            .map(|k| {
                let mut spec = SynthSpec::random(&mut rng, self.width, self.height, self.frames, self.max_speed, self.integer_velocity)?;
                spec.seed = self.seed.wrapping_add(k as u64);
                synth_sequence(&spec)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::warp_middle;

    #[test]
    fn square_flow_inside_and_outside() {
        let spec = SynthSpec::translating_square(32, 32, 3, 8.0, [2.0, 0.0]).unwrap();
        let f = spec.flow_between(0.0, 1.0);
        let c = spec.shapes[0].centre(0.0);
        assert_eq!(f.at(c[1] as usize, c[0] as usize), [2.0, 0.0]);
        assert_eq!(f.at(0, 0), [0.0, 0.0]);
    }

    #[test]
    fn middle_frame_is_render_at_midpoint() {
        let spec = SynthSpec::translating_square(24, 24, 5, 6.0, [1.0, -1.0]).unwrap();
        let seq = synth_sequence(&spec).unwrap();
        let trips = seq.triplets();
        assert_eq!(trips.len(), 3);
        assert_eq!(trips[1].middle, spec.render(2.0));
    }

    #[test]
    fn integer_shift_renders_shift_exactly() {
        let spec = SynthSpec::translating_square(20, 20, 3, 5.3, [3.0, 0.0]).unwrap();
        let a = spec.render(0.0);
        let b = spec.render(1.0);
        for c in 0..3 {
            for i in 0..20 {
                for j in 3..20 {
                    let x = a.get(&[c, i, j - 3]).unwrap();
                    let y = b.get(&[c, i, j]).unwrap();
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn exact_flow_warps_to_middle() {
        let ds = SynthDatasetSpec {
            width: 40,
            height: 40,
            sequences: 6,
            frames: 3,
            max_speed: 3.0,
            integer_velocity: true,
            seed: 5,
        };
        for seq in ds.generate().unwrap() {
            for t in seq.triplets() {
                let w = warp_middle(&t.first, &t.second, t.flow.as_ref().unwrap()).unwrap();
                let m = t.interior.as_ref().unwrap();
                assert!(m.iter().filter(|&&b| b).count() > 40 * 40 / 2);
                for c in 0..3 {
                    for (k, _) in m.iter().enumerate().filter(|(_, &b)| b) {
                        let d = w.data()[c * 1600 + k] - t.middle.data()[c * 1600 + k];
                        assert!(d.abs() < 1e-9, "{d}");
                    }
                }
            }
        }
    }

    #[test]
    fn shapes_must_stay_on_canvas() {
        let mut spec = SynthSpec::translating_square(16, 16, 3, 4.0, [1.0, 0.0]).unwrap();
        spec.shapes[0].velocity = [10.0, 0.0];
        assert!(synth_sequence(&spec).is_err());
    }

    #[test]
    fn random_specs_are_deterministic_and_valid() {
        let ds = SynthDatasetSpec {
            sequences: 5,
            ..Default::default()
        };
        let a = ds.generate().unwrap();
        let b = ds.generate().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.spec, y.spec);
            for s in &x.spec.shapes {
                assert!(s.velocity[0].hypot(s.velocity[1]) <= 6.0 + 1e-12);
            }
        }
    }
}
