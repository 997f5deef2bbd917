//! Border-clamped bilinear sampling shared by the displacement layer and the
//! warping baselines.

/// Bilinear stencil for one real-valued coordinate pair on an `h × w` grid.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub y0: usize,
    pub x0: usize,
    pub y1: usize,
    pub x1: usize,
    pub wy: f64,
    pub wx: f64,
    /// The coordinate was inside the grid along this axis, so the sample
    /// varies with it. Clamped axes have zero derivative.
    pub free_y: bool,
    pub free_x: bool,
}

fn axis(v: f64, n: usize) -> (usize, usize, f64, bool) {
    let hi = (n - 1) as f64;
    let free = (0.0..=hi).contains(&v);
    let c = v.clamp(0.0, hi);
    let i0 = (c.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, c - i0 as f64, free)
}

impl Stencil {
    pub fn new(y: f64, x: f64, h: usize, w: usize) -> Self {
        let (y0, y1, wy, free_y) = axis(y, h);
        let (x0, x1, wx, free_x) = axis(x, w);
        Stencil {
            y0,
            x0,
            y1,
            x1,
            wy,
            wx,
            free_y,
            free_x,
        }
    }

    #[inline]
    pub fn sample(&self, plane: &[f64], w: usize) -> f64 {
        let a = plane[self.y0 * w + self.x0];
        let b = plane[self.y0 * w + self.x1];
        let c = plane[self.y1 * w + self.x0];
        let d = plane[self.y1 * w + self.x1];
        let top = a + (b - a) * self.wx;
        let bottom = c + (d - c) * self.wx;
        top + (bottom - top) * self.wy
    }

    /// Partial derivatives of [`Stencil::sample`] with respect to (y, x).
    #[inline]
    pub fn gradient(&self, plane: &[f64], w: usize) -> (f64, f64) {
        let a = plane[self.y0 * w + self.x0];
        let b = plane[self.y0 * w + self.x1];
        let c = plane[self.y1 * w + self.x0];
        let d = plane[self.y1 * w + self.x1];
        let dy = if self.free_y && self.y1 != self.y0 {
            (1.0 - self.wx) * (c - a) + self.wx * (d - b)
        } else {
            0.0
        };
        let dx = if self.free_x && self.x1 != self.x0 {
            (1.0 - self.wy) * (b - a) + self.wy * (d - c)
        } else {
            0.0
        };
        (dy, dx)
    }

    /// Accumulates `g` into `plane` with the bilinear weights (adjoint of sampling).
    #[inline]
    pub fn scatter(&self, plane: &mut [f64], w: usize, g: f64) {
        let (wy, wx) = (self.wy, self.wx);
        plane[self.y0 * w + self.x0] += g * (1.0 - wy) * (1.0 - wx);
        plane[self.y0 * w + self.x1] += g * (1.0 - wy) * wx;
        plane[self.y1 * w + self.x0] += g * wy * (1.0 - wx);
        plane[self.y1 * w + self.x1] += g * wy * wx;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_points_are_exact() {
        let plane: Vec<f64> = (0..12).map(|v| v as f64 * 0.7).collect();
        for y in 0..3 {
            for x in 0..4 {
                let s = Stencil::new(y as f64, x as f64, 3, 4);
                assert_eq!(s.sample(&plane, 4), plane[y * 4 + x]);
            }
        }
    }

    #[test]
    fn clamping_zeroes_the_axis_derivative() {
        let plane = [0.0, 1.0, 2.0, 3.0];
        let s = Stencil::new(0.0, -3.0, 1, 4);
        assert_eq!(s.sample(&plane, 4), 0.0);
        assert_eq!(s.gradient(&plane, 4), (0.0, 0.0));
        let s = Stencil::new(0.0, 1.25, 1, 4);
        assert!((s.sample(&plane, 4) - 1.25).abs() < 1e-15);
        assert_eq!(s.gradient(&plane, 4).1, 1.0);
    }
}
