//! Optical flow fields, the Middlebury `.flo` format, bilinear warping and
//! the two non-learned interpolation baselines.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampling::Stencil;
use crate::tensor::Tensor;

/// `.flo` magic number ("PIEH" read as a little-endian f32).
pub const FLO_MAGIC: f32 = 202021.25;

/// Per-pixel displacement: pixel `(i, j)` of frame 1 moves to
/// `(j + dx, i + dy)` in frame 2.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    /// Row-major `(dx, dy)` pairs.
    pub vectors: Vec<[f64; 2]>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            vectors: vec![[0.0; 2]; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, dx: f64, dy: f64) -> Self {
        FlowField {
            width,
            height,
            vectors: vec![[dx, dy]; width * height],
        }
    }

    pub fn new(width: usize, height: usize, vectors: Vec<[f64; 2]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("flow extent {width}x{height} must be positive")));
        }
        if vectors.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "flow {width}x{height} needs {} vectors, got {}",
                width * height,
                vectors.len()
            )));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "flow" });
        }
        Ok(FlowField { width, height, vectors })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> [f64; 2] {
        self.vectors[i * self.width + j]
    }

    /// `[2, H, W]` tensor, channel 0 = `dx`, channel 1 = `dy`.
    pub fn to_tensor(&self) -> Tensor {
        let n = self.width * self.height;
        let mut data = vec![0.0; 2 * n];
        for (k, v) in self.vectors.iter().enumerate() {
            data[k] = v[0];
            data[n + k] = v[1];
        }
        Tensor::from_vec(&[2, self.height, self.width], data).expect("flow extents are positive")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || s[0] != 2 {
            return Err(Error::ShapeMismatch {
                op: "flow_from_tensor",
                expected: vec![2, 0, 0],
                got: s.to_vec(),
            });
        }
        let (h, w) = (s[1], s[2]);
        let n = h * w;
        let d = t.data();
        FlowField::new(w, h, (0..n).map(|k| [d[k], d[n + k]]).collect())
    }

    pub fn scaled(&self, c: f64) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            vectors: self.vectors.iter().map(|v| [v[0] * c, v[1] * c]).collect(),
        }
    }

    pub fn write_flo(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&FLO_MAGIC.to_le_bytes())?;
        w.write_all(&(self.width as i32).to_le_bytes())?;
        w.write_all(&(self.height as i32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.vectors.len() * 8);
        for v in &self.vectors {
            buf.extend_from_slice(&(v[0] as f32).to_le_bytes());
            buf.extend_from_slice(&(v[1] as f32).to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_flo_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.vectors.len() * 8);
        self.write_flo(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_flo(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::format("flo", e.to_string()))?;
        Self::from_flo_bytes(&bytes)
    }

    pub fn from_flo_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::format("flo", "truncated header"));
        }
        let word = |k: usize| -> [u8; 4] { bytes[4 * k..4 * k + 4].try_into().expect("4 bytes") };
        let magic = f32::from_le_bytes(word(0));
        if magic != FLO_MAGIC {
            return Err(Error::format("flo", format!("bad magic {magic}")));
        }
        let w = i32::from_le_bytes(word(1));
        let h = i32::from_le_bytes(word(2));
        if w <= 0 || h <= 0 {
            return Err(Error::format("flo", format!("non-positive extent {w}x{h}")));
        }
        let (w, h) = (w as usize, h as usize);
        let need = w
            .checked_mul(h)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::format("flo", "extent overflow"))?;
        let payload = &bytes[12..];
        if payload.len() < need {
            return Err(Error::format("flo", format!("payload has {} bytes, need {need}", payload.len())));
        }
        if payload.len() > need {
            return Err(Error::format("flo", format!("{} trailing bytes", payload.len() - need)));
        }
        let vectors = payload
            .chunks_exact(8)
            .map(|c| {
                let u = f32::from_le_bytes(c[0..4].try_into().expect("4 bytes"));
                let v = f32::from_le_bytes(c[4..8].try_into().expect("4 bytes"));
                [u as f64, v as f64]
            })
            .collect();
        FlowField::new(w, h, vectors).map_err(|_| Error::format("flo", "non-finite flow value"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_flo_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_flo_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn image_dims(image: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::ShapeMismatch {
            op,
            expected: vec![3, 0, 0],
            got: image.shape().to_vec(),
        }),
    }
}

/// Samples every channel of a CHW image at real coordinates `(x, y)`,
/// clamped to the image first.
pub fn bilinear_sample(image: &Tensor, x: f64, y: f64) -> Result<Vec<f64>> {
    let (c, h, w) = image_dims(image, "bilinear_sample")?;
    let s = Stencil::new(y, x, h, w);
    Ok(image.data().chunks_exact(h * w).take(c).map(|plane| s.sample(plane, w)).collect())
}

/// Resamples a CHW image at `p + scale · F(p)` for every pixel `p`.
pub fn warp(image: &Tensor, flow: &FlowField, scale: f64) -> Result<Tensor> {
    let (c, h, w) = image_dims(image, "warp")?;
    if (flow.height, flow.width) != (h, w) {
        return Err(Error::ShapeMismatch {
            op: "warp",
            expected: vec![h, w],
            got: vec![flow.height, flow.width],
        });
    }
    let mut out = vec![0.0; c * h * w];
    for i in 0..h {
        for j in 0..w {
            let [dx, dy] = flow.at(i, j);
            let s = Stencil::new(i as f64 + scale * dy, j as f64 + scale * dx, h, w);
            for ch in 0..c {
                out[ch * h * w + i * w + j] = s.sample(&image.data()[ch * h * w..(ch + 1) * h * w], w);
            }
        }
    }
    Tensor::from_vec(image.shape(), out)
}

/// Symmetric midpoint warp `0.5·I1(p − F/2) + 0.5·I2(p + F/2)`, with `F` the
/// flow from frame 1 to frame 2.
pub fn warp_middle(first: &Tensor, second: &Tensor, flow: &FlowField) -> Result<Tensor> {
    crate::tensor::ensure_same_shape("warp_middle", first, second)?;
    let a = warp(first, flow, -0.5)?;
    let b = warp(second, flow, 0.5)?;
    a.zip_map(&b, "warp_middle", |x, y| 0.5 * x + 0.5 * y)
}

/// Pixelwise mean of two frames.
pub fn average_frames(first: &Tensor, second: &Tensor) -> Result<Tensor> {
    first.zip_map(second, "average_frames", |x, y| 0.5 * x + 0.5 * y)
}
