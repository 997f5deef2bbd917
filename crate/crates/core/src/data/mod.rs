//! Frame triplets, dataset manifests, splitting, image files and the
//! synthetic shape generator.
//!
//! A manifest is a text file with one frame path per line. Blank lines
//! separate independent sequences; triplets never span a separator. Lines
//! starting with `#` are ignored and relative paths are resolved against the
//! manifest's directory. An optional flow manifest lists, in the same
//! layout, the `.flo` file for frames `k → k + 1` of each sequence (one fewer
//! entry per sequence than frames).

mod image;
mod synth;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use image::{decode_ppm, encode_ppm, image_extent, load_image, save_image, side_by_side};
pub use synth::{synth_sequence, Shape, ShapeKind, SynthDatasetSpec, SynthSequence, SynthSpec, FLOW_DILATION};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::sampling::Stencil;
use crate::tensor::Tensor;

/// First frame, ground-truth middle frame and second frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTriplet {
    pub first: Tensor,
    pub middle: Tensor,
    pub second: Tensor,
    /// Flow from `first` to `second`.
    pub flow: Option<FlowField>,
    /// Pixels where the exact flow reconstructs the middle frame (synthetic data only).
    pub interior: Option<Vec<bool>>,
    /// Pixels covered by a moving shape in the middle frame (synthetic data only).
    pub foreground: Option<Vec<bool>>,
}

impl FrameTriplet {
    pub fn new(first: Tensor, middle: Tensor, second: Tensor, flow: Option<FlowField>) -> Result<Self> {
        crate::tensor::ensure_same_shape("triplet", &first, &middle)?;
        crate::tensor::ensure_same_shape("triplet", &first, &second)?;
        if let [_, h, w] = *first.shape() {
            if let Some(f) = &flow {
                if (f.height, f.width) != (h, w) {
                    return Err(Error::ShapeMismatch {
                        op: "triplet flow",
                        expected: vec![h, w],
                        got: vec![f.height, f.width],
                    });
                }
            }
        } else {
            return Err(Error::ShapeMismatch {
                op: "triplet",
                expected: vec![3, 0, 0],
                got: first.shape().to_vec(),
            });
        }
        Ok(FrameTriplet {
            first,
            middle,
            second,
            flow,
            interior: None,
            foreground: None,
        })
    }

    /// `(height, width)`.
    pub fn extent(&self) -> (usize, usize) {
        (self.first.shape()[1], self.first.shape()[2])
    }
}

fn check_count(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 frames for a triplet, got {n}")));
    }
    Ok(())
}

/// Every window `(k, k+1, k+2)` of an in-memory sequence: `N − 2` triplets.
pub fn extract_triplets(frames: &[Tensor]) -> Result<Vec<FrameTriplet>> {
    check_count(frames.len())?;
    frames
        .windows(3)
        .map(|w| FrameTriplet::new(w[0].clone(), w[1].clone(), w[2].clone(), None))
        .collect()
}

/// Triplets over an ordered list of frame files, loaded on demand.
#[derive(Clone, Debug)]
pub struct TripletStream {
    paths: Vec<PathBuf>,
    extent: (usize, usize),
}

impl TripletStream {
    /// Checks the frame count and that all frames share one extent (read from
    /// file headers only).
    pub fn new(paths: Vec<PathBuf>) -> Result<Self> {
        check_count(paths.len())?;
        let mut seen: HashMap<&Path, (usize, usize)> = HashMap::new();
        let mut extent = None;
        for p in &paths {
            let e = match seen.get(p.as_path()) {
                Some(&e) => e,
                None => {
                    let e = image_extent(p)?;
                    seen.insert(p, e);
                    e
                }
            };
            match extent {
                None => extent = Some(e),
                Some(first) if first != e => {
                    return Err(Error::InvalidArgument(format!(
                        "{}: extent {}x{} differs from the first frame's {}x{}",
                        p.display(),
                        e.1,
                        e.0,
                        first.1,
                        first.0
                    )))
                }
                _ => {}
            }
        }
        Ok(TripletStream {
            extent: extent.expect("at least three frames"),
            paths,
        })
    }

    pub fn len(&self) -> usize {
        self.paths.len() - 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(height, width)` shared by all frames.
    pub fn extent(&self) -> (usize, usize) {
        self.extent
    }

    pub fn get(&self, k: usize) -> Result<FrameTriplet> {
        if k >= self.len() {
            return Err(Error::InvalidArgument(format!("triplet {k} out of range ({})", self.len())));
        }
        let load = |i: usize| load_image(&self.paths[k + i]);
        FrameTriplet::new(load(0)?, load(1)?, load(2)?, None)
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<FrameTriplet>> + '_ {
        (0..self.len()).map(|k| self.get(k))
    }
}

/// Reads a manifest into its sequences.
pub fn read_manifest(path: &Path) -> Result<Vec<Vec<PathBuf>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut seqs: Vec<Vec<PathBuf>> = vec![Vec::new()];
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !seqs.last().expect("non-empty").is_empty() {
                seqs.push(Vec::new());
            }
            continue;
        }
        seqs.last_mut().expect("non-empty").push(base.join(line));
    }
    seqs.retain(|s| !s.is_empty());
    if seqs.is_empty() {
        return Err(Error::InvalidArgument(format!("{}: manifest lists no frames", path.display())));
    }
    Ok(seqs)
}

/// Writes sequences as a manifest; paths under the manifest's directory are
/// stored relative to it.
pub fn write_manifest(path: &Path, sequences: &[Vec<PathBuf>]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = String::new();
    for (k, seq) in sequences.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for p in seq {
            let rel = p.strip_prefix(base).unwrap_or(p);
            out.push_str(&rel.to_string_lossy());
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Chains two flows: `F(x) = a(x) + b(x + a(x))`, sampling `b` bilinearly.
pub fn compose_flows(a: &FlowField, b: &FlowField) -> Result<FlowField> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::ShapeMismatch {
            op: "compose_flows",
            expected: vec![a.height, a.width],
            got: vec![b.height, b.width],
        });
    }
    let (h, w) = (a.height, a.width);
    let bt = b.to_tensor();
    let (bx, by) = bt.data().split_at(h * w);
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let [dx, dy] = a.at(i, j);
            let s = Stencil::new(i as f64 + dy, j as f64 + dx, h, w);
            out.push([dx + s.sample(bx, w), dy + s.sample(by, w)]);
        }
    }
    FlowField::new(w, h, out)
}

/// Loads all triplets listed by a frame manifest, attaching composed flows
/// when a flow manifest is given.
pub fn load_dataset(frames: &Path, flows: Option<&Path>) -> Result<Vec<FrameTriplet>> {
    let seqs = read_manifest(frames)?;
    let flow_seqs = flows.map(read_manifest).transpose()?;
    if let Some(fs) = &flow_seqs {
        if fs.len() != seqs.len() || fs.iter().zip(&seqs).any(|(f, s)| f.len() + 1 != s.len()) {
            return Err(Error::InvalidArgument(
                "flow manifest must list one flow per consecutive frame pair of each sequence".into(),
            ));
        }
    }
    let mut out = Vec::new();
    for (k, seq) in seqs.into_iter().enumerate() {
        let stream = TripletStream::new(seq)?;
        let fields = match &flow_seqs {
            Some(fs) => Some(fs[k].iter().map(|p| FlowField::load(p)).collect::<Result<Vec<_>>>()?),
            None => None,
        };
        for (t, trip) in stream.iter().enumerate() {
            let mut trip = trip?;
            if let Some(f) = &fields {
                let composed = compose_flows(&f[t], &f[t + 1])?;
                trip = FrameTriplet::new(trip.first, trip.middle, trip.second, Some(composed))?;
            }
            out.push(trip);
        }
    }
    Ok(out)
}

/// Writes sequences as PNG frames plus `.flo` files and the two manifests
/// `frames.txt` and `flows.txt` inside `dir`.
pub fn write_dataset(dir: &Path, sequences: &[SynthSequence]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut frame_lists = Vec::with_capacity(sequences.len());
    let mut flow_lists = Vec::with_capacity(sequences.len());
    for (s, seq) in sequences.iter().enumerate() {
        let mut frames = Vec::new();
        for (k, f) in seq.frames.iter().enumerate() {
            let p = dir.join(format!("s{s:04}_f{k:03}.png"));
            save_image(f, &p)?;
            frames.push(p);
        }
        let mut flows = Vec::new();
        for (k, f) in seq.flows().iter().enumerate() {
            let p = dir.join(format!("s{s:04}_f{k:03}.flo"));
            f.save(&p)?;
            flows.push(p);
        }
        frame_lists.push(frames);
        flow_lists.push(flows);
    }
    write_manifest(&dir.join("frames.txt"), &frame_lists)?;
    write_manifest(&dir.join("flows.txt"), &flow_lists)
}

/// Deterministic shuffled split; the first part gets `round(ratio · n)` items.
pub fn split_dataset<T>(mut items: Vec<T>, ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let k = (ratio * items.len() as f64).round() as usize;
    let eval = items.split_off(k);
    Ok((items, eval))
}
