//! Image quality metrics: mean squared error, PSNR and SSIM.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::{ensure_same_shape, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Mean of squared differences over all elements.
pub fn mse_metric(a: &Tensor, b: &Tensor) -> Result<f64> {
    ensure_same_shape("mse_metric", a, b)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.len() as f64)
}

/// `10·log10(1 / mse)` for unit-range images; `+∞` when `mse == 0`.
pub fn psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// Single-plane view of an image: luma for 3 channels, the plane itself for 1.
fn gray(t: &Tensor) -> Result<(Vec<f64>, usize, usize)> {
    let (c, h, w) = match *t.shape() {
        [c, h, w] => (c, h, w),
        [h, w] => (1, h, w),
        _ => {
            return Err(Error::ShapeMismatch {
                op: "ssim",
                expected: vec![3, 0, 0],
                got: t.shape().to_vec(),
            })
        }
    };
    let n = h * w;
    let d = t.data();
    match c {
        1 => Ok((d.to_vec(), h, w)),
        3 => Ok(((0..n).map(|k| LUMA[0] * d[k] + LUMA[1] * d[n + k] + LUMA[2] * d[2 * n + k]).collect(), h, w)),
        _ => Err(Error::InvalidArgument(format!("ssim needs 1 or 3 channels, got {c}"))),
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Separable Gaussian filter over valid positions only.
fn filter_valid(x: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = (0..SSIM_WINDOW).map(|k| g[k] * x[i * w + j + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(i + k) * ow + j]).sum();
        }
    }
    out
}

/// Gaussian-window SSIM (11×11, σ = 1.5, K1 = 0.01, K2 = 0.03, range 1) on
/// the luma plane, averaged over valid window positions.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    ensure_same_shape("ssim", a, b)?;
    let (x, h, w) = gray(a)?;
    let (y, _, _) = gray(b)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let g = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter_valid(&x, h, w, &g);
    let my = filter_valid(&y, h, w, &g);
    let mxx = filter_valid(&prod(&x, &x), h, w, &g);
    let myy = filter_valid(&prod(&y, &y), h, w, &g);
    let mxy = filter_valid(&prod(&x, &y), h, w, &g);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|k| {
            let (ux, uy) = (mx[k], my[k]);
            let vx = mxx[k] - ux * ux;
            let vy = myy[k] - uy * uy;
            let cxy = mxy[k] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Aggregate metrics over a set of predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Mean of per-image MSE.
    pub mse: f64,
    /// PSNR of the mean MSE.
    pub psnr: f64,
    pub ssim: f64,
    pub count: usize,
    /// Mean per-image PSNR over images with nonzero error.
    pub mean_image_psnr: f64,
    /// Images reproduced exactly (infinite PSNR), left out of `mean_image_psnr`.
    pub exact_matches: usize,
}

impl EvalReport {
    /// Tab-separated table row with a header line.
    pub fn table(rows: &[(&str, &EvalReport)]) -> String {
        let mut s = String::from("method\tMSE\tPSNR\tSSIM\n");
        for (name, r) in rows {
            writeln!(s, "{name}\t{:.6}\t{:.3}\t{:.4}", r.mse, r.psnr, r.ssim).expect("string write");
        }
        s
    }

    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> String {
        format!(
            "mse={}\npsnr={}\nssim={}\ncount={}\nmean_image_psnr={}\nexact_matches={}\n\
             psnr_convention=mean_mse_then_log\nssim_variant=gaussian11_sigma1.5_k0.01_0.03_luma\n",
            self.mse, self.psnr, self.ssim, self.count, self.mean_image_psnr, self.exact_matches
        )
    }
}

/// Averages MSE and SSIM over paired images and derives PSNR from the mean MSE.
pub fn evaluate(predictions: &[Tensor], truths: &[Tensor]) -> Result<EvalReport> {
    evaluate_jobs(predictions, truths, 1)
}

/// [`evaluate`] with per-image metrics computed on up to `jobs` threads.
/// The reduction runs in input order, so the report does not depend on `jobs`.
pub fn evaluate_jobs(predictions: &[Tensor], truths: &[Tensor], jobs: usize) -> Result<EvalReport> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} ground-truth frames",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("nothing to evaluate".into()));
    }
    let n = predictions.len();
    let chunk = n.div_ceil(jobs.clamp(1, n));
    let per_image: Vec<(f64, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = predictions
            .chunks(chunk)
            .zip(truths.chunks(chunk))
            .map(|(ps, ts)| {
                s.spawn(move || {
                    ps.iter()
                        .zip(ts)
                        .map(|(p, t)| Ok((mse_metric(p, t)?, ssim(p, t)?)))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("metric worker panicked"))
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().flatten().collect())
    })?;
    let mut mse_sum = 0.0;
    let mut ssim_sum = 0.0;
    let mut psnr_sum = 0.0;
    let mut exact = 0;
    for &(m, s) in &per_image {
        mse_sum += m;
        ssim_sum += s;
        if m == 0.0 {
            exact += 1;
        } else {
            psnr_sum += psnr(m);
        }
    }
    let mse = mse_sum / n as f64;
    Ok(EvalReport {
        mse,
        psnr: psnr(mse),
        ssim: ssim_sum / n as f64,
        count: n,
        mean_image_psnr: if exact == n { f64::INFINITY } else { psnr_sum / (n - exact) as f64 },
        exact_matches: exact,
    })
}

/// Sum of squared forward differences along both axes, per pixel and channel.
/// Lower values mean a smoother (blurrier) image.
pub fn gradient_energy(image: &Tensor) -> Result<f64> {
    let (c, h, w) = match *image.shape() {
        [c, h, w] => (c, h, w),
        _ => {
            return Err(Error::ShapeMismatch {
                op: "gradient_energy",
                expected: vec![3, 0, 0],
                got: image.shape().to_vec(),
            })
        }
    };
    let d = image.data();
    let mut e = 0.0;
    for ch in 0..c {
        let p = &d[ch * h * w..(ch + 1) * h * w];
        for i in 0..h {
            for j in 0..w {
                if j + 1 < w {
                    e += (p[i * w + j + 1] - p[i * w + j]).powi(2);
                }
                if i + 1 < h {
                    e += (p[(i + 1) * w + j] - p[i * w + j]).powi(2);
                }
            }
        }
    }
    Ok(e / (c * h * w) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(h: usize, w: usize, invert: bool) -> Tensor {
        Tensor::from_vec(
            &[1, h, w],
            (0..h * w)
                .map(|k| if (k / w + k % w).is_multiple_of(2) ^ invert { 1.0 } else { 0.0 })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn mse_cases() {
        let z = Tensor::zeros(&[3, 2, 2]).unwrap();
        let o = Tensor::full(&[3, 2, 2], 1.0).unwrap();
        assert_eq!(mse_metric(&z, &z).unwrap(), 0.0);
        assert_eq!(mse_metric(&z, &o).unwrap(), 1.0);
        let c = checker(4, 4, false);
        assert_eq!(mse_metric(&c, &checker(4, 4, true)).unwrap(), 1.0);
        assert_eq!(mse_metric(&c, &Tensor::full(&[1, 4, 4], 0.5).unwrap()).unwrap(), 0.25);
        assert!(mse_metric(&z, &c).is_err());
    }

    #[test]
    fn psnr_values() {
        assert_eq!(psnr(0.0), f64::INFINITY);
        assert!((psnr(0.01) - 20.0).abs() < 1e-12);
        assert!((psnr(0.0079) - 21.0).abs() < 0.05);
    }

    #[test]
    fn ssim_identity_symmetry_and_constants() {
        let a = Tensor::from_vec(&[3, 12, 13], (0..3 * 12 * 13).map(|k| ((k as f64) * 0.77).sin() * 0.5 + 0.5).collect()).unwrap();
        let b = a.map(|v| (v * 0.8 + 0.05).min(1.0));
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!(ssim(&a, &b).unwrap() < 1.0);

        let c1 = Tensor::full(&[1, 11, 11], 0.5).unwrap();
        let c2 = Tensor::full(&[1, 11, 11], 0.6).unwrap();
        let k1 = SSIM_K1 * SSIM_K1;
        let expect = (2.0 * 0.5 * 0.6 + k1) / (0.25 + 0.36 + k1);
        assert!((ssim(&c1, &c2).unwrap() - expect).abs() < 1e-9);
        assert!((expect - 0.983609).abs() < 1e-6);

        let small = Tensor::zeros(&[1, 10, 20]).unwrap();
        assert!(ssim(&small, &small).is_err());
    }

    #[test]
    fn evaluate_aggregation() {
        let t = Tensor::full(&[1, 11, 11], 0.3).unwrap();
        let p = Tensor::full(&[1, 11, 11], 0.4).unwrap();
        let single = evaluate(std::slice::from_ref(&p), std::slice::from_ref(&t)).unwrap();
        assert!((single.mse - mse_metric(&p, &t).unwrap()).abs() < 1e-15);
        assert_eq!(single.psnr, psnr(single.mse));
        assert_eq!(single.ssim, ssim(&p, &t).unwrap());

        let dup = evaluate(&[p.clone(), p.clone()], &[t.clone(), t.clone()]).unwrap();
        assert_eq!(dup.mse, single.mse);
        assert_eq!(dup.ssim, single.ssim);

        // one exact reproduction and one image with MSE 0.01
        let r = evaluate(&[t.clone(), p], &[t.clone(), t]).unwrap();
        assert!((r.mse - 0.005).abs() < 1e-12);
        assert!((r.psnr - psnr(0.005)).abs() < 1e-9);
        assert_eq!(r.exact_matches, 1);
        assert!((r.mean_image_psnr - 20.0).abs() < 1e-9);
        assert!(evaluate(&[], &[]).is_err());

        let many: Vec<Tensor> = (0..7).map(|k| Tensor::full(&[1, 11, 11], k as f64 / 10.0).unwrap()).collect();
        let truth = vec![Tensor::full(&[1, 11, 11], 0.35).unwrap(); 7];
        assert_eq!(evaluate(&many, &truth).unwrap(), evaluate_jobs(&many, &truth, 3).unwrap());
    }

    #[test]
    fn gradient_energy_of_flat_and_edge() {
        assert_eq!(gradient_energy(&Tensor::full(&[3, 4, 4], 0.7).unwrap()).unwrap(), 0.0);
        let mut e = Tensor::zeros(&[1, 2, 2]).unwrap();
        e.set(&[0, 0, 1], 1.0).unwrap();
        assert_eq!(gradient_energy(&e).unwrap(), 0.5);
    }
}
