//! Central finite-difference checks of the tape's analytic gradients.
//!
//! The numerical side only ever evaluates forward passes, so it stays
//! independent of the backward rules it validates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub op: String,
    /// Largest `|analytic − numeric| / max(1, |analytic|)` over all checked inputs.
    pub max_rel_error: f64,
    pub elements: usize,
}

/// Compares tape gradients of a scalar function against central differences
/// for every element of every input. Returns the max relative error per input.
pub fn check_gradients<F>(inputs: &[Tensor], eps: f64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = inputs.iter().map(|t| tape.leaf(t.clone())).collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs = perturbed.iter().map(|x| t.constant(x.clone())).collect::<Result<Vec<_>>>()?;
        let out = f(&mut t, &vs)?;
        t.value(out)?.item()
    };

    let mut errors = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = match tape.grad(*var)? {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; inputs[k].len()],
        };
        let mut worst: f64 = 0.0;
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + eps;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - eps;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
            worst = worst.max(rel);
        }
        errors.push(worst);
    }
    Ok(errors)
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("valid shape")
}

/// Flow components in `(-1.4, 1.4)` kept at least `1e-3` away from integers,
/// where bilinear sampling is not differentiable.
pub fn non_integer_flow(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = rng.random_range(-1.4..1.4);
            if (v - v.round()).abs() >= 1e-3 {
                break v;
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("valid shape")
}

/// Reduces an arbitrary output to a scalar through a fixed random projection.
fn project(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone())?;
    let m = tape.mul(out, w)?;
    tape.sum(m)
}

fn report(op: &str, inputs: &[Tensor], errors: Vec<f64>) -> GradCheckReport {
    GradCheckReport {
        op: op.to_string(),
        max_rel_error: errors.into_iter().fold(0.0, f64::max),
        elements: inputs.iter().map(Tensor::len).sum(),
    }
}

/// Runs the standard suite: elementwise ops, convolution, transposed
/// convolution, the displacement layer (input, weight, bias and flow
/// gradients reported separately), dense and pooling composites.
pub fn standard_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    const EPS: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();

    {
        let a = uniform(&mut rng, &[8], -1.0, 1.0);
        let b = uniform(&mut rng, &[8], 0.5, 1.5);
        let inputs = vec![a, b];
        let errs = check_gradients(&inputs, EPS, |t, v| {
            let s = t.add(v[0], v[1])?;
            let d = t.sub(s, v[1])?;
            let m = t.mul(d, v[1])?;
            let th = t.tanh(m)?;
            let sg = t.sigmoid(v[0])?;
            let e = t.exp(sg)?;
            let q = t.square(th)?;
            let l = t.log(v[1])?;
            let sc = t.scale(l, 0.3)?;
            let x1 = t.add(q, e)?;
            let x2 = t.add(x1, sc)?;
            t.sum(x2)
        })?;
        reports.push(report("elementwise", &inputs, errs));
    }

    {
        let x = uniform(&mut rng, &[1, 4, 4], -1.0, 1.0);
        let w = uniform(&mut rng, &[2, 1, 3, 3], -1.0, 1.0);
        let b = uniform(&mut rng, &[2], -1.0, 1.0);
        let proj = uniform(&mut rng, &[2, 4, 4], -1.0, 1.0);
        let inputs = vec![x, w, b];
        let errs = check_gradients(&inputs, EPS, |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], 1, 1)?;
            project(t, y, &proj)
        })?;
        reports.push(report("conv2d", &inputs, errs));
    }

    {
        let x = uniform(&mut rng, &[2, 2, 5, 5], -1.0, 1.0);
        let w = uniform(&mut rng, &[3, 2, 3, 3], -1.0, 1.0);
        let b = uniform(&mut rng, &[3], -1.0, 1.0);
        let proj = uniform(&mut rng, &[2, 3, 3, 3], -1.0, 1.0);
        let inputs = vec![x, w, b];
        let errs = check_gradients(&inputs, EPS, |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], 2, 1)?;
            project(t, y, &proj)
        })?;
        reports.push(report("conv2d_strided", &inputs, errs));
    }

    {
        let x = uniform(&mut rng, &[1, 2, 3, 3], -1.0, 1.0);
        let w = uniform(&mut rng, &[2, 3, 3, 3], -1.0, 1.0);
        let b = uniform(&mut rng, &[3], -1.0, 1.0);
        let proj = uniform(&mut rng, &[1, 3, 6, 6], -1.0, 1.0);
        let inputs = vec![x, w, b];
        let errs = check_gradients(&inputs, EPS, |t, v| {
            let y = t.conv_transpose2d(v[0], v[1], v[2], 2, 1, 1)?;
            project(t, y, &proj)
        })?;
        reports.push(report("transposed_conv2d", &inputs, errs));
    }

    {
        let x = uniform(&mut rng, &[1, 5, 5], -1.0, 1.0);
        let w = uniform(&mut rng, &[2, 1, 3, 3], -1.0, 1.0);
        let b = uniform(&mut rng, &[2], -1.0, 1.0);
        let flow = non_integer_flow(&mut rng, &[2, 5, 5]);
        let proj = uniform(&mut rng, &[2, 5, 5], -1.0, 1.0);
        let inputs = vec![x, w, b, flow];
        let errs = check_gradients(&inputs, EPS, |t, v| {
            let y = t.dcl(v[0], v[1], v[2], v[3])?;
            project(t, y, &proj)
        })?;
        let names = ["dcl_input", "dcl_weight", "dcl_bias", "dcl_flow"];
        for ((name, e), x) in names.iter().zip(errs).zip(&inputs) {
            reports.push(GradCheckReport {
                op: name.to_string(),
                max_rel_error: e,
                elements: x.len(),
            });
        }
    }

    {
        // conv -> relu -> pool -> flatten -> dense -> sigmoid
        let x = uniform(&mut rng, &[1, 1, 4, 4], -1.0, 1.0);
        let w = uniform(&mut rng, &[2, 1, 3, 3], -1.0, 1.0);
        let b = uniform(&mut rng, &[2], 0.1, 0.5);
        let dw = uniform(&mut rng, &[3, 8], -1.0, 1.0);
        let db = uniform(&mut rng, &[3], -1.0, 1.0);
        let proj = uniform(&mut rng, &[1, 3], -1.0, 1.0);
        let inputs = vec![x, w, b, dw, db];
        let errs = check_gradients(&inputs, EPS, |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], 1, 1)?;
            let y = t.relu(y)?;
            let y = t.maxpool2d(y)?;
            let y = t.reshape(y, &[1, 8])?;
            let y = t.dense(y, v[3], v[4])?;
            let y = t.sigmoid(y)?;
            project(t, y, &proj)
        })?;
        reports.push(report("dense_pool_composite", &inputs, errs));
    }

    Ok(reports)
}
