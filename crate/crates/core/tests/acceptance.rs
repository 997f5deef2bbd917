//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use deepframe::data::{
    extract_triplets, read_manifest, save_image, split_dataset, synth_sequence, write_manifest, SynthDatasetSpec,
    SynthSpec, TripletStream,
};
use deepframe::flow::{average_frames, warp_middle, FlowField};
use deepframe::gradcheck::standard_suite;
use deepframe::layers::{conv2d_forward, dcl_forward, ConvParams, DclParams};
use deepframe::metrics::{evaluate, gradient_energy, psnr};
use deepframe::networks::{build_generator, FlowMode, GeneratorConfig, FLOW_PREFIX};
use deepframe::training::{
    alpha_schedule, train_adversarial, train_joint_implicit_flow, train_mse, Objective, TrainConfig, TrainOutcome, Trainer,
};
use deepframe::{Checkpoint, FrameTriplet, Model, Tensor};

// Fixed training budget for the desk-scale runs (criteria 6 to 8).
const DATA_SEED: u64 = 2024;
const SPLIT_SEED: u64 = 7;
const NOISE_SEED: u64 = 11;
const TRAIN_SEED: u64 = 1;
const FLOW_PRIOR_STEPS: u64 = 8000;
const FLOW_PRIOR_GAMMA: f64 = 1e-4;
const FLOW_PRIOR_LR: f64 = 3e-3;
const MSE_STEPS: u64 = 1500;
const MSE_LR: f64 = 1e-3;
const ADV_STEPS: u64 = 3000;
const ADV_GAMMA: f64 = 1e-3;
const ADV_LR: f64 = 1e-3;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn timed(limit: Duration, f: impl FnOnce() -> Verdict) -> Verdict {
    let t0 = Instant::now();
    let mut v = f();
    let took = t0.elapsed();
    if took > limit {
        v.pass = false;
    }
    v.detail = format!("{} ({:.1}s, limit {}s)", v.detail, took.as_secs_f64(), limit.as_secs());
    v
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn table_identities() -> Verdict {
    let rows = [(0.0079, 21.0), (0.0050, 23.0), (0.0053, 22.8), (0.0052, 22.8), (0.0023, 26.4)];
    let worst = rows.iter().map(|&(m, p)| (psnr(m) - p).abs()).fold(0.0, f64::max);
    verdict(worst <= 0.05, format!("max |psnr(mse) - reported| = {worst:.4} dB"))
}

fn dcl_reduction() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let cin = rng.random_range(1..5);
        let cout = rng.random_range(1..5);
        let k = 2 * rng.random_range(0..3) + 1;
        let h = rng.random_range(1..17);
        let w = rng.random_range(1..17);
        let x = rand_tensor(&mut rng, &[cin, h, w], -1.0, 1.0);
        let wt = rand_tensor(&mut rng, &[cout, cin, k, k], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[cout], -1.0, 1.0);
        let conv = conv2d_forward(&x, &ConvParams::new(wt.clone(), b.clone(), 1, k / 2).unwrap()).unwrap();
        let dcl = dcl_forward(&x, &DclParams::new(wt, b).unwrap(), &Tensor::zeros(&[2, h, w]).unwrap()).unwrap();
        worst = worst.max(conv.max_abs_diff(&dcl).unwrap());
    }
    verdict(worst < 1e-12, format!("100 cases, max |dcl(x, 0) - conv(x)| = {worst:.2e}"))
}

fn gradient_suite() -> Verdict {
    let reports = standard_suite(7).unwrap();
    let worst = reports.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
    let pass = reports.iter().all(|r| r.max_rel_error < 1e-4);
    verdict(pass, format!("{} ops, worst {} at {:.2e}", reports.len(), worst.op, worst.max_rel_error))
}

fn symmetry() -> Verdict {
    let (spec, store) = build_generator(&GeneratorConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatched = 0;
    for _ in 0..20 {
        let a = rand_tensor(&mut rng, &[3, 64, 64], 0.0, 1.0);
        let b = rand_tensor(&mut rng, &[3, 64, 64], 0.0, 1.0);
        let ab = spec.infer(&store, &[&a, &b]).unwrap();
        let ba = spec.infer(&store, &[&b, &a]).unwrap();
        if !ab.data().iter().zip(ba.data()).all(|(x, y)| x.to_bits() == y.to_bits()) {
            mismatched += 1;
        }
    }
    verdict(mismatched == 0, format!("{mismatched}/20 pairs differ"))
}

fn warp_oracle() -> Verdict {
    let mut worst_interior: f64 = 0.0;
    let mut worst_zero: f64 = 0.0;
    let velocities = [[1.0, 0.0], [0.0, -2.0], [3.0, 1.0], [-2.0, -2.0], [2.0, 3.0]];
    for (k, v) in velocities.iter().enumerate() {
        let spec = SynthSpec::translating_square(48, 48, 5, 10.0 + k as f64, *v).unwrap();
        for t in synth_sequence(&spec).unwrap().triplets() {
            let x = warp_middle(&t.first, &t.second, t.flow.as_ref().unwrap()).unwrap();
            let mask = t.interior.as_ref().unwrap();
            let plane = 48 * 48;
            let (mut se, mut n) = (0.0, 0usize);
            for c in 0..3 {
                for (p, &m) in mask.iter().enumerate() {
                    if m {
                        let d = x.data()[c * plane + p] - t.middle.data()[c * plane + p];
                        se += d * d;
                        n += 1;
                    }
                }
            }
            worst_interior = worst_interior.max(se / n as f64);
            let z = warp_middle(&t.first, &t.second, &FlowField::zeros(48, 48)).unwrap();
            worst_zero = worst_zero.max(z.max_abs_diff(&average_frames(&t.first, &t.second).unwrap()).unwrap());
        }
    }
    verdict(
        worst_interior < 1e-6 && worst_zero < 1e-12,
        format!("interior mse {worst_interior:.2e}, zero-flow vs average {worst_zero:.2e}"),
    )
}

struct Desk {
    eval: Vec<FrameTriplet>,
    flow_prior: TrainOutcome,
    mse: TrainOutcome,
    adversarial: TrainOutcome,
    seconds: f64,
}

fn base_config(steps: u64, lr: f64, gamma: f64) -> TrainConfig {
    TrainConfig {
        steps,
        lr,
        gamma,
        batch: 4,
        seed: TRAIN_SEED,
        ..TrainConfig::default()
    }
}

fn desk_runs() -> Desk {
    let t0 = Instant::now();
    let data: Vec<FrameTriplet> = SynthDatasetSpec {
        seed: DATA_SEED,
        ..SynthDatasetSpec::default()
    }
    .generate()
    .unwrap()
    .iter()
    .flat_map(|s| s.triplets())
    .collect();
    assert_eq!(data.len(), 500);
    let (train, eval) = split_dataset(data, 0.8, SPLIT_SEED).unwrap();
    let flow_prior = train_joint_implicit_flow(&train, &base_config(FLOW_PRIOR_STEPS, FLOW_PRIOR_LR, FLOW_PRIOR_GAMMA)).unwrap();
    let mse = train_mse(&train, &base_config(MSE_STEPS, MSE_LR, TrainConfig::default().gamma)).unwrap();
    let adversarial = train_adversarial(&train, &base_config(ADV_STEPS, ADV_LR, ADV_GAMMA)).unwrap();
    Desk {
        eval,
        flow_prior,
        mse,
        adversarial,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn predictions(outcome: &TrainOutcome, eval: &[FrameTriplet]) -> Vec<Tensor> {
    let m = Model::from_outcome(outcome).unwrap();
    eval.iter().map(|t| m.interpolate(&t.first, &t.second, None).unwrap()).collect()
}

fn ordering(desk: &Desk) -> Verdict {
    let truths: Vec<Tensor> = desk.eval.iter().map(|t| t.middle.clone()).collect();
    let averaged: Vec<Tensor> = desk.eval.iter().map(|t| average_frames(&t.first, &t.second).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(NOISE_SEED);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let warped: Vec<Tensor> = desk
        .eval
        .iter()
        .map(|t| {
            let f = t.flow.as_ref().unwrap();
            let noisy = f.vectors.iter().map(|v| [v[0] + unit.sample(&mut rng), v[1] + unit.sample(&mut rng)]).collect();
            warp_middle(&t.first, &t.second, &FlowField::new(f.width, f.height, noisy).unwrap()).unwrap()
        })
        .collect();
    let nn = evaluate(&predictions(&desk.flow_prior, &desk.eval), &truths).unwrap().mse;
    let avg = evaluate(&averaged, &truths).unwrap().mse;
    let warp = evaluate(&warped, &truths).unwrap().mse;
    verdict(
        nn < avg && nn < warp && desk.seconds <= 3600.0,
        format!(
            "mse flow-prior {nn:.6}, average {avg:.6}, noisy warp {warp:.6}; {} steps, training {:.0}s",
            FLOW_PRIOR_STEPS, desk.seconds
        ),
    )
}

fn mean_energy(images: &[Tensor]) -> f64 {
    images.iter().map(|t| gradient_energy(t).unwrap()).sum::<f64>() / images.len() as f64
}

fn blur(desk: &Desk) -> Verdict {
    let truths: Vec<Tensor> = desk.eval.iter().map(|t| t.middle.clone()).collect();
    let truth = mean_energy(&truths);
    let mse = mean_energy(&predictions(&desk.mse, &desk.eval)) / truth;
    let adv = mean_energy(&predictions(&desk.adversarial, &desk.eval)) / truth;
    verdict(
        mse <= 0.8 && (0.5..=1.5).contains(&adv),
        format!("gradient energy vs truth: mse model {mse:.3}, adversarial model {adv:.3}"),
    )
}

/// Cosine between predicted and true flow, both restricted to foreground
/// pixels of the whole eval set and treated as one long vector.
fn flow_cosine(model: &Model, eval: &[FrameTriplet]) -> f64 {
    let (mut dot, mut pp, mut gg) = (0.0, 0.0, 0.0);
    for t in eval {
        let pred = model.predict_flow(&t.first, &t.second).unwrap();
        let truth = t.flow.as_ref().unwrap();
        for (k, &fg) in t.foreground.as_ref().unwrap().iter().enumerate() {
            if fg {
                let (p, g) = (pred.vectors[k], truth.vectors[k]);
                dot += p[0] * g[0] + p[1] * g[1];
                pp += p[0] * p[0] + p[1] * p[1];
                gg += g[0] * g[0] + g[1] * g[1];
            }
        }
    }
    dot / (pp.sqrt() * gg.sqrt())
}

fn implicit_flow(desk: &Desk) -> Verdict {
    let data: Vec<FrameTriplet> = desk.eval.iter().take(8).cloned().collect();
    let cfg = TrainConfig {
        objective: Objective::Adversarial,
        flow: Some(FlowMode::Implicit),
        ..base_config(1, FLOW_PRIOR_LR, FLOW_PRIOR_GAMMA)
    };
    let mut trainer = Trainer::new(&cfg, &data).unwrap();
    trainer.step().unwrap();
    let grads = trainer.last_generator_grads().unwrap();
    let flow_norm: f64 = grads
        .iter()
        .filter(|(n, _)| n.starts_with(FLOW_PREFIX))
        .flat_map(|(_, g)| g.data().iter().map(|v| v * v))
        .sum::<f64>()
        .sqrt();
    let cos = flow_cosine(&Model::from_outcome(&desk.flow_prior).unwrap(), &desk.eval);
    verdict(
        flow_norm > 0.0 && cos > 0.8,
        format!("step-1 flow-predictor gradient norm {flow_norm:.3e}, foreground flow cosine {cos:.4}"),
    )
}

fn alpha() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("train.tsv");
    let data: Vec<FrameTriplet> = synth_sequence(&SynthSpec::translating_square(16, 16, 6, 5.0, [1.0, 1.0]).unwrap())
        .unwrap()
        .triplets();
    let cfg = TrainConfig {
        objective: Objective::Adversarial,
        channels: vec![4, 8],
        disc_channels: 4,
        steps: 30,
        batch: 2,
        gamma: 1e-3,
        log: Some(log.clone()),
        ..TrainConfig::default()
    };
    train_adversarial(&data, &cfg).unwrap();
    let text = std::fs::read_to_string(&log).unwrap();
    let alphas: Vec<f64> = text.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    let first = alphas[0];
    let decreasing = alphas.windows(2).all(|w| w[1] < w[0]);
    let at_1000 = (alpha_schedule(0.001, 1000) - (-1.0f64).exp()).abs();
    verdict(
        first == 1.0 && decreasing && at_1000 <= 1e-9 && alphas.len() == 30,
        format!("logged alpha(0) = {first}, strictly decreasing = {decreasing}, |alpha(1000) - 1/e| = {at_1000:.1e}"),
    )
}

fn formats() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut flo_ok = 0;
    for _ in 0..100 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let vectors = (0..w * h)
            .map(|_| [rng.random_range(-100.0f32..100.0) as f64, rng.random_range(-100.0f32..100.0) as f64])
            .collect();
        let f = FlowField::new(w, h, vectors).unwrap();
        let bytes = f.to_flo_bytes();
        let back = FlowField::from_flo_bytes(&bytes).unwrap();
        if back == f && back.to_flo_bytes() == bytes {
            flo_ok += 1;
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let data: Vec<FrameTriplet> = synth_sequence(&SynthSpec::translating_square(16, 16, 4, 5.0, [1.0, 0.0]).unwrap())
        .unwrap()
        .triplets();
    let cfg = TrainConfig {
        objective: Objective::Adversarial,
        channels: vec![4, 8],
        disc_channels: 4,
        steps: 5,
        batch: 1,
        ..TrainConfig::default()
    };
    let ck = train_adversarial(&data, &cfg).unwrap().checkpoint();
    let path = dir.path().join("model.ck");
    ck.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let ck_ok = loaded.params == ck.params && loaded.to_bytes() == bytes && loaded.config == ck.config;

    let frames: Vec<PathBuf> = (0..3)
        .map(|k| {
            let p = dir.path().join(format!("f{k}.png"));
            save_image(&Tensor::full(&[3, 4, 4], k as f64 / 3.0).unwrap(), &p).unwrap();
            p
        })
        .collect();
    let mut counts = Vec::new();
    for n in [3usize, 10, 21312] {
        let manifest = dir.path().join(format!("frames{n}.txt"));
        let seq: Vec<PathBuf> = (0..n).map(|k| frames[k % 3].clone()).collect();
        write_manifest(&manifest, &[seq]).unwrap();
        let listed = read_manifest(&manifest).unwrap().remove(0);
        let stream = TripletStream::new(listed).unwrap();
        counts.push((n, stream.len()));
    }
    let ten: Vec<Tensor> = (0..10).map(|k| Tensor::full(&[3, 2, 2], k as f64 / 10.0).unwrap()).collect();
    let in_memory = extract_triplets(&ten).unwrap().len();
    let counts_ok = counts.iter().all(|&(n, c)| c == n - 2) && in_memory == 8;
    verdict(
        flo_ok == 100 && ck_ok && counts_ok,
        format!("flo {flo_ok}/100 bit-exact, checkpoint bit-exact = {ck_ok}, triplets {counts:?}"),
    )
}

fn main() {
    // `cargo test` passes harness flags such as --quiet; a name filter that
    // does not mention this suite skips it.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut report = |n: usize, name: &'static str, v: Verdict| {
        println!("{} criterion {n} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };
    report(1, "psnr identities", timed(Duration::from_secs(10), table_identities));
    report(2, "dcl reduction", timed(Duration::from_secs(10), dcl_reduction));
    report(3, "gradient suite", timed(Duration::from_secs(120), gradient_suite));
    report(4, "generator symmetry", timed(Duration::from_secs(30), symmetry));
    report(5, "warping oracle", timed(Duration::from_secs(30), warp_oracle));
    let desk = desk_runs();
    report(6, "desk-scale ordering", ordering(&desk));
    report(7, "blur proxy", blur(&desk));
    report(8, "implicit flow", implicit_flow(&desk));
    report(9, "alpha schedule", timed(Duration::from_secs(60), alpha));
    report(10, "formats", timed(Duration::from_secs(120), formats));
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("{}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
