use std::ffi::{CStr, CString};
use std::ptr;

use deepframe::data::SynthDatasetSpec;
use deepframe::training::{train_mse, TrainConfig};
use deepframe_ffi::*;

fn tensor(c: usize, h: usize, w: usize, f: impl Fn(usize) -> f64) -> *mut DfTensor {
    let data: Vec<f64> = (0..c * h * w).map(f).collect();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { df_tensor_new(c, h, w, data.as_ptr(), &mut t) }, DfStatus::Ok);
    t
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(df_last_error()) }.to_string_lossy().into_owned()
}

fn cpath(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(df_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn average_and_metrics() {
    let a = tensor(3, 12, 12, |_| 0.2);
    let b = tensor(3, 12, 12, |_| 0.6);
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(df_average(a, b, &mut m), DfStatus::Ok);
        let mut buf = vec![0.0; 3 * 12 * 12];
        assert_eq!(df_tensor_copy_data(m, buf.as_mut_ptr(), buf.len()), DfStatus::Ok);
        assert!(buf.iter().all(|&x| (x - 0.4).abs() < 1e-15));
        let (mut c, mut h, mut w) = (0, 0, 0);
        assert_eq!(df_tensor_shape(m, &mut c, &mut h, &mut w), DfStatus::Ok);
        assert_eq!((c, h, w), (3, 12, 12));

        let mut v = 0.0;
        assert_eq!(df_psnr(a, a, &mut v), DfStatus::Ok);
        assert!(v.is_infinite());
        assert_eq!(df_mse(a, b, &mut v), DfStatus::Ok);
        assert!((v - 0.16).abs() < 1e-12);
        assert_eq!(df_psnr(a, b, &mut v), DfStatus::Ok);
        assert!((v - 10.0 * (1.0f64 / 0.16).log10()).abs() < 1e-9);
        assert_eq!(df_ssim(a, a, &mut v), DfStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(df_gradient_energy(a, &mut v), DfStatus::Ok);
        assert_eq!(v, 0.0);
        df_tensor_free(m);
        df_tensor_free(a);
        df_tensor_free(b);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let a = tensor(3, 4, 4, |_| 0.0);
    let b = tensor(3, 5, 4, |_| 0.0);
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(df_average(a, b, &mut out), DfStatus::ShapeMismatch);
        assert!(out.is_null());
        assert!(last_error().contains("shape"));
        assert_eq!(df_average(ptr::null(), b, &mut out), DfStatus::NullPointer);
        assert!(last_error().contains("first"));
        let bad = [f64::NAN; 4];
        let mut f = ptr::null_mut();
        assert_eq!(df_flow_new(1, 2, bad.as_ptr(), &mut f), DfStatus::NonFinite);
        let missing = CString::new("/nonexistent/x.flo").unwrap();
        assert_eq!(df_flow_load(missing.as_ptr(), &mut f), DfStatus::Io);
        let mut m = ptr::null_mut();
        assert_eq!(df_model_load(missing.as_ptr(), &mut m), DfStatus::Io);
        df_tensor_free(a);
        df_tensor_free(b);
        df_tensor_free(ptr::null_mut());
    }
}

#[test]
fn flow_files_and_warp() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (10, 6);
    let pairs: Vec<f64> = (0..w * h).flat_map(|k| [k as f64 * 0.25, -(k as f64)]).collect();
    let zero = vec![0.0; 2 * w * h];
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(df_flow_new(w, h, pairs.as_ptr(), &mut f), DfStatus::Ok);
        let path = cpath(&dir.path().join("f.flo"));
        assert_eq!(df_flow_save(f, path.as_ptr()), DfStatus::Ok);
        let mut g = ptr::null_mut();
        assert_eq!(df_flow_load(path.as_ptr(), &mut g), DfStatus::Ok);
        let (mut gw, mut gh) = (0, 0);
        assert_eq!(df_flow_extent(g, &mut gw, &mut gh), DfStatus::Ok);
        assert_eq!((gw, gh), (w, h));
        let mut back = vec![0.0; 2 * w * h];
        assert_eq!(df_flow_copy_data(g, back.as_mut_ptr(), back.len()), DfStatus::Ok);
        let as_f32: Vec<f64> = pairs.iter().map(|&x| x as f32 as f64).collect();
        assert_eq!(back, as_f32);

        let a = tensor(3, h, w, |k| (k % 7) as f64 / 7.0);
        let b = tensor(3, h, w, |k| (k % 5) as f64 / 5.0);
        let mut z = ptr::null_mut();
        assert_eq!(df_flow_new(w, h, zero.as_ptr(), &mut z), DfStatus::Ok);
        let (mut warped, mut avg) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(df_warp_middle(a, b, z, &mut warped), DfStatus::Ok);
        assert_eq!(df_average(a, b, &mut avg), DfStatus::Ok);
        let mut d = 0.0;
        assert_eq!(df_mse(warped, avg, &mut d), DfStatus::Ok);
        assert!(d < 1e-24);
        for p in [a, b, warped, avg] {
            df_tensor_free(p);
        }
        df_flow_free(f);
        df_flow_free(g);
        df_flow_free(z);
    }
}

#[test]
fn model_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("model.ck");
    let data: Vec<_> = SynthDatasetSpec {
        width: 16,
        height: 16,
        sequences: 2,
        frames: 3,
        max_speed: 1.0,
        integer_velocity: false,
        seed: 3,
    }
    .generate()
    .unwrap()
    .iter()
    .flat_map(|s| s.triplets())
    .collect();
    let cfg = TrainConfig {
        channels: vec![4, 8],
        batch: 2,
        steps: 2,
        checkpoint: Some(ck.clone()),
        ..TrainConfig::default()
    };
    let outcome = train_mse(&data, &cfg).unwrap();
    let expected = deepframe::Model::from_outcome(&outcome)
        .unwrap()
        .interpolate(&data[0].first, &data[0].second, None)
        .unwrap();

    let first = dir.path().join("a.png");
    let second = dir.path().join("b.png");
    deepframe::data::save_image(&data[0].first, &first).unwrap();
    deepframe::data::save_image(&data[0].second, &second).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(df_model_load(cpath(&ck).as_ptr(), &mut m), DfStatus::Ok);
        let mut needs = -1;
        assert_eq!(df_model_needs_flow(m, &mut needs), DfStatus::Ok);
        assert_eq!(needs, 0);
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(df_image_load(cpath(&first).as_ptr(), &mut a), DfStatus::Ok);
        assert_eq!(df_image_load(cpath(&second).as_ptr(), &mut b), DfStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(df_model_interpolate(m, a, b, ptr::null(), &mut out), DfStatus::Ok);
        let mut buf = vec![0.0; expected.len()];
        assert_eq!(df_tensor_copy_data(out, buf.as_mut_ptr(), buf.len()), DfStatus::Ok);
        // PNG quantises the inputs to 8 bits
        let worst = buf.iter().zip(expected.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 0.05, "{worst}");
        let saved = cpath(&dir.path().join("mid.ppm"));
        assert_eq!(df_image_save(out, saved.as_ptr()), DfStatus::Ok);
        for t in [a, b, out] {
            df_tensor_free(t);
        }
        df_model_free(m);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/deepframe.h");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint probe(const double *px) {{\n  DfTensor *t = NULL;\n  DfStatus (*make)(size_t, size_t, size_t, const double *, DfTensor **) = df_tensor_new;\n  DfStatus s = make(1, 1, 1, px, &t);\n  df_tensor_free(t);\n  return s == DF_STATUS_OK ? 0 : (int)s;\n}}\n"
        ),
    )
    .unwrap();
    let status = match std::process::Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"]).arg(&src).status() {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler found; header syntax not checked");
            return;
        }
    };
    assert!(status.success());
}
