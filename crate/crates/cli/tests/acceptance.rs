//! Acceptance criteria 1-8, one PASS/FAIL line each. Runs without the
//! libtest harness so the lines are always printed.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use eegstage::classify::{
    confusion_metrics, plsr_fit, svm_fit, svm_predict, ClassifierKind, SearchConfig,
    SearchStrategy, SvmOptions,
};
use eegstage::features::{assemble_dataset, FeatureConfig};
use eegstage::pipeline::{classify_subject, stage_powers, BandSelection, FilteredSubject, Subject};
use eegstage::preprocess::{butter_bandpass_zero_phase, notch_50, PreprocessConfig};
use eegstage::spectral::{band_power_range, normalized_band_powers, stft_psd, StftConfig};
use eegstage::synth::{
    baseline_spec, generate_preset, generate_recording, Preset, SynthSetup, STAGE3_CHANNELS,
};
use eegstage::wavelet::{dwt_decompose, dwt_reconstruct, WaveletSpec};
use eegstage::{Band, ComparisonStage, Condition, Montage, ParadigmSpec};
use eegstage_cli::commands::{read_json, ClassifyOutput};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = eegstage_cli::run(
        std::iter::once("eegstage").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    if code == 0 {
        Ok(String::from_utf8_lossy(&out).into_owned())
    } else {
        Err(format!(
            "eegstage {} exited {code}: {}",
            args.join(" "),
            String::from_utf8_lossy(&err)
        ))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn noise(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn sine(freq: f64, n: usize, fs: f64, amp: f64) -> Vec<f64> {
    (0..n)
        .map(|i| amp * (2.0 * PI * freq * i as f64 / fs).sin())
        .collect()
}

/// 1. Epoch, split and matrix bookkeeping at the paper's paradigm.
fn bookkeeping() -> Outcome {
    let montage = Montage::standard();
    let paradigm = ParadigmSpec::default();
    let spec = baseline_spec("A01", 1, &montage);
    let two_d = generate_recording(&spec, Condition::TwoD, &paradigm, &montage, 512).map_err(e)?;
    let three_d =
        generate_recording(&spec, Condition::ThreeD, &paradigm, &montage, 512).map_err(e)?;
    let ds = assemble_dataset(&two_d, &three_d, &FeatureConfig::default(), 0).map_err(e)?;

    let mut per_trial: BTreeMap<(u8, usize), usize> = BTreeMap::new();
    for (label, info) in ds.labels.iter().zip(&ds.epochs) {
        *per_trial.entry((*label as u8, info.trial)).or_default() += 1;
    }
    ensure(
        per_trial.len() == 30 && per_trial.values().all(|&n| n == 11),
        || {
            format!(
                "epochs per trial {:?}",
                per_trial.values().collect::<Vec<_>>()
            )
        },
    )?;
    for class in [Condition::TwoD, Condition::ThreeD] {
        let total = ds.class_count(class);
        let train = ds.train.iter().filter(|&&i| ds.labels[i] == class).count();
        let test = ds.test.iter().filter(|&&i| ds.labels[i] == class).count();
        ensure((total, train, test) == (165, 83, 82), || {
            format!("{class}: {total} epochs, {train} train, {test} test")
        })?;
    }
    let subject = Subject::new(two_d, three_d).map_err(e)?;
    let filtered = FilteredSubject::new(&subject, &PreprocessConfig::default()).map_err(e)?;
    let stft = StftConfig::with_hop(8);
    for stage in [
        ComparisonStage::I,
        ComparisonStage::II,
        ComparisonStage::III,
    ] {
        let p = stage_powers(&filtered, stage, &stft).map_err(e)?;
        for m in [&p.first, &p.second, &p.difference] {
            ensure(m.shape() == (20, 5), || {
                format!("stage {} matrix {:?}", stage.name(), m.shape())
            })?;
        }
    }
    Ok("11 epochs/trial, 165 per class, 83 train / 82 test per class, 20 x 5 matrices".into())
}

/// 2. db1 perfect reconstruction and Parseval.
fn dwt_identities() -> Outcome {
    let start = Instant::now();
    let spec = WaveletSpec {
        family: 1,
        levels: 7,
    };
    let (mut worst_rec, mut worst_energy) = (0.0f64, 0.0f64);
    for (i, &n) in [1024usize, 2048, 4608, 5000].iter().enumerate() {
        let x = noise(100 + i as u64, n);
        let c = dwt_decompose(&x, &spec).map_err(e)?;
        let y = dwt_reconstruct(&c).map_err(e)?;
        ensure(y.len() == n, || {
            format!("length {n} reconstructed to {}", y.len())
        })?;
        let rec = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let energy = (c.energy() - ex).abs() / ex;
        worst_rec = worst_rec.max(rec);
        worst_energy = worst_energy.max(energy);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let detail = format!(
        "max round-trip error {worst_rec:.1e}, Parseval {worst_energy:.1e} relative, {elapsed:.3} s"
    );
    ensure(
        worst_rec < 1e-9 && worst_energy < 1e-9 && elapsed < 1.0,
        || detail.clone(),
    )?;
    Ok(detail)
}

/// 3. α share of a unit 10 Hz sine, scale invariance, additivity.
fn spectral_identities() -> Outcome {
    let stft = StftConfig::default();
    let x = sine(10.0, 9 * 512, 512.0, 1.0);
    let alpha = normalized_band_powers(&stft_psd(&x, 512.0, &stft).map_err(e)?).map_err(e)?
        [Band::Alpha.index()];
    ensure(alpha >= 95.0, || format!("alpha share {alpha}"))?;

    let base = noise(7, 4608);
    let reference =
        normalized_band_powers(&stft_psd(&base, 512.0, &stft).map_err(e)?).map_err(e)?;
    let mut worst_scale = 0.0f64;
    for k in [1e-3, 0.37, 7.3, 1e4] {
        let scaled: Vec<f64> = base.iter().map(|v| v * k).collect();
        let p = normalized_band_powers(&stft_psd(&scaled, 512.0, &stft).map_err(e)?).map_err(e)?;
        for (a, b) in p.iter().zip(&reference) {
            worst_scale = worst_scale.max((a - b).abs());
        }
    }
    ensure(worst_scale < 1e-9, || {
        format!("scale changes percentages by {worst_scale:e}")
    })?;

    let psd = stft_psd(&base, 512.0, &stft).map_err(e)?;
    let mut worst_add = 0.0f64;
    for (a, b, c) in [
        (1.0, 4.0, 8.0),
        (4.0, 8.0, 12.0),
        (13.0, 30.0, 49.0),
        (1.0, 8.0, 12.0),
        (2.3, 5.71, 48.9),
    ] {
        let whole = band_power_range(&psd, a, c).map_err(e)?;
        let parts =
            band_power_range(&psd, a, b).map_err(e)? + band_power_range(&psd, b, c).map_err(e)?;
        worst_add = worst_add.max((whole - parts).abs() / whole);
    }
    ensure(worst_add < 1e-9, || {
        format!("additivity error {worst_add:e}")
    })?;
    Ok(format!(
        "alpha {alpha:.2}%, scale invariance {worst_scale:.1e}, additivity {worst_add:.1e} relative"
    ))
}

fn core_rms(x: &[f64]) -> f64 {
    let n = x.len();
    let c = &x[n / 4..3 * n / 4];
    (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt()
}

/// Squared (forward-backward) order-3 bilinear Butterworth band-pass gain.
fn analytic_filtfilt_gain(f: f64, lo: f64, hi: f64, fs: f64) -> f64 {
    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let (wl, wh, w) = (warp(lo), warp(hi), warp(f));
    let x = (w * w - wl * wh) / (w * (wh - wl));
    1.0 / (1.0 + x.powi(6))
}

/// 4. Zero lag, notch depth, out-of-band attenuation.
fn zero_phase_filtering() -> Outcome {
    let fs = 512.0;
    let x = sine(10.0, 4096, fs, 1.0);
    let y = butter_bandpass_zero_phase(&x, 1.0, 55.0, 3, fs).map_err(e)?;
    let n = x.len() as i64;
    let xcorr = |lag: i64| {
        (n / 4..3 * n / 4)
            .map(|i| x[i as usize] * y[(i + lag) as usize])
            .sum::<f64>()
    };
    let lag = (-40..=40i64)
        .max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b)))
        .expect("non-empty");
    ensure(lag == 0, || format!("cross-correlation peak at lag {lag}"))?;

    let line = sine(50.0, 8192, fs, 1.0);
    let notch_db = -20.0 * (core_rms(&notch_50(&line, fs).map_err(e)?) / core_rms(&line)).log10();
    ensure(notch_db >= 20.0, || {
        format!("notch attenuation {notch_db:.1} dB")
    })?;

    let hf = sine(80.0, 8192, fs, 1.0);
    let gain =
        core_rms(&butter_bandpass_zero_phase(&hf, 1.0, 55.0, 3, fs).map_err(e)?) / core_rms(&hf);
    let stop_db = -20.0 * gain.log10();
    let analytic_db = -20.0 * analytic_filtfilt_gain(80.0, 1.0, 55.0, fs).log10();
    ensure(
        stop_db >= 18.0 && (stop_db - analytic_db).abs() <= 1.0,
        || format!("80 Hz attenuation {stop_db:.2} dB, analytic {analytic_db:.2} dB"),
    )?;
    Ok(format!(
        "lag 0, notch {notch_db:.1} dB, 80 Hz {stop_db:.2} dB vs analytic {analytic_db:.2} dB"
    ))
}

/// Least squares with intercept via the normal equations.
fn ols(x: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    let (n, p) = x.dim();
    let x_mean: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = nalgebra::DMatrix::from_fn(n, p, |i, j| x[[i, j]] - x_mean[j]);
    let yc = nalgebra::DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let xtx = xc.transpose() * &xc;
    let xty = xc.transpose() * yc;
    xtx.cholesky()
        .expect("full rank")
        .solve(&xty)
        .iter()
        .copied()
        .collect()
}

/// 5. PLSR = OLS, SVM on XOR, confusion counts.
fn classifier_oracles() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((50, 5), |_| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = plsr_fit(x.view(), &y, 5).map_err(e)?;
        let want = ols(&x, &y);
        let scale = want.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (g, w) in m.coefficients.iter().zip(&want) {
            worst = worst.max((g - w).abs() / scale);
        }
    }
    ensure(worst <= 1e-6, || {
        format!("PLSR vs OLS relative error {worst:e}")
    })?;

    // four corners, then noisy quadrant clouds
    let corners = Array2::from_shape_vec((4, 2), vec![0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0])
        .expect("shape");
    let corner_y = vec![1.0, 1.0, -1.0, -1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 200;
    let mut clouds = Array2::zeros((n, 2));
    let mut cloud_y = Vec::with_capacity(n);
    for i in 0..n {
        let (sx, sy) = ([1.0, -1.0][i % 2], [1.0, -1.0][(i / 2) % 2]);
        clouds[[i, 0]] = sx * rng.random_range(0.1..1.0);
        clouds[[i, 1]] = sy * rng.random_range(0.1..1.0);
        cloud_y.push(sx * sy);
    }
    for (x, y, sigma) in [(&corners, &corner_y, 0.5), (&clouds, &cloud_y, 0.3)] {
        let m = svm_fit(x.view(), y, sigma, 100.0, &SvmOptions::default()).map_err(e)?;
        let (_, labels) = svm_predict(&m, x.view()).map_err(e)?;
        let correct = labels.iter().zip(y.iter()).filter(|(a, b)| a == b).count();
        ensure(correct == y.len(), || {
            format!("XOR training accuracy {correct}/{}", y.len())
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let n = rng.random_range(1..80);
        let p: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let t: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let as_labels = |v: &[bool]| -> Vec<Condition> {
            v.iter()
                .map(|&b| {
                    if b {
                        Condition::TwoD
                    } else {
                        Condition::ThreeD
                    }
                })
                .collect()
        };
        let m = confusion_metrics(&as_labels(&p), &as_labels(&t)).map_err(e)?;
        let count = |a: bool, b: bool| {
            p.iter()
                .zip(&t)
                .filter(|&(&x, &y)| x == a && y == b)
                .count()
        };
        let (tp, fp, fn_, tn) = (
            count(true, true),
            count(true, false),
            count(false, true),
            count(false, false),
        );
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        ensure(
            (m.tp, m.fp, m.fn_, m.tn) == (tp, fp, fn_, tn)
                && m.accuracy == ratio(tp + tn, n)
                && m.sensitivity == ratio(tp, tp + fn_)
                && m.specificity == ratio(tn, tn + fp),
            || format!("confusion mismatch: {m:?} vs ({tp}, {fp}, {fn_}, {tn})"),
        )?;
    }
    Ok(format!(
        "PLSR vs OLS {worst:.1e} relative, XOR 100% (4 corners, 200-point clouds), 1000 confusion vectors exact"
    ))
}

/// 6. stage3-paper-like through the CLI.
fn stage3_end_to_end() -> Outcome {
    let start = Instant::now();
    let tmp = TempDir::new().map_err(e)?;
    let study = tmp.path().join("study");
    let results = tmp.path().join("results");
    cli(&[
        "synth",
        "--preset",
        "stage3-paper-like",
        "--seed",
        "7",
        "--subjects",
        "5",
        "--hop",
        "8",
        "-o",
        s(&study),
    ])?;
    let check = cli(&["ingest-check", "--data", s(&study)])?;
    ensure(check.contains("10 sessions checked, 0 errors"), || {
        check.clone()
    })?;
    cli(&[
        "bandselect",
        "--data",
        s(&study),
        "--stage",
        "III",
        "--hop",
        "8",
        "-o",
        s(&results),
    ])?;
    let sel_path = results.join("bandselect_stageIII.json");
    let sel: BandSelection = read_json(&sel_path).map_err(e)?;
    ensure(
        sel.report.selected == vec![Band::Delta, Band::Alpha],
        || format!("bandselect returned {:?}", sel.report.selected),
    )?;
    cli(&[
        "classify",
        "--data",
        s(&study),
        "--bands-from",
        s(&sel_path),
        "--features",
        "dwt",
        "--classifier",
        "svm",
        "--hop",
        "8",
        "-o",
        s(&results),
    ])?;
    let mut accuracies = Vec::new();
    let mut misplaced = Vec::new();
    for i in 1..=5 {
        let out: ClassifyOutput =
            read_json(&results.join(format!("classify_S{i:02}_dwt_svm.json"))).map_err(e)?;
        let search = &out.classification.search;
        accuracies.push(search.best_combination().test.accuracy_or_zero());
        let top8 = &search.ranking[..8];
        for ch in STAGE3_CHANNELS {
            if !top8.iter().any(|c| c == ch) {
                misplaced.push(format!("S{i:02}:{ch}"));
            }
        }
    }
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let min = accuracies.iter().copied().fold(f64::INFINITY, f64::min);
    let elapsed = start.elapsed().as_secs_f64();
    let detail = format!(
        "bands {{delta, alpha}}, SVM+DWT best-combination test mean {mean:.3} (min {min:.3}) over 5 subjects, \
         injected channels outside top 8: {}, {elapsed:.0} s",
        if misplaced.is_empty() { "none".to_string() } else { misplaced.join(" ") }
    );
    ensure(
        mean >= 0.90 && misplaced.is_empty() && elapsed < 300.0,
        || detail.clone(),
    )?;
    Ok(detail)
}

/// 7. Identical class distributions stay at chance.
fn null_control() -> Outcome {
    let setup = SynthSetup::default();
    let mut accuracies = Vec::new();
    for seed in 0..20 {
        let (_, mut subjects) = generate_preset(Preset::Null, seed, 1, &setup).map_err(e)?;
        let synth = subjects.remove(0);
        let subject = Subject::new(synth.two_d, synth.three_d).map_err(e)?;
        let result = classify_subject(
            &subject,
            &FeatureConfig::default(),
            0,
            ClassifierKind::Svm,
            SearchStrategy::RankedPrefix,
            &SearchConfig::default(),
        )
        .map_err(e)?;
        accuracies.push(result.search.best_combination().test.accuracy_or_zero());
    }
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let (lo, hi) = accuracies
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| {
            (l.min(a), h.max(a))
        });
    let detail = format!(
        "mean best-combination test accuracy {mean:.3} over 20 seeds (range {lo:.3}-{hi:.3})"
    );
    ensure((0.40..=0.60).contains(&mean), || detail.clone())?;
    Ok(detail)
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, fs::read(&path).expect("readable file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// 8. Whole CLI pipeline twice into separate directories.
fn determinism() -> Outcome {
    let run = |root: &Path| -> Result<(), String> {
        let study = root.join("study");
        let res = root.join("results");
        cli(&[
            "synth",
            "--preset",
            "stage3-paper-like",
            "--seed",
            "11",
            "--subjects",
            "2",
            "--trials",
            "4",
            "--hop",
            "8",
            "-o",
            s(&study),
        ])?;
        cli(&["ingest-check", "--data", s(&study), "-o", s(&res)])?;
        cli(&[
            "bandselect",
            "--data",
            s(&study),
            "--hop",
            "8",
            "-o",
            s(&res),
        ])?;
        let bands = res.join("bandselect_stageIII.json");
        cli(&[
            "featurize",
            "--data",
            s(&study),
            "--bands-from",
            s(&bands),
            "-o",
            s(&res),
        ])?;
        for (features, classifier) in [("dwt", "svm"), ("stft", "plsr")] {
            cli(&[
                "classify",
                "--data",
                s(&study),
                "--bands-from",
                s(&bands),
                "--features",
                features,
                "--classifier",
                classifier,
                "--hop",
                "8",
                "--max-prefix",
                "5",
                "--cross",
                "-o",
                s(&res),
            ])?;
        }
        cli(&["report", s(&res)])?;
        Ok(())
    };
    let a = TempDir::new().map_err(e)?;
    let b = TempDir::new().map_err(e)?;
    run(a.path())?;
    run(b.path())?;
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let differing: Vec<String> = ta
        .keys()
        .chain(tb.keys())
        .filter(|k| ta.get(*k) != tb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    ensure(differing.is_empty(), || {
        format!("outputs differ: {}", differing.join(", "))
    })?;
    let bytes: usize = ta.values().map(Vec::len).sum();
    Ok(format!(
        "{} files ({} MB) byte-identical across two runs",
        ta.len(),
        bytes / 1_000_000
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("bookkeeping", bookkeeping),
        ("DWT reconstruction and Parseval", dwt_identities),
        ("spectral correctness", spectral_identities),
        ("zero-phase filtering", zero_phase_filtering),
        ("classifier oracles", classifier_oracles),
        ("end-to-end synthetic Stage III", stage3_end_to_end),
        ("null control", null_control),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
