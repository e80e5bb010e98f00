use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use eegstage::pipeline::BandSelection;
use eegstage::synth::SynthSpec;
use eegstage::{Band, Condition};
use eegstage_cli::commands::ClassifyOutput;
use eegstage_cli::{run, PipelineConfig};
use tempfile::TempDir;

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(
        std::iter::once("eegstage").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two-subject, four-trial stage3-paper-like study shared by the tests.
fn study() -> &'static Path {
    static STUDY: OnceLock<TempDir> = OnceLock::new();
    STUDY
        .get_or_init(|| {
            let dir = TempDir::new().unwrap();
            let (code, _, err) = cli(&[
                "synth",
                "--preset",
                "stage3-paper-like",
                "--seed",
                "7",
                "--subjects",
                "2",
                "--trials",
                "4",
                "--hop",
                "8",
                "-o",
                s(dir.path()),
            ]);
            assert_eq!(code, 0, "{err}");
            dir
        })
        .path()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn help_documents_paper_defaults() {
    for (cmd, expected) in [
        (
            "bandselect",
            &[
                "[default: 512]",
                "[default: 1]",
                "[default: 3]",
                "[default: 2]",
            ][..],
        ),
        (
            "featurize",
            &[
                "[default: 512]",
                "[default: 4]",
                "[default: 0.5]",
                "[default: 3]",
            ][..],
        ),
        (
            "classify",
            &[
                "[default: 512]",
                "[default: 1]",
                "[default: 3]",
                "[default: 10]",
                "[default: 4]",
                "[default: 0.5]",
            ][..],
        ),
        ("synth", &["[default: 5]", "[default: 15]"][..]),
        ("ingest-check", &["[default: 100]"][..]),
        ("report", &["[default: the results directory]"][..]),
    ] {
        let (code, out, _) = cli(&[cmd, "--help"]);
        assert_eq!(code, 0);
        for e in expected {
            assert!(out.contains(e), "{cmd} --help lacks {e}:\n{out}");
        }
    }
}

#[test]
fn config_defaults_are_the_paper_parameters() {
    let cfg = PipelineConfig::default();
    for stft in [cfg.spectral.stft, cfg.features.stft] {
        assert_eq!((stft.window_len, stft.hop), (512, 1));
    }
    for p in [cfg.spectral.preprocess, cfg.features.preprocess] {
        assert_eq!(p.filter_order, 3);
        assert_eq!(p.band_selection_band, (1.0, 55.0));
    }
    assert_eq!(cfg.search.cv.folds, 10);
    assert_eq!(
        (cfg.features.epoch.window_s, cfg.features.epoch.step_s),
        (4.0, 0.5)
    );
    assert_eq!(
        (cfg.selection.threshold, cfg.selection.min_channels),
        (2.0, 3)
    );
    assert_eq!(cfg.features.bands, vec![Band::Delta, Band::Alpha]);
}

#[test]
fn config_file_then_flag_overrides() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"split_seed": 4, "search": {"cv": {"folds": 5}}, "features": {"kind": "stft"}}"#,
    )
    .unwrap();
    let (code, out, err) = cli(&[
        "classify",
        "--config",
        s(&path),
        "--folds",
        "7",
        "--hop",
        "8",
        "--print-config",
    ]);
    assert_eq!(code, 0, "{err}");
    let cfg: PipelineConfig = serde_json::from_str(&out).unwrap();
    assert_eq!(cfg.split_seed, 4);
    assert_eq!(cfg.search.cv.folds, 7);
    assert_eq!(cfg.features.kind, eegstage::features::FeatureKind::Stft);
    assert_eq!(cfg.spectral.stft.hop, 8);
    assert_eq!(cfg.features.stft.hop, 8);
    assert_eq!(cfg.features.stft.window_len, 512);
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"no_such_field": 1}"#).unwrap();
    let (code, _, err) = cli(&["bandselect", "--config", s(&path), "--print-config"]);
    assert_eq!(code, 2);
    assert!(err.contains("no_such_field"), "{err}");
}

#[test]
fn unknown_preset_lists_the_presets() {
    let dir = TempDir::new().unwrap();
    let (code, _, err) = cli(&["synth", "--preset", "stage9", "-o", s(dir.path())]);
    assert_eq!(code, 2);
    for name in ["stage1-delta", "stage3-paper-like", "null"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn bad_flag_values_are_usage_errors() {
    assert_eq!(cli(&["classify", "--classifier", "knn"]).0, 2);
    assert_eq!(cli(&["bandselect", "--stage", "IV"]).0, 2);
    assert_eq!(cli(&["no-such-command"]).0, 2);
    assert_eq!(cli(&["bandselect", "--print-config"]).0, 0);
    // no data given
    assert_eq!(cli(&["bandselect", "-o", "x"]).0, 2);
}

#[test]
fn missing_input_names_the_path() {
    let missing = "/nonexistent/eegstage-study";
    for cmd in ["ingest-check", "bandselect", "featurize", "classify"] {
        let (code, _, err) = cli(&[cmd, "--data", missing, "-o", "/tmp/unused"]);
        assert_eq!(code, 3, "{cmd}");
        assert!(err.contains(missing), "{cmd}: {err}");
    }
}

#[test]
fn report_on_empty_dir_fails() {
    let dir = TempDir::new().unwrap();
    let (code, _, err) = cli(&["report", s(dir.path())]);
    assert_eq!(code, 3);
    assert!(err.contains("no bandselect"), "{err}");
    assert_ne!(cli(&["report", "/nonexistent/results"]).0, 0);
}

#[test]
fn synthesised_study_loads_without_errors() {
    let (code, out, err) = cli(&["ingest-check", "--data", s(study())]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("4 sessions checked, 0 errors"), "{out}");
    assert!(study().join("study.json").is_file());
    assert!(study().join("S01/synth_3d.json").is_file());
}

#[test]
fn ingest_check_reports_broken_sessions() {
    let dir = TempDir::new().unwrap();
    let session = dir.path().join("S01/2d");
    fs::create_dir_all(&session).unwrap();
    for f in ["manifest.json", "trial_01.csv", "trial_02.csv"] {
        fs::copy(study().join("S01/2d").join(f), session.join(f)).unwrap();
    }
    // two of four trial files are missing
    let (code, out, _) = cli(&["ingest-check", "--data", s(dir.path()), "-o", s(dir.path())]);
    assert_eq!(code, 3);
    assert!(out.contains("trial_03.csv"), "{out}");
    assert!(dir.path().join("ingest_report.json").is_file());
}

#[test]
fn spec_file_synthesis() {
    let dir = TempDir::new().unwrap();
    let mut spec = SynthSpec::silent("P01", 20, 3);
    spec.envelopes = eegstage::synth::StageEnvelopes::uniform(20, [8.0, 5.0, 9.0, 4.0, 1.5]);
    spec.pink_noise_uv = 0.5;
    let path = dir.path().join("spec.json");
    fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    let out_dir = dir.path().join("study");
    let (code, _, err) = cli(&[
        "synth",
        "--spec",
        s(&path),
        "--trials",
        "2",
        "-o",
        s(&out_dir),
    ]);
    assert_eq!(code, 0, "{err}");
    let rec = eegstage::ingest::load_recording(out_dir.join("P01/3d/manifest.json")).unwrap();
    assert_eq!(rec.condition, Condition::ThreeD);
    assert_eq!(rec.trials.len(), 2);

    fs::write(&path, "{\"two_d\": 1}").unwrap();
    assert_eq!(cli(&["synth", "--spec", s(&path), "-o", s(&out_dir)]).0, 2);
}

#[test]
fn bandselect_finds_injected_bands_and_respects_threshold() {
    let dir = TempDir::new().unwrap();
    let (code, out, err) = cli(&[
        "bandselect",
        "--data",
        s(study()),
        "--hop",
        "8",
        "--stage",
        "III",
        "-o",
        s(dir.path()),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("dominant bands delta, alpha"), "{out}");
    let sel: BandSelection =
        eegstage_cli::commands::read_json(&dir.path().join("bandselect_stageIII.json")).unwrap();
    assert_eq!(sel.report.selected, vec![Band::Delta, Band::Alpha]);
    assert_eq!(sel.per_subject.len(), 2);
    assert!(dir.path().join("diff_stageIII.csv").is_file());

    let (code, _, _) = cli(&[
        "bandselect",
        "--data",
        s(study()),
        "--hop",
        "8",
        "--stage",
        "III",
        "--threshold",
        "1000",
        "-o",
        s(dir.path()),
    ]);
    assert_eq!(code, 0);
    let sel: BandSelection =
        eegstage_cli::commands::read_json(&dir.path().join("bandselect_stageIII.json")).unwrap();
    assert!(sel.report.selected.is_empty());

    // an empty selection cannot feed the classifier
    let bands = dir.path().join("bandselect_stageIII.json");
    let (code, _, err) = cli(&[
        "featurize",
        "--data",
        s(study()),
        "--bands-from",
        s(&bands),
        "-o",
        s(dir.path()),
    ]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn bandselect_on_null_data_is_empty() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("null");
    let (code, _, err) = cli(&[
        "synth",
        "--preset",
        "null",
        "--seed",
        "3",
        "--subjects",
        "2",
        "--trials",
        "4",
        "-o",
        s(&data),
    ]);
    assert_eq!(code, 0, "{err}");
    let (code, out, err) = cli(&[
        "bandselect",
        "--data",
        s(&data),
        "--hop",
        "8",
        "--stage",
        "III",
        "-o",
        s(dir.path()),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("dominant bands none"), "{out}");
}

#[test]
fn featurize_writes_one_matrix_per_subject() {
    let dir = TempDir::new().unwrap();
    let (code, out, err) = cli(&[
        "featurize",
        "--data",
        s(study()),
        "--subject",
        "S02",
        "-o",
        s(dir.path()),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(
        out.contains("88 epochs (44 train, 44 test) x 20 channels x 4 features"),
        "{out}"
    );
    let ds = eegstage::features::FeatureDataset::read_csv(&dir.path().join("features_S02_dwt.csv"))
        .unwrap();
    assert_eq!(ds.n_epochs(), 88);
    assert!(!dir.path().join("features_S01_dwt.csv").exists());
    assert_eq!(
        cli(&[
            "featurize",
            "--data",
            s(study()),
            "--subject",
            "S09",
            "-o",
            s(dir.path())
        ])
        .0,
        3
    );
}

/// bandselect -> classify (both classifiers, cross-evaluated) -> report.
fn pipeline(results: &Path) {
    let r = s(results);
    let (code, _, err) = cli(&["bandselect", "--data", s(study()), "--hop", "8", "-o", r]);
    assert_eq!(code, 0, "{err}");
    let bands: PathBuf = results.join("bandselect_stageIII.json");
    for (features, classifier) in [("dwt", "svm"), ("dwt", "plsr"), ("stft", "svm")] {
        let (code, out, err) = cli(&[
            "classify",
            "--data",
            s(study()),
            "--bands-from",
            s(&bands),
            "--features",
            features,
            "--classifier",
            classifier,
            "--hop",
            "8",
            "--max-prefix",
            "6",
            "--cross",
            "-o",
            r,
        ]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("mean best-combination test accuracy"), "{out}");
    }
    let (code, out, err) = cli(&["report", r]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("svm + dwt"), "{out}");
}

#[test]
fn pipeline_outputs_are_complete_and_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let fa = files(a.path());
    assert_eq!(fa, files(b.path()), "reruns differ");

    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for expected in [
        "summary.txt",
        "summary.json",
        "fig5_stage1_r2b_minus_r2a.csv",
        "fig6_stage2_r3b_minus_r3a.csv",
        "fig7_stage3_r2a_minus_r3a.csv",
        "fig8_stft_per_channel.csv",
        "fig9_dwt_per_channel.csv",
        "fig11_dwt_plsr_ranking.csv",
        "fig12_stft_svm_ranking.csv",
        "fig13_dwt_svm_ranking.csv",
        "classify_S01_dwt_svm.json",
        "classify_S02_stft_svm.json",
    ] {
        assert!(names.contains(&expected), "missing {expected} in {names:?}");
    }
    let fig7 = fs::read_to_string(a.path().join("fig7_stage3_r2a_minus_r3a.csv")).unwrap();
    assert_eq!(
        fig7.lines().next().unwrap(),
        "channel,delta,theta,alpha,beta"
    );
    assert_eq!(fig7.lines().count(), 21);
    let fig13 = fs::read_to_string(a.path().join("fig13_dwt_svm_ranking.csv")).unwrap();
    assert_eq!(
        fig13.lines().next().unwrap(),
        "n_channels,subjects,plsr_accuracy,plsr_sensitivity,plsr_specificity,svm_accuracy,svm_sensitivity,svm_specificity"
    );
    assert_eq!(fig13.lines().count(), 7);
    // every cell of the cross-evaluated prefix table is filled
    assert!(
        fig13
            .lines()
            .skip(1)
            .all(|l| !l.contains(",,") && !l.ends_with(',')),
        "{fig13}"
    );

    let out: ClassifyOutput =
        eegstage_cli::commands::read_json(&a.path().join("classify_S01_dwt_svm.json")).unwrap();
    let cross = out.cross.unwrap();
    assert_eq!(cross.kind, eegstage::classify::ClassifierKind::Plsr);
    assert_eq!(
        cross.combinations.len(),
        out.classification.search.combinations.len()
    );
    for (own, other) in out
        .classification
        .search
        .combinations
        .iter()
        .zip(&cross.combinations)
    {
        assert_eq!(own.channels, other.channels);
    }
}
