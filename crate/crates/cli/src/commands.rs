//! `synth`, `ingest-check`, `bandselect`, `featurize` and `classify`.

use std::fs;
use std::io::Write;
use std::path::Path;

use eegstage::classify::{evaluate_prefixes, ClassifierKind, SearchStrategy, SetEvaluation};
use eegstage::features::assemble_dataset;
use eegstage::ingest::{load_recording, save_recording, validate_with};
use eegstage::pipeline::{
    band_selection, classify_dataset, BandSelection, FilteredSubject, SubjectClassification,
};
use eegstage::synth::{generate_preset, generate_recording, SynthSetup, SynthSpec};
use eegstage::{Band, ComparisonStage, Condition, Montage, Recording};
use serde::{Deserialize, Serialize};

use crate::args::{BandselectArgs, ClassifyArgs, FeaturizeArgs, IngestArgs, SynthArgs};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::study::{discover_subjects, find_manifests};

pub const STUDY_FILE: &str = "study.json";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("results serialise") + "\n";
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("cannot parse {}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

fn io(e: std::io::Error) -> CliError {
    CliError::data(format!("cannot write output: {e}"))
}

/// `2d` / `3d`, the session directory name inside a subject directory.
pub fn session_dir(condition: Condition) -> &'static str {
    match condition {
        Condition::TwoD => "2d",
        Condition::ThreeD => "3d",
    }
}

/// Synthesis spec file: one spec for both sessions, or one per session.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SpecFile {
    Pair {
        two_d: SynthSpec,
        three_d: SynthSpec,
    },
    Single(SynthSpec),
}

fn save_session(root: &Path, rec: &Recording, spec: &SynthSpec) -> CliResult<()> {
    let subject_dir = root.join(&rec.subject_id);
    save_recording(rec, subject_dir.join(session_dir(rec.condition)))?;
    write_json(
        &subject_dir.join(format!("synth_{}.json", session_dir(rec.condition))),
        spec,
    )
}

pub fn synth(args: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut setup = SynthSetup::default();
    if let Some(trials) = args.trials {
        setup.paradigm.trials_per_condition = trials;
    }
    setup.stft.hop = args.hop;
    setup.paradigm.validate()?;
    create_dir(&args.out)?;

    if let Some(preset) = args.preset {
        let seed = args.seed.unwrap_or(0);
        let (info, subjects) = generate_preset(preset, seed, args.subjects, &setup)?;
        for s in &subjects {
            save_session(&args.out, &s.two_d, &s.two_d_spec)?;
            save_session(&args.out, &s.three_d, &s.three_d_spec)?;
            writeln!(
                out,
                "{}: 2 sessions x {} trials",
                s.two_d.subject_id,
                s.two_d.trials.len()
            )
            .map_err(io)?;
        }
        write_json(&args.out.join(STUDY_FILE), &info)?;
        writeln!(
            out,
            "preset {} (seed {seed}): {} subjects written to {}",
            preset.name(),
            subjects.len(),
            args.out.display()
        )
        .map_err(io)?;
        return Ok(());
    }

    let path = args
        .spec
        .as_deref()
        .expect("clap requires --preset or --spec");
    let (mut two_d, mut three_d) =
        match read_json::<SpecFile>(path).map_err(|e| CliError::usage(e.message))? {
            SpecFile::Pair { two_d, three_d } => (two_d, three_d),
            SpecFile::Single(spec) => (spec.clone(), spec),
        };
    if let Some(seed) = args.seed {
        two_d.seed = seed;
        three_d.seed = seed;
    }
    let montage = Montage::standard();
    for (spec, condition) in [(&two_d, Condition::TwoD), (&three_d, Condition::ThreeD)] {
        spec.validate(&montage, &setup.paradigm)?;
        let rec = generate_recording(
            spec,
            condition,
            &setup.paradigm,
            &montage,
            setup.sample_rate,
        )?;
        save_session(&args.out, &rec, spec)?;
    }
    writeln!(
        out,
        "{}: 2 sessions written to {}",
        two_d.subject_id,
        args.out.display()
    )
    .map_err(io)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCheck {
    /// Relative to the checked path.
    pub manifest: String,
    pub subject: Option<String>,
    pub condition: Option<Condition>,
    pub trials: usize,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
    pub artifact_counts: Vec<usize>,
}

pub fn ingest_check(args: &IngestArgs, out: &mut dyn Write) -> CliResult<()> {
    let manifests = find_manifests(&args.data)?;
    let root = if args.data.is_file() {
        args.data.parent().unwrap_or(Path::new(""))
    } else {
        args.data.as_path()
    };
    let mut checks = Vec::new();
    for m in &manifests {
        let manifest = m.strip_prefix(root).unwrap_or(m).display().to_string();
        let check = match load_recording(m) {
            Ok(rec) => {
                let report = validate_with(&rec, args.artifact_threshold);
                SessionCheck {
                    manifest,
                    subject: Some(rec.subject_id.clone()),
                    condition: Some(rec.condition),
                    trials: rec.trials.len(),
                    errors: report.errors,
                    warnings: report.warnings,
                    artifact_counts: report.artifact_counts,
                }
            }
            Err(e) => SessionCheck {
                manifest,
                subject: None,
                condition: None,
                trials: 0,
                errors: vec![e.to_string()],
                warnings: Vec::new(),
                artifact_counts: Vec::new(),
            },
        };
        writeln!(
            out,
            "{}: {} {} trials, {} errors, {} warnings, {} artifact samples",
            check.manifest,
            check.subject.as_deref().unwrap_or("?"),
            check.trials,
            check.errors.len(),
            check.warnings.len(),
            check.artifact_counts.iter().sum::<usize>()
        )
        .map_err(io)?;
        for e in &check.errors {
            writeln!(out, "  error: {e}").map_err(io)?;
        }
        for w in &check.warnings {
            writeln!(out, "  warning: {w}").map_err(io)?;
        }
        checks.push(check);
    }
    let n_errors: usize = checks.iter().map(|c| c.errors.len()).sum();
    writeln!(out, "{} sessions checked, {n_errors} errors", checks.len()).map_err(io)?;
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_json(&dir.join("ingest_report.json"), &checks)?;
    }
    if n_errors > 0 {
        return Err(CliError::data(format!(
            "{n_errors} errors in sessions under {}",
            args.data.display()
        )));
    }
    Ok(())
}

fn print_config(cfg: &PipelineConfig, out: &mut dyn Write) -> CliResult<()> {
    out.write_all(cfg.to_json().as_bytes()).map_err(io)
}

pub fn bandselect_file(stage: ComparisonStage) -> String {
    format!("bandselect_stage{}.json", stage.name())
}

fn band_list(bands: &[Band]) -> String {
    if bands.is_empty() {
        return "none".to_string();
    }
    bands
        .iter()
        .map(|b| b.symbol())
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn bandselect(
    args: &BandselectArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let cfg = args.config()?;
    if args.common.print_config {
        return print_config(&cfg, out);
    }
    let subjects = discover_subjects(cfg.data_path()?, &cfg.subjects)?;
    let out_dir = cfg.out_dir()?;
    let mut filtered = Vec::with_capacity(subjects.len());
    for s in &subjects {
        writeln!(err, "filtering {}", s.id).map_err(io)?;
        filtered.push(FilteredSubject::new(&s.load()?, &cfg.spectral.preprocess)?);
    }
    create_dir(out_dir)?;
    for &stage in &cfg.stages {
        let sel = band_selection(&filtered, stage, &cfg.spectral.stft, &cfg.selection)?;
        write_json(&out_dir.join(bandselect_file(stage)), &sel)?;
        sel.report
            .average
            .write_csv(&out_dir.join(format!("diff_stage{}.csv", stage.name())))?;
        let ((c1, s1), (c2, s2)) = stage.sides();
        writeln!(
            out,
            "Stage {} ({} - {}), {} participants: dominant bands {}",
            stage.name(),
            eegstage::pipeline::side_label(c1, s1),
            eegstage::pipeline::side_label(c2, s2),
            sel.report.participants,
            band_list(&sel.report.selected)
        )
        .map_err(io)?;
        for f in &sel.report.bands {
            let channels: Vec<&str> = f.meaningful.iter().map(|m| m.channel.as_str()).collect();
            writeln!(
                out,
                "  {:<6} {:>2} meaningful channels {}",
                f.band.symbol(),
                f.meaningful.len(),
                channels.join(" ")
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

/// Applies `bands_from`, replacing the feature bands with a Stage III
/// selection.
fn resolve_bands(cfg: &mut PipelineConfig) -> CliResult<()> {
    let Some(path) = &cfg.bands_from else {
        return Ok(());
    };
    let sel: BandSelection = read_json(path)?;
    if sel.report.stage != Some(ComparisonStage::III) {
        return Err(CliError::usage(format!(
            "{} is not a Stage III band selection",
            path.display()
        )));
    }
    if sel.report.selected.is_empty() {
        return Err(CliError::data(format!(
            "{} selects no dominant bands",
            path.display()
        )));
    }
    cfg.features.bands = sel.report.selected;
    Ok(())
}

pub fn featurize(args: &FeaturizeArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let mut cfg = args.config()?;
    if args.common.print_config {
        return print_config(&cfg, out);
    }
    resolve_bands(&mut cfg)?;
    let subjects = discover_subjects(cfg.data_path()?, &cfg.subjects)?;
    let out_dir = cfg.out_dir()?;
    create_dir(out_dir)?;
    for s in &subjects {
        writeln!(err, "featurizing {}", s.id).map_err(io)?;
        let subject = s.load()?;
        let ds = assemble_dataset(
            &subject.two_d,
            &subject.three_d,
            &cfg.features,
            cfg.split_seed,
        )?;
        let path = out_dir.join(format!("features_{}_{}.csv", s.id, cfg.features.kind));
        ds.write_csv(&path)?;
        writeln!(
            out,
            "{}: {} epochs ({} train, {} test) x {} channels x {} features -> {}",
            s.id,
            ds.n_epochs(),
            ds.train.len(),
            ds.test.len(),
            ds.channels.len(),
            ds.feature_dim(),
            path.display()
        )
        .map_err(io)?;
    }
    Ok(())
}

/// The other classifier evaluated on the ranked prefixes of a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvaluation {
    pub kind: ClassifierKind,
    pub combinations: Vec<SetEvaluation>,
}

/// Contents of `classify_<subject>_<features>_<classifier>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOutput {
    pub classification: SubjectClassification,
    pub cross: Option<CrossEvaluation>,
}

pub fn classify_file(
    subject: &str,
    features: impl std::fmt::Display,
    kind: ClassifierKind,
) -> String {
    format!("classify_{subject}_{features}_{kind}.json")
}

fn other(kind: ClassifierKind) -> ClassifierKind {
    match kind {
        ClassifierKind::Plsr => ClassifierKind::Svm,
        ClassifierKind::Svm => ClassifierKind::Plsr,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

pub fn classify(args: &ClassifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let mut cfg = args.config()?;
    if args.common.print_config {
        return print_config(&cfg, out);
    }
    resolve_bands(&mut cfg)?;
    if cfg.cross_evaluate && cfg.strategy != SearchStrategy::RankedPrefix {
        return Err(CliError::usage("--cross needs the ranked-prefix strategy"));
    }
    let subjects = discover_subjects(cfg.data_path()?, &cfg.subjects)?;
    let out_dir = cfg.out_dir()?;
    create_dir(out_dir)?;
    writeln!(
        out,
        "{:<8} {:>5} {:>6} {:>6} {:>6} {:>6}  best channels",
        "subject", "n", "cv", "test", "sens", "spec"
    )
    .map_err(io)?;
    let mut accuracies = Vec::new();
    for s in &subjects {
        writeln!(err, "classifying {}", s.id).map_err(io)?;
        let subject = s.load()?;
        let ds = assemble_dataset(
            &subject.two_d,
            &subject.three_d,
            &cfg.features,
            cfg.split_seed,
        )?;
        drop(subject);
        let classification = classify_dataset(
            &s.id,
            &ds,
            &cfg.features,
            cfg.split_seed,
            cfg.classifier,
            cfg.strategy,
            &cfg.search,
        )?;
        let cross = if cfg.cross_evaluate {
            let ranking: Vec<usize> = classification
                .search
                .ranking
                .iter()
                .map(|c| ds.channel_index(c).expect("ranking uses dataset channels"))
                .collect();
            let kind = other(cfg.classifier);
            let combinations = evaluate_prefixes(
                &ds,
                &ranking,
                classification.search.combinations.len(),
                kind,
                &cfg.search.cv,
            )?;
            Some(CrossEvaluation { kind, combinations })
        } else {
            None
        };
        let best = classification.search.best_combination();
        writeln!(
            out,
            "{:<8} {:>5} {:>6.3} {:>6} {:>6} {:>6}  {}",
            s.id,
            best.channels.len(),
            best.cv_accuracy,
            fmt_opt(best.test.accuracy),
            fmt_opt(best.test.sensitivity),
            fmt_opt(best.test.specificity),
            best.channels.join(" ")
        )
        .map_err(io)?;
        accuracies.push(best.test.accuracy_or_zero());
        write_json(
            &out_dir.join(classify_file(&s.id, cfg.features.kind, cfg.classifier)),
            &ClassifyOutput {
                classification,
                cross,
            },
        )?;
    }
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    writeln!(
        out,
        "mean best-combination test accuracy ({} + {}): {mean:.3}",
        cfg.classifier, cfg.features.kind
    )
    .map_err(io)?;
    Ok(())
}
