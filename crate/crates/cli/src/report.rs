//! `report`: summary tables and one CSV per result figure (Figs. 5-13).

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use eegstage::classify::{ClassifierKind, EvalReport, SearchStrategy, SetEvaluation};
use eegstage::features::FeatureKind;
use eegstage::pipeline::{side_label, BandSelection};
use eegstage::{Band, ComparisonStage};
use serde::{Deserialize, Serialize};

use crate::args::ReportArgs;
use crate::commands::{
    bandselect_file, create_dir, read_json, write_json, write_text, ClassifyOutput,
};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: ComparisonStage,
    pub comparison: String,
    pub participants: usize,
    pub selected: Vec<Band>,
    pub bands: Vec<BandSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub band: Band,
    pub dominant: bool,
    pub meaningful_channels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub subject: String,
    pub features: FeatureKind,
    pub classifier: ClassifierKind,
    pub best_channels: Vec<String>,
    pub cv_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub features: FeatureKind,
    pub classifier: ClassifierKind,
    pub subjects: usize,
    pub test_accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub band_selection: Vec<StageSummary>,
    pub classification: Vec<ClassificationSummary>,
    pub methods: Vec<MethodSummary>,
    pub figures: Vec<String>,
}

const STAGES: [ComparisonStage; 3] = [
    ComparisonStage::I,
    ComparisonStage::II,
    ComparisonStage::III,
];
const KINDS: [ClassifierKind; 2] = [ClassifierKind::Plsr, ClassifierKind::Svm];
const FEATURES: [FeatureKind; 2] = [FeatureKind::Stft, FeatureKind::Dwt];

fn stage_summary(sel: &BandSelection, stage: ComparisonStage) -> StageSummary {
    let ((c1, s1), (c2, s2)) = stage.sides();
    StageSummary {
        stage,
        comparison: format!("{} - {}", side_label(c1, s1), side_label(c2, s2)),
        participants: sel.report.participants,
        selected: sel.report.selected.clone(),
        bands: sel
            .report
            .bands
            .iter()
            .map(|f| BandSummary {
                band: f.band,
                dominant: f.dominant,
                meaningful_channels: f.meaningful.iter().map(|m| m.channel.clone()).collect(),
            })
            .collect(),
    }
}

fn mean(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn text_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// Aligned plain-text table; the first column is left-aligned.
pub fn text_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| -> String {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "  {c:>w$}");
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&headers.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    out += &line(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>());
    for row in rows {
        out += &line(row);
    }
    out
}

fn csv(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut out = headers.join(",") + "\n";
    for row in rows {
        out += &(row.join(",") + "\n");
    }
    out
}

fn difference_csv(sel: &BandSelection, bands: &[Band]) -> String {
    let avg = &sel.report.average;
    let mut headers = vec!["channel".to_string()];
    headers.extend(bands.iter().map(|b| b.symbol().to_string()));
    let rows: Vec<Vec<String>> = avg
        .channels
        .iter()
        .zip(&avg.values)
        .map(|(ch, v)| {
            std::iter::once(ch.clone())
                .chain(bands.iter().map(|b| v[b.index()].to_string()))
                .collect()
        })
        .collect();
    csv(&headers, &rows)
}

fn metrics(r: &EvalReport) -> [Option<f64>; 3] {
    [r.accuracy, r.sensitivity, r.specificity]
}

const METRIC_NAMES: [&str; 3] = ["accuracy", "sensitivity", "specificity"];

/// Figs. 8 / 9: mean per-channel test metrics of both classifiers.
fn per_channel_csv(results: &[&ClassifyOutput]) -> Option<String> {
    let channels = results.first()?.classification.search.per_channel.clone();
    let channels: Vec<String> = channels.iter().map(|e| e.channels[0].clone()).collect();
    let mut headers = vec!["channel".to_string()];
    for k in KINDS {
        headers.extend(METRIC_NAMES.iter().map(|m| format!("{k}_{m}")));
    }
    let rows = channels
        .iter()
        .map(|ch| {
            let mut row = vec![ch.clone()];
            for k in KINDS {
                let evals: Vec<&SetEvaluation> = results
                    .iter()
                    .filter(|r| r.classification.search.kind == k)
                    .filter_map(|r| {
                        r.classification
                            .search
                            .per_channel
                            .iter()
                            .find(|e| &e.channels[0] == ch)
                    })
                    .collect();
                for m in 0..3 {
                    row.push(cell(mean(evals.iter().map(|e| metrics(&e.test)[m]))));
                }
            }
            row
        })
        .collect::<Vec<_>>();
    Some(csv(&headers, &rows))
}

/// Figs. 10-13: both classifiers on prefixes of the `ranking_by` ranking,
/// averaged over subjects per prefix length.
fn prefix_csv(
    results: &[&ClassifyOutput],
    ranking_by: ClassifierKind,
    with_rates: bool,
) -> Option<String> {
    let ranked: Vec<&ClassifyOutput> = results
        .iter()
        .copied()
        .filter(|r| {
            r.classification.search.kind == ranking_by
                && r.classification.search.strategy == SearchStrategy::RankedPrefix
        })
        .collect();
    if ranked.is_empty() {
        return None;
    }
    let max_len = ranked
        .iter()
        .map(|r| r.classification.search.combinations.len())
        .max()?;
    let shown: &[&str] = if with_rates {
        &METRIC_NAMES
    } else {
        &METRIC_NAMES[..1]
    };
    let mut headers = vec!["n_channels".to_string(), "subjects".to_string()];
    for k in KINDS {
        headers.extend(shown.iter().map(|m| format!("{k}_{m}")));
    }
    let rows = (0..max_len)
        .map(|i| {
            let own: Vec<&SetEvaluation> = ranked
                .iter()
                .filter_map(|r| r.classification.search.combinations.get(i))
                .collect();
            let cross: Vec<&SetEvaluation> = ranked
                .iter()
                .filter_map(|r| r.cross.as_ref().and_then(|c| c.combinations.get(i)))
                .collect();
            let mut row = vec![(i + 1).to_string(), own.len().to_string()];
            for k in KINDS {
                let evals = if k == ranking_by { &own } else { &cross };
                for m in 0..shown.len() {
                    row.push(cell(mean(evals.iter().map(|e| metrics(&e.test)[m]))));
                }
            }
            row
        })
        .collect::<Vec<_>>();
    Some(csv(&headers, &rows))
}

fn read_classify_outputs(dir: &Path) -> CliResult<Vec<ClassifyOutput>> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("classify_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| read_json(p)).collect()
}

pub fn report(args: &ReportArgs, out: &mut dyn Write) -> CliResult<()> {
    let dir = &args.results;
    if !dir.is_dir() {
        return Err(CliError::data(format!(
            "results directory {} does not exist",
            dir.display()
        )));
    }
    let mut selections = Vec::new();
    for stage in STAGES {
        let path = dir.join(bandselect_file(stage));
        if path.is_file() {
            selections.push((stage, read_json::<BandSelection>(&path)?));
        }
    }
    let mut classified = read_classify_outputs(dir)?;
    if selections.is_empty() && classified.is_empty() {
        return Err(CliError::data(format!(
            "no bandselect_stage*.json or classify_*.json results in {}",
            dir.display()
        )));
    }
    classified.sort_by(|a, b| {
        let key = |o: &ClassifyOutput| {
            (
                o.classification.features.kind as u8,
                o.classification.search.kind as u8,
                o.classification.subject.clone(),
            )
        };
        key(a).cmp(&key(b))
    });
    let out_dir = args.out.as_deref().unwrap_or(dir);
    create_dir(out_dir)?;

    let mut figures: Vec<(String, String)> = Vec::new();
    for (stage, sel) in &selections {
        let (name, bands): (&str, &[Band]) = match stage {
            ComparisonStage::I => ("fig5_stage1_r2b_minus_r2a.csv", &Band::ALL),
            ComparisonStage::II => ("fig6_stage2_r3b_minus_r3a.csv", &Band::ALL),
            ComparisonStage::III => ("fig7_stage3_r2a_minus_r3a.csv", &Band::ALL[..4]),
        };
        figures.push((name.to_string(), difference_csv(sel, bands)));
    }
    for f in FEATURES {
        let of_kind: Vec<&ClassifyOutput> = classified
            .iter()
            .filter(|o| o.classification.features.kind == f)
            .collect();
        let (per_channel, by_plsr, by_svm, rates) = match f {
            FeatureKind::Stft => (
                "fig8_stft_per_channel.csv",
                "fig10_stft_plsr_ranking.csv",
                "fig12_stft_svm_ranking.csv",
                false,
            ),
            FeatureKind::Dwt => (
                "fig9_dwt_per_channel.csv",
                "fig11_dwt_plsr_ranking.csv",
                "fig13_dwt_svm_ranking.csv",
                true,
            ),
        };
        if let Some(text) = per_channel_csv(&of_kind) {
            figures.push((per_channel.to_string(), text));
        }
        if let Some(text) = prefix_csv(&of_kind, ClassifierKind::Plsr, rates) {
            figures.push((by_plsr.to_string(), text));
        }
        if let Some(text) = prefix_csv(&of_kind, ClassifierKind::Svm, rates) {
            figures.push((by_svm.to_string(), text));
        }
    }
    figures.sort_by_key(|(name, _)| {
        name.trim_start_matches("fig")
            .split('_')
            .next()
            .and_then(|n| n.parse::<u32>().ok())
            .unwrap_or(u32::MAX)
    });

    let classification: Vec<ClassificationSummary> = classified
        .iter()
        .map(|o| {
            let best = o.classification.search.best_combination();
            ClassificationSummary {
                subject: o.classification.subject.clone(),
                features: o.classification.features.kind,
                classifier: o.classification.search.kind,
                best_channels: best.channels.clone(),
                cv_accuracy: best.cv_accuracy,
                test_accuracy: best.test.accuracy,
                sensitivity: best.test.sensitivity,
                specificity: best.test.specificity,
            }
        })
        .collect();
    let mut methods = Vec::new();
    for f in FEATURES {
        for k in KINDS {
            let rows: Vec<&ClassificationSummary> = classification
                .iter()
                .filter(|c| c.features == f && c.classifier == k)
                .collect();
            if rows.is_empty() {
                continue;
            }
            methods.push(MethodSummary {
                features: f,
                classifier: k,
                subjects: rows.len(),
                test_accuracy: mean(rows.iter().map(|r| r.test_accuracy)),
                sensitivity: mean(rows.iter().map(|r| r.sensitivity)),
                specificity: mean(rows.iter().map(|r| r.specificity)),
            });
        }
    }
    let summary = Summary {
        band_selection: selections
            .iter()
            .map(|(stage, sel)| stage_summary(sel, *stage))
            .collect(),
        classification,
        methods,
        figures: figures.iter().map(|(n, _)| n.clone()).collect(),
    };

    for (name, text) in &figures {
        write_text(&out_dir.join(name), text)?;
    }
    write_json(&out_dir.join("summary.json"), &summary)?;
    let text = summary_text(&summary);
    write_text(&out_dir.join("summary.txt"), &text)?;
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::data(format!("cannot write output: {e}")))?;
    Ok(())
}

fn summary_text(s: &Summary) -> String {
    let mut text = String::new();
    if !s.band_selection.is_empty() {
        text += "Band selection\n\n";
        let rows: Vec<Vec<String>> = s
            .band_selection
            .iter()
            .map(|st| {
                let mut row = vec![
                    st.stage.name().to_string(),
                    st.comparison.clone(),
                    st.participants.to_string(),
                ];
                row.extend(st.bands.iter().map(|b| {
                    let mark = if b.dominant { "*" } else { "" };
                    format!("{}{mark}", b.meaningful_channels.len())
                }));
                let selected: Vec<&str> = st.selected.iter().map(|b| b.symbol()).collect();
                row.push(if selected.is_empty() {
                    "none".into()
                } else {
                    selected.join(",")
                });
                row
            })
            .collect();
        let mut headers = vec!["stage", "comparison", "subjects"];
        headers.extend(Band::ALL.iter().map(|b| b.symbol()));
        headers.push("dominant");
        text += &text_table(&headers, &rows);
        text += "(band columns: meaningful channels; * marks a dominant band)\n\n";
    }
    if !s.methods.is_empty() {
        text += "Best channel combination, mean over subjects\n\n";
        let rows: Vec<Vec<String>> = s
            .methods
            .iter()
            .map(|m| {
                vec![
                    format!("{} + {}", m.classifier, m.features),
                    m.subjects.to_string(),
                    text_cell(m.test_accuracy),
                    text_cell(m.sensitivity),
                    text_cell(m.specificity),
                ]
            })
            .collect();
        text += &text_table(
            &[
                "method",
                "subjects",
                "accuracy",
                "sensitivity",
                "specificity",
            ],
            &rows,
        );
        text += "\nPer subject\n\n";
        let rows: Vec<Vec<String>> = s
            .classification
            .iter()
            .map(|c| {
                vec![
                    c.subject.clone(),
                    format!("{} + {}", c.classifier, c.features),
                    c.best_channels.len().to_string(),
                    format!("{:.3}", c.cv_accuracy),
                    text_cell(c.test_accuracy),
                    text_cell(c.sensitivity),
                    text_cell(c.specificity),
                    c.best_channels.join(" "),
                ]
            })
            .collect();
        text += &text_table(
            &[
                "subject",
                "method",
                "n",
                "cv",
                "accuracy",
                "sensitivity",
                "specificity",
                "channels",
            ],
            &rows,
        );
        text += "\n";
    }
    text += "Figure tables\n\n";
    for f in &s.figures {
        text += &format!("  {f}\n");
    }
    text
}
