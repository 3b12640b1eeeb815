//! Deterministic table rendering (CSV, JSON, Markdown) for every analysis
//! output. Significance travels as an explicit flag column so text formats
//! carry the same information the figures encode with color. Numeric policy:
//! diffs use 2 decimals (3 for lexicon tables, 1 for modulation endpoints),
//! p-values 3 decimals with scientific notation below 1e-3. JSON output is
//! the raw table value, so it parses back bit-exact.

use serde::{Deserialize, Serialize};

use crate::analytics::{ComparisonTable, Measure};
use crate::corpus::CorpusStats;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(Error::Usage(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    FrequencyDiff,
    TemporalDiff,
    AdaptabilityDiff,
    LexiconDiff,
    ClassifierEval,
    Modulation,
    CorpusStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderSpec {
    pub format: Format,
    pub table_kind: TableKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationRow {
    pub behavior: String,
    pub group: String,
    pub baseline_freq: f64,
    pub modulated_freq: f64,
    pub delta: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModulationTable {
    pub rows: Vec<ModulationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f1_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStatsTable {
    pub group: String,
    pub stats: CorpusStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    Comparison(ComparisonTable),
    Modulation(ModulationTable),
    ClassifierEval(EvalTable),
    CorpusStats(CorpusStatsTable),
}

fn fmt_signed(x: f64, decimals: usize) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "+inf".into() } else { "-inf".into() };
    }
    format!("{x:+.decimals$}")
}

fn fmt_p(p: f64) -> String {
    if p != 0.0 && p < 1e-3 {
        format!("{p:.3e}")
    } else {
        format!("{p:.3}")
    }
}

fn significance_flag(significant: bool) -> &'static str {
    if significant {
        "significant"
    } else {
        "ns"
    }
}

fn comparison_kind_matches(measure: Measure, kind: TableKind) -> bool {
    matches!(
        (measure, kind),
        (Measure::FrequencyPct, TableKind::FrequencyDiff)
            | (Measure::FrequencyPct, TableKind::LexiconDiff)
            | (Measure::FirstTurn, TableKind::TemporalDiff)
            | (Measure::MeanPosition, TableKind::TemporalDiff)
            | (Measure::ConditionalPct, TableKind::AdaptabilityDiff)
    )
}

fn diff_decimals(kind: TableKind) -> usize {
    match kind {
        TableKind::LexiconDiff => 3,
        _ => 2,
    }
}

/// Header plus per-row cells; shared by the CSV and Markdown writers.
fn tabulate(table: &Table, kind: TableKind) -> (Vec<&'static str>, Vec<Vec<String>>) {
    match table {
        Table::Comparison(t) => {
            let header = vec![
                "behavior",
                "group",
                "diff",
                "significance",
                "baseline",
                "std",
                "t",
                "df",
                "p",
            ];
            let d = diff_decimals(kind);
            let rows = t
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.behavior.clone(),
                        t.compare_group.clone(),
                        fmt_signed(r.mean_diff, d),
                        significance_flag(r.significant).to_string(),
                        t.baseline_group.clone(),
                        format!("{:.3}", r.std),
                        fmt_signed(r.t, 3),
                        format!("{:.0}", r.df),
                        fmt_p(r.p),
                    ]
                })
                .collect();
            (header, rows)
        }
        Table::Modulation(t) => {
            let header = vec!["behavior", "group", "change", "delta", "significance"];
            let rows = t
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.behavior.clone(),
                        r.group.clone(),
                        format!("{:.1}% \u{2192} {:.1}%", r.baseline_freq, r.modulated_freq),
                        fmt_signed(r.delta, 1),
                        significance_flag(r.significant).to_string(),
                    ]
                })
                .collect();
            (header, rows)
        }
        Table::ClassifierEval(t) => {
            let header = vec!["label", "precision", "recall", "f1", "f1_std"];
            let rows = t
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.label.clone(),
                        format!("{:.3}", r.precision),
                        format!("{:.3}", r.recall),
                        format!("{:.3}", r.f1),
                        format!("{:.3}", r.f1_std),
                    ]
                })
                .collect();
            (header, rows)
        }
        Table::CorpusStats(t) => {
            let header = vec![
                "group",
                "speaker",
                "n_conversations",
                "n_utterances",
                "mean_words",
                "std_words",
            ];
            let mk = |speaker: &str, s: &crate::corpus::SpeakerStats| {
                vec![
                    t.group.clone(),
                    speaker.to_string(),
                    t.stats.n_conversations.to_string(),
                    s.n_utterances.to_string(),
                    format!("{:.1}", s.mean_words),
                    format!("{:.1}", s.std_words),
                ]
            };
            let rows = vec![
                mk("therapist", &t.stats.therapist),
                mk("client", &t.stats.client),
            ];
            (header, rows)
        }
    }
}

fn kind_matches(table: &Table, kind: TableKind) -> bool {
    match table {
        Table::Comparison(t) => comparison_kind_matches(t.measure, kind),
        Table::Modulation(_) => kind == TableKind::Modulation,
        Table::ClassifierEval(_) => kind == TableKind::ClassifierEval,
        Table::CorpusStats(_) => kind == TableKind::CorpusStats,
    }
}

fn csv_escape(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

pub fn render(table: &Table, spec: &RenderSpec) -> Result<String> {
    if !kind_matches(table, spec.table_kind) {
        return Err(Error::Precondition(format!(
            "table does not match kind {:?}",
            spec.table_kind
        )));
    }
    match spec.format {
        Format::Json => Ok(serde_json::to_string_pretty(table)?),
        Format::Csv => {
            let (header, rows) = tabulate(table, spec.table_kind);
            let mut out = header.join(",");
            out.push('\n');
            for row in rows {
                let cells: Vec<String> = row.iter().map(|c| csv_escape(c)).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            Ok(out)
        }
        Format::Markdown => {
            let (header, rows) = tabulate(table, spec.table_kind);
            let mut out = format!("| {} |\n", header.join(" | "));
            out.push_str(&format!(
                "|{}\n",
                " --- |".repeat(header.len())
            ));
            for row in rows {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
            Ok(out)
        }
    }
}

/// Parse a JSON rendering back into the table value.
pub fn parse_json(text: &str) -> Result<Table> {
    Ok(serde_json::from_str(text)?)
}
