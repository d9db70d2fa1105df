//! Cross-model summary tables: per-trait ranks, average correlation,
//! relative gains, first-place counts and the Friedman test.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{self, FriedmanTest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PccRow {
    pub dataset: String,
    pub trait_name: String,
    pub pccs: Vec<f64>,
}

/// Correlations for every (dataset, trait) row and model column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PccTable {
    pub models: Vec<String>,
    pub rows: Vec<PccRow>,
}

impl PccTable {
    pub fn new(models: Vec<String>, rows: Vec<PccRow>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Stats("table has no models".into()));
        }
        if rows.is_empty() {
            return Err(Error::Stats("table has no rows".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.pccs.len() != models.len()) {
            return Err(Error::Stats(format!(
                "{} / {} has {} values for {} models",
                r.dataset,
                r.trait_name,
                r.pccs.len(),
                models.len()
            )));
        }
        if rows.iter().flat_map(|r| &r.pccs).any(|v| !v.is_finite()) {
            return Err(Error::Stats(
                "table contains a non-finite correlation".into(),
            ));
        }
        Ok(Self { models, rows })
    }

    /// Parses `dataset,trait,<model_1>,...` CSV text.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Stats("empty PCC table".into()))?
            .split(',')
            .collect();
        if header.len() < 3 {
            return Err(Error::Stats(
                "PCC table header needs dataset, trait and at least one model".into(),
            ));
        }
        let models = header[2..].iter().map(|m| m.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != header.len() {
                return Err(Error::Stats(format!(
                    "PCC table row {} has {} fields, expected {}",
                    i + 2,
                    f.len(),
                    header.len()
                )));
            }
            let pccs = f[2..]
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Stats(format!("row {}: not a number: {v:?}", i + 2)))
                })
                .collect::<Result<_>>()?;
            rows.push(PccRow {
                dataset: f[0].into(),
                trait_name: f[1].into(),
                pccs,
            });
        }
        Self::new(models, rows)
    }

    /// Assembles a table from scattered `(dataset, trait, model) -> pcc`
    /// cells. Rows keep first-seen order, as do models. Any missing cell is
    /// an error listing every gap.
    pub fn from_cells(cells: &[(String, String, String, f64)]) -> Result<Self> {
        let mut models: Vec<String> = Vec::new();
        let mut keys: Vec<(String, String)> = Vec::new();
        let mut map = BTreeMap::new();
        for (ds, tr, model, v) in cells {
            if !models.contains(model) {
                models.push(model.clone());
            }
            let key = (ds.clone(), tr.clone());
            if !keys.contains(&key) {
                keys.push(key.clone());
            }
            if map.insert((key, model.clone()), *v).is_some() {
                return Err(Error::Stats(format!(
                    "duplicate result for {ds} / {tr} / {model}"
                )));
            }
        }
        let mut missing = BTreeSet::new();
        let mut rows = Vec::new();
        for key in &keys {
            let mut pccs = Vec::new();
            for m in &models {
                match map.get(&(key.clone(), m.clone())) {
                    Some(v) => pccs.push(*v),
                    None => {
                        missing.insert(format!("{} / {} / {m}", key.0, key.1));
                    }
                }
            }
            rows.push(PccRow {
                dataset: key.0.clone(),
                trait_name: key.1.clone(),
                pccs,
            });
        }
        if !missing.is_empty() {
            return Err(Error::Stats(format!(
                "incomplete grid, missing: {}",
                missing.into_iter().collect::<Vec<_>>().join(", ")
            )));
        }
        Self::new(models, rows)
    }

    pub fn datasets(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.dataset.as_str()) {
                out.push(&r.dataset);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub dataset: String,
    pub trait_name: String,
    pub ranks: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub models: Vec<String>,
    pub reference: String,
    pub ranks: Vec<RankRow>,
    pub average_pcc: Vec<f64>,
    /// Gain of the reference over each model in percent; `None` for the
    /// reference itself.
    pub relative_gain: Vec<Option<f64>>,
    pub first_places: Vec<usize>,
    pub average_ranks: Vec<f64>,
    pub friedman: FriedmanTest,
}

impl AggregateReport {
    /// First-place count as `k/N`.
    pub fn final_ranking(&self) -> Vec<String> {
        let n = self.ranks.len();
        self.first_places
            .iter()
            .map(|k| format!("{k}/{n}"))
            .collect()
    }
}

/// Gain of `reference` over `other` in percent.
pub fn relative_gain(reference: f64, other: f64) -> Result<f64> {
    if other == 0.0 {
        return Err(Error::Stats(
            "relative gain over a zero average correlation".into(),
        ));
    }
    Ok(100.0 * (reference / other - 1.0))
}

/// `reference` defaults to the last model column.
pub fn aggregate_report(table: &PccTable, reference: Option<&str>) -> Result<AggregateReport> {
    let m = table.models.len();
    let reference = reference
        .unwrap_or_else(|| table.models.last().expect("non-empty"))
        .to_string();
    let r_idx = table
        .models
        .iter()
        .position(|x| *x == reference)
        .ok_or_else(|| {
            Error::Stats(format!(
                "reference model {reference:?} is not a table column"
            ))
        })?;

    let ranks: Vec<RankRow> = table
        .rows
        .iter()
        .map(|row| {
            let ranks = if m == 1 {
                vec![1.0]
            } else {
                stats::rank_models(&row.pccs)?
            };
            Ok(RankRow {
                dataset: row.dataset.clone(),
                trait_name: row.trait_name.clone(),
                ranks,
            })
        })
        .collect::<Result<_>>()?;
    let rank_rows: Vec<Vec<f64>> = ranks.iter().map(|r| r.ranks.clone()).collect();
    let average_ranks = stats::average_ranks(&rank_rows)?;
    let pcc_rows: Vec<Vec<f64>> = table.rows.iter().map(|r| r.pccs.clone()).collect();
    let average_pcc = stats::average_ranks(&pcc_rows)?;
    let relative_gain = (0..m)
        .map(|j| {
            if j == r_idx {
                Ok(None)
            } else {
                relative_gain(average_pcc[r_idx], average_pcc[j]).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let first_places = (0..m)
        .map(|j| rank_rows.iter().filter(|r| r[j] == 1.0).count())
        .collect();
    let friedman = stats::friedman_test(&average_ranks, table.rows.len())?;
    Ok(AggregateReport {
        models: table.models.clone(),
        reference,
        ranks,
        average_pcc,
        relative_gain,
        first_places,
        average_ranks,
        friedman,
    })
}

/// Shortest decimal form with at most `places` decimals.
fn num(v: f64, places: usize) -> String {
    let s = format!("{v:.places$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Rank table CSV: one rank row per trait, then the summary rows.
pub fn to_csv(report: &AggregateReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Dataset,Trait,{}", report.models.join(","));
    for r in &report.ranks {
        let cells: Vec<String> = r.ranks.iter().map(|v| num(*v, 1)).collect();
        let _ = writeln!(out, "{},{},{}", r.dataset, r.trait_name, cells.join(","));
    }
    let row = |label: &str, cells: Vec<String>| format!("{label},,{}\n", cells.join(","));
    out += &row(
        "Average PCC",
        report
            .average_pcc
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect(),
    );
    out += &row(
        "Average Relative % Gain",
        report
            .relative_gain
            .iter()
            .map(|g| g.map_or_else(|| "-".into(), |v| format!("{v:.2}")))
            .collect(),
    );
    out += &row("Final Ranking", report.final_ranking());
    out += &row(
        "Average Ranking",
        report.average_ranks.iter().map(|v| num(*v, 2)).collect(),
    );
    let f = &report.friedman;
    let _ = writeln!(
        out,
        "Friedman chi2,,{}",
        f.chi2
            .map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
    );
    let _ = writeln!(
        out,
        "Friedman p-value,,{}",
        f.p_value
            .map_or_else(|| "undefined".into(), |v| format!("{v:.3e}"))
    );
    out
}

pub fn to_json(report: &AggregateReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Grouped bar chart of one dataset's correlations: one group per trait,
/// one bar per model.
pub fn svg_bar_chart(table: &PccTable, dataset: &str) -> Result<String> {
    let rows: Vec<&PccRow> = table.rows.iter().filter(|r| r.dataset == dataset).collect();
    if rows.is_empty() {
        return Err(Error::Stats(format!("no rows for dataset {dataset:?}")));
    }
    let m = table.models.len();
    let (bar, gap, left, top, plot_h) = (14.0, 24.0, 50.0, 40.0, 240.0);
    let group_w = bar * m as f64 + gap;
    let legend_h = 18.0 * m as f64;
    let width = left + group_w * rows.len() as f64 + 20.0;
    let height = top + plot_h + 40.0 + legend_h;
    let vmax = rows
        .iter()
        .flat_map(|r| &r.pccs)
        .fold(0.0f64, |a, &b| a.max(b));
    let vmax = ((vmax * 10.0).ceil() / 10.0).max(0.1);
    let y = |v: f64| top + plot_h * (1.0 - v.max(0.0) / vmax);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="20" font-size="14">{}</text>"#,
        escape(dataset)
    );
    for t in 0..=4 {
        let v = vmax * f64::from(t) / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{:.1}" y1="{yy:.1}" y2="{yy:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            width - 20.0,
            left - 4.0,
            y(v) + 4.0,
            yy = y(v)
        );
    }
    for (g, row) in rows.iter().enumerate() {
        let x0 = left + gap / 2.0 + group_w * g as f64;
        for (j, &v) in row.pccs.iter().enumerate() {
            let x = x0 + bar * j as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="{bar}" height="{:.1}" fill="{}"><title>{}: {v:.4}</title></rect>"#,
                y(v),
                top + plot_h - y(v),
                PALETTE[j % PALETTE.len()],
                escape(&table.models[j])
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + bar * m as f64 / 2.0,
            top + plot_h + 16.0,
            escape(&row.trait_name)
        );
    }
    for (j, model) in table.models.iter().enumerate() {
        let ly = top + plot_h + 36.0 + 18.0 * j as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            ly - 9.0,
            PALETTE[j % PALETTE.len()],
            left + 16.0,
            ly,
            escape(model)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
