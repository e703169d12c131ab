//! Benchmark reports: one row per method × regime, rendered as an aligned text
//! table and as CSV. The CSV form parses back into an identical report.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub regime: String,
    pub trials: usize,
    pub seed_start: u64,
    pub seed_end: u64,
    pub pnl: f64,
    pub pnl_se: f64,
    pub sharpe: f64,
    pub sharpe_se: f64,
    /// Mean per-episode maximum drawdown in percent.
    pub mdd: f64,
    pub mdd_se: f64,
    /// Mean absolute terminal inventory.
    pub abs_inventory: f64,
    /// Mean fills per episode, both sides.
    pub fills: f64,
    /// Sharpe ratio undefined because every objective was identical.
    pub degenerate: bool,
}

const COLUMNS: [&str; 14] = [
    "method",
    "regime",
    "trials",
    "seed_start",
    "seed_end",
    "pnl",
    "pnl_se",
    "sharpe",
    "sharpe_se",
    "mdd",
    "mdd_se",
    "abs_inventory",
    "fills",
    "degenerate",
];

impl MetricsRow {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("metrics row with zero trials"));
        }
        if !(self.mdd >= 0.0) {
            return Err(invalid(format!("negative drawdown {}", self.mdd)));
        }
        for (name, v) in [("pnl_se", self.pnl_se), ("sharpe_se", self.sharpe_se), ("mdd_se", self.mdd_se)] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.method.clone(),
            self.regime.clone(),
            self.trials.to_string(),
            self.seed_start.to_string(),
            self.seed_end.to_string(),
            self.pnl.to_string(),
            self.pnl_se.to_string(),
            self.sharpe.to_string(),
            self.sharpe_se.to_string(),
            self.mdd.to_string(),
            self.mdd_se.to_string(),
            self.abs_inventory.to_string(),
            self.fills.to_string(),
            self.degenerate.to_string(),
        ]
    }

    fn from_fields(f: &[&str]) -> Result<Self> {
        fn num<T: std::str::FromStr>(s: &str, col: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Config(format!("bad `{col}` value `{s}`")))
        }
        Ok(Self {
            method: f[0].to_string(),
            regime: f[1].to_string(),
            trials: num(f[2], COLUMNS[2])?,
            seed_start: num(f[3], COLUMNS[3])?,
            seed_end: num(f[4], COLUMNS[4])?,
            pnl: num(f[5], COLUMNS[5])?,
            pnl_se: num(f[6], COLUMNS[6])?,
            sharpe: num(f[7], COLUMNS[7])?,
            sharpe_se: num(f[8], COLUMNS[8])?,
            mdd: num(f[9], COLUMNS[9])?,
            mdd_se: num(f[10], COLUMNS[10])?,
            abs_inventory: num(f[11], COLUMNS[11])?,
            fills: num(f[12], COLUMNS[12])?,
            degenerate: num(f[13], COLUMNS[13])?,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn new(rows: Vec<MetricsRow>) -> Self {
        Self { rows }
    }

    pub fn get(&self, method: &str, regime: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method && r.regime == regime)
    }

    /// Distinct values in first-seen order.
    fn distinct(&self, f: impl Fn(&MetricsRow) -> &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.iter().any(|x| x == f(r)) {
                out.push(f(r).to_string());
            }
        }
        out
    }

    pub fn methods(&self) -> Vec<String> {
        self.distinct(|r| &r.method)
    }

    pub fn regimes(&self) -> Vec<String> {
        self.distinct(|r| &r.regime)
    }

    pub fn to_csv(&self) -> String {
        let mut s = COLUMNS.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_fields().join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty report".into()))?;
        if header.split(',').collect::<Vec<_>>() != COLUMNS {
            return Err(Error::Config(format!("unexpected report header `{header}`")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != COLUMNS.len() {
                return Err(Error::Config(format!(
                    "report line {} has {} fields, expected {}",
                    i + 2,
                    fields.len(),
                    COLUMNS.len()
                )));
            }
            rows.push(MetricsRow::from_fields(&fields)?);
        }
        Ok(Self { rows })
    }

    /// Methods down the side, one PnL / SR / MDD column group per regime.
    pub fn to_table(&self) -> String {
        let regimes = self.regimes();
        let methods = self.methods();
        let mut header = vec!["Method".to_string()];
        for g in &regimes {
            header.push(format!("{g} PnL"));
            header.push(format!("{g} SR"));
            header.push(format!("{g} MDD%"));
        }
        let mut body: Vec<Vec<String>> = Vec::new();
        for m in &methods {
            let mut line = vec![m.clone()];
            for g in &regimes {
                match self.get(m, g) {
                    Some(r) => {
                        let flag = if r.degenerate { "*" } else { "" };
                        line.push(format!("{:.2}±{:.2}", r.pnl, r.pnl_se));
                        line.push(format!("{:.3}±{:.3}{flag}", r.sharpe, r.sharpe_se));
                        line.push(format!("{:.2}±{:.2}", r.mdd, r.mdd_se));
                    }
                    None => line.extend(std::iter::repeat_n("-".to_string(), 3)),
                }
            }
            body.push(line);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                std::iter::once(&header)
                    .chain(&body)
                    .map(|l| l[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let mut emit = |line: &[String]| {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| {
                    let pad = w - cell.chars().count();
                    if c == 0 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        };
        emit(&header);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        emit(&rule);
        for l in &body {
            emit(l);
        }
        if let Some(r) = self.rows.first() {
            let _ = writeln!(
                out,
                "\n{} trials per cell, seeds {}..={}; ± is one standard error; * marks a degenerate Sharpe ratio",
                r.trials, r.seed_start, r.seed_end
            );
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.txt`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        std::fs::write(stem.with_extension("csv"), self.to_csv())?;
        std::fs::write(stem.with_extension("txt"), self.to_table())?;
        Ok(())
    }

    pub fn load(csv: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(csv)?)
    }
}
