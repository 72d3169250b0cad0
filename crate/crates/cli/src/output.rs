//! Trajectory CSV and summary JSON serialization.
//!
//! CSV schema, one row per round per seller:
//!
//! ```text
//! t,seller,price,demand,regret_inst,regret_cum,bonus,theta_0,...,theta_{N-1},dist_to_nash_sq
//! ```
//!
//! Floats are written with 17 significant digits so parsing them back
//! recovers the exact bit pattern; outputs are byte-reproducible.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use glmarket::lemmas::LemmaReport;
use glmarket::sim::Trajectory;

use crate::config::ExperimentConfig;
use crate::CliError;

/// 17 significant digits: lossless for f64 and deterministic.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let n = traj.n();
    let file = File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| CliError::Io(format!("write {}: {e}", path.display()));

    let mut header = String::from("t,seller,price,demand,regret_inst,regret_cum,bonus");
    for j in 0..n {
        header.push_str(&format!(",theta_{j}"));
    }
    header.push_str(",dist_to_nash_sq");
    writeln!(w, "{header}").map_err(io_err)?;

    for (k, rec) in traj.rounds.iter().enumerate() {
        for i in 0..n {
            let mut row = format!(
                "{},{},{},{},{},{},{}",
                rec.round,
                i,
                format_f64(rec.prices[i]),
                format_f64(rec.demands[i]),
                format_f64(rec.inst_regret[i]),
                format_f64(traj.cum_regret[i][k]),
                format_f64(rec.bonuses[i]),
            );
            for j in 0..n {
                row.push(',');
                row.push_str(&format_f64(rec.estimates[i][j]));
            }
            row.push(',');
            row.push_str(&format_f64(traj.nash_dist_sq[k]));
            writeln!(w, "{row}").map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub t: usize,
    pub seller: usize,
    pub price: f64,
    pub demand: f64,
    pub regret_inst: f64,
    pub regret_cum: f64,
    pub bonus: f64,
    pub theta: Vec<f64>,
    pub dist_to_nash_sq: f64,
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<CsvRow>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Io(format!("{}: empty file", path.display())))?
        .map_err(|e| CliError::Io(e.to_string()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 9 || cols[0] != "t" || !cols[7].starts_with("theta_") {
        return Err(CliError::Io(format!("{}: unexpected header", path.display())));
    }
    let n = cols.len() - 8;

    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| CliError::Io(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 + n {
            return Err(CliError::Io(format!(
                "{}: line {}: expected {} fields, got {}",
                path.display(),
                lineno + 2,
                8 + n,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, CliError> {
            s.parse::<f64>()
                .map_err(|e| CliError::Io(format!("{}: line {}: {e}", path.display(), lineno + 2)))
        };
        rows.push(CsvRow {
            t: fields[0]
                .parse()
                .map_err(|e| CliError::Io(format!("line {}: {e}", lineno + 2)))?,
            seller: fields[1]
                .parse()
                .map_err(|e| CliError::Io(format!("line {}: {e}", lineno + 2)))?,
            price: parse(fields[2])?,
            demand: parse(fields[3])?,
            regret_inst: parse(fields[4])?,
            regret_cum: parse(fields[5])?,
            bonus: parse(fields[6])?,
            theta: fields[7..7 + n]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<_, _>>()?,
            dist_to_nash_sq: parse(fields[7 + n])?,
        });
    }
    Ok(rows)
}

/// Metrics recomputed from parsed CSV rows (the round-trip oracle).
#[derive(Debug, Clone, PartialEq)]
pub struct CsvMetrics {
    pub regret_total: Vec<f64>,
    pub nash_dist_sum: f64,
    pub potential: f64,
}

/// Recomputes the summary ingredients from raw CSV rows. The potential is
/// replayed from the price columns by dense inversion.
pub fn metrics_from_rows(rows: &[CsvRow], n: usize, lambda: f64, c_mus: &[f64]) -> CsvMetrics {
    let t_max = rows.iter().map(|r| r.t).max().unwrap_or(0);
    let mut regret_total = vec![0.0; n];
    let mut nash_dist_sum = 0.0;
    let mut prices = vec![vec![0.0; n]; t_max + 1];
    for row in rows {
        prices[row.t][row.seller] = row.price;
        if row.t >= 1 {
            regret_total[row.seller] += row.regret_inst;
            if row.seller == 0 {
                nash_dist_sum += row.dist_to_nash_sq;
            }
        }
    }
    let potential = glmarket::sim::replay_potential(&prices, lambda, c_mus);
    CsvMetrics {
        regret_total,
        nash_dist_sum,
        potential,
    }
}

/// Log-log slope fit with a seed-bootstrap confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeEstimate {
    /// Per-seller least-squares slope of `log mean regret` vs `log T`.
    pub per_seller: Vec<f64>,
    /// Bootstrap 95% interval per seller.
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub t_ladder: Vec<usize>,
    /// Mean regret per ladder point per seller.
    pub mean_regret: Vec<Vec<f64>>,
}

/// Summary of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub config_echo: ExperimentConfig,
    pub nash_price: Vec<f64>,
    #[serde(rename = "L_gamma")]
    pub l_gamma: f64,
    pub regret_mean: Vec<f64>,
    pub regret_stderr: Vec<f64>,
    pub nash_dist_sum_mean: f64,
    #[serde(rename = "K_T_mean")]
    pub k_t_mean: f64,
    pub lemma_reports: Vec<LemmaReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<SlopeEstimate>,
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, summary)
        .map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))?;
    writeln!(w).map_err(|e| CliError::Io(e.to_string()))?;
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn read_summary(path: &Path) -> Result<Summary, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::Io(format!("parse {}: {e}", path.display())))
}

/// One report per line, machine-greppable.
pub fn write_lemma_reports(path: &Path, reports: &[LemmaReport]) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    for rep in reports {
        let line = serde_json::to_string(rep).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}
