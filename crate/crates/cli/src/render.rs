//! Plain-text renderings of distributions, families, and reports.
//!
//! Numeric output uses 12 significant digits throughout. Outcome rows are
//! ordered exactly like the underlying flat probability arrays: the earliest
//! measured time is the slowest-varying index.

use hqmem::qrf::CertifyReport;
use hqmem::stats::{AnalysisReport, JointDistribution, StatisticsFamily};

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

/// Rounds to 12 significant digits; plain decimal in a moderate magnitude
/// range, scientific notation with a trimmed mantissa outside it.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-4..=14).contains(&exponent) {
        let scale = 10f64.powi(11 - exponent);
        ((x * scale).round() / scale).to_string()
    } else {
        let formatted = format!("{x:.11e}");
        let (mantissa, exp) = formatted
            .split_once('e')
            .expect("{:e} always contains an exponent");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exp}")
    }
}

fn outcome_headers(measured_times: &[usize]) -> Vec<String> {
    measured_times.iter().map(|t| format!("x{}", t + 1)).collect()
}

/// One row per outcome tuple: the outcome columns, then the probability.
fn distribution_rows(dist: &JointDistribution) -> Vec<Vec<String>> {
    (0..dist.probs().len())
        .map(|index| {
            let mut row: Vec<String> = dist
                .outcomes_of(index)
                .iter()
                .map(|x| x.to_string())
                .collect();
            row.push(sig12(dist.probs()[index]));
            row
        })
        .collect()
}

fn aligned(header: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let render_row = |row: &[String]| -> String {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(&format!("{:<width$}", cell, width = widths[i]));
        }
        line.trim_end().to_string()
    };
    let mut out = render_row(&header);
    out.push('\n');
    for row in &rows {
        out.push_str(&render_row(row));
        out.push('\n');
    }
    out
}

fn csv_line(cells: &[String]) -> String {
    cells.join(",")
}

pub fn distribution_table(dist: &JointDistribution) -> String {
    let mut header = outcome_headers(dist.measured_times());
    header.push("probability".to_string());
    format!(
        "pattern {}\n{}",
        dist.pattern(),
        aligned(header, distribution_rows(dist))
    )
}

pub fn distribution_csv(dist: &JointDistribution) -> String {
    let mut header = outcome_headers(dist.measured_times());
    header.push("probability".to_string());
    let mut out = csv_line(&header);
    out.push('\n');
    for row in distribution_rows(dist) {
        out.push_str(&csv_line(&row));
        out.push('\n');
    }
    out
}

pub fn family_table(family: &StatisticsFamily) -> String {
    let mut out = String::new();
    for (i, (_, dist)) in family.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&distribution_table(dist));
    }
    out
}

/// Family CSV uses one outcome column per time; unprobed times show `-`.
pub fn family_csv(family: &StatisticsFamily) -> String {
    let n = family.n_times();
    let mut header = vec!["pattern".to_string()];
    header.extend((0..n).map(|t| format!("x{}", t + 1)));
    header.push("probability".to_string());
    let mut out = csv_line(&header);
    out.push('\n');
    for (_, dist) in family.iter() {
        for index in 0..dist.probs().len() {
            let outcomes = dist.outcomes_of(index);
            let mut row = vec![dist.pattern()];
            for t in 0..n {
                match dist.measured_times().iter().position(|&m| m == t) {
                    Some(slot) => row.push(outcomes[slot].to_string()),
                    None => row.push("-".to_string()),
                }
            }
            row.push(sig12(dist.probs()[index]));
            out.push_str(&csv_line(&row));
            out.push('\n');
        }
    }
    out
}

fn check_row(name: &str, passed: bool, violation: f64, site: &Option<String>) -> Vec<String> {
    vec![
        name.to_string(),
        if passed { "pass" } else { "fail" }.to_string(),
        sig12(violation),
        site.clone().unwrap_or_else(|| "-".to_string()),
    ]
}

pub fn analysis_table(report: &AnalysisReport) -> String {
    let header = ["check", "result", "worst violation", "worst site"]
        .map(String::from)
        .to_vec();
    let rows = vec![
        check_row(
            "full-pattern Markov",
            report.markov_full.markovian,
            report.markov_full.worst_violation,
            &report.markov_full.worst_site,
        ),
        check_row(
            "sub-pattern Markov",
            report.markov_sub.markovian,
            report.markov_sub.worst_violation,
            &report.markov_sub.worst_site,
        ),
        check_row(
            "compatibility",
            report.compatibility.compatible,
            report.compatibility.worst_violation,
            &report.compatibility.worst_site,
        ),
        check_row(
            "Kolmogorov consistency",
            report.kolmogorov.consistent,
            report.kolmogorov.worst_violation,
            &report.kolmogorov.worst_site,
        ),
    ];
    format!(
        "{}\ntolerance {}\nverdict {}\n",
        aligned(header, rows).trim_end(),
        sig12(report.markov_full.tol),
        report.verdict
    )
}

pub fn analysis_csv(report: &AnalysisReport) -> String {
    let mut out = String::from("metric,value\n");
    let mut push = |k: &str, v: String| {
        out.push_str(&format!("{k},{v}\n"));
    };
    push("markov_full.passed", report.markov_full.markovian.to_string());
    push(
        "markov_full.worst_violation",
        sig12(report.markov_full.worst_violation),
    );
    push("markov_sub.passed", report.markov_sub.markovian.to_string());
    push(
        "markov_sub.worst_violation",
        sig12(report.markov_sub.worst_violation),
    );
    push(
        "compatibility.passed",
        report.compatibility.compatible.to_string(),
    );
    push(
        "compatibility.worst_violation",
        sig12(report.compatibility.worst_violation),
    );
    push(
        "kolmogorov.passed",
        report.kolmogorov.consistent.to_string(),
    );
    push(
        "kolmogorov.worst_violation",
        sig12(report.kolmogorov.worst_violation),
    );
    push("tolerance", sig12(report.markov_full.tol));
    push("verdict", report.verdict.to_string());
    out
}

pub fn certify_table(report: &CertifyReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("conclusion {}\n", report.conclusion));
    out.push_str(&format!("witness verdict {}\n", report.witness.verdict));
    out.push_str(&format!("best loss {}\n", sig12(report.fit.best_loss)));
    out.push_str(&format!(
        "best start {} of {}\n",
        report.fit.best_start,
        report.fit.per_start_losses.len()
    ));
    out.push_str(&format!(
        "ancilla dim {}, {} parameters per start\n",
        report.fit.ancilla_dim, report.fit.n_params
    ));
    out.push_str("per-start losses\n");
    for (i, loss) in report.fit.per_start_losses.iter().enumerate() {
        out.push_str(&format!("  start {i:>3}  {}\n", sig12(*loss)));
    }
    out
}

pub fn certify_csv(report: &CertifyReport) -> String {
    let mut out = String::from("metric,value\n");
    out.push_str(&format!("conclusion,{}\n", report.conclusion));
    out.push_str(&format!("witness_verdict,{}\n", report.witness.verdict));
    out.push_str(&format!("best_loss,{}\n", sig12(report.fit.best_loss)));
    out.push_str(&format!("best_start,{}\n", report.fit.best_start));
    out.push_str(&format!("ancilla_dim,{}\n", report.fit.ancilla_dim));
    out.push_str(&format!("n_params,{}\n", report.fit.n_params));
    for (i, loss) in report.fit.per_start_losses.iter().enumerate() {
        out.push_str(&format!("start_loss.{i},{}\n", sig12(*loss)));
    }
    out
}
