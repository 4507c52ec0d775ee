//! Summary rows, curve tables and report files.

use std::path::Path;

use bode_limits_core::bode::{
    comp_sensitivity_bound, comp_sensitivity_integral, comp_sensitivity_integral_normalized,
    comp_sensitivity_rhs, sensitivity_bound, sensitivity_integral, sensitivity_rhs, QuadConfig,
    RhsBreakdown,
};
use bode_limits_core::lti::DEFAULT_AXIS_TOL;
use bode_limits_core::stochastic::fmt17;
use bode_limits_core::verify::{TheoremReport, Verdict};
use bode_limits_core::{BodeError, TransferFunction};
use serde::Serialize;

use crate::CliError;

/// Closed-form and quadrature values for one loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub label: String,
    pub sens_integral: f64,
    pub sens_error: f64,
    pub sens_rhs: Option<RhsBreakdown>,
    pub pole_bound: Option<f64>,
    /// Weighted complementary integral; normalized by `|T(0)|` when
    /// `comp_normalized` is set, absent when `T(0) = 0`.
    pub comp_integral: Option<f64>,
    pub comp_error: Option<f64>,
    pub comp_normalized: bool,
    pub comp_rhs: Option<RhsBreakdown>,
    pub zero_bound: Option<f64>,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn compute(label: &str, l: &TransferFunction, quad: &QuadConfig) -> Result<Self, CliError> {
        let mut notes = Vec::new();
        let sens = sensitivity_integral(l, quad)?;
        notes.extend(sens.warnings.iter().cloned());
        if !sens.converged {
            notes.push("sensitivity quadrature did not converge".into());
        }
        let sens_rhs = soft(sensitivity_rhs(l), &mut notes);
        let pole_bound = soft(sensitivity_bound(l), &mut notes);

        let (comp, comp_normalized) = match comp_sensitivity_integral(l, quad) {
            Ok(r) => (Some(r), false),
            Err(BodeError::Normalization { t0 }) => {
                notes.push(format!(
                    "|T(0)| = {t0:.6e}; complementary integral normalized by T(0)"
                ));
                (Some(comp_sensitivity_integral_normalized(l, quad)?), true)
            }
            Err(BodeError::ZeroComplementaryAtOrigin) => {
                notes.push("T(0) = 0; complementary integral undefined".into());
                (None, false)
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(c) = &comp {
            notes.extend(c.warnings.iter().cloned());
            if !c.converged {
                notes.push("complementary quadrature did not converge".into());
            }
        }
        let comp_rhs = if comp.is_some() {
            soft(comp_sensitivity_rhs(l), &mut notes)
        } else {
            None
        };
        let zero_bound = soft(comp_sensitivity_bound(l), &mut notes);
        Ok(Summary {
            label: label.to_string(),
            sens_integral: sens.value,
            sens_error: sens.error_estimate,
            sens_rhs,
            pole_bound,
            comp_integral: comp.as_ref().map(|c| c.value),
            comp_error: comp.as_ref().map(|c| c.error_estimate),
            comp_normalized,
            comp_rhs,
            zero_bound,
            notes,
        })
    }

    fn fields(&self, fmt: fn(f64) -> String) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
        vec![
            self.label.clone(),
            fmt(self.sens_integral),
            fmt(self.sens_error),
            opt(self.sens_rhs.map(|r| r.limit_term)),
            opt(self.sens_rhs.map(|r| r.root_sum)),
            opt(self.sens_rhs.map(|r| r.total)),
            opt(self.pole_bound),
            opt(self.comp_integral),
            opt(self.comp_error),
            self.comp_normalized.to_string(),
            opt(self.comp_rhs.map(|r| r.limit_term)),
            opt(self.comp_rhs.map(|r| r.root_sum)),
            opt(self.comp_rhs.map(|r| r.total)),
            opt(self.zero_bound),
            self.notes.join("; "),
        ]
    }
}

fn soft<T>(r: bode_limits_core::Result<T>, notes: &mut Vec<String>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(e.to_string());
            None
        }
    }
}

pub const SUMMARY_HEADER: [&str; 15] = [
    "loop",
    "sens_integral",
    "sens_error",
    "sens_limit_term",
    "sens_pole_sum",
    "sens_rhs",
    "pole_bound",
    "comp_integral",
    "comp_error",
    "comp_normalized",
    "comp_limit_term",
    "comp_zero_sum",
    "comp_rhs",
    "zero_bound",
    "notes",
];

/// Four significant digits.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = 3 - x.abs().log10().floor() as i32;
    if digits >= 0 {
        format!("{:.*}", digits as usize, x)
    } else {
        let p = 10f64.powi(-digits);
        format!("{}", (x / p).round() * p)
    }
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Precondition(BodeError::Csv(e))
}

/// `summary.csv` at full precision and `summary_rounded.csv` at four
/// significant digits.
pub fn write_summary(dir: &Path, rows: &[Summary]) -> Result<(), CliError> {
    write_rows(
        &dir.join("summary.csv"),
        &SUMMARY_HEADER,
        rows.iter().map(|r| r.fields(fmt17)),
    )?;
    write_rows(
        &dir.join("summary_rounded.csv"),
        &SUMMARY_HEADER,
        rows.iter().map(|r| r.fields(sig4)),
    )
}

pub fn summary_text(rows: &[Summary]) -> String {
    let mut s = String::new();
    for r in rows {
        s.push_str(&format!(
            "{}: sensitivity integral {}",
            r.label,
            sig4(r.sens_integral)
        ));
        if let Some(rhs) = r.sens_rhs {
            s.push_str(&format!(
                " = {} + {}",
                sig4(rhs.limit_term),
                sig4(rhs.root_sum)
            ));
        }
        if let Some(b) = r.pole_bound {
            s.push_str(&format!(", bound {}", sig4(b)));
        }
        s.push('\n');
        if let Some(c) = r.comp_integral {
            s.push_str(&format!(
                "{}: complementary integral{} {}",
                r.label,
                if r.comp_normalized {
                    " (normalized)"
                } else {
                    ""
                },
                sig4(c)
            ));
            if let Some(rhs) = r.comp_rhs {
                s.push_str(&format!(
                    " = {} + {}",
                    sig4(rhs.limit_term),
                    sig4(rhs.root_sum)
                ));
            }
            if let Some(b) = r.zero_bound {
                s.push_str(&format!(", bound {}", sig4(b)));
            }
            s.push('\n');
        }
    }
    s
}

pub fn s_mag(l: &TransferFunction, w: f64) -> f64 {
    (1.0 + l.at(w)).inv().norm()
}

pub fn t_mag(l: &TransferFunction, w: f64) -> f64 {
    let v = l.at(w);
    (v / (1.0 + v)).norm()
}

/// One column per `(name, loop, complementary)`; `|S|` or `|T|` on `grid`.
pub fn write_curves(
    path: &Path,
    grid: &[f64],
    cols: &[(&str, &TransferFunction, bool)],
) -> Result<(), CliError> {
    let mut header = vec!["omega"];
    header.extend(cols.iter().map(|c| c.0));
    let rows = grid.iter().map(|&w| {
        let mut r = vec![fmt17(w)];
        r.extend(
            cols.iter()
                .map(|(_, l, comp)| fmt17(if *comp { t_mag(l, w) } else { s_mag(l, w) })),
        );
        r
    });
    write_rows(path, &header, rows)
}

pub fn pole_zero_json(l: &TransferFunction) -> Result<String, CliError> {
    #[derive(Serialize)]
    struct Doc {
        open_loop: bode_limits_core::PoleZeroReport,
        closed_loop_poles: Vec<num_complex::Complex64>,
        closed_loop_stable: bool,
    }
    let st = l.is_closed_loop_stable(DEFAULT_AXIS_TOL)?;
    let doc = Doc {
        open_loop: l.classify(DEFAULT_AXIS_TOL),
        closed_loop_poles: st.poles,
        closed_loop_stable: st.stable,
    };
    Ok(serde_json::to_string_pretty(&doc).map_err(BodeError::from)? + "\n")
}

pub const REPORT_HEADER: [&str; 9] = [
    "name",
    "empirical_value",
    "analytic_value",
    "route_value",
    "bound_value",
    "abs_gap",
    "verdict",
    "tolerances",
    "diagnostics",
];

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Inconclusive => "inconclusive",
    }
}

/// `<name>.json` per report plus `reports.json`, or a single `reports.csv`.
pub fn write_reports(dir: &Path, reports: &[TheoremReport], csv: bool) -> Result<(), CliError> {
    if csv {
        let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        let rows = reports.iter().map(|r| {
            vec![
                r.name.clone(),
                opt(r.empirical_value),
                fmt17(r.analytic_value),
                opt(r.route_value),
                opt(r.bound_value),
                fmt17(r.abs_gap),
                verdict_str(r.verdict).to_string(),
                r.tolerances
                    .iter()
                    .map(|(k, v)| format!("{k}={}", fmt17(*v)))
                    .collect::<Vec<_>>()
                    .join(";"),
                r.diagnostics.join("; "),
            ]
        });
        return write_rows(&dir.join("reports.csv"), &REPORT_HEADER, rows);
    }
    for r in reports {
        let text = serde_json::to_string_pretty(r).map_err(BodeError::from)?;
        std::fs::write(dir.join(format!("{}.json", r.name)), text + "\n")?;
    }
    let all = serde_json::to_string_pretty(reports).map_err(BodeError::from)?;
    std::fs::write(dir.join("reports.json"), all + "\n")?;
    Ok(())
}

pub fn reports_text(reports: &[TheoremReport]) -> String {
    reports
        .iter()
        .map(|r| {
            let emp = r
                .empirical_value
                .or(r.route_value)
                .map(sig4)
                .unwrap_or_else(|| "-".into());
            format!(
                "{}: {} (measured {}, analytic {}, gap {:.3e})\n",
                r.name,
                verdict_str(r.verdict),
                emp,
                sig4(r.analytic_value),
                r.abs_gap
            )
        })
        .collect()
}
