//! Built-in F-16 flight-path-angle scenario (Mach 0.7, 10,000 ft).

use std::path::Path;

use bode_limits_core::bode::QuadConfig;
use bode_limits_core::lti::{log_grid, StateSpace};
use bode_limits_core::spectra::{comp_sensitivity_like, sensitivity_like, LikeCurve, WelchConfig};
use bode_limits_core::stochastic::{make_shaping_filter, simulate_closed_loop, SimConfig};
use bode_limits_core::verify::{
    check_all, waterbed_report, EmpiricalSetup, TheoremReport, Tolerances, WaterbedReport,
};
use bode_limits_core::{BodeError, TransferFunction};
use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::report::{self, write_curves, write_reports, write_summary, Summary};
use crate::{finish_reports, CliError};

pub const SAMPLES: usize = 1 << 21;
pub const DT: f64 = 1e-3;
pub const SEGMENT: usize = 1 << 18;
pub const SHAPING_BANDWIDTH: f64 = 100.0;
pub const SHAPING_VARIANCE: f64 = 1.0;
const EIG_MISMATCH: f64 = 1e-2;

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Factored plant, used as ground truth.
pub fn plant() -> TransferFunction {
    TransferFunction::from_zpk(
        &[real(-11.71), real(11.14)],
        &[real(-2.979), real(1.051), real(-0.4826)],
        0.117,
    )
    .expect("embedded plant is well formed")
}

/// The printed (rounded) state-space triple.
pub fn plant_state_space() -> StateSpace {
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[
            -11.707, 0.0, -75.666, 0.0, 11.141, -79.908, 0.723, 0.907, -1.844,
        ],
    );
    let b = DVector::from_vec(vec![0.0, 0.0, 0.117]);
    let c = RowDVector::from_vec(vec![0.0, 0.0, 1.0]);
    StateSpace::new(a, b, c, 0.0).expect("embedded state space is well formed")
}

/// `-0.4 - 0.06/s - 100/(1 + 100/s)`: proportional, integral and a
/// filtered derivative, summed term by term.
pub fn controller_c1() -> TransferFunction {
    let p = TransferFunction::constant(-0.4);
    let i = TransferFunction::from_coeffs(vec![-0.06], vec![0.0, 1.0]).unwrap();
    let d = TransferFunction::from_coeffs(vec![0.0, -100.0], vec![100.0, 1.0]).unwrap();
    p.parallel(&i).parallel(&d)
}

pub fn controller_c2() -> TransferFunction {
    controller_c1().scale(2.0)
}

/// Loop transfer functions `G C1` and `G C2`.
pub fn loops() -> (TransferFunction, TransferFunction) {
    let g = plant();
    (g.series(&controller_c1()), g.series(&controller_c2()))
}

/// Warnings from the structural checks on the embedded data.
pub fn consistency_warnings() -> Vec<String> {
    let mut out = Vec::new();
    let mut eig = plant_state_space().eigenvalues();
    let mut poles = plant().poles();
    let key = |a: &Complex64, b: &Complex64| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im));
    eig.sort_by(key);
    poles.sort_by(key);
    let worst = eig
        .iter()
        .zip(&poles)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if worst > EIG_MISMATCH {
        out.push(format!(
            "state-space eigenvalues differ from the factored poles by {worst:.3e}"
        ));
    }
    // the summed controller must match its expanded coefficients
    let expanded =
        TransferFunction::from_coeffs(vec![-6.0, -40.06, -100.4], vec![0.0, 100.0, 1.0]).unwrap();
    let c1 = controller_c1();
    let dev = log_grid(1e-2, 1e3, 50)
        .into_iter()
        .map(|w| ((c1.at(w) - expanded.at(w)) / expanded.at(w)).norm())
        .fold(0.0, f64::max);
    if dev > 1e-12 {
        out.push(format!("controller expansion mismatch {dev:.3e}"));
    }
    let c2 = controller_c2();
    let ratio_dev = log_grid(1e-2, 1e3, 50)
        .into_iter()
        .map(|w| (c2.at(w) / c1.at(w) - 2.0).norm())
        .fold(0.0, f64::max);
    if ratio_dev > 1e-12 {
        out.push(format!("C2 / C1 deviates from 2 by {ratio_dev:.3e}"));
    }
    out
}

pub fn sim_config(seed: u64) -> SimConfig {
    SimConfig::with_samples(DT, SAMPLES, seed)
}

struct Bundle {
    summaries: Vec<Summary>,
    grid: Vec<f64>,
    like: Vec<(String, LikeCurve)>,
    waterbed: WaterbedReport,
    reports: Vec<TheoremReport>,
    warnings: Vec<String>,
}

fn compute(seed: u64) -> Result<Bundle, CliError> {
    let (l1, l2) = loops();
    let quad = QuadConfig::default();
    let grid = log_grid(1e-2, 1e3, 400);
    let summaries = vec![
        Summary::compute("L1", &l1, &quad)?,
        Summary::compute("L2", &l2, &quad)?,
    ];
    let waterbed = waterbed_report(&l1, &l2, &grid, &quad)?;

    let shaping = make_shaping_filter(SHAPING_BANDWIDTH, SHAPING_VARIANCE)?;
    let sim = sim_config(seed);
    let welch = WelchConfig::with_segment(SEGMENT);
    let setup = EmpiricalSetup {
        shaping: &shaping,
        sim: &sim,
        welch: &welch,
        quad: &quad,
        tol: Tolerances::default(),
    };

    let like: Vec<(String, LikeCurve)> = [("c1", &l1), ("c2", &l2)]
        .par_iter()
        .map(|(tag, l)| -> Result<Vec<(String, LikeCurve)>, BodeError> {
            let rec = simulate_closed_loop(l, &shaping, &sim)?;
            Ok(vec![
                (format!("s_like_{tag}.csv"), sensitivity_like(&rec, &welch)?),
                (
                    format!("t_like_{tag}.csv"),
                    comp_sensitivity_like(&rec, &welch)?,
                ),
            ])
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut reports = Vec::new();
    for (tag, l) in [("l1", &l1), ("l2", &l2)] {
        for r in check_all(l, &setup) {
            let mut r = r?;
            r.name = format!("{tag}_{}", r.name);
            reports.push(r);
        }
    }

    Ok(Bundle {
        summaries,
        grid,
        like,
        waterbed,
        reports,
        warnings: consistency_warnings(),
    })
}

pub fn run(out: &Path, seed: u64, csv: bool) -> Result<String, CliError> {
    let b = compute(seed)?;
    let (l1, l2) = loops();

    std::fs::create_dir_all(out)?;
    write_summary(out, &b.summaries)?;
    write_curves(
        &out.join("curves.csv"),
        &b.grid,
        &[
            ("abs_s1", &l1, false),
            ("abs_s2", &l2, false),
            ("abs_t1", &l1, true),
            ("abs_t2", &l2, true),
        ],
    )?;
    std::fs::write(out.join("pole_zero.json"), report::pole_zero_json(&l1)?)?;
    for (name, curve) in &b.like {
        curve.write_csv(&out.join(name))?;
    }
    let wb = serde_json::to_string_pretty(&b.waterbed).map_err(BodeError::from)?;
    std::fs::write(out.join("waterbed.json"), wb + "\n")?;
    write_reports(out, &b.reports, csv)?;

    let mut text = String::new();
    for w in &b.warnings {
        text.push_str(&format!("warning: {w}\n"));
    }
    text.push_str(&report::summary_text(&b.summaries));
    text.push_str(&format!(
        "|S| crossovers {:?}, |T| crossovers {:?}\n",
        b.waterbed.s_crossovers, b.waterbed.t_crossovers
    ));
    text.push_str(&b.waterbed.summary);
    text.push('\n');
    match finish_reports(&b.reports) {
        Ok(r) => Ok(text + &r),
        Err(e) => {
            print!("{text}");
            Err(e)
        }
    }
}
