//! Bode integrals over the whole frequency axis.
//!
//! Integrands are even in omega, so every integral is computed as
//! `(1/pi) * int_0^inf f(w) w(w) dw`, which equals
//! `(1/2pi) * int_{-inf}^{inf}`. The half line is mapped onto
//! `[0, pi/2]` by `w = tan(theta)` and integrated with globally adaptive
//! Gauss-Kronrod (7/15) subdivision.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{format_roots, BodeError, Result};
use crate::lti::{TransferFunction, DEFAULT_AXIS_TOL};
use crate::poly::Polynomial;

/// Below this frequency the `1/w^2`-weighted integrand is extrapolated
/// instead of evaluated.
pub const SMALL_OMEGA: f64 = 1e-4;

/// Intervals narrower than this (in theta) are never split again.
const MIN_WIDTH: f64 = 1e-12;

/// Tolerance on `|T(0)| = 1` for the unnormalized weighted integral.
pub const UNIT_DC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum bisection depth below a seed interval.
    pub max_subdivisions: usize,
    /// Points of the uniform seed grid on `[0, pi/2]`.
    pub grid_seed_points: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_subdivisions: 60,
            grid_seed_points: 129,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(BodeError::invalid("quad", "tolerances must be positive"));
        }
        if self.max_subdivisions < 10 {
            return Err(BodeError::invalid(
                "quad",
                "max_subdivisions must be at least 10",
            ));
        }
        if self.grid_seed_points < 2 {
            return Err(BodeError::invalid(
                "quad",
                "grid_seed_points must be at least 2",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Unit,
    InverseOmegaSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BodeIntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
    /// Frequencies (rad/s) where the integrand is singular.
    pub singularities_detected: Vec<f64>,
    pub warnings: Vec<String>,
}

// Gauss-Kronrod 7/15 abscissae and weights.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: usize,
    singular: bool,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64, depth: usize) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut singular = false;
    let mut eval = |x: f64| {
        let v = g(x);
        if v.is_finite() {
            v
        } else {
            singular = true;
            0.0
        }
    };
    let fc = eval(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx);
        let f2 = eval(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    if singular {
        err = err.max(value.abs()).max(half.abs());
    }
    Segment {
        a,
        b,
        value,
        error: err,
        depth,
        singular,
    }
}

/// Globally adaptive Gauss-Kronrod integration of `g` over `[lo, hi]`.
fn adaptive<F: Fn(f64) -> f64 + Sync>(
    g: &F,
    lo: f64,
    hi: f64,
    cfg: &QuadConfig,
) -> (f64, f64, bool, Vec<(f64, f64)>) {
    let n_seed = cfg.grid_seed_points - 1;
    let h = (hi - lo) / n_seed as f64;
    let seeds: Vec<Segment> = (0..n_seed)
        .into_par_iter()
        .map(|k| {
            let a = lo + h * k as f64;
            let b = if k + 1 == n_seed {
                hi
            } else {
                lo + h * (k + 1) as f64
            };
            gauss_kronrod(g, a, b, 0)
        })
        .collect();

    let mut heap: BinaryHeap<Segment> = seeds.into_iter().collect();
    let mut frozen: Vec<Segment> = Vec::new();
    let budget = n_seed * cfg.max_subdivisions;
    let total = |heap: &BinaryHeap<Segment>, frozen: &[Segment]| {
        let mut all: Vec<&Segment> = heap.iter().chain(frozen.iter()).collect();
        all.sort_by(|x, y| x.a.total_cmp(&y.a));
        let v: f64 = all.iter().map(|s| s.value).sum();
        let e: f64 = all.iter().map(|s| s.error).sum();
        (v, e)
    };

    let (mut value, mut error) = total(&heap, &frozen);
    let mut steps = 0;
    while error > (cfg.rel_tol * value.abs()).max(cfg.abs_tol) && steps < budget {
        let Some(worst) = heap.pop() else { break };
        value -= worst.value;
        error -= worst.error;
        let mid = 0.5 * (worst.a + worst.b);
        if worst.b - worst.a < MIN_WIDTH || worst.depth >= cfg.max_subdivisions {
            // endpoint exclusion: a singular sliver contributes nothing more
            let mut w = worst;
            if w.singular {
                w.value = 0.0;
            }
            value += w.value;
            error += w.error;
            frozen.push(w);
        } else {
            for half in [
                gauss_kronrod(g, worst.a, mid, worst.depth + 1),
                gauss_kronrod(g, mid, worst.b, worst.depth + 1),
            ] {
                value += half.value;
                error += half.error;
                heap.push(half);
            }
        }
        steps += 1;
        // running sums drift; resum in a fixed order now and then
        if steps % 256 == 0 {
            (value, error) = total(&heap, &frozen);
        }
    }
    let (value, error) = total(&heap, &frozen);
    let converged = error <= (cfg.rel_tol * value.abs()).max(cfg.abs_tol);

    let deep = cfg.max_subdivisions.min(24);
    let mut singular: Vec<(f64, f64)> = heap
        .iter()
        .chain(frozen.iter())
        .filter(|s| s.singular || s.depth >= deep)
        .map(|s| (s.a, s.b))
        .collect();
    singular.sort_by(|x, y| x.0.total_cmp(&y.0));
    (value, error, converged, singular)
}

/// Groups adjacent deep intervals and reports their centers as frequencies.
fn cluster_singularities(intervals: &[(f64, f64)]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut current: Option<(f64, f64)> = None;
    for &(a, b) in intervals {
        current = match current {
            Some((ca, cb)) if a <= cb + 1e-9 => Some((ca, b.max(cb))),
            Some(c) => {
                out.push(0.5 * (c.0 + c.1));
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some(c) = current {
        out.push(0.5 * (c.0 + c.1));
    }
    out.into_iter().map(f64::tan).collect()
}

/// `(1/pi) * int_0^inf f(w) weight(w) dw` for an even integrand `f`.
pub fn integrate_half_line<F>(f: F, weight: Weight, cfg: &QuadConfig) -> BodeIntegralResult
where
    F: Fn(f64) -> f64 + Sync,
{
    let g = |theta: f64| -> f64 {
        let w = theta.tan();
        let c = theta.cos();
        let jac = 1.0 / (c * c);
        match weight {
            Weight::Unit => f(w) * jac,
            Weight::InverseOmegaSquared => weighted_value(&f, w) * jac,
        }
    };
    let (value, error, converged, singular) = adaptive(&g, 0.0, FRAC_PI_2, cfg);
    let singularities_detected = cluster_singularities(&singular);
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!(
            "quadrature did not reach tolerance: error estimate {:.3e}",
            error / PI
        ));
    }
    BodeIntegralResult {
        value: value / PI,
        error_estimate: error / PI,
        converged,
        singularities_detected,
        warnings,
    }
}

/// `f(w) / w^2`, continued by a quadratic through three nearby samples when
/// `w` is below [`SMALL_OMEGA`].
fn weighted_value<F: Fn(f64) -> f64>(f: &F, w: f64) -> f64 {
    if w >= SMALL_OMEGA {
        return f(w) / (w * w);
    }
    let h = SMALL_OMEGA;
    let (x1, x2, x3) = (h, 2.0 * h, 3.0 * h);
    let (y1, y2, y3) = (f(x1) / (x1 * x1), f(x2) / (x2 * x2), f(x3) / (x3 * x3));
    // Lagrange form through (x1,y1), (x2,y2), (x3,y3)
    let l1 = (w - x2) * (w - x3) / ((x1 - x2) * (x1 - x3));
    let l2 = (w - x1) * (w - x3) / ((x2 - x1) * (x2 - x3));
    let l3 = (w - x1) * (w - x2) / ((x3 - x1) * (x3 - x2));
    y1 * l1 + y2 * l2 + y3 * l3
}

/// `ln|P(jw) / Q(jw)|` with relative accuracy near `w = 0` and `w = inf`.
///
/// Around each end the ratio is written as `c * w^k * (1 + q)` where `q`
/// comes from a difference polynomial whose coefficients are formed once,
/// so `ln|1 + q|` keeps full precision when it is tiny.
#[derive(Debug, Clone)]
pub struct LogRatio {
    low: EndForm,
    high: EndForm,
}

#[derive(Debug, Clone)]
struct EndForm {
    log_scale: f64,
    power: f64,
    diff: Polynomial,
    base: Polynomial,
}

impl EndForm {
    /// Expansion in `s` about the origin: `P = s^a P1`, `Q = s^b Q1`.
    fn about_origin(p: &Polynomial, q: &Polynomial) -> Self {
        let (a, b) = (p.origin_multiplicity(), q.origin_multiplicity());
        let (p1, q1) = (p.shift_down(a), q.shift_down(b));
        let (p0, q0) = (p1.coeff(0), q1.coeff(0));
        let pn = p1.scale(1.0 / p0);
        let qn = q1.scale(1.0 / q0);
        EndForm {
            log_scale: (p0 / q0).abs().ln(),
            power: a as f64 - b as f64,
            diff: &pn - &qn,
            base: qn,
        }
    }

    fn eval(&self, x: Complex64, log_mag: f64) -> f64 {
        let q = self.diff.evaluate(x) / self.base.evaluate(x);
        self.log_scale + self.power * log_mag + 0.5 * (2.0 * q.re + q.norm_sqr()).ln_1p()
    }
}

impl LogRatio {
    pub fn new(p: &Polynomial, q: &Polynomial) -> Self {
        let low = EndForm::about_origin(p, q);
        // about infinity: substitute u = 1/s, P(s) = s^deg P * rev(P)(u)
        let mut high = EndForm::about_origin(&p.reversed(), &q.reversed());
        high.power = -(p.degree().unwrap_or(0) as f64 - q.degree().unwrap_or(0) as f64);
        LogRatio { low, high }
    }

    pub fn eval(&self, w: f64) -> f64 {
        if w <= 1.0 {
            self.low.eval(Complex64::new(0.0, w), w.ln())
        } else {
            self.high.eval(Complex64::new(0.0, -1.0 / w), -w.ln())
        }
    }
}

fn require_proper(l: &TransferFunction) -> Result<()> {
    if !l.is_proper() {
        return Err(BodeError::Improper {
            num: l.num().degree().unwrap_or(0),
            den: l.den().degree().unwrap_or(0),
        });
    }
    Ok(())
}

fn axis_roots(p: &Polynomial) -> Vec<Complex64> {
    if p.degree().unwrap_or(0) == 0 {
        return Vec::new();
    }
    p.roots()
        .unwrap_or_default()
        .into_iter()
        .filter(|r| r.re.abs() <= DEFAULT_AXIS_TOL)
        .collect()
}

fn merge_singularities(found: &mut Vec<f64>, axis: &[Complex64]) {
    for r in axis {
        let w = r.im.abs();
        if !found.iter().any(|f| (f - w).abs() <= 1e-6 * w.max(1.0)) {
            found.push(w);
        }
    }
    found.sort_by(f64::total_cmp);
}

/// `(1/2pi) int log|S(jw)| dw` by quadrature. For a biproper loop with
/// `|S(inf)| != 1` the integrand is normalized by `S(inf)` so the integral
/// stays finite, and a warning says so.
pub fn sensitivity_integral(l: &TransferFunction, cfg: &QuadConfig) -> Result<BodeIntegralResult> {
    cfg.validate()?;
    require_proper(l)?;
    l.require_closed_loop_stable(DEFAULT_AXIS_TOL)?;
    if l.is_zero() {
        return Ok(integrate_half_line(|_| 0.0, Weight::Unit, cfg));
    }
    let den = l.den().clone();
    let cl = l.closed_loop_polynomial();
    let mut warnings = Vec::new();
    let mut shift = 0.0;
    if l.relative_degree() == Some(0) {
        let s_inf = den.leading() / cl.leading();
        warnings.push(format!(
            "relative degree 0: log|S| tends to log|S(inf)| = {:.6e}",
            s_inf.abs().ln()
        ));
        if (s_inf.abs() - 1.0).abs() > 1e-12 {
            shift = s_inf.abs().ln();
            warnings.push("integrand normalized by |S(inf)|".to_string());
        }
    }
    let axis = axis_roots(&den);
    if !axis.is_empty() {
        warnings.push(format!(
            "S has zeros on the imaginary axis (integrable log singularities): {}",
            format_roots(&axis)
        ));
    }
    let ratio = LogRatio::new(&den, &cl);
    let mut res = integrate_half_line(|w| ratio.eval(w) - shift, Weight::Unit, cfg);
    merge_singularities(&mut res.singularities_detected, &axis);
    res.warnings.extend(warnings);
    Ok(res)
}

fn dc_gain(l: &TransferFunction) -> f64 {
    let cl = l.closed_loop_polynomial();
    l.num().coeff(0) / cl.coeff(0)
}

fn comp_integral(
    l: &TransferFunction,
    cfg: &QuadConfig,
    normalize: bool,
) -> Result<BodeIntegralResult> {
    cfg.validate()?;
    require_proper(l)?;
    l.require_closed_loop_stable(DEFAULT_AXIS_TOL)?;
    let t0 = dc_gain(l);
    if t0 == 0.0 || !t0.is_finite() {
        return Err(BodeError::ZeroComplementaryAtOrigin);
    }
    if !normalize && (t0.abs() - 1.0).abs() > UNIT_DC_TOL {
        return Err(BodeError::Normalization { t0: t0.abs() });
    }
    let shift = if normalize { t0.abs().ln() } else { 0.0 };
    let num = l.num().clone();
    let cl = l.closed_loop_polynomial();
    let mut warnings = Vec::new();
    let axis: Vec<Complex64> = axis_roots(&num);
    if !axis.is_empty() {
        warnings.push(format!(
            "T has zeros on the imaginary axis (integrable log singularities): {}",
            format_roots(&axis)
        ));
    }
    let ratio = LogRatio::new(&num, &cl);
    let mut res = integrate_half_line(|w| ratio.eval(w) - shift, Weight::InverseOmegaSquared, cfg);
    merge_singularities(&mut res.singularities_detected, &axis);
    res.warnings.extend(warnings);
    Ok(res)
}

/// `(1/2pi) int log|T(jw)| dw / w^2`. Requires `|T(0)| = 1`.
pub fn comp_sensitivity_integral(
    l: &TransferFunction,
    cfg: &QuadConfig,
) -> Result<BodeIntegralResult> {
    comp_integral(l, cfg, false)
}

/// `(1/2pi) int log|T(jw) / T(0)| dw / w^2`, defined for any `T(0) != 0`.
pub fn comp_sensitivity_integral_normalized(
    l: &TransferFunction,
    cfg: &QuadConfig,
) -> Result<BodeIntegralResult> {
    comp_integral(l, cfg, true)
}

/// Closed-form right-hand side split into its two contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhsBreakdown {
    pub limit_term: f64,
    pub root_sum: f64,
    pub total: f64,
}

/// `lim s (S(s) - S(inf)) / (2 S(inf)) + sum of unstable poles`, with the
/// limit read off the two leading coefficients of `den` and `den + num`.
pub fn sensitivity_rhs(l: &TransferFunction) -> Result<RhsBreakdown> {
    require_proper(l)?;
    l.require_closed_loop_stable(DEFAULT_AXIS_TOL)?;
    let den = l.den();
    let cl = l.closed_loop_polynomial();
    let n = den.degree().expect("nonzero denominator");
    if cl.degree() != Some(n) {
        return Err(BodeError::ZeroSensitivityAtInfinity);
    }
    let limit_term = if n == 0 {
        0.0
    } else {
        let (dn, dn1) = (den.coeff(n), den.coeff(n - 1));
        let (cn, cn1) = (cl.coeff(n), cl.coeff(n - 1));
        (dn1 * cn - cn1 * dn) / (2.0 * cn * dn)
    };
    let root_sum = sensitivity_bound(l)?;
    Ok(RhsBreakdown {
        limit_term,
        root_sum,
        total: limit_term + root_sum,
    })
}

/// `T'(0) / (2 T(0)) + sum of 1/z over non-minimum-phase zeros`, with the
/// derivative read off the two lowest-order coefficients of `num` and
/// `den + num`.
pub fn comp_sensitivity_rhs(l: &TransferFunction) -> Result<RhsBreakdown> {
    require_proper(l)?;
    l.require_closed_loop_stable(DEFAULT_AXIS_TOL)?;
    let num = l.num();
    let cl = l.closed_loop_polynomial();
    let (n0, n1) = (num.coeff(0), num.coeff(1));
    let (c0, c1) = (cl.coeff(0), cl.coeff(1));
    if n0 == 0.0 {
        return Err(BodeError::ZeroComplementaryAtOrigin);
    }
    let limit_term = (n1 * c0 - n0 * c1) / (2.0 * c0 * n0);
    let root_sum = comp_sensitivity_bound(l)?;
    Ok(RhsBreakdown {
        limit_term,
        root_sum,
        total: limit_term + root_sum,
    })
}

/// Sum of the real parts of the open-loop unstable poles. Exact integrators
/// at the origin contribute nothing; any other root inside the axis band is
/// an error.
pub fn sensitivity_bound(l: &TransferFunction) -> Result<f64> {
    let rep = l.classify(DEFAULT_AXIS_TOL);
    let ambiguous: Vec<Complex64> = rep
        .poles
        .iter()
        .copied()
        .filter(|p| p.re.abs() <= rep.tol && *p != Complex64::new(0.0, 0.0))
        .collect();
    if !ambiguous.is_empty() {
        return Err(BodeError::AxisRoot(format_roots(&ambiguous)));
    }
    let sum: Complex64 = rep.unstable_poles.iter().sum();
    debug_assert!(sum.im.abs() <= 1e-12 * sum.re.abs().max(1.0));
    Ok(sum.re)
}

/// Sum of `1/z` over the open-loop non-minimum-phase zeros. Any zero inside
/// the axis band is an error.
pub fn comp_sensitivity_bound(l: &TransferFunction) -> Result<f64> {
    let rep = l.classify(DEFAULT_AXIS_TOL);
    let ambiguous: Vec<Complex64> = rep
        .zeros
        .iter()
        .copied()
        .filter(|z| z.re.abs() <= rep.tol)
        .collect();
    if !ambiguous.is_empty() {
        return Err(BodeError::AxisRoot(format_roots(&ambiguous)));
    }
    let sum: Complex64 = rep.nmp_zeros.iter().map(|z| z.inv()).sum();
    debug_assert!(sum.im.abs() <= 1e-12 * sum.re.abs().max(1.0));
    Ok(sum.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn tf(num: &[f64], den: &[f64]) -> TransferFunction {
        TransferFunction::from_coeffs(num.to_vec(), den.to_vec()).unwrap()
    }

    fn case_study_loop() -> TransferFunction {
        let g = TransferFunction::from_zpk(
            &[r(-11.71), r(11.14)],
            &[r(-2.979), r(1.051), r(-0.4826)],
            0.117,
        )
        .unwrap();
        let c = tf(&[-6.0, -40.06, -100.4], &[0.0, 100.0, 1.0]);
        g.series(&c)
    }

    /// `(1/2pi) int log((w^2+a^2)/(w^2+b^2)) / 2 dw = (a - b) / 2`
    fn log_ratio_oracle(a: f64, b: f64) -> impl Fn(f64) -> f64 {
        move |w: f64| 0.5 * ((w * w + a * a) / (w * w + b * b)).ln()
    }

    #[test]
    fn closed_form_log_ratio() {
        let cfg = QuadConfig::default();
        let res = integrate_half_line(log_ratio_oracle(1.0, 2.0), Weight::Unit, &cfg);
        assert!((res.value + 0.5).abs() < 1e-6, "{res:?}");
        assert!(res.converged);
        let res = integrate_half_line(log_ratio_oracle(2.0, 1.0), Weight::Unit, &cfg);
        assert!((res.value - 0.5).abs() < 1e-6);
        let res = integrate_half_line(|_| 0.0, Weight::Unit, &cfg);
        assert_eq!(res.value, 0.0);
    }

    #[test]
    fn weighted_integral_of_first_order_lag() {
        // (1/2pi) int -log(1+w^2)/2 / w^2 dw = -1/2
        let res = integrate_half_line(
            |w| -0.5 * (1.0 + w * w).ln(),
            Weight::InverseOmegaSquared,
            &QuadConfig::default(),
        );
        assert!((res.value + 0.5).abs() < 1e-7, "{res:?}");
    }

    #[test]
    fn quadrature_is_deterministic() {
        let l = case_study_loop();
        let a = sensitivity_integral(&l, &QuadConfig::default()).unwrap();
        let b = sensitivity_integral(&l, &QuadConfig::default()).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn first_order_loop_sensitivity() {
        let l = tf(&[1.0], &[1.0, 1.0]);
        let res = sensitivity_integral(&l, &QuadConfig::default()).unwrap();
        assert!((res.value + 0.5).abs() < 1e-6, "{res:?}");
        let rhs = sensitivity_rhs(&l).unwrap();
        assert!((rhs.limit_term + 0.5).abs() < 1e-15);
        assert_eq!(rhs.root_sum, 0.0);
    }

    #[test]
    fn relative_degree_two_integrates_to_zero() {
        let l = tf(&[1.0], &[1.0, 2.0, 1.0]);
        let res = sensitivity_integral(&l, &QuadConfig::default()).unwrap();
        assert!(res.value.abs() < 1e-6, "{res:?}");
        let rhs = sensitivity_rhs(&l).unwrap();
        assert_eq!(rhs.total, 0.0);
    }

    #[test]
    fn integrator_loops() {
        let cfg = QuadConfig::default();
        let res = comp_sensitivity_integral(&tf(&[1.0], &[0.0, 1.0]), &cfg).unwrap();
        assert!((res.value + 0.5).abs() < 1e-6, "{res:?}");
        for k in [0.5, 2.0] {
            let l = tf(&[k], &[0.0, 1.0]);
            let res = comp_sensitivity_integral(&l, &cfg).unwrap();
            assert!((res.value + 0.5 / k).abs() < 1e-6, "k={k} {res:?}");
            let rhs = comp_sensitivity_rhs(&l).unwrap();
            assert!((rhs.limit_term + 0.5 / k).abs() < 1e-15);
            assert_eq!(rhs.root_sum, 0.0);
        }
        // integrator makes S(0) = 0: a log singularity at the origin
        let res = sensitivity_integral(&tf(&[1.0], &[0.0, 1.0]), &cfg).unwrap();
        assert!((res.value + 0.5).abs() < 1e-6, "{res:?}");
        assert!(res.singularities_detected.contains(&0.0));
    }

    #[test]
    fn comp_integral_refuses_without_integral_action() {
        let l = tf(&[1.0], &[1.0, 1.0]);
        assert!(matches!(
            comp_sensitivity_integral(&l, &QuadConfig::default()),
            Err(BodeError::Normalization { .. })
        ));
        // normalized form: T = 1/(s+2), T/T(0) = 2/(s+2), rhs = -1/4
        let res = comp_sensitivity_integral_normalized(&l, &QuadConfig::default()).unwrap();
        assert!((res.value + 0.25).abs() < 1e-6, "{res:?}");
        assert!((comp_sensitivity_rhs(&l).unwrap().total + 0.25).abs() < 1e-15);
    }

    #[test]
    fn unstable_or_improper_loops_are_rejected() {
        let unstable = tf(&[-2.0], &[1.0, 1.0]);
        assert!(matches!(
            sensitivity_integral(&unstable, &QuadConfig::default()),
            Err(BodeError::Unstable(_))
        ));
        let improper = tf(&[0.0, 0.0, 1.0], &[1.0, 1.0]);
        assert!(matches!(
            sensitivity_rhs(&improper),
            Err(BodeError::Improper { .. })
        ));
    }

    #[test]
    fn case_study_values() {
        let l = case_study_loop();
        let cfg = QuadConfig::default();
        let s = sensitivity_integral(&l, &cfg).unwrap();
        let rhs = sensitivity_rhs(&l).unwrap();
        assert!((rhs.limit_term - 5.8735).abs() < 1e-3, "{rhs:?}");
        assert!((rhs.root_sum - 1.051).abs() < 1e-9);
        assert!((s.value - rhs.total).abs() < 1e-5, "{s:?} vs {rhs:?}");
        assert!((s.value - 6.925).abs() / 6.925 < 0.02);

        let t = comp_sensitivity_integral(&l, &cfg).unwrap();
        let rhs = comp_sensitivity_rhs(&l).unwrap();
        assert!((rhs.limit_term - 0.825).abs() < 1e-3, "{rhs:?}");
        assert!((rhs.root_sum - 1.0 / 11.14).abs() < 1e-9);
        assert!((t.value - rhs.total).abs() < 1e-5, "{t:?} vs {rhs:?}");
        assert!((t.value - 0.915).abs() / 0.915 < 0.02);
    }

    #[test]
    fn bounds() {
        let l = case_study_loop();
        assert!((sensitivity_bound(&l).unwrap() - 1.051).abs() < 1e-9);
        assert!((comp_sensitivity_bound(&l).unwrap() - 8.977e-2).abs() < 1e-4);

        let mp = tf(&[2.0, 1.0], &[1.0, 3.0, 1.0]);
        assert_eq!(sensitivity_bound(&mp).unwrap(), 0.0);
        assert_eq!(comp_sensitivity_bound(&mp).unwrap(), 0.0);

        let pair = TransferFunction::from_zpk(
            &[],
            &[Complex64::new(1.0, 1.0), Complex64::new(1.0, -1.0), r(-3.0)],
            1.0,
        )
        .unwrap();
        assert!((sensitivity_bound(&pair).unwrap() - 2.0).abs() < 1e-12);

        let axis_zero = tf(&[1.0, 0.0, 1.0], &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            comp_sensitivity_bound(&axis_zero),
            Err(BodeError::AxisRoot(_))
        ));
    }

    /// Stable loop `k * prod(s - z) / prod(s - p)` with random left-half-plane
    /// closed-loop behavior, rejected when the closed loop is not stable.
    fn random_loop() -> impl Strategy<Value = TransferFunction> {
        (
            1usize..=3,
            prop::collection::vec(-10.0f64..-0.2, 3),
            prop::collection::vec(-10.0f64..-0.2, 3),
            0.2f64..5.0,
        )
            .prop_map(|(reldeg, poles, zeros, k)| {
                let n_poles = 3;
                let n_zeros = n_poles - reldeg;
                let p: Vec<Complex64> = poles.iter().map(|&x| r(x)).collect();
                let z: Vec<Complex64> = zeros[..n_zeros].iter().map(|&x| r(x)).collect();
                TransferFunction::from_zpk(&z, &p, k).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn quadrature_log_ratio_identity(a in 0.01f64..100.0, b in 0.01f64..100.0) {
            let res = integrate_half_line(log_ratio_oracle(a, b), Weight::Unit, &QuadConfig::default());
            prop_assert!((res.value - 0.5 * (a - b)).abs() <= 1e-6, "{} vs {}", res.value, 0.5 * (a - b));
        }

        #[test]
        fn sensitivity_quadrature_matches_closed_form(l in random_loop()) {
            prop_assume!(l.is_closed_loop_stable(DEFAULT_AXIS_TOL).map(|v| v.stable).unwrap_or(false));
            let q = sensitivity_integral(&l, &QuadConfig::default()).unwrap();
            let rhs = sensitivity_rhs(&l).unwrap();
            prop_assert!((q.value - rhs.total).abs() <= (1e-3 * q.value.abs()).max(1e-4),
                "{} vs {}", q.value, rhs.total);
            // the bound is only asserted where the limit term vanishes; a
            // relative-degree-one loop with positive gain sits below it
            if l.relative_degree().unwrap() >= 2 {
                prop_assert!(q.value >= sensitivity_bound(&l).unwrap() - 1e-4);
            }
        }

        #[test]
        fn comp_quadrature_matches_closed_form(l in random_loop()) {
            // add an integrator so that T(0) = 1
            let li = l.series(&TransferFunction::from_coeffs(vec![1.0], vec![0.0, 1.0]).unwrap());
            prop_assume!(li.is_closed_loop_stable(DEFAULT_AXIS_TOL).map(|v| v.stable).unwrap_or(false));
            let q = comp_sensitivity_integral(&li, &QuadConfig::default()).unwrap();
            let rhs = comp_sensitivity_rhs(&li).unwrap();
            prop_assert!((q.value - rhs.total).abs() <= (1e-3 * q.value.abs()).max(1e-4),
                "{} vs {}", q.value, rhs.total);
        }
    }
}
