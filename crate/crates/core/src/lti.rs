//! Rational transfer functions, closed-loop construction and realizations.
//!
//! No pole/zero cancellation is ever performed by the algebra here; a loop
//! with a hidden unstable mode keeps it. Near-cancellations are reported by
//! [`TransferFunction::classify`].

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{format_roots, BodeError, Result};
use crate::poly::{split_conjugate_pairs, Polynomial};

/// Default half-width of the band around the imaginary axis inside which a
/// root is neither stable nor unstable.
pub const DEFAULT_AXIS_TOL: f64 = 1e-9;

/// Relative distance under which a pole and a zero are reported as a
/// near-cancellation.
const CANCELLATION_WARN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    num: Polynomial,
    den: Polynomial,
}

impl TransferFunction {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self> {
        if den.is_zero() {
            return Err(BodeError::ZeroDenominator);
        }
        Ok(TransferFunction { num, den })
    }

    /// Ascending coefficient lists.
    pub fn from_coeffs(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        Self::new(Polynomial::new(num), Polynomial::new(den))
    }

    /// `gain * prod(s - z) / prod(s - p)`. Any nonzero gain is accepted; the
    /// sign does not move roots.
    pub fn from_zpk(zeros: &[Complex64], poles: &[Complex64], gain: f64) -> Result<Self> {
        if gain == 0.0 || !gain.is_finite() {
            return Err(BodeError::invalid("gain", "must be finite and nonzero"));
        }
        let num = Polynomial::from_roots(zeros, gain)?;
        let den = Polynomial::from_roots(poles, 1.0)?;
        Self::new(num, den)
    }

    pub fn constant(k: f64) -> Self {
        TransferFunction {
            num: Polynomial::constant(k),
            den: Polynomial::one(),
        }
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// `deg(den) - deg(num)`; the zero transfer function has infinite relative
    /// degree and reports `None`.
    pub fn relative_degree(&self) -> Option<isize> {
        let n = self.den.degree()? as isize;
        let m = self.num.degree()? as isize;
        Some(n - m)
    }

    pub fn is_proper(&self) -> bool {
        self.relative_degree().is_none_or(|r| r >= 0)
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.relative_degree().is_none_or(|r| r >= 1)
    }

    pub fn evaluate(&self, s: Complex64) -> Complex64 {
        self.num.evaluate(s) / self.den.evaluate(s)
    }

    /// Value at `s = j*omega`, no axis-pole checks.
    pub fn at(&self, omega: f64) -> Complex64 {
        self.evaluate(Complex64::new(0.0, omega))
    }

    pub fn series(&self, other: &TransferFunction) -> TransferFunction {
        TransferFunction {
            num: &self.num * &other.num,
            den: &self.den * &other.den,
        }
    }

    /// Sum of two transfer functions over the product denominator.
    pub fn parallel(&self, other: &TransferFunction) -> TransferFunction {
        if self.den == other.den {
            return TransferFunction {
                num: &self.num + &other.num,
                den: self.den.clone(),
            };
        }
        TransferFunction {
            num: &(&self.num * &other.den) + &(&other.num * &self.den),
            den: &self.den * &other.den,
        }
    }

    pub fn scale(&self, k: f64) -> TransferFunction {
        TransferFunction {
            num: self.num.scale(k),
            den: self.den.clone(),
        }
    }

    /// Characteristic polynomial `den + num` of the unity-feedback loop.
    pub fn closed_loop_polynomial(&self) -> Polynomial {
        &self.den + &self.num
    }

    fn closed_loop_den(&self) -> Result<Polynomial> {
        let cl = self.closed_loop_polynomial();
        if cl.is_zero() {
            return Err(BodeError::DegenerateLoop);
        }
        Ok(cl)
    }

    /// `S = 1 / (1 + L) = den / (den + num)`.
    pub fn sensitivity(&self) -> Result<TransferFunction> {
        Ok(TransferFunction {
            num: self.den.clone(),
            den: self.closed_loop_den()?,
        })
    }

    /// `T = L / (1 + L) = num / (den + num)`.
    pub fn complementary_sensitivity(&self) -> Result<TransferFunction> {
        Ok(TransferFunction {
            num: self.num.clone(),
            den: self.closed_loop_den()?,
        })
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.den.roots().unwrap_or_default()
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        self.num.roots().unwrap_or_default()
    }

    pub fn classify(&self, tol: f64) -> PoleZeroReport {
        let poles = self.poles();
        let zeros = self.zeros();
        let unstable_poles: Vec<_> = poles.iter().copied().filter(|p| p.re > tol).collect();
        let nmp_zeros: Vec<_> = zeros.iter().copied().filter(|z| z.re > tol).collect();
        let axis_warnings: Vec<_> = poles
            .iter()
            .chain(zeros.iter())
            .copied()
            .filter(|r| r.re.abs() <= tol)
            .collect();
        let mut near_cancellations = Vec::new();
        for p in &poles {
            for z in &zeros {
                if (p - z).norm() <= CANCELLATION_WARN * p.norm().max(1.0) {
                    near_cancellations.push((*p, *z));
                }
            }
        }
        PoleZeroReport {
            relative_degree: self.relative_degree().unwrap_or(0),
            poles,
            zeros,
            unstable_poles,
            nmp_zeros,
            axis_warnings,
            near_cancellations,
            tol,
        }
    }

    /// Closed-loop poles (roots of `den + num`) and the stability verdict.
    pub fn is_closed_loop_stable(&self, tol: f64) -> Result<StabilityVerdict> {
        let cl = self.closed_loop_den()?;
        let poles = if cl.degree().unwrap_or(0) >= 1 {
            cl.roots()?
        } else {
            Vec::new()
        };
        let on_axis: Vec<_> = poles
            .iter()
            .copied()
            .filter(|p| p.re.abs() <= tol)
            .collect();
        if !on_axis.is_empty() {
            return Err(BodeError::IndeterminateStability {
                tol,
                roots: format_roots(&on_axis),
            });
        }
        let stable = poles.iter().all(|p| p.re < -tol);
        Ok(StabilityVerdict { stable, poles })
    }

    /// Errors with [`BodeError::Unstable`] unless the closed loop is stable.
    pub fn require_closed_loop_stable(&self, tol: f64) -> Result<Vec<Complex64>> {
        let v = self.is_closed_loop_stable(tol)?;
        if !v.stable {
            let bad: Vec<_> = v.poles.iter().copied().filter(|p| p.re > 0.0).collect();
            return Err(BodeError::Unstable(format_roots(&bad)));
        }
        Ok(v.poles)
    }

    /// The auxiliary system `L(1/s)`, reduced by the common power of `s`.
    /// May be improper.
    pub fn auxiliary(&self) -> TransferFunction {
        let n = self.den.degree().expect("nonzero denominator");
        let Some(m) = self.num.degree() else {
            return self.clone();
        };
        let (num, den) = (self.num.reversed(), self.den.reversed());
        // L(1/s) = s^(n-m) rev(num) / rev(den)
        if n >= m {
            TransferFunction {
                num: &num * &Polynomial::monomial(1.0, n - m),
                den,
            }
        } else {
            TransferFunction {
                num,
                den: &den * &Polynomial::monomial(1.0, m - n),
            }
        }
    }

    /// The inverse auxiliary system `1 / L(1/s)`.
    ///
    /// Requires that `L` has no more zeros than poles at the origin, which is
    /// exactly the condition for the result to be proper.
    pub fn invert_frequency(&self) -> Result<TransferFunction> {
        let zeros_at_origin = self.num.origin_multiplicity();
        let poles_at_origin = self.den.origin_multiplicity();
        if self.num.is_zero() || zeros_at_origin > poles_at_origin {
            return Err(BodeError::OriginCondition {
                zeros_at_origin: if self.num.is_zero() {
                    usize::MAX
                } else {
                    zeros_at_origin
                },
                poles_at_origin,
            });
        }
        let n = self.den.degree().expect("nonzero denominator");
        let m = self.num.degree().expect("nonzero numerator");
        let (rnum, rden) = (self.num.reversed(), self.den.reversed());
        let inv = if n >= m {
            TransferFunction {
                num: rden,
                den: &rnum * &Polynomial::monomial(1.0, n - m),
            }
        } else {
            TransferFunction {
                num: &rden * &Polynomial::monomial(1.0, m - n),
                den: rnum,
            }
        };
        debug_assert!(inv.is_proper());
        Ok(inv)
    }

    /// Controllable canonical realization.
    pub fn realize(&self) -> Result<StateSpace> {
        if !self.is_proper() {
            return Err(BodeError::Improper {
                num: self.num.degree().unwrap_or(0),
                den: self.den.degree().unwrap_or(0),
            });
        }
        let n = self.den.degree().expect("nonzero denominator");
        let lead = self.den.leading();
        let den: Vec<f64> = self.den.coeffs().iter().map(|c| c / lead).collect();
        let num: Vec<f64> = (0..=n).map(|k| self.num.coeff(k) / lead).collect();
        let d = num[n];
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            if n > 0 {
                a[(n - 1, j)] = -den[j];
            }
        }
        let mut b = DVector::zeros(n);
        if n > 0 {
            b[n - 1] = 1.0;
        }
        let c = RowDVector::from_iterator(n, (0..n).map(|k| num[k] - d * den[k]));
        Ok(StateSpace { a, b, c, d })
    }

    /// `tf(j*omega)` on a grid, refusing grid points that hit a pole.
    pub fn frequency_response(&self, grid: &[f64]) -> Result<Vec<Complex64>> {
        let poles = self.poles();
        let offenders: Vec<String> = grid
            .iter()
            .filter(|&&w| {
                poles
                    .iter()
                    .any(|p| (p - Complex64::new(0.0, w)).norm() <= DEFAULT_AXIS_TOL)
            })
            .map(|w| format!("{w}"))
            .collect();
        if !offenders.is_empty() {
            return Err(BodeError::AxisPole(offenders.join(", ")));
        }
        Ok(grid.iter().map(|&w| self.at(w)).collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PoleZeroReport {
    pub poles: Vec<Complex64>,
    pub zeros: Vec<Complex64>,
    pub unstable_poles: Vec<Complex64>,
    pub nmp_zeros: Vec<Complex64>,
    pub relative_degree: isize,
    pub axis_warnings: Vec<Complex64>,
    /// (pole, zero) pairs that nearly cancel.
    pub near_cancellations: Vec<(Complex64, Complex64)>,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub poles: Vec<Complex64>,
}

/// Single-input single-output realization `x' = Ax + Bu, y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
    pub d: f64,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: RowDVector<f64>, d: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || c.len() != n {
            return Err(BodeError::invalid(
                "state_space",
                format!(
                    "inconsistent dimensions A {}x{}, B {}, C {}",
                    a.nrows(),
                    a.ncols(),
                    b.len(),
                    c.len()
                ),
            ));
        }
        Ok(StateSpace { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `C (sI - A)^-1 B + D`.
    pub fn evaluate(&self, s: Complex64) -> Complex64 {
        let n = self.order();
        if n == 0 {
            return Complex64::new(self.d, 0.0);
        }
        let m = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(i, j)]
        });
        let rhs = DVector::from_iterator(n, self.b.iter().map(|&x| Complex64::new(x, 0.0)));
        match m.lu().solve(&rhs) {
            Some(x) => {
                let y: Complex64 = self.c.iter().zip(x.iter()).map(|(c, xi)| xi * *c).sum();
                y + self.d
            }
            None => Complex64::new(f64::INFINITY, 0.0),
        }
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        if self.order() == 0 {
            return Vec::new();
        }
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    pub fn is_stable(&self) -> bool {
        self.eigenvalues().iter().all(|e| e.re < 0.0)
    }
}

/// Logarithmically spaced grid of `n` points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

/// Checks that a root list is closed under conjugation.
pub fn check_conjugate_closed(roots: &[Complex64]) -> Result<()> {
    split_conjugate_pairs(roots).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn r(x: f64) -> Complex64 {
        c(x, 0.0)
    }

    fn plant() -> TransferFunction {
        TransferFunction::from_zpk(
            &[r(-11.71), r(11.14)],
            &[r(-2.979), r(1.051), r(-0.4826)],
            0.117,
        )
        .unwrap()
    }

    fn controller() -> TransferFunction {
        let p = TransferFunction::constant(-0.4);
        let i = TransferFunction::from_coeffs(vec![-0.06], vec![0.0, 1.0]).unwrap();
        let d = TransferFunction::from_coeffs(vec![0.0, -100.0], vec![100.0, 1.0]).unwrap();
        p.parallel(&i).parallel(&d)
    }

    fn rel_close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1e-300)
    }

    #[test]
    fn zpk_construction() {
        let tf = TransferFunction::from_zpk(&[], &[r(-1.0)], 1.0).unwrap();
        assert_eq!(tf.num().coeffs(), &[1.0]);
        assert_eq!(tf.den().coeffs(), &[1.0, 1.0]);
        assert!(TransferFunction::from_zpk(&[c(1.0, 2.0)], &[r(-1.0)], 1.0).is_err());
        assert!(TransferFunction::from_zpk(&[], &[r(-1.0)], 0.0).is_err());

        let g = plant();
        let mut z = g.zeros();
        z.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((z[0] - r(-11.71)).norm() < 1e-8 && (z[1] - r(11.14)).norm() < 1e-8);
        assert!((g.num().leading() - 0.117).abs() < 1e-15);
    }

    #[test]
    fn series_identity_and_product() {
        let a = TransferFunction::from_coeffs(vec![1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(a.series(&TransferFunction::constant(1.0)), a);
        let b = TransferFunction::from_coeffs(vec![1.0], vec![2.0, 1.0]).unwrap();
        let ab = a.series(&b);
        assert_eq!(ab.den().coeffs(), &[2.0, 3.0, 1.0]);

        let (g, k) = (plant(), controller());
        let l = g.series(&k);
        for w in log_grid(0.01, 1000.0, 10) {
            assert!(rel_close(l.at(w), g.at(w) * k.at(w), 1e-12));
        }
    }

    #[test]
    fn controller_structure() {
        let k = controller();
        assert_eq!(k.den().coeffs(), &[0.0, 100.0, 1.0]);
        let expect = [-6.0, -40.06, -100.4];
        for (a, b) in k.num().coeffs().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn sensitivity_functions() {
        let zero = TransferFunction::constant(0.0);
        let s = zero.sensitivity().unwrap();
        assert_eq!(s.evaluate(c(0.3, 2.0)), c(1.0, 0.0));

        let l = TransferFunction::from_coeffs(vec![1.0], vec![1.0, 1.0]).unwrap();
        let s = l.sensitivity().unwrap();
        assert_eq!(s.num().coeffs(), &[1.0, 1.0]);
        assert_eq!(s.den().coeffs(), &[2.0, 1.0]);
        let t = l.complementary_sensitivity().unwrap();
        assert_eq!(t.num().coeffs(), &[1.0]);
        assert_eq!(t.den().coeffs(), &[2.0, 1.0]);

        let k = 3.0;
        let t = TransferFunction::from_coeffs(vec![k], vec![0.0, 1.0])
            .unwrap()
            .complementary_sensitivity()
            .unwrap();
        assert_eq!(t.den().coeffs(), &[k, 1.0]);
        assert_eq!(t.evaluate(c(0.0, 0.0)), c(1.0, 0.0));

        let degenerate = TransferFunction::constant(-1.0);
        assert!(matches!(
            degenerate.sensitivity(),
            Err(BodeError::DegenerateLoop)
        ));
    }

    #[test]
    fn case_study_sensitivity_pointwise() {
        let l = plant().series(&controller());
        let s = l.sensitivity().unwrap();
        let t = l.complementary_sensitivity().unwrap();
        for w in [0.1, 1.0, 10.0] {
            let lw = l.at(w);
            assert!(rel_close(s.at(w), 1.0 / (1.0 + lw), 1e-12));
            assert!(rel_close(t.at(w), lw / (1.0 + lw), 1e-12));
            assert!((s.at(w) + t.at(w) - 1.0).norm() < 1e-12);
        }
        // integral action: T(0) from the lowest-order coefficients
        let t0 = t.num().coeff(0) / t.den().coeff(0);
        assert!((t0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn s_plus_t_is_one_in_rational_arithmetic() {
        let l = plant().series(&controller());
        let s = l.sensitivity().unwrap();
        let t = l.complementary_sensitivity().unwrap();
        assert_eq!(s.den(), t.den());
        let sum = s.num() + t.num();
        let den = s.den();
        let scale = den.coeffs().iter().fold(0.0f64, |m, c| m.max(c.abs()));
        for k in 0..=den.degree().unwrap() {
            assert!((sum.coeff(k) - den.coeff(k)).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn classification() {
        let rep = plant().classify(DEFAULT_AXIS_TOL);
        assert_eq!(rep.unstable_poles.len(), 1);
        assert!((rep.unstable_poles[0].re - 1.051).abs() < 1e-9);
        assert_eq!(rep.nmp_zeros.len(), 1);
        assert!((rep.nmp_zeros[0].re - 11.14).abs() < 1e-9);
        assert_eq!(rep.relative_degree, 1);

        let stable = TransferFunction::from_coeffs(vec![1.0], vec![1.0, 1.0]).unwrap();
        let rep = stable.classify(DEFAULT_AXIS_TOL);
        assert!(rep.unstable_poles.is_empty() && rep.nmp_zeros.is_empty());

        let integ = TransferFunction::from_coeffs(vec![1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(integ.classify(DEFAULT_AXIS_TOL).axis_warnings, vec![r(0.0)]);

        let cancel = TransferFunction::from_coeffs(vec![1.0, 1.0], vec![2.0, 3.0, 1.0]).unwrap();
        assert_eq!(
            cancel.classify(DEFAULT_AXIS_TOL).near_cancellations.len(),
            1
        );
    }

    #[test]
    fn frequency_inversion() {
        // double integrator with first-order actuator
        let l = TransferFunction::from_coeffs(vec![1.0], vec![0.0, 0.0, 1.0, 0.1]).unwrap();
        let inv = l.invert_frequency().unwrap();
        assert_eq!(inv.num().coeffs(), &[0.1, 1.0]);
        assert_eq!(inv.den().coeffs(), &[0.0, 0.0, 0.0, 1.0]);

        let l = TransferFunction::from_coeffs(vec![1.0], vec![1.0, 1.0]).unwrap();
        let inv = l.invert_frequency().unwrap();
        assert_eq!(inv.num().coeffs(), &[1.0, 1.0]);
        assert_eq!(inv.den().coeffs(), &[0.0, 1.0]);

        let bad = TransferFunction::from_coeffs(vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]).unwrap();
        match bad.invert_frequency() {
            Err(BodeError::OriginCondition {
                zeros_at_origin: 2,
                poles_at_origin: 1,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn auxiliary_map_is_an_involution() {
        let loops = [
            plant().series(&controller()),
            TransferFunction::from_coeffs(vec![2.0, 1.0], vec![0.0, 3.0, 4.0, 1.0]).unwrap(),
            TransferFunction::from_coeffs(vec![1.0, 2.0, 1.0], vec![5.0, 1.0]).unwrap(),
        ];
        for l in loops {
            let back = l.auxiliary().auxiliary();
            for w in log_grid(0.05, 50.0, 10) {
                assert!(rel_close(back.at(w), l.at(w), 1e-10), "w={w}");
            }
            // the inverse system is the reciprocal of the auxiliary one
            if let Ok(inv) = l.invert_frequency() {
                let aux = l.auxiliary();
                for w in log_grid(0.05, 50.0, 10) {
                    assert!(rel_close(inv.at(w) * aux.at(w), r(1.0), 1e-10));
                }
            }
        }
    }

    #[test]
    fn inverse_system_poles_are_reciprocal_zeros() {
        let l = plant().series(&controller());
        let inv = l.invert_frequency().unwrap();
        let mut expected: Vec<Complex64> = l
            .zeros()
            .into_iter()
            .filter(|z| z.norm() > 0.0)
            .map(|z| 1.0 / z)
            .collect();
        let mut got: Vec<Complex64> = inv.poles().into_iter().filter(|p| p.norm() > 0.0).collect();
        assert_eq!(got.len(), expected.len());
        let key = |a: &Complex64, b: &Complex64| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im));
        expected.sort_by(key);
        got.sort_by(key);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).norm() <= 1e-8 * e.norm().max(1.0), "{g} vs {e}");
        }
        assert_eq!(
            inv.classify(DEFAULT_AXIS_TOL).unstable_poles.len(),
            l.classify(DEFAULT_AXIS_TOL).nmp_zeros.len()
        );
        // closed-loop stability carries over
        assert!(l.is_closed_loop_stable(DEFAULT_AXIS_TOL).unwrap().stable);
        assert!(inv.is_closed_loop_stable(DEFAULT_AXIS_TOL).unwrap().stable);
    }

    #[test]
    fn realization() {
        let ss = TransferFunction::from_coeffs(vec![1.0], vec![1.0, 1.0])
            .unwrap()
            .realize()
            .unwrap();
        assert_eq!(ss.a, DMatrix::from_element(1, 1, -1.0));
        assert_eq!(ss.b, DVector::from_element(1, 1.0));
        assert_eq!(ss.c, RowDVector::from_element(1, 1.0));
        assert_eq!(ss.d, 0.0);

        let k = TransferFunction::constant(2.5).realize().unwrap();
        assert_eq!(k.order(), 0);
        assert_eq!(k.d, 2.5);

        let improper = TransferFunction::from_coeffs(vec![0.0, 0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            improper.realize(),
            Err(BodeError::Improper { .. })
        ));

        let t = plant()
            .series(&controller())
            .complementary_sensitivity()
            .unwrap();
        let ss = t.realize().unwrap();
        for w in log_grid(0.01, 1000.0, 50) {
            let s = c(0.0, w);
            assert!(rel_close(ss.evaluate(s), t.evaluate(s), 1e-9), "w={w}");
        }
    }

    #[test]
    fn frequency_response_checks() {
        let l = TransferFunction::from_coeffs(vec![1.0], vec![1.0, 1.0]).unwrap();
        let h = l.frequency_response(&[0.0, 1.0]).unwrap();
        assert_eq!(h[0], r(1.0));
        assert!((h[1] - 1.0 / c(1.0, 1.0)).norm() < 1e-15);
        assert!((h[1].norm() - 0.5f64.sqrt()).abs() < 1e-15);

        let integ = TransferFunction::from_coeffs(vec![1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            integ.frequency_response(&[0.0]),
            Err(BodeError::AxisPole(_))
        ));

        let l = plant().series(&controller());
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..100 {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let w = (state >> 11) as f64 / (1u64 << 53) as f64 * 200.0 + 1e-3;
            let (a, b) = (l.at(w), l.at(-w));
            assert!((b - a.conj()).norm() <= 1e-14 * a.norm());
        }
    }

    #[test]
    fn closed_loop_stability() {
        let l = TransferFunction::from_coeffs(vec![1.0], vec![1.0, 1.0]).unwrap();
        let v = l.is_closed_loop_stable(DEFAULT_AXIS_TOL).unwrap();
        assert!(v.stable);
        assert!((v.poles[0] - r(-2.0)).norm() < 1e-15);

        assert!(
            plant()
                .series(&controller())
                .is_closed_loop_stable(DEFAULT_AXIS_TOL)
                .unwrap()
                .stable
        );

        // -2 + 1/(s+1): 1 + L = -s/(s+1), a closed-loop pole at the origin
        let marginal = TransferFunction::constant(-2.0)
            .parallel(&TransferFunction::from_coeffs(vec![1.0], vec![1.0, 1.0]).unwrap());
        assert!(matches!(
            marginal.is_closed_loop_stable(DEFAULT_AXIS_TOL),
            Err(BodeError::IndeterminateStability { .. })
        ));
        // -1.5 + 1/(s+1): 1 + L = (0.5 - 0.5 s)/(s+1), pole at +1
        let unstable = TransferFunction::constant(-1.5)
            .parallel(&TransferFunction::from_coeffs(vec![1.0], vec![1.0, 1.0]).unwrap());
        let v = unstable.is_closed_loop_stable(DEFAULT_AXIS_TOL).unwrap();
        assert!(!v.stable);
        assert!((v.poles[0] - r(1.0)).norm() < 1e-12);
        // -3 + 1/(s+1): 1 + L = (-2 s - 1)/(s+1), pole at -0.5
        let ok = TransferFunction::constant(-3.0)
            .parallel(&TransferFunction::from_coeffs(vec![1.0], vec![1.0, 1.0]).unwrap());
        let v = ok.is_closed_loop_stable(DEFAULT_AXIS_TOL).unwrap();
        assert!(v.stable && (v.poles[0] - r(-0.5)).norm() < 1e-12);
    }

    #[test]
    fn sensitivity_magnitudes_are_even() {
        let l = plant().series(&controller());
        let s = l.sensitivity().unwrap();
        let t = l.complementary_sensitivity().unwrap();
        for w in log_grid(0.01, 100.0, 25) {
            assert!((s.at(w).norm() - s.at(-w).norm()).abs() <= 1e-13 * s.at(w).norm());
            assert!((t.at(w).norm() - t.at(-w).norm()).abs() <= 1e-13 * t.at(w).norm());
        }
    }
}
