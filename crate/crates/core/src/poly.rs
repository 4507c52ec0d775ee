//! Real-coefficient polynomials.
//!
//! Coefficients are stored in ascending degree order, so `coeffs[k]`
//! multiplies `s^k`. The zero polynomial is the empty coefficient list and
//! every nonzero polynomial carries a nonzero leading coefficient.
//!
//! Roots come from the eigenvalues of the balanced companion matrix, followed
//! by a short Newton polish and a pass that makes complex roots occur in
//! exact conjugate pairs.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{BodeError, Result};

/// Coefficients whose sum cancels below this fraction of the larger addend are
/// set to zero.
pub const CANCELLATION_TOL: f64 = 1e-12;

/// Relative distance under which two roots are treated as a conjugate pair.
const PAIRING_TOL: f64 = 1e-6;

#[derive(Clone, PartialEq, Default)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Builds a polynomial from ascending coefficients, trimming zero leading
    /// coefficients.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// `c * s^k`
    pub fn monomial(c: f64, k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = c;
        Self::new(coeffs)
    }

    /// `gain * prod(s - r)` over a conjugate-closed root multiset.
    pub fn from_roots(roots: &[Complex64], gain: f64) -> Result<Self> {
        let (reals, pairs) = split_conjugate_pairs(roots)?;
        let mut p = Polynomial::constant(gain);
        for r in reals {
            p = &p * &Polynomial::new(vec![-r, 1.0]);
        }
        for z in pairs {
            p = &p * &Polynomial::new(vec![z.norm_sqr(), -2.0 * z.re, 1.0]);
        }
        Ok(p)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    /// Coefficient of `s^k`, zero beyond the degree.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Number of roots at exactly `s = 0`.
    pub fn origin_multiplicity(&self) -> usize {
        self.coeffs.iter().take_while(|&&c| c == 0.0).count()
    }

    /// Horner evaluation at a complex point.
    pub fn evaluate(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn evaluate_real(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    /// Coefficient reversal over `degree + 1` slots: `s^n p(1/s)`.
    pub fn reversed(&self) -> Self {
        Self::new(self.coeffs.iter().rev().copied().collect())
    }

    /// Divides out the exact factor `s^k`; `k` must not exceed the origin
    /// multiplicity.
    pub(crate) fn shift_down(&self, k: usize) -> Self {
        debug_assert!(k <= self.origin_multiplicity());
        Self::new(self.coeffs[k.min(self.coeffs.len())..].to_vec())
    }

    /// All `degree` roots with multiplicity. Roots at the origin are returned
    /// exactly; complex roots come back in exact conjugate pairs.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let degree = match self.degree() {
            Some(d) if d >= 1 => d,
            _ => return Err(BodeError::NoRoots),
        };
        let k0 = self.origin_multiplicity();
        let mut roots = vec![Complex64::new(0.0, 0.0); k0];
        let reduced = self.shift_down(k0);
        if reduced.degree().unwrap_or(0) == 0 {
            return Ok(roots);
        }

        let eig = companion_eigenvalues(&reduced);
        let polished: Vec<Complex64> = eig.into_iter().map(|z| polish(&reduced, z)).collect();
        roots.extend(symmetrize(polished));
        debug_assert_eq!(roots.len(), degree);
        Ok(roots)
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial{:?}", self.coeffs)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0.0 {
                continue;
            }
            let sign = if c < 0.0 { "-" } else { "+" };
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let a = c.abs();
            match k {
                0 => write!(f, "{a}")?,
                1 if a == 1.0 => write!(f, "s")?,
                1 => write!(f, "{a}s")?,
                _ if a == 1.0 => write!(f, "s^{k}")?,
                _ => write!(f, "{a}s^{k}")?,
            }
        }
        Ok(())
    }
}

fn add_coeffs(p: &[f64], q: &[f64], sign: f64) -> Polynomial {
    let n = p.len().max(q.len());
    let coeffs = (0..n)
        .map(|k| {
            let a = p.get(k).copied().unwrap_or(0.0);
            let b = sign * q.get(k).copied().unwrap_or(0.0);
            let c = a + b;
            if c.abs() <= CANCELLATION_TOL * a.abs().max(b.abs()) {
                0.0
            } else {
                c
            }
        })
        .collect();
    Polynomial::new(coeffs)
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        add_coeffs(&self.coeffs, &rhs.coeffs, 1.0)
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        add_coeffs(&self.coeffs, &rhs.coeffs, -1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Eigenvalues of the balanced companion matrix of `p` (degree >= 1).
fn companion_eigenvalues(p: &Polynomial) -> Vec<Complex64> {
    let n = p.degree().expect("nonzero polynomial");
    let lead = p.leading();
    if n == 1 {
        return vec![Complex64::new(-p.coeff(0) / lead, 0.0)];
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -p.coeff(n - 1 - j) / lead;
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    balance(&mut m);
    m.complex_eigenvalues().iter().copied().collect()
}

/// Parlett-Reinsch diagonal similarity balancing with radix 2.
fn balance(m: &mut DMatrix<f64>) {
    const RADIX: f64 = 2.0;
    let n = m.nrows();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    m[(i, j)] *= inv;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// A few Newton steps on the original polynomial, keeping only improvements.
fn polish(p: &Polynomial, z0: Complex64) -> Complex64 {
    let dp = p.derivative();
    let real = z0.im == 0.0;
    let mut z = z0;
    let mut best = p.evaluate(z).norm();
    for _ in 0..4 {
        let d = dp.evaluate(z);
        if d.norm() == 0.0 || best == 0.0 {
            break;
        }
        let mut next = z - p.evaluate(z) / d;
        if real {
            next.im = 0.0;
        }
        let val = p.evaluate(next).norm();
        if !(val < best) {
            break;
        }
        best = val;
        z = next;
    }
    z
}

/// Pairs each root of positive imaginary part with the closest root of
/// negative imaginary part and replaces both by an exact conjugate pair.
fn symmetrize(roots: Vec<Complex64>) -> Vec<Complex64> {
    let mut reals = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for z in roots {
        if z.im > 0.0 {
            upper.push(z);
        } else if z.im < 0.0 {
            lower.push(z);
        } else {
            reals.push(z);
        }
    }
    let mut out = reals;
    for u in upper {
        let target = u.conj();
        let best = lower
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).norm().total_cmp(&(b.1 - target).norm()))
            .map(|(i, _)| i);
        match best {
            Some(i) => {
                let l = lower.swap_remove(i);
                let re = 0.5 * (u.re + l.re);
                let im = 0.5 * (u.im - l.im);
                out.push(Complex64::new(re, im));
                out.push(Complex64::new(re, -im));
            }
            None => out.push(Complex64::new(u.re, 0.0)),
        }
    }
    out.extend(lower.into_iter().map(|l| Complex64::new(l.re, 0.0)));
    out
}

/// Splits a root multiset into real roots and upper-half-plane
/// representatives of conjugate pairs.
pub(crate) fn split_conjugate_pairs(roots: &[Complex64]) -> Result<(Vec<f64>, Vec<Complex64>)> {
    let mut reals = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for &z in roots {
        if z.im == 0.0 {
            reals.push(z.re);
        } else if z.im > 0.0 {
            upper.push(z);
        } else {
            lower.push(z);
        }
    }
    let mut pairs = Vec::with_capacity(upper.len());
    for u in upper {
        let target = u.conj();
        let pos = lower
            .iter()
            .position(|l| (l - target).norm() <= PAIRING_TOL * target.norm().max(1.0));
        match pos {
            Some(i) => {
                lower.swap_remove(i);
                pairs.push(u);
            }
            None => {
                return Err(BodeError::NotConjugateClosed(format!(
                    "{} has no conjugate partner",
                    crate::error::format_roots(&[u])
                )))
            }
        }
    }
    if let Some(l) = lower.first() {
        return Err(BodeError::NotConjugateClosed(format!(
            "{} has no conjugate partner",
            crate::error::format_roots(&[*l])
        )));
    }
    Ok((reals, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn trims_on_construction() {
        assert_eq!(
            Polynomial::new(vec![1.0, 2.0, 0.0, 0.0]).coeffs(),
            &[1.0, 2.0]
        );
        assert!(Polynomial::new(vec![0.0, 0.0]).is_zero());
        assert_eq!(Polynomial::zero().degree(), None);
        assert_eq!(Polynomial::new(vec![3.0, 0.0, 1.0]).degree(), Some(2));
    }

    #[test]
    fn additive_inverse_is_zero() {
        let p = Polynomial::new(vec![1.0, 1.0]);
        let q = Polynomial::new(vec![-1.0, -1.0]);
        assert!((&p + &q).is_zero());
        let r = &Polynomial::one() + &Polynomial::monomial(1.0, 2);
        assert_eq!(r.coeffs(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn cancellation_dust_is_dropped() {
        let p = Polynomial::new(vec![0.1 + 0.2, 1.0]);
        let q = Polynomial::new(vec![0.3, 1.0]);
        assert_eq!((&p - &q).coeffs(), &[] as &[f64]);
    }

    #[test]
    fn products() {
        let p = Polynomial::new(vec![-1.0, 1.0]) * Polynomial::new(vec![1.0, 1.0]);
        assert_eq!(p.coeffs(), &[-1.0, 0.0, 1.0]);
        assert!((&p * &Polynomial::zero()).is_zero());
    }

    #[test]
    fn plant_denominator_expansion_and_roots() {
        let p = Polynomial::new(vec![2.979, 1.0])
            * Polynomial::new(vec![-1.051, 1.0])
            * Polynomial::new(vec![0.4826, 1.0]);
        assert_eq!(p.degree(), Some(3));
        let roots = sorted(p.roots().unwrap());
        let expected = [-2.979, -0.4826, 1.051];
        for (r, e) in roots.iter().zip(expected) {
            assert!((r.re - e).abs() <= 1e-10 && r.im == 0.0, "{r} vs {e}");
            assert!(p.evaluate(*r).norm() <= 1e-10);
        }
    }

    #[test]
    fn evaluation() {
        let p = Polynomial::new(vec![1.0, 0.0, 1.0]);
        assert!(p.evaluate(c(0.0, 1.0)).norm() == 0.0);
        assert_eq!(Polynomial::zero().evaluate(c(3.0, -2.0)), c(0.0, 0.0));
    }

    #[test]
    fn roots_of_simple_polynomials() {
        let r = sorted(Polynomial::new(vec![-1.0, 0.0, 1.0]).roots().unwrap());
        assert!((r[0] - c(-1.0, 0.0)).norm() < 1e-14);
        assert!((r[1] - c(1.0, 0.0)).norm() < 1e-14);

        let r = Polynomial::new(vec![1.0, 0.0, 1.0]).roots().unwrap();
        assert_eq!(r[0], r[1].conj());
        assert!((r[0].im.abs() - 1.0).abs() < 1e-14);

        let r = Polynomial::new(vec![0.0, 0.0, 2.0, 1.0]).roots().unwrap();
        assert_eq!(r.iter().filter(|z| **z == c(0.0, 0.0)).count(), 2);
    }

    #[test]
    fn constant_has_no_roots() {
        assert!(matches!(
            Polynomial::constant(3.0).roots(),
            Err(BodeError::NoRoots)
        ));
        assert!(matches!(
            Polynomial::zero().roots(),
            Err(BodeError::NoRoots)
        ));
    }

    #[test]
    fn from_roots_requires_conjugate_closure() {
        assert!(Polynomial::from_roots(&[c(1.0, 1.0)], 1.0).is_err());
        let p = Polynomial::from_roots(&[c(1.0, 1.0), c(1.0, -1.0), c(-2.0, 0.0)], 3.0).unwrap();
        assert_eq!(p.coeffs(), &[12.0, -6.0, 0.0, 3.0]);
    }

    #[test]
    fn reversal() {
        let p = Polynomial::new(vec![0.0, 0.0, 1.0, 0.1]);
        assert_eq!(p.reversed().coeffs(), &[0.1, 1.0]);
        assert_eq!(p.origin_multiplicity(), 2);
    }

    fn naive_eval(coeffs: &[f64], s: Complex64) -> Complex64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, &a)| s.powu(k as u32) * a)
            .sum()
    }

    fn coeff_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 1..=max_len)
    }

    fn complex_point() -> impl Strategy<Value = Complex64> {
        (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| c(a, b))
    }

    proptest! {
        #[test]
        fn add_matches_pointwise(p in coeff_vec(9), q in coeff_vec(9),
                                 pts in prop::collection::vec(complex_point(), 20)) {
            let (pp, qq) = (Polynomial::new(p), Polynomial::new(q));
            let sum = &pp + &qq;
            for s in pts {
                let expect = pp.evaluate(s) + qq.evaluate(s);
                let scale = pp.evaluate(s).norm() + qq.evaluate(s).norm() + 1e-300;
                prop_assert!((sum.evaluate(s) - expect).norm() / scale <= 1e-12);
            }
        }

        #[test]
        fn multiply_matches_pointwise(p in coeff_vec(9), q in coeff_vec(9),
                                      pts in prop::collection::vec(complex_point(), 20)) {
            let (pp, qq) = (Polynomial::new(p), Polynomial::new(q));
            let prod = &pp * &qq;
            if !pp.is_zero() && !qq.is_zero() {
                prop_assert_eq!(prod.degree().unwrap(), pp.degree().unwrap() + qq.degree().unwrap());
            }
            for s in pts {
                let expect = pp.evaluate(s) * qq.evaluate(s);
                // bound the rounding of the expanded form by the absolute-value polynomial
                let abs_scale = Polynomial::new(pp.coeffs().iter().map(|c| c.abs()).collect())
                    .evaluate_real(s.norm())
                    * Polynomial::new(qq.coeffs().iter().map(|c| c.abs()).collect())
                        .evaluate_real(s.norm());
                prop_assert!((prod.evaluate(s) - expect).norm() <= 1e-12 * abs_scale.max(1e-300));
            }
        }

        #[test]
        fn horner_matches_naive_sum(p in prop::collection::vec(-10.0f64..10.0, 11), s in complex_point()) {
            let poly = Polynomial::new(p.clone());
            let abs_scale: f64 = p.iter().enumerate().map(|(k, a)| a.abs() * s.norm().powi(k as i32)).sum();
            prop_assert!((poly.evaluate(s) - naive_eval(&p, s)).norm() <= 1e-13 * abs_scale);
        }

        #[test]
        fn reconstruct_from_roots(p in prop::collection::vec(-10.0f64..10.0, 13)) {
            prop_assume!(p[12].abs() > 0.5);
            let poly = Polynomial::new(p.clone());
            let roots = poly.roots().unwrap();
            prop_assert_eq!(roots.len(), 12);
            let rebuilt = Polynomial::from_roots(&roots, poly.leading()).unwrap();
            let scale = p.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            for k in 0..13 {
                prop_assert!((rebuilt.coeff(k) - p[k]).abs() <= 1e-6 * scale,
                    "k={} {} vs {}", k, rebuilt.coeff(k), p[k]);
            }
            let dp = poly.derivative();
            for r in &roots {
                let scale = dp.evaluate(*r).norm().max(1.0) * r.norm().max(1.0);
                prop_assert!(poly.evaluate(*r).norm() / scale <= 1e-8);
            }
        }

        #[test]
        fn roots_round_trip(real in prop::collection::vec(
                                (0.1f64..1e3, prop::bool::ANY), 0..=4),
                            pairs in prop::collection::vec(
                                (0.1f64..1e3, 0.05f64..1.5, prop::bool::ANY), 0..=4),
                            gain in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0]) {
            let mut set = Vec::new();
            for (m, neg) in real {
                set.push(c(if neg { -m } else { m }, 0.0));
            }
            for (m, ang, neg) in pairs {
                let re = m * ang.cos() * if neg { -1.0 } else { 1.0 };
                let im = m * ang.sin();
                set.push(c(re, im));
                set.push(c(re, -im));
            }
            prop_assume!(!set.is_empty());
            // keep the multiset well separated so the comparison is meaningful
            for i in 0..set.len() {
                for j in 0..i {
                    prop_assume!((set[i] - set[j]).norm() > 1e-2 * set[i].norm().max(set[j].norm()));
                }
            }
            let p = Polynomial::from_roots(&set, gain).unwrap();
            let found = p.roots().unwrap();
            prop_assert_eq!(found.len(), set.len());
            let mut remaining = found.clone();
            for z in &set {
                let (i, d) = remaining.iter().enumerate()
                    .map(|(i, r)| (i, (r - z).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
                prop_assert!(d <= 1e-6 * z.norm().max(1.0), "root {} missed by {}", z, d);
                remaining.swap_remove(i);
            }
            for r in found.iter().filter(|r| r.im != 0.0) {
                prop_assert!(found.contains(&r.conj()));
            }
        }
    }
}
