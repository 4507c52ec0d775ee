//! Stationary disturbance generation and exact-discretization simulation of
//! the loop `e = d - y`, `y = L e`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BodeError, Result};
use crate::lti::{StateSpace, TransferFunction, DEFAULT_AXIS_TOL};
use crate::poly::Polynomial;

/// Largest `dt * max|eigenvalue|` accepted without a warning.
pub const MAX_DT_PRODUCT: f64 = 0.1;

/// Filter turning unit-intensity white noise into the disturbance `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapingFilter {
    pub tf: TransferFunction,
    pub target_variance: f64,
}

impl ShapingFilter {
    /// Wraps a user filter; it must be stable and strictly proper.
    pub fn new(tf: TransferFunction) -> Result<Self> {
        if !tf.is_strictly_proper() {
            return Err(BodeError::invalid(
                "shaping",
                "filter must be strictly proper so that d has finite variance",
            ));
        }
        let ss = tf.realize()?;
        let target_variance = analytic_variance(&ss)?;
        Ok(ShapingFilter {
            tf,
            target_variance,
        })
    }

    /// Two-sided density of `d` in the rad/s convention, `|H(jw)|^2`.
    pub fn psd(&self, omega: f64) -> f64 {
        self.tf.at(omega).norm_sqr()
    }
}

/// First-order low-pass `k/(s + bandwidth)` with stationary variance `variance`.
pub fn make_shaping_filter(bandwidth: f64, variance: f64) -> Result<ShapingFilter> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(BodeError::invalid(
            "bandwidth",
            "must be positive and finite",
        ));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(BodeError::invalid(
            "variance",
            "must be positive and finite",
        ));
    }
    let k = (2.0 * bandwidth * variance).sqrt();
    let tf = TransferFunction::new(
        Polynomial::constant(k),
        Polynomial::new(vec![bandwidth, 1.0]),
    )?;
    Ok(ShapingFilter {
        tf,
        target_variance: variance,
    })
}

/// Solves `A P + P A^T + B B^T = 0` for a stable `A`.
pub fn lyapunov(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = a.complex_eigenvalues();
    if eig.iter().any(|e| e.re >= 0.0) {
        return Err(BodeError::NotStable);
    }
    // vec(A P + P A^T) = (I (x) A + A (x) I) vec(P), column-major vec.
    let id = DMatrix::<f64>::identity(n, n);
    let k = id.kronecker(a) + a.kronecker(&id);
    let q = b * b.transpose();
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = k.lu().solve(&rhs).ok_or(BodeError::NotStable)?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Stationary output variance of `sys` driven by unit-intensity white noise.
pub fn analytic_variance(sys: &StateSpace) -> Result<f64> {
    if sys.d != 0.0 {
        return Err(BodeError::invalid(
            "sys",
            "a direct feedthrough passes white noise through with infinite variance",
        ));
    }
    if sys.order() == 0 {
        return Ok(0.0);
    }
    let p = lyapunov(&sys.a, &sys.b)?;
    let c = &sys.c;
    Ok((c * &p * c.transpose())[(0, 0)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Zero,
    /// Deterministic augmented state (shaping states first, then loop states).
    Fixed(Vec<f64>),
    /// Zero-mean Gaussian with the given covariance (row-major rows).
    Gaussian(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    /// Length of the retained record in seconds.
    pub duration: f64,
    /// Discarded start-up time; `None` means ten slowest time constants.
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial_state: InitialState,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            // 2^20 samples
            duration: 1048.576,
            burn_in: None,
            seed: 0,
            initial_state: InitialState::Zero,
        }
    }
}

impl SimConfig {
    pub fn with_samples(dt: f64, samples: usize, seed: u64) -> Self {
        SimConfig {
            dt,
            duration: dt * samples as f64,
            seed,
            ..SimConfig::default()
        }
    }

    pub fn samples(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(BodeError::invalid("dt", "must be positive and finite"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(BodeError::invalid(
                "duration",
                "must be positive and finite",
            ));
        }
        if self.samples() < 2 {
            return Err(BodeError::invalid("duration", "shorter than two samples"));
        }
        if let Some(b) = self.burn_in {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(BodeError::invalid(
                    "burn_in",
                    "must be nonnegative and finite",
                ));
            }
        }
        Ok(())
    }
}

/// Synchronized post-burn-in samples of `d`, `e` and `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub dt: f64,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub y: Vec<f64>,
    pub seed: u64,
    pub meta: RecordMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub dt: f64,
    pub seed: u64,
    pub burn_in: f64,
    pub loop_hash: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SignalRecord {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Writes `t,d,e,y` with 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "t,d,e,y")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt17(k as f64 * self.dt),
                fmt17(self.d[k]),
                fmt17(self.e[k]),
                fmt17(self.y[k])
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_meta(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &self.meta)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a record written by [`SignalRecord::write_csv`] and its sidecar.
    pub fn read(csv_path: &Path, meta_path: &Path) -> Result<SignalRecord> {
        let meta: RecordMeta = serde_json::from_reader(File::open(meta_path)?)?;
        let (_, d, e, y) = read_signals_csv(csv_path)?;
        Ok(SignalRecord {
            dt: meta.dt,
            d,
            e,
            y,
            seed: meta.seed,
            meta,
        })
    }
}

type Columns = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

pub fn read_signals_csv(path: &Path) -> Result<Columns> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "d", "e", "y"] {
        return Err(BodeError::invalid("csv", "expected header t,d,e,y"));
    }
    let (mut t, mut d, mut e, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for row in rdr.deserialize() {
        let (a, b, c, f): (f64, f64, f64, f64) = row?;
        t.push(a);
        d.push(b);
        e.push(c);
        y.push(f);
    }
    Ok((t, d, e, y))
}

/// Shortest decimal form is not used on purpose: fixed 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Hex SHA-256 over the coefficients of the loop and the shaping filter.
pub fn loop_hash(l: &TransferFunction, shaping: &ShapingFilter) -> String {
    let mut h = Sha256::new();
    for (tag, p) in [
        ("Ln", l.num()),
        ("Ld", l.den()),
        ("Hn", shaping.tf.num()),
        ("Hd", shaping.tf.den()),
    ] {
        h.update(tag.as_bytes());
        for c in p.coeffs() {
            h.update(c.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Shaping filter and loop realization joined into one system driven by white
/// noise. States: shaping first, then loop.
#[derive(Debug, Clone)]
pub struct AugmentedLoop {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Row producing `d`.
    pub c_d: DVector<f64>,
    /// Row producing `y`.
    pub c_y: DVector<f64>,
}

impl AugmentedLoop {
    pub fn new(l: &TransferFunction, shaping: &ShapingFilter) -> Result<Self> {
        let f = shaping.tf.realize()?;
        let g = l.realize()?;
        let (nf, nl) = (f.order(), g.order());
        let gain = 1.0 + g.d;
        if gain.abs() < 1e-12 {
            return Err(BodeError::DegenerateLoop);
        }
        let n = nf + nl;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (nf, nf)).copy_from(&f.a);
        // x_L' = A_L x_L + B_L e with e = (d - C_L x_L) / (1 + D_L)
        let coupling = &g.b * &f.c / gain;
        a.view_mut((nf, 0), (nl, nf)).copy_from(&coupling);
        let inner = &g.a - &g.b * &g.c / gain;
        a.view_mut((nf, nf), (nl, nl)).copy_from(&inner);
        let mut b = DVector::zeros(n);
        b.rows_mut(0, nf).copy_from(&f.b);
        let mut c_d = DVector::zeros(n);
        let mut c_y = DVector::zeros(n);
        for j in 0..nf {
            c_d[j] = f.c[j];
            c_y[j] = g.d * f.c[j] / gain;
        }
        for j in 0..nl {
            c_y[nf + j] = g.c[j] / gain;
        }
        Ok(AugmentedLoop { a, b, c_d, c_y })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<num_complex::Complex64> {
        if self.order() == 0 {
            return Vec::new();
        }
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    /// Exact zero-order transition and process-noise covariance over `dt`.
    pub fn discretize(&self, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.order();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&(-&self.a * dt));
        m.view_mut((0, n), (n, n))
            .copy_from(&(&self.b * self.b.transpose() * dt));
        m.view_mut((n, n), (n, n))
            .copy_from(&(self.a.transpose() * dt));
        let e = m.exp();
        let ad = e.view((n, n), (n, n)).transpose();
        let q = &ad * e.view((0, n), (n, n));
        let q = (&q + q.transpose()) * 0.5;
        (ad, q)
    }
}

/// Symmetric square root `G` with `G G^T = q`, negative eigenvalues clipped.
fn psd_factor(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    if let Some(ch) = q.clone().cholesky() {
        return ch.l();
    }
    let eig = q.clone().symmetric_eigen();
    let mut g = eig.eigenvectors.clone();
    for j in 0..n {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..n {
            g[(i, j)] *= s;
        }
    }
    g
}

/// Runs one seeded simulation of the loop with disturbance from `shaping`.
pub fn simulate_closed_loop(
    l: &TransferFunction,
    shaping: &ShapingFilter,
    cfg: &SimConfig,
) -> Result<SignalRecord> {
    cfg.validate()?;
    if !l.is_proper() {
        return Err(BodeError::Improper {
            num: l.num().degree().unwrap_or(0),
            den: l.den().degree().unwrap_or(0),
        });
    }
    if !l.is_zero() {
        l.require_closed_loop_stable(DEFAULT_AXIS_TOL)?;
    }
    let sys = AugmentedLoop::new(l, shaping)?;
    let eig = sys.eigenvalues();
    if eig.iter().any(|e| e.re >= 0.0) {
        return Err(BodeError::NotStable);
    }
    let n = sys.order();
    let mut warnings = Vec::new();

    let fastest = eig.iter().map(|e| e.norm()).fold(0.0, f64::max);
    if cfg.dt * fastest > MAX_DT_PRODUCT * (1.0 + 1e-9) {
        warnings.push(format!(
            "dt * max|pole| = {:.3} exceeds {MAX_DT_PRODUCT}; the record is aliased",
            cfg.dt * fastest
        ));
    }
    let slowest = eig.iter().map(|e| -e.re).fold(f64::INFINITY, f64::min);
    let burn_in = cfg.burn_in.unwrap_or(10.0 / slowest);
    if cfg.duration < 100.0 * burn_in {
        warnings.push(format!(
            "duration {} s is shorter than 100 times the burn-in of {} s",
            cfg.duration, burn_in
        ));
    }

    let (ad, q) = sys.discretize(cfg.dt);
    let g = psd_factor(&q);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = initial_state(&cfg.initial_state, n, &mut rng)?;

    // Flat row-major copies keep the inner loop allocation-free.
    let ad_flat: Vec<f64> = (0..n * n).map(|k| ad[(k / n, k % n)]).collect();
    let g_flat: Vec<f64> = (0..n * n).map(|k| g[(k / n, k % n)]).collect();
    let c_d = sys.c_d.as_slice().to_vec();
    let c_y = sys.c_y.as_slice().to_vec();
    let mut next = vec![0.0; n];
    let mut w = vec![0.0; n];

    let burn_steps = (burn_in / cfg.dt).ceil() as usize;
    let samples = cfg.samples();
    let (mut d, mut e, mut y) = (
        Vec::with_capacity(samples),
        Vec::with_capacity(samples),
        Vec::with_capacity(samples),
    );
    for k in 0..burn_steps + samples {
        if k >= burn_steps {
            let dk = dot(&c_d, &x);
            let yk = dot(&c_y, &x);
            d.push(dk);
            y.push(yk);
            e.push(dk - yk);
        }
        for wi in w.iter_mut() {
            *wi = StandardNormal.sample(&mut rng);
        }
        for i in 0..n {
            let row = i * n;
            let mut acc = 0.0;
            for j in 0..n {
                acc += ad_flat[row + j] * x[j] + g_flat[row + j] * w[j];
            }
            next[i] = acc;
        }
        std::mem::swap(&mut x, &mut next);
    }

    Ok(SignalRecord {
        dt: cfg.dt,
        d,
        e,
        y,
        seed: cfg.seed,
        meta: RecordMeta {
            dt: cfg.dt,
            seed: cfg.seed,
            burn_in,
            loop_hash: loop_hash(l, shaping),
            warnings,
        },
    })
}

/// Independent simulations, one per seed, run in parallel.
pub fn simulate_campaign(
    l: &TransferFunction,
    shaping: &ShapingFilter,
    cfg: &SimConfig,
    seeds: &[u64],
) -> Result<Vec<SignalRecord>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = SimConfig {
                seed,
                ..cfg.clone()
            };
            simulate_closed_loop(l, shaping, &cfg)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn initial_state(init: &InitialState, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    match init {
        InitialState::Zero => Ok(vec![0.0; n]),
        InitialState::Fixed(v) => {
            if v.len() != n {
                return Err(BodeError::LengthMismatch(v.len(), n));
            }
            Ok(v.clone())
        }
        InitialState::Gaussian(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(BodeError::invalid(
                    "initial_state",
                    format!("covariance must be {n}x{n}"),
                ));
            }
            let cov = DMatrix::from_fn(n, n, |i, j| 0.5 * (rows[i][j] + rows[j][i]));
            if cov
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .any(|&v| v < -1e-12)
            {
                return Err(BodeError::invalid(
                    "initial_state",
                    "covariance is not positive semidefinite",
                ));
            }
            let g = psd_factor(&cov);
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
            Ok((g * z).as_slice().to_vec())
        }
    }
}

/// Outcome of the block-statistics stationarity check.
#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    pub block_means: Vec<f64>,
    pub block_variances: Vec<f64>,
    /// Largest `|mean_i| / (sigma / sqrt(N_eff))` over blocks.
    pub worst_mean_score: f64,
    /// Largest `|var_i - mean(var)| / mean(var)`.
    pub worst_variance_spread: f64,
    pub effective_block_size: f64,
    pub passed: bool,
}

/// Splits `x` into `blocks` blocks and checks that block means are within
/// 4 standard errors of zero and block variances within 10% of their average.
/// The standard error uses an effective block size corrected for lag-one
/// correlation, `N (1 - rho) / (1 + rho)`.
pub fn stationarity_proxy(x: &[f64], blocks: usize) -> Result<StationarityReport> {
    if blocks < 2 {
        return Err(BodeError::invalid("blocks", "need at least two blocks"));
    }
    let nb = x.len() / blocks;
    if nb < 16 {
        return Err(BodeError::RecordTooShort {
            len: x.len(),
            needed: 16 * blocks,
        });
    }
    let n = (nb * blocks) as f64;
    let mean = x[..nb * blocks].iter().sum::<f64>() / n;
    let var = x[..nb * blocks]
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / n;
    let lag1 = x[..nb * blocks]
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum::<f64>()
        / (n - 1.0);
    let rho = if var > 0.0 {
        (lag1 / var).clamp(-0.999_999, 0.999_999)
    } else {
        0.0
    };
    let n_eff = nb as f64 * (1.0 - rho) / (1.0 + rho);

    let mut means = Vec::with_capacity(blocks);
    let mut vars = Vec::with_capacity(blocks);
    for chunk in x.chunks_exact(nb).take(blocks) {
        let m = chunk.iter().sum::<f64>() / nb as f64;
        let v = chunk.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (nb as f64 - 1.0);
        means.push(m);
        vars.push(v);
    }
    let se = var.sqrt() / n_eff.sqrt();
    let worst_mean_score = means
        .iter()
        .map(|m| if se > 0.0 { m.abs() / se } else { 0.0 })
        .fold(0.0, f64::max);
    let vbar = vars.iter().sum::<f64>() / blocks as f64;
    let worst_variance_spread = vars
        .iter()
        .map(|v| {
            if vbar > 0.0 {
                (v - vbar).abs() / vbar
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(StationarityReport {
        block_means: means,
        block_variances: vars,
        worst_mean_score,
        worst_variance_spread,
        effective_block_size: n_eff,
        passed: worst_mean_score <= 4.0 && worst_variance_spread <= 0.1 && vbar > 0.0,
    })
}
