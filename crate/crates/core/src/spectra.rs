//! Welch spectral estimates, sensitivity-like curves, coherence and the
//! coherence-based mutual information rate.
//!
//! Densities are two-sided in rad/s: `(1/2pi) * integral over (-inf, inf)`
//! of an auto-spectrum is the variance. Only `w >= 0` is stored; integrals
//! double every bin except DC and Nyquist. The cross-spectrum `phi_xy` is the
//! transform of `Cov[x(t + tau), y(t)]`, i.e. the average of `X conj(Y)`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{BodeError, Result};
use crate::lti::TransferFunction;
use crate::stochastic::{fmt17, SignalRecord};

/// Bins with `phi_d` below this fraction of its maximum are masked.
pub const FLOOR: f64 = 1e-12;
/// Coherence is clipped to `1 - COHERENCE_CLIP`.
pub const COHERENCE_CLIP: f64 = 1e-12;
/// Raw coherence at or above `1 - NEAR_UNITY` counts as deterministic.
pub const NEAR_UNITY: f64 = 1e-9;
/// Fraction of near-unity bins above which the information rate diverges.
pub const DIVERGENT_FRACTION: f64 = 0.01;
pub const MIN_COHERENCE_SEGMENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Hamming,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let nf = n as f64;
        (0..n)
            .map(|k| {
                let c = (2.0 * PI * k as f64 / nf).cos();
                match self {
                    Window::Hann => 0.5 - 0.5 * c,
                    Window::Hamming => 0.54 - 0.46 * c,
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Detrend {
    None,
    #[default]
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WelchConfig {
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub window: Window,
    pub detrend: Detrend,
}

impl Default for WelchConfig {
    fn default() -> Self {
        WelchConfig {
            segment_length: 4096,
            overlap_fraction: 0.5,
            window: Window::Hann,
            detrend: Detrend::Mean,
        }
    }
}

impl WelchConfig {
    pub fn with_segment(segment_length: usize) -> Self {
        WelchConfig {
            segment_length,
            ..WelchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_length < 8 || !self.segment_length.is_power_of_two() {
            return Err(BodeError::invalid(
                "segment_length",
                "must be a power of two of at least 8",
            ));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(BodeError::invalid("overlap_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }

    fn step(&self) -> usize {
        let s = (self.segment_length as f64 * (1.0 - self.overlap_fraction)).round() as usize;
        s.max(1)
    }

    /// Number of segments that fit in a record of `len` samples.
    pub fn segments(&self, len: usize) -> usize {
        if len < self.segment_length {
            0
        } else {
            (len - self.segment_length) / self.step() + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEstimate {
    /// Bin frequencies in rad/s, `0 ..= pi/dt`.
    pub freqs: Vec<f64>,
    pub values: Vec<Complex64>,
    pub n_segments: usize,
    /// Equivalent noise bandwidth of the window, in bins.
    pub enbw: f64,
}

impl SpectrumEstimate {
    pub fn spacing(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    /// `(1/2pi) * sum over the two-sided axis`, i.e. the variance for an
    /// auto-spectrum.
    pub fn two_sided_mean(&self) -> f64 {
        let dw = self.spacing();
        fold_sum(self.values.iter().map(|v| v.re)) * dw / (2.0 * PI)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "omega,re,im")?;
        for (f, v) in self.freqs.iter().zip(&self.values) {
            writeln!(w, "{},{},{}", fmt17(*f), fmt17(v.re), fmt17(v.im))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `omega,re,im`; segment count and bandwidth are not stored.
    pub fn read_csv(path: &Path) -> Result<(Vec<f64>, Vec<Complex64>)> {
        let mut rdr = csv::Reader::from_path(path)?;
        check_header(&mut rdr, &["omega", "re", "im"])?;
        let mut f = Vec::new();
        let mut v = Vec::new();
        for row in rdr.deserialize() {
            let (w, re, im): (f64, f64, f64) = row?;
            f.push(w);
            v.push(Complex64::new(re, im));
        }
        Ok((f, v))
    }
}

/// Sum over the two-sided axis of a quantity stored for `w >= 0`: interior
/// bins count twice, DC and Nyquist once.
fn fold_sum(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    values
        .enumerate()
        .map(|(k, v)| if k == 0 || k + 1 == n { v } else { 2.0 * v })
        .sum()
}

fn check_header(rdr: &mut csv::Reader<File>, want: &[&str]) -> Result<()> {
    let h = rdr.headers()?;
    if h.iter().collect::<Vec<_>>() != want {
        return Err(BodeError::invalid(
            "csv",
            format!("expected header {}", want.join(",")),
        ));
    }
    Ok(())
}

struct Segmenter {
    cfg: WelchConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Segmenter {
    fn new(cfg: &WelchConfig, dt: f64) -> Self {
        let window = cfg.window.coefficients(cfg.segment_length);
        let s2: f64 = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(cfg.segment_length);
        Segmenter {
            cfg: *cfg,
            window,
            fft,
            scale: dt / s2,
        }
    }

    fn enbw(&self) -> f64 {
        let s1: f64 = self.window.iter().sum();
        let s2: f64 = self.window.iter().map(|w| w * w).sum();
        self.window.len() as f64 * s2 / (s1 * s1)
    }

    /// Positive-frequency half of the windowed transform of segment `i`.
    fn transform(&self, x: &[f64], i: usize) -> Vec<Complex64> {
        let n = self.cfg.segment_length;
        let start = i * self.cfg.step();
        let seg = &x[start..start + n];
        let mean = match self.cfg.detrend {
            Detrend::Mean => seg.iter().sum::<f64>() / n as f64,
            Detrend::None => 0.0,
        };
        let mut buf: Vec<Complex64> = seg
            .iter()
            .zip(&self.window)
            .map(|(v, w)| Complex64::new((v - mean) * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf.truncate(n / 2 + 1);
        buf
    }

    fn freqs(&self, dt: f64) -> Vec<f64> {
        let n = self.cfg.segment_length;
        (0..=n / 2)
            .map(|k| 2.0 * PI * k as f64 / (n as f64 * dt))
            .collect()
    }
}

/// Per-segment spectra computed in parallel, averaged in segment order.
fn averaged<F>(segs: usize, nbins: usize, per_segment: F) -> Vec<Complex64>
where
    F: Fn(usize) -> Vec<Complex64> + Sync + Send,
{
    let parts: Vec<Vec<Complex64>> = (0..segs).into_par_iter().map(per_segment).collect();
    let mut acc = vec![Complex64::new(0.0, 0.0); nbins];
    for p in &parts {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    let inv = 1.0 / segs as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    acc
}

/// Welch auto-spectrum; needs at least two segment lengths of data.
pub fn welch_psd(x: &[f64], dt: f64, cfg: &WelchConfig) -> Result<SpectrumEstimate> {
    cfg.validate()?;
    if x.len() < 2 * cfg.segment_length {
        return Err(BodeError::RecordTooShort {
            len: x.len(),
            needed: 2 * cfg.segment_length,
        });
    }
    let est = cross(x, x, dt, cfg)?;
    Ok(SpectrumEstimate {
        values: est
            .values
            .iter()
            .map(|v| Complex64::new(v.re, 0.0))
            .collect(),
        ..est
    })
}

/// Welch cross-spectrum `phi_xy`, the average of `X conj(Y)`.
pub fn welch_cpsd(x: &[f64], y: &[f64], dt: f64, cfg: &WelchConfig) -> Result<SpectrumEstimate> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(BodeError::LengthMismatch(x.len(), y.len()));
    }
    if cfg.segments(x.len()) < 2 {
        return Err(BodeError::RecordTooShort {
            len: x.len(),
            needed: cfg.segment_length + cfg.step(),
        });
    }
    cross(x, y, dt, cfg)
}

fn cross(x: &[f64], y: &[f64], dt: f64, cfg: &WelchConfig) -> Result<SpectrumEstimate> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(BodeError::invalid("dt", "must be positive and finite"));
    }
    let sg = Segmenter::new(cfg, dt);
    let segs = cfg.segments(x.len());
    let nbins = cfg.segment_length / 2 + 1;
    let same = std::ptr::eq(x, y);
    let values = averaged(segs, nbins, |i| {
        let fx = sg.transform(x, i);
        if same {
            fx.iter()
                .map(|a| Complex64::new(a.norm_sqr() * sg.scale, 0.0))
                .collect()
        } else {
            let fy = sg.transform(y, i);
            fx.iter()
                .zip(&fy)
                .map(|(a, b)| a * b.conj() * sg.scale)
                .collect()
        }
    });
    Ok(SpectrumEstimate {
        freqs: sg.freqs(dt),
        values,
        n_segments: segs,
        enbw: sg.enbw(),
    })
}

/// Magnitude curve on the Welch grid with bins below the floor masked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikeCurve {
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    pub floor_mask: Vec<bool>,
}

impl LikeCurve {
    /// `(1/2pi) * integral over (-inf, inf)` of `weight(w) * ln(value)` by the
    /// trapezoidal rule over unmasked bins with `w >= w_min`. The DC bin is
    /// never used.
    pub fn log_integral(&self, w_min: f64, weight: impl Fn(f64) -> f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .freqs
            .iter()
            .zip(&self.values)
            .zip(&self.floor_mask)
            .filter(|((w, v), m)| !**m && **w > 0.0 && **w >= w_min && **v > 0.0)
            .map(|((w, v), _)| (*w, weight(*w) * v.ln()))
            .collect();
        let trap: f64 = pts
            .windows(2)
            .map(|p| 0.5 * (p[0].1 + p[1].1) * (p[1].0 - p[0].0))
            .sum();
        trap / PI
    }

    /// Lowest unmasked positive frequency.
    pub fn first_bin(&self) -> Option<f64> {
        self.freqs
            .iter()
            .zip(&self.floor_mask)
            .find(|(w, m)| !**m && **w > 0.0)
            .map(|(w, _)| *w)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "omega,value,masked")?;
        for k in 0..self.freqs.len() {
            writeln!(
                w,
                "{},{},{}",
                fmt17(self.freqs[k]),
                fmt17(self.values[k]),
                self.floor_mask[k]
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<LikeCurve> {
        let mut rdr = csv::Reader::from_path(path)?;
        check_header(&mut rdr, &["omega", "value", "masked"])?;
        let mut c = LikeCurve {
            freqs: Vec::new(),
            values: Vec::new(),
            floor_mask: Vec::new(),
        };
        for row in rdr.deserialize() {
            let (w, v, m): (f64, f64, bool) = row?;
            c.freqs.push(w);
            c.values.push(v);
            c.floor_mask.push(m);
        }
        Ok(c)
    }
}

fn like_curve(num: &SpectrumEstimate, den: &SpectrumEstimate) -> Result<LikeCurve> {
    let peak = den.values.iter().map(|v| v.re).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(BodeError::invalid("record", "disturbance has zero power"));
    }
    let floor = FLOOR * peak;
    let mut values = Vec::with_capacity(den.values.len());
    let mut mask = Vec::with_capacity(den.values.len());
    for (n, d) in num.values.iter().zip(&den.values) {
        let masked = d.re < floor;
        mask.push(masked);
        values.push(if masked {
            0.0
        } else {
            (n.re.max(0.0) / d.re).sqrt()
        });
    }
    if mask.iter().all(|&m| m) {
        return Err(BodeError::AllMasked);
    }
    Ok(LikeCurve {
        freqs: den.freqs.clone(),
        values,
        floor_mask: mask,
    })
}

/// `sqrt(phi_e / phi_d)` bin by bin.
pub fn sensitivity_like(rec: &SignalRecord, cfg: &WelchConfig) -> Result<LikeCurve> {
    let pd = welch_psd(&rec.d, rec.dt, cfg)?;
    let pe = welch_psd(&rec.e, rec.dt, cfg)?;
    like_curve(&pe, &pd)
}

/// `sqrt(phi_y / phi_d)` bin by bin.
pub fn comp_sensitivity_like(rec: &SignalRecord, cfg: &WelchConfig) -> Result<LikeCurve> {
    let pd = welch_psd(&rec.d, rec.dt, cfg)?;
    let py = welch_psd(&rec.y, rec.dt, cfg)?;
    like_curve(&py, &pd)
}

/// Raw and clipped magnitude-squared coherence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coherence {
    pub freqs: Vec<f64>,
    /// Clipped to `[0, 1 - COHERENCE_CLIP]`.
    pub values: Vec<f64>,
    /// Before clipping.
    pub raw: Vec<f64>,
    pub n_segments: usize,
}

pub fn coherence(x: &[f64], y: &[f64], dt: f64, cfg: &WelchConfig) -> Result<Coherence> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(BodeError::LengthMismatch(x.len(), y.len()));
    }
    let segs = cfg.segments(x.len());
    if segs < MIN_COHERENCE_SEGMENTS {
        return Err(BodeError::TooFewSegments {
            got: segs,
            needed: MIN_COHERENCE_SEGMENTS,
        });
    }
    let pxy = welch_cpsd(x, y, dt, cfg)?;
    let px = cross(x, x, dt, cfg)?;
    let py = cross(y, y, dt, cfg)?;
    let raw: Vec<f64> = pxy
        .values
        .iter()
        .zip(px.values.iter().zip(&py.values))
        .map(|(c, (a, b))| {
            let den = a.re * b.re;
            if den > 0.0 {
                c.norm_sqr() / den
            } else {
                0.0
            }
        })
        .collect();
    let values = raw
        .iter()
        .map(|g| g.clamp(0.0, 1.0 - COHERENCE_CLIP))
        .collect();
    Ok(Coherence {
        freqs: pxy.freqs,
        values,
        raw,
        n_segments: segs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MutualInfoRate {
    /// Nats per second.
    pub rate: f64,
    /// Fraction of bins with raw coherence at or above `1 - NEAR_UNITY`.
    pub near_unity_fraction: f64,
    pub n_segments: usize,
}

/// `-(1/4pi) * integral over (-inf, inf) of ln(1 - coherence(w)) dw`.
pub fn mutual_info_rate(
    x: &[f64],
    y: &[f64],
    dt: f64,
    cfg: &WelchConfig,
) -> Result<MutualInfoRate> {
    let coh = coherence(x, y, dt, cfg)?;
    let near = coh.raw.iter().filter(|&&g| g >= 1.0 - NEAR_UNITY).count();
    let fraction = near as f64 / coh.raw.len() as f64;
    if fraction > DIVERGENT_FRACTION {
        return Err(BodeError::Divergent { fraction });
    }
    let dw = coh.freqs[1] - coh.freqs[0];
    let s = fold_sum(coh.values.iter().map(|g| (1.0 - g).ln()));
    Ok(MutualInfoRate {
        rate: -s * dw / (4.0 * PI),
        near_unity_fraction: fraction,
        n_segments: coh.n_segments,
    })
}

/// Relative RMS residual of one spectral identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityResidual {
    pub name: String,
    pub relative_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub residuals: Vec<IdentityResidual>,
    /// Frequency range (rad/s) of the bins used.
    pub band: (f64, f64),
    pub bins: usize,
    pub threshold: f64,
    pub passed: bool,
}

pub const IDENTITY_THRESHOLD: f64 = 0.05;

/// Mid-band of an estimate: bins from the tenth up to a quarter of Nyquist
/// where `phi_d` is within 1% of its peak and above the floor.
pub fn mid_band(pd: &SpectrumEstimate) -> Vec<usize> {
    let peak = pd.values.iter().map(|v| v.re).fold(0.0, f64::max);
    let nyq = *pd.freqs.last().unwrap_or(&0.0);
    (10..pd.freqs.len())
        .filter(|&k| pd.freqs[k] <= 0.25 * nyq && pd.values[k].re >= 1e-2 * peak)
        .collect()
}

/// Compares estimated spectra of a record against the loop relations
/// `phi_ey = L(-jw) phi_e`, `phi_ye = L(jw) phi_e`, `phi_y = |L|^2 phi_e`
/// and `phi_d = phi_e + phi_ey + phi_ye + phi_y`.
pub fn cross_spectral_identity_check(
    rec: &SignalRecord,
    l: &TransferFunction,
    cfg: &WelchConfig,
) -> Result<IdentityReport> {
    let dt = rec.dt;
    let pd = welch_psd(&rec.d, dt, cfg)?;
    let pe = welch_psd(&rec.e, dt, cfg)?;
    let py = welch_psd(&rec.y, dt, cfg)?;
    let pey = welch_cpsd(&rec.e, &rec.y, dt, cfg)?;
    let pye = welch_cpsd(&rec.y, &rec.e, dt, cfg)?;
    let band = mid_band(&pd);
    if band.is_empty() {
        return Err(BodeError::AllMasked);
    }

    let lw: Vec<Complex64> = band.iter().map(|&k| l.at(pd.freqs[k])).collect();
    let scale: f64 = band.iter().map(|&k| pd.values[k].re.powi(2)).sum();
    let residual = |name: &str,
                    est: &dyn Fn(usize) -> Complex64,
                    pred: &dyn Fn(usize, Complex64) -> Complex64| {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &k) in band.iter().enumerate() {
            let p = pred(k, lw[i]);
            num += (est(k) - p).norm_sqr();
            den += p.norm_sqr();
        }
        // a vanishing prediction (L = 0) is measured against phi_d instead
        let den = if den > 1e-300 { den } else { scale };
        IdentityResidual {
            name: name.to_string(),
            relative_rms: (num / den).sqrt(),
        }
    };
    let residuals = vec![
        residual("phi_ey = L(-jw) phi_e", &|k| pey.values[k], &|k, l| {
            l.conj() * pe.values[k]
        }),
        residual("phi_ye = L(jw) phi_e", &|k| pye.values[k], &|k, l| {
            l * pe.values[k]
        }),
        residual("phi_y = |L|^2 phi_e", &|k| py.values[k], &|k, l| {
            l.norm_sqr() * pe.values[k]
        }),
        residual(
            "phi_d = phi_e + phi_ey + phi_ye + phi_y",
            &|k| pd.values[k],
            &|k, _| pe.values[k] + pey.values[k] + pye.values[k] + py.values[k],
        ),
    ];
    let passed = residuals
        .iter()
        .all(|r| r.relative_rms <= IDENTITY_THRESHOLD);
    Ok(IdentityReport {
        band: (pd.freqs[band[0]], pd.freqs[*band.last().unwrap()]),
        bins: band.len(),
        residuals,
        threshold: IDENTITY_THRESHOLD,
        passed,
    })
}
