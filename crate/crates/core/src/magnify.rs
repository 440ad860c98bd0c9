//! Motion magnification by temporal filtering of Gabor phases.
//!
//! Every frame's range profile is decomposed with a [`GaborBank`]. For each
//! level and range bin the coefficient phase is unwrapped along slow time,
//! detrended, and passed through an ideal band filter; the coefficient is then
//! rotated by `alpha` times that filtered phase and the frame is rebuilt.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftDirection;

pub use crate::dsp::BandSpec;
use crate::dsp::{apply_mask, band_mask, detrend_linear, fft_plan};
use crate::error::{Error, Result};
use crate::gabor::{EdgeMode, GaborBank};
use crate::radargram::{Radargram, WindowSpec};

/// Coefficients below this fraction of their level's peak magnitude carry no
/// usable phase.
pub const LOW_AMPLITUDE_RATIO: f64 = 1e-8;
/// DFT bins below this fraction of the reference frame's peak are left untouched
/// by [`global_magnify`].
pub const GLOBAL_ZERO_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnifyConfig {
    /// Motion gain; output displacement is `(1 + alpha)` times the in-band input.
    pub alpha: f64,
    pub band: BandSpec,
    /// Remove the least-squares line from each unwrapped phase series before
    /// band filtering. Steady drifts otherwise leak into the band through the
    /// implicit periodic extension of the DFT.
    pub detrend: bool,
    /// Gaussian width (bins) of optional amplitude-weighted spatial smoothing
    /// of the filtered phase.
    pub phase_smoothing: Option<f64>,
}

impl MagnifyConfig {
    pub fn new(alpha: f64, band: BandSpec) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= -1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be finite and >= -1, got {alpha}"
            )));
        }
        Ok(MagnifyConfig {
            alpha,
            band,
            detrend: true,
            phase_smoothing: None,
        })
    }

    pub fn with_phase_smoothing(mut self, sigma_bins: f64) -> Self {
        self.phase_smoothing = Some(sigma_bins);
        self
    }

    pub fn without_detrend(mut self) -> Self {
        self.detrend = false;
        self
    }
}

/// Ideal band filter: DFT bins with `|f|` in `[f_lo, f_hi]` are kept, all
/// others zeroed.
pub fn temporal_bandpass(series: &[f64], fps: f64, band: &BandSpec) -> Result<Vec<f64>> {
    band.validate(fps)?;
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { bin: 0, frame: i });
    }
    let mut out = series.to_vec();
    if out.is_empty() {
        return Ok(out);
    }
    let mask = band_mask(out.len(), fps, band);
    apply_mask(&mut out, &mask, &mut Vec::new());
    Ok(out)
}

/// Adds multiples of 2π so successive differences fall in (-π, π].
pub fn unwrap_phase(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut turns: i64 = 0;
    let mut prev = match series.first() {
        Some(&p) => p,
        None => return out,
    };
    out.push(prev);
    for &p in &series[1..] {
        let d = p - prev;
        // Wrapped difference is d + 2πk with k chosen so it lands in (-π, π].
        turns += -((d - PI) / (2.0 * PI)).ceil() as i64;
        out.push(p + 2.0 * PI * turns as f64);
        prev = p;
    }
    out
}

/// Unwrap, detrend and band-filter the phase of one coefficient series.
pub(crate) struct PhaseFilter {
    mask: Vec<bool>,
    detrend: bool,
}

impl PhaseFilter {
    pub(crate) fn new(n_frames: usize, fps: f64, band: &BandSpec, detrend: bool) -> Result<Self> {
        band.validate(fps)?;
        Ok(PhaseFilter {
            mask: band_mask(n_frames, fps, band),
            detrend,
        })
    }

    /// Filtered phase; samples with `|c| < threshold` contribute zero phase.
    pub(crate) fn apply(&self, coeffs: &[Complex64], threshold: f64, buf: &mut Vec<Complex64>) -> Vec<f64> {
        let raw: Vec<f64> = coeffs
            .iter()
            .map(|c| if c.norm() < threshold { 0.0 } else { c.arg() })
            .collect();
        let mut phase = unwrap_phase(&raw);
        if self.detrend {
            detrend_linear(&mut phase);
        }
        apply_mask(&mut phase, &self.mask, buf);
        phase
    }
}

fn check_input(r: &Radargram, cfg: &MagnifyConfig) -> Result<()> {
    if r.n_frames() < 4 {
        return Err(Error::SignalTooShort {
            len: r.n_frames(),
            required: 4,
        });
    }
    cfg.band.validate(r.fps())
}

/// Magnifies in-band motion of a whole record.
pub fn magnify(r: &Radargram, bank: &GaborBank, cfg: &MagnifyConfig) -> Result<Radargram> {
    check_input(r, cfg)?;
    let plan = bank.plan(r.n_bins(), EdgeMode::ZeroPad)?;
    let n_frames = r.n_frames();
    let n = r.n_bins();
    let m = plan.fft_len();

    let spectra: Vec<Vec<Complex64>> = (0..n_frames)
        .into_par_iter()
        .map(|t| plan.spectrum(&r.frame(t)))
        .collect();
    let mut acc = vec![vec![Complex64::new(0.0, 0.0); m]; n_frames];
    let filter = PhaseFilter::new(n_frames, r.fps(), &cfg.band, cfg.detrend)?;

    for k in 0..plan.n_levels() {
        let mut by_frame: Vec<Vec<Complex64>> = spectra
            .par_iter()
            .map_init(Vec::new, |scratch, s| plan.level_from_spectrum(s, k, scratch))
            .collect();

        if cfg.alpha != 0.0 {
            rotate_level(&mut by_frame, k, n, &filter, cfg)?;
        }

        acc.par_iter_mut()
            .zip(by_frame.par_iter())
            .for_each_init(Vec::new, |scratch, (a, c)| {
                plan.accumulate_level(c, k, a, scratch)
            });
    }

    let frames: Vec<Vec<f64>> = acc.into_par_iter().map(|a| plan.finish(a)).collect();
    Radargram::from_frames(&frames, r.meta())
}

/// Rotates every coefficient of one level by `alpha` times its filtered phase.
fn rotate_level(
    by_frame: &mut [Vec<Complex64>],
    level: usize,
    n_bins: usize,
    filter: &PhaseFilter,
    cfg: &MagnifyConfig,
) -> Result<()> {
    let n_frames = by_frame.len();
    let peak = by_frame.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
    let threshold = LOW_AMPLITUDE_RATIO * peak;

    let by_bin: Vec<Vec<Complex64>> = (0..n_bins)
        .map(|x| by_frame.iter().map(|f| f[x]).collect())
        .collect();
    let mut phases: Vec<Vec<f64>> = by_bin
        .par_iter()
        .map_init(Vec::new, |buf, series| filter.apply(series, threshold, buf))
        .collect();
    if let Some(bin) = phases.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteIntermediate { level, bin });
    }
    if let Some(sigma) = cfg.phase_smoothing {
        phases = smooth_phases(&phases, &by_bin, sigma, n_frames);
    }

    by_frame.par_iter_mut().enumerate().for_each(|(t, frame)| {
        for (x, c) in frame.iter_mut().enumerate() {
            if c.norm() >= threshold {
                *c *= Complex64::from_polar(1.0, cfg.alpha * phases[x][t]);
            }
        }
    });
    Ok(())
}

/// Gaussian smoothing of phase along range, weighted by `|c|²`.
fn smooth_phases(
    phases: &[Vec<f64>],
    coeffs: &[Vec<Complex64>],
    sigma: f64,
    n_frames: usize,
) -> Vec<Vec<f64>> {
    let n = phases.len();
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|j| (-(j * j) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut out = vec![vec![0.0; n_frames]; n];
    for t in 0..n_frames {
        for x in 0..n as isize {
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, w) in taps.iter().enumerate() {
                let src = x + i as isize - radius;
                if src < 0 || src >= n as isize {
                    continue;
                }
                let s = src as usize;
                let wc = w * coeffs[s][t].norm_sqr();
                num += wc * phases[s][t];
                den += wc;
            }
            out[x as usize][t] = if den > 0.0 { num / den } else { 0.0 };
        }
    }
    out
}

/// Window-at-a-time magnification for long records. Each output frame is
/// taken from the window whose center is nearest, discarding the filter edge
/// transients at window boundaries.
pub fn magnify_windowed(
    r: &Radargram,
    bank: &GaborBank,
    cfg: &MagnifyConfig,
    window: &WindowSpec,
) -> Result<Radargram> {
    check_input(r, cfg)?;
    let (len, shift) = window.frames(r.fps())?;
    let n_frames = r.n_frames();
    if n_frames <= len {
        return magnify(r, bank, cfg);
    }
    let mut starts: Vec<usize> = (0..=(n_frames - len) / shift).map(|i| i * shift).collect();
    if *starts.last().unwrap() + len < n_frames {
        starts.push(n_frames - len);
    }
    let outputs: Vec<Radargram> = starts
        .iter()
        .map(|&s| magnify(&r.slice_frames(s, len)?, bank, cfg))
        .collect::<Result<_>>()?;

    let centers: Vec<f64> = starts
        .iter()
        .map(|&s| s as f64 + (len as f64 - 1.0) / 2.0)
        .collect();
    let mut data = vec![0.0; r.n_bins() * n_frames];
    for t in 0..n_frames {
        let w = (0..starts.len())
            .min_by(|&a, &b| {
                (t as f64 - centers[a])
                    .abs()
                    .total_cmp(&(t as f64 - centers[b]).abs())
            })
            .unwrap();
        for b in 0..r.n_bins() {
            data[b * n_frames + t] = outputs[w].get(b, t - starts[w]);
        }
    }
    Radargram::new(r.n_bins(), n_frames, data, r.meta())
}

/// Global Fourier-series magnification of profiles under pure translation.
///
/// The phase of every spatial DFT bin relative to frame 0 is `ω δ(t)`; it is
/// unwrapped over time, band-filtered, scaled by `alpha` and added back.
pub fn global_magnify(frames: &[Vec<f64>], fps: f64, cfg: &MagnifyConfig) -> Result<Vec<Vec<f64>>> {
    cfg.band.validate(fps)?;
    let n_frames = frames.len();
    if n_frames < 2 {
        return Err(Error::SignalTooShort {
            len: n_frames,
            required: 2,
        });
    }
    let n = frames[0].len();
    if n == 0 {
        return Err(Error::InvalidParameter("profiles are empty".into()));
    }
    if let Some((t, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} bins per profile"),
            found: format!("{} bins in frame {t}", f.len()),
        });
    }
    let forward = fft_plan(n, FftDirection::Forward);
    let inverse = fft_plan(n, FftDirection::Inverse);

    let mut spectra: Vec<Vec<Complex64>> = frames
        .iter()
        .map(|f| {
            let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            forward.process(&mut buf);
            buf
        })
        .collect();

    let reference = spectra[0].clone();
    let peak = reference.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let threshold = GLOBAL_ZERO_RATIO * peak;
    let mask = band_mask(n_frames, fps, &cfg.band);
    let mut buf = Vec::new();

    // DC and Nyquist are real for real input and cannot carry a translation.
    for k in 1..n.div_ceil(2) {
        if reference[k].norm() < threshold {
            continue;
        }
        let rel: Vec<f64> = spectra
            .iter()
            .map(|s| {
                if s[k].norm() < threshold {
                    0.0
                } else {
                    (s[k] * reference[k].conj()).arg()
                }
            })
            .collect();
        let mut dphi = unwrap_phase(&rel);
        apply_mask(&mut dphi, &mask, &mut buf);
        for (s, &p) in spectra.iter_mut().zip(&dphi) {
            let rotated = s[k] * Complex64::from_polar(1.0, cfg.alpha * p);
            s[k] = rotated;
            s[n - k] = rotated.conj();
        }
    }

    let scale = 1.0 / n as f64;
    Ok(spectra
        .into_iter()
        .map(|mut s| {
            inverse.process(&mut s);
            s.iter().map(|c| c.re * scale).collect()
        })
        .collect())
}
