//! Shared spectral helpers: FFT plan cache, band masks, detrending,
//! analytic signals and interpolated spectral peaks.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

type PlanCache = (FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>);

thread_local! {
    static PLANS: RefCell<PlanCache> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

/// Cached FFT plan. Plans are `Send + Sync` and can be shared across threads.
pub fn fft_plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    let forward = direction == FftDirection::Forward;
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((len, forward))
            .or_insert_with(|| planner.plan_fft(len, direction))
            .clone()
    })
}

/// Smallest `2^a 3^b 5^c` not below `n`.
pub fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Temporal frequency band in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec {
    pub f_lo: f64,
    pub f_hi: f64,
}

impl BandSpec {
    pub fn new(f_lo: f64, f_hi: f64) -> Result<Self> {
        if !(f_lo >= 0.0 && f_lo < f_hi && f_hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "band needs 0 <= f_lo < f_hi, got [{f_lo}, {f_hi}]"
            )));
        }
        Ok(BandSpec { f_lo, f_hi })
    }

    /// Checks the band against the Nyquist limit of `fps`.
    pub fn validate(&self, fps: f64) -> Result<()> {
        if !(self.f_lo >= 0.0 && self.f_lo < self.f_hi && self.f_hi <= fps / 2.0 * (1.0 + 1e-12)) {
            return Err(Error::InvalidBand {
                f_lo: self.f_lo,
                f_hi: self.f_hi,
                fps,
            });
        }
        Ok(())
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.f_lo + self.f_hi)
    }

    /// Whether `|f|` lies in the band, with a relative slack of `1e-9 * df`
    /// so bin-aligned edges are inclusive.
    pub fn contains(&self, f: f64, df: f64) -> bool {
        let f = f.abs();
        let slack = 1e-9 * df;
        f >= self.f_lo - slack && f <= self.f_hi + slack
    }
}

/// Signed frequency of DFT bin `k` for a length-`n` transform.
pub fn bin_frequency(k: usize, n: usize, fps: f64) -> f64 {
    let df = fps / n as f64;
    if k <= n / 2 {
        k as f64 * df
    } else {
        (k as f64 - n as f64) * df
    }
}

/// 0/1 mask over DFT bins keeping `|f|` inside the band.
pub fn band_mask(n: usize, fps: f64, band: &BandSpec) -> Vec<bool> {
    let df = fps / n as f64;
    (0..n)
        .map(|k| band.contains(bin_frequency(k, n, fps), df))
        .collect()
}

/// Applies a DFT-domain mask to a real series in place.
pub(crate) fn apply_mask(series: &mut [f64], mask: &[bool], buf: &mut Vec<Complex64>) {
    let n = series.len();
    buf.clear();
    buf.extend(series.iter().map(|&v| Complex64::new(v, 0.0)));
    fft_plan(n, FftDirection::Forward).process(buf);
    for (c, &keep) in buf.iter_mut().zip(mask) {
        if !keep {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    fft_plan(n, FftDirection::Inverse).process(buf);
    let scale = 1.0 / n as f64;
    for (s, c) in series.iter_mut().zip(buf.iter()) {
        *s = c.re * scale;
    }
}

/// Removes the least-squares line from `series`.
pub fn detrend_linear(series: &mut [f64]) {
    let n = series.len();
    if n < 2 {
        if n == 1 {
            series[0] = 0.0;
        }
        return;
    }
    let t_mean = (n as f64 - 1.0) / 2.0;
    let y_mean = series.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, &y) in series.iter().enumerate() {
        let t = i as f64 - t_mean;
        sxy += t * (y - y_mean);
        sxx += t * t;
    }
    let slope = sxy / sxx;
    for (i, y) in series.iter_mut().enumerate() {
        *y -= y_mean + slope * (i as f64 - t_mean);
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Periodic-free (symmetric) Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![1.0; n];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// One-sided magnitude spectrum (bins `0..=n/2`) of the mean-removed,
/// Hann-windowed series.
pub fn magnitude_spectrum(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let m = mean(series);
    let mut buf: Vec<Complex64> = series
        .iter()
        .zip(hann(n))
        .map(|(&v, w)| Complex64::new((v - m) * w, 0.0))
        .collect();
    fft_plan(n, FftDirection::Forward).process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm()).collect()
}

/// Frequency (Hz) of the largest one-sided magnitude inside `band`, refined by
/// a parabola through the log-magnitudes of the peak and its neighbours.
/// `n` is the transform length that produced `mags`.
pub fn spectral_peak(mags: &[f64], n: usize, fps: f64, band: &BandSpec) -> Result<f64> {
    let df = fps / n as f64;
    let mut best: Option<usize> = None;
    for (k, &m) in mags.iter().enumerate() {
        if band.contains(k as f64 * df, df) && best.is_none_or(|b| m > mags[b]) {
            best = Some(k);
        }
    }
    let k = best.ok_or(Error::EmptyBand {
        f_lo: band.f_lo,
        f_hi: band.f_hi,
    })?;
    if !(mags[k] > 0.0) {
        return Err(Error::FlatSpectrum);
    }
    let mut offset = 0.0;
    if k > 0 && k + 1 < mags.len() && mags[k - 1] > 0.0 && mags[k + 1] > 0.0 {
        let (a, b, c) = (mags[k - 1].ln(), mags[k].ln(), mags[k + 1].ln());
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    Ok((k as f64 + offset) * df)
}

/// Analytic signal of a real sequence (negative frequencies removed).
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_plan(n, FftDirection::Forward).process(&mut buf);
    let half = n / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        let w = if k == 0 || (n.is_multiple_of(2) && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *c *= w / n as f64;
    }
    fft_plan(n, FftDirection::Inverse).process(&mut buf);
    buf
}
