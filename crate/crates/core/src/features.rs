//! Per-window vital-sign features from Gabor phase signals.

use std::io::Write;
use std::path::Path;

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dsp::{magnitude_spectrum, mean, spectral_peak, BandSpec};
use crate::error::{Error, Result};
use crate::gabor::{EdgeMode, GaborBank};
use crate::magnify::{magnify, MagnifyConfig, PhaseFilter, LOW_AMPLITUDE_RATIO};
use crate::radargram::{Radargram, RangeRoi, WindowSpec};
use crate::regress::temporal_fft_baseline;

/// Breathing search band, Hz.
pub const RR_BAND: (f64, f64) = (0.1, 0.7);
/// Cardiac search band, Hz.
pub const HR_BAND: (f64, f64) = (0.7, 3.0);

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSignal {
    pub level_index: usize,
    pub wavelength: f64,
    pub series: Vec<f64>,
    pub fps: f64,
}

impl LevelSignal {
    pub fn new(series: Vec<f64>, fps: f64) -> Self {
        LevelSignal {
            level_index: 0,
            wavelength: 0.0,
            series,
            fps,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.series.len() as f64 / self.fps
    }
}

/// One slow-time series per bank level: the band-filtered phase of each ROI
/// bin, averaged with weights equal to the squared window-mean amplitude.
pub fn level_signals(
    window: &Radargram,
    bank: &GaborBank,
    band: &BandSpec,
    roi: RangeRoi,
) -> Result<Vec<LevelSignal>> {
    roi.check(window.n_bins())?;
    let plan = bank.plan(window.n_bins(), EdgeMode::ZeroPad)?;
    let n_frames = window.n_frames();
    let filter = PhaseFilter::new(n_frames, window.fps(), band, true)?;
    let spectra: Vec<Vec<Complex64>> = (0..n_frames)
        .into_par_iter()
        .map(|t| plan.spectrum(&window.frame(t)))
        .collect();

    (0..plan.n_levels())
        .map(|k| {
            let by_frame: Vec<Vec<Complex64>> = spectra
                .par_iter()
                .map_init(Vec::new, |scratch, s| plan.level_from_spectrum(s, k, scratch))
                .collect();
            let peak = by_frame.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
            let threshold = LOW_AMPLITUDE_RATIO * peak;
            let per_bin: Vec<(f64, Vec<f64>)> = roi
                .bins()
                .collect::<Vec<_>>()
                .par_iter()
                .map_init(Vec::new, |buf, &x| {
                    let series: Vec<Complex64> = by_frame.iter().map(|f| f[x]).collect();
                    let amp = series.iter().map(|c| c.norm()).sum::<f64>() / n_frames as f64;
                    (amp * amp, filter.apply(&series, threshold, buf))
                })
                .collect();
            let total: f64 = per_bin.iter().map(|(w, _)| w).sum();
            if !(total > 0.0) {
                return Err(Error::ZeroAmplitude { level: k });
            }
            let mut series = vec![0.0; n_frames];
            for (w, phase) in &per_bin {
                for (s, p) in series.iter_mut().zip(phase) {
                    *s += w / total * p;
                }
            }
            if let Some(bin) = series.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIntermediate { level: k, bin });
            }
            Ok(LevelSignal {
                level_index: k,
                wavelength: bank.levels()[k].wavelength,
                series,
                fps: window.fps(),
            })
        })
        .collect()
}

/// Dominant frequency inside `search_band`, in breaths or beats per minute.
pub fn fft_peak_bpm(s: &LevelSignal, search_band: &BandSpec) -> Result<f64> {
    let n = s.series.len();
    if n < 2 {
        return Err(Error::SignalTooShort { len: n, required: 2 });
    }
    Ok(60.0 * spectral_peak(&magnitude_spectrum(&s.series), n, s.fps, search_band)?)
}

/// Sign changes of the mean-removed series per second, halved: the implied
/// fundamental frequency in Hz. A zero sample keeps the sign before it.
pub fn zcr_hz(s: &LevelSignal) -> f64 {
    let m = mean(&s.series);
    let mut prev = 0.0f64;
    let mut crossings = 0usize;
    for &v in &s.series {
        let d = v - m;
        let sign = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            continue;
        };
        if prev != 0.0 && sign != prev {
            crossings += 1;
        }
        prev = sign;
    }
    crossings as f64 / (2.0 * s.duration_s())
}

/// Time-stamped ground truth in bpm.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSeries {
    pub times_s: Vec<f64>,
    pub bpm: Vec<f64>,
}

impl LabelSeries {
    pub fn new(times_s: Vec<f64>, bpm: Vec<f64>) -> Result<Self> {
        if times_s.len() != bpm.len() || times_s.is_empty() {
            return Err(Error::Format(format!(
                "labels need equal, non-zero numbers of times and values ({} vs {})",
                times_s.len(),
                bpm.len()
            )));
        }
        if times_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Format("label times must be strictly increasing".into()));
        }
        if bpm.iter().chain(&times_s).any(|v| !v.is_finite()) {
            return Err(Error::Format("labels must be finite".into()));
        }
        Ok(LabelSeries { times_s, bpm })
    }

    /// Constant label over `[0, duration_s]`.
    pub fn constant(bpm: f64, duration_s: f64) -> Self {
        LabelSeries {
            times_s: vec![0.0, duration_s],
            bpm: vec![bpm, bpm],
        }
    }

    /// Two-column `time_s,bpm` CSV; a non-numeric first line is a header.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = match cols.as_slice() {
                [t, v] => t.parse::<f64>().ok().zip(v.parse::<f64>().ok()),
                _ => None,
            };
            match parsed {
                Some((t, v)) => {
                    times.push(t);
                    values.push(v);
                }
                None if i == 0 => continue,
                None => {
                    return Err(Error::Format(format!(
                        "label line {}: expected `time_s,bpm`, got `{line}`",
                        i + 1
                    )))
                }
            }
        }
        Self::new(times, values)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::parse_csv(&text)
    }

    fn interpolate(&self, t: f64) -> f64 {
        let i = self.times_s.partition_point(|&s| s <= t);
        if i == 0 {
            return self.bpm[0];
        }
        if i == self.times_s.len() {
            return self.bpm[i - 1];
        }
        let (t0, t1) = (self.times_s[i - 1], self.times_s[i]);
        let w = (t - t0) / (t1 - t0);
        self.bpm[i - 1] + (self.bpm[i] - self.bpm[i - 1]) * w
    }

    /// Mean of the samples in `[start_s, end_s)`, or the interpolated value
    /// at the window center when none fall inside.
    pub fn window_mean(&self, start_s: f64, end_s: f64) -> f64 {
        let inside: Vec<f64> = self
            .times_s
            .iter()
            .zip(&self.bpm)
            .filter(|(&t, _)| t >= start_s && t < end_s)
            .map(|(_, &v)| v)
            .collect();
        if inside.is_empty() {
            self.interpolate(0.5 * (start_s + end_s))
        } else {
            mean(&inside)
        }
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times_s[0], self.times_s[self.times_s.len() - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSpec {
    pub window: WindowSpec,
    /// Phase bandpass and FFT-peak search band.
    pub band: BandSpec,
    pub roi: RangeRoi,
    /// Magnification applied to each window before feature extraction; 0 skips it.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub window_start_s: f64,
    /// FFT-peak bpm for every level, then zero-crossing rate in Hz for every level.
    pub features: Vec<f64>,
    pub label_bpm: Option<f64>,
    /// Temporal-FFT estimate on the raw window, when one exists.
    pub baseline_bpm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

pub fn format_wavelength(wl: f64) -> String {
    if wl.fract() == 0.0 && wl.abs() < 1e15 {
        format!("{}", wl as i64)
    } else {
        let s = format!("{wl:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub fn feature_names(bank: &GaborBank) -> Vec<String> {
    let wls = bank.wavelengths();
    wls.iter()
        .map(|&w| format!("fftpeak_l{}", format_wavelength(w)))
        .chain(wls.iter().map(|&w| format!("zcr_l{}", format_wavelength(w))))
        .collect()
}

fn window_features(window: &Radargram, bank: &GaborBank, spec: &FeatureSpec) -> Result<Vec<f64>> {
    let magnified;
    let source = if spec.alpha != 0.0 {
        magnified = magnify(window, bank, &MagnifyConfig::new(spec.alpha, spec.band)?)?;
        &magnified
    } else {
        window
    };
    let signals = level_signals(source, bank, &spec.band, spec.roi)?;
    let mut peaks = Vec::with_capacity(2 * signals.len());
    for s in &signals {
        peaks.push(fft_peak_bpm(s, &spec.band)?);
    }
    peaks.extend(signals.iter().map(zcr_hz));
    Ok(peaks)
}

/// Slides `spec.window` over the record and emits one row per window, in
/// window order. Windows whose extraction fails are skipped with a warning.
pub fn featurize(
    r: &Radargram,
    bank: &GaborBank,
    spec: &FeatureSpec,
    labels: Option<&LabelSeries>,
) -> Result<FeatureTable> {
    spec.band.validate(r.fps())?;
    spec.roi.check(r.n_bins())?;
    let (len, _) = spec.window.frames(r.fps())?;
    let starts = spec.window.starts(r.n_frames(), r.fps())?;
    if let Some(l) = labels {
        let (lo, hi) = l.span();
        if lo > 0.0 || hi < r.duration_s() - 1.0 / r.fps() {
            warn!(
                "labels cover {lo}..{hi} s but the record spans 0..{} s",
                r.duration_s()
            );
        }
    }

    let rows: Vec<Option<FeatureRow>> = starts
        .par_iter()
        .map(|&start| {
            let start_s = start as f64 / r.fps();
            let result = r
                .slice_frames(start, len)
                .and_then(|w| Ok((window_features(&w, bank, spec)?, w)));
            match result {
                Ok((features, w)) => Some(FeatureRow {
                    window_start_s: start_s,
                    features,
                    label_bpm: labels.map(|l| l.window_mean(start_s, start_s + len as f64 / r.fps())),
                    baseline_bpm: temporal_fft_baseline(&w, spec.roi, &spec.band).ok(),
                }),
                Err(e) => {
                    warn!("skipping window at {start_s} s: {e}");
                    None
                }
            }
        })
        .collect();

    Ok(FeatureTable {
        names: feature_names(bank),
        rows: rows.into_iter().flatten().collect(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

impl FeatureTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "window_start_s,{},label_bpm,baseline_bpm",
            self.names.join(",")
        )?;
        for row in &self.rows {
            let feats: Vec<String> = row.features.iter().map(|v| format!("{v:?}")).collect();
            writeln!(
                w,
                "{:?},{},{},{}",
                row.window_start_s,
                feats.join(","),
                fmt_opt(row.label_bpm),
                fmt_opt(row.baseline_bpm)
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io_at(path, e))
    }

    /// Reads a table written by [`FeatureTable::write_csv`]. Every column other
    /// than `window_start_s`, `label_bpm` and `baseline_bpm` is a feature.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Format("empty feature file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let find = |name: &str| cols.iter().position(|c| *c == name);
        let start_col = find("window_start_s")
            .ok_or_else(|| Error::Format("feature header lacks window_start_s".into()))?;
        let label_col = find("label_bpm");
        let base_col = find("baseline_bpm");
        let feat_cols: Vec<usize> = (0..cols.len())
            .filter(|&i| Some(i) != label_col && Some(i) != base_col && i != start_col)
            .collect();
        let names = feat_cols.iter().map(|&i| cols[i].to_string()).collect();

        let mut rows = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::Format(format!(
                    "feature line {}: {} fields, header has {}",
                    i + 1,
                    fields.len(),
                    cols.len()
                )));
            }
            let num = |j: usize| -> Result<f64> {
                fields[j]
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("feature line {}: bad number `{}`", i + 1, fields[j])))
            };
            let opt = |j: Option<usize>| -> Result<Option<f64>> {
                match j {
                    Some(j) if !fields[j].is_empty() => num(j).map(Some),
                    _ => Ok(None),
                }
            };
            rows.push(FeatureRow {
                window_start_s: num(start_col)?,
                features: feat_cols.iter().map(|&j| num(j)).collect::<Result<_>>()?,
                label_bpm: opt(label_col)?,
                baseline_bpm: opt(base_col)?,
            });
        }
        Ok(FeatureTable { names, rows })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::parse_csv(&text)
    }
}
