//! Complex Gabor filter bank: kernel construction, multi-wavelength
//! decomposition of range profiles, and reconstruction by filtering each
//! level a second time with its own kernel.
//!
//! Kernels are Hermitian (`g(-x) = conj(g(x))`), so every level's DFT response
//! `Ψ_k` is real and the twice-filtered response `Ψ_k²` is non-negative; levels
//! therefore add constructively on reconstruction. The bank is generally not a
//! tight frame, so the summed response is divided out in the frequency domain.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection};

use crate::config::ConfigFile;
use crate::dsp::{fast_len, fft_plan};
use crate::error::{Error, Result};

/// Wavelengths (bins) of the stock bank.
pub const DEFAULT_WAVELENGTHS: [f64; 7] = [75.0, 15.0, 10.0, 9.0, 7.0, 5.0, 4.0];
/// Stock envelope width is `wavelength / DEFAULT_BANDWIDTH_DIVISOR`.
pub const DEFAULT_BANDWIDTH_DIVISOR: f64 = 15.0;
/// Minimum kernel half-width in units of sigma.
pub const MIN_SUPPORT_MULTIPLIER: f64 = 4.0;
/// Aggregate-response floor relative to its maximum.
pub const NORMALIZATION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborParams {
    /// Carrier period in bins.
    pub wavelength: f64,
    /// Gaussian envelope standard deviation in bins.
    pub sigma: f64,
    /// Kernel is sampled on `-support_radius..=support_radius`.
    pub support_radius: usize,
}

impl GaborParams {
    pub fn new(wavelength: f64, sigma: f64) -> Result<Self> {
        Self::with_support(wavelength, sigma, MIN_SUPPORT_MULTIPLIER)
    }

    pub fn with_support(wavelength: f64, sigma: f64, support_multiplier: f64) -> Result<Self> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !(support_multiplier >= MIN_SUPPORT_MULTIPLIER) {
            return Err(Error::InvalidParameter(format!(
                "support multiplier must be >= {MIN_SUPPORT_MULTIPLIER}, got {support_multiplier}"
            )));
        }
        let support_radius = (support_multiplier * sigma).ceil() as usize;
        Ok(GaborParams {
            wavelength,
            sigma,
            support_radius: support_radius.max((MIN_SUPPORT_MULTIPLIER * sigma).ceil() as usize),
        })
    }

    /// Carrier angular frequency, radians per bin.
    pub fn omega(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn support_len(&self) -> usize {
        2 * self.support_radius + 1
    }
}

/// Samples `g(x) = exp(-x²/2σ²) exp(iωx) / (√(2π) σ²)` at integer
/// `x = -r..=r`; index `r` holds `x = 0`.
pub fn make_gabor(p: &GaborParams) -> Vec<Complex64> {
    let r = p.support_radius as i64;
    let scale = 1.0 / ((2.0 * PI).sqrt() * p.sigma * p.sigma);
    let omega = p.omega();
    (-r..=r)
        .map(|x| {
            let x = x as f64;
            let env = scale * (-x * x / (2.0 * p.sigma * p.sigma)).exp();
            if x == 0.0 {
                Complex64::new(env, 0.0)
            } else {
                Complex64::from_polar(env, omega * x)
            }
        })
        .collect()
}

/// Boundary treatment for the range-axis convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeMode {
    /// Linear convolution against a zero-extended profile, "same" output size.
    #[default]
    ZeroPad,
    /// Periodic profile.
    Circular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaborBank {
    levels: Vec<GaborParams>,
    kernels: Vec<Vec<Complex64>>,
}

impl GaborBank {
    pub fn new(levels: Vec<GaborParams>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidParameter("bank needs at least one level".into()));
        }
        for w in levels.windows(2) {
            if !(w[0].wavelength > w[1].wavelength) {
                return Err(Error::InvalidParameter(format!(
                    "wavelengths must be strictly decreasing, got {} then {}",
                    w[0].wavelength, w[1].wavelength
                )));
            }
        }
        let kernels = levels.iter().map(make_gabor).collect();
        Ok(GaborBank { levels, kernels })
    }

    /// One level per wavelength with `sigma = wavelength / bandwidth_divisor`.
    pub fn from_wavelengths(
        wavelengths: &[f64],
        bandwidth_divisor: f64,
        support_multiplier: f64,
    ) -> Result<Self> {
        if !(bandwidth_divisor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth divisor must be positive, got {bandwidth_divisor}"
            )));
        }
        let levels = wavelengths
            .iter()
            .map(|&l| GaborParams::with_support(l, l / bandwidth_divisor, support_multiplier))
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels)
    }

    /// The stock seven-level bank. Warns when the signal is shorter than
    /// twice the longest wavelength.
    pub fn default_bank(signal_len: usize) -> Self {
        if (signal_len as f64) < 2.0 * DEFAULT_WAVELENGTHS[0] {
            log::warn!(
                "signal of {signal_len} bins is shorter than twice the longest wavelength ({})",
                DEFAULT_WAVELENGTHS[0]
            );
        }
        Self::from_wavelengths(
            &DEFAULT_WAVELENGTHS,
            DEFAULT_BANDWIDTH_DIVISOR,
            MIN_SUPPORT_MULTIPLIER,
        )
        .expect("stock bank is valid")
    }

    /// Octave-spaced bank: wavelength and sigma double per level, listed
    /// coarsest first.
    pub fn dyadic(finest_wavelength: f64, n_levels: usize, bandwidth_divisor: f64) -> Result<Self> {
        if n_levels == 0 {
            return Err(Error::InvalidParameter("dyadic bank needs >= 1 level".into()));
        }
        let wavelengths: Vec<f64> = (0..n_levels)
            .rev()
            .map(|k| finest_wavelength * 2f64.powi(k as i32))
            .collect();
        Self::from_wavelengths(&wavelengths, bandwidth_divisor, MIN_SUPPORT_MULTIPLIER)
    }

    /// Constant-sigma bank whose carriers tile the angular frequency axis at
    /// spacing `1/sigma` from `2π/max_wavelength` up to `2π/min_wavelength`.
    /// Long envelopes keep each level narrowband, which is what large
    /// magnification factors need.
    pub fn uniform(sigma: f64, min_wavelength: f64, max_wavelength: f64) -> Result<Self> {
        if !(min_wavelength >= 2.0 && max_wavelength > min_wavelength && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "uniform bank needs sigma > 0 and 2 <= min ({min_wavelength}) < max ({max_wavelength})"
            )));
        }
        let w_lo = 2.0 * PI / max_wavelength;
        let w_hi = 2.0 * PI / min_wavelength;
        let step = 1.0 / sigma;
        let count = ((w_hi - w_lo) / step + 1e-9).floor() as usize + 1;
        let levels = (0..count)
            .map(|k| GaborParams::new(2.0 * PI / (w_lo + k as f64 * step), sigma))
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels)
    }

    /// Bank from `key=value` configuration:
    ///
    /// ```text
    /// wavelengths = 75,15,10,9,7,5,4   # bins
    /// bandwidth_divisor = 15           # sigma = wavelength / divisor
    /// sigma = 10                       # fixed sigma instead of divisor
    /// support_multiplier = 4           # kernel half-width in sigmas
    /// dyadic = 4:5                     # finest wavelength : levels
    /// uniform_sigma = 10               # with min_wavelength / max_wavelength
    /// ```
    pub fn from_config(cfg: &ConfigFile) -> Result<Self> {
        let root = cfg.root();
        let support: f64 = root
            .optional("support_multiplier")?
            .unwrap_or(MIN_SUPPORT_MULTIPLIER);
        let divisor: f64 = root
            .optional("bandwidth_divisor")?
            .unwrap_or(DEFAULT_BANDWIDTH_DIVISOR);

        if let Some(sigma) = root.optional::<f64>("uniform_sigma")? {
            let bank = Self::uniform(
                sigma,
                root.require("min_wavelength")?,
                root.require("max_wavelength")?,
            )?;
            return Self::new(
                bank.levels
                    .iter()
                    .map(|p| GaborParams::with_support(p.wavelength, p.sigma, support))
                    .collect::<Result<_>>()?,
            );
        }
        if let Some(spec) = root.optional::<String>("dyadic")? {
            let line = root.get("dyadic").map_or(0, |e| e.line);
            let (finest, n) = spec.split_once(':').ok_or(Error::Config {
                line,
                message: "dyadic expects `finest_wavelength:levels`".into(),
            })?;
            let parse_err = || Error::Config {
                line,
                message: format!("cannot parse dyadic spec `{spec}`"),
            };
            let finest: f64 = finest.trim().parse().map_err(|_| parse_err())?;
            let n: usize = n.trim().parse().map_err(|_| parse_err())?;
            return Self::dyadic(finest, n, divisor);
        }
        let wavelengths: Vec<f64> = root
            .list("wavelengths")?
            .unwrap_or_else(|| DEFAULT_WAVELENGTHS.to_vec());
        match root.optional::<f64>("sigma")? {
            Some(sigma) => Self::new(
                wavelengths
                    .iter()
                    .map(|&l| GaborParams::with_support(l, sigma, support))
                    .collect::<Result<_>>()?,
            ),
            None => Self::from_wavelengths(&wavelengths, divisor, support),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config(&ConfigFile::load(path)?)
    }

    pub fn levels(&self) -> &[GaborParams] {
        &self.levels
    }

    pub fn kernels(&self) -> &[Vec<Complex64>] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        self.levels.iter().map(|p| p.wavelength).collect()
    }

    pub fn max_support_radius(&self) -> usize {
        self.levels.iter().map(|p| p.support_radius).max().unwrap_or(0)
    }

    /// Longest kernel, in samples.
    pub fn max_support_len(&self) -> usize {
        2 * self.max_support_radius() + 1
    }

    /// Precomputes frequency responses for profiles of `signal_len` bins.
    pub fn plan(&self, signal_len: usize, mode: EdgeMode) -> Result<BankPlan> {
        BankPlan::new(self, signal_len, mode)
    }
}

/// Free-function form of [`GaborBank::default_bank`].
pub fn default_bank(signal_len: usize) -> GaborBank {
    GaborBank::default_bank(signal_len)
}

/// Per-level complex coefficients of one range profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub source_len: usize,
    pub levels: Vec<Vec<Complex64>>,
    /// Parameters of the bank that produced the levels.
    pub bank_levels: Vec<GaborParams>,
}

impl Pyramid {
    pub fn amplitude(&self, level: usize) -> Vec<f64> {
        self.levels[level].iter().map(|c| c.norm()).collect()
    }

    pub fn phase(&self, level: usize) -> Vec<f64> {
        self.levels[level].iter().map(|c| c.arg()).collect()
    }

    pub fn zeros_like(&self) -> Pyramid {
        Pyramid {
            source_len: self.source_len,
            levels: vec![vec![Complex64::new(0.0, 0.0); self.source_len]; self.levels.len()],
            bank_levels: self.bank_levels.clone(),
        }
    }
}

/// Frequency-domain machinery for one bank at one profile length.
pub struct BankPlan {
    n: usize,
    fft_len: usize,
    mode: EdgeMode,
    levels: Vec<GaborParams>,
    /// Real DFT response of each kernel on the `fft_len` grid.
    responses: Vec<Vec<f64>>,
    /// Floored, Hermitian-symmetrized aggregate response `D`.
    aggregate: Vec<f64>,
    inv_aggregate: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl BankPlan {
    fn new(bank: &GaborBank, n: usize, mode: EdgeMode) -> Result<Self> {
        let support = bank.max_support_len();
        if n < support {
            return Err(Error::SignalTooShort {
                len: n,
                required: support,
            });
        }
        let fft_len = match mode {
            EdgeMode::ZeroPad => fast_len(n + bank.max_support_radius()),
            EdgeMode::Circular => n,
        };
        let forward = fft_plan(fft_len, FftDirection::Forward);
        let inverse = fft_plan(fft_len, FftDirection::Inverse);

        let responses: Vec<Vec<f64>> = bank
            .kernels
            .iter()
            .zip(&bank.levels)
            .map(|(k, p)| {
                let r = p.support_radius as isize;
                let mut h = vec![Complex64::new(0.0, 0.0); fft_len];
                for (i, &g) in k.iter().enumerate() {
                    let x = i as isize - r;
                    h[x.rem_euclid(fft_len as isize) as usize] += g;
                }
                forward.process(&mut h);
                h.into_iter().map(|c| c.re).collect()
            })
            .collect();

        // Real output keeps (X(ξ) + X(-ξ))/2, so the divisor is the
        // symmetrized sum of squared responses.
        let summed: Vec<f64> = (0..fft_len)
            .map(|k| responses.iter().map(|r| r[k] * r[k]).sum())
            .collect();
        let mut aggregate: Vec<f64> = (0..fft_len)
            .map(|k| 0.5 * (summed[k] + summed[(fft_len - k) % fft_len]))
            .collect();
        let peak = aggregate.iter().cloned().fold(0.0, f64::max);
        let floor = NORMALIZATION_FLOOR * peak;
        for d in &mut aggregate {
            *d = d.max(floor);
        }
        let inv_aggregate = aggregate.iter().map(|d| 1.0 / d).collect();

        Ok(BankPlan {
            n,
            fft_len,
            mode,
            levels: bank.levels.clone(),
            responses,
            aggregate,
            inv_aggregate,
            forward,
            inverse,
        })
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    pub fn mode(&self) -> EdgeMode {
        self.mode
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn responses(&self) -> &[Vec<f64>] {
        &self.responses
    }

    /// Floored aggregate response used for normalization.
    pub fn aggregate_response(&self) -> &[f64] {
        &self.aggregate
    }

    /// Zero-padded forward DFT of a real profile.
    pub fn spectrum(&self, profile: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        for (b, &v) in buf.iter_mut().zip(profile) {
            b.re = v;
        }
        self.forward.process(&mut buf);
        buf
    }

    /// Level `k` coefficients from a profile spectrum; `scratch` is resized
    /// to the FFT length.
    pub fn level_from_spectrum(
        &self,
        spectrum: &[Complex64],
        k: usize,
        scratch: &mut Vec<Complex64>,
    ) -> Vec<Complex64> {
        scratch.clear();
        scratch.extend(spectrum.iter().zip(&self.responses[k]).map(|(s, &h)| s * h));
        self.inverse.process(scratch);
        let scale = 1.0 / self.fft_len as f64;
        scratch[..self.n].iter().map(|c| c * scale).collect()
    }

    /// Adds level `k`'s second filtering pass into the running frequency-domain sum.
    pub fn accumulate_level(
        &self,
        coeffs: &[Complex64],
        k: usize,
        acc: &mut [Complex64],
        scratch: &mut Vec<Complex64>,
    ) {
        scratch.clear();
        scratch.extend_from_slice(&coeffs[..self.n]);
        scratch.resize(self.fft_len, Complex64::new(0.0, 0.0));
        self.forward.process(scratch);
        for ((a, s), &h) in acc.iter_mut().zip(scratch.iter()).zip(&self.responses[k]) {
            *a += s * h;
        }
    }

    /// Divides the summed spectrum by the aggregate response and returns the
    /// real part of the first `n` samples. Consumes `acc`.
    pub fn finish(&self, mut acc: Vec<Complex64>) -> Vec<f64> {
        for (a, &w) in acc.iter_mut().zip(&self.inv_aggregate) {
            *a *= w;
        }
        self.inverse.process(&mut acc);
        let scale = 1.0 / self.fft_len as f64;
        acc[..self.n].iter().map(|c| c.re * scale).collect()
    }

    /// Complex reconstruction before the real part is taken.
    pub fn finish_complex(&self, mut acc: Vec<Complex64>) -> Vec<Complex64> {
        for (a, &w) in acc.iter_mut().zip(&self.inv_aggregate) {
            *a *= w;
        }
        self.inverse.process(&mut acc);
        let scale = 1.0 / self.fft_len as f64;
        acc[..self.n].iter().map(|c| c * scale).collect()
    }

    pub fn decompose(&self, profile: &[f64]) -> Result<Pyramid> {
        if profile.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bins", self.n),
                found: format!("{} bins", profile.len()),
            });
        }
        if let Some(i) = profile.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { bin: i, frame: 0 });
        }
        let spec = self.spectrum(profile);
        let mut scratch = Vec::with_capacity(self.fft_len);
        let levels = (0..self.levels.len())
            .map(|k| self.level_from_spectrum(&spec, k, &mut scratch))
            .collect();
        Ok(Pyramid {
            source_len: self.n,
            levels,
            bank_levels: self.levels.clone(),
        })
    }

    fn check_pyramid(&self, pyr: &Pyramid) -> Result<()> {
        if pyr.bank_levels != self.levels || pyr.levels.len() != self.levels.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("pyramid from this {}-level bank", self.levels.len()),
                found: format!("{} levels from a different bank", pyr.levels.len()),
            });
        }
        if pyr.source_len != self.n || pyr.levels.iter().any(|l| l.len() != self.n) {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bins per level", self.n),
                found: format!("source length {}", pyr.source_len),
            });
        }
        Ok(())
    }

    fn accumulate_all(&self, pyr: &Pyramid) -> Vec<Complex64> {
        let mut acc = vec![Complex64::new(0.0, 0.0); self.fft_len];
        let mut scratch = Vec::with_capacity(self.fft_len);
        for (k, level) in pyr.levels.iter().enumerate() {
            self.accumulate_level(level, k, &mut acc, &mut scratch);
        }
        acc
    }

    pub fn reconstruct(&self, pyr: &Pyramid) -> Result<Vec<f64>> {
        self.check_pyramid(pyr)?;
        Ok(self.finish(self.accumulate_all(pyr)))
    }

    /// Reconstruction with the imaginary part retained.
    pub fn reconstruct_complex(&self, pyr: &Pyramid) -> Result<Vec<Complex64>> {
        self.check_pyramid(pyr)?;
        Ok(self.finish_complex(self.accumulate_all(pyr)))
    }
}

/// Decomposes a profile with zero-padded edges.
pub fn decompose(profile: &[f64], bank: &GaborBank) -> Result<Pyramid> {
    bank.plan(profile.len(), EdgeMode::ZeroPad)?.decompose(profile)
}

/// Inverse of [`decompose`] for in-band content.
pub fn reconstruct(pyr: &Pyramid, bank: &GaborBank) -> Result<Vec<f64>> {
    bank.plan(pyr.source_len, EdgeMode::ZeroPad)?.reconstruct(pyr)
}

/// Time-domain convolution of a profile with every kernel. Reference path
/// for the FFT implementation.
pub fn decompose_direct(profile: &[f64], bank: &GaborBank, mode: EdgeMode) -> Result<Pyramid> {
    let n = profile.len();
    if n < bank.max_support_len() {
        return Err(Error::SignalTooShort {
            len: n,
            required: bank.max_support_len(),
        });
    }
    let levels = bank
        .kernels
        .iter()
        .zip(&bank.levels)
        .map(|(kernel, p)| convolve_direct(profile, kernel, p.support_radius, mode))
        .collect();
    Ok(Pyramid {
        source_len: n,
        levels,
        bank_levels: bank.levels.clone(),
    })
}

/// `out[x] = Σ_j kernel[j] · f[x - j]` for `j` in `-r..=r`.
pub fn convolve_direct(f: &[f64], kernel: &[Complex64], radius: usize, mode: EdgeMode) -> Vec<Complex64> {
    let n = f.len() as isize;
    let r = radius as isize;
    (0..n)
        .map(|x| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, g) in kernel.iter().enumerate() {
                let src = x - (i as isize - r);
                let v = match mode {
                    EdgeMode::ZeroPad if src < 0 || src >= n => continue,
                    EdgeMode::ZeroPad => f[src as usize],
                    EdgeMode::Circular => f[src.rem_euclid(n) as usize],
                };
                acc += g * v;
            }
            acc
        })
        .collect()
}
