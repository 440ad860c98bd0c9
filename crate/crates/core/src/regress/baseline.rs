use crate::dsp::{magnitude_spectrum, spectral_peak, BandSpec};
use crate::error::{Error, Result};
use crate::radargram::{Radargram, RangeRoi};

/// Conventional estimate without any Gabor processing: slow-time magnitude
/// spectra of the raw ROI bins are averaged and the in-band peak returned in bpm.
pub fn temporal_fft_baseline(window: &Radargram, roi: RangeRoi, search_band: &BandSpec) -> Result<f64> {
    roi.check(window.n_bins())?;
    let n = window.n_frames();
    if n < 2 {
        return Err(Error::SignalTooShort { len: n, required: 2 });
    }
    let mut avg = vec![0.0; n / 2 + 1];
    for x in roi.bins() {
        for (a, m) in avg.iter_mut().zip(magnitude_spectrum(window.row(x))) {
            *a += m;
        }
    }
    let scale = 1.0 / roi.len() as f64;
    avg.iter_mut().for_each(|a| *a *= scale);
    // Rounding in the mean removal leaves ~1e-16 ripple on constant rows.
    let level = roi
        .bins()
        .map(|x| window.row(x).iter().map(|v| v.abs()).sum::<f64>())
        .sum::<f64>()
        * scale;
    if avg.iter().all(|&a| a <= 1e-12 * level) {
        return Err(Error::FlatSpectrum);
    }
    Ok(60.0 * spectral_peak(&avg, n, window.fps(), search_band)?)
}
