//! Radargram heatmaps as binary PPM (P6): frames run left to right, range
//! bins top to bottom.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::radargram::Radargram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Colormap {
    #[default]
    Gray,
    Viridis,
    Jet,
}

impl FromStr for Colormap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gray" | "grey" => Ok(Colormap::Gray),
            "viridis" => Ok(Colormap::Viridis),
            "jet" => Ok(Colormap::Jet),
            _ => Err(Error::InvalidParameter(format!(
                "unknown colormap `{s}` (gray, viridis, jet)"
            ))),
        }
    }
}

const VIRIDIS: [[f64; 3]; 9] = [
    [0.267, 0.005, 0.329],
    [0.278, 0.175, 0.483],
    [0.229, 0.322, 0.546],
    [0.173, 0.449, 0.558],
    [0.128, 0.567, 0.551],
    [0.153, 0.680, 0.504],
    [0.360, 0.786, 0.388],
    [0.678, 0.864, 0.190],
    [0.993, 0.906, 0.144],
];

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl Colormap {
    /// RGB for `v` in `[0, 1]`.
    pub fn rgb(self, v: f64) -> [u8; 3] {
        let v = v.clamp(0.0, 1.0);
        match self {
            Colormap::Gray => [to_byte(v); 3],
            Colormap::Viridis => {
                let pos = v * (VIRIDIS.len() - 1) as f64;
                let i = (pos.floor() as usize).min(VIRIDIS.len() - 2);
                let w = pos - i as f64;
                let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
                [0, 1, 2].map(|c| to_byte(a[c] + (b[c] - a[c]) * w))
            }
            Colormap::Jet => {
                let ch = |offset: f64| (1.5 - (4.0 * v - offset).abs()).clamp(0.0, 1.0);
                [to_byte(ch(3.0)), to_byte(ch(2.0)), to_byte(ch(1.0))]
            }
        }
    }
}

/// Percentile of `sorted` with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] + (sorted[i + 1] - sorted[i]) * (pos - i as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub colormap: Colormap,
    /// Lower and upper clip percentiles.
    pub clip: (f64, f64),
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            colormap: Colormap::Gray,
            clip: (1.0, 99.0),
        }
    }
}

/// Value range mapped onto the colormap for the given clip percentiles.
pub fn clip_bounds(r: &Radargram, clip: (f64, f64)) -> Result<(f64, f64)> {
    let (p_lo, p_hi) = clip;
    if !(0.0..=100.0).contains(&p_lo) || !(0.0..=100.0).contains(&p_hi) || p_lo >= p_hi {
        return Err(Error::InvalidParameter(format!(
            "clip percentiles must satisfy 0 <= lo < hi <= 100, got {p_lo}:{p_hi}"
        )));
    }
    let mut sorted = r.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((percentile(&sorted, p_lo), percentile(&sorted, p_hi)))
}

/// Heatmap pixels, row-major, one row per range bin.
pub fn render_rgb(r: &Radargram, opts: &RenderOptions) -> Result<Vec<[u8; 3]>> {
    let (lo, hi) = clip_bounds(r, opts.clip)?;
    let degenerate = !(hi > lo);
    if degenerate {
        warn!("radargram is constant within the clip range; rendering uniform mid-gray");
    }
    let mut pixels = Vec::with_capacity(r.data().len());
    for bin in 0..r.n_bins() {
        for &v in r.row(bin) {
            pixels.push(if degenerate {
                [128; 3]
            } else {
                opts.colormap.rgb((v - lo) / (hi - lo))
            });
        }
    }
    Ok(pixels)
}

pub fn write_ppm<W: Write>(r: &Radargram, opts: &RenderOptions, mut w: W) -> Result<()> {
    let pixels = render_rgb(r, opts)?;
    write!(w, "P6\n{} {}\n255\n", r.n_frames(), r.n_bins())?;
    let bytes: Vec<u8> = pixels.into_iter().flatten().collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn save_ppm(r: &Radargram, opts: &RenderOptions, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_ppm(r, opts, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io_at(path, e))
}
