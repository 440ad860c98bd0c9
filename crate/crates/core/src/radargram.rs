//! Radargram container, persistence, and slow-time windowing.
//!
//! Samples are stored bin-major: each range bin's slow-time series is a
//! contiguous row of `n_frames` values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::config::ConfigFile;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RGRM";
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 * 3;

/// Sampling metadata carried by every radargram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadargramMeta {
    /// Slow-time frame rate, Hz.
    pub fps: f64,
    /// Meters per range bin.
    pub bin_spacing: f64,
    /// Range of bin 0, meters.
    pub t0_offset: f64,
}

impl RadargramMeta {
    pub fn new(fps: f64, bin_spacing: f64, t0_offset: f64) -> Result<Self> {
        let meta = RadargramMeta {
            fps,
            bin_spacing,
            t0_offset,
        };
        meta.validate()?;
        Ok(meta)
    }

    fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        if !(self.bin_spacing.is_finite() && self.bin_spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bin_spacing must be positive, got {}",
                self.bin_spacing
            )));
        }
        if !self.t0_offset.is_finite() {
            return Err(Error::InvalidParameter("t0_offset must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Radargram {
    data: Vec<f64>,
    n_bins: usize,
    n_frames: usize,
    meta: RadargramMeta,
}

impl Radargram {
    /// Builds a radargram from bin-major samples.
    pub fn new(n_bins: usize, n_frames: usize, data: Vec<f64>, meta: RadargramMeta) -> Result<Self> {
        if n_bins == 0 || n_frames == 0 {
            return Err(Error::InvalidParameter(format!(
                "radargram needs at least one bin and one frame, got {n_bins}x{n_frames}"
            )));
        }
        if data.len() != n_bins * n_frames {
            return Err(Error::DimensionMismatch {
                expected: format!("{} samples ({n_bins}x{n_frames})", n_bins * n_frames),
                found: format!("{} samples", data.len()),
            });
        }
        meta.validate()?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                bin: i / n_frames,
                frame: i % n_frames,
            });
        }
        Ok(Radargram {
            data,
            n_bins,
            n_frames,
            meta,
        })
    }

    pub fn zeros(n_bins: usize, n_frames: usize, meta: RadargramMeta) -> Result<Self> {
        Self::new(n_bins, n_frames, vec![0.0; n_bins * n_frames], meta)
    }

    /// Builds a radargram from per-frame range profiles (columns).
    pub fn from_frames(frames: &[Vec<f64>], meta: RadargramMeta) -> Result<Self> {
        let n_frames = frames.len();
        let n_bins = frames.first().map_or(0, Vec::len);
        if let Some((t, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != n_bins) {
            return Err(Error::DimensionMismatch {
                expected: format!("{n_bins} bins per frame"),
                found: format!("{} bins in frame {t}", f.len()),
            });
        }
        let mut data = vec![0.0; n_bins * n_frames];
        for (t, frame) in frames.iter().enumerate() {
            for (b, &v) in frame.iter().enumerate() {
                data[b * n_frames + t] = v;
            }
        }
        Self::new(n_bins, n_frames, data, meta)
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn meta(&self) -> RadargramMeta {
        self.meta
    }

    pub fn fps(&self) -> f64 {
        self.meta.fps
    }

    pub fn bin_spacing(&self) -> f64 {
        self.meta.bin_spacing
    }

    pub fn t0_offset(&self) -> f64 {
        self.meta.t0_offset
    }

    pub fn duration_s(&self) -> f64 {
        self.n_frames as f64 / self.meta.fps
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.data[bin * self.n_frames + frame]
    }

    /// Slow-time series of one range bin.
    pub fn row(&self, bin: usize) -> &[f64] {
        &self.data[bin * self.n_frames..(bin + 1) * self.n_frames]
    }

    /// Range profile of one frame.
    pub fn frame(&self, frame: usize) -> Vec<f64> {
        (0..self.n_bins).map(|b| self.get(b, frame)).collect()
    }

    pub fn frames(&self) -> Vec<Vec<f64>> {
        (0..self.n_frames).map(|t| self.frame(t)).collect()
    }

    /// Fractional bin index of a range in meters.
    pub fn bin_of_range(&self, range_m: f64) -> f64 {
        (range_m - self.meta.t0_offset) / self.meta.bin_spacing
    }

    /// Copy of frames `[start, start + len)`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Radargram> {
        if len == 0 || start + len > self.n_frames {
            return Err(Error::InvalidParameter(format!(
                "frame slice [{start}, {}) outside 0..{}",
                start + len,
                self.n_frames
            )));
        }
        let mut data = Vec::with_capacity(self.n_bins * len);
        for b in 0..self.n_bins {
            data.extend_from_slice(&self.row(b)[start..start + len]);
        }
        Ok(Radargram {
            data,
            n_bins: self.n_bins,
            n_frames: len,
            meta: self.meta,
        })
    }

    /// Copy of bins `roi.first_bin..=roi.last_bin`; `t0_offset` moves with the first bin.
    pub fn slice_bins(&self, roi: RangeRoi) -> Result<Radargram> {
        roi.check(self.n_bins)?;
        let data = self.data[roi.first_bin * self.n_frames..(roi.last_bin + 1) * self.n_frames].to_vec();
        let mut meta = self.meta;
        meta.t0_offset += roi.first_bin as f64 * meta.bin_spacing;
        Ok(Radargram {
            data,
            n_bins: roi.len(),
            n_frames: self.n_frames,
            meta,
        })
    }

    pub fn max_abs_diff(&self, other: &Radargram) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Inclusive interval of range bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangeRoi {
    pub first_bin: usize,
    pub last_bin: usize,
}

impl RangeRoi {
    pub fn new(first_bin: usize, last_bin: usize) -> Result<Self> {
        if first_bin > last_bin {
            return Err(Error::InvalidParameter(format!(
                "roi first bin {first_bin} exceeds last bin {last_bin}"
            )));
        }
        Ok(RangeRoi { first_bin, last_bin })
    }

    pub fn len(&self) -> usize {
        self.last_bin - self.first_bin + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bins(&self) -> std::ops::RangeInclusive<usize> {
        self.first_bin..=self.last_bin
    }

    pub fn check(&self, n_bins: usize) -> Result<()> {
        if self.first_bin > self.last_bin || self.last_bin >= n_bins {
            return Err(Error::InvalidParameter(format!(
                "roi {}..={} outside 0..{n_bins}",
                self.first_bin, self.last_bin
            )));
        }
        Ok(())
    }
}

/// Slow-time window length and hop, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub length_s: f64,
    pub shift_s: f64,
}

impl WindowSpec {
    pub fn new(length_s: f64, shift_s: f64) -> Result<Self> {
        if !(shift_s > 0.0 && shift_s <= length_s && length_s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "window needs 0 < shift ({shift_s}) <= length ({length_s})"
            )));
        }
        Ok(WindowSpec { length_s, shift_s })
    }

    /// Window length and hop in frames, rounded to the nearest integer.
    pub fn frames(&self, fps: f64) -> Result<(usize, usize)> {
        let len = (self.length_s * fps).round() as usize;
        let shift = (self.shift_s * fps).round() as usize;
        if len < 2 || shift == 0 {
            return Err(Error::InvalidParameter(format!(
                "window of {} s / {} s at {fps} Hz gives {len} frames / {shift} hop",
                self.length_s, self.shift_s
            )));
        }
        Ok((len, shift))
    }

    /// Start frames of every complete window in a record of `n_frames`.
    pub fn starts(&self, n_frames: usize, fps: f64) -> Result<Vec<usize>> {
        let (len, shift) = self.frames(fps)?;
        if n_frames < len {
            return Ok(Vec::new());
        }
        Ok((0..=(n_frames - len) / shift).map(|i| i * shift).collect())
    }
}

/// Complete windows of `r`; a trailing partial window is dropped.
pub fn windows(r: &Radargram, w: &WindowSpec) -> Result<Vec<(usize, Radargram)>> {
    let (len, _) = w.frames(r.fps())?;
    w.starts(r.n_frames(), r.fps())?
        .into_iter()
        .map(|s| Ok((s, r.slice_frames(s, len)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Binary,
    Csv,
}

impl FileFormat {
    /// `.csv` selects CSV; everything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Binary,
        }
    }
}

/// Sample encoding of the binary format; the header `version` field selects it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleType {
    /// Version 1.
    F32,
    /// Version 2.
    F64,
}

impl SampleType {
    fn version(self) -> u32 {
        match self {
            SampleType::F32 => 1,
            SampleType::F64 => 2,
        }
    }
}

/// Path of the metadata sidecar for a CSV radargram: `<path>.meta`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn load_radargram(path: impl AsRef<Path>, format: FileFormat) -> Result<Radargram> {
    let path = path.as_ref();
    match format {
        FileFormat::Binary => load_binary(path),
        FileFormat::Csv => load_csv(path),
    }
}

/// Binary output uses f64 samples so the round trip is exact.
pub fn save_radargram(r: &Radargram, path: impl AsRef<Path>, format: FileFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        FileFormat::Binary => save_binary(r, path, SampleType::F64),
        FileFormat::Csv => save_csv(r, path),
    }
}

pub fn save_binary(r: &Radargram, path: &Path, samples: SampleType) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io_at(path, e))?;
    let mut w = BufWriter::new(file);
    write_binary(r, &mut w, samples).map_err(|e| Error::io_at(path, e))?;
    w.flush().map_err(|e| Error::io_at(path, e))
}

pub fn write_binary<W: Write>(r: &Radargram, w: &mut W, samples: SampleType) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&samples.version().to_le_bytes())?;
    w.write_all(&(r.n_bins as u32).to_le_bytes())?;
    w.write_all(&(r.n_frames as u32).to_le_bytes())?;
    w.write_all(&r.meta.fps.to_le_bytes())?;
    w.write_all(&r.meta.bin_spacing.to_le_bytes())?;
    w.write_all(&r.meta.t0_offset.to_le_bytes())?;
    match samples {
        SampleType::F32 => {
            for &v in &r.data {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        SampleType::F64 => {
            for &v in &r.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn load_binary(path: &Path) -> Result<Radargram> {
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io_at(path, e))?;
    read_binary(&bytes)
}

pub fn read_binary(bytes: &[u8]) -> Result<Radargram> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic, expected RGRM".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    let n_bins = u32_at(8) as usize;
    let n_frames = u32_at(12) as usize;
    let meta = RadargramMeta {
        fps: f64_at(16),
        bin_spacing: f64_at(24),
        t0_offset: f64_at(32),
    };
    let width = match version {
        1 => 4,
        2 => 8,
        v => return Err(Error::Format(format!("unsupported version {v}"))),
    };
    let payload = &bytes[HEADER_LEN..];
    let expected = n_bins
        .checked_mul(n_frames)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::DimensionMismatch {
            expected: format!("{expected} payload bytes for {n_bins}x{n_frames}"),
            found: format!("{} bytes", payload.len()),
        });
    }
    let data: Vec<f64> = if width == 4 {
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    } else {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    meta.validate()
        .map_err(|e| Error::Format(format!("bad header metadata: {e}")))?;
    Radargram::new(n_bins, n_frames, data, meta)
}

fn save_csv(r: &Radargram, path: &Path) -> Result<()> {
    let io = |e| Error::io_at(path, e);
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    for b in 0..r.n_bins {
        let mut line = String::with_capacity(r.n_frames * 12);
        for (i, v) in r.row(b).iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            // Shortest representation that round-trips exactly.
            line.push_str(&format!("{v:?}"));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let meta_path = sidecar_path(path);
    let sidecar = format!(
        "fps={:?}\nbin_spacing={:?}\nt0_offset={:?}\nn_bins={}\nn_frames={}\n",
        r.meta.fps, r.meta.bin_spacing, r.meta.t0_offset, r.n_bins, r.n_frames
    );
    std::fs::write(&meta_path, sidecar).map_err(|e| Error::io_at(&meta_path, e))
}

fn load_csv(path: &Path) -> Result<Radargram> {
    let meta_path = sidecar_path(path);
    let cfg = ConfigFile::load(&meta_path)?;
    let root = cfg.root();
    let meta = RadargramMeta::new(
        root.require("fps")?,
        root.optional("bin_spacing")?.unwrap_or(1.0),
        root.optional("t0_offset")?.unwrap_or(0.0),
    )?;
    let declared_bins: Option<usize> = root.optional("n_bins")?;
    let declared_frames: Option<usize> = root.optional("n_frames")?;

    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io_at(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: cannot parse `{}`", idx + 1, s.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n_bins = rows.len();
    let n_frames = rows.first().map_or(0, Vec::len);
    if let Some(expected) = declared_bins {
        if expected != n_bins {
            return Err(Error::DimensionMismatch {
                expected: format!("{expected} rows (n_bins)"),
                found: format!("{n_bins} rows"),
            });
        }
    }
    if let Some(expected) = declared_frames {
        if expected != n_frames {
            return Err(Error::DimensionMismatch {
                expected: format!("{expected} columns (n_frames)"),
                found: format!("{n_frames} columns"),
            });
        }
    }
    if let Some((b, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_frames) {
        return Err(Error::DimensionMismatch {
            expected: format!("{n_frames} columns"),
            found: format!("{} columns in row {b}", row.len()),
        });
    }
    let data = rows.into_iter().flatten().collect();
    Radargram::new(n_bins, n_frames, data, meta)
}
