//! Frame sequences, ground-truth intervals and detection files.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An 8-bit image, row-major and channel-last, tagged with its sequence position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(index: usize, width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Format(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::Format(format!(
                "pixel buffer holds {} bytes, expected {width}x{height}x{channels}",
                pixels.len()
            )));
        }
        Ok(Self {
            index,
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Uniform single-color frame, mostly for fixtures.
    pub fn filled(index: usize, width: usize, height: usize, color: &[u8]) -> Result<Self> {
        let pixels = color
            .iter()
            .copied()
            .cycle()
            .take(width * height * color.len())
            .collect();
        Self::new(index, width, height, color.len(), pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let at = (y * self.width + x) * self.channels;
        &self.pixels[at..at + self.channels]
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }
}

// --- PPM -------------------------------------------------------------------

fn ppm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PPM header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn ppm_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = ppm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| Error::Format(format!("bad PPM {what}")))
}

/// Decodes a binary `P6` image with maxval 255. The frame index is 0.
pub fn decode_ppm(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::Format("not a binary P6 PPM".into()));
    }
    let mut pos = 2;
    let width = ppm_number(bytes, &mut pos, "width")?;
    let height = ppm_number(bytes, &mut pos, "height")?;
    let maxval = ppm_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PPM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("truncated PPM header".into()));
    }
    pos += 1;
    let need = width * height * 3;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(Error::Format(format!(
            "truncated PPM payload: {} of {need} bytes",
            raster.len()
        )));
    }
    if raster.len() > need {
        return Err(Error::Format("trailing bytes after PPM payload".into()));
    }
    Frame::new(0, width, height, 3, raster.to_vec())
}

/// Canonical `P6` encoding: `P6\n<w> <h>\n255\n` followed by the raster.
pub fn encode_ppm(frame: &Frame) -> Result<Vec<u8>> {
    if frame.channels != 3 {
        return Err(Error::Argument("PPM encoding needs a 3-channel frame".into()));
    }
    let mut out = format!("P6\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    Ok(out)
}

/// Decodes a PNG into an 8-bit gray (1 channel) or RGB (3 channel) frame.
/// Alpha is dropped and 16-bit samples are truncated to 8 bits.
pub fn decode_png(bytes: &[u8]) -> Result<Frame> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::Format(format!("PNG: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    buf.truncate(info.buffer_size());
    let (channels, pixels) = match info.color_type {
        png::ColorType::Grayscale => (1, buf),
        png::ColorType::GrayscaleAlpha => (1, buf.chunks_exact(2).map(|p| p[0]).collect()),
        png::ColorType::Rgb => (3, buf),
        png::ColorType::Rgba => (3, buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect()),
        png::ColorType::Indexed => {
            return Err(Error::Format("unexpanded indexed PNG".into()));
        }
    };
    Frame::new(0, w, h, channels, pixels)
}

fn decode_by_extension(path: &Path, bytes: &[u8]) -> Result<Frame> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => decode_png(bytes),
        _ => decode_ppm(bytes),
    }
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_by_extension(path, &bytes)
}

// --- Sequences -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub frame_count: usize,
    pub fps: f64,
    pub pattern: String,
}

impl SequenceManifest {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: SequenceManifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Format(format!("manifest fps must be > 0, got {}", self.fps)));
        }
        format_pattern(&self.pattern, 0)?;
        Ok(())
    }

    pub fn frame_name(&self, index: usize) -> Result<String> {
        format_pattern(&self.pattern, index)
    }
}

/// Expands a printf-style frame pattern with one `%d` / `%0Nd` field.
pub fn format_pattern(pattern: &str, index: usize) -> Result<String> {
    let bad = || Error::Format(format!("frame pattern `{pattern}` needs exactly one %d or %0Nd field"));
    let mut out = String::with_capacity(pattern.len() + 8);
    let mut chars = pattern.chars().peekable();
    let mut fields = 0;
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        if chars.peek() == Some(&'%') {
            chars.next();
            out.push('%');
            continue;
        }
        let mut spec = String::new();
        while let Some(&d) = chars.peek() {
            if d.is_ascii_digit() {
                spec.push(d);
                chars.next();
            } else {
                break;
            }
        }
        if chars.next() != Some('d') {
            return Err(bad());
        }
        let width: usize = if spec.is_empty() {
            0
        } else {
            spec.parse().map_err(|_| bad())?
        };
        if spec.len() > 1 && !spec.starts_with('0') {
            return Err(bad());
        }
        let _ = write!(out, "{index:0width$}");
        fields += 1;
    }
    if fields != 1 {
        return Err(bad());
    }
    Ok(out)
}

/// Loads every frame named by the manifest, in index order.
///
/// Files are decoded in parallel; all frames must share the dimensions of frame 0.
pub fn load_sequence(dir: &Path, manifest_path: &Path) -> Result<Vec<Frame>> {
    let manifest = SequenceManifest::from_path(manifest_path)?;
    load_sequence_with(dir, &manifest)
}

pub fn load_sequence_with(dir: &Path, manifest: &SequenceManifest) -> Result<Vec<Frame>> {
    manifest.validate()?;
    let paths = (0..manifest.frame_count)
        .map(|i| Ok(dir.join(manifest.frame_name(i)?)))
        .collect::<Result<Vec<PathBuf>>>()?;
    if let Some((index, path)) = paths.iter().enumerate().find(|(_, p)| !p.is_file()) {
        return Err(Error::MissingFrame {
            index,
            path: path.clone(),
        });
    }
    let frames = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| read_frame(p).map(|f| f.with_index(i)))
        .collect::<Result<Vec<Frame>>>()?;
    if let Some(first) = frames.first() {
        let dims = (first.width, first.height, first.channels);
        if let Some(bad) = frames.iter().find(|f| (f.width, f.height, f.channels) != dims) {
            return Err(Error::Format(format!(
                "frame {} is {}x{}x{}, sequence is {}x{}x{}",
                bad.index, bad.width, bad.height, bad.channels, dims.0, dims.1, dims.2
            )));
        }
    }
    Ok(frames)
}

// --- Ground truth ------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    /// Distance from `t` to the interval; 0 inside it.
    pub fn distance(&self, t: f64) -> f64 {
        if t < self.start_s {
            self.start_s - t
        } else if t > self.end_s {
            t - self.end_s
        } else {
            0.0
        }
    }
}

/// Labelled event intervals in seconds, sorted by start.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    intervals: Vec<Interval>,
}

impl GroundTruth {
    pub fn new(mut intervals: Vec<Interval>) -> Result<Self> {
        for (row, iv) in intervals.iter().enumerate() {
            check_interval(iv, row + 1)?;
        }
        intervals.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.end_s.total_cmp(&b.end_s)));
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

fn check_interval(iv: &Interval, row: usize) -> Result<()> {
    if !(iv.start_s.is_finite() && iv.end_s.is_finite()) {
        return Err(Error::Validation {
            row,
            msg: "non-finite time".into(),
        });
    }
    if iv.start_s < 0.0 {
        return Err(Error::Validation {
            row,
            msg: format!("negative start {}", iv.start_s),
        });
    }
    if iv.start_s > iv.end_s {
        return Err(Error::Validation {
            row,
            msg: format!("start {} after end {}", iv.start_s, iv.end_s),
        });
    }
    Ok(())
}

/// Yields `(line, [a, b])` for every two-number row. Lines are 1-based; blank
/// lines, `#` comments and a first-row `header` are skipped.
fn numeric_pairs<R: Read>(r: R, header: &str) -> Result<Vec<(usize, [f64; 2])>> {
    let mut out = Vec::new();
    let mut seen_data = false;
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(trimmed.as_bytes())
            .records()
            .next()
            .transpose()
            .map_err(|e| Error::Parse {
                row,
                msg: e.to_string(),
            })?
            .unwrap_or_default();
        let first = !seen_data;
        seen_data = true;
        if first && rec.get(0) == Some(header) {
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::Parse {
                row,
                msg: format!("expected 2 fields, got {}", rec.len()),
            });
        }
        let num = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                row,
                msg: format!("`{s}` is not a number"),
            })
        };
        out.push((row, [num(&rec[0])?, num(&rec[1])?]));
    }
    Ok(out)
}

/// Parses `start_s,end_s` rows (optional header of the same name). Row numbers
/// in errors are 1-based file lines.
pub fn parse_ground_truth<R: Read>(r: R) -> Result<GroundTruth> {
    let mut intervals = Vec::new();
    for (row, [start_s, end_s]) in numeric_pairs(r, "start_s")? {
        let iv = Interval { start_s, end_s };
        check_interval(&iv, row)?;
        intervals.push(iv);
    }
    GroundTruth::new(intervals)
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(f)
}

pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    let mut body = String::from("start_s,end_s\n");
    for iv in &gt.intervals {
        // shortest round-trip representation
        let _ = writeln!(body, "{},{}", iv.start_s, iv.end_s);
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

// --- Detections -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub timestamp_s: f64,
    pub score: f64,
}

pub fn format_detections(events: &[Detection]) -> Result<String> {
    if let Some(w) = events.windows(2).find(|w| w[1].timestamp_s < w[0].timestamp_s) {
        return Err(Error::Contract(format!(
            "detections not sorted: {} after {}",
            w[1].timestamp_s, w[0].timestamp_s
        )));
    }
    let mut body = String::from("timestamp_s,score\n");
    for d in events {
        let _ = writeln!(body, "{:.3},{}", d.timestamp_s, d.score);
    }
    Ok(body)
}

/// Writes `timestamp_s,score` rows. Unsorted input is rejected before the file is touched.
pub fn write_detections(events: &[Detection], path: &Path) -> Result<()> {
    let body = format_detections(events)?;
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn parse_detections<R: Read>(r: R) -> Result<Vec<Detection>> {
    Ok(numeric_pairs(r, "timestamp_s")?
        .into_iter()
        .map(|(_, [timestamp_s, score])| Detection { timestamp_s, score })
        .collect())
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_detections(f)
}
