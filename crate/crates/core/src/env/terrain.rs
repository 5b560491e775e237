//! Terrain-stack ingestion.
//!
//! A stack of grayscale frames (portable graymap or CSV matrices) is rescaled
//! so the global maximum maps to 1.5 and the global minimum to -0.5, then
//! expanded into evenly spaced time slices by per-pixel linear interpolation
//! between consecutive frames. Slice positions that land exactly on a frame
//! are copied rather than interpolated, so frame values survive bit-exactly.

use std::path::Path;

use super::{EnvError, GridWorld};
use crate::stateset::StateSet;

/// Upper bound of the rescaled range.
pub const RESCALE_MAX: f64 = 1.5;
/// Lower bound of the rescaled range.
pub const RESCALE_MIN: f64 = -0.5;

/// One grayscale frame, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, EnvError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(EnvError::Format(format!(
                "frame has {} values for a {rows}x{cols} grid",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::Format("frame contains non-finite values".into()));
        }
        Ok(Self { rows, cols, data })
    }
}

/// Read a frame from a PGM (P2 or P5, 8- or 16-bit) or CSV matrix file,
/// dispatching on the file content.
pub fn read_frame(path: &Path) -> Result<Frame, EnvError> {
    let bytes = std::fs::read(path)
        .map_err(|e| EnvError::Io(format!("{}: {e}", path.display())))?;
    let frame = if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        parse_pgm(&bytes)
    } else {
        parse_csv_matrix(&bytes)
    };
    frame.map_err(|e| match e {
        EnvError::Format(msg) => EnvError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_pgm(bytes: &[u8]) -> Result<Frame, EnvError> {
    let binary = bytes.starts_with(b"P5");
    let mut pos = 2;

    // Header tokens: width, height, maxval. '#' starts a comment to end of line.
    let mut header = [0usize; 3];
    let mut found = 0;
    while found < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(EnvError::Format("malformed graymap header".into()));
        }
        let token = std::str::from_utf8(&bytes[start..pos]).unwrap();
        header[found] = token
            .parse()
            .map_err(|_| EnvError::Format("malformed graymap header".into()))?;
        found += 1;
    }
    let (cols, rows, maxval) = (header[0], header[1], header[2]);
    if maxval == 0 || maxval > 65_535 {
        return Err(EnvError::Format(format!("unsupported maxval {maxval}")));
    }

    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| EnvError::Format("frame too large".into()))?;
    let mut data = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let wide = maxval > 255;
        let needed = n * if wide { 2 } else { 1 };
        if bytes.len() < pos + needed {
            return Err(EnvError::Format("graymap raster truncated".into()));
        }
        if wide {
            for i in 0..n {
                let hi = bytes[pos + 2 * i] as u16;
                let lo = bytes[pos + 2 * i + 1] as u16;
                data.push(f64::from((hi << 8) | lo));
            }
        } else {
            for i in 0..n {
                data.push(f64::from(bytes[pos + i]));
            }
        }
    } else {
        let text = std::str::from_utf8(&bytes[pos..])
            .map_err(|_| EnvError::Format("graymap raster is not ASCII".into()))?;
        for token in text.split_whitespace().take(n) {
            let v: u32 = token
                .parse()
                .map_err(|_| EnvError::Format(format!("bad raster value {token:?}")))?;
            data.push(f64::from(v));
        }
        if data.len() < n {
            return Err(EnvError::Format("graymap raster truncated".into()));
        }
    }
    Frame::new(rows, cols, data)
}

fn parse_csv_matrix(bytes: &[u8]) -> Result<Frame, EnvError> {
    let text =
        std::str::from_utf8(bytes).map_err(|_| EnvError::Format("matrix is not UTF-8".into()))?;
    let mut rows = 0;
    let mut cols = 0;
    let mut data = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| EnvError::Format(format!("bad matrix value {tok:?}")))
            })
            .collect::<Result<_, _>>()?;
        if rows == 0 {
            cols = values.len();
        } else if values.len() != cols {
            return Err(EnvError::Format(format!(
                "row {rows} has {} values, expected {cols}",
                values.len()
            )));
        }
        data.extend(values);
        rows += 1;
    }
    Frame::new(rows, cols, data)
}

/// Build a grid world from a terrain stack.
///
/// The initial safe set is the argmax state of the first slice; the frame
/// values themselves define the safety field after rescaling.
pub fn load_terrain_env(
    frames: &[Frame],
    steps: usize,
    h: f64,
    noise_std: f64,
) -> Result<GridWorld, EnvError> {
    if frames.len() < 2 {
        return Err(EnvError::Format(format!(
            "need at least 2 frames, got {}",
            frames.len()
        )));
    }
    if steps < frames.len() {
        return Err(EnvError::Invalid(format!(
            "steps ({steps}) must be at least the number of frames ({})",
            frames.len()
        )));
    }
    let (rows, cols) = (frames[0].rows, frames[0].cols);
    for (i, f) in frames.iter().enumerate() {
        if f.rows != rows || f.cols != cols {
            return Err(EnvError::Format(format!(
                "frame {i} is {}x{}, expected {rows}x{cols}",
                f.rows, f.cols
            )));
        }
    }

    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for f in frames {
        for &v in &f.data {
            min = min.min(v);
            max = max.max(v);
        }
    }
    if min == max {
        return Err(EnvError::DegenerateNormalization);
    }
    let span = max - min;
    let rescale = |v: f64| (v - min) / span * 2.0 + RESCALE_MIN;
    let rescaled: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| f.data.iter().map(|&v| rescale(v)).collect())
        .collect();

    // Slice i sits at fraction i / (steps - 1) of the stack; frame j at
    // j / (frames - 1). Node hits are decided in integer arithmetic so frame
    // slices are exact copies.
    let segments = frames.len() - 1;
    let denom = steps - 1;
    let n = rows * cols;
    let mut safety = Vec::with_capacity(steps);
    for i in 0..steps {
        let pos = i * segments;
        let seg = (pos / denom).min(segments - 1);
        let rem = pos - seg * denom;
        if rem == 0 {
            safety.push(rescaled[seg].clone());
        } else if rem == denom {
            safety.push(rescaled[seg + 1].clone());
        } else {
            let w = rem as f64 / denom as f64;
            let (a, b) = (&rescaled[seg], &rescaled[seg + 1]);
            safety.push((0..n).map(|s| (1.0 - w) * a[s] + w * b[s]).collect());
        }
    }

    let (best, best_val) = safety[0]
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    if best_val < h {
        return Err(EnvError::NoSafeStart);
    }
    let initial_safe = StateSet::from_indices(n, &[best]);
    GridWorld::new(rows, cols, safety, h, initial_safe, noise_std)
}
