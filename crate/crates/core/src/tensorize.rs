//! Layouts that turn an encoded SNP sequence into network input.
//!
//! Both layouts pad the sequence at the tail to `C * S * S` cells and then
//! read it row-major: a single `S x S` image, or `C` channels where channel
//! `c` holds the contiguous segment `[c*S*S, (c+1)*S*S)`. In the channel
//! layout, positions `i` and `i + S*S` share a spatial cell in adjacent
//! channels, so one `k x k` kernel spanning all channels reads SNPs that are
//! `S*S` apart in the sequence.

use std::io::{Read, Write};

use resgene_autodiff::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geno_io::MISSING;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutMode {
    Image2d,
    Tensor3d,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillOrder {
    #[default]
    RowMajorContiguous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnpLayout {
    pub snps: usize,
    pub mode: LayoutMode,
    pub channels: usize,
    pub side: usize,
    pub pad_count: usize,
    pub pad_value: f64,
    pub fill_order: FillOrder,
}

impl SnpLayout {
    pub fn cells(&self) -> usize {
        self.channels * self.side * self.side
    }
}

/// Smallest `s` with `s * s * channels >= d`.
fn ceil_side(d: usize, channels: usize) -> usize {
    let mut s = ((d as f64 / channels as f64).sqrt().ceil() as usize).max(1);
    while s > 1 && (s - 1) * (s - 1) * channels >= d {
        s -= 1;
    }
    while s * s * channels < d {
        s += 1;
    }
    s
}

/// Chooses the side length: `ceil(sqrt(d))` for an image, `ceil(sqrt(d / C))`
/// for `C` channels. Missing cells are padded with the missing-call code.
pub fn plan_layout(d: usize, mode: LayoutMode, channels: usize) -> Result<SnpLayout> {
    if d == 0 {
        return Err(Error::Layout("sequence is empty".into()));
    }
    if channels == 0 {
        return Err(Error::Layout("channel count must be positive".into()));
    }
    if mode == LayoutMode::Image2d && channels != 1 {
        return Err(Error::Layout(format!(
            "a 2D image has one channel, got {channels}"
        )));
    }
    if channels > d {
        return Err(Error::Layout(format!(
            "{channels} channels exceed {d} SNPs"
        )));
    }
    let side = ceil_side(d, channels);
    Ok(SnpLayout {
        snps: d,
        mode,
        channels,
        side,
        pad_count: side * side * channels - d,
        pad_value: f64::from(MISSING),
        fill_order: FillOrder::RowMajorContiguous,
    })
}

/// A `C x S x S` grid, stored row-major by channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SnpImage {
    pub channels: usize,
    pub side: usize,
    pub data: Vec<f64>,
}

impl SnpImage {
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.side + row) * self.side + col]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.side * self.side;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Reads the non-pad cells back in fill order.
    pub fn flatten(&self, layout: &SnpLayout) -> Vec<f64> {
        self.data[..layout.snps].to_vec()
    }

    /// Binary dump: `"RGTN"`, then `C`, `S`, `S` as little-endian `u32`,
    /// then `C*S*S` little-endian `f32` values.
    pub fn write_rgtn<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"RGTN")?;
        for v in [self.channels, self.side, self.side] {
            let v =
                u32::try_from(v).map_err(|_| Error::Layout(format!("extent {v} exceeds u32")))?;
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in &self.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_rgtn<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)?;
        if &head[..4] != b"RGTN" {
            return Err(Error::Layout("missing RGTN magic".into()));
        }
        let word =
            |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().expect("4 bytes")) as usize;
        let (channels, rows, cols) = (word(4), word(8), word(12));
        if rows != cols {
            return Err(Error::Layout(format!("non-square {rows}x{cols} tensor")));
        }
        let mut payload = vec![0u8; channels * rows * cols * 4];
        r.read_exact(&mut payload)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        Ok(Self {
            channels,
            side: rows,
            data,
        })
    }
}

/// Writes the padded, row-major layout of `seq` into `out` (length `C*S*S`).
pub fn fill<V, T>(seq: &[V], layout: &SnpLayout, out: &mut [T]) -> Result<()>
where
    V: Copy + Into<f64>,
    T: Float,
{
    if seq.len() != layout.snps {
        return Err(Error::Layout(format!(
            "sequence has {} SNPs, layout expects {}",
            seq.len(),
            layout.snps
        )));
    }
    if out.len() != layout.cells() {
        return Err(Error::Layout(format!(
            "output holds {} cells, layout needs {}",
            out.len(),
            layout.cells()
        )));
    }
    for (o, &v) in out.iter_mut().zip(seq) {
        *o = T::lit(v.into());
    }
    let pad = T::lit(layout.pad_value);
    out[layout.snps..].iter_mut().for_each(|o| *o = pad);
    Ok(())
}

fn transform<V: Copy + Into<f64>>(
    seq: &[V],
    layout: &SnpLayout,
    mode: LayoutMode,
) -> Result<SnpImage> {
    if layout.mode != mode {
        return Err(Error::Layout(format!(
            "layout is {:?}, expected {mode:?}",
            layout.mode
        )));
    }
    let mut data = vec![0.0f64; layout.cells()];
    fill(seq, layout, &mut data)?;
    Ok(SnpImage {
        channels: layout.channels,
        side: layout.side,
        data,
    })
}

pub fn to_image2d<V: Copy + Into<f64>>(seq: &[V], layout: &SnpLayout) -> Result<SnpImage> {
    transform(seq, layout, LayoutMode::Image2d)
}

pub fn to_tensor3d<V: Copy + Into<f64>>(seq: &[V], layout: &SnpLayout) -> Result<SnpImage> {
    transform(seq, layout, LayoutMode::Tensor3d)
}

/// Approximate depth of stacked `k x k` convolutions needed before one
/// output unit sees the whole input, for the image and channel layouts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub kernel: usize,
    pub layers_2d: f64,
    pub layers_tensor: f64,
    pub ratio: f64,
}

pub fn coverage(d: usize, kernel: usize, channels: usize) -> Result<CoverageEstimate> {
    if d == 0 || kernel == 0 || channels == 0 {
        return Err(Error::Layout("d, k and C must all be positive".into()));
    }
    let k = kernel as f64;
    let layers_2d = (d as f64).sqrt() / k;
    let layers_tensor = (d as f64 / channels as f64).sqrt() / k;
    Ok(CoverageEstimate {
        kernel,
        layers_2d,
        layers_tensor,
        ratio: layers_2d / layers_tensor,
    })
}
