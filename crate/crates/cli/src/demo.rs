//! Image-corruption demo on a simulated crossbar.
//!
//! Images are raw 8-bit grayscale: a little-endian `u32` width and `u32`
//! height followed by `width * height` pixel bytes, row-major. Each pixel
//! is split into `8 / log2(levels)` symbols, most significant first, laid
//! out along an array row.

use anyhow::{bail, ensure, Result};
use comet_core::baseline::{corruption_sequence_observed, disturbances_to_flip, CellModel, CrossbarArray, CrossbarConfig, LevelSet};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        ensure!(bytes.len() >= 8, "image shorter than its 8-byte header");
        let width = u32::from_le_bytes(bytes[0..4].try_into()?);
        let height = u32::from_le_bytes(bytes[4..8].try_into()?);
        let expected = width as u64 * height as u64;
        ensure!(width > 0 && height > 0, "image has zero width or height");
        if (bytes.len() - 8) as u64 != expected {
            bail!("image header says {width}x{height} = {expected} pixels but {} bytes follow", bytes.len() - 8);
        }
        Ok(Self {
            width,
            height,
            pixels: bytes[8..].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.pixels.len());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Seeded noise image.
    pub fn synthetic(width: u32, height: u32, seed: u64) -> Self {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let pixels = (0..width as usize * height as usize).map(|_| rng.next_u64() as u8).collect();
        Self { width, height, pixels }
    }
}

fn symbol_bits(levels: usize) -> Result<u32> {
    match levels {
        2 => Ok(1),
        4 => Ok(2),
        16 => Ok(4),
        256 => Ok(8),
        n => bail!("{n} levels do not pack into whole bytes"),
    }
}

fn to_symbols(img: &GrayImage, bits: u32) -> Vec<u32> {
    let per = 8 / bits;
    let mask = (1u32 << bits) - 1;
    img.pixels
        .iter()
        .flat_map(|&p| (0..per).rev().map(move |k| (p as u32 >> (k * bits)) & mask))
        .collect()
}

fn to_pixels(symbols: &[u32], bits: u32) -> Vec<u8> {
    symbols
        .chunks((8 / bits) as usize)
        .map(|c| c.iter().fold(0u32, |acc, s| (acc << bits) | s) as u8)
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoStep {
    pub step: usize,
    pub written_rows_mod4: usize,
    pub corrupted_symbols: usize,
    pub corrupted_pixels: usize,
    pub corrupted_pixel_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub levels: usize,
    pub level_spacing: f64,
    pub cell_model: CellModel,
    pub disturbance_fraction: f64,
    pub disturbances_to_flip: Option<u32>,
    pub width: u32,
    pub height: u32,
    pub array_rows: usize,
    pub array_cols: usize,
    pub steps: Vec<DemoStep>,
}

impl DemoReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("step,written_rows_mod4,corrupted_symbols,corrupted_pixels,corrupted_pixel_pct\n");
        for r in &self.steps {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step, r.written_rows_mod4, r.corrupted_symbols, r.corrupted_pixels, r.corrupted_pixel_pct
            ));
        }
        s
    }
}

/// Stores `img`, runs `steps` rounds of alternating row rewrites and reports
/// the damage after each. Also returns the image read back at the end.
pub fn run(img: &GrayImage, levels: &LevelSet, model: CellModel, cfg: &CrossbarConfig, steps: usize) -> Result<(DemoReport, GrayImage)> {
    let bits = symbol_bits(levels.len())?;
    let rows = img.height as usize;
    let cols = img.width as usize * (8 / bits) as usize;
    let original = to_symbols(img, bits);
    let mut arr = CrossbarArray::from_symbols(rows, cols, &original, levels, model)?;
    let pixels = img.pixels.len();
    let mut detail = Vec::with_capacity(steps);
    let mut last = original.clone();
    corruption_sequence_observed(&mut arr, levels, cfg, steps, |rec, now| {
        let read = to_pixels(now, bits);
        let bad = read.iter().zip(&img.pixels).filter(|(a, b)| a != b).count();
        detail.push(DemoStep {
            step: rec.step,
            written_rows_mod4: rec.written_rows_mod4,
            corrupted_symbols: rec.corrupted_symbols,
            corrupted_pixels: bad,
            corrupted_pixel_pct: 100.0 * bad as f64 / pixels as f64,
        });
        last.copy_from_slice(now);
    })?;
    let report = DemoReport {
        levels: levels.len(),
        level_spacing: levels.min_spacing(),
        cell_model: model,
        disturbance_fraction: cfg.disturbance_fraction,
        disturbances_to_flip: disturbances_to_flip(levels, cfg),
        width: img.width,
        height: img.height,
        array_rows: rows,
        array_cols: cols,
        steps: detail,
    };
    let readback = GrayImage {
        width: img.width,
        height: img.height,
        pixels: to_pixels(&last, bits),
    };
    Ok((report, readback))
}
