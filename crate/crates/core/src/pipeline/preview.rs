//! Colour-mapped PNG previews of one sample.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Rgb, RgbImage};

use super::{PipelineError, SampleRecord};
use crate::grid::Grid;
use crate::optics::OpticsTable;

/// Key colours of a perceptually ordered dark-blue → yellow map.
const RAMP: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Overlay colours for labels 1..=7.
const LABEL_COLORS: [[u8; 3]; 7] = [
    [0, 0, 0],
    [230, 25, 75],
    [255, 225, 25],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [70, 70, 70],
];

fn ramp(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (RAMP.len() - 1) as f64;
    let i = (pos.floor() as usize).min(RAMP.len() - 2);
    let f = pos - i as f64;
    std::array::from_fn(|c| (RAMP[i][c] + (RAMP[i + 1][c] - RAMP[i][c]) * f).round() as u8)
}

fn to_rgb(w: usize, h: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> RgbImage {
    ImageBuffer::from_fn(w as u32, h as u32, |x, y| Rgb(f(x as usize, y as usize)))
}

/// Grayscale rendering of the B-scan.
pub fn image_panel(image: &Grid<f32>) -> RgbImage {
    let (w, h) = image.dims();
    to_rgb(w, h, |x, y| {
        let v = ((*image.get(x, y)).clamp(0.0, 1.0) * 255.0).round() as u8;
        [v, v, v]
    })
}

/// B-scan with the label map blended on top.
pub fn overlay_panel(image: &Grid<f32>, labels: &Grid<u8>) -> RgbImage {
    let (w, h) = image.dims();
    to_rgb(w, h, |x, y| {
        let v = f64::from((*image.get(x, y)).clamp(0.0, 1.0)) * 255.0;
        let l = usize::from((*labels.get(x, y)).clamp(1, 7)) - 1;
        let edge = y > 0 && *labels.get(x, y - 1) != *labels.get(x, y);
        if edge {
            return [255, 255, 255];
        }
        let alpha = if l == 0 || l == 6 { 0.0 } else { 0.4 };
        std::array::from_fn(|c| (v * (1.0 - alpha) + f64::from(LABEL_COLORS[l][c]) * alpha).round() as u8)
    })
}

/// Map scaled between the smallest and largest table value of the parameter.
pub fn map_panel(map: &Grid<f32>, lo: f64, hi: f64) -> RgbImage {
    let (w, h) = map.dims();
    let span = hi - lo;
    to_rgb(w, h, |x, y| {
        let t = if span > 0.0 {
            (f64::from(*map.get(x, y)) - lo) / span
        } else {
            0.5
        };
        ramp(t)
    })
}

fn range(table: &OpticsTable, i: usize) -> (f64, f64) {
    table
        .tuples_f32()
        .iter()
        .map(|t| f64::from(t[i]))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn side_by_side(panels: &[&RgbImage]) -> RgbImage {
    let h = panels.iter().map(|p| p.height()).max().unwrap_or(0);
    let w: u32 = panels.iter().map(|p| p.width()).sum();
    let mut out = RgbImage::new(w, h);
    let mut x0 = 0;
    for p in panels {
        image::imageops::replace(&mut out, *p, i64::from(x0), 0);
        x0 += p.width();
    }
    out
}

/// Writes the preview PNGs of a record into `dir` and returns their paths.
pub fn write_previews(dir: &Path, record: &SampleRecord, table: &OpticsTable) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let image = image_panel(&record.image);
    let overlay = overlay_panel(&record.image, &record.labels);
    let maps = &record.maps;
    let panels = [
        ("preview_n.png", map_panel(&maps.n, range(table, 0).0, range(table, 0).1)),
        ("preview_mua.png", map_panel(&maps.mu_a, range(table, 1).0, range(table, 1).1)),
        ("preview_mus.png", map_panel(&maps.mu_s, range(table, 2).0, range(table, 2).1)),
        ("preview_g.png", map_panel(&maps.g, range(table, 3).0, range(table, 3).1)),
    ];
    let mut all = vec![("preview_image.png", image), ("preview_overlay.png", overlay)];
    all.extend(panels);
    // the composite shows the default view: image, overlay, n, mus and g
    let composite = side_by_side(
        &all.iter()
            .filter(|(name, _)| *name != "preview_mua.png")
            .map(|(_, p)| p)
            .collect::<Vec<_>>(),
    );
    all.push(("preview_panel.png", composite));
    let mut paths = Vec::new();
    for (name, img) in all {
        let path = dir.join(name);
        img.save_with_format(&path, ImageFormat::Png)
            .map_err(|e| PipelineError::io(&path, std::io::Error::other(e)))?;
        paths.push(path);
    }
    Ok(paths)
}
