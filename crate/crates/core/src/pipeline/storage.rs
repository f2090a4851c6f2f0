//! On-disk sample layout: one directory per sample holding PNG masks and
//! image, raw little-endian `f32` arrays and `meta.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma};
use sha2::{Digest, Sha256};

use super::{PipelineError, SampleMeta, SampleRecord};
use crate::grid::Grid;
use crate::optics::CoefficientMaps;

pub const META_FILE: &str = "meta.json";
pub const IMAGE_PNG: &str = "image.png";
pub const IMAGE_F32: &str = "image.f32";
pub const MASK7_PNG: &str = "mask7.png";
pub const MASK5_PNG: &str = "mask5.png";
pub const N_F32: &str = "n.f32";
pub const MUA_F32: &str = "mua.f32";
pub const MUS_F32: &str = "mus.f32";
pub const G_F32: &str = "g.f32";
pub const R_RAW_F32: &str = "r_raw.f32";
pub const R_SYS_F32: &str = "r_sys.f32";

/// Encoded payload files of a sample, excluding `meta.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFiles {
    pub files: Vec<(&'static str, Vec<u8>)>,
}

impl SampleFiles {
    pub fn digests(&self) -> BTreeMap<String, String> {
        self.files
            .iter()
            .map(|(name, bytes)| ((*name).to_owned(), sha256_hex(bytes)))
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn f32_bytes(grid: &Grid<f32>) -> Vec<u8> {
    grid.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn f32_from_bytes(
    path: &Path,
    bytes: &[u8],
    width: usize,
    height: usize,
) -> Result<Grid<f32>, PipelineError> {
    if bytes.len() != width * height * 4 {
        return Err(PipelineError::corrupt(
            path,
            format!(
                "expected {} bytes for {width}x{height} f32, found {}",
                width * height * 4,
                bytes.len()
            ),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Grid::from_vec(width, height, data).expect("length checked"))
}

fn png_bytes<P>(img: ImageBuffer<P, Vec<P::Subpixel>>) -> Vec<u8>
where
    P: image::Pixel + image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
{
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

pub(crate) fn png16(grid: &Grid<f32>) -> Vec<u8> {
    let (w, h) = grid.dims();
    let data = grid
        .as_slice()
        .iter()
        .map(|v| (f64::from(*v).clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    png_bytes(ImageBuffer::<Luma<u16>, _>::from_raw(w as u32, h as u32, data).expect("dims"))
}

pub(crate) fn png8(grid: &Grid<u8>) -> Vec<u8> {
    let (w, h) = grid.dims();
    png_bytes(
        ImageBuffer::<Luma<u8>, _>::from_raw(w as u32, h as u32, grid.as_slice().to_vec())
            .expect("dims"),
    )
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<image::DynamicImage, PipelineError> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| PipelineError::corrupt(path, e.to_string()))
}

fn check_dims(path: &Path, img: &image::DynamicImage, w: usize, h: usize) -> Result<(), PipelineError> {
    if (img.width() as usize, img.height() as usize) != (w, h) {
        return Err(PipelineError::corrupt(
            path,
            format!("expected {w}x{h} PNG, found {}x{}", img.width(), img.height()),
        ));
    }
    Ok(())
}

pub(crate) fn png8_from_bytes(
    path: &Path,
    bytes: &[u8],
    w: usize,
    h: usize,
) -> Result<Grid<u8>, PipelineError> {
    let img = decode_png(path, bytes)?;
    check_dims(path, &img, w, h)?;
    Ok(Grid::from_vec(w, h, img.into_luma8().into_raw()).expect("dims checked"))
}

/// Encodes every payload file of a record.
pub(crate) fn encode(record: &SampleRecord) -> Result<SampleFiles, PipelineError> {
    let mut files = vec![
        (IMAGE_PNG, png16(&record.image)),
        (IMAGE_F32, f32_bytes(&record.image)),
        (MASK7_PNG, png8(&record.labels)),
        (MASK5_PNG, png8(&record.mask5)),
        (N_F32, f32_bytes(&record.maps.n)),
        (MUA_F32, f32_bytes(&record.maps.mu_a)),
        (MUS_F32, f32_bytes(&record.maps.mu_s)),
        (G_F32, f32_bytes(&record.maps.g)),
    ];
    if let Some(r) = &record.r_raw {
        files.push((R_RAW_F32, f32_bytes(r)));
    }
    if let Some(r) = &record.r_sys {
        files.push((R_SYS_F32, f32_bytes(r)));
    }
    Ok(SampleFiles { files })
}

pub(crate) fn meta_bytes(meta: &SampleMeta) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    text.push('\n');
    text.into_bytes()
}

/// Writes a sample directory, `meta.json` last. Returns the SHA-256 of
/// `meta.json`, which covers every other file through its digests.
pub fn write_sample(dir: &Path, record: &SampleRecord) -> Result<String, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    for (name, bytes) in encode(record)?.files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
    }
    let bytes = meta_bytes(&record.meta);
    let path = dir.join(META_FILE);
    fs::write(&path, &bytes).map_err(|e| PipelineError::io(&path, e))?;
    Ok(sha256_hex(&bytes))
}

pub(crate) fn read_meta(dir: &Path) -> Result<(SampleMeta, Vec<u8>), PipelineError> {
    let path = dir.join(META_FILE);
    let bytes = fs::read(&path).map_err(|e| PipelineError::io(&path, e))?;
    let meta = serde_json::from_slice(&bytes).map_err(|e| PipelineError::corrupt(&path, e.to_string()))?;
    Ok((meta, bytes))
}

pub(crate) fn read_file(dir: &Path, name: &str) -> Result<Vec<u8>, PipelineError> {
    let path = dir.join(name);
    fs::read(&path).map_err(|e| PipelineError::io(&path, e))
}

/// Reads a sample directory written by [`write_sample`].
pub fn read_sample(dir: &Path) -> Result<SampleRecord, PipelineError> {
    let (meta, _) = read_meta(dir)?;
    let (w, h) = (meta.width, meta.height);
    let f32_file = |name: &str| f32_from_bytes(&dir.join(name), &read_file(dir, name)?, w, h);
    let png8_file = |name: &str| png8_from_bytes(&dir.join(name), &read_file(dir, name)?, w, h);
    let optional = |name: &str| -> Result<Option<Grid<f32>>, PipelineError> {
        if meta.files.contains_key(name) {
            f32_file(name).map(Some)
        } else {
            Ok(None)
        }
    };
    Ok(SampleRecord {
        image: f32_file(IMAGE_F32)?,
        labels: png8_file(MASK7_PNG)?,
        mask5: png8_file(MASK5_PNG)?,
        maps: CoefficientMaps {
            n: f32_file(N_F32)?,
            mu_a: f32_file(MUA_F32)?,
            mu_s: f32_file(MUS_F32)?,
            g: f32_file(G_F32)?,
        },
        r_raw: optional(R_RAW_F32)?,
        r_sys: optional(R_SYS_F32)?,
        meta,
    })
}
