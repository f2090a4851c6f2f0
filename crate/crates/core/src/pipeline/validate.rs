//! Integrity checks for stored samples and dataset roots.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::dataset::{Manifest, MANIFEST_HEADER};
use super::storage::{self, *};
use super::{regenerate, PipelineError, SampleMeta};
use crate::grid::Grid;
use crate::optics::{corneal_mask, OpticsTable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

/// Per-check results for one sample directory or a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub target: PathBuf,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    fn new(target: &Path) -> Self {
        Self {
            target: target.to_path_buf(),
            checks: Vec::new(),
        }
    }

    fn record(&mut self, check: impl Into<String>, result: Result<String, String>) {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.checks.push(CheckResult {
            check: check.into(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.target.display())?;
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "  {status}  {:<24} {}", c.check, c.detail)?;
        }
        Ok(())
    }
}

struct Loaded {
    image: Option<Grid<f32>>,
    labels: Option<Grid<u8>>,
    mask5: Option<Grid<u8>>,
    maps: [Option<Grid<f32>>; 4],
}

const MAP_FILES: [&str; 4] = [N_F32, MUA_F32, MUS_F32, G_F32];

/// Checks one sample directory. With `deep`, the sample is regenerated from
/// its metadata and compared bitwise.
pub fn validate_sample(dir: &Path, deep: bool) -> Result<ValidationReport, PipelineError> {
    if !dir.is_dir() {
        return Err(PipelineError::NotFound(dir.to_path_buf()));
    }
    let mut report = ValidationReport::new(dir);
    let meta = match storage::read_meta(dir) {
        Ok((meta, _)) => {
            report.record("metadata", Ok(META_FILE.to_owned()));
            meta
        }
        Err(e) => {
            report.record("metadata", Err(e.to_string()));
            return Ok(report);
        }
    };

    check_files(dir, &meta, &mut report);
    let loaded = load(dir, &meta, &mut report);
    check_consistency(&meta, &loaded, &mut report);
    check_image(dir, &meta, &loaded, &mut report);
    if deep {
        check_regeneration(dir, &meta, &mut report);
    }
    Ok(report)
}

fn expected_files(meta: &SampleMeta) -> Vec<&'static str> {
    let mut files = vec![IMAGE_PNG, IMAGE_F32, MASK7_PNG, MASK5_PNG, N_F32, MUA_F32, MUS_F32, G_F32];
    if meta.config.get("store_signals").and_then(|v| v.as_bool()) == Some(true) {
        files.extend([R_RAW_F32, R_SYS_F32]);
    }
    files
}

fn check_files(dir: &Path, meta: &SampleMeta, report: &mut ValidationReport) {
    let missing: Vec<&str> = expected_files(meta)
        .into_iter()
        .filter(|name| !meta.files.contains_key(*name) || !dir.join(name).is_file())
        .collect();
    report.record(
        "files present",
        if missing.is_empty() {
            Ok(format!("{} files", meta.files.len() + 1))
        } else {
            Err(format!("missing {}", missing.join(", ")))
        },
    );
    for (name, digest) in &meta.files {
        let result = match read_file(dir, name) {
            Ok(bytes) if sha256_hex(&bytes) == *digest => Ok(format!("{}…", &digest[..12])),
            Ok(_) => Err(format!("{name}: SHA-256 does not match meta.json")),
            Err(e) => Err(e.to_string()),
        };
        report.record(format!("checksum {name}"), result);
    }
}

fn load(dir: &Path, meta: &SampleMeta, report: &mut ValidationReport) -> Loaded {
    let (w, h) = (meta.width, meta.height);
    let mut problems = Vec::new();
    let mut f32_file = |name: &str| {
        read_file(dir, name)
            .and_then(|b| f32_from_bytes(&dir.join(name), &b, w, h))
            .map_err(|e| problems.push(format!("{name}: {e}")))
            .ok()
    };
    let image = f32_file(IMAGE_F32);
    let maps = MAP_FILES.map(&mut f32_file);
    for name in [R_RAW_F32, R_SYS_F32] {
        if meta.files.contains_key(name) {
            f32_file(name);
        }
    }
    let mut png_file = |name: &str| {
        read_file(dir, name)
            .and_then(|b| png8_from_bytes(&dir.join(name), &b, w, h))
            .map_err(|e| problems.push(format!("{name}: {e}")))
            .ok()
    };
    let labels = png_file(MASK7_PNG);
    let mask5 = png_file(MASK5_PNG);
    report.record(
        "dimensions",
        if problems.is_empty() {
            Ok(format!("all grids {w}x{h}"))
        } else {
            Err(problems.join("; "))
        },
    );
    Loaded {
        image,
        labels,
        mask5,
        maps,
    }
}

fn check_consistency(meta: &SampleMeta, loaded: &Loaded, report: &mut ValidationReport) {
    let Some(labels) = &loaded.labels else {
        report.record("label monotonicity", Err(format!("{MASK7_PNG} unreadable")));
        report.record("coefficient consistency", Err(format!("{MASK7_PNG} unreadable")));
        return;
    };
    let (w, h) = labels.dims();

    let monotone = (|| {
        for col in 0..w {
            let mut prev = 1u8;
            for row in 0..h {
                let l = *labels.get(col, row);
                if !(1..=7).contains(&l) {
                    return Err(format!("{MASK7_PNG}: label {l} out of range at (x={col}, z={row})"));
                }
                if l < prev {
                    return Err(format!("{MASK7_PNG}: label decreases at (x={col}, z={row})"));
                }
                prev = l;
            }
        }
        Ok("labels non-decreasing in depth".to_owned())
    })();
    report.record("label monotonicity", monotone);

    let table: Option<OpticsTable> = meta
        .config
        .get("optics")
        .and_then(|v| serde_json::from_value(v.clone()).ok());
    let consistency = match table {
        None => Err("optics table missing from meta.json".to_owned()),
        Some(table) => {
            let tuples = table.tuples_f32();
            let mut result = Ok("maps equal table constants of each label".to_owned());
            'outer: for (i, (map, name)) in loaded.maps.iter().zip(MAP_FILES).enumerate() {
                let Some(map) = map else {
                    result = Err(format!("{name} unreadable"));
                    break;
                };
                for row in 0..h {
                    for col in 0..w {
                        let l = *labels.get(col, row);
                        if !(1..=7).contains(&l) {
                            continue;
                        }
                        let expected = tuples[usize::from(l) - 1][i];
                        let found = *map.get(col, row);
                        if found.to_bits() != expected.to_bits() {
                            result = Err(format!(
                                "{name}: value {found} at (x={col}, z={row}) differs from {expected} of label {l}"
                            ));
                            break 'outer;
                        }
                    }
                }
            }
            result
        }
    };
    report.record("coefficient consistency", consistency);

    let mask5 = match &loaded.mask5 {
        None => Err(format!("{MASK5_PNG} unreadable")),
        Some(m) => {
            let expected = corneal_mask(labels);
            match first_difference(m, &expected) {
                None => Ok("matches corneal labels".to_owned()),
                Some((col, row)) => Err(format!("{MASK5_PNG}: mismatch at (x={col}, z={row})")),
            }
        }
    };
    report.record("mask5 consistency", mask5);
}

fn first_difference<T: PartialEq + Copy>(a: &Grid<T>, b: &Grid<T>) -> Option<(usize, usize)> {
    let (w, _) = a.dims();
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .position(|(x, y)| x != y)
        .map(|i| (i % w, i / w))
}

fn check_image(dir: &Path, meta: &SampleMeta, loaded: &Loaded, report: &mut ValidationReport) {
    let result = match &loaded.image {
        None => Err(format!("{IMAGE_F32} unreadable")),
        Some(img) => {
            if let Some(i) = img.as_slice().iter().position(|v| !(0.0..=1.0).contains(v)) {
                let w = meta.width;
                Err(format!("{IMAGE_F32}: value outside [0, 1] at (x={}, z={})", i % w, i / w))
            } else {
                match read_file(dir, IMAGE_PNG) {
                    Err(e) => Err(e.to_string()),
                    Ok(bytes) if bytes == png16(img) => Ok("unit range, PNG matches".to_owned()),
                    Ok(_) => Err(format!("{IMAGE_PNG}: does not match {IMAGE_F32}")),
                }
            }
        }
    };
    report.record("image", result);
}

fn check_regeneration(dir: &Path, meta: &SampleMeta, report: &mut ValidationReport) {
    let result = match regenerate(meta) {
        Err(e) => Err(format!("regeneration failed: {e}")),
        Ok(fresh) => {
            let mut mismatched = Vec::new();
            for (name, digest) in &fresh.meta.files {
                match read_file(dir, name) {
                    Ok(bytes) if sha256_hex(&bytes) == *digest => {}
                    _ => mismatched.push(name.clone()),
                }
            }
            if fresh.meta != *meta {
                mismatched.push(META_FILE.to_owned());
            }
            if mismatched.is_empty() {
                Ok(format!("{} grids bitwise equal", fresh.meta.files.len()))
            } else {
                Err(format!("differs: {}", mismatched.join(", ")))
            }
        }
    };
    report.record("regeneration", result);
}

fn check_manifest(root: &Path) -> (ValidationReport, Vec<PathBuf>) {
    let mut report = ValidationReport::new(&root.join(MANIFEST_HEADER));
    let manifest = match Manifest::read(root) {
        Ok(m) => m,
        Err(e) => {
            report.record("manifest", Err(e.to_string()));
            return (report, Vec::new());
        }
    };
    let h = &manifest.header;
    report.record(
        "index checksum",
        if manifest.index_checksum() == h.index_checksum {
            Ok(format!("{} rows", manifest.rows.len()))
        } else {
            Err(format!("{}: SHA-256 does not match header", h.index_file))
        },
    );
    let healthy = manifest
        .rows
        .iter()
        .filter(|r| r.phenotype == crate::geometry::Phenotype::Healthy)
        .count() as u64;
    let counts_ok = manifest.rows.len() as u64 == h.total_samples
        && healthy == h.healthy_samples
        && h.total_samples - healthy == h.keratoconus_samples;
    report.record(
        "sample counts",
        if counts_ok {
            Ok(format!("{healthy} healthy / {} keratoconus", h.keratoconus_samples))
        } else {
            Err(format!(
                "manifest lists {} rows ({healthy} healthy), header expects {} ({} healthy)",
                manifest.rows.len(),
                h.total_samples,
                h.healthy_samples
            ))
        },
    );
    let mut dirs = Vec::new();
    for row in &manifest.rows {
        let dir = root.join(&row.dir);
        let ok = match read_file(&dir, META_FILE) {
            Ok(bytes) if sha256_hex(&bytes) == row.checksum => Ok(row.dir.clone()),
            Ok(_) => Err(format!("{}/{META_FILE}: checksum differs from manifest", row.dir)),
            Err(e) => Err(e.to_string()),
        };
        report.record(format!("row {}", row.sample_id), ok);
        dirs.push(dir);
    }
    (report, dirs)
}

/// Validates a sample directory or a dataset root (one containing
/// `manifest.json`). Fails only when the path is neither.
pub fn validate_path(path: &Path, deep: bool) -> Result<Vec<ValidationReport>, PipelineError> {
    if path.join(MANIFEST_HEADER).is_file() {
        let (manifest_report, dirs) = check_manifest(path);
        let mut reports = vec![manifest_report];
        for dir in dirs {
            match validate_sample(&dir, deep) {
                Ok(r) => reports.push(r),
                Err(e) => {
                    let mut r = ValidationReport::new(&dir);
                    r.record("metadata", Err(e.to_string()));
                    reports.push(r);
                }
            }
        }
        Ok(reports)
    } else if path.join(super::sweep::SWEEP_INDEX).is_file() {
        let index = path.join(super::sweep::SWEEP_INDEX);
        let text = std::fs::read_to_string(&index).map_err(|e| PipelineError::io(&index, e))?;
        let entries: Vec<serde_json::Value> = serde_json::from_str(&text)
            .map_err(|e| PipelineError::corrupt(&index, e.to_string()))?;
        let mut reports = Vec::new();
        for entry in entries {
            let dir = entry
                .get("dir")
                .and_then(|d| d.as_str())
                .ok_or_else(|| PipelineError::corrupt(&index, "entry without `dir`"))?;
            let sub = path.join(dir);
            if sub.join(MANIFEST_HEADER).is_file() {
                reports.extend(validate_path(&sub, deep)?);
            } else {
                let mut r = ValidationReport::new(&sub);
                r.record("manifest", Err(format!("{MANIFEST_HEADER} missing")));
                reports.push(r);
            }
        }
        Ok(reports)
    } else if path.join(META_FILE).is_file() {
        Ok(vec![validate_sample(path, deep)?])
    } else {
        Err(PipelineError::NotFound(path.to_path_buf()))
    }
}
