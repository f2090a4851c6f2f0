//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report is always
//! printed; exits non-zero if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::distr::{Open01, StandardUniform};
use rand::Rng;
use sha2::{Digest, Sha256};

use cornea_oct::config::DatasetConfig;
use cornea_oct::geometry::{anterior_surface, Phenotype};
use cornea_oct::optics::{default_optics_table, identify_label, project_coefficients, rasterize_labels};
use cornea_oct::pipeline::{
    build_geometry, generate_dataset, generate_sample, phenotype_for, SampleSeeds, MANIFEST_HEADER,
};
use cornea_oct::rng::stream;
use cornea_oct::system::{confocal_weight, render_bscan, rolloff_weight, RenderParams};
use cornea_oct::transport::{
    fresnel_interface, sample_hg_cos, sample_step, simulate_a_line, snell_residual, BoundaryOutcome,
    Direction, LayeredStack, StackLayer, TransportConfig,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean_sd(xs: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for x in xs {
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    (mean, (m2 / (n - 1) as f64).sqrt(), n)
}

fn geometry_validity() -> Outcome {
    let cfg = DatasetConfig::default();
    let mut violations = 0;
    let mut checked = 0;
    for phenotype in [Phenotype::Healthy, Phenotype::Keratoconus] {
        for id in 0..1000u64 {
            let seeds = SampleSeeds::derive(0xC0FFEE, id);
            let geo = build_geometry(&cfg, &seeds, phenotype).map_err(|e| format!("seed {id}: {e}"))?;
            let b = &geo.window;
            if b.columns() != 1024 {
                return Err(format!("window has {} columns", b.columns()));
            }
            for set in [&geo.full, &geo.window] {
                if set.ordering_violation().is_some() {
                    violations += 1;
                }
                if set.lower_bound_violation(&geo.lower_bounds).is_some() {
                    violations += 1;
                }
            }
            checked += 1;
        }
    }
    check(
        violations == 0,
        format!("{violations} violations over {checked} geometries x 1024 columns"),
    )
}

fn table_fidelity() -> Outcome {
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/table1.tsv"))
        .map_err(|e| e.to_string())?;
    let rows: Vec<Vec<&str>> = golden
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split('\t').collect())
        .collect();
    let table = default_optics_table();
    if rows.len() != table.layers.len() {
        return Err(format!("{} golden rows vs {} layers", rows.len(), table.layers.len()));
    }
    let fmt_d = |d: f64| {
        if d < 1e-3 {
            let s = format!("{d:.4e}");
            let (m, e) = s.split_once('e').expect("exponent");
            let e: i32 = e.parse().expect("exponent");
            format!("{m}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
        } else {
            format!("{d:.4}")
        }
    };
    let mut matched = 0;
    for (row, layer) in rows.iter().zip(&table.layers) {
        let ours = [
            format!("{:.3}", layer.n),
            format!("{:.2}", layer.mu_a),
            format!("{:.2}", layer.mu_s),
            format!("{:.2}", layer.g),
            fmt_d(layer.d),
        ];
        let values = [layer.n, layer.mu_a, layer.mu_s, layer.g, layer.d];
        for ((golden, printed), value) in row[1..].iter().zip(&ours).zip(values) {
            let exact: f64 = golden.parse().map_err(|_| format!("bad golden value {golden}"))?;
            if golden != printed || exact.to_string() != value.to_string() {
                return Err(format!("{}: golden {golden}, table {value}", layer.name));
            }
            matched += 1;
        }
    }
    check(matched == 35, format!("{matched}/35 constants string-equal to golden"))
}

fn label_consistency() -> Outcome {
    let cfg = DatasetConfig::default();
    let table = &cfg.optics;
    let mut mismatches = 0u64;
    let mut pixels = 0u64;
    for id in 0..100u64 {
        let seeds = SampleSeeds::derive(77, id);
        let phenotype = if id % 5 == 4 { Phenotype::Keratoconus } else { Phenotype::Healthy };
        let geo = build_geometry(&cfg, &seeds, phenotype).map_err(|e| e.to_string())?;
        let labels = rasterize_labels(&geo.window, 1024, 1024);
        let maps = project_coefficients(&labels, table);
        let mut cache: HashMap<[u32; 4], Option<u8>> = HashMap::new();
        for i in 0..labels.as_slice().len() {
            let tuple = [
                maps.n.as_slice()[i],
                maps.mu_a.as_slice()[i],
                maps.mu_s.as_slice()[i],
                maps.g.as_slice()[i],
            ];
            let key = tuple.map(f32::to_bits);
            let found = *cache.entry(key).or_insert_with(|| identify_label(tuple, table));
            if found != Some(labels.as_slice()[i]) {
                mismatches += 1;
            }
            pixels += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches} mismatches over {pixels} pixels"))
}

fn transport_statistics() -> Outcome {
    let mut rng = stream(4);
    let mut lines = Vec::new();
    let mut ok = true;
    for mu_t in [4.7, 10.2] {
        let (m, _, n) = mean_sd((0..1_000_000).map(|_| sample_step(mu_t, rng.sample(Open01))));
        let se = (1.0 / mu_t) / (n as f64).sqrt();
        let z = (m - 1.0 / mu_t) / se;
        ok &= z.abs() < 3.0;
        lines.push(format!("step mu_t={mu_t}: z={z:.2}"));
    }
    for g in [0.0, 0.92, 0.93, 0.94] {
        let (m, _, n) = mean_sd((0..1_000_000).map(|_| sample_hg_cos(g, rng.sample(StandardUniform))));
        let se = ((1.0 - g * g) / 3.0f64).sqrt() / (n as f64).sqrt();
        let z = (m - g) / se;
        ok &= z.abs() < 3.0;
        lines.push(format!("HG g={g}: z={z:.2}"));
    }
    let slab = StackLayer {
        thickness: 0.02,
        n: 1.0,
        mu_a: 10.0,
        mu_s: 0.0,
        g: 0.0,
    };
    let stack = LayeredStack::new(vec![slab], 1.0, 1.0).map_err(|e| e.to_string())?;
    let cfg = TransportConfig {
        photons_per_aline: 1_000_000,
        axial_bins: 16,
        ..TransportConfig::default()
    };
    let acc = simulate_a_line(&stack, &cfg, 0, 0).map_err(|e| e.to_string())?;
    let p = (-0.2f64).exp();
    let frac = acc.transmitted / acc.launched;
    let z = (frac - p) / (p * (1.0 - p) / 1e6).sqrt();
    ok &= z.abs() < 3.0;
    lines.push(format!("Beer-Lambert {frac:.5} vs {p:.5}: z={z:.2}"));
    check(ok, lines.join("; "))
}

fn energy_conservation() -> Outcome {
    let table = default_optics_table();
    let thickness: Vec<f64> = table.layers.iter().map(|l| l.d).collect();
    let stack = LayeredStack::from_column(&thickness, &table).map_err(|e| e.to_string())?;
    let cfg = TransportConfig {
        photons_per_aline: 100_000,
        ..TransportConfig::default()
    };
    let acc = simulate_a_line(&stack, &cfg, 3, 9).map_err(|e| e.to_string())?;
    let err = acc.conservation_error();
    check(
        err < 0.005 && acc.ledger_residual().abs() < 1e-6 * acc.launched,
        format!(
            "relative error {:.3e} (launched {:.0}, detected {:.1}, outside acceptance {:.1}, absorbed {:.1}, transmitted {:.1}, roulette net {:.2})",
            err,
            acc.launched,
            acc.detected,
            acc.reflected,
            acc.absorbed,
            acc.transmitted,
            acc.roulette_gained - acc.roulette_killed
        ),
    )
}

fn random_direction<R: Rng>(rng: &mut R, downward: bool) -> Direction {
    let cos: f64 = rng.random_range(0.001..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let sin = (1.0 - cos * cos).sqrt();
    Direction::new(sin * phi.cos(), sin * phi.sin(), if downward { cos } else { -cos })
}

fn fresnel_analytics() -> Outcome {
    let mut rng = stream(6);
    let trials = 1_000_000;
    let reflected = (0..trials)
        .filter(|_| {
            matches!(
                fresnel_interface(1.0, 1.4, Direction::DOWN, rng.random()),
                BoundaryOutcome::Reflected(_)
            )
        })
        .count();
    let p = (0.4f64 / 2.4).powi(2);
    let frac = reflected as f64 / trials as f64;
    let z = (frac - p) / (p * (1.0 - p) / trials as f64).sqrt();

    let table = default_optics_table();
    let pairs: Vec<(f64, f64)> = table
        .layers
        .windows(2)
        .flat_map(|w| [(w[0].n, w[1].n), (w[1].n, w[0].n)])
        .collect();
    let mut worst: f64 = 0.0;
    let mut transmitted = 0;
    for i in 0..100_000 {
        let (n1, n2) = pairs[i % pairs.len()];
        let dir = random_direction(&mut rng, i % 2 == 0);
        if let BoundaryOutcome::Transmitted(t) = fresnel_interface(n1, n2, dir, rng.random()) {
            worst = worst.max(snell_residual(n1, n2, dir, t).abs());
            transmitted += 1;
        }
    }

    let critical = (1.0f64 / 1.4).asin();
    let mut tir = 0;
    for _ in 0..10_000 {
        let theta = rng.random_range(critical + 1e-9..std::f64::consts::FRAC_PI_2);
        let dir = Direction::new(theta.sin(), 0.0, -theta.cos());
        if matches!(fresnel_interface(1.4, 1.0, dir, rng.random()), BoundaryOutcome::Reflected(_)) {
            tir += 1;
        }
    }
    check(
        z.abs() < 3.0 && worst < 1e-9 && tir == 10_000,
        format!(
            "normal reflectance {frac:.6} vs {p:.6} (z={z:.2}); max Snell residual {worst:.1e} over {transmitted} refractions; TIR {tir}/10000"
        ),
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
}

fn system_closed_forms() -> Outcome {
    let cfg = DatasetConfig::default();
    let p = cfg.system_params();
    let (z0, s, zm, eta) = (p.z0, p.sigma_c, p.z_max, p.eta);
    let half = (-0.5f64).exp();
    let mut ok = close(confocal_weight(z0, z0, s), 1.0)
        && close(confocal_weight(z0 + s, z0, s), half)
        && close(confocal_weight(z0 - s, z0, s), half)
        && close(half, 0.606_530_659_712_633);
    let roll = |z| rolloff_weight(z, zm, eta).map_err(|e| e.to_string());
    let (r0, r_half, r34) = (roll(0.0)?, roll(zm / 2.0)?, roll(0.75 * zm)?);
    ok &= close(r0, 1.0) && r_half.abs() < 1e-12 && close(r34, eta / 4.0);
    // an independent spot value away from the named points
    ok &= close(roll(0.6 * zm)?, eta * (0.6 * std::f64::consts::PI).cos().powi(4));
    check(
        ok,
        format!("W_conf(z0)={:.12}, W_conf(z0±σc)={:.12}, W_roll(0)={r0:.12}, W_roll(z_max/2)={r_half:.1e}, W_roll(3z_max/4)={r34:.12} (η/4={:.12})", confocal_weight(z0, z0, s), half, eta / 4.0),
    )
}

fn render_invariance() -> Outcome {
    let mut cfg = DatasetConfig::default();
    cfg.width = 128;
    cfg.height = 128;
    cfg.transport.photons_per_aline = 2000;
    cfg.total_samples = 1;
    let record = generate_sample(&cfg, 0).map_err(|e| e.to_string())?;
    let simulated = record.r_sys.expect("signals stored").map(|v| f64::from(*v));
    let mut rng = stream(8);
    let synthetic = cornea_oct::Grid::from_fn(256, 256, |_, _| {
        let u: f64 = rng.sample(Open01);
        (-12.0 * u).exp()
    });
    let rp = RenderParams::default();
    let mut compared = 0;
    for input in [&simulated, &synthetic] {
        let base = render_bscan(input, &rp).map_err(|e| e.to_string())?;
        for lambda in [0.5, 2.0, 10.0] {
            let scaled = render_bscan(&input.map(|v| v * lambda), &rp).map_err(|e| e.to_string())?;
            let same = base
                .pixels
                .as_slice()
                .iter()
                .zip(scaled.pixels.as_slice())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same || base.degenerate != scaled.degenerate {
                return Err(format!("render changed under λ = {lambda}"));
            }
            compared += 1;
        }
    }
    check(true, format!("{compared} scaled renders bitwise equal (simulated and synthetic inputs)"))
}

fn tree_digest(root: &Path) -> BTreeMap<String, String> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, String>) {
        let mut entries: Vec<_> = fs::read_dir(dir).expect("readable").map(|e| e.expect("entry").path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let rel = p.strip_prefix(root).expect("inside root").to_string_lossy().into_owned();
                out.insert(rel, hex::encode(Sha256::digest(fs::read(&p).expect("readable"))));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn parallel_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = DatasetConfig::default();
    cfg.total_samples = 16;
    cfg.transport.photons_per_aline = 1000;
    cfg.seed_root = 9;
    let mut trees = Vec::new();
    let mut times = Vec::new();
    for workers in [1, 8] {
        cfg.output_root = tmp.path().join(format!("w{workers}"));
        let t = Instant::now();
        let report = generate_dataset(&cfg, workers).map_err(|e| e.to_string())?;
        times.push(t.elapsed().as_secs_f64());
        if !report.succeeded() {
            return Err(format!("{} samples failed", report.failures.len()));
        }
        trees.push(tree_digest(&cfg.output_root));
    }
    check(
        trees[0] == trees[1] && trees[0].len() > 16,
        format!(
            "{} files byte-identical; 1 worker {:.1} s, 8 workers {:.1} s ({} cores available)",
            trees[0].len(),
            times[0],
            times[1],
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
    )
}

fn protocol_conformance() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = DatasetConfig::default();
    cfg.total_samples = 100;
    cfg.healthy_fraction = 0.8;
    cfg.transport.photons_per_aline = 1000;
    cfg.seed_root = 10;
    cfg.output_root = tmp.path().join("ds");
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let report = generate_dataset(&cfg, workers).map_err(|e| e.to_string())?;
    let healthy = report.manifest.rows.iter().filter(|r| r.phenotype == Phenotype::Healthy).count();
    let keratoconus = report.manifest.rows.len() - healthy;
    let required = [
        "image.png", "image.f32", "mask7.png", "mask5.png", "n.f32", "mua.f32", "mus.f32", "g.f32", "meta.json",
    ];
    let incomplete = report
        .manifest
        .rows
        .iter()
        .filter(|r| required.iter().any(|f| !cfg.output_root.join(&r.dir).join(f).is_file()))
        .count();
    let status = Command::new(env!("CARGO_BIN_EXE_cornea-oct"))
        .args(["-q", "validate"])
        .arg(&cfg.output_root)
        .status()
        .map_err(|e| e.to_string())?;
    check(
        healthy == 80
            && keratoconus == 20
            && incomplete == 0
            && status.code() == Some(0)
            && cfg.output_root.join(MANIFEST_HEADER).is_file(),
        format!(
            "{healthy} healthy / {keratoconus} keratoconus, {incomplete} incomplete file sets, validate exit {:?}",
            status.code()
        ),
    )
}

fn phenotype_separation() -> Outcome {
    let mut cfg = DatasetConfig::default();
    cfg.total_samples = 200;
    cfg.healthy_fraction = 0.8;
    cfg.seed_root = 11;
    let healthy_max = cfg.geometry.ranges.bulge_height_healthy.max;
    let mut min_kc = f64::INFINITY;
    let mut max_healthy: f64 = 0.0;
    let mut failures = Vec::new();
    let mut kc_count = 0;
    for id in 0..cfg.total_samples {
        let phenotype = phenotype_for(&cfg, id);
        let geo = build_geometry(&cfg, &SampleSeeds::derive(cfg.seed_root, id), phenotype).map_err(|e| e.to_string())?;
        let p = geo.params;
        // the anterior surface with the localized term removed
        let mut smooth = p;
        smooth.bulge_height = 0.0;
        let x = &geo.window.x;
        let base = anterior_surface(x, &smooth).map_err(|e| e.to_string())?;
        let residual: Vec<f64> = geo.window.boundaries[1].iter().zip(&base).map(|(y, b)| y - b).collect();
        let near = (0..x.len())
            .min_by(|&a, &b| (x[a] - p.bulge_center).abs().total_cmp(&(x[b] - p.bulge_center).abs()))
            .expect("columns");
        let far = (0..x.len())
            .max_by(|&a, &b| (x[a] - p.bulge_center).abs().total_cmp(&(x[b] - p.bulge_center).abs()))
            .expect("columns");
        let elevation = residual[near] - residual[far];
        match phenotype {
            Phenotype::Keratoconus => {
                kc_count += 1;
                min_kc = min_kc.min(elevation);
                if !(p.bulge_height > healthy_max && elevation > healthy_max) {
                    failures.push(id);
                }
            }
            Phenotype::Healthy => {
                max_healthy = max_healthy.max(elevation);
                if !(p.bulge_height <= healthy_max) {
                    failures.push(id);
                }
            }
        }
    }
    check(
        failures.is_empty() && kc_count == 40,
        format!(
            "{kc_count} keratoconus samples: min measured bulge {min_kc:.2} µm > healthy band max {healthy_max} µm (healthy measured max {max_healthy:.2} µm); failures {failures:?}"
        ),
    )
}

fn throughput() -> Outcome {
    let mut cfg = DatasetConfig::default();
    cfg.transport.photons_per_aline = 10_000;
    let t = Instant::now();
    let record = generate_sample(&cfg, 0).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    check(
        secs < 300.0 && record.image.dims() == (1024, 1024),
        format!("1024x1024 sample at 1e4 photons/A-line in {secs:.1} s on {cores} core(s)"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("geometry validity", geometry_validity),
        ("optics table fidelity", table_fidelity),
        ("label/coefficient consistency", label_consistency),
        ("transport statistics", transport_statistics),
        ("energy conservation", energy_conservation),
        ("Fresnel analytics", fresnel_analytics),
        ("system-model closed forms", system_closed_forms),
        ("render scale invariance", render_invariance),
        ("determinism under parallelism", parallel_determinism),
        ("dataset protocol conformance", protocol_conformance),
        ("phenotype separation", phenotype_separation),
        ("throughput", throughput),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let label = format!("criterion {:>2}: {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {label} [{secs:.1} s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {label} [{secs:.1} s] {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
