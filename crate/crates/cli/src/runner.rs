//! Command implementations: collection assembly, cache handling, and the
//! preprocess / train / match / eval / synth entry points.

use crate::config::RunConfig;
use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use unimatch_core::assignment::{
    check_cycle_consistency, compose_pairwise, write_assignment, write_point_map,
};
use unimatch_core::descriptors::{self, FeatureKind};
use unimatch_core::error::Error as CoreError;
use unimatch_core::eval::{
    geodesic_error, make_partial, make_synthetic_collection, pck, read_ground_truth_file,
    write_ground_truth_file, GroundTruth, PartialKind,
};
use unimatch_core::losses::MatchMode;
use unimatch_core::mesh::{io as mesh_io, TriangleMesh};
use unimatch_core::model_train::{
    fine_tune, infer_assignment, load_checkpoint, resume_with, save_checkpoint, train_with, Adam,
    Nets, ShapeData, TrainingConfig,
};
use unimatch_core::spectral::{self, EigMethod};

/// CLI failure categories, mapped to exit codes in `main`.
#[derive(Debug)]
pub enum CliError {
    /// exit 2
    Config(String),
    /// exit 3
    Data(String),
    /// exit 4
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Dimension(_) => CliError::Config(e.to_string()),
            CoreError::Convergence(_) | CoreError::Singular(_) | CoreError::NonFiniteGradient(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Data(e.to_string())
}

pub struct Collection {
    pub ids: Vec<String>,
    pub meshes: Vec<TriangleMesh<f64>>,
    pub gt: Option<GroundTruth>,
}

/// Materializes the collection: either the deterministic synthetic generator
/// (with partial cutting in partial mode) or meshes from disk.
pub fn build_collection(cfg: &RunConfig) -> Result<Collection, CliError> {
    let mode = cfg.match_mode()?;
    if cfg.synthetic_count >= 2 {
        let col = make_synthetic_collection::<f64>(
            cfg.synth_base()?,
            cfg.synthetic_count,
            cfg.seed,
            cfg.synth_params(),
        );
        let mut ids = Vec::new();
        let mut meshes = Vec::new();
        let mut to_reference = Vec::new();
        for (i, mesh) in col.shapes.into_iter().enumerate() {
            if mode == MatchMode::Partial && i > 0 {
                let kind = if cfg.partial_kind == "holes" { PartialKind::Holes } else { PartialKind::Cut };
                let (sub, kept) =
                    make_partial(&mesh, kind, cfg.partial_fraction, cfg.seed ^ (i as u64) << 17)?;
                let refs: Vec<Option<usize>> =
                    kept.iter().map(|&old| col.gt.to_reference[i][old]).collect();
                ids.push(format!("partial-{i}"));
                meshes.push(sub);
                to_reference.push(refs);
            } else {
                ids.push(format!("shape-{i}"));
                meshes.push(mesh);
                to_reference.push(col.gt.to_reference[i].clone());
            }
        }
        return Ok(Collection {
            ids,
            meshes,
            gt: Some(GroundTruth { to_reference, reference_size: col.gt.reference_size }),
        });
    }

    let mut ids = Vec::new();
    let mut meshes = Vec::new();
    for p in &cfg.mesh_paths {
        let path = PathBuf::from(p);
        let mesh = mesh_io::load_mesh_auto::<f64>(&path)?;
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("shape")
            .to_string();
        ids.push(id);
        meshes.push(mesh);
    }
    let gt = if cfg.gt_paths.is_empty() {
        None
    } else {
        if cfg.gt_paths.len() != meshes.len() {
            return Err(CliError::Config(format!(
                "{} gt_paths for {} meshes",
                cfg.gt_paths.len(),
                meshes.len()
            )));
        }
        // reference size: the largest referenced index across all files
        let mut raw = Vec::new();
        for p in &cfg.gt_paths {
            let f = std::fs::File::open(p).map_err(io_err)?;
            let mut r = std::io::BufReader::new(f);
            raw.push(read_ground_truth_file(&mut r, cfg.index_base, usize::MAX)?);
        }
        let reference_size = raw
            .iter()
            .flat_map(|v| v.iter().flatten())
            .max()
            .map_or(0, |m| m + 1);
        for (v, mesh) in raw.iter().zip(&meshes) {
            if v.len() != mesh.n() {
                return Err(CliError::Data(format!(
                    "ground-truth length {} does not match mesh with {} vertices",
                    v.len(),
                    mesh.n()
                )));
            }
        }
        Some(GroundTruth { to_reference: raw, reference_size })
    };
    Ok(Collection { ids, meshes, gt })
}

fn cache_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("cache")
}

/// Builds per-shape pipeline inputs, reading/writing caches.
/// Returns the shapes and how many cache entries were hits.
pub fn build_shapes(
    cfg: &RunConfig,
    tcfg: &TrainingConfig<f64>,
    col: &Collection,
    log: bool,
) -> Result<(Vec<ShapeData<f64>>, usize), CliError> {
    let dir = cache_dir(cfg);
    std::fs::create_dir_all(&dir).map_err(io_err)?;
    let mut shapes = Vec::new();
    let mut hits = 0usize;
    for (id, mesh) in col.ids.iter().zip(&col.meshes) {
        let hash = mesh.content_hash();
        let (basis, basis_hit) = spectral::load_or_compute(&dir, mesh, tcfg.k, EigMethod::Auto)?;

        let kind = FeatureKind::Shot { radius_frac: tcfg.shot_radius_frac };
        let feat_path = descriptors::cache_path(&dir, &hash, &kind);
        let (shot_field, shot_hit) = if feat_path.exists() {
            match descriptors::load_features::<f64>(&feat_path, &hash, &kind) {
                Ok(f) => (f, true),
                Err(_) => {
                    let f = descriptors::shot(mesh, tcfg.shot_radius_frac)?;
                    descriptors::save_features(&f, &hash, &feat_path)?;
                    (f, false)
                }
            }
        } else {
            let f = descriptors::shot(mesh, tcfg.shot_radius_frac)?;
            descriptors::save_features(&f, &hash, &feat_path)?;
            (f, false)
        };

        if basis_hit && shot_hit {
            hits += 1;
            if log {
                println!("shape {id}: cached");
            }
        } else if log {
            println!("shape {id}: computed spectral+descriptor caches");
        }
        shapes.push(ShapeData::prepare(
            id.clone(),
            mesh.clone(),
            basis,
            &shot_field,
            tcfg.spectral_coords,
        )?);
    }
    Ok((shapes, hits))
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.synthetic_count < 2 {
        return Err(CliError::Config("synth needs synthetic_count >= 2".into()));
    }
    let col = build_collection(cfg)?;
    cfg.write_resolved()?;
    let data = cfg.out_dir().join("data");
    std::fs::create_dir_all(&data).map_err(io_err)?;
    for (id, mesh) in col.ids.iter().zip(&col.meshes) {
        mesh_io::write_ply_ascii(mesh, &data.join(format!("{id}.ply")))?;
    }
    if let Some(gt) = &col.gt {
        for (id, refs) in col.ids.iter().zip(&gt.to_reference) {
            let mut f =
                std::fs::File::create(data.join(format!("{id}.gt"))).map_err(io_err)?;
            write_ground_truth_file(refs, &mut f)?;
        }
    }
    println!(
        "wrote {} shapes (and ground truth) under {}",
        col.ids.len(),
        data.display()
    );
    Ok(())
}

pub fn cmd_preprocess(cfg: &RunConfig) -> Result<(), CliError> {
    let tcfg = cfg.training()?;
    let col = build_collection(cfg)?;
    cfg.write_resolved()?;
    let (shapes, hits) = build_shapes(cfg, &tcfg, &col, true)?;
    println!(
        "preprocessed {} shapes ({} fully cached) into {}",
        shapes.len(),
        hits,
        cache_dir(cfg).display()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<(), CliError> {
    let tcfg = cfg.training()?;
    let col = build_collection(cfg)?;
    cfg.write_resolved()?;
    let (shapes, _) = build_shapes(cfg, &tcfg, &col, false)?;

    let out = cfg.out_dir();
    std::fs::create_dir_all(&out).map_err(io_err)?;
    let log_path = out.join("train.log");
    let mut log_file = std::io::BufWriter::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err)?,
    );

    let every = tcfg.checkpoint_every.max(1);
    let ckpt_cfg = tcfg.clone();
    let hook = |iter: usize,
                nets: &Nets<f64>,
                adam: &Adam<f64>,
                rec: &unimatch_core::model_train::IterRecord<f64>| {
        let _ = writeln!(log_file, "{}", rec.to_kv_line());
        if (iter + 1) % every == 0 {
            let _ = save_checkpoint(
                nets,
                adam,
                &ckpt_cfg,
                iter + 1,
                &out.join(format!("checkpoint-{:06}.ckpt", iter + 1)),
            );
        }
    };

    let outcome = match resume {
        None => train_with(&shapes, &tcfg, hook)?,
        Some(path) => {
            let ck = load_checkpoint::<f64>(path)?;
            if ck.config != tcfg {
                return Err(CliError::Config(
                    "checkpoint configuration differs from the run configuration".into(),
                ));
            }
            println!("resuming from iteration {}", ck.iteration);
            resume_with(&shapes, &tcfg, ck.nets, ck.adam, ck.iteration, hook)?
        }
    };

    if let Some(at) = outcome.aborted_at {
        // the returned nets are the last good snapshot
        save_checkpoint(&outcome.nets, &outcome.adam, &tcfg, at, &out.join("checkpoint-final.ckpt"))?;
        return Err(CliError::Numerical(format!(
            "training aborted at iteration {at} on a non-finite gradient; last good checkpoint written"
        )));
    }

    let final_path = out.join("checkpoint-final.ckpt");
    save_checkpoint(&outcome.nets, &outcome.adam, &tcfg, tcfg.total_iters, &final_path)?;
    let last = outcome.log.last().map(|r| r.total).unwrap_or(f64::NAN);
    println!(
        "trained {} iterations; final total loss {last:.6e}; checkpoint {}",
        outcome.log.len(),
        final_path.display()
    );
    Ok(())
}

pub fn cmd_match(
    cfg: &RunConfig,
    checkpoint: &Path,
    fine_tune_pairs: bool,
) -> Result<(), CliError> {
    let ck = load_checkpoint::<f64>(checkpoint)?;
    let tcfg = ck.config.clone();
    let col = build_collection(cfg)?;
    cfg.write_resolved()?;
    let (shapes, _) = build_shapes(cfg, &tcfg, &col, false)?;
    let d = ck.nets.universe_size();
    if shapes.iter().any(|s| s.n() > d) {
        return Err(CliError::Config(format!(
            "checkpoint universe ({d} classes) is smaller than a shape in the collection"
        )));
    }

    let out = cfg.out_dir().join("match");
    std::fs::create_dir_all(&out).map_err(io_err)?;

    // per-shape universe assignments from the base networks
    let mut assignments = Vec::new();
    for s in &shapes {
        let a = infer_assignment(s, &ck.nets, &tcfg)?;
        let mut f = std::fs::File::create(out.join(format!("assign-{}.txt", s.id))).map_err(io_err)?;
        write_assignment(&a, &s.id, &mut f)?;
        assignments.push(a);
    }

    // all ordered pairwise maps by composition
    let mut maps = HashMap::new();
    for i in 0..shapes.len() {
        for j in 0..shapes.len() {
            if i == j {
                continue;
            }
            let map = compose_pairwise(&assignments[i], &assignments[j])?;
            let mut f = std::fs::File::create(out.join(format!("map-{i}-{j}.txt"))).map_err(io_err)?;
            write_point_map(&map, &shapes[i].id, &shapes[j].id, d, &mut f)?;
            maps.insert((i, j), map);
        }
    }

    // optional per-pair fine-tuned maps, written separately: adaptation is
    // per-pair and its maps are not composed through the universe
    if fine_tune_pairs {
        for i in 0..shapes.len() {
            for j in (i + 1)..shapes.len() {
                let adapted = fine_tune(&shapes[i], &shapes[j], &ck.nets, &tcfg, cfg.fine_tune_passes)?;
                let a_i = infer_assignment(&shapes[i], &adapted, &tcfg)?;
                let a_j = infer_assignment(&shapes[j], &adapted, &tcfg)?;
                let map = compose_pairwise(&a_i, &a_j)?;
                let mut f = std::fs::File::create(out.join(format!("map-{i}-{j}-finetuned.txt")))
                    .map_err(io_err)?;
                write_point_map(&map, &shapes[i].id, &shapes[j].id, d, &mut f)?;
                let back = compose_pairwise(&a_j, &a_i)?;
                let mut f = std::fs::File::create(out.join(format!("map-{j}-{i}-finetuned.txt")))
                    .map_err(io_err)?;
                write_point_map(&back, &shapes[j].id, &shapes[i].id, d, &mut f)?;
            }
        }
    }

    let report = check_cycle_consistency(&maps);
    let mut f = std::fs::File::create(out.join("cycle-report.txt")).map_err(io_err)?;
    writeln!(
        f,
        "triplets={} violations={} dropped_through_mid={}",
        report.triplets_checked,
        report.violations.len(),
        report.dropped_through_mid
    )
    .map_err(io_err)?;
    for v in &report.violations {
        writeln!(
            f,
            "violation triplet={}-{}-{} vertex={} via={:?} direct={:?}",
            v.x, v.y, v.z, v.vertex, v.via, v.direct
        )
        .map_err(io_err)?;
    }
    drop(f);

    println!(
        "wrote {} assignments and {} pairwise maps to {} (cycle violations: {})",
        shapes.len(),
        maps.len(),
        out.display(),
        report.violations.len()
    );
    if !report.is_consistent() {
        return Err(CliError::Numerical(format!(
            "cycle consistency violated on {} triplet entries",
            report.violations.len()
        )));
    }
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, pred_dir: &Path) -> Result<(), CliError> {
    let _tcfg = cfg.training()?;
    let col = build_collection(cfg)?;
    cfg.write_resolved()?;
    let gt = col
        .gt
        .as_ref()
        .ok_or_else(|| CliError::Config("evaluation needs ground truth (gt_paths or synthetic collection)".into()))?;

    let out = cfg.out_dir();
    std::fs::create_dir_all(&out).map_err(io_err)?;
    let report_path = out.join("eval-report.txt");
    let mut report = std::io::BufWriter::new(std::fs::File::create(&report_path).map_err(io_err)?);

    let mut pooled: Vec<f64> = Vec::new();
    let mut unmatched_total = 0usize;
    let mut pairs_found = 0usize;
    for i in 0..col.meshes.len() {
        for j in 0..col.meshes.len() {
            if i == j {
                continue;
            }
            let path = pred_dir.join(format!("map-{i}-{j}.txt"));
            if !path.exists() {
                continue;
            }
            pairs_found += 1;
            let f = std::fs::File::open(&path).map_err(io_err)?;
            let mut r = std::io::BufReader::new(f);
            let map = unimatch_core::assignment::read_point_map(&mut r, col.meshes[j].n())?;
            let gt_ij = gt.pairwise(i, j);
            let rep = geodesic_error(&map, &gt_ij, &col.meshes[j])?;
            unmatched_total += rep.unmatched;
            pooled.extend_from_slice(&rep.errors);
            let line = format!(
                "pair={i}-{j} mean_geo_err={:.6} evaluated={} unmatched={} undefined={}",
                rep.mean,
                rep.errors.len(),
                rep.unmatched,
                rep.undefined
            );
            println!("{line}");
            writeln!(report, "{line}").map_err(io_err)?;
        }
    }
    if pairs_found == 0 {
        return Err(CliError::Data(format!(
            "no map-<i>-<j>.txt predictions found in {}",
            pred_dir.display()
        )));
    }
    let mean = if pooled.is_empty() { 0.0 } else { pooled.iter().sum::<f64>() / pooled.len() as f64 };
    let summary = format!(
        "pooled mean_geo_err={mean:.6} evaluated={} unmatched={unmatched_total}",
        pooled.len()
    );
    println!("{summary}");
    writeln!(report, "{summary}").map_err(io_err)?;

    let curve = pck(&pooled, &cfg.pck_thresholds)?;
    for (t, frac) in curve.thresholds.iter().zip(&curve.fractions) {
        let line = format!("pck threshold={t:.4} fraction={frac:.6}");
        println!("{line}");
        writeln!(report, "{line}").map_err(io_err)?;
    }
    println!("report written to {}", report_path.display());
    Ok(())
}

/// Exports the functional map of a trained pair, for debugging and
/// cross-implementation diffing.
pub fn cmd_export_fmap(
    cfg: &RunConfig,
    checkpoint: &Path,
    source: usize,
    target: usize,
) -> Result<(), CliError> {
    let ck = load_checkpoint::<f64>(checkpoint)?;
    let tcfg = ck.config.clone();
    let col = build_collection(cfg)?;
    let (shapes, _) = build_shapes(cfg, &tcfg, &col, false)?;
    if source >= shapes.len() || target >= shapes.len() || source == target {
        return Err(CliError::Config("invalid shape indices".into()));
    }
    let out = unimatch_core::model_train::forward_pair(&shapes[source], &shapes[target], &ck.nets, &tcfg)?;
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(io_err)?;
    let path = dir.join(format!("fmap-{source}-{target}.txt"));
    let mut f = std::fs::File::create(&path).map_err(io_err)?;
    unimatch_core::fmap::export_fmap(&out.c_xy, &mut f)?;
    println!("wrote {}", path.display());
    Ok(())
}
