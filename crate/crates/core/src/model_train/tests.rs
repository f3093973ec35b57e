use super::*;
use crate::descriptors::shot;
use crate::eval::{make_synthetic_collection, SynthBase, SynthParams};
use crate::fmap::{fmap_construction_count, reset_fmap_construction_count};
use crate::mesh::TriangleMesh;
use crate::spectral::{cotan_laplacian, eigenbasis, EigMethod};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Tiny config for unit tests: 30-vertex shapes, k = 16.
fn tiny_config(seed: u64) -> TrainingConfig<f64> {
    TrainingConfig {
        k: 16,
        total_iters: 8,
        detach_iters: 2,
        checkpoint_every: 4,
        ..TrainingConfig::complete_defaults(seed)
    }
}

fn prepare_shape(id: &str, mesh: TriangleMesh<f64>, cfg: &TrainingConfig<f64>) -> ShapeData<f64> {
    let (l, mass) = cotan_laplacian(&mesh).unwrap();
    let basis = eigenbasis(&l, &mass, cfg.k, EigMethod::Auto).unwrap();
    let field = shot(&mesh, cfg.shot_radius_frac).unwrap();
    ShapeData::prepare(id, mesh, basis, &field, cfg.spectral_coords).unwrap()
}

/// Two small near-isometric shapes with permuted vertex orders.
fn tiny_pair(cfg: &TrainingConfig<f64>) -> Vec<ShapeData<f64>> {
    let col = make_synthetic_collection::<f64>(
        SynthBase::BumpySphere,
        2,
        7,
        SynthParams { subdivisions: 1, ..Default::default() },
    );
    col.shapes
        .iter()
        .enumerate()
        .map(|(i, m)| prepare_shape(&format!("s{i}"), m.clone(), cfg))
        .collect()
}

#[test]
fn self_pair_zeroes_structural_losses() {
    let cfg = tiny_config(3);
    let shapes = tiny_pair(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nets = Nets::new(cfg.input_dim(), shapes[0].n(), &mut rng);
    let out = forward_pair(&shapes[0], &shapes[0], &nets, &cfg).unwrap();
    assert!(out.parts.bij < 1e-8, "bij {}", out.parts.bij);
    assert!(out.parts.orth < 1e-8, "orth {}", out.parts.orth);
    // identical assignments compose to the identity map
    let (map, a_x, a_y) = infer_match(&shapes[0], &shapes[0], &nets, &cfg).unwrap();
    assert_eq!(a_x, a_y);
    for (i, p) in map.pairs.iter().enumerate() {
        assert_eq!(*p, Some(i));
    }
}

#[test]
fn forward_is_bitwise_deterministic() {
    let cfg = tiny_config(11);
    let shapes = tiny_pair(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nets = Nets::new(cfg.input_dim(), shapes[0].n().max(shapes[1].n()), &mut rng);
    let a = forward_pair(&shapes[0], &shapes[1], &nets, &cfg).unwrap();
    let b = forward_pair(&shapes[0], &shapes[1], &nets, &cfg).unwrap();
    assert_eq!(a.total, b.total, "bitwise determinism");
    assert_eq!(a.parts.bij, b.parts.bij);
    assert_eq!(a.p_x.p, b.p_x.p);
}

#[test]
fn siamese_symmetry_under_pair_swap() {
    let cfg = tiny_config(13);
    let shapes = tiny_pair(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nets = Nets::new(cfg.input_dim(), shapes[0].n().max(shapes[1].n()), &mut rng);
    let xy = forward_pair(&shapes[0], &shapes[1], &nets, &cfg).unwrap();
    let yx = forward_pair(&shapes[1], &shapes[0], &nets, &cfg).unwrap();
    assert!((xy.total - yx.total).abs() <= 1e-10, "{} vs {}", xy.total, yx.total);
    assert!((xy.parts.bij - yx.parts.bij).abs() <= 1e-10);
    assert!((xy.parts.orth - yx.parts.orth).abs() <= 1e-10);
    assert!((xy.parts.lap - yx.parts.lap).abs() <= 1e-10);
    assert!((xy.parts.cls - yx.parts.cls).abs() <= 1e-10);
    // the swapped pair swaps the maps
    let d = (&xy.c_xy.c - &yx.c_yx.c).iter().map(|x| x.abs()).fold(0.0f64, f64::max);
    assert!(d <= 1e-12);
}

#[test]
fn full_pipeline_gradient_matches_finite_differences() {
    // 30-vertex pair, gradients of the end-to-end loss against central
    // differences along seeded random parameter directions
    let cfg = tiny_config(17);
    let shapes = tiny_pair(&cfg);
    let d = shapes[0].n().max(shapes[1].n());

    let eval_at = |nets: &Nets<f64>| -> f64 {
        let g = build_pair_graph(&shapes[0], &shapes[1], nets, &cfg, false).unwrap();
        g.total_value()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nets = Nets::new(cfg.input_dim(), d, &mut rng);
    let graph = build_pair_graph(&shapes[0], &shapes[1], &nets, &cfg, false).unwrap();
    let grads = backward_pair(&graph, &nets).unwrap();

    let mut dir_rng = ChaCha8Rng::seed_from_u64(999);
    for trial in 0..5 {
        let dirs: Vec<Array2<f64>> = nets
            .params()
            .iter()
            .map(|p| Array2::from_shape_fn(p.dim(), |_| dir_rng.random::<f64>() * 2.0 - 1.0))
            .collect();
        let h = 1e-5;
        let shifted = |sign: f64| -> Nets<f64> {
            let mut n2 = nets.clone();
            for (p, d) in n2.params_mut().into_iter().zip(&dirs) {
                *p += &(d * (sign * h));
            }
            n2
        };
        let fd = (eval_at(&shifted(1.0)) - eval_at(&shifted(-1.0))) / (2.0 * h);
        let an: f64 = grads.iter().zip(&dirs).map(|(g, d)| (g * d).iter().sum::<f64>()).sum();
        let denom = fd.abs().max(an.abs()).max(1e-10);
        assert!(
            (fd - an).abs() / denom < 1e-3,
            "trial {trial}: fd={fd} analytic={an}"
        );
    }
}

#[test]
fn detach_equals_manual_path_zeroing() {
    // gradient with the detach active must equal the structural-only
    // gradient plus lambda_cls times the classifier gradient taken with
    // frozen maps
    let cfg = tiny_config(19);
    let shapes = tiny_pair(&cfg);
    let d = shapes[0].n().max(shapes[1].n());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nets = Nets::new(cfg.input_dim(), d, &mut rng);

    let graph_detached = build_pair_graph(&shapes[0], &shapes[1], &nets, &cfg, true).unwrap();
    let g_detached = backward_pair(&graph_detached, &nets).unwrap();

    let mut cfg_structural = cfg.clone();
    cfg_structural.weights.lambda_cls = 0.0;
    let graph_structural =
        build_pair_graph(&shapes[0], &shapes[1], &nets, &cfg_structural, true).unwrap();
    let g_structural = backward_pair(&graph_structural, &nets).unwrap();

    let mut cfg_cls_only = cfg.clone();
    cfg_cls_only.weights.w_bij = 0.0;
    cfg_cls_only.weights.w_orth = 0.0;
    cfg_cls_only.weights.w_lap = 0.0;
    let graph_cls = build_pair_graph(&shapes[0], &shapes[1], &nets, &cfg_cls_only, true).unwrap();
    let g_cls = backward_pair(&graph_cls, &nets).unwrap();

    for ((gd, gs), gc) in g_detached.iter().zip(&g_structural).zip(&g_cls) {
        let recomposed = gs + gc;
        let diff = (gd - &recomposed).iter().map(|x| x.abs()).fold(0.0f64, f64::max);
        assert!(diff < 1e-10, "detach decomposition broke: {diff}");
    }
}

#[test]
fn zero_weights_give_zero_gradients() {
    let mut cfg = tiny_config(23);
    cfg.weights.w_bij = 0.0;
    cfg.weights.w_orth = 0.0;
    cfg.weights.w_lap = 0.0;
    cfg.weights.lambda_cls = 0.0;
    let shapes = tiny_pair(&cfg);
    let d = shapes[0].n().max(shapes[1].n());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nets = Nets::new(cfg.input_dim(), d, &mut rng);
    let graph = build_pair_graph(&shapes[0], &shapes[1], &nets, &cfg, false).unwrap();
    let grads = backward_pair(&graph, &nets).unwrap();
    for g in grads {
        assert!(g.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn training_runs_and_single_pair_equals_fine_tuning() {
    let cfg = tiny_config(29);
    let shapes = tiny_pair(&cfg);
    let out = train(&shapes, &cfg).unwrap();
    assert!(out.aborted_at.is_none());
    assert_eq!(out.log.len(), cfg.total_iters);
    for rec in &out.log {
        assert!(rec.total.is_finite());
        assert_eq!(rec.pair, (0, 1), "single pair collection always samples it");
    }
    // degenerate sampling: training on one pair is repeated fine-tuning,
    // except for the detach schedule; align it
    let mut cfg2 = cfg.clone();
    cfg2.detach_iters = 0;
    let trained = train(&shapes, &cfg2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg2.seed);
    let fresh = Nets::new(cfg2.input_dim(), shapes[0].n().max(shapes[1].n()), &mut rng);
    let tuned = fine_tune(&shapes[0], &shapes[1], &fresh, &cfg2, cfg2.total_iters).unwrap();
    for (a, b) in trained.nets.params().iter().zip(tuned.params().iter()) {
        let diff = (*a - *b).iter().map(|x| x.abs()).fold(0.0f64, f64::max);
        assert!(diff < 1e-12, "trajectories diverged: {diff}");
    }
}

#[test]
fn training_is_deterministic_across_runs() {
    let cfg = tiny_config(31);
    let shapes = tiny_pair(&cfg);
    let a = train(&shapes, &cfg).unwrap();
    let b = train(&shapes, &cfg).unwrap();
    for (ra, rb) in a.log.iter().zip(&b.log) {
        assert_eq!(ra.total, rb.total, "iteration {}", ra.iter);
    }
    for (pa, pb) in a.nets.params().iter().zip(b.nets.params().iter()) {
        assert_eq!(pa, pb);
    }
}

#[test]
fn fine_tune_zero_passes_is_identity() {
    let cfg = tiny_config(37);
    let shapes = tiny_pair(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nets = Nets::new(cfg.input_dim(), shapes[0].n().max(shapes[1].n()), &mut rng);
    let tuned = fine_tune(&shapes[0], &shapes[1], &nets, &cfg, 0).unwrap();
    assert_eq!(tuned, nets);
}

#[test]
fn fine_tune_reduces_pair_loss() {
    let cfg = tiny_config(41);
    let shapes = tiny_pair(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nets = Nets::new(cfg.input_dim(), shapes[0].n().max(shapes[1].n()), &mut rng);
    let before = forward_pair(&shapes[0], &shapes[1], &nets, &cfg).unwrap().total;
    let tuned = fine_tune(&shapes[0], &shapes[1], &nets, &cfg, 5).unwrap();
    let after = forward_pair(&shapes[0], &shapes[1], &tuned, &cfg).unwrap().total;
    assert!(after <= before, "fine-tuning increased the loss: {before} -> {after}");
}

#[test]
fn inference_constructs_no_functional_maps() {
    let cfg = tiny_config(43);
    let shapes = tiny_pair(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nets = Nets::new(cfg.input_dim(), shapes[0].n().max(shapes[1].n()), &mut rng);
    reset_fmap_construction_count();
    let _ = infer_match(&shapes[0], &shapes[1], &nets, &cfg).unwrap();
    assert_eq!(fmap_construction_count(), 0);
    // training does construct them
    let _ = forward_pair(&shapes[0], &shapes[1], &nets, &cfg).unwrap();
    assert!(fmap_construction_count() > 0);
}

#[test]
fn pairwise_inference_is_cycle_consistent() {
    let cfg = tiny_config(47);
    let col = make_synthetic_collection::<f64>(
        SynthBase::BumpySphere,
        3,
        51,
        SynthParams { subdivisions: 1, ..Default::default() },
    );
    let shapes: Vec<ShapeData<f64>> = col
        .shapes
        .iter()
        .enumerate()
        .map(|(i, m)| prepare_shape(&format!("s{i}"), m.clone(), &cfg))
        .collect();
    let d = shapes.iter().map(|s| s.n()).max().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nets = Nets::new(cfg.input_dim(), d, &mut rng);
    let mut maps = HashMap::new();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                let (m, _, _) = infer_match(&shapes[i], &shapes[j], &nets, &cfg).unwrap();
                maps.insert((i, j), m);
            }
        }
    }
    let report = crate::assignment::check_cycle_consistency(&maps);
    assert!(report.is_consistent(), "{} violations", report.violations.len());
}

#[test]
fn checkpoint_roundtrip_and_exact_resume() {
    let cfg = tiny_config(53);
    let shapes = tiny_pair(&cfg);

    // full run in one go
    let full = train(&shapes, &cfg).unwrap();

    // rebuild the first half manually to capture the optimizer state
    let (nets_half, adam_half) = {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut nets = Nets::new(cfg.input_dim(), shapes[0].n().max(shapes[1].n()), &mut rng);
        let mut adam = Adam::new(&nets.params().iter().map(|p| p.dim()).collect::<Vec<_>>());
        for iter in 0..4 {
            let detach = iter < cfg.detach_iters;
            let graph = build_pair_graph(&shapes[0], &shapes[1], &nets, &cfg, detach).unwrap();
            let grads = backward_pair(&graph, &nets).unwrap();
            adam.step(&mut nets.params_mut(), &grads, cfg.learning_rate);
        }
        (nets, adam)
    };

    let dir = std::env::temp_dir().join(format!("unimatch-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("test.ckpt");
    save_checkpoint(&nets_half, &adam_half, &cfg, 4, &path).unwrap();
    let ck: Checkpoint<f64> = load_checkpoint(&path).unwrap();
    assert_eq!(ck.iteration, 4);
    assert_eq!(ck.config, cfg);
    assert_eq!(ck.nets, nets_half);

    let resumed = resume_with(&shapes, &cfg, ck.nets, ck.adam, ck.iteration, |_, _, _, _| {}).unwrap();
    for (a, b) in full.nets.params().iter().zip(resumed.nets.params().iter()) {
        let diff = (*a - *b).iter().map(|x| x.abs()).fold(0.0f64, f64::max);
        assert!(diff < 1e-14, "resume diverged: {diff}");
    }
}

#[test]
fn partial_mode_trains_with_complete_first() {
    let mut cfg = TrainingConfig::<f64>::partial_defaults(61);
    cfg.k = 12;
    cfg.spectral_coords = 8;
    cfg.total_iters = 4;
    cfg.detach_iters = 0;
    cfg.checkpoint_every = 2;

    let col = make_synthetic_collection::<f64>(
        SynthBase::BumpySphere,
        2,
        62,
        SynthParams { subdivisions: 1, ..Default::default() },
    );
    let complete = prepare_shape("complete", col.shapes[0].clone(), &cfg);
    let (part_mesh, _kept) =
        crate::eval::make_partial(&col.shapes[1], crate::eval::PartialKind::Cut, 0.35, 63).unwrap();
    let partial = prepare_shape("partial", part_mesh, &cfg);
    let shapes = vec![complete, partial];

    let out = train(&shapes, &cfg).unwrap();
    assert!(out.aborted_at.is_none());
    for rec in &out.log {
        assert!(rec.total.is_finite());
        assert!(rec.parts.lap == 0.0, "partial mode carries no laplacian term");
    }
}

#[test]
fn config_validation_rejects_bad_values() {
    let mut cfg = TrainingConfig::<f64>::complete_defaults(1);
    cfg.detach_iters = cfg.total_iters + 1;
    assert!(cfg.validate().is_err());

    let mut cfg = TrainingConfig::<f64>::complete_defaults(1);
    cfg.learning_rate = 0.0;
    assert!(cfg.validate().is_err());

    let mut cfg = TrainingConfig::<f64>::complete_defaults(1);
    cfg.spectral_coords = cfg.k + 1;
    assert!(cfg.validate().is_err());
}
