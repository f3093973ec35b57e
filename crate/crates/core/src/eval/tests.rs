use super::*;
use crate::mesh::primitives::icosphere;
use approx::assert_abs_diff_eq;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn ground_truth_pairwise_composition() {
    // shape 0: vertex v -> ref v+1 mod 3; shape 1: identity
    let gt = GroundTruth {
        to_reference: vec![
            vec![Some(1), Some(2), Some(0)],
            vec![Some(0), Some(1), Some(2)],
        ],
        reference_size: 3,
    };
    assert_eq!(gt.pairwise(0, 1), vec![Some(1), Some(2), Some(0)]);
    assert_eq!(gt.pairwise(1, 0), vec![Some(2), Some(0), Some(1)]);
}

#[test]
fn gt_file_roundtrip_and_index_base() {
    let gt = vec![Some(4), None, Some(0)];
    let mut buf = Vec::new();
    write_ground_truth_file(&gt, &mut buf).unwrap();
    let back = read_ground_truth_file(&mut buf.as_slice(), 0, 5).unwrap();
    assert_eq!(back, gt);

    // 1-based file: "1" means index 0
    let one_based = b"1\n5\n-1\n".to_vec();
    let back = read_ground_truth_file(&mut one_based.as_slice(), 1, 5).unwrap();
    assert_eq!(back, vec![Some(0), Some(4), None]);

    let out_of_range = b"9\n".to_vec();
    assert!(read_ground_truth_file(&mut out_of_range.as_slice(), 0, 5).is_err());
}

#[test]
fn geodesic_error_zero_on_exact_prediction() {
    let m = icosphere::<f64>(1);
    let gt: Vec<Option<usize>> = (0..m.n()).map(Some).collect();
    let pred = PointMap { pairs: gt.clone(), n_target: m.n() };
    let rep = geodesic_error(&pred, &gt, &m).unwrap();
    assert_eq!(rep.mean, 0.0);
    assert_eq!(rep.unmatched, 0);
    assert_eq!(rep.undefined, 0);
    assert_eq!(rep.errors.len(), m.n());
}

#[test]
fn geodesic_error_single_edge_offset() {
    let m = icosphere::<f64>(1);
    let area = m.total_area().unwrap();
    // predict vertex 0's match as one of its neighbors, rest exact
    let neighbor = m.adjacency()[0][0].0;
    let edge_len = crate::mesh::dist(m.vertex(0), m.vertex(neighbor));
    let mut pairs: Vec<Option<usize>> = (0..m.n()).map(Some).collect();
    pairs[0] = Some(neighbor);
    let pred = PointMap { pairs, n_target: m.n() };
    let gt: Vec<Option<usize>> = (0..m.n()).map(Some).collect();
    let rep = geodesic_error(&pred, &gt, &m).unwrap();
    let expected_vertex_error = edge_len / area.sqrt();
    assert_abs_diff_eq!(rep.errors[0], expected_vertex_error, epsilon = 1e-12);
    assert_abs_diff_eq!(rep.mean, expected_vertex_error / m.n() as f64, epsilon = 1e-12);
}

#[test]
fn geodesic_error_counts_unmatched_separately() {
    let m = icosphere::<f64>(1);
    let mut pairs: Vec<Option<usize>> = (0..m.n()).map(Some).collect();
    pairs[3] = None;
    pairs[7] = None;
    let mut gt: Vec<Option<usize>> = (0..m.n()).map(Some).collect();
    gt[9] = None;
    let pred = PointMap { pairs, n_target: m.n() };
    let rep = geodesic_error(&pred, &gt, &m).unwrap();
    assert_eq!(rep.unmatched, 2);
    assert_eq!(rep.undefined, 1);
    assert_eq!(rep.errors.len(), m.n() - 3);
    assert_eq!(rep.mean, 0.0);
}

#[test]
fn random_prediction_matches_monte_carlo_mean() {
    // a uniformly random prediction has expected error equal to the mean
    // pairwise normalized distance
    let m = icosphere::<f64>(1);
    let n = m.n();
    let fields: Vec<Vec<f64>> = (0..n)
        .map(|s| m.geodesic_distances(s).unwrap().distances)
        .collect();
    let mut exact_mean = 0.0;
    for i in 0..n {
        for j in 0..n {
            exact_mean += fields[i][j];
        }
    }
    exact_mean /= (n * n) as f64;

    let gt: Vec<Option<usize>> = (0..n).map(Some).collect();
    let mut avg = 0.0;
    let seeds = 20;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<Option<usize>> = (0..n).map(|_| Some(rng.random_range(0..n))).collect();
        let pred = PointMap { pairs, n_target: n };
        avg += geodesic_error(&pred, &gt, &m).unwrap().mean;
    }
    avg /= seeds as f64;
    let rel = (avg - exact_mean).abs() / exact_mean;
    assert!(rel < 0.10, "random-prediction mean {avg} vs exact {exact_mean}");
}

#[test]
fn pck_examples() {
    // all-zero errors: fraction 1 everywhere
    let curve = pck(&[0.0, 0.0, 0.0], &[0.05, 0.1]).unwrap();
    assert_eq!(curve.fractions, vec![1.0, 1.0]);

    // threshold 0 with positive errors: fraction 0
    let curve = pck(&[0.2, 0.4], &[0.0]).unwrap();
    assert_eq!(curve.fractions, vec![0.0]);

    // hand-counted list
    let curve = pck(&[0.01, 0.05, 0.2], &[0.05, 0.1]).unwrap();
    assert_abs_diff_eq!(curve.fractions[0], 2.0 / 3.0, epsilon = 1e-15);
    assert_abs_diff_eq!(curve.fractions[1], 2.0 / 3.0, epsilon = 1e-15);

    // PCK is the empirical CDF: nondecreasing, and exact on a grid
    let errs = [0.03, 0.07, 0.11, 0.02];
    let ths = [0.025, 0.05, 0.075, 0.15];
    let curve = pck(&errs, &ths).unwrap();
    for w in curve.fractions.windows(2) {
        assert!(w[0] <= w[1]);
    }
    for (t, f) in ths.iter().zip(&curve.fractions) {
        let count = errs.iter().filter(|&&e| e <= *t).count();
        assert_abs_diff_eq!(*f, count as f64 / errs.len() as f64, epsilon = 1e-15);
    }

    assert!(pck(&[0.1], &[0.2, 0.1]).is_err(), "thresholds must increase");
}

#[test]
fn synthetic_zero_amplitude_is_permuted_copy() {
    let params = SynthParams { subdivisions: 1, displacement: 0.0, bend: 0.0 };
    let col = make_synthetic_collection::<f64>(SynthBase::BumpySphere, 2, 5, params);
    assert_eq!(col.shapes.len(), 2);
    // identity matching is achievable exactly: corresponding vertices are
    // bitwise equal positions
    let gt01 = col.gt.pairwise(0, 1);
    for (i, j) in gt01.iter().enumerate() {
        let j = j.unwrap();
        for d in 0..3 {
            assert_eq!(col.shapes[0].vertex(i)[d], col.shapes[1].vertex(j)[d]);
        }
    }
}

#[test]
fn synthetic_default_distortion_below_ten_percent() {
    let col = make_synthetic_collection::<f64>(SynthBase::BumpySphere, 4, 11, SynthParams::default());
    let base = synth::base_mesh::<f64>(SynthBase::BumpySphere, 3);
    let base_edges = base.edges();
    for (s, mesh) in col.shapes.iter().enumerate() {
        // measure per-edge length change against the base through the
        // recorded correspondence
        let to_ref = &col.gt.to_reference[s];
        let mut shape_vertex_of_ref = vec![0usize; base.n()];
        for (v, r) in to_ref.iter().enumerate() {
            shape_vertex_of_ref[r.unwrap()] = v;
        }
        let mut worst: f64 = 0.0;
        for &(a, b, base_len) in &base_edges {
            let va = mesh.vertex(shape_vertex_of_ref[a]);
            let vb = mesh.vertex(shape_vertex_of_ref[b]);
            let len = crate::mesh::dist(va, vb);
            worst = worst.max((len - base_len).abs() / base_len);
        }
        assert!(worst <= 0.10, "shape {s}: max edge distortion {worst}");
    }
}

#[test]
fn synthetic_is_deterministic() {
    let a = make_synthetic_collection::<f64>(SynthBase::Icosphere, 3, 42, SynthParams::default());
    let b = make_synthetic_collection::<f64>(SynthBase::Icosphere, 3, 42, SynthParams::default());
    for (ma, mb) in a.shapes.iter().zip(&b.shapes) {
        assert_eq!(ma.vertices(), mb.vertices());
        assert_eq!(ma.faces(), mb.faces());
    }
    let c = make_synthetic_collection::<f64>(SynthBase::Icosphere, 3, 43, SynthParams::default());
    assert_ne!(a.shapes[0].vertices(), c.shapes[0].vertices());
}

#[test]
fn synthetic_gt_is_cycle_consistent() {
    let col = make_synthetic_collection::<f64>(SynthBase::Icosphere, 4, 13, SynthParams {
        subdivisions: 1,
        ..Default::default()
    });
    for x in 0..4 {
        for y in 0..4 {
            for z in 0..4 {
                if x == y || y == z || x == z {
                    continue;
                }
                let xy = col.gt.pairwise(x, y);
                let yz = col.gt.pairwise(y, z);
                let xz = col.gt.pairwise(x, z);
                for i in 0..xy.len() {
                    let via = xy[i].and_then(|j| yz[j]);
                    assert_eq!(via, xz[i]);
                }
            }
        }
    }
}

#[test]
fn partial_fraction_zero_is_identity() {
    let m = icosphere::<f64>(2);
    let (sub, kept) = make_partial(&m, PartialKind::Cut, 0.0, 1).unwrap();
    assert_eq!(sub.n(), m.n());
    assert_eq!(kept, (0..m.n()).collect::<Vec<_>>());
}

#[test]
fn partial_cut_hits_target_area() {
    let m = icosphere::<f64>(2);
    let total = m.total_area().unwrap();
    for seed in [3, 5, 9] {
        let (sub, kept) = make_partial(&m, PartialKind::Cut, 0.4, seed).unwrap();
        let ratio = sub.total_area().unwrap() / total;
        assert!(
            (ratio - 0.6).abs() <= 0.05,
            "seed {seed}: kept area ratio {ratio}, want 0.6 +- 0.05"
        );
        // kept labels are valid original indices, strictly increasing
        assert!(kept.windows(2).all(|w| w[0] < w[1]));
        assert!(kept.iter().all(|&i| i < m.n()));
        assert_eq!(kept.len(), sub.n());
        // geometry preserved per kept vertex
        for (new, &old) in kept.iter().enumerate() {
            assert_eq!(sub.vertex(new), m.vertex(old));
        }
    }
}

#[test]
fn partial_holes_connected_or_error() {
    let m = icosphere::<f64>(2);
    for seed in 0..6 {
        match make_partial(&m, PartialKind::Holes, 0.25, seed) {
            Ok((sub, _)) => {
                // contract: stays connected
                assert!(sub.geodesic_distances(0).is_ok(), "seed {seed} disconnected");
            }
            Err(Error::Topology(_)) => {} // the documented failure mode
            Err(e) => panic!("unexpected error: {e}"),
        }
    }
}

// --- light ablation checks; the full ordering runs in the acceptance suite ---

mod ablation_small {
    use super::*;
    use crate::descriptors::shot;
    use crate::model_train::{ShapeData, TrainingConfig};
    use crate::spectral::{cotan_laplacian, eigenbasis, EigMethod};

    fn setup_shapes(
        count: usize,
        seed: u64,
        cfg: &TrainingConfig<f64>,
    ) -> (Vec<ShapeData<f64>>, GroundTruth) {
        let col = make_synthetic_collection::<f64>(
            SynthBase::BumpySphere,
            count,
            seed,
            SynthParams { subdivisions: 1, ..Default::default() },
        );
        let shapes = col
            .shapes
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let (l, mass) = cotan_laplacian(m).unwrap();
                let basis = eigenbasis(&l, &mass, cfg.k, EigMethod::Auto).unwrap();
                let field = shot(m, cfg.shot_radius_frac).unwrap();
                ShapeData::prepare(format!("s{i}"), m.clone(), basis, &field, cfg.spectral_coords)
                    .unwrap()
            })
            .collect();
        (shapes, col.gt)
    }

    fn small_cfg(iters: usize, seed: u64) -> TrainingConfig<f64> {
        TrainingConfig {
            k: 12,
            spectral_coords: 8,
            total_iters: iters,
            detach_iters: 0,
            checkpoint_every: 0,
            ..TrainingConfig::complete_defaults(seed)
        }
    }

    #[test]
    fn supervised_cross_entropy_trends_to_zero() {
        let cfg = small_cfg(150, 71);
        let (shapes, gt) = setup_shapes(2, 72, &cfg);
        let setup = AblationSetup {
            shapes: &shapes,
            gt: &gt,
            train: &[0, 1],
            eval: &[0, 1],
            config: cfg,
        };
        let out = run_ablation(AblationVariant::Supervised, &setup).unwrap();
        let initial = out.train_log.first().unwrap().1;
        let final_ = out.train_log.last().unwrap().1;
        assert!(
            final_ < initial / 10.0,
            "cross entropy did not trend to zero: {initial} -> {final_}"
        );
        assert!(out.uses_assignments);
    }

    #[test]
    fn classifier_free_emits_no_assignments() {
        let cfg = small_cfg(3, 73);
        let (shapes, gt) = setup_shapes(2, 74, &cfg);
        let setup = AblationSetup {
            shapes: &shapes,
            gt: &gt,
            train: &[0, 1],
            eval: &[0, 1],
            config: cfg,
        };
        let out = run_ablation(AblationVariant::ClassifierFree, &setup).unwrap();
        assert!(!out.uses_assignments);
        assert!(out.mean_geodesic_error.is_finite());
    }

    #[test]
    fn feature_similarity_runs_and_logs_bandwidth() {
        let cfg = small_cfg(3, 75);
        let (shapes, gt) = setup_shapes(2, 76, &cfg);
        let setup = AblationSetup {
            shapes: &shapes,
            gt: &gt,
            train: &[0, 1],
            eval: &[0, 1],
            config: cfg,
        };
        let out = run_ablation(AblationVariant::FeatureSimilarity, &setup).unwrap();
        assert!(out.bandwidth.unwrap() > 0.0);
        assert!(!out.uses_assignments);
    }
}
