// temporary diagnostics; deleted before finalizing
use unimatch_core::descriptors::shot;
use unimatch_core::eval::{
    geodesic_error, make_synthetic_collection, SynthBase, SynthParams,
};
use unimatch_core::model_train::{infer_match, train, ShapeData, TrainingConfig};
use unimatch_core::spectral::{cotan_laplacian, eigenbasis, EigMethod};

fn prepare(
    count: usize,
    seed: u64,
    cfg: &TrainingConfig<f64>,
) -> (Vec<ShapeData<f64>>, unimatch_core::eval::GroundTruth) {
    let col = make_synthetic_collection::<f64>(
        SynthBase::BumpySphere,
        count,
        seed,
        SynthParams::default(),
    );
    let t0 = std::time::Instant::now();
    let shapes: Vec<ShapeData<f64>> = col
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
    println!("prep of {count} shapes: {:.1}s", t0.elapsed().as_secs_f64());
    (shapes, col.gt)
}

#[test]
#[ignore]
fn probe_training_speed_and_quality() {
    let iters: usize = std::env::var("PROBE_ITERS").ok().and_then(|v| v.parse().ok()).unwrap_or(200);
    let k: usize = std::env::var("PROBE_K").ok().and_then(|v| v.parse().ok()).unwrap_or(24);
    let mut cfg = TrainingConfig::<f64>::complete_defaults(42);
    cfg.k = k;
    cfg.total_iters = iters;
    cfg.detach_iters = iters / 5;
    cfg.checkpoint_every = 0;
    let (shapes, gt) = prepare(8, 1234, &cfg);

    let t0 = std::time::Instant::now();
    let out = train(&shapes, &cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "{} iters in {:.1}s ({:.3}s/iter)",
        iters,
        dt,
        dt / iters as f64
    );
    let window = 50.min(out.log.len());
    let avg = |range: &[unimatch_core::model_train::IterRecord<f64>]| {
        range.iter().map(|r| r.total).sum::<f64>() / range.len() as f64
    };
    let early = avg(&out.log[..window]);
    let late = avg(&out.log[out.log.len() - window..]);
    println!("loss early {early:.4e} late {late:.4e} ratio {:.3}", late / early);
    for i in (0..out.log.len()).step_by((out.log.len() / 12).max(1)) {
        let r = &out.log[i];
        println!(
            "iter {} bij {:.3e} orth {:.3e} lap {:.3e} cls {:.3e} total {:.3e}",
            r.iter, r.parts.bij, r.parts.orth, r.parts.lap, r.parts.cls, r.total
        );
    }

    // self-pair accuracy + pairwise geodesic error on the training shapes
    let t1 = std::time::Instant::now();
    let (self_map, _, _) = infer_match(&shapes[0], &shapes[0], &out.nets, &cfg).unwrap();
    let self_acc = self_map
        .pairs
        .iter()
        .enumerate()
        .filter(|(i, p)| **p == Some(*i))
        .count() as f64
        / shapes[0].n() as f64;
    println!("self-pair accuracy: {self_acc:.3}");

    let mut pooled = Vec::new();
    for (i, j) in [(0usize, 1usize), (1, 2), (2, 3), (0, 4)] {
        let (map, _, _) = infer_match(&shapes[i], &shapes[j], &out.nets, &cfg).unwrap();
        let gt_ij = gt.pairwise(i, j);
        let rep = geodesic_error(&map, &gt_ij, &shapes[j].mesh).unwrap();
        println!("pair {i}-{j}: mean geo err {:.4}", rep.mean);
        pooled.extend(rep.errors);
    }
    println!(
        "pooled mean {:.4} (eval took {:.1}s)",
        pooled.iter().sum::<f64>() / pooled.len() as f64,
        t1.elapsed().as_secs_f64()
    );
}
