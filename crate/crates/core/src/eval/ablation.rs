//! Ablation runners: the full method against its reduced variants.
//!
//! - `Full`: the complete pipeline (structural + classifier losses,
//!   classifier inference).
//! - `FeatureSimilarity`: no classifier; the soft pairwise map comes from a
//!   Sinkhorn-normalized feature-similarity kernel, trained with the same
//!   unsupervised loss.
//! - `Supervised`: same networks as `Full`, trained with cross entropy
//!   against ground-truth classes instead of the unsupervised loss.
//! - `ClassifierFree`: features trained with the structural losses only;
//!   maps converted from functional maps by nearest-neighbor search.

use super::{geodesic_error, GroundTruth};
use crate::assignment::{harden, sinkhorn, SoftAssignment};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::fmap::{fmap_to_pointmap, resolvent_mask, PointMap};
use crate::losses::{graph as lgraph, MatchMode};
use crate::model_train::{infer_match, train, Adam, Nets, ShapeData, TrainingConfig};
use crate::scalar::Real;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationVariant {
    Full,
    FeatureSimilarity,
    Supervised,
    ClassifierFree,
}

impl AblationVariant {
    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "FULL",
            AblationVariant::FeatureSimilarity => "FEATURE_SIMILARITY",
            AblationVariant::Supervised => "SUPERVISED",
            AblationVariant::ClassifierFree => "CLASSIFIER_FREE",
        }
    }
}

pub struct AblationSetup<'a, T: Real> {
    /// All shapes, training and held-out together, aligned with `gt`.
    pub shapes: &'a [ShapeData<T>],
    pub gt: &'a GroundTruth,
    /// Indices into `shapes` used for training.
    pub train: &'a [usize],
    /// Indices into `shapes` evaluated pairwise.
    pub eval: &'a [usize],
    pub config: TrainingConfig<T>,
}

#[derive(Debug, Clone)]
pub struct AblationOutcome<T> {
    pub variant: AblationVariant,
    /// Pooled mean over all evaluated vertices of all ordered eval pairs.
    pub mean_geodesic_error: T,
    pub pair_errors: Vec<((usize, usize), T)>,
    pub unmatched: usize,
    /// False for the classifier-free variant: it never produces
    /// shape-to-universe assignments.
    pub uses_assignments: bool,
    /// Feature-similarity softmax bandwidth (mean pairwise squared feature
    /// distance), recorded for the log.
    pub bandwidth: Option<f64>,
    /// (iteration, total loss) samples from training.
    pub train_log: Vec<(usize, f64)>,
}

pub fn run_ablation<T: Real>(
    variant: AblationVariant,
    setup: &AblationSetup<'_, T>,
) -> Result<AblationOutcome<T>> {
    let cfg = &setup.config;
    cfg.validate()?;
    if cfg.mode != MatchMode::Complete {
        return Err(Error::Dimension("ablations run in complete mode".into()));
    }
    let train_shapes: Vec<ShapeData<T>> =
        setup.train.iter().map(|&i| setup.shapes[i].clone()).collect();

    match variant {
        AblationVariant::Full => {
            let outcome = train(&train_shapes, cfg)?;
            let log = sample_log(outcome.log.iter().map(|r| (r.iter, r.total.as_f64())));
            let nets = outcome.nets;
            evaluate(variant, setup, true, None, log, |x, y| {
                infer_match(x, y, &nets, cfg).map(|(m, _, _)| m)
            })
        }
        AblationVariant::Supervised => {
            let (nets, log) = train_supervised(&train_shapes, setup, cfg)?;
            evaluate(variant, setup, true, None, log, |x, y| {
                infer_match(x, y, &nets, cfg).map(|(m, _, _)| m)
            })
        }
        AblationVariant::ClassifierFree => {
            let (nets, log) = train_feature_only(&train_shapes, cfg, FeatureLoss::Structural)?;
            evaluate(variant, setup, false, None, log, |x, y| {
                // optimized functional maps converted by nearest neighbor
                let (c_yx, _) = solve_pair_maps(x, y, &nets, cfg)?;
                fmap_to_pointmap(&c_yx, &y.basis, &x.basis)
            })
        }
        AblationVariant::FeatureSimilarity => {
            let (nets, log) = train_feature_only(&train_shapes, cfg, FeatureLoss::Similarity)?;
            let mut bandwidths = Vec::new();
            let out = evaluate(variant, setup, false, None, log, |x, y| {
                let f_x = nets.feature.forward_plain(&x.input);
                let f_y = nets.feature.forward_plain(&y.input);
                let (soft, bw) = similarity_soft_map(&f_x, &f_y, cfg.sinkhorn_iters)?;
                bandwidths.push(bw);
                let hard = harden(&soft);
                Ok(PointMap { pairs: hard.classes.iter().map(|&c| Some(c)).collect(), n_target: y.n() })
            })?;
            let mean_bw = bandwidths.iter().sum::<f64>() / bandwidths.len().max(1) as f64;
            Ok(AblationOutcome { bandwidth: Some(mean_bw), ..out })
        }
    }
}

fn sample_log(iter: impl Iterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    iter.collect()
}

fn evaluate<T: Real>(
    variant: AblationVariant,
    setup: &AblationSetup<'_, T>,
    uses_assignments: bool,
    bandwidth: Option<f64>,
    train_log: Vec<(usize, f64)>,
    mut map_for: impl FnMut(&ShapeData<T>, &ShapeData<T>) -> Result<PointMap>,
) -> Result<AblationOutcome<T>> {
    let mut pair_errors = Vec::new();
    let mut pooled_sum = T::zero();
    let mut pooled_count = 0usize;
    let mut unmatched = 0usize;
    for &xi in setup.eval {
        for &yi in setup.eval {
            if xi == yi {
                continue;
            }
            let x = &setup.shapes[xi];
            let y = &setup.shapes[yi];
            let map = map_for(x, y)?;
            let gt_xy = setup.gt.pairwise(xi, yi);
            let report = geodesic_error(&map, &gt_xy, &y.mesh)?;
            pooled_sum += report.errors.iter().copied().sum::<T>();
            pooled_count += report.errors.len();
            unmatched += report.unmatched;
            pair_errors.push(((xi, yi), report.mean));
        }
    }
    let mean = if pooled_count == 0 {
        T::zero()
    } else {
        pooled_sum / T::of(pooled_count as f64)
    };
    Ok(AblationOutcome {
        variant,
        mean_geodesic_error: mean,
        pair_errors,
        unmatched,
        uses_assignments,
        bandwidth,
        train_log,
    })
}

/// Functional maps for a pair from plain feature forward passes.
fn solve_pair_maps<T: Real>(
    x: &ShapeData<T>,
    y: &ShapeData<T>,
    nets: &Nets<T>,
    cfg: &TrainingConfig<T>,
) -> Result<(Array2<T>, Array2<T>)> {
    let f_x = nets.feature.forward_plain(&x.input);
    let f_y = nets.feature.forward_plain(&y.input);
    let a_x = x.basis.project(&f_x)?;
    let a_y = y.basis.project(&f_y)?;
    let mask_yx = resolvent_mask(&y.basis.lambda, &x.basis.lambda, cfg.resolvent_gamma);
    let mask_xy = resolvent_mask(&x.basis.lambda, &y.basis.lambda, cfg.resolvent_gamma);
    let c_yx = crate::fmap::solve_fmap(&a_y, &a_x, &mask_yx, cfg.solver_lambda)?;
    let c_xy = crate::fmap::solve_fmap(&a_x, &a_y, &mask_xy, cfg.solver_lambda)?;
    Ok((c_yx.c, c_xy.c))
}

/// Soft pairwise map from feature similarity:
/// `Π_xy(i,j) ∝ exp(-‖F_x(i)-F_y(j)‖² / bandwidth)` with Sinkhorn
/// normalization; the bandwidth defaults to the mean pairwise squared
/// feature distance.
fn similarity_soft_map<T: Real>(
    f_x: &Array2<T>,
    f_y: &Array2<T>,
    iters: usize,
) -> Result<(SoftAssignment<T>, f64)> {
    let (n_x, _c) = f_x.dim();
    let n_y = f_y.nrows();
    let x_sq: Vec<T> = f_x.rows().into_iter().map(|r| r.iter().map(|x| *x * *x).sum()).collect();
    let y_sq: Vec<T> = f_y.rows().into_iter().map(|r| r.iter().map(|x| *x * *x).sum()).collect();
    let mut d = f_x.dot(&f_y.t());
    let mut mean = T::zero();
    for i in 0..n_x {
        for j in 0..n_y {
            d[(i, j)] = (x_sq[i] + y_sq[j] - T::of(2.0) * d[(i, j)]).max(T::zero());
            mean += d[(i, j)];
        }
    }
    mean /= T::of((n_x * n_y) as f64);
    if !(mean > T::zero()) {
        return Err(Error::Degenerate("all features identical, zero bandwidth".into()));
    }
    let logits = d.mapv(|x| -(x / mean));
    let soft = sinkhorn(&logits, T::one(), iters)?;
    Ok((soft, mean.as_f64()))
}

enum FeatureLoss {
    Structural,
    Similarity,
}

/// Training loop over the feature network only.
fn train_feature_only<T: Real>(
    shapes: &[ShapeData<T>],
    cfg: &TrainingConfig<T>,
    loss_kind: FeatureLoss,
) -> Result<(Nets<T>, Vec<(usize, f64)>)> {
    if shapes.len() < 2 {
        return Err(Error::Dimension("training needs at least two shapes".into()));
    }
    let d = crate::model_train::universe_size(shapes, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut nets = Nets::new(cfg.input_dim(), d, &mut rng);

    let feature_shapes: Vec<(usize, usize)> =
        feature_params(&nets).iter().map(|p| p.dim()).collect();
    let mut adam = Adam::new(&feature_shapes);
    let pairs = crate::model_train::candidate_pairs_for(shapes.len(), cfg.mode);
    let mut log = Vec::new();

    for iter in 0..cfg.total_iters {
        let (xi, yi) = crate::model_train::scheduled_pair_for(&pairs, cfg.seed, iter);
        let x = &shapes[xi];
        let y = &shapes[yi];

        let mut tape = Tape::new();
        let in_x = tape.constant(x.input.clone());
        let in_y = tape.constant(y.input.clone());
        let fvars = nets.feature.register(&mut tape);
        let f_x = nets.feature.apply(&mut tape, &fvars, in_x);
        let f_y = nets.feature.apply(&mut tape, &fvars, in_y);

        let proj_x = tape.constant(x.projector.clone());
        let proj_y = tape.constant(y.projector.clone());
        let a_x = tape.matmul(proj_x, f_x);
        let a_y = tape.matmul(proj_y, f_y);
        let mask_xy = resolvent_mask(&x.basis.lambda, &y.basis.lambda, cfg.resolvent_gamma);
        let mask_yx = resolvent_mask(&y.basis.lambda, &x.basis.lambda, cfg.resolvent_gamma);
        let c_xy = tape.solve_fmap(a_x, a_y, &mask_xy, cfg.solver_lambda)?;
        let c_yx = tape.solve_fmap(a_y, a_x, &mask_yx, cfg.solver_lambda)?;

        let bij = lgraph::bijectivity(&mut tape, c_xy, c_yx);
        let orth = lgraph::orthogonality(&mut tape, c_xy, c_yx);
        let lap = lgraph::laplacian(&mut tape, c_xy, c_yx, &x.basis.lambda, &y.basis.lambda);

        let total = match loss_kind {
            FeatureLoss::Structural => {
                // classifier term off; the cls slot is scaled by zero
                let w = crate::losses::LossWeights { lambda_cls: T::zero(), ..cfg.weights };
                lgraph::total(&mut tape, bij, orth, Some(lap), bij, &w, cfg.mode)
            }
            FeatureLoss::Similarity => {
                let detach = iter < cfg.detach_iters;
                let dmat = tape.pairwise_sqdist(f_x, f_y);
                let bw = {
                    let v = tape.value(dmat);
                    v.iter().copied().sum::<T>() / T::of(v.len() as f64)
                };
                if !(bw > T::zero()) {
                    return Err(Error::Degenerate("zero similarity bandwidth".into()));
                }
                let logits_xy = tape.scale(dmat, -bw.recip());
                let pi_xy =
                    crate::assignment::sinkhorn_graph(&mut tape, logits_xy, T::one(), cfg.sinkhorn_iters)?;
                let dmat_t = tape.transpose(dmat);
                let logits_yx = tape.scale(dmat_t, -bw.recip());
                let pi_yx =
                    crate::assignment::sinkhorn_graph(&mut tape, logits_yx, T::one(), cfg.sinkhorn_iters)?;

                let phi_x = tape.constant(x.basis.phi.clone());
                let phi_y = tape.constant(y.basis.phi.clone());
                let c_yx_cls = if detach { tape.detach(c_yx) } else { c_yx };
                let c_xy_cls = if detach { tape.detach(c_xy) } else { c_xy };
                // || phi_x C_yx - Pi_xy phi_y ||^2 and the mirror direction
                let lhs1 = tape.matmul(phi_x, c_yx_cls);
                let rhs1 = tape.matmul(pi_xy, phi_y);
                let d1 = tape.sub(lhs1, rhs1);
                let cls1 = tape.frob_sq(d1);
                let lhs2 = tape.matmul(phi_y, c_xy_cls);
                let rhs2 = tape.matmul(pi_yx, phi_x);
                let d2 = tape.sub(lhs2, rhs2);
                let cls2 = tape.frob_sq(d2);
                let csum = tape.add(cls1, cls2);
                let cls = tape.scale(csum, T::of(0.5));
                lgraph::total(&mut tape, bij, orth, Some(lap), cls, &cfg.weights, cfg.mode)
            }
        };

        let grads_all = tape.backward(total)?;
        let mut grads = Vec::with_capacity(fvars.len());
        for (i, v) in fvars.iter().enumerate() {
            let g = grads_all.of(*v, feature_shapes[i]);
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(format!("feature tensor {i}")));
            }
            grads.push(g);
        }
        adam.step(&mut feature_params_mut(&mut nets), &grads, cfg.learning_rate);
        log.push((iter, tape.scalar(total).as_f64()));
    }
    Ok((nets, log))
}

fn feature_params<T: Real>(nets: &Nets<T>) -> Vec<&Array2<T>> {
    nets.feature.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
}

fn feature_params_mut<T: Real>(nets: &mut Nets<T>) -> Vec<&mut Array2<T>> {
    nets.feature
        .layers
        .iter_mut()
        .flat_map(|l| [&mut l.w, &mut l.b])
        .collect()
}

/// Supervised baseline: plain cross entropy between predicted assignments
/// and ground-truth reference classes.
fn train_supervised<T: Real>(
    shapes: &[ShapeData<T>],
    setup: &AblationSetup<'_, T>,
    cfg: &TrainingConfig<T>,
) -> Result<(Nets<T>, Vec<(usize, f64)>)> {
    let d = setup.gt.reference_size;
    if shapes.iter().any(|s| s.n() > d) {
        return Err(Error::Dimension("reference smaller than a shape".into()));
    }
    let targets: Vec<Vec<usize>> = setup
        .train
        .iter()
        .map(|&si| {
            setup.gt.to_reference[si]
                .iter()
                .map(|r| r.ok_or_else(|| Error::Dimension("supervised training needs complete ground truth".into())))
                .collect::<Result<Vec<usize>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut nets = Nets::new(cfg.input_dim(), d, &mut rng);
    let shapes_dims: Vec<(usize, usize)> = nets.params().iter().map(|p| p.dim()).collect();
    let mut adam = Adam::new(&shapes_dims);
    let pairs = crate::model_train::candidate_pairs_for(shapes.len(), cfg.mode);
    let mut log = Vec::new();

    for iter in 0..cfg.total_iters {
        let (xi, yi) = crate::model_train::scheduled_pair_for(&pairs, cfg.seed, iter);
        let mut tape = Tape::new();
        let in_x = tape.constant(shapes[xi].input.clone());
        let in_y = tape.constant(shapes[yi].input.clone());
        let fvars = nets.feature.register(&mut tape);
        let cvars = nets.classifier.register(&mut tape);
        let f_x = nets.feature.apply(&mut tape, &fvars, in_x);
        let f_y = nets.feature.apply(&mut tape, &fvars, in_y);
        let lx = nets.classifier.apply(&mut tape, &cvars, f_x);
        let ly = nets.classifier.apply(&mut tape, &cvars, f_y);
        let p_x = crate::assignment::sinkhorn_graph(&mut tape, lx, cfg.sinkhorn_tau, cfg.sinkhorn_iters)?;
        let p_y = crate::assignment::sinkhorn_graph(&mut tape, ly, cfg.sinkhorn_tau, cfg.sinkhorn_iters)?;
        let ce_x = tape.ce_smooth(p_x, &targets[xi], T::zero())?;
        let ce_y = tape.ce_smooth(p_y, &targets[yi], T::zero())?;
        let total = tape.add(ce_x, ce_y);

        let grads_all = tape.backward(total)?;
        let mut grads = Vec::with_capacity(shapes_dims.len());
        for (i, v) in fvars.iter().chain(cvars.iter()).enumerate() {
            let g = grads_all.of(*v, shapes_dims[i]);
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(format!("tensor {i}")));
            }
            grads.push(g);
        }
        adam.step(&mut nets.params_mut(), &grads, cfg.learning_rate);
        log.push((iter, tape.scalar(total).as_f64()));
    }
    Ok((nets, log))
}
