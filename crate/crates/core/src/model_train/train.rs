//! Training loop, per-pair fine-tuning, and classifier-only inference.

use super::pipeline::{backward_pair, build_pair_graph, ShapeData};
use super::{Adam, Nets, TrainingConfig};
use crate::assignment::{compose_pairwise, harden, sinkhorn, HardAssignment};
use crate::error::{Error, Result};
use crate::fmap::PointMap;
use crate::losses::{LossParts, MatchMode};
use crate::scalar::Real;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One logged training step.
#[derive(Debug, Clone)]
pub struct IterRecord<T> {
    pub iter: usize,
    pub pair: (usize, usize),
    pub parts: LossParts<T>,
    pub total: T,
}

impl<T: Real> IterRecord<T> {
    /// Machine-parseable `key=value` log line.
    pub fn to_kv_line(&self) -> String {
        format!(
            "iter={} pair={}-{} bij={:.6e} orth={:.6e} lap={:.6e} cls={:.6e} total={:.6e}",
            self.iter,
            self.pair.0,
            self.pair.1,
            self.parts.bij.as_f64(),
            self.parts.orth.as_f64(),
            self.parts.lap.as_f64(),
            self.parts.cls.as_f64(),
            self.total.as_f64()
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub nets: Nets<T>,
    /// Final optimizer state, for exact-resume checkpoints.
    pub adam: Adam<T>,
    pub log: Vec<IterRecord<T>>,
    /// Set when training aborted on a non-finite gradient; `nets` then holds
    /// the last good snapshot.
    pub aborted_at: Option<usize>,
}

/// Universe size for a collection under a config: the explicit override, the
/// complete shape's vertex count (partial mode), or the largest vertex count.
pub fn universe_size<T: Real>(shapes: &[ShapeData<T>], cfg: &TrainingConfig<T>) -> usize {
    cfg.universe_size.unwrap_or_else(|| match cfg.mode {
        MatchMode::Partial => shapes[0].n(),
        MatchMode::Complete => shapes.iter().map(|s| s.n()).max().unwrap_or(0),
    })
}

/// Candidate training pairs. Complete mode: all unordered pairs. Partial
/// mode: the complete shape (index 0) against each partial shape.
pub fn candidate_pairs_for(n_shapes: usize, mode: MatchMode) -> Vec<(usize, usize)> {
    match mode {
        MatchMode::Complete => {
            let mut pairs = Vec::new();
            for i in 0..n_shapes {
                for j in (i + 1)..n_shapes {
                    pairs.push((i, j));
                }
            }
            pairs
        }
        MatchMode::Partial => (1..n_shapes).map(|j| (0, j)).collect(),
    }
}

/// Uniform-without-replacement pair schedule: a fresh seeded shuffle per
/// epoch, derived purely from (seed, epoch) so any iteration is reproducible
/// from the config alone.
pub fn scheduled_pair_for(pairs: &[(usize, usize)], seed: u64, iter: usize) -> (usize, usize) {
    let epoch = iter / pairs.len();
    let pos = iter % pairs.len();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(epoch as u64 + 1)));
    order.shuffle(&mut rng);
    pairs[order[pos]]
}

/// Trains fresh networks on the collection. In partial mode `shapes[0]` must
/// be the complete shape.
pub fn train<T: Real>(shapes: &[ShapeData<T>], cfg: &TrainingConfig<T>) -> Result<TrainOutcome<T>> {
    train_with(shapes, cfg, |_, _, _, _| {})
}

/// As [`train`], invoking `hook(iter, nets, adam, record)` after every step
/// (for checkpointing and log streaming).
pub fn train_with<T: Real>(
    shapes: &[ShapeData<T>],
    cfg: &TrainingConfig<T>,
    mut hook: impl FnMut(usize, &Nets<T>, &Adam<T>, &IterRecord<T>),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if shapes.len() < 2 {
        return Err(Error::Dimension("training needs at least two shapes".into()));
    }
    let d = universe_size(shapes, cfg);
    if shapes.iter().any(|s| s.n() > d) {
        return Err(Error::Dimension(format!(
            "universe size {d} smaller than the largest shape"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nets = Nets::new(cfg.input_dim(), d, &mut rng);
    let adam = Adam::new(&nets.params().iter().map(|p| p.dim()).collect::<Vec<_>>());
    run_training(shapes, cfg, nets, adam, 0, &mut hook)
}

/// Continues training from a checkpointed state.
pub fn resume_with<T: Real>(
    shapes: &[ShapeData<T>],
    cfg: &TrainingConfig<T>,
    nets: Nets<T>,
    adam: Adam<T>,
    start_iter: usize,
    mut hook: impl FnMut(usize, &Nets<T>, &Adam<T>, &IterRecord<T>),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    run_training(shapes, cfg, nets, adam, start_iter, &mut hook)
}

fn run_training<T: Real>(
    shapes: &[ShapeData<T>],
    cfg: &TrainingConfig<T>,
    mut nets: Nets<T>,
    mut adam: Adam<T>,
    start_iter: usize,
    hook: &mut impl FnMut(usize, &Nets<T>, &Adam<T>, &IterRecord<T>),
) -> Result<TrainOutcome<T>> {
    let pairs = candidate_pairs_for(shapes.len(), cfg.mode);
    if pairs.is_empty() {
        return Err(Error::Dimension("no trainable pairs in the collection".into()));
    }

    let mut log = Vec::with_capacity(cfg.total_iters.saturating_sub(start_iter));
    let mut last_good = nets.clone();

    for iter in start_iter..cfg.total_iters {
        let detach = iter < cfg.detach_iters;
        let mut batch_grads: Option<Vec<ndarray::Array2<T>>> = None;
        let mut record = IterRecord {
            iter,
            pair: (0, 0),
            parts: LossParts::default(),
            total: T::zero(),
        };

        for b in 0..cfg.batch_pairs {
            let (xi, yi) = scheduled_pair_for(&pairs, cfg.seed, iter * cfg.batch_pairs + b);
            let graph = build_pair_graph(&shapes[xi], &shapes[yi], &nets, cfg, detach)?;
            let step = match backward_pair(&graph, &nets) {
                Ok(g) => g,
                Err(Error::NonFiniteGradient(what)) => {
                    // abort, retaining the last good snapshot
                    let _ = what;
                    return Ok(TrainOutcome {
                        nets: last_good,
                        adam,
                        log,
                        aborted_at: Some(iter),
                    });
                }
                Err(e) => return Err(e),
            };
            record.pair = (xi, yi);
            record.parts = graph.parts();
            record.total = graph.total_value();
            batch_grads = Some(match batch_grads {
                None => step,
                Some(mut acc) => {
                    for (a, g) in acc.iter_mut().zip(step) {
                        *a += &g;
                    }
                    acc
                }
            });
        }

        let mut grads = batch_grads.expect("batch_pairs >= 1");
        if cfg.batch_pairs > 1 {
            let inv = T::of(1.0 / cfg.batch_pairs as f64);
            for g in &mut grads {
                g.mapv_inplace(|x| x * inv);
            }
        }
        adam.step(&mut nets.params_mut(), &grads, cfg.learning_rate);

        hook(iter, &nets, &adam, &record);
        if cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 {
            last_good = nets.clone();
        }
        log.push(record);
    }

    Ok(TrainOutcome { nets, adam, log, aborted_at: None })
}

/// Per-pair adaptation: `passes` optimizer steps on this pair only, on a
/// copy; the base networks stay untouched.
pub fn fine_tune<T: Real>(
    x: &ShapeData<T>,
    y: &ShapeData<T>,
    nets: &Nets<T>,
    cfg: &TrainingConfig<T>,
    passes: usize,
) -> Result<Nets<T>> {
    cfg.validate()?;
    let mut adapted = nets.clone();
    let mut adam = Adam::new(&adapted.params().iter().map(|p| p.dim()).collect::<Vec<_>>());
    for _ in 0..passes {
        let graph = build_pair_graph(x, y, &adapted, cfg, false)?;
        let grads = backward_pair(&graph, &adapted)?;
        adam.step(&mut adapted.params_mut(), &grads, cfg.learning_rate);
    }
    Ok(adapted)
}

/// Classifier-only inference: features, logits, Sinkhorn, greedy hardening,
/// composition through the universe. No functional map is computed on this
/// path.
pub fn infer_match<T: Real>(
    x: &ShapeData<T>,
    y: &ShapeData<T>,
    nets: &Nets<T>,
    cfg: &TrainingConfig<T>,
) -> Result<(PointMap, HardAssignment, HardAssignment)> {
    let a_x = infer_assignment(x, nets, cfg)?;
    let a_y = infer_assignment(y, nets, cfg)?;
    let map = compose_pairwise(&a_x, &a_y)?;
    Ok((map, a_x, a_y))
}

/// Shape-to-universe assignment for one shape.
pub fn infer_assignment<T: Real>(
    shape: &ShapeData<T>,
    nets: &Nets<T>,
    cfg: &TrainingConfig<T>,
) -> Result<HardAssignment> {
    let features = nets.feature.forward_plain(&shape.input);
    let logits = nets.classifier.forward_plain(&features);
    let soft = sinkhorn(&logits, cfg.sinkhorn_tau, cfg.sinkhorn_iters)?;
    Ok(harden(&soft))
}
