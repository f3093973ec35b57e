//! Versioned checkpoint files: parameter tensors, optimizer moments, the
//! full training configuration, iteration count, and the RNG seed (all
//! run randomness is a pure function of seed and iteration, which makes
//! resumes exact).

use super::nets::{Dense, Mlp, Nets};
use super::{Adam, TrainingConfig};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::losses::{LossWeights, MatchMode};
use crate::scalar::Real;
use std::path::Path;

pub struct Checkpoint<T> {
    pub nets: Nets<T>,
    pub adam: Adam<T>,
    pub config: TrainingConfig<T>,
    pub iteration: usize,
}

pub fn save_checkpoint<T: Real>(
    nets: &Nets<T>,
    adam: &Adam<T>,
    config: &TrainingConfig<T>,
    iteration: usize,
    path: &Path,
) -> Result<()> {
    let mut c = Container::new();
    c.put_str("kind", "checkpoint");
    c.put_u64("iteration", iteration as u64);
    c.put_u64("seed", config.seed);

    c.put_u64("feature_layers", nets.feature.layers.len() as u64);
    c.put_u64("classifier_layers", nets.classifier.layers.len() as u64);
    for (li, layer) in nets.feature.layers.iter().enumerate() {
        c.put_matrix(&format!("feature_w{li}"), &layer.w);
        c.put_matrix(&format!("feature_b{li}"), &layer.b);
    }
    for (li, layer) in nets.classifier.layers.iter().enumerate() {
        c.put_matrix(&format!("classifier_w{li}"), &layer.w);
        c.put_matrix(&format!("classifier_b{li}"), &layer.b);
    }
    let (m, v) = adam.moments();
    c.put_u64("adam_t", adam.step_count() as u64);
    for (i, t) in m.iter().enumerate() {
        c.put_matrix(&format!("adam_m{i}"), t);
    }
    for (i, t) in v.iter().enumerate() {
        c.put_matrix(&format!("adam_v{i}"), t);
    }

    // config scalars
    c.put_u64("mode", matches!(config.mode, MatchMode::Partial) as u64);
    c.put_u64("k", config.k as u64);
    c.put_u64("spectral_coords", config.spectral_coords as u64);
    c.put_u64("universe_size", config.universe_size.unwrap_or(0) as u64);
    c.put_u64("sinkhorn_iters", config.sinkhorn_iters as u64);
    c.put_u64("total_iters", config.total_iters as u64);
    c.put_u64("detach_iters", config.detach_iters as u64);
    c.put_u64("checkpoint_every", config.checkpoint_every as u64);
    c.put_u64("batch_pairs", config.batch_pairs as u64);
    c.put_vector(
        "config_scalars",
        &[
            config.shot_radius_frac,
            config.sinkhorn_tau,
            config.solver_lambda,
            config.resolvent_gamma,
            config.learning_rate,
            config.weights.w_bij,
            config.weights.w_orth,
            config.weights.w_lap,
            config.weights.lambda_cls,
            config.weights.smoothing,
        ],
    );
    c.save(path)
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let c = Container::load(path)?;
    let p = path.display().to_string();
    if c.str(&p, "kind")? != "checkpoint" {
        return Err(Error::Container { path: p, msg: "not a checkpoint".into() });
    }

    let load_mlp = |prefix: &str, count: usize| -> Result<Mlp<T>> {
        let mut layers = Vec::with_capacity(count);
        for li in 0..count {
            layers.push(Dense {
                w: c.matrix(&p, &format!("{prefix}_w{li}"))?,
                b: c.matrix(&p, &format!("{prefix}_b{li}"))?,
            });
        }
        Ok(Mlp { layers })
    };
    let nets = Nets {
        feature: load_mlp("feature", c.u64(&p, "feature_layers")? as usize)?,
        classifier: load_mlp("classifier", c.u64(&p, "classifier_layers")? as usize)?,
    };

    let n_params = nets.params().len();
    let mut m = Vec::with_capacity(n_params);
    let mut v = Vec::with_capacity(n_params);
    for i in 0..n_params {
        m.push(c.matrix(&p, &format!("adam_m{i}"))?);
        v.push(c.matrix(&p, &format!("adam_v{i}"))?);
    }
    let adam = Adam::restore(m, v, c.u64(&p, "adam_t")? as usize);

    let s: Vec<T> = c.vector(&p, "config_scalars")?;
    if s.len() != 10 {
        return Err(Error::Container { path: p, msg: "bad config section".into() });
    }
    let universe = c.u64(&p, "universe_size")? as usize;
    let config = TrainingConfig {
        mode: if c.u64(&p, "mode")? == 1 { MatchMode::Partial } else { MatchMode::Complete },
        k: c.u64(&p, "k")? as usize,
        spectral_coords: c.u64(&p, "spectral_coords")? as usize,
        shot_radius_frac: s[0],
        universe_size: if universe == 0 { None } else { Some(universe) },
        sinkhorn_tau: s[1],
        sinkhorn_iters: c.u64(&p, "sinkhorn_iters")? as usize,
        solver_lambda: s[2],
        resolvent_gamma: s[3],
        weights: LossWeights {
            w_bij: s[5],
            w_orth: s[6],
            w_lap: s[7],
            lambda_cls: s[8],
            smoothing: s[9],
        },
        learning_rate: s[4],
        total_iters: c.u64(&p, "total_iters")? as usize,
        detach_iters: c.u64(&p, "detach_iters")? as usize,
        checkpoint_every: c.u64(&p, "checkpoint_every")? as usize,
        batch_pairs: c.u64(&p, "batch_pairs")? as usize,
        seed: c.u64(&p, "seed")?,
    };
    let iteration = c.u64(&p, "iteration")? as usize;
    Ok(Checkpoint { nets, adam, config, iteration })
}
