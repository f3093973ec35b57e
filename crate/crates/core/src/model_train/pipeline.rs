//! The differentiable forward pass for one shape pair and its reverse-mode
//! gradients.

use super::{Nets, TrainingConfig};
use crate::assignment::{sinkhorn_graph, SoftAssignment};
use crate::autodiff::{Grads, Tape, Var};
use crate::descriptors::FeatureField;
use crate::error::{Error, Result};
use crate::fmap::{fmap_to_pointmap, partial_rank, resolvent_mask, FunctionalMap};
use crate::losses::{graph as lgraph, LossParts, MatchMode};
use crate::mesh::TriangleMesh;
use crate::scalar::Real;
use crate::spectral::SpectralBasis;
use ndarray::Array2;

/// Everything the pipeline needs per shape, precomputed once: mesh, spectral
/// basis, and the network input (SHOT ⊕ leading spectral coordinates,
/// sign-fixed by the basis convention).
#[derive(Debug, Clone)]
pub struct ShapeData<T> {
    pub id: String,
    pub mesh: TriangleMesh<T>,
    pub basis: SpectralBasis<T>,
    pub input: Array2<T>,
    /// Φᵀ diag(M), the reduced-basis projector (k × n).
    pub projector: Array2<T>,
}

impl<T: Real> ShapeData<T> {
    pub fn prepare(
        id: impl Into<String>,
        mesh: TriangleMesh<T>,
        basis: SpectralBasis<T>,
        shot: &FeatureField<T>,
        spectral_coords: usize,
    ) -> Result<Self> {
        let n = mesh.n();
        if basis.n() != n || shot.n() != n {
            return Err(Error::Dimension(format!(
                "shape `{}`: mesh has {n} vertices, basis {} and descriptors {}",
                id.into(),
                basis.n(),
                shot.n()
            )));
        }
        let coords = basis.coordinates(spectral_coords)?;
        let mut input = Array2::zeros((n, shot.dim() + spectral_coords));
        for i in 0..n {
            for c in 0..shot.dim() {
                input[(i, c)] = shot.values[(i, c)];
            }
            for c in 0..spectral_coords {
                input[(i, shot.dim() + c)] = coords[(i, c)];
            }
        }
        let mut projector = basis.phi.t().to_owned();
        for (j, mut col) in projector.columns_mut().into_iter().enumerate() {
            let m = basis.mass[j];
            col.mapv_inplace(|x| x * m);
        }
        Ok(Self { id: String::new(), mesh, basis, input, projector }.with_id(id))
    }

    fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn n(&self) -> usize {
        self.mesh.n()
    }
}

/// Handles into the pair graph, for loss evaluation and backward.
pub struct PairGraph<T: Real> {
    pub tape: Tape<T>,
    pub feature_vars: Vec<Var>,
    pub classifier_vars: Vec<Var>,
    pub c_xy: Var,
    pub c_yx: Var,
    pub p_x: Var,
    pub p_y: Var,
    pub bij: Var,
    pub orth: Var,
    pub lap: Option<Var>,
    pub cls: Var,
    pub total: Var,
}

/// Plain-value outputs of a forward pass.
pub struct PairOutput<T> {
    pub c_xy: FunctionalMap<T>,
    pub c_yx: FunctionalMap<T>,
    pub p_x: SoftAssignment<T>,
    pub p_y: SoftAssignment<T>,
    pub parts: LossParts<T>,
    pub total: T,
}

/// Builds the full differentiable graph for a pair. In partial mode `x` must
/// be the complete shape and the universe is its vertex set.
pub fn build_pair_graph<T: Real>(
    x: &ShapeData<T>,
    y: &ShapeData<T>,
    nets: &Nets<T>,
    cfg: &TrainingConfig<T>,
    detach_cls_maps: bool,
) -> Result<PairGraph<T>> {
    let d = nets.universe_size();
    if cfg.mode == MatchMode::Partial && d != x.n() {
        return Err(Error::Dimension(format!(
            "partial mode: the complete shape plays the universe, expected d = {} got {d}",
            x.n()
        )));
    }
    if x.input.ncols() != nets.feature.input_dim() || y.input.ncols() != nets.feature.input_dim() {
        return Err(Error::Dimension("network input width mismatch".into()));
    }

    let mut tape = Tape::new();
    let in_x = tape.constant(x.input.clone());
    let in_y = tape.constant(y.input.clone());
    let feature_vars = nets.feature.register(&mut tape);
    let classifier_vars = nets.classifier.register(&mut tape);

    let f_x = nets.feature.apply(&mut tape, &feature_vars, in_x);
    let f_y = nets.feature.apply(&mut tape, &feature_vars, in_y);

    let proj_x = tape.constant(x.projector.clone());
    let proj_y = tape.constant(y.projector.clone());
    let a_x = tape.matmul(proj_x, f_x); // k × c
    let a_y = tape.matmul(proj_y, f_y);

    let mask_xy = resolvent_mask(&x.basis.lambda, &y.basis.lambda, cfg.resolvent_gamma);
    let mask_yx = resolvent_mask(&y.basis.lambda, &x.basis.lambda, cfg.resolvent_gamma);
    let c_xy = tape.solve_fmap(a_x, a_y, &mask_xy, cfg.solver_lambda)?;
    let c_yx = tape.solve_fmap(a_y, a_x, &mask_yx, cfg.solver_lambda)?;

    let logits_x = nets.classifier.apply(&mut tape, &classifier_vars, f_x);
    let logits_y = nets.classifier.apply(&mut tape, &classifier_vars, f_y);
    let p_x = sinkhorn_graph(&mut tape, logits_x, cfg.sinkhorn_tau, cfg.sinkhorn_iters)?;
    let p_y = sinkhorn_graph(&mut tape, logits_y, cfg.sinkhorn_tau, cfg.sinkhorn_iters)?;

    let (bij, orth, lap, cls) = match cfg.mode {
        MatchMode::Complete => {
            let bij = lgraph::bijectivity(&mut tape, c_xy, c_yx);
            let orth = lgraph::orthogonality(&mut tape, c_xy, c_yx);
            let lap =
                lgraph::laplacian(&mut tape, c_xy, c_yx, &x.basis.lambda, &y.basis.lambda);
            // the classifier loss is stated for one direction; both
            // directions are computed and averaged to keep the pair
            // symmetric. During the warm-up the functional-map inputs of
            // this loss are detached and train only through the assignments.
            let c_yx_cls = if detach_cls_maps { tape.detach(c_yx) } else { c_yx };
            let c_xy_cls = if detach_cls_maps { tape.detach(c_xy) } else { c_xy };
            let phi_x = tape.constant(x.basis.phi.clone());
            let phi_y = tape.constant(y.basis.phi.clone());
            let cls_xy = lgraph::classifier(&mut tape, phi_x, phi_y, c_yx_cls, p_x, p_y);
            let cls_yx = lgraph::classifier(&mut tape, phi_y, phi_x, c_xy_cls, p_y, p_x);
            let csum = tape.add(cls_xy, cls_yx);
            let cls = tape.scale(csum, T::of(0.5));
            (bij, orth, Some(lap), cls)
        }
        MatchMode::Partial => {
            let r = partial_rank(&x.basis.lambda, &y.basis.lambda);
            let (bij, orth) = lgraph::partial_structural(&mut tape, c_xy, c_yx, r);
            // pseudo-labels: nearest-neighbor conversion of the current
            // C_xy, recomputed every call, never cached
            let pm = fmap_to_pointmap(tape.value(c_xy), &x.basis, &y.basis)?;
            let pseudo: Vec<usize> = pm
                .pairs
                .iter()
                .map(|p| p.expect("nearest-neighbor conversion matches every row"))
                .collect();
            let cls =
                lgraph::classifier_partial(&mut tape, p_x, p_y, &pseudo, cfg.weights.smoothing)?;
            (bij, orth, None, cls)
        }
    };

    let total = lgraph::total(&mut tape, bij, orth, lap, cls, &cfg.weights, cfg.mode);

    Ok(PairGraph {
        tape,
        feature_vars,
        classifier_vars,
        c_xy,
        c_yx,
        p_x,
        p_y,
        bij,
        orth,
        lap,
        cls,
        total,
    })
}

impl<T: Real> PairGraph<T> {
    pub fn parts(&self) -> LossParts<T> {
        LossParts {
            bij: self.tape.scalar(self.bij),
            orth: self.tape.scalar(self.orth),
            lap: self.lap.map(|l| self.tape.scalar(l)).unwrap_or_else(T::zero),
            cls: self.tape.scalar(self.cls),
        }
    }

    pub fn total_value(&self) -> T {
        self.tape.scalar(self.total)
    }
}

/// Forward pass returning plain values.
pub fn forward_pair<T: Real>(
    x: &ShapeData<T>,
    y: &ShapeData<T>,
    nets: &Nets<T>,
    cfg: &TrainingConfig<T>,
) -> Result<PairOutput<T>> {
    let g = build_pair_graph(x, y, nets, cfg, false)?;
    let c_xy = FunctionalMap::new(
        g.tape.value(g.c_xy).clone(),
        &x.id,
        &y.id,
        cfg.solver_lambda,
        cfg.resolvent_gamma,
    );
    let c_yx = FunctionalMap::new(
        g.tape.value(g.c_yx).clone(),
        &y.id,
        &x.id,
        cfg.solver_lambda,
        cfg.resolvent_gamma,
    );
    let p_x = SoftAssignment {
        p: g.tape.value(g.p_x).clone(),
        tau: cfg.sinkhorn_tau,
        iters: cfg.sinkhorn_iters,
    };
    let p_y = SoftAssignment {
        p: g.tape.value(g.p_y).clone(),
        tau: cfg.sinkhorn_tau,
        iters: cfg.sinkhorn_iters,
    };
    Ok(PairOutput { c_xy, c_yx, p_x, p_y, parts: g.parts(), total: g.total_value() })
}

/// Reverse pass: gradients for the feature and classifier parameters, in the
/// same order as [`Nets::params`].
pub fn backward_pair<T: Real>(graph: &PairGraph<T>, nets: &Nets<T>) -> Result<Vec<Array2<T>>> {
    let grads: Grads<T> = graph.tape.backward(graph.total)?;
    let mut out = Vec::with_capacity(graph.feature_vars.len() + graph.classifier_vars.len());
    let shapes: Vec<(usize, usize)> = nets.params().iter().map(|p| p.dim()).collect();
    for (i, var) in graph
        .feature_vars
        .iter()
        .chain(graph.classifier_vars.iter())
        .enumerate()
    {
        let g = grads.of(*var, shapes[i]);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient(format!("parameter tensor {i}")));
        }
        out.push(g);
    }
    Ok(out)
}
