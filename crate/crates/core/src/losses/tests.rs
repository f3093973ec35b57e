use super::*;
use crate::autodiff::{Tape, Var};
use approx::assert_abs_diff_eq;
use ndarray::{array, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random::<f64>() * 2.0 - 1.0)
}

#[test]
fn bijectivity_hand_values() {
    let eye: Array2<f64> = Array2::eye(2);
    assert_abs_diff_eq!(loss_bijectivity(&eye, &eye).unwrap(), 0.0, epsilon = 1e-15);

    let two_eye = &eye * 2.0;
    // ||2I - I||^2 = 2 per direction, total 4
    assert_abs_diff_eq!(loss_bijectivity(&two_eye, &eye).unwrap(), 4.0, epsilon = 1e-12);
}

#[test]
fn bijectivity_zero_on_inverse_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // a well-conditioned random invertible matrix and its inverse
    let k = 4;
    let mut c = rand_mat(&mut rng, k, k);
    for i in 0..k {
        c[(i, i)] += 3.0;
    }
    // invert by Gauss-Jordan
    let mut aug = Array2::zeros((k, 2 * k));
    for i in 0..k {
        for j in 0..k {
            aug[(i, j)] = c[(i, j)];
        }
        aug[(i, k + i)] = 1.0;
    }
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&a, &b| aug[(a, col)].abs().partial_cmp(&aug[(b, col)].abs()).unwrap())
            .unwrap();
        if piv != col {
            for j in 0..2 * k {
                let tmp = aug[(col, j)];
                aug[(col, j)] = aug[(piv, j)];
                aug[(piv, j)] = tmp;
            }
        }
        let p = aug[(col, col)];
        for j in 0..2 * k {
            aug[(col, j)] /= p;
        }
        for r in 0..k {
            if r != col {
                let f = aug[(r, col)];
                for j in 0..2 * k {
                    aug[(r, j)] -= f * aug[(col, j)];
                }
            }
        }
    }
    let inv = Array2::from_shape_fn((k, k), |(i, j)| aug[(i, k + j)]);
    assert!(loss_bijectivity(&c, &inv).unwrap() < 1e-10);
}

#[test]
fn orthogonality_hand_values() {
    // rotation matrix: zero loss
    let (s, c) = (0.6f64.sin(), 0.6f64.cos());
    let rot = array![[c, -s], [s, c]];
    assert!(loss_orthogonality(&rot, &rot.t().to_owned()).unwrap() < 1e-15);

    // C = 0, k = 3: ||-I||^2 * 2 = 6
    let z = Array2::<f64>::zeros((3, 3));
    assert_abs_diff_eq!(loss_orthogonality(&z, &z).unwrap(), 6.0, epsilon = 1e-15);

    // diag(1,2) one side, I the other: (4-1)^2 = 9 plus 0
    let d = array![[1.0, 0.0], [0.0, 2.0]];
    let eye = Array2::eye(2);
    assert_abs_diff_eq!(loss_orthogonality(&d, &eye).unwrap(), 9.0, epsilon = 1e-12);
}

#[test]
fn laplacian_hand_values() {
    // commuting case
    let d = array![[0.5, 0.0], [0.0, -1.5]];
    let lam = [1.0, 3.0];
    assert_abs_diff_eq!(loss_laplacian(&d, &d, &lam, &lam).unwrap(), 0.0, epsilon = 1e-15);

    // C = I, Lx = diag(0,1), Ly = diag(0,2): (1-2)^2 per direction = 2
    let eye: Array2<f64> = Array2::eye(2);
    assert_abs_diff_eq!(
        loss_laplacian(&eye, &eye, &[0.0, 1.0], &[0.0, 2.0]).unwrap(),
        2.0,
        epsilon = 1e-12
    );
}

#[test]
fn laplacian_matches_elementwise_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let k = 6;
    let c_xy = rand_mat(&mut rng, k, k);
    let c_yx = rand_mat(&mut rng, k, k);
    let lx: Vec<f64> = (0..k).map(|i| i as f64 * 0.7).collect();
    let ly: Vec<f64> = (0..k).map(|i| i as f64 * 1.3 + 0.2).collect();
    let got = loss_laplacian(&c_xy, &c_yx, &lx, &ly).unwrap();
    let mut want = 0.0;
    for i in 0..k {
        for j in 0..k {
            want += c_xy[(i, j)].powi(2) * (lx[j] - ly[i]).powi(2);
            want += c_yx[(i, j)].powi(2) * (ly[j] - lx[i]).powi(2);
        }
    }
    assert_abs_diff_eq!(got, want, epsilon = 1e-12);
}

#[test]
fn partial_structural_hand_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = 4;
    let c_xy = rand_mat(&mut rng, k, k);
    let c_yx = rand_mat(&mut rng, k, k);

    // r = k reduces to the one-directional complete forms
    let (bij, orth) = loss_partial_structural(&c_xy, &c_yx, k).unwrap();
    let bij_full = {
        let m = c_xy.dot(&c_yx) - Array2::<f64>::eye(k);
        m.iter().map(|x| x * x).sum::<f64>()
    };
    let orth_full = {
        let m = c_xy.dot(&c_xy.t()) - Array2::<f64>::eye(k);
        m.iter().map(|x| x * x).sum::<f64>()
    };
    assert_abs_diff_eq!(bij, bij_full, epsilon = 1e-12);
    assert_abs_diff_eq!(orth, orth_full, epsilon = 1e-12);

    // rank-r truncated identity is a zero of both
    let mut ir = Array2::<f64>::zeros((3, 3));
    ir[(0, 0)] = 1.0;
    ir[(1, 1)] = 1.0;
    let (bij, orth) = loss_partial_structural(&ir, &ir, 2).unwrap();
    assert_abs_diff_eq!(bij, 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(orth, 0.0, epsilon = 1e-15);

    // r=1, k=2, C=I: ||I - diag(1,0)||^2 = 1 per term
    let eye: Array2<f64> = Array2::eye(2);
    let (bij, orth) = loss_partial_structural(&eye, &eye, 1).unwrap();
    assert_abs_diff_eq!(bij, 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(orth, 1.0, epsilon = 1e-15);
}

#[test]
fn classifier_zero_on_identity_instance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phi = rand_mat(&mut rng, 10, 4);
    let eye4: Array2<f64> = Array2::eye(4);
    let eye10: Array2<f64> = Array2::eye(10);
    let v = loss_classifier(&phi, &phi, &eye4, &eye10).unwrap();
    assert_abs_diff_eq!(v, 0.0, epsilon = 1e-18);
}

#[test]
fn classifier_zero_on_permuted_instance() {
    // permuted copy: the true permutation and the induced basis change
    // zero the loss. With phi_y = P^T phi_x and C_yx = I (same coefficients)
    // we need Pi_xy = P with Pi_xy phi_y = P P^T phi_x = phi_x.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 8;
    let phi_x = rand_mat(&mut rng, n, 3);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    // vertex i of X corresponds to vertex perm[i] of Y
    let mut pi_xy = Array2::<f64>::zeros((n, n));
    let mut phi_y = Array2::<f64>::zeros((n, 3));
    for i in 0..n {
        pi_xy[(i, perm[i])] = 1.0;
        for c in 0..3 {
            phi_y[(perm[i], c)] = phi_x[(i, c)];
        }
    }
    let eye: Array2<f64> = Array2::eye(3);
    let v = loss_classifier(&phi_x, &phi_y, &eye, &pi_xy).unwrap();
    assert!(v < 1e-8, "got {v}");
}

#[test]
fn ce_smooth_values() {
    // uniform predictions: ln d for any target
    let p = Array2::from_elem((3, 7), 1.0 / 7.0);
    for smoothing in [0.0, 0.1] {
        let v = ce_smooth(&p, &[0, 3, 6], smoothing).unwrap();
        assert_abs_diff_eq!(v, 7.0f64.ln(), epsilon = 1e-12);
    }
    // one-hot identity with zero smoothing: zero
    let mut onehot = Array2::<f64>::zeros((4, 4));
    for i in 0..4 {
        onehot[(i, i)] = 1.0;
    }
    let v = ce_smooth(&onehot, &[0, 1, 2, 3], 0.0).unwrap();
    assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
}

#[test]
fn classifier_partial_values() {
    // identity P_x (n = d), uniform P_y
    let d = 5;
    let mut p_x = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        p_x[(i, i)] = 1.0;
    }
    let p_y = Array2::from_elem((3, d), 1.0 / d as f64);
    let v = loss_classifier_partial(&p_x, &p_y, &[0, 2, 4], 0.0).unwrap();
    // first term 0, second term ln d
    assert_abs_diff_eq!(v, (d as f64).ln(), epsilon = 1e-12);

    // non-square complete assignment rejected
    let bad = Array2::from_elem((3, 5), 0.2);
    assert!(loss_classifier_partial(&bad, &p_y, &[0, 1, 2], 0.1).is_err());
}

#[test]
fn total_weighting() {
    let w: LossWeights<f64> = LossWeights::complete();
    let zero = LossParts::default();
    assert_eq!(loss_total(&zero, &w, MatchMode::Complete), 0.0);

    let ones = LossParts { bij: 1.0, orth: 1.0, lap: 1.0, cls: 1.0 };
    assert_abs_diff_eq!(loss_total(&ones, &w, MatchMode::Complete), 2.011, epsilon = 1e-12);

    // partial mode ignores the laplacian part entirely
    let wp: LossWeights<f64> = LossWeights::partial();
    let parts = LossParts { bij: 0.5, orth: 0.25, lap: 7.0, cls: 2.0 };
    assert_abs_diff_eq!(
        loss_total(&parts, &wp, MatchMode::Partial),
        0.5 + 0.25 + 2.0,
        epsilon = 1e-12
    );
}

#[test]
fn weights_validation() {
    let mut w: LossWeights<f64> = LossWeights::complete();
    assert!(w.validate().is_ok());
    w.w_lap = -1.0;
    assert!(w.validate().is_err());
    let mut w: LossWeights<f64> = LossWeights::partial();
    w.smoothing = 1.0;
    assert!(w.validate().is_err());
}

// --- tape builders agree with the plain formulas and pass FD checks ---

fn eval_graph(build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var, params: &[Array2<f64>]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let root = build(&mut tape, &vars);
    tape.scalar(root)
}

fn fd_check(build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var, params: &[Array2<f64>], tol: f64) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let root = build(&mut tape, &vars);
    let grads = tape.backward(root).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..3 {
        let dirs: Vec<Array2<f64>> = params
            .iter()
            .map(|p| Array2::from_shape_fn(p.dim(), |_| rng.random::<f64>() * 2.0 - 1.0))
            .collect();
        let h = 1e-5;
        let shifted = |sign: f64| -> Vec<Array2<f64>> {
            params.iter().zip(&dirs).map(|(p, d)| p + &(d * (sign * h))).collect()
        };
        let fd = (eval_graph(build, &shifted(1.0)) - eval_graph(build, &shifted(-1.0))) / (2.0 * h);
        let an: f64 = vars
            .iter()
            .zip(&dirs)
            .map(|(v, d)| (&grads.of(*v, d.dim()) * d).iter().sum::<f64>())
            .sum();
        let denom = fd.abs().max(an.abs()).max(1e-8);
        assert!((fd - an).abs() / denom < tol, "fd={fd} analytic={an}");
    }
}

#[test]
fn graph_losses_match_plain_and_gradients_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let k = 5;
    let c_xy = rand_mat(&mut rng, k, k);
    let c_yx = rand_mat(&mut rng, k, k);
    let lx: Vec<f64> = (0..k).map(|i| i as f64 * 0.9).collect();
    let ly: Vec<f64> = (0..k).map(|i| i as f64 * 1.2 + 0.1).collect();

    let bij_build = |tape: &mut Tape<f64>, vars: &[Var]| graph::bijectivity(tape, vars[0], vars[1]);
    assert_abs_diff_eq!(
        eval_graph(&bij_build, &[c_xy.clone(), c_yx.clone()]),
        loss_bijectivity(&c_xy, &c_yx).unwrap(),
        epsilon = 1e-12
    );
    fd_check(&bij_build, &[c_xy.clone(), c_yx.clone()], 1e-4);

    let orth_build =
        |tape: &mut Tape<f64>, vars: &[Var]| graph::orthogonality(tape, vars[0], vars[1]);
    assert_abs_diff_eq!(
        eval_graph(&orth_build, &[c_xy.clone(), c_yx.clone()]),
        loss_orthogonality(&c_xy, &c_yx).unwrap(),
        epsilon = 1e-12
    );
    fd_check(&orth_build, &[c_xy.clone(), c_yx.clone()], 1e-4);

    let lx2 = lx.clone();
    let ly2 = ly.clone();
    let lap_build = move |tape: &mut Tape<f64>, vars: &[Var]| {
        graph::laplacian(tape, vars[0], vars[1], &lx2, &ly2)
    };
    assert_abs_diff_eq!(
        eval_graph(&lap_build, &[c_xy.clone(), c_yx.clone()]),
        loss_laplacian(&c_xy, &c_yx, &lx, &ly).unwrap(),
        epsilon = 1e-12
    );
    fd_check(&lap_build, &[c_xy.clone(), c_yx.clone()], 1e-4);

    let partial_build = |tape: &mut Tape<f64>, vars: &[Var]| {
        let (bij, orth) = graph::partial_structural(tape, vars[0], vars[1], 3);
        tape.add(bij, orth)
    };
    let (pb, po) = loss_partial_structural(&c_xy, &c_yx, 3).unwrap();
    assert_abs_diff_eq!(
        eval_graph(&partial_build, &[c_xy.clone(), c_yx.clone()]),
        pb + po,
        epsilon = 1e-12
    );
    fd_check(&partial_build, &[c_xy.clone(), c_yx.clone()], 1e-4);
}

#[test]
fn graph_classifier_matches_plain_and_gradient_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n_x, n_y, d, k) = (6, 5, 8, 3);
    let phi_x = rand_mat(&mut rng, n_x, k);
    let phi_y = rand_mat(&mut rng, n_y, k);
    let c_yx = rand_mat(&mut rng, k, k);
    let p_x = rand_mat(&mut rng, n_x, d).mapv(f64::abs);
    let p_y = rand_mat(&mut rng, n_y, d).mapv(f64::abs);

    let phi_x2 = phi_x.clone();
    let phi_y2 = phi_y.clone();
    let build = move |tape: &mut Tape<f64>, vars: &[Var]| {
        let px_c = tape.constant(phi_x2.clone());
        let py_c = tape.constant(phi_y2.clone());
        graph::classifier(tape, px_c, py_c, vars[0], vars[1], vars[2])
    };
    let pi_xy = p_x.dot(&p_y.t());
    assert_abs_diff_eq!(
        eval_graph(&build, &[c_yx.clone(), p_x.clone(), p_y.clone()]),
        loss_classifier(&phi_x, &phi_y, &c_yx, &pi_xy).unwrap(),
        epsilon = 1e-10
    );
    fd_check(&build, &[c_yx, p_x, p_y], 1e-4);
}

#[test]
fn graph_total_matches_plain() {
    let mut tape = Tape::new();
    let parts = LossParts { bij: 0.3, orth: 0.7, lap: 1.3, cls: 2.1 };
    let b = tape.constant(Array2::from_elem((1, 1), parts.bij));
    let o = tape.constant(Array2::from_elem((1, 1), parts.orth));
    let l = tape.constant(Array2::from_elem((1, 1), parts.lap));
    let c = tape.constant(Array2::from_elem((1, 1), parts.cls));
    let w: LossWeights<f64> = LossWeights::complete();
    let t = graph::total(&mut tape, b, o, Some(l), c, &w, MatchMode::Complete);
    assert_abs_diff_eq!(
        tape.scalar(t),
        loss_total(&parts, &w, MatchMode::Complete),
        epsilon = 1e-15
    );

    let wp: LossWeights<f64> = LossWeights::partial();
    let t2 = graph::total(&mut tape, b, o, Some(l), c, &wp, MatchMode::Partial);
    assert_abs_diff_eq!(
        tape.scalar(t2),
        loss_total(&parts, &wp, MatchMode::Partial),
        epsilon = 1e-15
    );
}
