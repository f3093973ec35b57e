//! Handcrafted per-vertex descriptors: SHOT (the network input), plus HKS and
//! WKS as intrinsic alternates and test probes.

pub mod shot;

pub use shot::shot;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::SpectralBasis;
use ndarray::Array2;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// What generated a feature field, with its parameters (kept in f64 so cache
/// keys do not depend on the scalar type).
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Shot { radius_frac: f64 },
    Hks { times: Vec<f64> },
    Wks { energies: Vec<f64>, sigma: f64 },
    Learned,
}

impl FeatureKind {
    fn params_string(&self) -> String {
        match self {
            FeatureKind::Shot { radius_frac } => format!("shot r={radius_frac:.12e}"),
            FeatureKind::Hks { times } => {
                let ts: Vec<String> = times.iter().map(|t| format!("{t:.12e}")).collect();
                format!("hks t=[{}]", ts.join(","))
            }
            FeatureKind::Wks { energies, sigma } => {
                let es: Vec<String> = energies.iter().map(|e| format!("{e:.12e}")).collect();
                format!("wks s={sigma:.12e} e=[{}]", es.join(","))
            }
            FeatureKind::Learned => "learned".into(),
        }
    }
}

/// Per-vertex descriptor matrix (n×c).
#[derive(Debug, Clone)]
pub struct FeatureField<T> {
    pub values: Array2<T>,
    pub kind: FeatureKind,
    /// Vertices whose descriptor could not be built (row zeroed).
    pub degenerate: Vec<usize>,
}

impl<T: Real> FeatureField<T> {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Heat kernel signature: HKS(v, t) = sum_i exp(-lambda_i t) phi_i(v)^2.
pub fn hks<T: Real>(basis: &SpectralBasis<T>, times: &[T]) -> Result<FeatureField<T>> {
    if times.is_empty() {
        return Err(Error::Dimension("hks needs at least one time".into()));
    }
    if times.iter().any(|t| *t <= T::zero()) {
        return Err(Error::Dimension("hks times must be positive".into()));
    }
    let n = basis.n();
    let mut values = Array2::zeros((n, times.len()));
    for (c, &t) in times.iter().enumerate() {
        for i in 0..n {
            let mut s = T::zero();
            for j in 0..basis.k {
                let p = basis.phi[(i, j)];
                s += (-basis.lambda[j] * t).exp() * p * p;
            }
            values[(i, c)] = s;
        }
    }
    Ok(FeatureField {
        values,
        kind: FeatureKind::Hks { times: times.iter().map(|t| t.as_f64()).collect() },
        degenerate: Vec::new(),
    })
}

/// Default HKS sampling: 16 log-spaced times spanning
/// [4 ln 10 / lambda_max, 4 ln 10 / lambda_min], with lambda_min the first
/// nonzero eigenvalue.
pub fn hks_default_times<T: Real>(basis: &SpectralBasis<T>) -> Result<Vec<T>> {
    let lmax = basis.lambda[basis.k - 1];
    let floor = lmax * T::of(1e-10);
    let lmin = basis
        .lambda
        .iter()
        .copied()
        .find(|&l| l > floor)
        .ok_or_else(|| Error::Degenerate("spectrum has no nonzero eigenvalue".into()))?;
    let c = T::of(4.0) * T::of(10.0f64.ln());
    let t0 = (c / lmax).ln();
    let t1 = (c / lmin).ln();
    let count = 16;
    Ok((0..count)
        .map(|i| (t0 + (t1 - t0) * T::of(i as f64 / (count - 1) as f64)).exp())
        .collect())
}

/// Wave kernel signature with Gaussian band-pass weights in log-energy,
/// normalized per energy by the weight sum. Eigenpairs with numerically zero
/// eigenvalue carry no log-energy and are skipped.
pub fn wks<T: Real>(basis: &SpectralBasis<T>, energies: &[T], sigma: T) -> Result<FeatureField<T>> {
    if energies.is_empty() {
        return Err(Error::Dimension("wks needs at least one energy".into()));
    }
    if sigma <= T::zero() {
        return Err(Error::Dimension("wks sigma must be positive".into()));
    }
    let n = basis.n();
    let lmax = basis.lambda[basis.k - 1].max(T::min_positive_value());
    let floor = lmax * T::of(1e-10);
    let active: Vec<(T, usize)> = basis
        .lambda
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > floor)
        .map(|(j, &l)| (l.ln(), j))
        .collect();

    let mut values = Array2::zeros((n, energies.len()));
    let two_sigma2 = T::of(2.0) * sigma * sigma;
    for (c, &e) in energies.iter().enumerate() {
        let mut wsum = T::zero();
        let weights: Vec<(T, usize)> = active
            .iter()
            .map(|&(loglam, j)| {
                let d = e - loglam;
                let w = (-(d * d) / two_sigma2).exp();
                wsum += w;
                (w, j)
            })
            .collect();
        if wsum <= T::zero() {
            continue; // all eigenpairs skipped: row stays zero
        }
        for i in 0..n {
            let mut s = T::zero();
            for &(w, j) in &weights {
                let p = basis.phi[(i, j)];
                s += w * p * p;
            }
            values[(i, c)] = s / wsum;
        }
    }
    Ok(FeatureField {
        values,
        kind: FeatureKind::Wks {
            energies: energies.iter().map(|e| e.as_f64()).collect(),
            sigma: sigma.as_f64(),
        },
        degenerate: Vec::new(),
    })
}

/// Cache path keyed by mesh hash and descriptor parameters.
pub fn cache_path(dir: &Path, mesh_hash: &str, kind: &FeatureKind) -> PathBuf {
    let mut h = Sha256::new();
    h.update(kind.params_string().as_bytes());
    let digest = h.finalize();
    let key: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    dir.join(format!("{mesh_hash}-{key}.feat"))
}

pub fn save_features<T: Real>(field: &FeatureField<T>, mesh_hash: &str, path: &Path) -> Result<()> {
    let mut c = Container::new();
    c.put_str("kind", "features");
    c.put_str("mesh_hash", mesh_hash);
    c.put_str("params", &field.kind.params_string());
    c.put_matrix("values", &field.values);
    c.put_u64s("degenerate", &field.degenerate.iter().map(|&i| i as u64).collect::<Vec<_>>());
    c.save(path)
}

pub fn load_features<T: Real>(
    path: &Path,
    mesh_hash: &str,
    kind: &FeatureKind,
) -> Result<FeatureField<T>> {
    let c = Container::load(path)?;
    let p = path.display().to_string();
    if c.str(&p, "kind")? != "features" {
        return Err(Error::Container { path: p, msg: "not a feature cache".into() });
    }
    if c.str(&p, "mesh_hash")? != mesh_hash {
        return Err(Error::Container { path: p, msg: "mesh hash mismatch".into() });
    }
    if c.str(&p, "params")? != kind.params_string() {
        return Err(Error::Container { path: p, msg: "parameter mismatch".into() });
    }
    Ok(FeatureField {
        values: c.matrix(&p, "values")?,
        kind: kind.clone(),
        degenerate: c.u64s(&p, "degenerate")?.into_iter().map(|i| i as usize).collect(),
    })
}
