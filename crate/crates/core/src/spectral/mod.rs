//! Cotangent Laplace–Beltrami operator, lumped mass matrix, and the truncated
//! eigenbasis that all functional-map computations run in.

mod lanczos;
pub mod sparse;

pub use sparse::SymSparse;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::linalg::jacobi_eigh;
use crate::mesh::TriangleMesh;
use crate::scalar::Real;
use ndarray::Array2;
use std::path::{Path, PathBuf};

/// Truncated generalized eigenbasis of the Laplace–Beltrami operator.
///
/// Columns of `phi` are mass-orthonormal (`phi^T diag(mass) phi = I`),
/// eigenvalues are nonnegative and nondecreasing, and each column's sign is
/// fixed so its entry of largest magnitude is positive.
#[derive(Debug, Clone)]
pub struct SpectralBasis<T> {
    pub k: usize,
    /// n×k eigenfunctions.
    pub phi: Array2<T>,
    /// k eigenvalues, nondecreasing.
    pub lambda: Vec<T>,
    /// n lumped vertex masses.
    pub mass: Vec<T>,
}

/// Eigensolver selection. `Auto` uses the dense path up to 512 vertices and
/// shift-invert Lanczos above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigMethod {
    #[default]
    Auto,
    Dense,
    ShiftInvertLanczos,
}

const DENSE_LIMIT: usize = 512;

/// Cotangent stiffness matrix L (symmetric PSD, zero row sums) and the
/// barycentric lumped mass vector.
pub fn cotan_laplacian<T: Real>(mesh: &TriangleMesh<T>) -> Result<(SymSparse<T>, Vec<T>)> {
    let n = mesh.n();
    let mut l = SymSparse::zeros(n);
    let half = T::of(0.5);
    for (fi, f) in mesh.faces().iter().enumerate() {
        if mesh.face_area(fi) <= T::zero() {
            return Err(Error::Degenerate(format!(
                "face {fi} has zero area, cotangent weights undefined"
            )));
        }
        // for each corner, the cotangent of its angle weights the opposite edge
        for c in 0..3 {
            let apex = f[c];
            let a = f[(c + 1) % 3];
            let b = f[(c + 2) % 3];
            let u = crate::mesh::sub(mesh.vertex(a), mesh.vertex(apex));
            let v = crate::mesh::sub(mesh.vertex(b), mesh.vertex(apex));
            let cross_norm = crate::mesh::norm(crate::mesh::cross(u, v));
            let cot = crate::mesh::dot3(u, v) / cross_norm;
            let w = cot * half;
            l.add_sym(a, b, -w);
            l.add_sym(a, a, w);
            l.add_sym(b, b, w);
        }
    }
    Ok((l, mesh.vertex_areas()))
}

/// First `k` generalized eigenpairs of (L, diag(mass)).
pub fn eigenbasis<T: Real>(
    l: &SymSparse<T>,
    mass: &[T],
    k: usize,
    method: EigMethod,
) -> Result<SpectralBasis<T>> {
    let n = l.n;
    if k == 0 || k > n {
        return Err(Error::Dimension(format!("basis size k={k} must be in 1..={n}")));
    }
    if mass.len() != n {
        return Err(Error::Dimension("mass vector length mismatch".into()));
    }
    if mass.iter().any(|&m| m <= T::zero()) {
        return Err(Error::Degenerate("lumped mass must be strictly positive".into()));
    }

    let use_dense = match method {
        EigMethod::Dense => true,
        EigMethod::ShiftInvertLanczos => false,
        EigMethod::Auto => n <= DENSE_LIMIT,
    };

    // residual target: 1e-10 at f64, scaled up for coarser scalars
    let resid_target = T::of(1e-10).max(T::epsilon() * T::of(500.0));
    let (lambda, mut phi) = if use_dense {
        dense_eigs(l, mass, k)?
    } else {
        let out = lanczos::shift_invert_lanczos(l, mass, k, resid_target)?;
        (out.eigenvalues, out.eigenvectors)
    };

    fix_signs(&mut phi, mass);
    let basis = SpectralBasis { k, phi, lambda, mass: mass.to_vec() };
    basis.check_residuals(l)?;
    Ok(basis)
}

fn dense_eigs<T: Real>(l: &SymSparse<T>, mass: &[T], k: usize) -> Result<(Vec<T>, Array2<T>)> {
    let n = l.n;
    // similarity transform with diagonal M: B = M^{-1/2} L M^{-1/2}
    let rsq: Vec<T> = mass.iter().map(|&m| m.sqrt().recip()).collect();
    let mut b = l.to_dense();
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = b[(i, j)] * rsq[i] * rsq[j];
        }
    }
    // enforce exact symmetry against round-off
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (b[(i, j)] + b[(j, i)]) * T::of(0.5);
            b[(i, j)] = s;
            b[(j, i)] = s;
        }
    }
    let (vals, vecs) = jacobi_eigh(&b)?;
    let mut phi = Array2::zeros((n, k));
    for c in 0..k {
        for i in 0..n {
            phi[(i, c)] = vecs[(i, c)] * rsq[i];
        }
    }
    let mut lambda: Vec<T> = vals[..k].to_vec();
    let scale = vals[n - 1].abs().max(T::one());
    for v in &mut lambda {
        if v.abs() < scale * T::of(1e-12) {
            *v = v.max(T::zero());
        }
    }
    Ok((lambda, phi))
}

fn mass_sq<T: Real>(m: T, phi: T) -> T {
    let x = m * phi;
    x * x
}

/// Deterministic per-column sign convention, stable across near-isometric
/// remeshings: flip so the mass-weighted cube integral is positive. The
/// integral is intrinsic and permutation-invariant; when it is too close to
/// zero to be trustworthy (near-antisymmetric eigenfunctions), fall back to
/// making the entry of largest magnitude positive.
fn fix_signs<T: Real>(phi: &mut Array2<T>, mass: &[T]) {
    for mut col in phi.columns_mut() {
        let mut cube = T::zero();
        let mut scale = T::zero();
        for (i, &x) in col.iter().enumerate() {
            let m = mass[i];
            cube += m * x * x * x;
            scale += m * (x * x * x).abs();
        }
        let flip = if cube.abs() > scale * T::of(1e-3) {
            cube < T::zero()
        } else {
            let mut best = 0;
            for i in 1..col.len() {
                if col[i].abs() > col[best].abs() {
                    best = i;
                }
            }
            col[best] < T::zero()
        };
        if flip {
            col.mapv_inplace(|x| -x);
        }
    }
}

impl<T: Real> SpectralBasis<T> {
    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    /// Mass-orthonormality defect `max |phi^T M phi - I|`.
    pub fn orthonormality_defect(&self) -> T {
        let g = self.gram();
        let mut worst = T::zero();
        for i in 0..self.k {
            for j in 0..self.k {
                let want = if i == j { T::one() } else { T::zero() };
                worst = worst.max((g[(i, j)] - want).abs());
            }
        }
        worst
    }

    fn gram(&self) -> Array2<T> {
        let weighted = self.mass_weighted(&self.phi);
        self.phi.t().dot(&weighted)
    }

    fn mass_weighted(&self, f: &Array2<T>) -> Array2<T> {
        let mut w = f.clone();
        for (i, mut row) in w.rows_mut().into_iter().enumerate() {
            let m = self.mass[i];
            row.mapv_inplace(|x| x * m);
        }
        w
    }

    fn check_residuals(&self, l: &SymSparse<T>) -> Result<()> {
        // 1e-6 binds at f64; coarser scalars get an epsilon-scaled bound
        let tol = T::of(1e-6).max(T::epsilon() * T::of(500.0));
        let defect = self.orthonormality_defect();
        if defect > tol {
            return Err(Error::Convergence(format!(
                "mass-orthonormality defect {defect} exceeds {tol}"
            )));
        }
        let scale = l.trace() / self.mass.iter().copied().sum::<T>();
        for c in 0..self.k {
            let phi_c: Vec<T> = (0..self.n()).map(|i| self.phi[(i, c)]).collect();
            let lphi = l.matvec(&phi_c);
            let mut r2 = T::zero();
            let mut l2 = T::zero();
            let mut m2 = T::zero();
            for i in 0..self.n() {
                let r = lphi[i] - self.lambda[c] * self.mass[i] * phi_c[i];
                r2 += r * r;
                l2 += lphi[i] * lphi[i];
                m2 += mass_sq(self.mass[i], phi_c[i]);
            }
            // the (|lambda| + scale) * ||M phi|| term keeps the threshold
            // meaningful on the kernel column where ||L phi|| vanishes
            let denom = l2.sqrt() + (self.lambda[c].abs() + scale) * m2.sqrt();
            if r2.sqrt() > tol * denom {
                return Err(Error::Convergence(format!(
                    "eigen residual {} at column {c} exceeds target",
                    r2.sqrt()
                )));
            }
        }
        Ok(())
    }

    /// Reduced-basis coefficients `A = phi^T diag(mass) F`, the mass-weighted
    /// pseudoinverse applied to a per-vertex field.
    pub fn project(&self, f: &Array2<T>) -> Result<Array2<T>> {
        if f.nrows() != self.n() {
            return Err(Error::Dimension(format!(
                "field has {} rows, basis expects {}",
                f.nrows(),
                self.n()
            )));
        }
        Ok(self.phi.t().dot(&self.mass_weighted(f)))
    }

    /// First `count` spectral coordinates per vertex (the leading columns of
    /// phi), used as network inputs.
    pub fn coordinates(&self, count: usize) -> Result<Array2<T>> {
        if count > self.k {
            return Err(Error::Dimension(format!(
                "requested {count} spectral coordinates, basis has k={}",
                self.k
            )));
        }
        Ok(self.phi.slice(ndarray::s![.., ..count]).to_owned())
    }
}

/// Cache file name for a mesh/basis-size pair.
pub fn cache_path(dir: &Path, mesh_hash: &str, k: usize) -> PathBuf {
    dir.join(format!("{mesh_hash}-k{k}.spectral"))
}

pub fn save_basis<T: Real>(basis: &SpectralBasis<T>, mesh_hash: &str, path: &Path) -> Result<()> {
    let mut c = Container::new();
    c.put_str("kind", "spectral");
    c.put_str("mesh_hash", mesh_hash);
    c.put_u64("k", basis.k as u64);
    c.put_matrix("phi", &basis.phi);
    c.put_vector("lambda", &basis.lambda);
    c.put_vector("mass", &basis.mass);
    c.save(path)
}

/// Loads a cached basis, verifying the stored mesh hash and basis size.
pub fn load_basis<T: Real>(path: &Path, mesh_hash: &str, k: usize) -> Result<SpectralBasis<T>> {
    let c = Container::load(path)?;
    let p = path.display().to_string();
    if c.str(&p, "kind")? != "spectral" {
        return Err(Error::Container { path: p, msg: "not a spectral cache".into() });
    }
    if c.str(&p, "mesh_hash")? != mesh_hash {
        return Err(Error::Container { path: p, msg: "mesh hash mismatch".into() });
    }
    if c.u64(&p, "k")? as usize != k {
        return Err(Error::Container { path: p, msg: "basis size mismatch".into() });
    }
    Ok(SpectralBasis {
        k,
        phi: c.matrix(&p, "phi")?,
        lambda: c.vector(&p, "lambda")?,
        mass: c.vector(&p, "mass")?,
    })
}

/// Loads the cache when present and valid, otherwise computes and stores it.
/// Returns the basis and whether the cache was hit.
pub fn load_or_compute<T: Real>(
    dir: &Path,
    mesh: &TriangleMesh<T>,
    k: usize,
    method: EigMethod,
) -> Result<(SpectralBasis<T>, bool)> {
    let hash = mesh.content_hash();
    let path = cache_path(dir, &hash, k);
    if path.exists() {
        if let Ok(basis) = load_basis(&path, &hash, k) {
            return Ok((basis, true));
        }
    }
    let (l, mass) = cotan_laplacian(mesh)?;
    let basis = eigenbasis(&l, &mass, k, method)?;
    save_basis(&basis, &hash, &path)?;
    Ok((basis, false))
}
