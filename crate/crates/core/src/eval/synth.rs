//! Synthetic near-isometric benchmark: a shared base mesh (icosphere or a
//! bumpy sphere) under smooth low-frequency normal displacement plus a mild
//! bend, with vertex orders permuted per shape and identity ground truth
//! through the permutations.

use super::GroundTruth;
use crate::mesh::primitives::icosphere;
use crate::mesh::TriangleMesh;
use crate::scalar::Real;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthBase {
    Icosphere,
    BumpySphere,
}

#[derive(Debug, Clone, Copy)]
pub struct SynthParams {
    pub subdivisions: usize,
    /// Amplitude of the smooth normal displacement field.
    pub displacement: f64,
    /// Peak bending angle in radians.
    pub bend: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        // tuned so per-edge length distortion stays below 10%
        Self { subdivisions: 3, displacement: 0.02, bend: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCollection<T> {
    pub shapes: Vec<TriangleMesh<T>>,
    pub gt: GroundTruth,
}

/// Fixed asymmetric radial modulation; shared across every shape of a
/// bumpy-sphere collection so the geometry (not the noise) carries identity.
/// The pattern is strong enough to separate the sphere's eigenvalue
/// multiplicities, which keeps spectral quantities stable across the
/// collection's deformations.
fn bump_radius(p: [f64; 3]) -> f64 {
    1.0 + 0.32 * (3.1 * p[0] + 1.2).sin() * (2.3 * p[1] - 0.4).cos()
        + 0.21 * (2.7 * p[2] + 0.8).sin()
        + 0.13 * (1.9 * p[0] - 1.1 * p[2] + 0.3).cos()
}

pub fn base_mesh<T: Real>(base: SynthBase, subdivisions: usize) -> TriangleMesh<T> {
    let sphere = icosphere::<f64>(subdivisions);
    let verts: Vec<[T; 3]> = sphere
        .vertices()
        .iter()
        .map(|v| {
            let r = match base {
                SynthBase::Icosphere => 1.0,
                SynthBase::BumpySphere => bump_radius(*v),
            };
            [T::of(v[0] * r), T::of(v[1] * r), T::of(v[2] * r)]
        })
        .collect();
    TriangleMesh::new(verts, sphere.faces().to_vec()).expect("sphere deformation keeps topology")
}

/// Smooth low-frequency scalar field: a small sum of sinusoids with seeded
/// frequencies and phases in a low band.
struct SmoothField {
    waves: Vec<([f64; 3], f64, f64)>, // (frequency vector, phase, coefficient)
}

impl SmoothField {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..5)
            .map(|_| {
                let freq = [
                    rng.random::<f64>() * 2.0 + 0.5,
                    rng.random::<f64>() * 2.0 + 0.5,
                    rng.random::<f64>() * 2.0 + 0.5,
                ];
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                let coeff = rng.random::<f64>() * 2.0 - 1.0;
                (freq, phase, coeff)
            })
            .collect();
        Self { waves }
    }

    fn eval(&self, p: [f64; 3]) -> f64 {
        let mut s = 0.0;
        let mut norm = 0.0;
        for (freq, phase, coeff) in &self.waves {
            s += coeff * (freq[0] * p[0] + freq[1] * p[1] + freq[2] * p[2] + phase).sin();
            norm += coeff.abs();
        }
        if norm > 0.0 {
            s / norm
        } else {
            0.0
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-3 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn rodrigues(p: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let dot = axis[0] * p[0] + axis[1] * p[1] + axis[2] * p[2];
    let cross = [
        axis[1] * p[2] - axis[2] * p[1],
        axis[2] * p[0] - axis[0] * p[2],
        axis[0] * p[1] - axis[1] * p[0],
    ];
    [
        p[0] * c + cross[0] * s + axis[0] * dot * (1.0 - c),
        p[1] * c + cross[1] * s + axis[1] * dot * (1.0 - c),
        p[2] * c + cross[2] * s + axis[2] * dot * (1.0 - c),
    ]
}

/// Generates `count` near-isometric deformations of the shared base with
/// permuted vertex orders and the permutations recorded as ground truth.
pub fn make_synthetic_collection<T: Real>(
    base: SynthBase,
    count: usize,
    seed: u64,
    params: SynthParams,
) -> SynthCollection<T> {
    assert!(count >= 2, "a collection needs at least two shapes");
    let template = base_mesh::<f64>(base, params.subdivisions);
    let n = template.n();
    let normals = template.vertex_normals();

    let mut shapes = Vec::with_capacity(count);
    let mut to_reference = Vec::with_capacity(count);
    for s in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xd1b5_4a32_d192_ed03u64.wrapping_mul(s as u64 + 1)));
        let field = SmoothField::new(&mut rng);
        let bend_axis = random_unit(&mut rng);
        let bend_grad = random_unit(&mut rng);

        let deformed: Vec<[f64; 3]> = template
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let delta = params.displacement * field.eval(*v);
                let moved = [
                    v[0] + delta * normals[i][0],
                    v[1] + delta * normals[i][1],
                    v[2] + delta * normals[i][2],
                ];
                let along =
                    bend_grad[0] * moved[0] + bend_grad[1] * moved[1] + bend_grad[2] * moved[2];
                rodrigues(moved, bend_axis, params.bend * along)
            })
            .collect();

        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }

        let verts_t: Vec<[T; 3]> = deformed
            .iter()
            .map(|v| [T::of(v[0]), T::of(v[1]), T::of(v[2])])
            .collect();
        let mesh = TriangleMesh::new(verts_t, template.faces().to_vec())
            .expect("deformation keeps topology")
            .permuted(&perm)
            .expect("permutation is valid");

        // shape vertex perm[i] is base vertex i
        let mut refs = vec![None; n];
        for (i, &p) in perm.iter().enumerate() {
            refs[p] = Some(i);
        }
        shapes.push(mesh);
        to_reference.push(refs);
    }

    SynthCollection { shapes, gt: GroundTruth { to_reference, reference_size: n } }
}
