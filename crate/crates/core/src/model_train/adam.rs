//! Adam optimizer with the standard constants (beta1 = 0.9, beta2 = 0.999,
//! eps = 1e-8) and bias correction.

use crate::scalar::Real;
use ndarray::Array2;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
    t: usize,
    beta1: T,
    beta2: T,
    eps: T,
}

impl<T: Real> Adam<T> {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        Self {
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            t: 0,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
        }
    }

    pub fn step_count(&self) -> usize {
        self.t
    }

    /// One update over parallel slices of parameters and gradients.
    pub fn step(&mut self, params: &mut [&mut Array2<T>], grads: &[Array2<T>], lr: T) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let t = T::of(self.t as f64);
        let bc1 = T::one() - self.beta1.powf(t);
        let bc2 = T::one() - self.beta2.powf(t);
        for i in 0..params.len() {
            let g = &grads[i];
            self.m[i].zip_mut_with(g, |m, &gv| *m = self.beta1 * *m + (T::one() - self.beta1) * gv);
            self.v[i]
                .zip_mut_with(g, |v, &gv| *v = self.beta2 * *v + (T::one() - self.beta2) * gv * gv);
            let m = &self.m[i];
            let v = &self.v[i];
            let p = &mut *params[i];
            for ((pv, mv), vv) in p.iter_mut().zip(m.iter()).zip(v.iter()) {
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }

    pub fn moments(&self) -> (&[Array2<T>], &[Array2<T>]) {
        (&self.m, &self.v)
    }

    pub fn restore(m: Vec<Array2<T>>, v: Vec<Array2<T>>, t: usize) -> Self {
        Self {
            m,
            v,
            t,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
        }
    }
}
