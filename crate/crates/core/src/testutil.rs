//! Finite-difference helpers shared by unit tests.

use rand::Rng;

use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Central differences of a scalar function at every element of `at`.
pub fn numeric_grad(at: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut probe = at.clone();
    let mut grad = Tensor::zeros(at.shape());
    for i in 0..at.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let up = f(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * FD_STEP);
    }
    grad
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[track_caller]
pub fn assert_grad_close(analytic: &Tensor, numeric: &Tensor) {
    assert_eq!(analytic.shape(), numeric.shape());
    for (i, (a, n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        assert!(
            rel_err(*a, *n) < FD_REL_TOL,
            "element {i}: analytic {a} vs numeric {n}"
        );
    }
}
