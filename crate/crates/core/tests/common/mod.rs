#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mpo_lab::numerics::{Activation, MlpParams};

pub const FD_STEP: f64 = 1e-5;

/// Relative error with the denominator floored so that entries near zero
/// are compared on an absolute 1e-7 scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Central finite differences of `f` at `x`, one coordinate at a time.
pub fn central_diff(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

pub fn assert_grad_close(analytic: &[f64], numeric: &[f64], tol: f64, what: &str) {
    assert_eq!(analytic.len(), numeric.len(), "{what}: length");
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let e = rel_err(a, n);
        assert!(e <= tol, "{what}[{i}]: analytic {a} vs numeric {n} (rel err {e:.3e})");
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mlp(sizes: &[usize], act: Activation, rng: &mut ChaCha8Rng) -> MlpParams<f64> {
    let mut p = MlpParams::glorot(sizes, act, 1.0, rng).unwrap();
    for v in p.as_mut_slice() {
        *v += rng.gen_range(-0.1..0.1);
    }
    p
}

pub fn random_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Smallest eigenvalue of a symmetric matrix via nalgebra.
pub fn min_eigenvalue(n: usize, data: &[f64]) -> f64 {
    let m = nalgebra::DMatrix::from_row_slice(n, n, data);
    m.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Random strictly positive policy table.
pub fn random_policy(ns: usize, na: usize, rng: &mut ChaCha8Rng) -> mpo_lab::numerics::Matrix<f64> {
    let mut p = mpo_lab::numerics::Matrix::from_fn(ns, na, |_, _| rng.gen_range(0.01..1.0));
    for s in 0..ns {
        let total: f64 = p.row(s).iter().sum();
        p.row_mut(s).iter_mut().for_each(|x| *x /= total);
    }
    p
}
