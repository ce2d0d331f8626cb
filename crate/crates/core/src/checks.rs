//! Self-contained property suites behind the `oracle-check`, `estep-check` and
//! `retrace-check` commands. Each suite is deterministic given its seed.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::{policy_value, tabular_exact_q, TabularMdp};
use crate::error::Result;
use crate::mpo::{dual_value_and_grad, estep_kl, estep_weights, solve_eta, EStepBatch, ETA_MAX, ETA_MIN};
use crate::numerics::Matrix;
use crate::oracle::{
    bellman_apply, find_monotone_beta, min_improvement, soft_optimal_q, RegularizedProblem, TabularSoftmaxPolicy,
};
use crate::retrace::{exact_retrace_operator, retrace_targets, tabular_trajectory, TabularPolicy, TabularQ, TrajectoryWindow};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub suite: &'static str,
    pub seed: u64,
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.results.push(CheckResult { name, passed, detail });
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} (seed {})", self.suite, self.seed)?;
        for r in &self.results {
            writeln!(f, "  [{}] {}: {}", if r.passed { "pass" } else { "FAIL" }, r.name, r.detail)?;
        }
        write!(f, "{}", if self.passed() { "all properties hold" } else { "some properties failed" })
    }
}

fn random_policy<R: Rng>(ns: usize, na: usize, rng: &mut R) -> Matrix<f64> {
    let mut p = Matrix::from_fn(ns, na, |_, _| rng.gen_range(0.05..1.0));
    for s in 0..ns {
        let total: f64 = p.row(s).iter().sum();
        p.row_mut(s).iter_mut().for_each(|x| *x /= total);
    }
    p
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Properties of the exact KL-regularized tabular objective.
pub fn oracle_check(seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport { suite: "oracle-check", seed, results: Vec::new() };

    let (mut fixed, mut contraction) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let mdp = TabularMdp::random(8, 4, 0.9, &mut rng)?;
        let p = RegularizedProblem::new(&mdp, rng.gen_range(0.1..2.0), random_policy(8, 4, &mut rng), random_policy(8, 4, &mut rng))?;
        let v = p.value()?;
        fixed = fixed.max(sup(&p.bellman_apply(&v)?, &v));
        let u: Vec<f64> = (0..8).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let w: Vec<f64> = (0..8).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let ratio = sup(&p.bellman_apply(&u)?, &p.bellman_apply(&w)?) / sup(&u, &w);
        contraction = contraction.max(ratio);
    }
    report.push("regularized value is the Bellman fixed point", fixed <= 1e-8, format!("max residual {fixed:.2e}"));
    report.push("regularized operator is a γ-contraction", contraction <= 0.9 + 1e-12, format!("max ratio {contraction:.6}"));

    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let mdp = TabularMdp::random(6, 3, 0.9, &mut rng)?;
        let q = random_policy(6, 3, &mut rng);
        let p = RegularizedProblem::new(&mdp, rng.gen_range(0.05..3.0), random_policy(6, 3, &mut rng), q.clone())?;
        let plain = policy_value(&mdp, &q)?;
        let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let pairs = [(p.value()?, plain), (p.bellman_apply(&v)?, bellman_apply(&mdp, &q, &v)?)];
        for (reg, unreg) in &pairs {
            worst = reg.iter().zip(unreg).map(|(a, b)| a - b).fold(worst, f64::max);
        }
    }
    report.push("regularization lowers values and backups", worst <= 1e-12, format!("max excess {worst:.2e}"));

    let mut gap = f64::INFINITY;
    for _ in 0..20 {
        let mdp = TabularMdp::random(6, 3, 0.9, &mut rng)?;
        let pi = random_policy(6, 3, &mut rng);
        let alpha = rng.gen_range(0.1..2.0);
        let soft = soft_optimal_q(&mdp, &pi, alpha)?;
        let q_pi = tabular_exact_q(&mdp, &pi)?;
        let score = |q: &Matrix<f64>, x: usize| -> f64 {
            (0..3).map(|a| q[(x, a)] * (q_pi[(x, a)] - alpha * (q[(x, a)] / pi[(x, a)]).ln())).sum()
        };
        for _ in 0..20 {
            let other = random_policy(6, 3, &mut rng);
            for x in 0..6 {
                gap = gap.min(score(&soft, x) - score(&other, x));
            }
        }
    }
    report.push("soft-optimal posterior maximizes the one-step regularized objective", gap >= -1e-12, format!("min margin {gap:.2e}"));

    let mut min_step = f64::INFINITY;
    let mut betas = Vec::new();
    for _ in 0..10 {
        let mdp = TabularMdp::random(10, 5, 0.9, &mut rng)?;
        let theta = TabularSoftmaxPolicy::new(Matrix::from_fn(10, 5, |_, _| rng.gen_range(-1.0..1.0)))?;
        match find_monotone_beta(&mdp, &theta, 0.5, 1e-2, 200, 1e-9, 30) {
            Ok((beta, steps)) => {
                min_step = min_step.min(min_improvement(&steps));
                betas.push(beta);
            }
            Err(_) => min_step = f64::NEG_INFINITY,
        }
    }
    report.push(
        "policy improvement is monotone",
        min_step >= -1e-9,
        format!("min J_(i+1) − J_i {min_step:.2e} over 10 MDPs × 200 iterations, step sizes {betas:?}"),
    );
    Ok(report)
}

fn random_estep_batch<R: Rng>(rng: &mut R) -> Result<EStepBatch<f64>> {
    let (states, actions) = (rng.gen_range(1..8), rng.gen_range(2..12));
    let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
    let q = (0..states).map(|_| (0..actions).map(|_| rng.gen_range(-1.0..1.0) * scale).collect()).collect();
    EStepBatch::from_samples(q)
}

/// Properties of the temperature dual and the resulting sample weights.
pub fn estep_check(seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport { suite: "estep-check", seed, results: Vec::new() };
    let epsilon = 0.1;

    let mut curvature = f64::INFINITY;
    for _ in 0..100 {
        let batch = random_estep_batch(&mut rng)?;
        let grid: Vec<f64> = (0..30).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 29.0)).collect();
        let g: Vec<f64> = grid.iter().map(|&e| dual_value_and_grad(e, &batch, epsilon).map(|v| v.0)).collect::<Result<_>>()?;
        for i in 1..29 {
            let (h0, h1) = (grid[i] - grid[i - 1], grid[i + 1] - grid[i]);
            let second = (g[i + 1] - g[i]) / h1 - (g[i] - g[i - 1]) / h0;
            curvature = curvature.min(second);
        }
    }
    report.push("dual is convex in the temperature", curvature >= -1e-8, format!("min second difference {curvature:.2e}"));

    let mut grad_err = 0.0f64;
    for _ in 0..50 {
        let batch = random_estep_batch(&mut rng)?;
        let eta = 10f64.powf(rng.gen_range(-1.0..1.0));
        let h = 1e-5 * eta;
        let fd = (dual_value_and_grad(eta + h, &batch, epsilon)?.0 - dual_value_and_grad(eta - h, &batch, epsilon)?.0) / (2.0 * h);
        let an = dual_value_and_grad(eta, &batch, epsilon)?.1;
        grad_err = grad_err.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-3));
    }
    report.push("dual derivative matches finite differences", grad_err <= 1e-4, format!("max rel. error {grad_err:.2e}"));

    let (mut kl_gap, mut interior) = (0.0f64, 0);
    let (mut optimality, mut normalization) = (f64::INFINITY, 0.0f64);
    for _ in 0..50 {
        let actions = rng.gen_range(2..11);
        let q: Vec<f64> = (0..actions).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let prior = {
            let w: Vec<f64> = (0..actions).map(|_| rng.gen_range(0.05..1.0)).collect();
            let t: f64 = w.iter().sum();
            w.into_iter().map(|x| x / t).collect::<Vec<_>>()
        };
        let batch = EStepBatch::new(vec![q.clone()], vec![prior.iter().map(|p| p.ln()).collect()])?;
        let eta = solve_eta(&batch, epsilon)?;
        let w = &estep_weights(eta, &batch)?[0];
        normalization = normalization.max((w.iter().sum::<f64>() - 1.0).abs());
        if eta > ETA_MIN * 1.01 && eta < ETA_MAX * 0.99 {
            interior += 1;
            kl_gap = kl_gap.max((estep_kl(eta, &batch) - epsilon).abs());
        }
        let value: f64 = w.iter().zip(&q).map(|(a, b)| a * b).sum();
        // Random distributions inside the trust region never beat the solution.
        for _ in 0..200 {
            let t = rng.gen_range(0.0..1.0f64);
            let other: Vec<f64> = {
                let raw: Vec<f64> = prior.iter().map(|p| p * (t * rng.gen_range(-3.0..3.0f64)).exp()).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / s).collect()
            };
            let kl: f64 = other.iter().zip(&prior).map(|(o, p)| o * (o / p).ln()).sum();
            if kl <= epsilon {
                let v: f64 = other.iter().zip(&q).map(|(a, b)| a * b).sum();
                optimality = optimality.min(value - v);
            }
        }
    }
    report.push("weights are normalized", normalization <= 1e-12, format!("max |Σw − 1| {normalization:.2e}"));
    report.push(
        "interior solutions meet the KL bound with equality",
        kl_gap <= 1e-3,
        format!("max |KL − ε| {kl_gap:.2e} over {interior} interior problems"),
    );
    report.push("no feasible distribution scores higher", optimality >= -1e-9, format!("min margin {optimality:.2e}"));
    Ok(report)
}

/// Fixed-point and unbiasedness properties of Retrace on tabular MDPs.
pub fn retrace_check(seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport { suite: "retrace-check", seed, results: Vec::new() };

    let (mut fixed, mut converged) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let mdp = TabularMdp::random(6, 3, 0.9, &mut rng)?;
        let pi = random_policy(6, 3, &mut rng);
        let b = random_policy(6, 3, &mut rng);
        let q_pi = tabular_exact_q(&mdp, &pi)?;
        let steps = rng.gen_range(1..9);
        fixed = fixed.max(exact_retrace_operator(&mdp, &q_pi, &pi, &b, steps)?.max_abs_diff(&q_pi));
        let mut q = Matrix::zeros(6, 3);
        for _ in 0..500 {
            q = exact_retrace_operator(&mdp, &q, &pi, &b, steps)?;
        }
        converged = converged.max(q.max_abs_diff(&q_pi));
    }
    report.push("true Q is a fixed point of the expected operator", fixed <= 1e-8, format!("max sup-norm change {fixed:.2e}"));
    report.push("iteration from zero converges to true Q", converged <= 1e-6, format!("max sup-norm error {converged:.2e}"));

    let mdp = TabularMdp::random(5, 3, 0.9, &mut rng)?;
    let pi = random_policy(5, 3, &mut rng);
    let b = random_policy(5, 3, &mut rng);
    let q_pi = tabular_exact_q(&mdp, &pi)?;
    let n = 10_000;
    let mut diffs = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, a) = (rng.gen_range(0..5), rng.gen_range(0..3));
        let traj = tabular_trajectory(&mdp, &b, x, a, 8, &mut rng)?;
        let window = TrajectoryWindow { transitions: &traj, at_trajectory_end: true };
        let t = retrace_targets(&window, &TabularQ(&q_pi), &TabularPolicy(&pi), 1, mdp.gamma(), &mut rng)?;
        diffs.push(t[0] - q_pi[(x, a)]);
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let se = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / ((n - 1) * n) as f64).sqrt();
    report.push(
        "sampled targets are unbiased at true Q",
        mean.abs() <= 3.0 * se,
        format!("mean bias {mean:.2e}, standard error {se:.2e}, {n} windows"),
    );
    Ok(report)
}
