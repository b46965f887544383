use ntklab::bounds::{
    hnas_objective, linearized_loss_bound, linearized_residual, nonrealizable_score, param_drift_bound,
    realizable_score, BoundParams, ObjectiveParams,
};
use ntklab::linalg::{dot, norm, Matrix};
use ntklab::metrics::NtkSummary;
use ntklab::rng;
use ntklab::Error;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

struct LinearSystem {
    x: Matrix,
    y: Vec<f64>,
    theta0: Vec<f64>,
    ntk: NtkSummary,
    eta: f64,
}

impl LinearSystem {
    fn random(seed: u64) -> Self {
        let mut rng = rng::rng(seed);
        let m = rng.random_range(2..8);
        let d = m + rng.random_range(0..10);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let r = norm(&v);
                v.into_iter().map(|x| x / r).collect()
            })
            .collect();
        let x = Matrix::from_rows(&rows);
        let ntk = NtkSummary::from_gradients(&x).unwrap();
        let eta = rng.random_range(0.05..0.95) * m as f64 / ntk.lambda_max;
        Self {
            y: (0..m).map(|_| rng.random_range(0.0..1.0)).collect(),
            theta0: (0..d).map(|_| rng.sample(StandardNormal)).collect(),
            x,
            ntk,
            eta,
        }
    }

    fn m(&self) -> usize {
        self.y.len()
    }

    fn residual(&self, theta: &[f64]) -> Vec<f64> {
        let f = self.x.mat_vec(theta).unwrap();
        f.iter().zip(&self.y).map(|(f, y)| f - y).collect()
    }

    /// Parameters after each of `steps` plain gradient steps on the mean squared loss.
    fn descend(&self, steps: usize) -> Vec<Vec<f64>> {
        let mut theta = self.theta0.clone();
        let mut out = vec![theta.clone()];
        for _ in 0..steps {
            let g = self.x.mat_t_vec(&self.residual(&theta)).unwrap();
            for (t, gi) in theta.iter_mut().zip(g) {
                *t -= self.eta / self.m() as f64 * gi;
            }
            out.push(theta.clone());
        }
        out
    }
}

#[test]
fn closed_form_residual_matches_gradient_descent() {
    for seed in 0..20 {
        let sys = LinearSystem::random(seed);
        let resid0 = sys.residual(&sys.theta0);
        for (t, theta) in sys.descend(50).iter().enumerate() {
            let closed = linearized_residual(&sys.ntk, &resid0, sys.eta, t).unwrap();
            let direct = sys.residual(theta);
            for (a, b) in closed.iter().zip(&direct) {
                assert!((a - b).abs() <= 1e-8, "seed {seed} t {t}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn residual_rejects_out_of_range_rate() {
    let sys = LinearSystem::random(3);
    let resid0 = sys.residual(&sys.theta0);
    let limit = sys.m() as f64 / sys.ntk.lambda_max;
    assert!(linearized_residual(&sys.ntk, &resid0, limit, 1).is_err());
    assert!(linearized_residual(&sys.ntk, &resid0, 0.0, 1).is_err());
    assert!(linearized_residual(&sys.ntk, &resid0[1..], sys.eta, 1).is_err());
    assert_eq!(linearized_residual(&sys.ntk, &resid0, sys.eta, 0).unwrap(), resid0);
}

#[test]
fn drift_is_monotone_and_bounded() {
    for seed in 100..120 {
        let sys = LinearSystem::random(seed);
        let bound = param_drift_bound(&sys.ntk, &sys.residual(&sys.theta0)).unwrap();
        let mut last = 0.0;
        for theta in sys.descend(100) {
            let delta: Vec<f64> = theta.iter().zip(&sys.theta0).map(|(a, b)| a - b).collect();
            let drift = norm(&delta);
            assert!(drift >= last, "seed {seed}: drift decreased");
            assert!(drift <= bound + 1e-8, "seed {seed}: {drift} > {bound}");
            last = drift;
        }
    }
}

#[test]
fn drift_bound_needs_nonsingular_kernel() {
    let ntk = NtkSummary::from_matrix(Matrix::from_diagonal(&[1.0, 0.0])).unwrap();
    assert!(matches!(param_drift_bound(&ntk, &[1.0, 1.0]), Err(Error::Singular(_))));
    let ntk = NtkSummary::from_matrix(Matrix::from_diagonal(&[4.0, 1.0])).unwrap();
    assert!((param_drift_bound(&ntk, &[2.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn loss_bound_dominates_on_flat_spectrum() {
    // With Θ₀ = cI every mode decays at the mean rate and ‖ŷ‖² ≤ m.
    let mut rng = rng::rng(4);
    for _ in 0..20 {
        let m = rng.random_range(2..10);
        let c: f64 = rng.random_range(0.5..3.0);
        let ntk = NtkSummary::from_matrix(Matrix::identity(m).scale(c)).unwrap();
        let resid0: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eta = rng.random_range(0.05..0.95) * m as f64 / c;
        for t in 0..=100u32 {
            let r = linearized_residual(&ntk, &resid0, eta, t as usize).unwrap();
            let loss = dot(&r, &r) / (2.0 * m as f64);
            let bound = linearized_loss_bound(c.sqrt(), eta, m, t).unwrap();
            assert!(loss <= bound, "t {t}: {loss} > {bound}");
        }
    }
}

#[test]
fn loss_bound_fails_when_slow_modes_carry_the_residual() {
    // Θ₀ = diag(2, 0.02): the mean-eigenvalue rate outruns the slow mode.
    let ntk = NtkSummary::from_matrix(Matrix::from_diagonal(&[2.0, 0.02])).unwrap();
    let resid0 = [0.0, 1.0];
    let (m, eta) = (2, 0.9);
    let trace_metric = (ntk.trace / m as f64).sqrt();
    let t = 100;
    let r = linearized_residual(&ntk, &resid0, eta, t).unwrap();
    let loss = dot(&r, &r) / (2.0 * m as f64);
    let bound = linearized_loss_bound(trace_metric, eta, m, t as u32).unwrap();
    assert!(loss > bound, "{loss} vs {bound}");
}

#[test]
fn loss_bound_examples_and_domain() {
    assert!((linearized_loss_bound(1.0, 1.0, 2, 1).unwrap() - 0.25).abs() < 1e-15);
    assert_eq!(linearized_loss_bound(2.0, 1.0, 4, 3).unwrap(), 0.0);
    assert!(linearized_loss_bound(2.0, 1.0, 2, 1).is_err());
    assert!(linearized_loss_bound(0.0, 1.0, 2, 1).is_err());
}

#[test]
fn scores_reject_zero_metric() {
    let p = BoundParams::new(0.1, 1.0, 1, 32).unwrap();
    assert!(realizable_score(0.0).is_err());
    assert!(nonrealizable_score(0.0, 1.0, &p).is_err());
    assert!(hnas_objective(0.0, 1.0, &ObjectiveParams::new(1.0, 1.0).unwrap()).is_err());
    assert!(ObjectiveParams::new(-1.0, 1.0).is_err());
    assert!(BoundParams::new(0.0, 1.0, 1, 1).is_err());
    assert!(BoundParams::new(0.1, 0.0, 1, 1).is_err());
    assert!(BoundParams::new(0.1, 1.0, 0, 1).is_err());
    assert!(BoundParams::new(0.1, 1.0, 1, 0).is_err());
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x < xs[best] {
            best = i;
        }
    }
    best
}

proptest! {
    #[test]
    fn realizable_argmin_is_metric_argmax(ms in prop::collection::vec(0.01f64..100.0, 1..40)) {
        let scores: Vec<f64> = ms.iter().map(|&m| realizable_score(m).unwrap()).collect();
        let mut best = 0;
        for (i, m) in ms.iter().enumerate() {
            if *m > ms[best] {
                best = i;
            }
        }
        prop_assert_eq!(ms[argmin(&scores)], ms[best]);
    }

    #[test]
    fn common_kappa_scale_keeps_argmins(
        pool in prop::collection::vec((0.01f64..50.0, 1.0f64..1e4), 1..40),
        scale in 0.001f64..1000.0,
        nu in 0.0f64..100.0,
    ) {
        let p = ObjectiveParams::new(0.0, nu).unwrap();
        let base: Vec<f64> = pool.iter().map(|&(m, k)| hnas_objective(m, k, &p).unwrap()).collect();
        let scaled: Vec<f64> = pool.iter().map(|&(m, k)| hnas_objective(m, k * scale, &p).unwrap()).collect();
        prop_assert_eq!(pool[argmin(&base)].0, pool[argmin(&scaled)].0);
    }

    #[test]
    fn nonrealizable_decreasing_below_threshold(
        kappa in 1.0f64..1e3,
        m in 1usize..64,
        eta in 1e-3f64..1.0,
        c in 0.1f64..10.0,
        t in 1u32..5,
    ) {
        let p = BoundParams::new(eta, c, t, m).unwrap();
        let edge = (m as f64 * c / eta).sqrt();
        let grid: Vec<f64> = (1..=200).map(|i| edge * i as f64 / 200.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&x| nonrealizable_score(x, kappa, &p).unwrap()).collect();
        for w in vals.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn objective_is_finite_and_continuous(
        m in 1e-3f64..1e3,
        kappa in 1.0f64..1e6,
        mu in 0.0f64..1e3,
        nu in -1e3f64..1e3,
    ) {
        let p = ObjectiveParams::new(mu, nu).unwrap();
        let v = hnas_objective(m, kappa, &p).unwrap();
        prop_assert!(v.is_finite() && v >= 0.0);
        let h = m * 1e-9;
        let w = hnas_objective(m + h, kappa, &p).unwrap();
        prop_assert!((w - v).abs() <= 1e-5 * (1.0 + v.abs()));
    }
}
