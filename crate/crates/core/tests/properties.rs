//! Property suites for the surrogate and the penalizer.

use nalgebra::{DMatrix, DVector};
use pipebo_core::acquisition::{penalizer_factor, AcquisitionContext};
use pipebo_core::gp::{GpModel, Hyperparameters, Observation};
use proptest::prelude::*;

const NOISE_FLOOR: f64 = 1e-8;

fn matern52(r: f64, ls: f64, sf2: f64) -> f64 {
    let u = 5f64.sqrt() * r / ls;
    sf2 * (1.0 + u + u * u / 3.0) * (-u).exp()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// Well-separated inputs in the box, with arbitrary targets.
fn design() -> impl Strategy<Value = (Vec<Observation>, Hyperparameters, Vec<f64>)> {
    (1usize..4, 2usize..12).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(prop::collection::vec(-5.0..5.0f64, d), n),
            prop::collection::vec(-3.0..3.0f64, n),
            0.3..2.0f64,
            0.2..3.0f64,
            prop::collection::vec(-5.0..5.0f64, d),
        )
            .prop_filter("inputs too close", |(xs, _, ls, _, _)| {
                xs.iter()
                    .enumerate()
                    .all(|(i, a)| xs[..i].iter().all(|b| dist(a, b) > 0.8 * ls))
            })
            .prop_map(|(xs, ys, ls, sf2, q)| {
                let data = xs.into_iter().zip(ys).map(|(x, y)| Observation::new(x, y)).collect();
                (data, Hyperparameters::new(ls, sf2, NOISE_FLOOR).unwrap(), q)
            })
    })
}

/// Posterior from the textbook equations with a dense solve.
fn dense_posterior(model: &GpModel, h: Hyperparameters, x: &[f64]) -> (f64, f64) {
    let n = model.len();
    let xi = |i| model.training_input(i);
    let k = DMatrix::from_fn(n, n, |i, j| {
        matern52(dist(xi(i), xi(j)), h.lengthscale, h.signal_variance)
            + if i == j { h.noise_variance + model.jitter() } else { 0.0 }
    });
    let ks = DVector::from_fn(n, |i, _| matern52(dist(xi(i), x), h.lengthscale, h.signal_variance));
    let y = DVector::from_column_slice(model.standardized_targets());
    let chol = k.cholesky().unwrap();
    let mean = ks.dot(&chol.solve(&y));
    let var = h.signal_variance - ks.dot(&chol.solve(&ks));
    (mean, var)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn posterior_interpolates_training_points((data, h, _q) in design()) {
        let model = GpModel::with_hyperparameters(&data, h).unwrap();
        for (i, y) in model.standardized_targets().iter().enumerate() {
            let p = model.posterior(model.training_input(i)).unwrap();
            prop_assert!((p.mean - y).abs() <= 1e-5, "point {i}: {} vs {y}", p.mean);
        }
    }

    #[test]
    fn posterior_matches_dense_solve((data, h, q) in design()) {
        let model = GpModel::with_hyperparameters(&data, h).unwrap();
        let p = model.posterior(&q).unwrap();
        let (mean, var) = dense_posterior(&model, h, &q);
        prop_assert!((p.mean - mean).abs() <= 1e-6 * (1.0 + mean.abs()));
        prop_assert!((p.variance - var.max(0.0)).abs() <= 1e-6 * h.signal_variance);
    }

    #[test]
    fn variance_is_bounded((data, h, q) in design()) {
        let model = GpModel::with_hyperparameters(&data, h).unwrap();
        let upper = h.signal_variance + h.noise_variance + 1e-8;
        let mut points = vec![q];
        points.extend((0..model.len()).map(|i| model.training_input(i).to_vec()));
        for x in &points {
            let v = model.posterior(x).unwrap().variance;
            prop_assert!((0.0..=upper).contains(&v), "variance {v} outside [0, {upper}]");
        }
    }

    #[test]
    fn mean_gradient_matches_central_differences((data, h, q) in design()) {
        let model = GpModel::with_hyperparameters(&data, h).unwrap();
        let g = model.posterior_mean_gradient(&q).unwrap();
        let step = 1e-5;
        let fd: Vec<f64> = (0..q.len())
            .map(|j| {
                let mut a = q.clone();
                let mut b = q.clone();
                a[j] += step;
                b[j] -= step;
                (model.posterior(&a).unwrap().mean - model.posterior(&b).unwrap().mean) / (2.0 * step)
            })
            .collect();
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1e-6;
        for (a, b) in g.iter().zip(&fd) {
            prop_assert!((a - b).abs() <= 1e-4 * scale, "analytic {a} vs fd {b}");
        }
    }

    #[test]
    fn penalizer_stays_in_unit_interval(
        d in 0.0..10.0f64,
        l in 0.1..20.0f64,
        best in -3.0..3.0f64,
        mean in -3.0..3.0f64,
        var in 1e-4..4.0f64,
    ) {
        let phi = penalizer_factor(d, l, best, mean, var);
        prop_assert!((0.0..=1.0).contains(&phi));
        // Strictly inside wherever the value is representable.
        let z = -(l * d - best + mean) / (2.0 * var);
        if (-5.0..25.0).contains(&z) {
            prop_assert!(phi > 0.0 && phi < 1.0, "phi {phi} at z {z}");
        }
    }

    #[test]
    fn penalizer_grows_with_distance(
        d1 in 0.0..10.0f64,
        gap in 1e-3..5.0f64,
        l in 0.1..20.0f64,
        best in -3.0..3.0f64,
        mean in -3.0..3.0f64,
        var in 1e-4..4.0f64,
    ) {
        let near = penalizer_factor(d1, l, best, mean, var);
        let far = penalizer_factor(d1 + gap, l, best, mean, var);
        prop_assert!(far >= near);
    }

    #[test]
    fn penalizer_is_half_at_its_own_center(l in 0.0..50.0f64, m in -5.0..5.0f64, var in 0.0..10.0f64) {
        prop_assert_eq!(penalizer_factor(0.0, l, m, m, var), 0.5);
    }

    #[test]
    fn empty_penalizer_set_leaves_ucb_untouched((data, h, q) in design(), kappa in 0.0..4.0f64) {
        let model = GpModel::with_hyperparameters(&data, h).unwrap();
        let best = model.best_standardized();
        let ctx = AcquisitionContext::new(model, kappa, 3.0, best).unwrap();
        prop_assert_eq!(ctx.penalized_value(&q).unwrap().to_bits(), ctx.ucb(&q).unwrap().to_bits());
    }
}
