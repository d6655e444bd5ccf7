use proptest::prelude::*;

use rankalign::optim::{data_fit_gradient, fit_l1_linear, kkt_residual, objective};
use rankalign::{Loss, Matrix, SolverConfig};
use rankalign_oracles::{self as oracle, GridProblem};

const LOSSES: [Loss; 3] = [Loss::SquaredHinge, Loss::Squared, Loss::EpsilonInsensitive];

fn config(p: &GridProblem) -> SolverConfig {
    SolverConfig::new(p.c, p.loss).with_epsilon(p.epsilon).with_seed(3)
}

#[test]
fn matches_grid_oracle_on_small_problems() {
    let mut rng = oracle::rng(101);
    for round in 0..4 {
        for loss in LOSSES {
            let p = GridProblem::random(&mut rng, loss);
            let fit = fit_l1_linear(&p.matrix(), &p.y, &config(&p)).unwrap();
            assert!(fit.converged, "round {round} {loss:?}");
            assert!(fit.kkt_residual <= 1e-4);
            let (grid, _) = p.grid_minimum();
            let mine = p.objective(&fit.weights);
            assert!(mine <= grid * (1.0 + 1e-3), "{loss:?}: {mine} vs grid {grid}");
            assert!((mine - grid).abs() <= 1e-3 * grid.abs(), "{loss:?}: {mine} vs grid {grid}");
        }
    }
}

#[test]
fn reported_objective_matches_independent_evaluation() {
    let mut rng = oracle::rng(7);
    for loss in LOSSES {
        let p = GridProblem::random(&mut rng, loss);
        let cfg = config(&p);
        let fit = fit_l1_linear(&p.matrix(), &p.y, &cfg).unwrap();
        let lib = objective(&p.matrix(), &p.y, &fit.weights, 0.0, &cfg).unwrap();
        assert!((fit.objective - p.objective(&fit.weights)).abs() <= 1e-9 * fit.objective.max(1.0));
        assert!((fit.objective - lib).abs() <= 1e-9 * fit.objective.max(1.0));
    }
}

#[test]
fn objective_never_increases_across_epochs() {
    let mut rng = oracle::rng(11);
    let x = Matrix::from_vec(60, 8, (0..480).map(|_| oracle::normal(&mut rng)).collect());
    let y: Vec<f64> = (0..60).map(|i| if x.get(i, 0) + x.get(i, 1) > 0.0 { 1.0 } else { -1.0 }).collect();
    for loss in LOSSES {
        let mut prev = f64::INFINITY;
        for k in 1..=12 {
            let cfg = SolverConfig::new(0.7, loss)
                .with_epsilon(0.2)
                .with_intercept(loss != Loss::SquaredHinge)
                .with_tol(1e-14)
                .with_max_epochs(k)
                .with_seed(5);
            let fit = fit_l1_linear(&x, &y, &cfg).unwrap();
            assert!(fit.objective <= prev + 1e-12, "{loss:?} epoch {k}: {} > {prev}", fit.objective);
            prev = fit.objective;
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = oracle::rng(19);
    let x = Matrix::from_vec(25, 4, (0..100).map(|_| oracle::normal(&mut rng)).collect());
    let y: Vec<f64> = (0..25).map(|_| oracle::normal(&mut rng)).collect();
    let w = vec![0.3, -0.7, 0.1, 1.2];
    let b = 0.25;
    for loss in LOSSES {
        let y: Vec<f64> = if loss == Loss::SquaredHinge { y.iter().map(|v| v.signum()).collect() } else { y.clone() };
        let cfg = SolverConfig::new(0.9, loss).with_epsilon(0.3).with_intercept(true);
        let (g, gb) = data_fit_gradient(&x, &y, &w, b, &cfg).unwrap();
        let smooth = |w: &[f64], b: f64| {
            let rows: Vec<Vec<f64>> = (0..25).map(|i| x.row(i).to_vec()).collect();
            (0..25)
                .map(|i| {
                    let f: f64 = rows[i].iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
                    oracle::loss_value(loss, 0.3, y[i], f)
                })
                .sum::<f64>()
                * 0.9
        };
        let h = 1e-6;
        for j in 0..4 {
            let mut up = w.clone();
            let mut down = w.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (smooth(&up, b) - smooth(&down, b)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1.0), "{loss:?} w{j}: {fd} vs {}", g[j]);
        }
        let fd = (smooth(&w, b + h) - smooth(&w, b - h)) / (2.0 * h);
        assert!((fd - gb).abs() <= 1e-5 * gb.abs().max(1.0), "{loss:?} b: {fd} vs {gb}");
    }
}

#[test]
fn strong_regularization_gives_exact_zeros() {
    let mut rng = oracle::rng(23);
    let x = Matrix::from_vec(40, 6, (0..240).map(|_| oracle::normal(&mut rng)).collect());
    let y: Vec<f64> = (0..40).map(|i| x.get(i, 0)).collect();
    let fit = fit_l1_linear(&x, &y, &SolverConfig::new(1e-4, Loss::Squared)).unwrap();
    assert!(fit.weights.iter().all(|&w| w == 0.0));
    assert_eq!(fit.nonzero_count(), 0);
    assert!(kkt_residual(&x, &y, &fit.weights, 0.0, &SolverConfig::new(1e-4, Loss::Squared)).unwrap() == 0.0);
}

#[test]
fn same_seed_same_bits() {
    let mut rng = oracle::rng(29);
    let x = Matrix::from_vec(50, 10, (0..500).map(|_| oracle::normal(&mut rng)).collect());
    let y: Vec<f64> = (0..50).map(|i| (x.get(i, 2) - x.get(i, 5)).signum()).collect();
    let cfg = SolverConfig::new(0.5, Loss::SquaredHinge).with_seed(77);
    let a = fit_l1_linear(&x, &y, &cfg).unwrap();
    let b = fit_l1_linear(&x, &y, &cfg).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_closed_form(
        xs in prop::collection::vec(-3.0f64..3.0, 2..30),
        noise in prop::collection::vec(-1.0f64..1.0, 30),
        slope in -2.0f64..2.0,
        c in 0.01f64..5.0,
    ) {
        prop_assume!(xs.iter().map(|v| v * v).sum::<f64>() > 1e-2);
        let y: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| slope * x + e).collect();
        let x = Matrix::from_vec(xs.len(), 1, xs.clone());
        let fit = fit_l1_linear(&x, &y, &SolverConfig::new(c, Loss::Squared)).unwrap();
        let expected = oracle::scalar_lasso(&xs, &y, c);
        prop_assert!((fit.weights[0] - expected).abs() <= 1e-8 * expected.abs().max(1.0),
            "{} vs {}", fit.weights[0], expected);
    }

    #[test]
    fn kkt_small_at_convergence(seed in 0u64..1000, loss_ix in 0usize..3) {
        let mut rng = oracle::rng(seed);
        let p = GridProblem::random(&mut rng, LOSSES[loss_ix]);
        let cfg = config(&p);
        let fit = fit_l1_linear(&p.matrix(), &p.y, &cfg).unwrap();
        prop_assert!(fit.converged);
        let kkt = kkt_residual(&p.matrix(), &p.y, &fit.weights, 0.0, &cfg).unwrap();
        prop_assert!(kkt <= cfg.tol);
    }
}
