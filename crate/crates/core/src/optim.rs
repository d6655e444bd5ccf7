//! L1-regularized linear solvers.
//!
//! Every problem has the form
//!
//! ```text
//! minimize  ||w||_1 + c * sum_p loss(y_p, w·x_p + b)
//! ```
//!
//! with one of three twice-differentiable (almost everywhere) losses:
//!
//! | loss                  | value                         |
//! |-----------------------|-------------------------------|
//! | `SquaredHinge`        | `max(0, 1 - y f)^2`           |
//! | `Squared`             | `(y - f)^2`                   |
//! | `EpsilonInsensitive`  | `max(0, |y - f| - eps)^2`     |
//!
//! The solver is randomized-order cyclic coordinate descent. Each coordinate
//! takes a Newton step on the data-fit term combined with the exact L1
//! proximal (soft-threshold) solution, followed by an Armijo backtracking line
//! search. A full step onto zero lands on exactly `0.0`, so sparsity is exact.
//! The intercept, when fitted, is an unpenalized extra coordinate.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::seed;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_EPOCHS: usize = 10_000;
/// Weights with magnitude at or below this are counted as zero.
pub const ZERO_GUARD: f64 = 1e-10;

const ARMIJO_SIGMA: f64 = 0.01;
const MAX_BACKTRACK: usize = 30;
const MIN_CURVATURE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("hinge loss requires labels in {{-1, +1}}, found {0}")]
    InvalidLabel(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("problem has no rows")]
    Empty,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    SquaredHinge,
    Squared,
    EpsilonInsensitive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Loss weight; larger means weaker regularization.
    pub c: f64,
    pub loss: Loss,
    /// Tube half-width for `EpsilonInsensitive`; ignored otherwise.
    pub epsilon: f64,
    pub fit_intercept: bool,
    /// Stop once the KKT residual is at most this.
    pub tol: f64,
    pub max_epochs: usize,
    /// Seeds the per-epoch coordinate order.
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(c: f64, loss: Loss) -> Self {
        Self {
            c,
            loss,
            epsilon: 0.0,
            fit_intercept: false,
            tol: DEFAULT_TOL,
            max_epochs: DEFAULT_MAX_EPOCHS,
            seed: 0,
        }
    }

    pub fn with_intercept(mut self, fit: bool) -> Self {
        self.fit_intercept = fit;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_epochs(mut self, max_epochs: usize) -> Self {
        self.max_epochs = max_epochs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |msg: String| Err(OptimError::InvalidConfig(msg));
        if !(self.c.is_finite() && self.c > 0.0) {
            return bad(format!("c must be positive, got {}", self.c));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub epochs_run: usize,
    pub objective: f64,
    pub converged: bool,
    pub kkt_residual: f64,
}

impl FitResult {
    pub fn nonzero_count(&self) -> usize {
        self.weights.iter().filter(|w| w.abs() > ZERO_GUARD).count()
    }
}

/// Pointwise loss with first and second derivatives in the prediction `f`.
#[derive(Clone, Copy)]
struct PointLoss {
    loss: Loss,
    epsilon: f64,
}

impl PointLoss {
    #[inline]
    fn value(self, f: f64, y: f64) -> f64 {
        match self.loss {
            Loss::SquaredHinge => {
                let z = 1.0 - y * f;
                if z > 0.0 {
                    z * z
                } else {
                    0.0
                }
            }
            Loss::Squared => {
                let r = y - f;
                r * r
            }
            Loss::EpsilonInsensitive => {
                let e = (y - f).abs() - self.epsilon;
                if e > 0.0 {
                    e * e
                } else {
                    0.0
                }
            }
        }
    }

    /// `value(f + s, y) - value(f, y)` without cancellation when both points
    /// sit on the same quadratic piece.
    #[inline]
    fn change(self, f: f64, y: f64, s: f64) -> f64 {
        match self.loss {
            Loss::SquaredHinge => {
                let z0 = 1.0 - y * f;
                let z1 = 1.0 - y * (f + s);
                if z0 > 0.0 && z1 > 0.0 {
                    -y * s * (z0 + z1)
                } else {
                    self.value(f + s, y) - self.value(f, y)
                }
            }
            Loss::Squared => {
                let r0 = y - f;
                let r1 = y - (f + s);
                -s * (r0 + r1)
            }
            Loss::EpsilonInsensitive => {
                let r0 = f - y;
                let r1 = f + s - y;
                let e0 = r0.abs() - self.epsilon;
                let e1 = r1.abs() - self.epsilon;
                if e0 > 0.0 && e1 > 0.0 && r0.signum() == r1.signum() {
                    r0.signum() * s * (e0 + e1)
                } else {
                    self.value(f + s, y) - self.value(f, y)
                }
            }
        }
    }

    /// `(dL/df, d2L/df2)`; the second derivative is the generalized one.
    #[inline]
    fn derivs(self, f: f64, y: f64) -> (f64, f64) {
        match self.loss {
            Loss::SquaredHinge => {
                let z = 1.0 - y * f;
                if z > 0.0 {
                    (-2.0 * y * z, 2.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Loss::Squared => (2.0 * (f - y), 2.0),
            Loss::EpsilonInsensitive => {
                let r = f - y;
                let e = r.abs() - self.epsilon;
                if e > 0.0 {
                    (2.0 * r.signum() * e, 2.0)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }
}

/// A design matrix and targets prepared for repeated fits (column-major copy,
/// validated once). Use [`Problem::fit`] with a warm start to trace a path
/// over `c`.
#[derive(Debug, Clone)]
pub struct Problem {
    rows: usize,
    cols: usize,
    columns: Vec<f64>,
    y: Vec<f64>,
    loss: Loss,
}

impl Problem {
    pub fn new(x: &Matrix, y: &[f64], loss: Loss) -> Result<Self, OptimError> {
        check_inputs(x, y, loss)?;
        Ok(Self {
            rows: x.rows(),
            cols: x.cols(),
            columns: x.to_column_major(),
            y: y.to_vec(),
            loss,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    fn column(&self, j: usize) -> &[f64] {
        &self.columns[j * self.rows..(j + 1) * self.rows]
    }

    fn predictions(&self, w: &[f64], b: f64) -> Vec<f64> {
        let mut f = vec![b; self.rows];
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                for (fp, x) in f.iter_mut().zip(self.column(j)) {
                    *fp += wj * x;
                }
            }
        }
        f
    }

    /// Minimizes the L1 objective, optionally starting from `warm`
    /// (`(weights, intercept)`), e.g. the solution at a neighbouring `c`.
    pub fn fit(&self, cfg: &SolverConfig, warm: Option<(&[f64], f64)>) -> Result<FitResult, OptimError> {
        cfg.validate()?;
        if cfg.loss != self.loss {
            return Err(OptimError::InvalidConfig(format!(
                "problem prepared for {:?} but config asks for {:?}",
                self.loss, cfg.loss
            )));
        }
        let (mut w, mut b) = match warm {
            Some((w0, b0)) => {
                if w0.len() != self.cols {
                    return Err(OptimError::Shape(format!(
                        "warm start has {} weights, problem has {} columns",
                        w0.len(),
                        self.cols
                    )));
                }
                (w0.to_vec(), if cfg.fit_intercept { b0 } else { 0.0 })
            }
            None => (vec![0.0; self.cols], 0.0),
        };
        let pl = PointLoss {
            loss: cfg.loss,
            epsilon: cfg.epsilon,
        };
        let c = cfg.c;
        let mut f = self.predictions(&w, b);
        let mut next = vec![0.0; self.rows];
        let mut order: Vec<usize> = (0..self.cols).collect();
        let mut rng = seed::rng(cfg.seed);

        let mut epochs_run = 0;
        let mut converged = false;
        let mut kkt = f64::INFINITY;
        while epochs_run < cfg.max_epochs {
            epochs_run += 1;
            let mut max_violation: f64 = 0.0;
            let mut moved = false;

            if cfg.fit_intercept {
                let (g, h) = self.intercept_derivs(pl, c, &f);
                max_violation = max_violation.max(g.abs());
                let d = -g / h.max(MIN_CURVATURE);
                if d != 0.0 {
                    if let Some(s) = self.line_search(pl, c, &f, &mut next, None, g, d, 0.0, false) {
                        std::mem::swap(&mut f, &mut next);
                        b += s;
                        moved = true;
                    }
                }
            }

            order.shuffle(&mut rng);
            for &j in &order {
                let col = self.column(j);
                let (g, h) = self.coord_derivs(pl, c, &f, col);
                let wj = w[j];
                max_violation = max_violation.max(violation(wj, g));

                let h = h.max(MIN_CURVATURE);
                let (d, to_zero) = if g + 1.0 <= h * wj {
                    (-(g + 1.0) / h, false)
                } else if g - 1.0 >= h * wj {
                    (-(g - 1.0) / h, false)
                } else {
                    (-wj, true)
                };
                if d == 0.0 {
                    continue;
                }
                if let Some(s) = self.line_search(pl, c, &f, &mut next, Some(col), g, d, wj, to_zero) {
                    std::mem::swap(&mut f, &mut next);
                    w[j] = if to_zero && s == d { 0.0 } else { wj + s };
                    moved = true;
                }
            }

            if max_violation <= cfg.tol || !moved {
                kkt = self.kkt_at(pl, c, cfg.fit_intercept, &w, &f);
                if kkt <= cfg.tol {
                    converged = true;
                    break;
                }
                // No coordinate can make progress in floating point.
                if !moved {
                    break;
                }
            }
        }
        if !converged {
            kkt = self.kkt_at(pl, c, cfg.fit_intercept, &w, &f);
        }
        let objective = self.objective_at(pl, c, &w, b);
        Ok(FitResult {
            weights: w,
            intercept: b,
            epochs_run,
            objective,
            converged,
            kkt_residual: kkt,
        })
    }

    #[inline]
    fn coord_derivs(&self, pl: PointLoss, c: f64, f: &[f64], col: &[f64]) -> (f64, f64) {
        let mut g = 0.0;
        let mut h = 0.0;
        for ((&fp, &yp), &x) in f.iter().zip(&self.y).zip(col) {
            let (d1, d2) = pl.derivs(fp, yp);
            g += d1 * x;
            h += d2 * x * x;
        }
        (c * g, c * h)
    }

    fn intercept_derivs(&self, pl: PointLoss, c: f64, f: &[f64]) -> (f64, f64) {
        let mut g = 0.0;
        let mut h = 0.0;
        for (&fp, &yp) in f.iter().zip(&self.y) {
            let (d1, d2) = pl.derivs(fp, yp);
            g += d1;
            h += d2;
        }
        (c * g, c * h)
    }

    /// Backtracking search along `d` for one coordinate (`col = None` is the
    /// intercept, which carries no L1 term). On success returns the accepted
    /// step and leaves the updated predictions in `next`.
    #[allow(clippy::too_many_arguments)]
    fn line_search(
        &self,
        pl: PointLoss,
        c: f64,
        f: &[f64],
        next: &mut [f64],
        col: Option<&[f64]>,
        g: f64,
        d: f64,
        wj: f64,
        to_zero: bool,
    ) -> Option<f64> {
        let penalized = col.is_some();
        let l1 = |v: f64| if penalized { v.abs() } else { 0.0 };
        let predicted = g * d + l1(wj + d) - l1(wj);
        // Squared loss is exactly quadratic: the Newton/soft-threshold step is
        // the exact coordinate minimizer.
        let exact = self.loss == Loss::Squared;
        let mut lambda = 1.0;
        for _ in 0..MAX_BACKTRACK {
            let s = lambda * d;
            let new_w = if to_zero && lambda == 1.0 { 0.0 } else { wj + s };
            let mut change = 0.0;
            match col {
                Some(col) => {
                    for (((nf, &fp), &yp), &x) in next.iter_mut().zip(f).zip(&self.y).zip(col) {
                        let step = s * x;
                        *nf = fp + step;
                        if !exact {
                            change += pl.change(fp, yp, step);
                        }
                    }
                }
                None => {
                    for ((nf, &fp), &yp) in next.iter_mut().zip(f).zip(&self.y) {
                        *nf = fp + s;
                        if !exact {
                            change += pl.change(fp, yp, s);
                        }
                    }
                }
            }
            if exact {
                return Some(s);
            }
            let total = c * change + l1(new_w) - l1(wj);
            if total <= ARMIJO_SIGMA * lambda * predicted {
                return Some(s);
            }
            lambda *= 0.5;
        }
        None
    }

    fn kkt_at(&self, pl: PointLoss, c: f64, fit_intercept: bool, w: &[f64], f: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &wj) in w.iter().enumerate() {
            let (g, _) = self.coord_derivs(pl, c, f, self.column(j));
            worst = worst.max(violation(wj, g));
        }
        if fit_intercept {
            let (g, _) = self.intercept_derivs(pl, c, f);
            worst = worst.max(g.abs());
        }
        worst
    }

    fn data_fit_at(&self, pl: PointLoss, f: &[f64]) -> f64 {
        f.iter().zip(&self.y).map(|(&fp, &yp)| pl.value(fp, yp)).sum()
    }

    fn objective_at(&self, pl: PointLoss, c: f64, w: &[f64], b: f64) -> f64 {
        let f = self.predictions(w, b);
        w.iter().map(|v| v.abs()).sum::<f64>() + c * self.data_fit_at(pl, &f)
    }
}

/// Subgradient optimality violation of one penalized coordinate with
/// data-fit partial derivative `g`.
#[inline]
fn violation(wj: f64, g: f64) -> f64 {
    if wj == 0.0 {
        (g.abs() - 1.0).max(0.0)
    } else {
        (g + wj.signum()).abs()
    }
}

fn check_inputs(x: &Matrix, y: &[f64], loss: Loss) -> Result<(), OptimError> {
    if x.rows() != y.len() {
        return Err(OptimError::Shape(format!(
            "{} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() == 0 {
        return Err(OptimError::Empty);
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::NonFinite);
    }
    if loss == Loss::SquaredHinge {
        if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(OptimError::InvalidLabel(bad));
        }
    }
    Ok(())
}

fn check_point(x: &Matrix, y: &[f64], w: &[f64], b: f64) -> Result<(), OptimError> {
    if x.rows() != y.len() || x.cols() != w.len() {
        return Err(OptimError::Shape(format!(
            "x is {}x{}, y has {}, w has {}",
            x.rows(),
            x.cols(),
            y.len(),
            w.len()
        )));
    }
    if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::NonFinite);
    }
    Ok(())
}

/// Fits an L1-regularized linear model from a cold start.
pub fn fit_l1_linear(x: &Matrix, y: &[f64], cfg: &SolverConfig) -> Result<FitResult, OptimError> {
    Problem::new(x, y, cfg.loss)?.fit(cfg, None)
}

fn point_loss(cfg: &SolverConfig) -> PointLoss {
    PointLoss {
        loss: cfg.loss,
        epsilon: cfg.epsilon,
    }
}

fn predict_rows(x: &Matrix, w: &[f64], b: f64) -> Vec<f64> {
    (0..x.rows())
        .map(|i| crate::matrix::dot(x.row(i), w) + b)
        .collect()
}

/// Sum of pointwise losses, without `c` and without the penalty.
pub fn data_fit(x: &Matrix, y: &[f64], w: &[f64], b: f64, cfg: &SolverConfig) -> Result<f64, OptimError> {
    check_point(x, y, w, b)?;
    let pl = point_loss(cfg);
    Ok(predict_rows(x, w, b)
        .iter()
        .zip(y)
        .map(|(&f, &yp)| pl.value(f, yp))
        .sum())
}

/// `||w||_1 + c * data_fit`.
pub fn objective(x: &Matrix, y: &[f64], w: &[f64], b: f64, cfg: &SolverConfig) -> Result<f64, OptimError> {
    let fit = data_fit(x, y, w, b, cfg)?;
    Ok(w.iter().map(|v| v.abs()).sum::<f64>() + cfg.c * fit)
}

/// Gradient of `c * data_fit` with respect to the weights and the intercept.
pub fn data_fit_gradient(
    x: &Matrix,
    y: &[f64],
    w: &[f64],
    b: f64,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, f64), OptimError> {
    check_point(x, y, w, b)?;
    let pl = point_loss(cfg);
    let f = predict_rows(x, w, b);
    let mut g = vec![0.0; x.cols()];
    let mut gb = 0.0;
    for (i, (&fp, &yp)) in f.iter().zip(y).enumerate() {
        let (d1, _) = pl.derivs(fp, yp);
        gb += d1;
        for (gj, xv) in g.iter_mut().zip(x.row(i)) {
            *gj += d1 * xv;
        }
    }
    g.iter_mut().for_each(|v| *v *= cfg.c);
    Ok((g, cfg.c * gb))
}

/// Largest violation of the L1 optimality conditions at `(w, b)`: for
/// `w_j = 0`, `max(0, |g_j| - 1)`; otherwise `|g_j + sign(w_j)|`. When the
/// intercept is fitted its gradient magnitude is included.
pub fn kkt_residual(x: &Matrix, y: &[f64], w: &[f64], b: f64, cfg: &SolverConfig) -> Result<f64, OptimError> {
    let (g, gb) = data_fit_gradient(x, y, w, b, cfg)?;
    let mut worst = w
        .iter()
        .zip(&g)
        .map(|(&wj, &gj)| violation(wj, gj))
        .fold(0.0, f64::max);
    if cfg.fit_intercept {
        worst = worst.max(gb.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn soft_threshold(z: f64, t: f64) -> f64 {
        z.signum() * (z.abs() - t).max(0.0)
    }

    /// Minimizer of |w| + c * sum (y - w x)^2.
    fn scalar_lasso(x: &[f64], y: &[f64], c: f64) -> f64 {
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        soft_threshold(2.0 * c * sxy, 1.0) / (2.0 * c * sxx)
    }

    fn column(v: &[f64]) -> Matrix {
        Matrix::from_vec(v.len(), 1, v.to_vec())
    }

    #[test]
    fn symmetric_separable_pair() {
        let x = Matrix::from_rows(&[[-1.0], [1.0]]).unwrap();
        let cfg = SolverConfig::new(100.0, Loss::SquaredHinge).with_intercept(true);
        let r = fit_l1_linear(&x, &[-1.0, 1.0], &cfg).unwrap();
        assert!(r.converged);
        assert!(r.weights[0] > 0.0);
        assert!(r.intercept.abs() < 1e-8);
    }

    #[test]
    fn tiny_c_gives_exact_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for loss in [Loss::SquaredHinge, Loss::Squared, Loss::EpsilonInsensitive] {
            let r = fit_l1_linear(&x, &y, &SolverConfig::new(1e-6, loss)).unwrap();
            assert!(r.weights.iter().all(|&w| w == 0.0), "{loss:?}");
            assert!(r.converged);
        }
    }

    #[test]
    fn scalar_lasso_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(1..30);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = x
                .iter()
                .map(|v| 1.7 * v + rng.random_range(-2.0..2.0))
                .collect();
            let c = 10f64.powf(rng.random_range(-3.0..1.0));
            let want = scalar_lasso(&x, &y, c);
            let r = fit_l1_linear(&column(&x), &y, &SolverConfig::new(c, Loss::Squared)).unwrap();
            assert!((r.weights[0] - want).abs() < 1e-8, "{} vs {}", r.weights[0], want);
            if want == 0.0 {
                assert_eq!(r.weights[0], 0.0);
            }
        }
    }

    #[test]
    fn objective_hand_values() {
        let x = column(&[2.0]);
        let cfg = SolverConfig::new(1.0, Loss::SquaredHinge);
        assert_eq!(objective(&x, &[1.0], &[1.0], 0.0, &cfg).unwrap(), 1.0);

        let x = Matrix::from_rows(&[[1.0], [-2.0], [0.5]]).unwrap();
        let cfg = SolverConfig::new(0.3, Loss::SquaredHinge);
        let v = objective(&x, &[1.0, -1.0, 1.0], &[0.0], 0.0, &cfg).unwrap();
        assert!((v - 0.3 * 3.0).abs() < 1e-15);

        // exact fit leaves only the penalty
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let cfg = SolverConfig::new(5.0, Loss::Squared);
        assert_eq!(objective(&x, &[2.0, -2.0], &[2.0, -1.0], 0.0, &cfg).unwrap(), 3.0);

        assert!(matches!(
            objective(&x, &[1.0], &[0.0, 0.0], 0.0, &cfg),
            Err(OptimError::Shape(_))
        ));
    }

    #[test]
    fn kkt_residual_cases() {
        let x: Vec<f64> = vec![0.5, -1.0, 2.0, 1.5];
        let y: Vec<f64> = vec![1.0, -0.5, 2.5, 0.7];
        let c = 0.8;
        let cfg = SolverConfig::new(c, Loss::Squared);
        let xm = column(&x);
        let w = scalar_lasso(&x, &y, c);
        assert!(w != 0.0);
        assert!(kkt_residual(&xm, &y, &[w], 0.0, &cfg).unwrap() <= 1e-9);
        assert!(kkt_residual(&xm, &y, &[w + 0.1], 0.0, &cfg).unwrap() > 0.0);

        // small c keeps 0 inside the subdifferential
        let cfg = SolverConfig::new(0.01, Loss::Squared);
        assert_eq!(kkt_residual(&xm, &y, &[0.0], 0.0, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        let x = column(&[1.0, 2.0]);
        let cfg = SolverConfig::new(1.0, Loss::SquaredHinge);
        assert!(matches!(
            fit_l1_linear(&x, &[1.0, 0.0], &cfg),
            Err(OptimError::InvalidLabel(_))
        ));
        assert!(matches!(
            fit_l1_linear(&column(&[1.0, f64::NAN]), &[1.0, -1.0], &cfg),
            Err(OptimError::NonFinite)
        ));
        assert!(matches!(
            fit_l1_linear(&x, &[1.0], &cfg),
            Err(OptimError::Shape(_))
        ));
        assert!(matches!(
            fit_l1_linear(&x, &[1.0, -1.0], &SolverConfig::new(0.0, Loss::SquaredHinge)),
            Err(OptimError::InvalidConfig(_))
        ));
    }

    #[test]
    fn intercept_is_best_constant_when_weights_vanish() {
        let x = column(&[0.1, -0.2, 0.05, 0.0]);
        let y = [10.0, 20.0, 30.0, 40.0];
        let cfg = SolverConfig::new(1e-4, Loss::Squared).with_intercept(true);
        let r = fit_l1_linear(&x, &y, &cfg).unwrap();
        assert_eq!(r.weights, vec![0.0]);
        assert!((r.intercept - 25.0).abs() < 1e-9);
    }

    #[test]
    fn warm_start_reaches_same_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| if r[0] - r[2] + 0.3 * rng.random_range(-1.0..1.0) > 0.0 { 1.0 } else { -1.0 })
            .collect();
        let p = Problem::new(&x, &y, Loss::SquaredHinge).unwrap();
        let cold = p.fit(&SolverConfig::new(2.0, Loss::SquaredHinge), None).unwrap();
        let low = p.fit(&SolverConfig::new(0.5, Loss::SquaredHinge), None).unwrap();
        let warm = p
            .fit(&SolverConfig::new(2.0, Loss::SquaredHinge), Some((&low.weights, 0.0)))
            .unwrap();
        assert!(cold.converged && warm.converged);
        assert!((cold.objective - warm.objective).abs() < 1e-8 * cold.objective);
    }
}
