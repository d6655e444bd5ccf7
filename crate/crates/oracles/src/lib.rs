//! Slow, obviously-correct reference implementations for tests.
//!
//! Nothing here calls into the code under test except for data types.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rankalign::{Cohort, Loss, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Box-Muller standard normal.
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random cohort with `n` rows, `m` features and integer-valued ratings
/// (so ties and boundary differences occur).
pub fn random_cohort(rng: &mut impl Rng, n: usize, m: usize, with_label: bool) -> Cohort {
    let x: Vec<f64> = (0..n * m).map(|_| normal(rng)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..=100) as f64).collect();
    let labels = with_label.then(|| {
        let mut l: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        l[0] = 0;
        l[n - 1] = 1;
        l
    });
    Cohort::new(
        (0..n).map(|i| format!("r{i}")).collect(),
        (0..m).map(|j| format!("x{j}")).collect(),
        Matrix::from_vec(n, m, x),
        y,
        labels,
    )
    .expect("valid random cohort")
}

/// One enumerated pair: `(i, j)`, `x_i - x_j`, `sign(y_i - y_j)`.
pub type BrutePair = ((usize, usize), Vec<f64>, f64);

/// Every `i < j` with `|y_i - y_j| >= delta` and `y_i != y_j`.
pub fn brute_pairs(cohort: &Cohort, delta: f64) -> Vec<BrutePair> {
    let y = cohort.rating();
    let x = cohort.features();
    let mut out = Vec::new();
    for i in 0..cohort.n() {
        for j in 0..cohort.n() {
            if i >= j || y[i] == y[j] || (y[i] - y[j]).abs() < delta {
                continue;
            }
            let diff = (0..cohort.m()).map(|k| x.get(i, k) - x.get(j, k)).collect();
            let sign = if y[i] > y[j] { 1.0 } else { -1.0 };
            out.push(((i, j), diff, sign));
        }
    }
    out
}

pub fn loss_value(loss: Loss, epsilon: f64, y: f64, f: f64) -> f64 {
    let t = match loss {
        Loss::SquaredHinge => 1.0 - y * f,
        Loss::Squared => return (y - f) * (y - f),
        Loss::EpsilonInsensitive => (y - f).abs() - epsilon,
    };
    if t > 0.0 {
        t * t
    } else {
        0.0
    }
}

/// `||w||_1 + c * sum loss(y_p, w.x_p)`, no intercept.
pub fn objective(x: &[Vec<f64>], y: &[f64], w: &[f64], loss: Loss, epsilon: f64, c: f64) -> f64 {
    let mut total = 0.0;
    for (row, &yp) in x.iter().zip(y) {
        let f: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
        total += loss_value(loss, epsilon, yp, f);
    }
    w.iter().map(|v| v.abs()).sum::<f64>() + c * total
}

pub const GRID_STEPS: usize = 1000;

/// Grid point `k` of `[-5, 5]` at step 0.01; exact zero at `k = 500`.
pub fn grid_value(k: usize) -> f64 {
    (k as f64 - 500.0) / 100.0
}

/// Minimum of the intercept-free objective over the grid `[-5, 5]^m`
/// (step 0.01), for `m <= 3`. The leading coordinates are enumerated in
/// full. Along the last one the objective is convex, so its samples form a
/// convex sequence and a downhill walk from the previous minimizer ends at
/// the exact grid minimum.
pub fn grid_minimum(x: &[Vec<f64>], y: &[f64], loss: Loss, epsilon: f64, c: f64) -> (f64, Vec<f64>) {
    let m = x.first().map_or(0, |r| r.len());
    assert!((1..=3).contains(&m), "grid oracle supports 1 to 3 features");
    let lead = m - 1;
    let mut best = (f64::INFINITY, vec![0.0; m]);
    let mut w = vec![0.0; m];
    let mut last_k = GRID_STEPS / 2;
    let outer = (GRID_STEPS + 1).pow(lead as u32);
    for code in 0..outer {
        let mut rest = code;
        for slot in w.iter_mut().take(lead) {
            *slot = grid_value(rest % (GRID_STEPS + 1));
            rest /= GRID_STEPS + 1;
        }
        let eval = |k: usize, w: &mut Vec<f64>| {
            w[lead] = grid_value(k);
            objective(x, y, w, loss, epsilon, c)
        };
        let mut k = last_k;
        let mut v = eval(k, &mut w);
        loop {
            if k > 0 {
                let lv = eval(k - 1, &mut w);
                if lv < v {
                    k -= 1;
                    v = lv;
                    continue;
                }
            }
            if k < GRID_STEPS {
                let rv = eval(k + 1, &mut w);
                if rv < v {
                    k += 1;
                    v = rv;
                    continue;
                }
            }
            break;
        }
        last_k = k;
        if v < best.0 {
            w[lead] = grid_value(k);
            best = (v, w.clone());
        }
    }
    best
}

/// A small intercept-free problem for the grid oracle.
#[derive(Debug, Clone)]
pub struct GridProblem {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub loss: Loss,
    pub epsilon: f64,
    pub c: f64,
}

impl GridProblem {
    /// `m` in 1..=3, `P` in 5..=40, noisy targets so the optimum is finite.
    pub fn random(rng: &mut impl Rng, loss: Loss) -> Self {
        let m = rng.random_range(1..=3);
        let p = rng.random_range(5..=40);
        let truth: Vec<f64> = (0..m).map(|_| rng.random_range(-1.5..1.5)).collect();
        let x: Vec<Vec<f64>> = (0..p).map(|_| (0..m).map(|_| normal(rng)).collect()).collect();
        let y = x
            .iter()
            .map(|row| {
                let f: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + 0.5 * normal(rng);
                match loss {
                    Loss::SquaredHinge => {
                        if f >= 0.0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    _ => f,
                }
            })
            .collect();
        let c = rng.random_range(0.05..1.0);
        let epsilon = if loss == Loss::EpsilonInsensitive { 0.3 } else { 0.0 };
        GridProblem { x, y, loss, epsilon, c }
    }

    pub fn matrix(&self) -> Matrix {
        Matrix::from_rows(&self.x).expect("rectangular rows")
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        objective(&self.x, &self.y, w, self.loss, self.epsilon, self.c)
    }

    pub fn grid_minimum(&self) -> (f64, Vec<f64>) {
        grid_minimum(&self.x, &self.y, self.loss, self.epsilon, self.c)
    }
}

/// Minimizer of `|w| + c * sum (y_p - w x_p)^2` over scalar `w`.
pub fn scalar_lasso(x: &[f64], y: &[f64], c: f64) -> f64 {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let z = 2.0 * c * sxy;
    let shrunk = if z > 1.0 {
        z - 1.0
    } else if z < -1.0 {
        z + 1.0
    } else {
        0.0
    };
    shrunk / (2.0 * c * sxx)
}

/// Fraction of (positive, negative) pairs ordered correctly, ties half.
pub fn mann_whitney(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut total = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            total += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / total
}

/// Sample covariance over the product of sample standard deviations.
pub fn textbook_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
    let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    cov / (sa * sb)
}

/// 1-based ranks by counting, ties averaged.
pub fn counting_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&u| u < x).count() as f64;
            let equal = v.iter().filter(|&&u| u == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn textbook_spearman(a: &[f64], b: &[f64]) -> f64 {
    textbook_pearson(&counting_ranks(a), &counting_ranks(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_exact_at_zero() {
        assert_eq!(grid_value(500), 0.0);
        assert_eq!(grid_value(0), -5.0);
        assert_eq!(grid_value(1000), 5.0);
    }

    #[test]
    fn grid_minimum_of_separable_quadratic() {
        // |w| + c((1 - w1)^2 + (2 - w2)^2) with c = 1: w = (0.5, 1.5), value 2.5
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let y = vec![1.0, 2.0];
        let (v, w) = grid_minimum(&x, &y, Loss::Squared, 0.0, 1.0);
        assert!((v - 2.5).abs() < 1e-12);
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn hand_checked_metrics() {
        assert_eq!(mann_whitney(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]), 0.75);
        assert!((textbook_pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-15);
        assert!((textbook_spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]) - 0.5).abs() < 1e-15);
        assert_eq!(counting_ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn scalar_lasso_hand_value() {
        // 2c*sxy = 4, 2c*sxx = 2: w = (4 - 1) / 2
        assert_eq!(scalar_lasso(&[1.0], &[2.0], 1.0), 1.5);
        assert_eq!(scalar_lasso(&[1.0], &[0.1], 1.0), 0.0);
    }
}
