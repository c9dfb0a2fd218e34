//! Covariance matrix adaptation evolution strategy.
//!
//! A self-contained minimizer used both for goal inference (2-D searches over
//! candidate insertion offsets) and for parameter tuning (up to 11-D searches
//! over controller and inference parameters). The update follows the standard
//! scheme: rank-based recombination with log weights, cumulative step-size
//! adaptation, and rank-1 plus rank-μ covariance adaptation. Box bounds are
//! enforced by reflection at the edges, and the covariance is regularized so
//! the strategy survives the tiny populations the tuner is allowed to pick.

use crate::rng::{standard_normal, stream};
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Configuration of one minimization run.
#[derive(Clone, Debug)]
pub struct EsConfig {
    pub dim: usize,
    pub mean0: DVector<f64>,
    /// Initial step size.
    pub sigma0: f64,
    /// Population size λ.
    pub pop_size: usize,
    /// Elite (parent) count μ ≤ λ.
    pub elite_size: usize,
    pub max_gens: usize,
    /// Per-dimension `[lo, hi]` box.
    pub bounds: Vec<[f64; 2]>,
    pub seed: u64,
    /// Added to the worst finite fitness when a candidate evaluates to the
    /// infeasible sentinel.
    pub infeasible_penalty: f64,
}

impl EsConfig {
    pub fn new(mean0: DVector<f64>, sigma0: f64, bounds: Vec<[f64; 2]>, seed: u64) -> Self {
        let dim = mean0.len();
        assert_eq!(bounds.len(), dim);
        let pop_size = 4 + (3.0 * (dim as f64).ln()).floor() as usize;
        EsConfig {
            dim,
            mean0,
            sigma0,
            pop_size,
            elite_size: pop_size / 2,
            max_gens: 100,
            bounds,
            seed,
            infeasible_penalty: 100.0,
        }
    }

    fn validate(&self) {
        assert!(self.dim >= 1);
        assert!(self.sigma0 > 0.0, "sigma0 must be positive");
        assert!(self.elite_size >= 1 && self.elite_size <= self.pop_size);
        for (i, b) in self.bounds.iter().enumerate() {
            assert!(b[0] < b[1], "empty bound box in dimension {i}");
        }
    }
}

/// Snapshot of one generation.
#[derive(Clone, Debug, Serialize)]
pub struct GenRecord {
    pub gen: usize,
    /// Candidates after bound reflection, in sampling order.
    pub candidates: Vec<Vec<f64>>,
    /// Fitness used for ranking (sentinel values already replaced).
    pub fitnesses: Vec<f64>,
    pub best_so_far: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub covariance: Vec<Vec<f64>>,
}

/// Full history of a run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct EsRun {
    pub generations: Vec<GenRecord>,
    pub best: Vec<f64>,
    pub best_fitness: f64,
    pub evaluations: usize,
}

impl EsRun {
    /// CSV rows `gen, best, mean_fitness, sigma` — the data behind learning
    /// curves.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gen,best,mean_fitness,sigma\n");
        for g in &self.generations {
            let mean_fit = g.fitnesses.iter().sum::<f64>() / g.fitnesses.len().max(1) as f64;
            out.push_str(&format!("{},{},{},{}\n", g.gen, g.best_so_far, mean_fit, g.sigma));
        }
        out
    }
}

/// Objective value marking an infeasible candidate; treated as worst-in-
/// generation plus a fixed penalty so recombination weights stay defined.
pub const INFEASIBLE: f64 = f64::INFINITY;

/// Reflects a coordinate into `[lo, hi]` by folding at the edges. In-range
/// values pass through unchanged.
fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    if x >= lo && x <= hi {
        return x;
    }
    let w = hi - lo;
    if w <= 0.0 {
        return lo;
    }
    let mut y = (x - lo).rem_euclid(2.0 * w);
    if y > w {
        y = 2.0 * w - y;
    }
    lo + y
}

struct Strategy {
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Strategy {
    fn new(dim: usize, mu: usize, lambda: usize) -> Self {
        let n = dim as f64;
        let mut weights: Vec<f64> = (0..mu)
            .map(|i| ((mu as f64) + 0.5).ln() - ((i + 1) as f64).ln())
            .collect();
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0
            + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0)
            + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(
            2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff),
        );
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        let _ = lambda;
        Strategy { weights, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n }
    }
}

/// Eigendecomposition of the covariance with the regularization floor
/// applied: when the smallest eigenvalue drops below 1e-14 of the largest,
/// `1e-14·trace/dim` is added to the diagonal.
fn decompose(c: &mut DMatrix<f64>, dim: usize) -> (DMatrix<f64>, DVector<f64>) {
    // Symmetrize against drift before decomposing.
    for i in 0..dim {
        for j in (i + 1)..dim {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let mut eig = c.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if !(min_ev > 1e-14 * max_ev) {
        let bump = 1e-14 * c.trace() / dim as f64 + f64::MIN_POSITIVE;
        for i in 0..dim {
            c[(i, i)] += bump;
        }
        eig = c.clone().symmetric_eigen();
    }
    let d = DVector::from_fn(dim, |i, _| eig.eigenvalues[i].max(f64::MIN_POSITIVE).sqrt());
    (eig.eigenvectors, d)
}

/// Minimizes `objective` over the configured box. Returns the best-ever
/// candidate and the per-generation history.
pub fn minimize<F>(config: &EsConfig, mut objective: F) -> (DVector<f64>, EsRun)
where
    F: FnMut(&DVector<f64>) -> f64,
{
    config.validate();
    let dim = config.dim;
    let lambda = config.pop_size;
    let mu = config.elite_size;
    let strat = Strategy::new(dim, mu, lambda);
    let mut rng: ChaCha8Rng = stream(config.seed, &[0x45535f52554e]);

    let mut mean = config.mean0.clone();
    for i in 0..dim {
        mean[i] = mean[i].clamp(config.bounds[i][0], config.bounds[i][1]);
    }
    let mut sigma = config.sigma0;
    let mut cov = DMatrix::identity(dim, dim);
    let mut p_sigma = DVector::zeros(dim);
    let mut p_c = DVector::zeros(dim);

    let mut run = EsRun {
        best_fitness: f64::INFINITY,
        best: mean.iter().cloned().collect(),
        ..EsRun::default()
    };

    for gen in 0..config.max_gens {
        let (b, d) = decompose(&mut cov, dim);

        // Sample, reflect into the box, evaluate.
        let mut candidates: Vec<DVector<f64>> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let z = DVector::from_fn(dim, |_, _| standard_normal(&mut rng));
            let y = &b * DVector::from_fn(dim, |i, _| d[i] * z[i]);
            let mut x = &mean + &y * sigma;
            for i in 0..dim {
                x[i] = reflect(x[i], config.bounds[i][0], config.bounds[i][1]);
            }
            candidates.push(x);
        }
        let raw: Vec<f64> = candidates.iter().map(|x| objective(x)).collect();
        run.evaluations += lambda;

        // Replace infeasible sentinels by worst-finite plus penalty.
        let worst_finite = raw.iter().cloned().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let fallback = if worst_finite.is_finite() { worst_finite } else { 0.0 };
        let fitness: Vec<f64> = raw
            .iter()
            .map(|&v| if v.is_finite() { v } else { fallback + config.infeasible_penalty })
            .collect();

        // Rank; ties resolved by candidate index via stable sort.
        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &bb| fitness[a].partial_cmp(&fitness[bb]).expect("finite fitness"));

        if fitness[order[0]] < run.best_fitness {
            run.best_fitness = fitness[order[0]];
            run.best = candidates[order[0]].iter().cloned().collect();
        }

        run.generations.push(GenRecord {
            gen,
            candidates: candidates.iter().map(|c| c.iter().cloned().collect()).collect(),
            fitnesses: fitness.clone(),
            best_so_far: run.best_fitness,
            mean: mean.iter().cloned().collect(),
            sigma,
            covariance: (0..dim)
                .map(|i| (0..dim).map(|j| cov[(i, j)]).collect())
                .collect(),
        });

        if gen + 1 == config.max_gens {
            break;
        }

        // Recombination over the elites, in deviation coordinates.
        let ys: Vec<DVector<f64>> = order[..mu]
            .iter()
            .map(|&i| (&candidates[i] - &mean) / sigma)
            .collect();
        let mut y_w = DVector::zeros(dim);
        for (w, y) in strat.weights.iter().zip(ys.iter()) {
            y_w += y * *w;
        }
        mean += &y_w * sigma;

        // C^{-1/2} y_w through the eigen factors.
        let mut c_inv_sqrt_yw = b.transpose() * &y_w;
        for i in 0..dim {
            c_inv_sqrt_yw[i] /= d[i];
        }
        let c_inv_sqrt_yw = &b * c_inv_sqrt_yw;

        p_sigma = &p_sigma * (1.0 - strat.c_sigma)
            + &c_inv_sqrt_yw * (strat.c_sigma * (2.0 - strat.c_sigma) * strat.mu_eff).sqrt();
        sigma *= ((strat.c_sigma / strat.d_sigma) * (p_sigma.norm() / strat.chi_n - 1.0)).exp();

        let h_sigma = {
            let denom = (1.0 - (1.0 - strat.c_sigma).powi(2 * (gen as i32 + 1))).sqrt();
            let lhs = p_sigma.norm() / denom;
            if lhs < (1.4 + 2.0 / (dim as f64 + 1.0)) * strat.chi_n { 1.0 } else { 0.0 }
        };
        p_c = &p_c * (1.0 - strat.c_c)
            + &y_w * (h_sigma * (strat.c_c * (2.0 - strat.c_c) * strat.mu_eff).sqrt());

        let delta_h = (1.0 - h_sigma) * strat.c_c * (2.0 - strat.c_c);
        let mut rank_mu = DMatrix::zeros(dim, dim);
        for (w, y) in strat.weights.iter().zip(ys.iter()) {
            rank_mu += y * y.transpose() * *w;
        }
        cov = &cov * (1.0 - strat.c_1 - strat.c_mu + strat.c_1 * delta_h)
            + (&p_c * p_c.transpose()) * strat.c_1
            + rank_mu * strat.c_mu;
    }

    (DVector::from_vec(run.best.clone()), run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wide_bounds(dim: usize) -> Vec<[f64; 2]> {
        vec![[-10.0, 10.0]; dim]
    }

    fn sphere(x: &DVector<f64>) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn rosenbrock(x: &DVector<f64>) -> f64 {
        100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)
    }

    #[test]
    fn constant_objective_keeps_first_best() {
        let cfg = EsConfig {
            max_gens: 30,
            ..EsConfig::new(DVector::from_vec(vec![1.0, 1.0]), 0.5, wide_bounds(2), 3)
        };
        let (_, run) = minimize(&cfg, |_| 7.5);
        assert_eq!(run.best_fitness, 7.5);
        for g in &run.generations {
            assert_eq!(g.best_so_far, 7.5);
        }
    }

    #[test]
    fn sphere_converges_within_budget() {
        let cfg = EsConfig {
            pop_size: 12,
            elite_size: 6,
            max_gens: 300,
            ..EsConfig::new(DVector::from_vec(vec![1.0, 1.0]), 0.5, wide_bounds(2), 42)
        };
        let (_, run) = minimize(&cfg, sphere);
        assert!(run.best_fitness < 1e-10, "sphere best {}", run.best_fitness);
    }

    #[test]
    fn rosenbrock_converges_within_budget() {
        let cfg = EsConfig {
            pop_size: 16,
            elite_size: 8,
            max_gens: 400,
            ..EsConfig::new(DVector::from_vec(vec![-1.2, 1.0]), 0.5, wide_bounds(2), 7)
        };
        let (_, run) = minimize(&cfg, rosenbrock);
        assert!(run.best_fitness < 1e-6, "rosenbrock best {}", run.best_fitness);
    }

    #[test]
    fn best_so_far_is_monotone() {
        let cfg = EsConfig {
            pop_size: 8,
            elite_size: 4,
            max_gens: 120,
            ..EsConfig::new(DVector::from_vec(vec![2.0, -1.0]), 0.7, wide_bounds(2), 11)
        };
        let (_, run) = minimize(&cfg, rosenbrock);
        let mut last = f64::INFINITY;
        for g in &run.generations {
            assert!(g.best_so_far <= last);
            last = g.best_so_far;
        }
    }

    #[test]
    fn determinism_same_seed_same_run() {
        let cfg = EsConfig {
            max_gens: 50,
            ..EsConfig::new(DVector::from_vec(vec![1.0, 1.0, 1.0]), 0.5, wide_bounds(3), 99)
        };
        let (a, run_a) = minimize(&cfg, sphere);
        let (b, run_b) = minimize(&cfg, sphere);
        assert_eq!(a.as_slice(), b.as_slice());
        assert_eq!(run_a.best_fitness, run_b.best_fitness);
        for (ga, gb) in run_a.generations.iter().zip(run_b.generations.iter()) {
            assert_eq!(ga.candidates, gb.candidates);
            assert_eq!(ga.sigma, gb.sigma);
        }
    }

    #[test]
    fn translation_invariance_of_the_search_path() {
        // Minimizing f(x) from m0 and f(x − c) from m0 + c must produce the
        // same candidate sequence shifted by c.
        let c = DVector::from_vec(vec![1.0, 1.0]);
        let cfg_a = EsConfig {
            pop_size: 10,
            elite_size: 5,
            max_gens: 40,
            ..EsConfig::new(DVector::from_vec(vec![0.75, -0.5]), 0.4, wide_bounds(2), 1234)
        };
        let cfg_b = EsConfig {
            mean0: &cfg_a.mean0 + &c,
            ..cfg_a.clone()
        };
        let (_, run_a) = minimize(&cfg_a, sphere);
        let shift = c.clone();
        let (_, run_b) = minimize(&cfg_b, move |x| sphere(&(x - &shift)));
        for (ga, gb) in run_a.generations.iter().zip(run_b.generations.iter()) {
            for (ca, cb) in ga.candidates.iter().zip(gb.candidates.iter()) {
                for k in 0..2 {
                    // Identical modulo the last-ulp rounding of the shift.
                    assert!(
                        (ca[k] - (cb[k] - c[k])).abs() <= 1e-12,
                        "gen {} candidate drifted: {} vs {}",
                        ga.gen,
                        ca[k],
                        cb[k] - c[k]
                    );
                }
            }
        }
    }

    #[test]
    fn candidates_respect_bounds() {
        let bounds = vec![[-0.3, 0.4], [0.1, 0.2]];
        let cfg = EsConfig {
            pop_size: 10,
            elite_size: 5,
            max_gens: 60,
            ..EsConfig::new(DVector::from_vec(vec![0.0, 0.15]), 1.5, bounds.clone(), 5)
        };
        let (_, run) = minimize(&cfg, sphere);
        for g in &run.generations {
            for cand in &g.candidates {
                for (i, b) in bounds.iter().enumerate() {
                    assert!(cand[i] >= b[0] - 1e-15 && cand[i] <= b[1] + 1e-15);
                }
            }
        }
    }

    #[test]
    fn infeasible_sentinel_is_penalized_not_fatal() {
        // Half-space is infeasible; the run must still converge toward the
        // feasible optimum at the boundary of the sentinel region.
        let cfg = EsConfig {
            pop_size: 12,
            elite_size: 6,
            max_gens: 120,
            ..EsConfig::new(DVector::from_vec(vec![1.5, 1.5]), 0.5, wide_bounds(2), 21)
        };
        let (best, run) = minimize(&cfg, |x| {
            if x[0] < 0.2 {
                INFEASIBLE
            } else {
                sphere(x)
            }
        });
        assert!(run.best_fitness.is_finite());
        assert!(best[0] >= 0.2);
        assert!(run.best_fitness < 0.05 + 1e-3, "best {}", run.best_fitness);
    }

    #[test]
    fn tiny_population_survives_regularization() {
        let cfg = EsConfig {
            pop_size: 3,
            elite_size: 2,
            max_gens: 500,
            ..EsConfig::new(DVector::from_vec(vec![1.0, -1.0]), 0.3, wide_bounds(2), 17)
        };
        let (_, run) = minimize(&cfg, sphere);
        assert!(run.best_fitness < 1e-4, "tiny population best {}", run.best_fitness);
        for g in &run.generations {
            assert!(g.sigma.is_finite() && g.sigma > 0.0);
        }
    }
}
