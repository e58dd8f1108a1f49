//! (mu/mu_w, lambda) CMA-ES with rank-based selection, cumulative step
//! size adaptation, and an eigenvalue floor keeping the covariance
//! positive-definite. Minimizes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const EIG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CmaEs {
    n: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
    pub mean: DVector<f64>,
    pub sigma: f64,
    c: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    /// Cached eigenbasis of C used for sampling: columns of `b`, sqrt
    /// eigenvalues in `d`.
    b: DMatrix<f64>,
    d: DVector<f64>,
    generation: usize,
    bounds: Option<Vec<[f64; 2]>>,
    best: Option<(Vec<f64>, f64)>,
}

impl CmaEs {
    pub fn new(mean: Vec<f64>, sigma: f64, lambda: usize) -> Self {
        assert!(sigma > 0.0, "step size must be positive");
        assert!(lambda >= 4, "population too small");
        let n = mean.len();
        let nf = n as f64;
        let mu = lambda / 2;
        let mut weights: Vec<f64> = (1..=mu)
            .map(|i| ((mu as f64) + 0.5).ln() - (i as f64).ln())
            .collect();
        let wsum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= wsum;
        }
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma =
            1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff))
            .min(1.0 - c_1);
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        CmaEs {
            n,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            mean: DVector::from_vec(mean),
            sigma,
            c: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            b: DMatrix::identity(n, n),
            d: DVector::from_element(n, 1.0),
            generation: 0,
            bounds: None,
            best: None,
        }
    }

    /// Per-coordinate clamping applied to every sample.
    pub fn with_bounds(mut self, bounds: Vec<[f64; 2]>) -> Self {
        assert_eq!(bounds.len(), self.n);
        assert!(bounds.iter().all(|b| b[0] <= b[1]));
        self.bounds = Some(bounds);
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn population_size(&self) -> usize {
        self.lambda
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Best (candidate, fitness) seen over all tells.
    pub fn best(&self) -> Option<&(Vec<f64>, f64)> {
        self.best.as_ref()
    }

    /// Seeds the incumbent, e.g. with the evaluated initial point.
    pub fn observe_incumbent(&mut self, x: Vec<f64>, fitness: f64) {
        if fitness.is_finite() && self.best.as_ref().is_none_or(|(_, f)| fitness < *f) {
            self.best = Some((x, fitness));
        }
    }

    /// lambda samples from N(mean, sigma^2 C), clamped to the bounds.
    pub fn ask(&self, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        (0..self.lambda)
            .map(|_| {
                let z = DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let y = &self.b * z.component_mul(&self.d);
                let mut x = &self.mean + self.sigma * y;
                if let Some(bounds) = &self.bounds {
                    for i in 0..self.n {
                        x[i] = x[i].clamp(bounds[i][0], bounds[i][1]);
                    }
                }
                x.as_slice().to_vec()
            })
            .collect()
    }

    /// Rank-based update. Non-finite fitnesses sort behind every finite
    /// value; a fully degenerate generation (all fitnesses equal) leaves
    /// the distribution untouched.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitness: &[f64]) -> Result<()> {
        if candidates.len() != self.lambda || fitness.len() != self.lambda {
            return Err(Error::dim("cma population", self.lambda, candidates.len()));
        }
        if candidates.iter().any(|c| c.len() != self.n) {
            return Err(Error::invalid("cma candidate", "dimension mismatch"));
        }
        self.generation += 1;

        for (x, &f) in candidates.iter().zip(fitness) {
            if f.is_finite() && self.best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                self.best = Some((x.clone(), f));
            }
        }

        let first = fitness[0];
        if fitness.iter().all(|f| *f == first) {
            return Ok(());
        }

        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| {
            let (fa, fb) = (fitness[a], fitness[b]);
            match (fa.is_finite(), fb.is_finite()) {
                (true, true) => fa.partial_cmp(&fb).unwrap(),
                (true, false) => std::cmp::Ordering::Less,
                (false, true) => std::cmp::Ordering::Greater,
                (false, false) => std::cmp::Ordering::Equal,
            }
        });

        let old_mean = self.mean.clone();
        let ys: Vec<DVector<f64>> = order[..self.mu]
            .iter()
            .map(|&i| {
                (DVector::from_column_slice(&candidates[i]) - &old_mean) / self.sigma
            })
            .collect();
        let mut y_w = DVector::zeros(self.n);
        for (w, y) in self.weights.iter().zip(&ys) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean = &old_mean + self.sigma * &y_w;

        // C^(-1/2) y_w in the cached eigenbasis.
        let c_inv_sqrt_yw = {
            let proj = self.b.tr_mul(&y_w);
            let scaled = DVector::from_fn(self.n, |i, _| proj[i] / self.d[i]);
            &self.b * scaled
        };
        self.p_sigma = (1.0 - self.c_sigma) * &self.p_sigma
            + (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt() * &c_inv_sqrt_yw;
        self.sigma *=
            ((self.c_sigma / self.d_sigma) * (self.p_sigma.norm() / self.chi_n - 1.0)).exp();

        let denom = (1.0 - (1.0 - self.c_sigma).powi(2 * self.generation as i32)).sqrt();
        let h_sigma = if self.p_sigma.norm() / denom
            < (1.4 + 2.0 / (self.n as f64 + 1.0)) * self.chi_n
        {
            1.0
        } else {
            0.0
        };
        self.p_c = (1.0 - self.c_c) * &self.p_c
            + h_sigma * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt() * &y_w;

        let delta_h = (1.0 - h_sigma) * self.c_c * (2.0 - self.c_c);
        let mut rank_mu = DMatrix::zeros(self.n, self.n);
        for (w, y) in self.weights.iter().zip(&ys) {
            rank_mu += *w * y * y.transpose();
        }
        self.c = (1.0 - self.c_1 - self.c_mu) * &self.c
            + self.c_1 * (&self.p_c * self.p_c.transpose() + delta_h * &self.c)
            + self.c_mu * rank_mu;

        self.repair_and_refresh_eigen();
        Ok(())
    }

    /// Symmetrizes C, floors its eigenvalues, and refreshes the cached
    /// sampling basis.
    fn repair_and_refresh_eigen(&mut self) {
        let sym = (&self.c + self.c.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let vals = eig.eigenvalues.map(|v| if v.is_finite() { v.max(EIG_FLOOR) } else { EIG_FLOOR });
        let vecs = eig.eigenvectors;
        self.c = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        self.b = vecs;
        self.d = vals.map(|v| v.sqrt());
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    fn run(
        mut es: CmaEs,
        f: impl Fn(&[f64]) -> f64,
        generations: usize,
        seed: u64,
    ) -> (Vec<f64>, f64) {
        let mut rng = rng_from_seed(seed);
        for _ in 0..generations {
            let pop = es.ask(&mut rng);
            let fit: Vec<f64> = pop.iter().map(|x| f(x)).collect();
            es.tell(&pop, &fit).unwrap();
        }
        es.best().cloned().expect("tells ran")
    }

    #[test]
    fn sphere_ten_dimensional_converges() {
        let es = CmaEs::new(vec![2.0; 10], 1.0, 16);
        let (_, best) = run(es, sphere, 250, 1);
        assert!(best < 1e-6, "best fitness {best:.3e}");
    }

    #[test]
    fn rosenbrock_five_dimensional_converges() {
        let es = CmaEs::new(vec![0.0; 5], 0.3, 16);
        let (x, best) = run(es, rosenbrock, 500, 2);
        assert!(best < 1e-3, "best fitness {best:.3e} at {x:?}");
    }

    #[test]
    fn vanishing_step_returns_the_mean() {
        let es = CmaEs::new(vec![1.0, -2.0, 0.5], 1e-200, 16);
        let mut rng = rng_from_seed(3);
        for x in es.ask(&mut rng) {
            assert_eq!(x, vec![1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn samples_respect_bounds() {
        let bounds = vec![[0.0, 1.0], [-0.5, -0.1], [10.0, 11.0]];
        let es = CmaEs::new(vec![0.5, -0.3, 10.5], 5.0, 16).with_bounds(bounds.clone());
        let mut rng = rng_from_seed(4);
        for _ in 0..50 {
            for x in es.ask(&mut rng) {
                for (v, b) in x.iter().zip(&bounds) {
                    assert!(*v >= b[0] && *v <= b[1], "{v} outside {b:?}");
                }
            }
        }
    }

    #[test]
    fn ask_covariance_matches_state() {
        // Shape the covariance away from identity with a few tells on an
        // anisotropic quadratic, then check sample moments against it.
        let mut es = CmaEs::new(vec![0.0; 3], 0.7, 16);
        let mut rng = rng_from_seed(5);
        let f = |x: &[f64]| x[0] * x[0] + 25.0 * x[1] * x[1] + 4.0 * x[2] * x[2];
        for _ in 0..20 {
            let pop = es.ask(&mut rng);
            let fit: Vec<f64> = pop.iter().map(|x| f(x)).collect();
            es.tell(&pop, &fit).unwrap();
        }
        let n = 10_000;
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n / 16 {
            samples.extend(es.ask(&mut rng));
        }
        let m = samples.len() as f64;
        let mut mean = [0.0; 3];
        for s in &samples {
            for i in 0..3 {
                mean[i] += s[i] / m;
            }
        }
        let mut cov = DMatrix::zeros(3, 3);
        for s in &samples {
            for i in 0..3 {
                for j in 0..3 {
                    cov[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]) / m;
                }
            }
        }
        let expected = es.covariance() * es.sigma * es.sigma;
        let rel = (cov - &expected).norm() / expected.norm();
        assert!(rel < 0.1, "covariance relative error {rel}");
    }

    #[test]
    fn equal_fitness_leaves_mean_unchanged() {
        let mut es = CmaEs::new(vec![3.0, -1.0], 0.5, 16);
        let mut rng = rng_from_seed(6);
        let pop = es.ask(&mut rng);
        let before = es.mean.clone();
        es.tell(&pop, &vec![7.0; 16]).unwrap();
        assert_eq!(es.mean, before);
        assert_eq!(es.generation(), 1);
    }

    #[test]
    fn non_finite_fitness_ranks_worst() {
        let mut es = CmaEs::new(vec![0.0, 0.0], 1.0, 16);
        let mut rng = rng_from_seed(7);
        let pop = es.ask(&mut rng);
        // The origin-nearest candidate gets NaN; it must not become the
        // incumbent, and the update must still go through.
        let mut fit: Vec<f64> = pop.iter().map(|x| sphere(x)).collect();
        let best_idx = (0..16).min_by(|&a, &b| fit[a].total_cmp(&fit[b])).unwrap();
        fit[best_idx] = f64::NAN;
        es.tell(&pop, &fit).unwrap();
        let (_, bf) = es.best().unwrap();
        assert!(bf.is_finite());
        assert!(es.mean.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn adversarial_fitness_keeps_covariance_positive_definite() {
        let mut es = CmaEs::new(vec![0.0; 4], 1.0, 16);
        let mut rng = rng_from_seed(8);
        for g in 0..200 {
            let pop = es.ask(&mut rng);
            // Fitness designed to collapse diversity: identical except one.
            let mut fit = vec![1.0; 16];
            fit[g % 16] = 0.0;
            es.tell(&pop, &fit).unwrap();
        }
        let eig = es.covariance().clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&v| v >= EIG_FLOOR * 0.99), "{:?}", eig.eigenvalues);
        assert!(es.sigma > 0.0 && es.sigma.is_finite());
        // Sampling still works.
        let pop = es.ask(&mut rng);
        assert!(pop.iter().all(|x| x.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let run_once = || {
            let mut es = CmaEs::new(vec![1.0; 6], 0.8, 16);
            let mut rng = rng_from_seed(99);
            for _ in 0..30 {
                let pop = es.ask(&mut rng);
                let fit: Vec<f64> = pop.iter().map(|x| sphere(x)).collect();
                es.tell(&pop, &fit).unwrap();
            }
            (es.mean.clone(), es.sigma, es.best().cloned())
        };
        let a = run_once();
        let b = run_once();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2.unwrap().1, b.2.unwrap().1);
    }

    #[test]
    fn incumbent_seeding_is_respected() {
        let mut es = CmaEs::new(vec![5.0; 2], 0.1, 16);
        es.observe_incumbent(vec![0.1, 0.1], 0.02);
        let mut rng = rng_from_seed(10);
        let pop = es.ask(&mut rng);
        let fit: Vec<f64> = pop.iter().map(|x| sphere(x)).collect();
        es.tell(&pop, &fit).unwrap();
        // Population near (5, 5) cannot beat the seeded incumbent.
        assert_eq!(es.best().unwrap().1, 0.02);
    }
}
