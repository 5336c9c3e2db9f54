//! Gaussian mixture fitting and density queries.
//!
//! Fitting runs expectation-maximization over a range of component counts
//! with deterministic k-means++ initialization and picks the count by BIC.
//! Every candidate fit keeps its log-likelihood trace so callers can audit
//! the per-sweep monotonicity guarantee.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foliation::Configuration;

/// One node of the base roadmap: a weighted Gaussian over the ambient space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub id: usize,
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Configuration for [`fit_gmm`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub max_sweeps: usize,
    /// Stop when the log-likelihood improves by less than this per sweep.
    pub tol: f64,
    /// Minimum covariance eigenvalue.
    pub lambda_floor: f64,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            k_min: 2,
            k_max: 12,
            max_sweeps: 200,
            tol: 1e-7,
            lambda_floor: 1e-6,
            seed: 0,
        }
    }
}

/// A fitted candidate mixture for one component count.
#[derive(Debug, Clone)]
pub struct CandidateFit {
    pub k: usize,
    pub bic: f64,
    pub log_likelihood: f64,
    /// Log-likelihood after each EM sweep, in sweep order.
    pub loglik_trace: Vec<f64>,
}

/// Result of [`fit_gmm`]: the BIC-selected mixture plus per-candidate audit
/// data.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub components: Vec<GaussianComponent>,
    pub selected: CandidateFit,
    pub candidates: Vec<CandidateFit>,
}

/// Fits a Gaussian mixture to the waypoints by EM, selecting the component
/// count in `[k_min, k_max]` by BIC.
pub fn fit_gmm(points: &[Configuration], config: &ClusteringConfig) -> Result<GmmFit> {
    if points.is_empty() {
        return Err(Error::AtlasConstruction("no waypoints to fit".to_string()));
    }
    let dim = points[0].dim();
    if points.iter().any(|p| p.dim() != dim) {
        return Err(Error::AtlasConstruction(
            "waypoints of mixed dimension".to_string(),
        ));
    }
    if config.k_min == 0 || config.k_min > config.k_max {
        return Err(Error::InvalidParameter(
            "require 1 <= k_min <= k_max".to_string(),
        ));
    }
    let n = points.len();
    let data: Vec<DVector<f64>> = points
        .iter()
        .map(|p| DVector::from_column_slice(p.as_slice()))
        .collect();

    let mut best: Option<(Vec<GaussianComponent>, CandidateFit)> = None;
    let mut candidates = Vec::new();
    for k in config.k_min..=config.k_max.min(n) {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed.wrapping_add(k as u64));
        let (components, trace) = em_fit(&data, k, config, &mut rng)?;
        let loglik = *trace.last().expect("at least one sweep");
        let params = k as f64 * (dim as f64 + dim as f64 * (dim as f64 + 1.0) / 2.0)
            + (k as f64 - 1.0);
        let bic = -2.0 * loglik + params * (n as f64).ln();
        let cand = CandidateFit {
            k,
            bic,
            log_likelihood: loglik,
            loglik_trace: trace,
        };
        let better = match &best {
            None => true,
            Some((_, b)) => cand.bic < b.bic,
        };
        if better {
            best = Some((components, cand.clone()));
        }
        candidates.push(cand);
    }
    let (components, selected) =
        best.ok_or_else(|| Error::AtlasConstruction("no candidate count fit".to_string()))?;
    Ok(GmmFit {
        components,
        selected,
        candidates,
    })
}

/// One EM run for a fixed component count. Returns components and the
/// per-sweep log-likelihood trace.
fn em_fit(
    data: &[DVector<f64>],
    k: usize,
    config: &ClusteringConfig,
    rng: &mut ChaCha12Rng,
) -> Result<(Vec<GaussianComponent>, Vec<f64>)> {
    let n = data.len();
    let dim = data[0].len();

    let mut means = kmeans_pp_init(data, k, rng);
    let global_cov = sample_covariance(data, config.lambda_floor);
    let mut covs: Vec<DMatrix<f64>> = vec![global_cov; k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut trace = Vec::new();
    let mut resp = vec![0.0f64; n * k];
    loop {
        // E-step: responsibilities and the log-likelihood of the current fit.
        let prepared: Vec<PreparedGaussian> = (0..k)
            .map(|j| PreparedGaussian::new(&means[j], &covs[j]))
            .collect::<Result<Vec<_>>>()?;
        let mut loglik = 0.0;
        for (i, x) in data.iter().enumerate() {
            let mut logs = vec![0.0f64; k];
            for j in 0..k {
                logs[j] = weights[j].ln() + prepared[j].log_density(x);
            }
            let lse = log_sum_exp(&logs);
            loglik += lse;
            for j in 0..k {
                resp[i * k + j] = (logs[j] - lse).exp();
            }
        }
        trace.push(loglik);
        let improved = trace.len() < 2 || loglik - trace[trace.len() - 2] > config.tol;
        if trace.len() >= config.max_sweeps || !improved {
            break;
        }

        // M-step.
        for j in 0..k {
            let mass: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if mass < 1e-12 {
                // Dead component: leave its parameters in place; BIC across
                // candidate counts absorbs the waste.
                weights[j] = 1e-12;
                continue;
            }
            weights[j] = mass / n as f64;
            let mut mean = DVector::zeros(dim);
            for (i, x) in data.iter().enumerate() {
                mean += x * resp[i * k + j];
            }
            mean /= mass;
            let mut cov = DMatrix::zeros(dim, dim);
            for (i, x) in data.iter().enumerate() {
                let d = x - &mean;
                cov += &d * d.transpose() * resp[i * k + j];
            }
            cov /= mass;
            means[j] = mean;
            covs[j] = floor_spd(cov, config.lambda_floor);
        }
        let wsum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= wsum;
        }
    }

    let components = (0..k)
        .map(|j| GaussianComponent {
            id: j,
            weight: weights[j],
            mean: means[j].clone(),
            covariance: covs[j].clone(),
        })
        .collect();
    Ok((components, trace))
}

/// Deterministic k-means++ seeding followed by a few Lloyd sweeps.
fn kmeans_pp_init(data: &[DVector<f64>], k: usize, rng: &mut ChaCha12Rng) -> Vec<DVector<f64>> {
    let n = data.len();
    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(k);
    centers.push(data[rng.random_range(0..n)].clone());
    let mut d2 = vec![0.0f64; n];
    while centers.len() < k {
        let mut total = 0.0;
        for (i, x) in data.iter().enumerate() {
            let best = centers
                .iter()
                .map(|c| (x - c).norm_squared())
                .fold(f64::INFINITY, f64::min);
            d2[i] = best;
            total += best;
        }
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, v) in d2.iter().enumerate() {
                acc += v;
                if acc >= target {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centers.push(data[next].clone());
    }
    // A few Lloyd sweeps firm up the seeds.
    for _ in 0..8 {
        let mut sums = vec![DVector::zeros(data[0].len()); k];
        let mut counts = vec![0usize; k];
        for x in data {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let d = (x - c).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            sums[best] += x;
            counts[best] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = &sums[j] / counts[j] as f64;
            }
        }
    }
    centers
}

fn sample_covariance(data: &[DVector<f64>], floor: f64) -> DMatrix<f64> {
    let n = data.len();
    let dim = data[0].len();
    let mut mean = DVector::zeros(dim);
    for x in data {
        mean += x;
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for x in data {
        let d = x - &mean;
        cov += &d * d.transpose();
    }
    cov /= n as f64;
    floor_spd(cov, floor)
}

/// Clamps eigenvalues from below so the matrix stays SPD.
fn floor_spd(cov: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (&cov + cov.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    let mut changed = false;
    for v in vals.iter_mut() {
        if *v < floor {
            *v = floor;
            changed = true;
        }
    }
    if !changed {
        return sym;
    }
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&vals) * v.transpose()
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// A mixture with cached Cholesky factors for density queries and sampling.
#[derive(Debug, Clone)]
pub struct PreparedMixture {
    components: Vec<GaussianComponent>,
    prepared: Vec<PreparedGaussian>,
    log_weights: Vec<f64>,
}

#[derive(Debug, Clone)]
struct PreparedGaussian {
    mean: DVector<f64>,
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl PreparedGaussian {
    fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        let chol = cov.clone().cholesky().ok_or_else(|| {
            Error::AtlasConstruction("covariance not positive-definite".to_string())
        })?;
        let l = chol.l();
        let log_det = 2.0 * (0..dim).map(|i| l[(i, i)].ln()).sum::<f64>();
        let log_norm = -0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(PreparedGaussian {
            mean: mean.clone(),
            chol_l: l,
            log_norm,
        })
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        // Solve L y = d; the quadratic form is |y|^2.
        let y = self
            .chol_l
            .clone()
            .solve_lower_triangular(&d)
            .expect("cholesky factor invertible");
        self.log_norm - 0.5 * y.norm_squared()
    }
}

impl PreparedMixture {
    pub fn new(components: &[GaussianComponent]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::AtlasConstruction("empty mixture".to_string()));
        }
        let prepared = components
            .iter()
            .map(|c| PreparedGaussian::new(&c.mean, &c.covariance))
            .collect::<Result<Vec<_>>>()?;
        let log_weights = components.iter().map(|c| c.weight.max(1e-300).ln()).collect();
        Ok(PreparedMixture {
            components: components.to_vec(),
            prepared,
            log_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Log of weight times Gaussian density for component `j` at `q`.
    pub fn log_weighted_density(&self, j: usize, q: &Configuration) -> f64 {
        let x = DVector::from_column_slice(q.as_slice());
        self.log_weights[j] + self.prepared[j].log_density(&x)
    }

    /// The component whose weighted density at `q` is highest; ties resolve
    /// to the lowest index. Total: some component always wins even for far
    /// outliers since log-densities stay finite.
    pub fn assign(&self, q: &Configuration) -> usize {
        let x = DVector::from_column_slice(q.as_slice());
        let mut best = 0;
        let mut best_log = f64::NEG_INFINITY;
        for j in 0..self.components.len() {
            let l = self.log_weights[j] + self.prepared[j].log_density(&x);
            if l > best_log {
                best_log = l;
                best = j;
            }
        }
        best
    }

    /// Draws from component `j`.
    pub fn sample<R: Rng>(&self, j: usize, rng: &mut R) -> Configuration {
        let dim = self.prepared[j].mean.len();
        let z = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &self.prepared[j].mean + &self.prepared[j].chol_l * z;
        Configuration(x.iter().cloned().collect())
    }
}

/// Spec operation: index of the component owning `q`.
pub fn assign_distribution(q: &Configuration, mixture: &PreparedMixture) -> usize {
    mixture.assign(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(center: &[f64], n: usize, spread: f64, rng: &mut ChaCha12Rng) -> Vec<Configuration> {
        (0..n)
            .map(|_| {
                Configuration(
                    center
                        .iter()
                        .map(|c| c + spread * rng.sample::<f64, _>(StandardNormal))
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn two_blobs_recovered() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut pts = blob(&[0.0, 0.0], 200, 0.3, &mut rng);
        pts.extend(blob(&[6.0, 6.0], 200, 0.3, &mut rng));
        let cfg = ClusteringConfig {
            k_min: 1,
            k_max: 4,
            seed: 11,
            ..Default::default()
        };
        let fit = fit_gmm(&pts, &cfg).unwrap();
        assert_eq!(fit.selected.k, 2);
        let mut means: Vec<Vec<f64>> = fit
            .components
            .iter()
            .map(|c| c.mean.iter().cloned().collect())
            .collect();
        means.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert!((means[0][0]).abs() < 0.1 && (means[0][1]).abs() < 0.1);
        assert!((means[1][0] - 6.0).abs() < 0.1 && (means[1][1] - 6.0).abs() < 0.1);
    }

    #[test]
    fn single_cloud_single_component() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let pts = blob(&[0.0, 0.0], 300, 0.5, &mut rng);
        let cfg = ClusteringConfig {
            k_min: 1,
            k_max: 3,
            seed: 1,
            ..Default::default()
        };
        let fit = fit_gmm(&pts, &cfg).unwrap();
        assert_eq!(fit.selected.k, 1);
        assert!(fit.components[0].mean.norm() < 0.1);
    }

    #[test]
    fn loglik_trace_non_decreasing() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut pts = blob(&[0.0, 0.0], 150, 0.4, &mut rng);
        pts.extend(blob(&[3.0, 1.0], 150, 0.6, &mut rng));
        pts.extend(blob(&[-2.0, 4.0], 150, 0.5, &mut rng));
        let cfg = ClusteringConfig {
            k_min: 1,
            k_max: 5,
            seed: 2,
            ..Default::default()
        };
        let fit = fit_gmm(&pts, &cfg).unwrap();
        for cand in &fit.candidates {
            for w in cand.loglik_trace.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-9,
                    "ll decreased: {} -> {} (k={})",
                    w[0],
                    w[1],
                    cand.k
                );
            }
        }
    }

    #[test]
    fn weights_sum_to_one_and_responsibilities_normalize() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let mut pts = blob(&[0.0, 0.0], 100, 0.4, &mut rng);
        pts.extend(blob(&[5.0, 0.0], 100, 0.4, &mut rng));
        let cfg = ClusteringConfig {
            k_min: 2,
            k_max: 2,
            seed: 4,
            ..Default::default()
        };
        let fit = fit_gmm(&pts, &cfg).unwrap();
        let total: f64 = fit.components.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
        // Responsibilities of any point over the fitted mixture sum to 1.
        let mixture = PreparedMixture::new(&fit.components).unwrap();
        for q in pts.iter().step_by(17) {
            let logs: Vec<f64> = (0..mixture.len())
                .map(|j| mixture.log_weighted_density(j, q))
                .collect();
            let lse = log_sum_exp(&logs);
            let sum: f64 = logs.iter().map(|l| (l - lse).exp()).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn assignment_tie_breaks_to_lowest_id() {
        let make = |id: usize, x: f64| GaussianComponent {
            id,
            weight: 0.5,
            mean: DVector::from_column_slice(&[x, 0.0]),
            covariance: DMatrix::identity(2, 2),
        };
        let mixture = PreparedMixture::new(&[make(0, -1.0), make(1, 1.0)]).unwrap();
        // Equidistant between two identical components.
        assert_eq!(mixture.assign(&Configuration(vec![0.0, 0.0])), 0);
        assert_eq!(mixture.assign(&Configuration(vec![0.9, 0.0])), 1);
    }

    #[test]
    fn assignment_total_for_far_outliers() {
        let comp = GaussianComponent {
            id: 0,
            weight: 1.0,
            mean: DVector::from_column_slice(&[0.0, 0.0]),
            covariance: DMatrix::identity(2, 2) * 0.01,
        };
        let mixture = PreparedMixture::new(&[comp]).unwrap();
        assert_eq!(mixture.assign(&Configuration(vec![1e6, -1e6])), 0);
    }

    #[test]
    fn component_mean_assigned_to_itself() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let mut pts = blob(&[0.0, 0.0], 120, 0.3, &mut rng);
        pts.extend(blob(&[7.0, 2.0], 120, 0.3, &mut rng));
        let cfg = ClusteringConfig {
            k_min: 2,
            k_max: 2,
            seed: 6,
            ..Default::default()
        };
        let fit = fit_gmm(&pts, &cfg).unwrap();
        let mixture = PreparedMixture::new(&fit.components).unwrap();
        for (j, c) in fit.components.iter().enumerate() {
            let q = Configuration(c.mean.iter().cloned().collect());
            assert_eq!(mixture.assign(&q), j);
        }
    }

    #[test]
    fn sampling_tracks_component_mean() {
        let comp = GaussianComponent {
            id: 0,
            weight: 1.0,
            mean: DVector::from_column_slice(&[2.0, -1.0]),
            covariance: DMatrix::identity(2, 2) * 0.04,
        };
        let mixture = PreparedMixture::new(&[comp]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let n = 2000;
        let mut mean = [0.0f64; 2];
        for _ in 0..n {
            let s = mixture.sample(0, &mut rng);
            mean[0] += s.0[0];
            mean[1] += s.0[1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        assert!((mean[0] - 2.0).abs() < 0.05);
        assert!((mean[1] + 1.0).abs() < 0.05);
    }
}
