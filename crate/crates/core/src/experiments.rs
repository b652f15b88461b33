//! Reproducible experiment drivers: mixture data generation, the two-block
//! size distribution, posterior-vs-n curves, extra-cluster censuses, and the
//! combined sweep that pairs posterior estimates with their certified upper
//! bounds.
//!
//! Reproducibility contract: every random quantity is drawn from a ChaCha
//! stream addressed by (master seed, task coordinates), so rows can be
//! recomputed independently, in any order, on any thread count, with
//! bit-identical results. Data generation gives each point its own stream;
//! the first n points of a size-N draw therefore equal the size-n draw from
//! the same seed, which is what lets a sweep grow one dataset instead of
//! resampling per n.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{bail_domain, bail_refused, Result};
use crate::expfam::{ConjugatePrior, ExpFam};
use crate::gibbs::{gibbs_sampler, ChainResult, GibbsConfig};
use crate::num::kahan_sum;
use crate::partition::GibbsPartitionModel;
use crate::posterior::{exact_joint_subset_dp, DEFAULT_DP_CAP};
use crate::theory::{
    bounded_case_constant, lemma_bound_with, phi_t_with_cap, ObservationRegion, PhiMode,
    DEFAULT_PHI_CAP,
};

/// Splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds task coordinates into a master seed (splitmix64 steps), so that
/// distinct coordinate paths get independent, reproducible streams.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    let mut s = mix64(master.wrapping_add(0x9E37_79B9_7F4A_7C15));
    for &c in coords {
        s = mix64(s.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(c));
    }
    s
}

/// A finite mixture over one exponential family, stored in natural
/// parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>, thetas: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != thetas.len() {
            bail_domain!("need matching, nonempty weight and component lists");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            bail_domain!("mixture weights must be finite and positive");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            bail_domain!("mixture weights sum to {total}, not 1");
        }
        Ok(MixtureSpec { weights, thetas })
    }

    /// Components given as moments: the mean vector for most families, and
    /// [mean, variance] for the normal-gamma family (converted to the
    /// (x, x^2) moment pair internally).
    pub fn from_means(family: &ExpFam, weights: Vec<f64>, means: &[Vec<f64>]) -> Result<Self> {
        let thetas = means
            .iter()
            .map(|m| {
                let mu = match family {
                    ExpFam::NormalGamma => {
                        if m.len() != 2 {
                            bail_domain!(
                                "normal-gamma components take [mean, variance], got {m:?}"
                            );
                        }
                        if !(m[1] > 0.0) {
                            bail_domain!("component variance must be positive, got {}", m[1]);
                        }
                        vec![m[0], m[1] + m[0] * m[0]]
                    }
                    _ => m.clone(),
                };
                family.theta_of_mu(&mu)
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureSpec::new(weights, thetas)
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }
}

/// Draws n points from the mixture. Point j uses its own RNG stream
/// (seed, stream 1 + j) for both its component label and its value, so the
/// draw of point j never depends on n or on how many variates other points
/// consumed. Labels record the true components.
pub fn gen_mixture_data(
    family: &ExpFam,
    spec: &MixtureSpec,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        bail_domain!("cannot generate an empty dataset");
    }
    for theta in &spec.thetas {
        if !family.in_theta(theta) {
            bail_domain!("mixture component {theta:?} is outside the natural parameter space");
        }
    }
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + j as u64);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut z = spec.weights.len() - 1;
        for (i, w) in spec.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                z = i;
                break;
            }
        }
        points.push(family.sample(&spec.thetas[z], &mut rng)?);
        labels.push(z);
    }
    Dataset::new(family.clone(), points)?.with_labels(labels)
}

/// One size of the first of two blocks, with its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    pub a: usize,
    pub pmf: f64,
    pub cdf: f64,
}

/// Distribution of the size of a uniformly random one of the two blocks,
/// conditional on exactly two blocks, under a Dirichlet-process partition
/// prior. The result is free of the concentration parameter (it cancels in
/// the conditioning); the argument is kept so call sites read naturally and
/// is validated only for being a legal concentration.
pub fn fig3_size_distribution(theta: f64, n: usize) -> Result<Vec<Fig3Row>> {
    if !(theta > 0.0 && theta.is_finite()) {
        bail_domain!("concentration must be positive and finite, got {theta}");
    }
    if n < 2 {
        bail_domain!("two blocks need at least two points, got n={n}");
    }
    // p(a) proportional to binom(n,a) (a-1)! (n-a-1)! = n! / (a (n-a))
    let weights: Vec<f64> = (1..n).map(|a| 1.0 / (a as f64 * (n - a) as f64)).collect();
    let total = kahan_sum(weights.iter().copied());
    let mut rows = Vec::with_capacity(n - 1);
    let mut cum = 0.0;
    let mut comp = 0.0; // Kahan carry for the running cdf
    for (a, w) in weights.iter().enumerate() {
        let p = w / total;
        let y = p - comp;
        let t = cum + y;
        comp = (t - cum) - y;
        cum = t;
        rows.push(Fig3Row {
            a: a + 1,
            pmf: p,
            cdf: cum,
        });
    }
    Ok(rows)
}

/// P(a <= frac n): the probability that the named block holds at most a
/// `frac` fraction of the points.
pub fn lower_tail(rows: &[Fig3Row], frac: f64) -> f64 {
    let n = rows.len() + 1;
    let cut = (frac * n as f64 + 1e-9).floor() as usize;
    rows.iter()
        .take_while(|r| r.a <= cut)
        .last()
        .map_or(0.0, |r| r.cdf)
}

/// P(min(a, n-a) <= frac n): the probability that either block is small.
pub fn extremes_mass(rows: &[Fig3Row], frac: f64) -> f64 {
    let n = rows.len() + 1;
    let cut = (frac * n as f64 + 1e-9).floor() as usize;
    kahan_sum(
        rows.iter()
            .filter(|r| r.a <= cut || n - r.a <= cut)
            .map(|r| r.pmf),
    )
}

/// Census of small blocks across recorded sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    pub threshold: usize,
    pub sweeps: usize,
    /// Count of blocks of size <= threshold, one entry per recorded sweep
    /// (chains concatenated in order).
    pub counts: Vec<u32>,
    pub min: u32,
    pub q25: u32,
    pub median: u32,
    pub q75: u32,
    pub max: u32,
    pub mean: f64,
}

/// Counts, per recorded sweep, how many blocks hold at most `threshold`
/// points. Needs a chain run with block profiles recorded.
pub fn extra_cluster_census(result: &ChainResult, threshold: usize) -> Result<CensusReport> {
    if threshold == 0 {
        bail_domain!("the size threshold must be at least 1");
    }
    let mut counts: Vec<u32> = Vec::new();
    for chain in &result.chains {
        let profiles = chain.block_profiles.as_ref().ok_or_else(|| {
            crate::error::Error::Domain(
                "census needs block profiles; rerun sampling with record_block_profiles".into(),
            )
        })?;
        for profile in profiles {
            let c = profile.iter().filter(|&&s| (s as usize) <= threshold).count();
            counts.push(c as u32);
        }
    }
    if counts.is_empty() {
        bail_domain!("no recorded sweeps to census");
    }
    let mut sorted = counts.clone();
    sorted.sort_unstable();
    let nearest_rank = |q: f64| -> u32 {
        let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
        sorted[rank.min(sorted.len()) - 1]
    };
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64;
    Ok(CensusReport {
        threshold,
        sweeps: counts.len(),
        min: sorted[0],
        q25: nearest_rank(0.25),
        median: nearest_rank(0.5),
        q75: nearest_rank(0.75),
        max: sorted[sorted.len() - 1],
        mean,
        counts,
    })
}

/// Posterior-vs-n experiment: replicated mixture draws, one sampler run
/// each, averaged per block count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig1bConfig {
    pub model: GibbsPartitionModel,
    pub family: ExpFam,
    pub prior: ConjugatePrior,
    pub mixture: MixtureSpec,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub gibbs: GibbsConfig,
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig1bRow {
    pub n: usize,
    pub t: usize,
    /// Mean over replicates of the estimated posterior mass at t.
    pub mean_posterior: f64,
    /// Standard error of that mean across replicates.
    pub stderr: f64,
}

pub fn fig1b_experiment(config: &Fig1bConfig) -> Result<Vec<Fig1bRow>> {
    if config.replicates == 0 || config.n_grid.is_empty() {
        bail_domain!("need at least one replicate and one n");
    }
    config.model.validate()?;
    config.family.validate_prior(&config.prior)?;
    let mut rows = Vec::new();
    for &n in &config.n_grid {
        let posteriors: Vec<Vec<f64>> = (0..config.replicates)
            .into_par_iter()
            .map(|rep| {
                let data_seed = derive_seed(config.master_seed, &[0, n as u64, rep as u64]);
                let data = gen_mixture_data(&config.family, &config.mixture, n, data_seed)?;
                let mut gibbs = config.gibbs.clone();
                gibbs.seed = derive_seed(config.master_seed, &[1, n as u64, rep as u64]);
                let run = gibbs_sampler(&config.model, &config.prior, &data, &gibbs)?;
                Ok(run.pooled_posterior)
            })
            .collect::<Result<Vec<_>>>()?;
        let t_max = posteriors.iter().map(|p| p.len()).max().unwrap_or(0);
        for t in 1..=t_max {
            let vals: Vec<f64> = posteriors
                .iter()
                .map(|p| p.get(t - 1).copied().unwrap_or(0.0))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let stderr = if vals.len() > 1 {
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (vals.len() - 1) as f64;
                (var / vals.len() as f64).sqrt()
            } else {
                0.0
            };
            rows.push(Fig1bRow {
                n,
                t,
                mean_posterior: mean,
                stderr,
            });
        }
    }
    Ok(rows)
}

/// Configuration of the posterior-versus-bound sweep over growing n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub model: GibbsPartitionModel,
    pub family: ExpFam,
    pub prior: ConjugatePrior,
    pub mixture: MixtureSpec,
    /// The block count under scrutiny; must equal the number of mixture
    /// components, since that is the hypothesis the sweep bears on.
    pub t_star: usize,
    /// Sizes handled by the exact subset engine (capped at its budget).
    pub exact_ns: Vec<usize>,
    /// Sizes handled by the sampler.
    pub mcmc_ns: Vec<usize>,
    pub gibbs: GibbsConfig,
    /// Region of the observation space from which the per-point constant c
    /// is taken; points inside it also drive the frequency route to phi.
    pub region: ObservationRegion,
    pub data_seed: u64,
    /// Enumeration budget for the exact phi cross-check.
    pub phi_cap: usize,
}

impl SweepConfig {
    pub fn default_phi_cap() -> usize {
        DEFAULT_PHI_CAP
    }
}

/// One (n, engine) cell of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    /// "exact" or "gibbs".
    pub engine: String,
    pub posterior_t_star: f64,
    /// Between-chain standard error (zero for the exact engine).
    pub se: f64,
    /// Per-point constant over the region.
    pub c: f64,
    /// Fraction of points inside the region: a lower bound on phi.
    pub phi_hat: f64,
    pub preconditions_hold: bool,
    /// Upper bound on the posterior mass at t*, from phi_hat; absent when
    /// the model sits on the excluded block-budget edge (no bound exists).
    pub bound: Option<f64>,
    /// Exact phi and its bound, where enumeration is affordable.
    pub phi_exact: Option<f64>,
    pub bound_exact_phi: Option<f64>,
    /// Excluded case: a negative-discount model whose block budget equals
    /// t*.
    pub excluded: bool,
    /// Running maximum of posterior_t_star over rows so far.
    pub running_max: f64,
}

/// Runs the sweep: exact posterior rows for small n, sampler rows beyond,
/// each paired with the certified upper bound at t*. Rows are ordered by n
/// (exact before sampler at equal n) and the running maximum column tracks
/// the largest posterior mass seen so far.
pub fn inconsistency_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.model.validate()?;
    config.family.validate_prior(&config.prior)?;
    config.gibbs.validate()?;
    if config.t_star != config.mixture.num_components() {
        bail_domain!(
            "the sweep bears on the true component count: t*={} but the mixture has {} \
             components",
            config.t_star,
            config.mixture.num_components()
        );
    }
    if config.exact_ns.is_empty() && config.mcmc_ns.is_empty() {
        bail_domain!("the sweep needs at least one n");
    }
    for &n in config.exact_ns.iter().chain(&config.mcmc_ns) {
        if n <= config.t_star {
            bail_refused!(
                "n={n} does not exceed t*={}; the bound degenerates at t = n",
                config.t_star
            );
        }
    }
    for &n in &config.exact_ns {
        if n > DEFAULT_DP_CAP {
            bail_refused!("exact engine cannot reach n={n} (cap {DEFAULT_DP_CAP})");
        }
    }
    let excluded = matches!(config.model, GibbsPartitionModel::PitmanYor { sigma, .. } if sigma < 0.0)
        && config.model.max_blocks() == Some(config.t_star);
    let c = bounded_case_constant(&config.family, &config.prior, &config.region)?;

    let mut tasks: Vec<(usize, bool)> = config
        .exact_ns
        .iter()
        .map(|&n| (n, true))
        .chain(config.mcmc_ns.iter().map(|&n| (n, false)))
        .collect();
    tasks.sort_by_key(|&(n, is_exact)| (n, !is_exact));

    let cells: Vec<SweepRow> = tasks
        .par_iter()
        .map(|&(n, is_exact)| {
            let data = gen_mixture_data(&config.family, &config.mixture, n, config.data_seed)?;
            let inside = data
                .points()
                .iter()
                .filter(|x| config.region.contains(x))
                .count();
            let phi_hat = inside as f64 / n as f64;

            let (posterior, se, engine) = if is_exact {
                let exact = exact_joint_subset_dp(&config.model, &config.prior, &data)?;
                let p = exact.posterior.get(config.t_star - 1).copied().unwrap_or(0.0);
                (p, 0.0, "exact")
            } else {
                let mut gibbs = config.gibbs.clone();
                gibbs.seed = derive_seed(config.gibbs.seed, &[n as u64]);
                let run = gibbs_sampler(&config.model, &config.prior, &data, &gibbs)?;
                let p = run
                    .pooled_posterior
                    .get(config.t_star - 1)
                    .copied()
                    .unwrap_or(0.0);
                let se = run.se_by_t.get(config.t_star - 1).copied().unwrap_or(0.0);
                (p, se, "gibbs")
            };

            let (phi_exact, bound_exact_phi, bound, preconditions) = if excluded {
                (None, None, None, false)
            } else {
                let report = lemma_bound_with(
                    &config.model,
                    n,
                    config.t_star,
                    c,
                    phi_hat,
                    PhiMode::FrequencyLowerBound,
                    None,
                    Some(posterior),
                )?;
                let (phi_exact, bound_exact) = if n <= config.phi_cap {
                    let (phi, _) =
                        phi_t_with_cap(&config.prior, &data, config.t_star, c, config.phi_cap)?;
                    let exact_report = lemma_bound_with(
                        &config.model,
                        n,
                        config.t_star,
                        c,
                        phi,
                        PhiMode::Exact,
                        None,
                        Some(posterior),
                    )?;
                    (Some(phi), Some(exact_report.bound))
                } else {
                    (None, None)
                };
                (
                    phi_exact,
                    bound_exact,
                    Some(report.bound),
                    report.preconditions_hold,
                )
            };

            Ok(SweepRow {
                n,
                engine: engine.to_string(),
                posterior_t_star: posterior,
                se,
                c,
                phi_hat,
                preconditions_hold: preconditions,
                bound,
                phi_exact,
                bound_exact_phi,
                excluded,
                running_max: 0.0, // filled in below, in row order
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = cells;
    let mut running = f64::NEG_INFINITY;
    for row in rows.iter_mut() {
        running = running.max(row.posterior_t_star);
        row.running_max = running;
    }
    Ok(rows)
}
