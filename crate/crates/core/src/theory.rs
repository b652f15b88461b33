//! Upper bounds on the posterior mass of a fixed block count, and the
//! capture diagnostics behind them.
//!
//! The chain of quantities, for data x_1..x_n, a constant c >= 0 and a
//! target block count t:
//!
//! * S_A(x, c): given a partition A, the indices j whose part A_l satisfies
//!   m(x_(A_l)) <= c m(x_(A_l - j)) m(x_j) — the points that can be split
//!   off their block at marginal cost c.
//! * phi_t(x, c) = min over t-part partitions A of |S_A| / n.
//! * C_t(x, c) = t c c_w c_v(t) / (phi_t - t/n), and the posterior bound
//!   p(T = t | x) <= C_t / (1 + C_t), valid whenever phi_t > t/n and the
//!   weight ratios c_w, c_v(t) are finite.
//!
//! The per-point constant c comes from a region U of the sample space with
//! sup over theta of p_theta(x) <= c m(x) for all x in U
//! ([`bounded_case_constant`]), or from a certified splitting bound. Any
//! lower bound on phi_t keeps the bound valid (only looser); the fraction of
//! points lying in U is such a lower bound, which is how large-n sweeps
//! assemble reports without enumerating partitions.
//!
//! Capture_beta(y, U) is the event that every subset of at least beta n of
//! the points y has its sample mean in U. For an intersection of closed
//! halfspaces u'y <= b this is decidable exactly in O(n log n) per
//! halfspace: the worst subset projects onto the top-ceil(beta n) values of
//! u'y, because enlarging a worst-case subset only pulls its mean down.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{bail_domain, bail_refused, Result};
use crate::expfam::{ConjugatePrior, ExpFam};
use crate::laplace::{MomentSpaceBox, SplittingBound};
use crate::partition::{for_each_partition, GibbsPartitionModel, OrderedPartition};
use crate::posterior::{exact_joint_subset_dp, subset_log_marginals, DEFAULT_DP_CAP};

/// Largest n for which the exact phi_t minimum is enumerated by default.
pub const DEFAULT_PHI_CAP: usize = 12;

/// Largest n for which the subset-marginal event is enumerated exactly.
pub const EVENT_EXACT_CAP: usize = 15;

/// One closed halfspace {y : u'y <= b} with |u| = 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub direction: Vec<f64>,
    pub offset: f64,
}

/// A finite intersection of closed halfspaces (boxes included).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceRegion {
    halfspaces: Vec<Halfspace>,
}

impl HalfspaceRegion {
    pub fn new(halfspaces: Vec<Halfspace>) -> Result<Self> {
        if halfspaces.is_empty() {
            bail_domain!("a halfspace region needs at least one halfspace");
        }
        let dim = halfspaces[0].direction.len();
        for h in &halfspaces {
            if h.direction.len() != dim || dim == 0 {
                bail_domain!("halfspace directions must share one nonzero dimension");
            }
            if !h.offset.is_finite() {
                bail_domain!("halfspace offset {} is not finite", h.offset);
            }
            let norm: f64 = h.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                bail_domain!("halfspace direction must be a unit vector, |u| = {norm}");
            }
        }
        Ok(HalfspaceRegion { halfspaces })
    }

    /// The axis-aligned box [lo, hi] as 2k halfspaces.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            bail_domain!("box bounds must be nonempty and of equal dimension");
        }
        let k = lo.len();
        let mut halfspaces = Vec::with_capacity(2 * k);
        for i in 0..k {
            if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i]) {
                bail_domain!("box coordinate {i} has invalid range [{}, {}]", lo[i], hi[i]);
            }
            let mut up = vec![0.0; k];
            up[i] = 1.0;
            halfspaces.push(Halfspace {
                direction: up,
                offset: hi[i],
            });
            let mut down = vec![0.0; k];
            down[i] = -1.0;
            halfspaces.push(Halfspace {
                direction: down,
                offset: -lo[i],
            });
        }
        HalfspaceRegion::new(halfspaces)
    }

    pub fn dim(&self) -> usize {
        self.halfspaces[0].direction.len()
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        self.halfspaces.iter().all(|h| {
            let proj: f64 = h.direction.iter().zip(y).map(|(u, v)| u * v).sum();
            proj <= h.offset
        })
    }
}

/// ceil(beta n) as a subset-size threshold, guarded against floating-point
/// fuzz when beta n is an exact integer.
fn subset_threshold(beta: f64, n: usize) -> usize {
    ((beta * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Exact value of Capture_beta(points, region): does every subset of at
/// least ceil(beta n) points have its mean inside the region?
pub fn capture_check(points: &[Vec<f64>], region: &HalfspaceRegion, beta: f64) -> Result<bool> {
    if points.is_empty() {
        bail_domain!("capture check needs at least one point");
    }
    if !(beta > 0.0 && beta <= 1.0) {
        bail_domain!("beta must lie in (0, 1], got {beta}");
    }
    let n = points.len();
    if points.iter().any(|p| p.len() != region.dim()) {
        bail_domain!("points and region dimensions disagree");
    }
    let m = subset_threshold(beta, n);
    for h in region.halfspaces() {
        let mut proj: Vec<f64> = points
            .iter()
            .map(|p| h.direction.iter().zip(p).map(|(u, v)| u * v).sum())
            .collect();
        proj.sort_unstable_by(|a, b| b.total_cmp(a));
        // the top-m mean dominates the mean of every subset of size >= m
        let top_mean = proj[..m].iter().sum::<f64>() / m as f64;
        if top_mean > h.offset {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Brute-force capture value over all subsets of size >= ceil(beta n);
/// refuses beyond n = 20.
pub fn capture_check_exhaustive(
    points: &[Vec<f64>],
    region: &HalfspaceRegion,
    beta: f64,
) -> Result<bool> {
    if points.is_empty() {
        bail_domain!("capture check needs at least one point");
    }
    if !(beta > 0.0 && beta <= 1.0) {
        bail_domain!("beta must lie in (0, 1], got {beta}");
    }
    let n = points.len();
    if n > 20 {
        bail_refused!("exhaustive capture check for n={n} exceeds cap 20");
    }
    let k = region.dim();
    let m = subset_threshold(beta, n);
    let mut mean = vec![0.0f64; k];
    for mask in 1usize..(1 << n) {
        let size = mask.count_ones() as usize;
        if size < m {
            continue;
        }
        for v in mean.iter_mut() {
            *v = 0.0;
        }
        let mut mm = mask;
        while mm != 0 {
            let j = mm.trailing_zeros() as usize;
            for (v, x) in mean.iter_mut().zip(&points[j]) {
                *v += x;
            }
            mm &= mm - 1;
        }
        for v in mean.iter_mut() {
            *v /= size as f64;
        }
        if !region.contains(&mean) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One row of a capture-frequency table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureFrequencyRow {
    pub n: usize,
    pub seeds: usize,
    pub frequency: f64,
}

/// Empirical frequency of Capture_beta(s(x_1..n), U) across seeds, per n.
/// The generator maps (seed, n) to a dataset; the capture points are the
/// cached sufficient statistics, and the region is the box U (validated
/// strictly inside the moment space).
pub fn capture_convergence_experiment(
    family: &ExpFam,
    u: &MomentSpaceBox,
    beta: f64,
    n_grid: &[usize],
    seeds: &[u64],
    gen: &(dyn Fn(u64, usize) -> Result<Dataset> + Sync),
) -> Result<Vec<CaptureFrequencyRow>> {
    u.validate_for(family)?;
    if seeds.is_empty() || n_grid.is_empty() {
        bail_domain!("need at least one seed and one n");
    }
    let region = HalfspaceRegion::from_box(&u.lo, &u.hi)?;
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let captures = seeds
            .par_iter()
            .map(|&seed| {
                let data = gen(seed, n)?;
                if data.family() != family || data.n() != n {
                    bail_domain!("generator returned a mismatched dataset");
                }
                capture_check(data.suffs(), &region, beta)
            })
            .collect::<Result<Vec<bool>>>()?;
        let hits = captures.iter().filter(|&&b| b).count();
        rows.push(CaptureFrequencyRow {
            n,
            seeds: seeds.len(),
            frequency: hits as f64 / seeds.len() as f64,
        });
    }
    Ok(rows)
}

/// The set S_A(x, c): indices j whose part A_l satisfies
/// log m(x_(A_l)) <= log c + log m(x_(A_l - j)) + log m(x_j), compared
/// non-strictly in log space with no tolerance.
pub fn s_a_set(
    prior: &ConjugatePrior,
    data: &Dataset,
    partition: &OrderedPartition,
    c: f64,
) -> Result<Vec<usize>> {
    if !(c >= 0.0) {
        bail_domain!("c must be nonnegative, got {c}");
    }
    if partition.n() != data.n() {
        bail_domain!(
            "partition covers {} indices but the data has {} points",
            partition.n(),
            data.n()
        );
    }
    let family = data.family();
    family.validate_prior(prior)?;
    let log_c = c.ln();
    let k = family.suff_dim();
    let mut out = Vec::new();
    let mut suff = vec![0.0f64; k];
    let mut held = vec![0.0f64; k];
    for part in partition.parts() {
        for v in suff.iter_mut() {
            *v = 0.0;
        }
        for &j in &part {
            for (v, x) in suff.iter_mut().zip(data.suff(j)) {
                *v += x;
            }
        }
        let m_full = family.log_marginal_from_suff(prior, &suff, part.len())?;
        for &j in &part {
            for i in 0..k {
                held[i] = suff[i] - data.suff(j)[i];
            }
            let m_rest = family.log_marginal_from_suff(prior, &held, part.len() - 1)?;
            let m_single = family.log_marginal_from_suff(prior, data.suff(j), 1)?;
            if m_full <= log_c + m_rest + m_single {
                out.push(j);
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Exact phi_t(x, c) = min over t-part partitions of |S_A| / n, with the
/// first minimizing partition. Enumerates with cap [`DEFAULT_PHI_CAP`].
pub fn phi_t(
    prior: &ConjugatePrior,
    data: &Dataset,
    t: usize,
    c: f64,
) -> Result<(f64, OrderedPartition)> {
    phi_t_with_cap(prior, data, t, c, DEFAULT_PHI_CAP)
}

pub fn phi_t_with_cap(
    prior: &ConjugatePrior,
    data: &Dataset,
    t: usize,
    c: f64,
    cap: usize,
) -> Result<(f64, OrderedPartition)> {
    if !(c >= 0.0) {
        bail_domain!("c must be nonnegative, got {c}");
    }
    let n = data.n();
    if t == 0 || t > n {
        bail_domain!("block count t={t} out of range for n={n}");
    }
    let log_c = c.ln();
    let order: Vec<usize> = (0..n).collect();
    let table = subset_log_marginals(data, prior, &order)?;

    let mut best = usize::MAX;
    let mut argmin: Option<Vec<usize>> = None;
    let mut masks = vec![0usize; t];
    for_each_partition(n, Some(t), cap, |assignment, _| {
        if best == 0 {
            return; // the minimum cannot go lower
        }
        for m in masks.iter_mut() {
            *m = 0;
        }
        for (j, &label) in assignment.iter().enumerate() {
            masks[label] |= 1 << j;
        }
        let mut count = 0usize;
        for (j, &label) in assignment.iter().enumerate() {
            let m = masks[label];
            let bit = 1usize << j;
            if table[m] <= log_c + table[m ^ bit] + table[bit] {
                count += 1;
                if count >= best {
                    return; // cannot improve the minimum
                }
            }
        }
        if count < best {
            best = count;
            argmin = Some(assignment.to_vec());
        }
    })?;
    let assignment = argmin.expect("partition enumeration visits at least one partition");
    Ok((best as f64 / n as f64, OrderedPartition::new(assignment)?))
}

/// How the phi value in a report was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhiMode {
    /// Exact minimum over t-part partitions.
    #[serde(rename = "exact")]
    Exact,
    /// The fraction of points inside the certifying region U: every such
    /// point is in S_A for every partition, so this never exceeds the exact
    /// phi and keeps the bound valid (only looser).
    #[serde(rename = "frequency-lower-bound")]
    FrequencyLowerBound,
}

/// All pieces of the posterior-mass bound at one (n, t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub t: usize,
    /// Per-point marginal-inequality constant.
    pub c: f64,
    /// sup over block sizes of w(a+1)/w(a), scaled per the weight system.
    pub c_w: f64,
    /// v_n(t)/v_n(t+1); +inf marks the excluded block-budget edge.
    pub c_v: f64,
    pub phi: f64,
    pub phi_mode: PhiMode,
    /// Assignment of the minimizing partition when phi is exact.
    pub phi_argmin: Option<Vec<usize>>,
    /// t c c_w c_v / (phi - t/n); meaningful only when preconditions hold.
    pub c_t: f64,
    /// C_t / (1 + C_t), or 1 when the preconditions fail.
    pub bound: f64,
    pub posterior_at_t: Option<f64>,
    /// phi > t/n.
    pub phi_above_ratio: bool,
    pub c_w_finite: bool,
    pub c_v_finite: bool,
    pub preconditions_hold: bool,
    /// True when the report carries no information (bound = 1).
    pub uninformative: bool,
    pub posterior_exceeds_bound: Option<bool>,
}

/// Assembles a [`BoundReport`] from an already-computed phi (and optional
/// posterior value). Callers are responsible for phi being a valid lower
/// bound on phi_t(x, c) for the same c.
pub fn lemma_bound_with(
    model: &GibbsPartitionModel,
    n: usize,
    t: usize,
    c: f64,
    phi: f64,
    phi_mode: PhiMode,
    phi_argmin: Option<Vec<usize>>,
    posterior_at_t: Option<f64>,
) -> Result<BoundReport> {
    if t == 0 || t >= n {
        bail_domain!("the bound needs 1 <= t < n, got t={t}, n={n}");
    }
    if !(c >= 0.0) || !(0.0..=1.0).contains(&phi) {
        bail_domain!("need c >= 0 and phi in [0,1], got c={c}, phi={phi}");
    }
    let c_w = model.c_w(n)?;
    let c_v = model.c_v(n, t)?;
    let ratio = t as f64 / n as f64;
    let phi_above_ratio = phi > ratio;
    let c_w_finite = c_w.is_finite();
    let c_v_finite = c_v.is_finite();
    let preconditions_hold = phi_above_ratio && c_w_finite && c_v_finite;

    let (c_t, bound) = if preconditions_hold {
        let factors = [t as f64, c, c_w, c_v];
        let c_t = if factors.contains(&0.0) {
            0.0
        } else {
            factors.iter().product::<f64>() / (phi - ratio)
        };
        let bound = if c_t.is_infinite() {
            1.0
        } else {
            c_t / (1.0 + c_t)
        };
        (c_t, bound)
    } else {
        (f64::INFINITY, 1.0)
    };
    Ok(BoundReport {
        n,
        t,
        c,
        c_w,
        c_v,
        phi,
        phi_mode,
        phi_argmin,
        c_t,
        bound,
        posterior_at_t,
        phi_above_ratio,
        c_w_finite,
        c_v_finite,
        preconditions_hold,
        uninformative: bound >= 1.0,
        posterior_exceeds_bound: posterior_at_t.map(|p| p > bound),
    })
}

/// Full desk-scale bound report: exact phi_t (enumeration cap
/// [`DEFAULT_PHI_CAP`]) and the exact posterior at t (subset engine, cap
/// [`DEFAULT_DP_CAP`]; omitted beyond).
pub fn lemma_bound(
    model: &GibbsPartitionModel,
    prior: &ConjugatePrior,
    data: &Dataset,
    t: usize,
    c: f64,
) -> Result<BoundReport> {
    let n = data.n();
    let (phi, argmin) = phi_t(prior, data, t, c)?;
    let posterior = if n <= DEFAULT_DP_CAP {
        Some(exact_joint_subset_dp(model, prior, data)?.posterior[t - 1])
    } else {
        None
    };
    lemma_bound_with(
        model,
        n,
        t,
        c,
        phi,
        PhiMode::Exact,
        Some(argmin.assignment().to_vec()),
        posterior,
    )
}

/// A region of the observation space X over which the per-point constant is
/// taken: an explicit finite point set, or a box scanned on a grid
/// (continuous families only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ObservationRegion {
    #[serde(rename = "points")]
    Points(Vec<Vec<f64>>),
    #[serde(rename = "box")]
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
        per_dim: usize,
    },
}

impl ObservationRegion {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            ObservationRegion::Points(pts) => pts.iter().any(|p| p == x),
            ObservationRegion::Box { lo, hi, .. } => {
                x.len() == lo.len()
                    && x.iter()
                        .zip(lo.iter().zip(hi))
                        .all(|(v, (a, b))| *v >= *a && *v <= *b)
            }
        }
    }
}

/// c = sup over x in U of sup over theta of p_theta(x) / m(x). The theta
/// supremum is the closed-form extended log-partition conjugate, so only
/// the x supremum is approximate: exact over point sets, and a grid scan
/// widened by 5% over boxes. Families whose per-point density is unbounded
/// (normal-gamma) yield +inf, which the caller sees as "no finite constant"
/// rather than an error.
pub fn bounded_case_constant(
    family: &ExpFam,
    prior: &ConjugatePrior,
    region: &ObservationRegion,
) -> Result<f64> {
    family.validate_prior(prior)?;
    let log_c_at = |x: &[f64]| -> Result<f64> {
        family.validate_point(x)?;
        let sup = family.lambda_extended(x)?;
        if sup == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let m = family.log_marginal_from_suff(prior, &family.suff_stat(x)?, 1)?;
        Ok(sup - m)
    };
    match region {
        ObservationRegion::Points(pts) => {
            if pts.is_empty() {
                bail_domain!("the region must contain at least one point");
            }
            let mut best = f64::NEG_INFINITY;
            for p in pts {
                best = best.max(log_c_at(p)?);
            }
            Ok(best.exp())
        }
        ObservationRegion::Box { lo, hi, per_dim } => {
            let discrete = matches!(family, ExpFam::PoissonGamma | ExpFam::GeometricBeta);
            if discrete {
                bail_domain!(
                    "count families take a finite point set, not a box; enumerate the \
                     integer points instead"
                );
            }
            if lo.len() != family.obs_dim() || hi.len() != lo.len() {
                bail_domain!("box dimension does not match the observation space");
            }
            if *per_dim < 2 {
                bail_domain!("box grids need at least 2 points per axis");
            }
            for i in 0..lo.len() {
                if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i]) {
                    bail_domain!("box coordinate {i} has invalid range [{}, {}]", lo[i], hi[i]);
                }
            }
            let mut best = f64::NEG_INFINITY;
            let mut idx = vec![0usize; lo.len()];
            loop {
                let x: Vec<f64> = idx
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(&i, (a, b))| {
                        if a == b {
                            *a
                        } else {
                            a + (b - a) * i as f64 / (*per_dim - 1) as f64
                        }
                    })
                    .collect();
                best = best.max(log_c_at(&x)?);
                // odometer step over the grid
                let mut d = 0;
                loop {
                    if d == idx.len() {
                        return Ok(if best == f64::INFINITY {
                            f64::INFINITY
                        } else {
                            1.05 * best.exp()
                        });
                    }
                    idx[d] += 1;
                    if idx[d] < *per_dim {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
            }
        }
    }
}

/// Which route produced an event verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventMode {
    #[serde(rename = "exact")]
    Exact,
    /// Verified via capture conditions that imply the event, plus random
    /// spot checks; a `false` verdict means "not certified", not a
    /// counterexample, unless spot failures are reported.
    #[serde(rename = "sufficient-only")]
    SufficientOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub n: usize,
    pub beta: f64,
    pub c: f64,
    pub mode: EventMode,
    pub holds: bool,
    pub subsets_checked: u64,
    /// Random subsets that violated the inner condition (sufficient mode).
    pub spot_failures: u64,
    /// The two capture verdicts behind a sufficient-mode certificate.
    pub capture_suff_means: Option<bool>,
    pub capture_singleton_moments: Option<bool>,
}

/// Is 2 |K*| >= |J| where K* are the points of J deletable at cost c?
fn deletion_condition(table: &[f64], log_c: f64, mask: usize) -> bool {
    let size = mask.count_ones() as usize;
    let m_full = table[mask];
    let mut good = 0usize;
    let mut mm = mask;
    while mm != 0 {
        let bit = mm & mm.wrapping_neg();
        if m_full <= log_c + table[mask ^ bit] + table[bit] {
            good += 1;
        }
        mm ^= bit;
    }
    2 * good >= size
}

/// Exact verdict of the deletion event: for every J with |J| >= beta n,
/// at least half of J's points satisfy
/// m(x_J) <= c m(x_(J - j)) m(x_j). Refuses beyond n = [`EVENT_EXACT_CAP`].
pub fn subset_marginal_event_exact(
    prior: &ConjugatePrior,
    data: &Dataset,
    beta: f64,
    c: f64,
) -> Result<EventReport> {
    if !(beta > 0.0 && beta <= 1.0) {
        bail_domain!("beta must lie in (0, 1], got {beta}");
    }
    if !(c >= 0.0) {
        bail_domain!("c must be nonnegative, got {c}");
    }
    let n = data.n();
    if n == 0 {
        bail_domain!("need at least one observation");
    }
    if n > EVENT_EXACT_CAP {
        bail_refused!(
            "exact event enumeration for n={n} exceeds cap {EVENT_EXACT_CAP}; use the \
             sufficient-condition route"
        );
    }
    let order: Vec<usize> = (0..n).collect();
    let table = subset_log_marginals(data, prior, &order)?;
    let log_c = c.ln();
    let m = subset_threshold(beta, n);
    let mut holds = true;
    let mut checked = 0u64;
    for mask in 1usize..(1 << n) {
        if (mask.count_ones() as usize) < m {
            continue;
        }
        checked += 1;
        if !deletion_condition(&table, log_c, mask) {
            holds = false;
            break;
        }
    }
    Ok(EventReport {
        n,
        beta,
        c,
        mode: EventMode::Exact,
        holds,
        subsets_checked: checked,
        spot_failures: 0,
        capture_suff_means: None,
        capture_singleton_moments: None,
    })
}

/// Sufficient-condition verdict of the deletion event at the certified
/// singleton constant c = exp(log_singleton_constant):
///
/// * Capture_(beta/2) of the sufficient statistics in the certified hull
///   puts the posterior mean parameter of every J and every J - j in the
///   hull (their sizes are >= ceil(beta n) - 1 >= ceil(beta n / 2), which
///   is checked);
/// * Capture_beta of the indicators 1{(xi + s_j)/(nu + 1) in hull} against
///   mean >= 1/2 guarantees half of each J has its singleton moment there
///   too, so the splitting inequality applies to those deletions.
///
/// `spot_trials` random subsets are additionally tested directly; any
/// failure is a genuine counterexample and forces a false verdict.
pub fn subset_marginal_event_sufficient(
    prior: &ConjugatePrior,
    data: &Dataset,
    beta: f64,
    sb: &SplittingBound,
    spot_trials: usize,
    seed: u64,
) -> Result<EventReport> {
    if !(beta > 0.0 && beta <= 1.0) {
        bail_domain!("beta must lie in (0, 1], got {beta}");
    }
    let n = data.n();
    if n == 0 {
        bail_domain!("need at least one observation");
    }
    let family = data.family();
    family.validate_prior(prior)?;
    let c = sb.log_singleton_constant.exp();
    let k = family.suff_dim();

    let m_beta = subset_threshold(beta, n);
    let m_half = subset_threshold(beta / 2.0, n);
    let sizes_adequate = m_beta >= 1 && m_beta - 1 >= m_half;

    let hull_region = HalfspaceRegion::from_box(&sb.hull.lo, &sb.hull.hi)?;
    // the posterior mean of a subset is a convex combination of the prior
    // mean (in the hull by construction) and the subset's sample mean, so
    // capture of the raw sufficient statistics is what's needed
    let capture_suff = capture_check(data.suffs(), &hull_region, beta / 2.0)?;
    let singleton_flags: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mu: Vec<f64> = prior
                .xi
                .iter()
                .zip(data.suff(j))
                .map(|(xi, s)| (xi + s) / (prior.nu + 1.0))
                .collect();
            vec![if sb.hull.contains(&mu) { 1.0 } else { 0.0 }]
        })
        .collect();
    let half_region = HalfspaceRegion::new(vec![Halfspace {
        direction: vec![-1.0],
        offset: -0.5,
    }])?;
    let capture_half = capture_check(&singleton_flags, &half_region, beta)?;

    // independent randomized falsification attempts on the event itself
    let log_c = sb.log_singleton_constant;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spot_failures = 0u64;
    let mut suff = vec![0.0f64; k];
    let mut held = vec![0.0f64; k];
    let mut members: Vec<usize> = Vec::with_capacity(n);
    for _ in 0..spot_trials {
        members.clear();
        for j in 0..n {
            if rng.gen::<bool>() {
                members.push(j);
            }
        }
        if members.len() < m_beta {
            continue;
        }
        for v in suff.iter_mut() {
            *v = 0.0;
        }
        for &j in &members {
            for (v, x) in suff.iter_mut().zip(data.suff(j)) {
                *v += x;
            }
        }
        let m_full = family.log_marginal_from_suff(prior, &suff, members.len())?;
        let mut good = 0usize;
        for &j in &members {
            for i in 0..k {
                held[i] = suff[i] - data.suff(j)[i];
            }
            let m_rest = family.log_marginal_from_suff(prior, &held, members.len() - 1)?;
            let m_single = family.log_marginal_from_suff(prior, data.suff(j), 1)?;
            if m_full <= log_c + m_rest + m_single {
                good += 1;
            }
        }
        if 2 * good < members.len() {
            spot_failures += 1;
        }
    }

    Ok(EventReport {
        n,
        beta,
        c,
        mode: EventMode::SufficientOnly,
        holds: sizes_adequate && capture_suff && capture_half && spot_failures == 0,
        subsets_checked: spot_trials as u64,
        spot_failures,
        capture_suff_means: Some(capture_suff),
        capture_singleton_moments: Some(capture_half),
    })
}
