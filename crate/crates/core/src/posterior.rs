//! Exact posterior distributions on the number of clusters.
//!
//! With an ordered-partition prior p(A) = v_n(t) prod_i w(|A_i|) and a
//! conjugate marginal m, the joint mass of the data and the block count is
//!
//!   p(x, T = t) = v_n(t) t! sum over unordered partitions {B_1..B_t}
//!                 of prod_b w(|B_b|) m(x_{B_b}),
//!
//! where t! converts the ordered-tuple sum into the unordered one. Two
//! engines compute the full vector (p(x, T=1), ..., p(x, T=n)) exactly:
//!
//! * [`exact_joint_enumeration`] visits every set partition (default cap 13;
//!   there are about 2.8e7 of them at the cap);
//! * [`exact_joint_subset_dp`] runs a subset convolution over bitmasks: with
//!   g(B) = w(|B|) m(x_B) and f_t(S) the unordered t-block sum for subset S,
//!
//!     f_t(S) = sum over B with min(S) in B, B subset of S
//!              of g(B) f_(t-1)(S \ B),
//!
//!   which counts every unordered partition exactly once. Marginals for all
//!   2^n - 1 subsets are precomputed from cached sufficient statistics. The
//!   run costs O(3^n) block visits per layer (default cap 20, which takes
//!   minutes; n <= 14 takes milliseconds).
//!
//! Both engines fold the data in a canonical sort order, so every output is
//! bit-for-bit invariant under permutations of the input points.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{bail_domain, bail_refused, Result};
use crate::expfam::ConjugatePrior;
use crate::num::{ln_factorial, logsumexp, LogSumAcc};
use crate::partition::{for_each_partition, GibbsPartitionModel, DEFAULT_ENUM_CAP};

/// Largest n the subset dynamic program accepts by default.
pub const DEFAULT_DP_CAP: usize = 20;

/// The joint and posterior over the number of blocks t in {1..n}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterCountPosterior {
    pub n: usize,
    /// log p(x, T=t) at index t-1; -inf marks zero mass (JSON renders null).
    pub log_joint: Vec<f64>,
    /// log p(x), the log-sum-exp of `log_joint`.
    pub log_evidence: f64,
    /// p(T=t | x) at index t-1; all zeros when `degenerate`.
    pub posterior: Vec<f64>,
    /// Set when every t has zero joint mass, so no posterior exists; the
    /// posterior vector is then identically zero by convention.
    pub degenerate: bool,
}

/// Normalizes a log-joint vector into a [`ClusterCountPosterior`].
pub fn posterior_of_t(log_joint: Vec<f64>) -> Result<ClusterCountPosterior> {
    if log_joint.is_empty() {
        bail_domain!("log_joint must have at least one entry");
    }
    if log_joint.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        bail_domain!("log_joint entries must be finite or -inf");
    }
    let n = log_joint.len();
    let log_evidence = logsumexp(&log_joint);
    let degenerate = log_evidence == f64::NEG_INFINITY;
    let posterior = if degenerate {
        vec![0.0; n]
    } else {
        log_joint.iter().map(|x| (x - log_evidence).exp()).collect()
    };
    Ok(ClusterCountPosterior {
        n,
        log_joint,
        log_evidence,
        posterior,
        degenerate,
    })
}

/// log m(x_B) for every subset B of {0..n-1}, indexed by bitmask with bit j
/// standing for the point `order[j]`; entry 0 is log m(empty) = 0. Built
/// incrementally off the lowest bit, so the whole table costs 2^n additions
/// of sufficient statistics plus one marginal evaluation per subset.
pub fn subset_log_marginals(
    data: &Dataset,
    prior: &ConjugatePrior,
    order: &[usize],
) -> Result<Vec<f64>> {
    let n = data.n();
    let family = data.family();
    family.validate_prior(prior)?;
    if order.len() != n {
        bail_domain!("order has {} entries for {n} points", order.len());
    }
    let mut seen = vec![false; n];
    for &j in order {
        if j >= n || seen[j] {
            bail_domain!("order is not a permutation of 0..{n}");
        }
        seen[j] = true;
    }
    if n >= usize::BITS as usize - 1 {
        bail_domain!("bitmask subset table cannot index n={n} points");
    }

    let k = family.suff_dim();
    let size = 1usize << n;
    let mut suffs = vec![0.0f64; size * k];
    let mut log_m = vec![0.0f64; size];
    for s in 1..size {
        let low = s.trailing_zeros() as usize;
        let rest = s & (s - 1);
        let point_suff = data.suff(order[low]);
        // split_at_mut: rest < s always, so the borrow ranges never overlap
        let (head, tail) = suffs.split_at_mut(s * k);
        let src = &head[rest * k..rest * k + k];
        let dst = &mut tail[..k];
        for i in 0..k {
            dst[i] = src[i] + point_suff[i];
        }
        log_m[s] = family.log_marginal_from_suff(prior, dst, s.count_ones() as usize)?;
    }
    Ok(log_m)
}

/// log v_n(t) + log t! for t in 1..=n; the ordered-to-unordered conversion
/// factor is folded in here once.
fn log_v_factorial_table(model: &GibbsPartitionModel, n: usize) -> Result<Vec<f64>> {
    (1..=n)
        .map(|t| Ok(model.log_v(n, t)? + ln_factorial(t)))
        .collect()
}

fn log_w_table(model: &GibbsPartitionModel, n: usize) -> Result<Vec<f64>> {
    (1..=n).map(|a| model.log_w(a)).collect()
}

/// log p(x, T=t) for t in 1..=n by full partition enumeration, with the
/// per-block data weight supplied as a closure over sorted index blocks
/// (`|_| 0.0` recovers the prior itself). Refuses when n exceeds `cap`.
pub fn enumeration_log_joint(
    model: &GibbsPartitionModel,
    n: usize,
    log_m: &mut dyn FnMut(&[usize]) -> f64,
    cap: usize,
) -> Result<Vec<f64>> {
    model.validate()?;
    if n == 0 {
        bail_domain!("need at least one observation");
    }
    let lvt = log_v_factorial_table(model, n)?;
    let lw = log_w_table(model, n)?;
    let mut acc: Vec<LogSumAcc> = (0..n).map(|_| LogSumAcc::new()).collect();
    let mut blocks: Vec<Vec<usize>> = vec![Vec::with_capacity(n); n];
    for_each_partition(n, None, cap, |assignment, t| {
        for b in blocks.iter_mut().take(t) {
            b.clear();
        }
        for (j, &label) in assignment.iter().enumerate() {
            blocks[label].push(j);
        }
        let mut sum = 0.0;
        for b in blocks.iter().take(t) {
            sum += lw[b.len() - 1];
            if sum == f64::NEG_INFINITY {
                break;
            }
            sum += log_m(b);
        }
        acc[t - 1].add(sum);
    })?;
    Ok(lvt
        .iter()
        .zip(&acc)
        .map(|(v, a)| v + a.log_sum())
        .collect())
}

/// log p(x, T=t) for t in 1..=n by subset dynamic programming, with the same
/// closure contract as [`enumeration_log_joint`]. Refuses when n exceeds
/// `cap`.
pub fn subset_dp_log_joint(
    model: &GibbsPartitionModel,
    n: usize,
    log_m: &mut dyn FnMut(&[usize]) -> f64,
    cap: usize,
) -> Result<Vec<f64>> {
    model.validate()?;
    if n == 0 {
        bail_domain!("need at least one observation");
    }
    if n > cap {
        bail_refused!("subset dynamic program for n={n} exceeds cap {cap}");
    }
    let lvt = log_v_factorial_table(model, n)?;
    let lw = log_w_table(model, n)?;
    let mut joint = vec![f64::NEG_INFINITY; n];
    // layers beyond the last t with v_n(t) > 0 cannot contribute
    let t_stop = match (1..=n).rev().find(|&t| lvt[t - 1] > f64::NEG_INFINITY) {
        Some(t) => t,
        None => return Ok(joint),
    };

    let size = 1usize << n;
    let mut g = vec![f64::NEG_INFINITY; size];
    let mut idx = Vec::with_capacity(n);
    for s in 1..size {
        idx.clear();
        let mut m = s;
        while m != 0 {
            idx.push(m.trailing_zeros() as usize);
            m &= m - 1;
        }
        let w = lw[idx.len() - 1];
        if w > f64::NEG_INFINITY {
            g[s] = w + log_m(&idx);
        }
    }

    let mut prev = vec![f64::NEG_INFINITY; size];
    prev[0] = 0.0; // one (empty) partition of the empty set into zero blocks
    let mut cur = vec![f64::NEG_INFINITY; size];
    for t in 1..=t_stop {
        cur[0] = f64::NEG_INFINITY; // no t >= 1 partition of the empty set
        for s in 1..size {
            if (s.count_ones() as usize) < t {
                cur[s] = f64::NEG_INFINITY;
                continue;
            }
            let low = s & s.wrapping_neg();
            let rest = s ^ low;
            let mut acc = LogSumAcc::new();
            let mut m = rest;
            loop {
                let b = m | low;
                let gb = g[b];
                if gb > f64::NEG_INFINITY {
                    let f = prev[s ^ b];
                    if f > f64::NEG_INFINITY {
                        acc.add(gb + f);
                    }
                }
                if m == 0 {
                    break;
                }
                m = (m - 1) & rest;
            }
            cur[s] = acc.log_sum();
        }
        if lvt[t - 1] > f64::NEG_INFINITY {
            joint[t - 1] = lvt[t - 1] + cur[size - 1];
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(joint)
}

/// Exact joint and posterior over t by full enumeration (cap
/// [`DEFAULT_ENUM_CAP`]).
pub fn exact_joint_enumeration(
    model: &GibbsPartitionModel,
    prior: &ConjugatePrior,
    data: &Dataset,
) -> Result<ClusterCountPosterior> {
    exact_joint_enumeration_with_cap(model, prior, data, DEFAULT_ENUM_CAP)
}

pub fn exact_joint_enumeration_with_cap(
    model: &GibbsPartitionModel,
    prior: &ConjugatePrior,
    data: &Dataset,
    cap: usize,
) -> Result<ClusterCountPosterior> {
    let order = data.canonical_order();
    let table = subset_log_marginals(data, prior, &order)?;
    let mut log_m = |block: &[usize]| {
        let mask = block.iter().fold(0usize, |m, &j| m | (1 << j));
        table[mask]
    };
    let joint = enumeration_log_joint(model, data.n(), &mut log_m, cap)?;
    posterior_of_t(joint)
}

/// Exact joint and posterior over t by subset dynamic programming (cap
/// [`DEFAULT_DP_CAP`]).
pub fn exact_joint_subset_dp(
    model: &GibbsPartitionModel,
    prior: &ConjugatePrior,
    data: &Dataset,
) -> Result<ClusterCountPosterior> {
    exact_joint_subset_dp_with_cap(model, prior, data, DEFAULT_DP_CAP)
}

pub fn exact_joint_subset_dp_with_cap(
    model: &GibbsPartitionModel,
    prior: &ConjugatePrior,
    data: &Dataset,
    cap: usize,
) -> Result<ClusterCountPosterior> {
    let order = data.canonical_order();
    let table = subset_log_marginals(data, prior, &order)?;
    let mut log_m = |block: &[usize]| {
        let mask = block.iter().fold(0usize, |m, &j| m | (1 << j));
        table[mask]
    };
    let joint = subset_dp_log_joint(model, data.n(), &mut log_m, cap)?;
    posterior_of_t(joint)
}
