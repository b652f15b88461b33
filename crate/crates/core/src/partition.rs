//! Gibbs-type exchangeable random partitions.
//!
//! A model assigns each ordered partition A = (A_1, ..., A_t) of {1..n} the
//! probability p(A) = v_n(t) * prod_i w_n(|A_i|). Three weight systems are
//! supported:
//!
//! * Dirichlet process:  v_n(t) = theta^t / ((theta)_n * t!),  w_n(a) = (a-1)!
//! * Pitman-Yor:         v_n(t) = (theta+sigma)_(t-1;sigma) / ((theta+1)_(n-1) * t!),
//!                       w_n(a) = (1-sigma)_(a-1),
//!   with either sigma in [0,1), theta > -sigma, or sigma < 0 and
//!   theta = N|sigma| for an integer N >= 1 (then at most N blocks carry mass)
//! * CustomTabulated:    caller-supplied nonnegative tables v[t], w[a]
//!
//! Here (x)_(m;d) denotes x(x+d)...(x+(m-1)d) and (x)_m = (x)_(m;1).
//! All mass computations are carried in log space with -inf for exact zeros.
//! The Dirichlet process shares the Pitman-Yor code path with sigma = 0 (the
//! two parameterizations coincide there), so the special case reproduces it
//! bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{bail_domain, bail_refused, Result};
use crate::num::{ln_factorial, ln_gamma, log_rising, log_ratio_convention, LogSumAcc};

/// Integer-multiple tolerance for the sigma < 0 regime: theta must equal
/// N|sigma| to within this.
pub const PY_NEGATIVE_SIGMA_TOL: f64 = 1e-12;

/// Largest n for which full partition enumeration is allowed by default
/// (Bell(13) is about 2.8e7).
pub const DEFAULT_ENUM_CAP: usize = 13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GibbsPartitionModel {
    DirichletProcess {
        theta: f64,
    },
    PitmanYor {
        sigma: f64,
        theta: f64,
    },
    /// v[t-1] holds v_n(t), w[a-1] holds w_n(a); entries are nonnegative and
    /// need not be normalized. The tables are taken at face value for every
    /// n they are long enough to serve.
    CustomTabulated {
        v: Vec<f64>,
        w: Vec<f64>,
    },
}

impl GibbsPartitionModel {
    pub fn dp(theta: f64) -> Result<Self> {
        let m = GibbsPartitionModel::DirichletProcess { theta };
        m.validate()?;
        Ok(m)
    }

    pub fn py(sigma: f64, theta: f64) -> Result<Self> {
        let m = GibbsPartitionModel::PitmanYor { sigma, theta };
        m.validate()?;
        Ok(m)
    }

    pub fn custom(v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let m = GibbsPartitionModel::CustomTabulated { v, w };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GibbsPartitionModel::DirichletProcess { theta } => {
                if !(theta.is_finite() && *theta > 0.0) {
                    bail_domain!("Dirichlet process requires theta > 0, got {theta}");
                }
            }
            GibbsPartitionModel::PitmanYor { sigma, theta } => {
                if !sigma.is_finite() || !theta.is_finite() {
                    bail_domain!("Pitman-Yor parameters must be finite");
                }
                if *sigma >= 1.0 {
                    bail_domain!("Pitman-Yor requires sigma < 1, got {sigma}");
                }
                if *sigma >= 0.0 {
                    if *theta <= -*sigma {
                        bail_domain!(
                            "Pitman-Yor with sigma in [0,1) requires theta > -sigma, \
                             got sigma={sigma}, theta={theta}"
                        );
                    }
                } else {
                    let ratio = theta / -sigma;
                    let n = ratio.round();
                    if n < 1.0 || (ratio - n).abs() * -sigma > PY_NEGATIVE_SIGMA_TOL {
                        bail_domain!(
                            "Pitman-Yor with sigma < 0 requires theta = N|sigma| for an \
                             integer N >= 1 (tolerance {PY_NEGATIVE_SIGMA_TOL}), got \
                             sigma={sigma}, theta={theta}"
                        );
                    }
                }
            }
            GibbsPartitionModel::CustomTabulated { v, w } => {
                if v.is_empty() || w.is_empty() {
                    bail_domain!("custom tables must be nonempty");
                }
                for (name, table) in [("v", v), ("w", w)] {
                    if let Some(x) = table.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                        bail_domain!("custom {name} table has invalid entry {x}");
                    }
                }
            }
        }
        Ok(())
    }

    /// For Pitman-Yor with sigma < 0 this is the block budget N; for custom
    /// tables it is the length of the v table. Other models are unbounded.
    pub fn max_blocks(&self) -> Option<usize> {
        match self {
            GibbsPartitionModel::PitmanYor { sigma, theta } if *sigma < 0.0 => {
                Some((theta / -sigma).round() as usize)
            }
            GibbsPartitionModel::CustomTabulated { v, .. } => Some(v.len()),
            _ => None,
        }
    }

    /// log v_n(t), the block-count weight; -inf on structural zeros.
    pub fn log_v(&self, n: usize, t: usize) -> Result<f64> {
        self.validate()?;
        if n == 0 || t == 0 || t > n {
            bail_domain!("log_v requires 1 <= t <= n, got n={n}, t={t}");
        }
        match self {
            GibbsPartitionModel::DirichletProcess { theta } => py_log_v(0.0, *theta, n, t),
            GibbsPartitionModel::PitmanYor { sigma, theta } => py_log_v(*sigma, *theta, n, t),
            GibbsPartitionModel::CustomTabulated { v, .. } => {
                if t > v.len() {
                    bail_domain!("custom v table of length {} has no entry for t={t}", v.len());
                }
                Ok(v[t - 1].ln())
            }
        }
    }

    /// log w_n(a), the block-size weight; a >= 1.
    pub fn log_w(&self, a: usize) -> Result<f64> {
        self.validate()?;
        if a == 0 {
            bail_domain!("log_w requires a >= 1");
        }
        match self {
            GibbsPartitionModel::DirichletProcess { .. } => Ok(py_log_w(0.0, a)),
            GibbsPartitionModel::PitmanYor { sigma, .. } => Ok(py_log_w(*sigma, a)),
            GibbsPartitionModel::CustomTabulated { w, .. } => {
                if a > w.len() {
                    bail_domain!("custom w table of length {} has no entry for a={a}", w.len());
                }
                Ok(w[a - 1].ln())
            }
        }
    }

    /// log p(A) for one ordered partition. Part sizes are folded in sorted
    /// order so the value depends only on the multiset of sizes, bit for bit.
    pub fn log_eppf(&self, partition: &OrderedPartition) -> Result<f64> {
        let n = partition.n();
        let t = partition.num_parts();
        let mut sizes = partition.part_sizes();
        sizes.sort_unstable();
        let mut acc = self.log_v(n, t)?;
        for a in sizes {
            acc += self.log_w(a)?;
        }
        Ok(acc)
    }

    /// c_{w_n} = max over a in {2..n} of w_n(a) / (a w_n(a-1) w_n(1)), with
    /// the conventions 0/0 = 0 and y/0 = +inf.
    ///
    /// For DP/PY the ratio collapses to (a - 1 - sigma) / a, which is what
    /// gets evaluated; the tabulated route goes through the raw definition.
    pub fn c_w(&self, n: usize) -> Result<f64> {
        self.validate()?;
        if n < 2 {
            bail_domain!("c_w requires n >= 2, got {n}");
        }
        match self {
            GibbsPartitionModel::DirichletProcess { .. } => Ok(py_c_w(0.0, n)),
            GibbsPartitionModel::PitmanYor { sigma, .. } => Ok(py_c_w(*sigma, n)),
            GibbsPartitionModel::CustomTabulated { w, .. } => {
                if n > w.len() {
                    bail_domain!("custom w table of length {} cannot serve n={n}", w.len());
                }
                let mut best = 0.0f64;
                for a in 2..=n {
                    let num = w[a - 1].ln();
                    let den = (a as f64).ln() + w[a - 2].ln() + w[0].ln();
                    best = best.max(log_ratio_convention(num, den));
                }
                Ok(best)
            }
        }
    }

    /// c_{v_n}(t) = v_n(t) / v_n(t+1), same zero conventions as `c_w`.
    ///
    /// For DP/PY this is (t+1)/(theta + t sigma) wherever both weights are
    /// positive; with sigma < 0 and block budget N it is +inf at t = N and 0
    /// for t > N.
    pub fn c_v(&self, n: usize, t: usize) -> Result<f64> {
        self.validate()?;
        if t == 0 || t + 1 > n {
            bail_domain!("c_v requires 1 <= t < n, got n={n}, t={t}");
        }
        match self {
            GibbsPartitionModel::DirichletProcess { theta } => Ok((t as f64 + 1.0) / theta),
            GibbsPartitionModel::PitmanYor { sigma, theta } => {
                if *sigma < 0.0 {
                    let n_max = self.max_blocks().unwrap();
                    if t > n_max {
                        return Ok(0.0);
                    }
                    if t == n_max {
                        return Ok(f64::INFINITY);
                    }
                }
                Ok((t as f64 + 1.0) / (theta + t as f64 * sigma))
            }
            GibbsPartitionModel::CustomTabulated { v, .. } => {
                if t + 1 > v.len() {
                    bail_domain!("custom v table of length {} cannot serve t={t}", v.len());
                }
                Ok(log_ratio_convention(v[t - 1].ln(), v[t].ln()))
            }
        }
    }

    /// Prior distribution of the number of blocks T_n, summed over all
    /// partitions through partial Bell polynomials in log space; O(n^3).
    pub fn prior_on_t(&self, n: usize) -> Result<ClusterCountPrior> {
        self.validate()?;
        if n == 0 {
            bail_domain!("prior_on_t requires n >= 1");
        }
        let log_w: Vec<f64> = (1..=n).map(|a| self.log_w(a)).collect::<Result<_>>()?;
        let log_b = log_bell_table(n, &log_w);
        let mut log_mass = Vec::with_capacity(n);
        for t in 1..=n {
            let lv = self.log_v(n, t)?;
            log_mass.push(lv + ln_factorial(t) + log_b[n][t]);
        }
        let mut z = LogSumAcc::new();
        for &x in &log_mass {
            z.add(x);
        }
        let log_normalizer = z.log_sum();
        if log_normalizer == f64::NEG_INFINITY {
            bail_domain!("prior over block counts has no mass (all weights zero)");
        }
        let probabilities = log_mass.iter().map(|&x| (x - log_normalizer).exp()).collect();
        Ok(ClusterCountPrior {
            n,
            log_mass,
            probabilities,
            log_normalizer,
        })
    }
}

fn py_log_w(sigma: f64, a: usize) -> f64 {
    // (1 - sigma)_(a-1): positive for every sigma < 1
    ln_gamma(a as f64 - sigma) - ln_gamma(1.0 - sigma)
}

fn py_log_v(sigma: f64, theta: f64, n: usize, t: usize) -> Result<f64> {
    let numerator = if sigma < 0.0 {
        // theta = N|sigma|: the product (theta + sigma)(theta + 2 sigma)...
        // hits an exact structural zero once t - 1 reaches N. Decided from N
        // rather than from float cancellation in the factors.
        let n_max = (theta / -sigma).round() as usize;
        if t > n_max {
            return Ok(f64::NEG_INFINITY);
        }
        (1..t).map(|i| (theta + i as f64 * sigma).ln()).sum()
    } else if sigma == 0.0 {
        (t as f64 - 1.0) * theta.ln()
    } else {
        log_rising(theta + sigma, t - 1, sigma)?
    };
    let denominator = log_rising(theta + 1.0, n - 1, 1.0)?;
    Ok(numerator - denominator - ln_factorial(t))
}

fn py_c_w(sigma: f64, n: usize) -> f64 {
    (2..=n)
        .map(|a| (a as f64 - 1.0 - sigma) / a as f64)
        .fold(0.0, f64::max)
}

/// log of the partial Bell polynomial table: entry [m][t] is
/// log B_{m,t}(x_1, x_2, ...) with x_j = exp(log_x[j-1]).
fn log_bell_table(n: usize, log_x: &[f64]) -> Vec<Vec<f64>> {
    let mut b = vec![vec![f64::NEG_INFINITY; n + 1]; n + 1];
    b[0][0] = 0.0;
    for m in 1..=n {
        for t in 1..=m {
            let mut acc = LogSumAcc::new();
            // the block containing element m has size j
            for j in 1..=(m - t + 1) {
                let rest = b[m - j][t - 1];
                if rest == f64::NEG_INFINITY {
                    continue;
                }
                let choose = ln_gamma(m as f64) - ln_gamma(j as f64) - ln_gamma((m - j) as f64 + 1.0);
                acc.add(choose + log_x[j - 1] + rest);
            }
            b[m][t] = acc.log_sum();
        }
    }
    b
}

/// Prior over the number of blocks for a fixed n.
///
/// `log_mass[t-1]` is the unnormalized log prior mass of {T_n = t};
/// `probabilities` are normalized. For DP/PY the normalizer is 1 up to
/// rounding; for custom tables `log_normalizer` reports how far from
/// normalized the supplied weights are.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterCountPrior {
    pub n: usize,
    pub log_mass: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub log_normalizer: f64,
}

/// A partition of {0..n-1} into labeled nonempty parts 0..t-1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedPartition {
    assignment: Vec<usize>,
    num_parts: usize,
}

impl OrderedPartition {
    /// Builds from a label vector; every label in 0..max+1 must be used.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            bail_domain!("partition of zero elements");
        }
        let t = assignment.iter().max().unwrap() + 1;
        let mut counts = vec![0usize; t];
        for &l in &assignment {
            counts[l] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            bail_domain!("part label {empty} is unused");
        }
        Ok(OrderedPartition {
            assignment,
            num_parts: t,
        })
    }

    pub fn from_parts(n: usize, parts: &[Vec<usize>]) -> Result<Self> {
        let mut assignment = vec![usize::MAX; n];
        for (label, part) in parts.iter().enumerate() {
            if part.is_empty() {
                bail_domain!("part {label} is empty");
            }
            for &j in part {
                if j >= n {
                    bail_domain!("element {j} out of range for n={n}");
                }
                if assignment[j] != usize::MAX {
                    bail_domain!("element {j} appears in two parts");
                }
                assignment[j] = label;
            }
        }
        if assignment.iter().any(|&l| l == usize::MAX) {
            bail_domain!("parts do not cover all {n} elements");
        }
        Ok(OrderedPartition {
            assignment,
            num_parts: parts.len(),
        })
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_parts(&self) -> usize {
        self.num_parts
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn part_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_parts];
        for &l in &self.assignment {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn parts(&self) -> Vec<Vec<usize>> {
        let mut parts = vec![Vec::new(); self.num_parts];
        for (j, &l) in self.assignment.iter().enumerate() {
            parts[l].push(j);
        }
        parts
    }
}

/// Visits every partition of {0..n-1} in restricted-growth order, optionally
/// only those with exactly `parts` parts (with branch pruning). The visitor
/// receives the assignment buffer and the part count.
///
/// This is the uncapped workhorse; `for_each_partition` adds the size cap.
fn visit_partitions_unchecked(
    n: usize,
    parts: Option<usize>,
    visit: &mut impl FnMut(&[usize], usize),
) {
    let mut assignment = vec![0usize; n];
    fn recurse(
        assignment: &mut Vec<usize>,
        i: usize,
        used: usize,
        n: usize,
        parts: Option<usize>,
        visit: &mut impl FnMut(&[usize], usize),
    ) {
        if i == n {
            if parts.is_none_or(|t| t == used) {
                visit(assignment, used);
            }
            return;
        }
        if let Some(t) = parts {
            // prune: labels grow by at most one per element
            if used > t || used + (n - i) < t {
                return;
            }
        }
        let limit = match parts {
            Some(t) => used.min(t - 1) + 1,
            None => used + 1,
        };
        for label in 0..limit {
            assignment[i] = label;
            recurse(assignment, i + 1, used.max(label + 1), n, parts, visit);
        }
    }
    recurse(&mut assignment, 0, 0, n, parts, visit);
}

/// Enumerates partitions of {0..n-1} through a visitor; refuses when n
/// exceeds `cap` (pass `DEFAULT_ENUM_CAP` unless a caller has sized the
/// budget itself).
pub fn for_each_partition(
    n: usize,
    parts: Option<usize>,
    cap: usize,
    mut visit: impl FnMut(&[usize], usize),
) -> Result<()> {
    if n == 0 {
        bail_domain!("cannot enumerate partitions of zero elements");
    }
    if let Some(t) = parts {
        if t == 0 || t > n {
            bail_domain!("part count {t} out of range for n={n}");
        }
    }
    if n > cap {
        bail_refused!("partition enumeration for n={n} exceeds cap {cap}");
    }
    visit_partitions_unchecked(n, parts, &mut visit);
    Ok(())
}

/// Iterator over partitions as owned `OrderedPartition` values; refuses when
/// n exceeds `cap`. Enumeration order is restricted-growth (lexicographic).
pub fn enumerate_partitions(
    n: usize,
    parts: Option<usize>,
    cap: usize,
) -> Result<impl Iterator<Item = OrderedPartition>> {
    if n == 0 {
        bail_domain!("cannot enumerate partitions of zero elements");
    }
    if let Some(t) = parts {
        if t == 0 || t > n {
            bail_domain!("part count {t} out of range for n={n}");
        }
    }
    if n > cap {
        bail_refused!("partition enumeration for n={n} exceeds cap {cap}");
    }
    Ok(PartitionIter {
        next: Some(vec![0; n]),
        parts,
    })
}

struct PartitionIter {
    next: Option<Vec<usize>>,
    parts: Option<usize>,
}

impl Iterator for PartitionIter {
    type Item = OrderedPartition;

    fn next(&mut self) -> Option<OrderedPartition> {
        loop {
            let current = self.next.take()?;
            let num_parts = current.iter().max().unwrap() + 1;
            self.next = rgs_successor(&current);
            if self.parts.is_none_or(|t| t == num_parts) {
                return Some(OrderedPartition {
                    assignment: current,
                    num_parts,
                });
            }
        }
    }
}

/// Next restricted-growth string after `a`, or None at the last one.
fn rgs_successor(a: &[usize]) -> Option<Vec<usize>> {
    let n = a.len();
    let mut prefix_max = vec![0usize; n];
    for i in 1..n {
        prefix_max[i] = prefix_max[i - 1].max(a[i - 1]);
    }
    for i in (1..n).rev() {
        if a[i] <= prefix_max[i] {
            let mut next = a.to_vec();
            next[i] += 1;
            for x in next.iter_mut().skip(i + 1) {
                *x = 0;
            }
            return Some(next);
        }
    }
    None
}
