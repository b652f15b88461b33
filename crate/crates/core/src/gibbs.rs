//! Collapsed Gibbs sampling over partitions.
//!
//! One sweep reassigns every point in turn: point j is removed from its
//! block, and with t blocks remaining it joins an existing block B or opens
//! a new one with probabilities
//!
//!   existing:  t! v_n(t)     * [w(|B|+1)/w(|B|)] * m(x_(B+j)) / m(x_B),
//!   new:      (t+1)! v_n(t+1) * w(1) * m(x_j),
//!
//! normalized by log-sum-exp. Block marginals enter through cached psi
//! values of accumulated sufficient statistics, so a reassignment costs one
//! psi evaluation per candidate block. Caches are rebuilt from scratch every
//! 64 sweeps to stop floating-point drift.
//!
//! Randomness comes from a counter-based generator (ChaCha8) seeded with the
//! configured 64-bit seed; chain c reads its own dedicated stream, set via
//! the generator's stream index c. Chains therefore produce identical output
//! no matter how they are scheduled across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{bail_domain, Result};
use crate::expfam::ConjugatePrior;
use crate::num::ln_factorial;
use crate::partition::GibbsPartitionModel;

/// How a chain is initialized before any sweeps run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitStrategy {
    /// Every point in a single block.
    #[default]
    #[serde(rename = "all-in-one-block")]
    OneBlock,
    /// Every point in its own block.
    #[serde(rename = "all-singletons")]
    Singletons,
    /// Uniform labels in 0..n drawn from the chain's generator, compacted.
    #[serde(rename = "random")]
    Random,
}

/// The order points are visited within a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanOrder {
    /// Ascending index order (reproducible default).
    #[default]
    #[serde(rename = "systematic")]
    Systematic,
    /// n draws with replacement per sweep.
    #[serde(rename = "random")]
    Random,
}

fn default_chains() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub seed: u64,
    pub burn_in_sweeps: usize,
    pub sample_sweeps: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub init: InitStrategy,
    #[serde(default)]
    pub scan: ScanOrder,
    /// Record the sorted block sizes of every sampled sweep (needed for
    /// census-style diagnostics and trace dumps).
    #[serde(default)]
    pub record_block_profiles: bool,
}

impl GibbsConfig {
    pub fn new(seed: u64, burn_in_sweeps: usize, sample_sweeps: usize, chains: usize) -> Self {
        GibbsConfig {
            seed,
            burn_in_sweeps,
            sample_sweeps,
            chains,
            init: InitStrategy::default(),
            scan: ScanOrder::default(),
            record_block_profiles: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_sweeps == 0 {
            bail_domain!("sample_sweeps must be at least 1");
        }
        if self.chains == 0 {
            bail_domain!("chains must be at least 1");
        }
        Ok(())
    }
}

/// Per-chain sampling record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub chain: usize,
    /// Count of sampled sweeps with T = t at index t-1; sums to
    /// sample_sweeps.
    pub histogram: Vec<u64>,
    pub mean_t: f64,
    /// Final partition, relabeled to 0..t-1 in order of first appearance.
    pub final_assignment: Vec<usize>,
    /// Sorted block sizes per sampled sweep, when requested.
    pub block_profiles: Option<Vec<Vec<u16>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    pub n: usize,
    pub chains: Vec<ChainStats>,
    /// Histogram of T pooled over chains, normalized.
    pub pooled_posterior: Vec<f64>,
    /// Between-chain standard error of the per-t proportion, per t; zeros
    /// when only one chain ran.
    pub se_by_t: Vec<f64>,
}

/// Runs `config.chains` independent collapsed Gibbs chains.
pub fn gibbs_sampler(
    model: &GibbsPartitionModel,
    prior: &ConjugatePrior,
    data: &Dataset,
    config: &GibbsConfig,
) -> Result<ChainResult> {
    model.validate()?;
    config.validate()?;
    let family = data.family();
    family.validate_prior(prior)?;
    let n = data.n();
    if n == 0 {
        bail_domain!("need at least one observation");
    }
    if n > u16::MAX as usize {
        bail_domain!("block profiles index block sizes as 16-bit; n={n} is too large");
    }

    // t! v_n(t) for t in 1..=n at index t (index 0 unused), and log w(a) for
    // a in 1..=n at index a; the sampler requires strictly positive
    // block-size weights so that ratio moves are always well defined
    let mut lvfact = vec![f64::NEG_INFINITY; n + 2];
    for t in 1..=n {
        lvfact[t] = model.log_v(n, t)? + ln_factorial(t);
    }
    let mut lw = vec![f64::NEG_INFINITY; n + 1];
    for a in 1..=n {
        lw[a] = model.log_w(a)?;
        if lw[a] == f64::NEG_INFINITY {
            bail_domain!(
                "Gibbs sampling requires strictly positive block-size weights, but \
                 w({a}) = 0; the exact engines handle such tables"
            );
        }
    }
    let psi0 = family.psi(&prior.xi, prior.nu)?;
    let k = family.suff_dim();
    let mut psi1 = vec![0.0f64; n];
    {
        let mut xi = vec![0.0f64; k];
        for j in 0..n {
            for i in 0..k {
                xi[i] = prior.xi[i] + data.suff(j)[i];
            }
            psi1[j] = family.psi(&xi, prior.nu + 1.0)?;
        }
    }

    let stats = (0..config.chains)
        .into_par_iter()
        .map(|chain| {
            run_chain(
                chain, prior, data, config, &lvfact, &lw, psi0, &psi1,
            )
        })
        .collect::<Result<Vec<ChainStats>>>()?;

    let mut pooled = vec![0.0f64; n];
    for st in &stats {
        for (p, h) in pooled.iter_mut().zip(&st.histogram) {
            *p += *h as f64;
        }
    }
    let total: f64 = pooled.iter().sum();
    for p in pooled.iter_mut() {
        *p /= total;
    }
    let c = config.chains;
    let se_by_t = if c < 2 {
        vec![0.0; n]
    } else {
        (0..n)
            .map(|t| {
                let props: Vec<f64> = stats
                    .iter()
                    .map(|st| st.histogram[t] as f64 / config.sample_sweeps as f64)
                    .collect();
                let mean = props.iter().sum::<f64>() / c as f64;
                let var =
                    props.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (c as f64 - 1.0);
                (var / c as f64).sqrt()
            })
            .collect()
    };
    Ok(ChainResult {
        n,
        chains: stats,
        pooled_posterior: pooled,
        se_by_t,
    })
}

/// Mutable slot-table state of one chain.
struct State {
    k: usize,
    assignment: Vec<usize>,
    count: Vec<usize>,
    suff: Vec<f64>,
    psi: Vec<f64>,
    free: Vec<usize>,
    occupied: Vec<usize>,
    pos_in_occupied: Vec<usize>,
}

impl State {
    fn new_slot(&mut self) -> usize {
        if let Some(s) = self.free.pop() {
            s
        } else {
            self.count.push(0);
            self.psi.push(0.0);
            self.suff.extend(std::iter::repeat(0.0).take(self.k));
            self.pos_in_occupied.push(0);
            self.count.len() - 1
        }
    }

    fn occupy(&mut self, s: usize) {
        self.pos_in_occupied[s] = self.occupied.len();
        self.occupied.push(s);
    }

    fn release(&mut self, s: usize) {
        let pos = self.pos_in_occupied[s];
        self.occupied.swap_remove(pos);
        if pos < self.occupied.len() {
            self.pos_in_occupied[self.occupied[pos]] = pos;
        }
        self.free.push(s);
    }
}

#[allow(clippy::too_many_arguments)]
fn run_chain(
    chain: usize,
    prior: &ConjugatePrior,
    data: &Dataset,
    config: &GibbsConfig,
    lvfact: &[f64],
    lw: &[f64],
    psi0: f64,
    psi1: &[f64],
) -> Result<ChainStats> {
    let n = data.n();
    let family = data.family();
    let k = family.suff_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64);

    let labels: Vec<usize> = match config.init {
        InitStrategy::OneBlock => vec![0; n],
        InitStrategy::Singletons => (0..n).collect(),
        InitStrategy::Random => (0..n).map(|_| rng.gen_range(0..n)).collect(),
    };
    let mut st = State {
        k,
        assignment: vec![0; n],
        count: Vec::new(),
        suff: Vec::new(),
        psi: Vec::new(),
        free: Vec::new(),
        occupied: Vec::new(),
        pos_in_occupied: Vec::new(),
    };
    let mut slot_of_label: Vec<Option<usize>> = vec![None; n];
    for j in 0..n {
        let s = match slot_of_label[labels[j]] {
            Some(s) => s,
            None => {
                let s = st.new_slot();
                st.occupy(s);
                slot_of_label[labels[j]] = Some(s);
                s
            }
        };
        st.assignment[j] = s;
        st.count[s] += 1;
        for i in 0..k {
            st.suff[s * k + i] += data.suff(j)[i];
        }
    }
    let mut xi_buf = vec![0.0f64; k];
    for &s in &st.occupied {
        for i in 0..k {
            xi_buf[i] = prior.xi[i] + st.suff[s * k + i];
        }
        st.psi[s] = family.psi(&xi_buf, prior.nu + st.count[s] as f64)?;
    }
    let t0 = st.occupied.len();
    if lvfact[t0] == f64::NEG_INFINITY {
        bail_domain!(
            "initial configuration with {t0} blocks has zero prior mass under this \
             model; choose an initialization within the supported block budget"
        );
    }

    let mut histogram = vec![0u64; n];
    let mut profiles: Option<Vec<Vec<u16>>> = if config.record_block_profiles {
        Some(Vec::with_capacity(config.sample_sweeps))
    } else {
        None
    };
    let mut weights: Vec<f64> = Vec::with_capacity(n + 1);
    let mut cand_psi: Vec<f64> = Vec::with_capacity(n + 1);
    let mut sum_t = 0.0f64;

    let total_sweeps = config.burn_in_sweeps + config.sample_sweeps;
    for sweep in 0..total_sweeps {
        for step in 0..n {
            let j = match config.scan {
                ScanOrder::Systematic => step,
                ScanOrder::Random => rng.gen_range(0..n),
            };
            let sj = data.suff(j);
            // remove j from its block
            let old = st.assignment[j];
            st.count[old] -= 1;
            if st.count[old] == 0 {
                st.release(old);
            } else {
                for i in 0..k {
                    st.suff[old * k + i] -= sj[i];
                }
                for i in 0..k {
                    xi_buf[i] = prior.xi[i] + st.suff[old * k + i];
                }
                st.psi[old] = family.psi(&xi_buf, prior.nu + st.count[old] as f64)?;
            }

            // candidate weights: existing blocks, then a fresh block
            let t = st.occupied.len();
            weights.clear();
            cand_psi.clear();
            for &b in &st.occupied {
                let a = st.count[b];
                for i in 0..k {
                    xi_buf[i] = prior.xi[i] + st.suff[b * k + i] + sj[i];
                }
                let psi_join = family.psi(&xi_buf, prior.nu + (a + 1) as f64)?;
                weights.push(lvfact[t] + (lw[a + 1] - lw[a]) + psi_join - st.psi[b]);
                cand_psi.push(psi_join);
            }
            weights.push(lvfact[t + 1] + lw[1] + psi1[j] - psi0);

            // sample by max-shifted exponentiation
            let wmax = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if wmax == f64::NEG_INFINITY {
                bail_domain!(
                    "every reassignment of a point has zero mass; the model cannot \
                     support this data configuration"
                );
            }
            let mut total = 0.0f64;
            for w in weights.iter_mut() {
                *w = (*w - wmax).exp();
                total += *w;
            }
            let mut u = rng.gen::<f64>() * total;
            let mut choice = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    choice = i;
                    break;
                }
            }

            if choice == t {
                let s = st.new_slot();
                st.count[s] = 1;
                for i in 0..k {
                    st.suff[s * k + i] = sj[i];
                }
                st.psi[s] = psi1[j];
                st.occupy(s);
                st.assignment[j] = s;
            } else {
                let b = st.occupied[choice];
                st.count[b] += 1;
                for i in 0..k {
                    st.suff[b * k + i] += sj[i];
                }
                st.psi[b] = cand_psi[choice];
                st.assignment[j] = b;
            }
        }

        // periodic cache rebuild against floating-point drift
        if (sweep + 1) % 64 == 0 {
            for &s in &st.occupied {
                for i in 0..k {
                    st.suff[s * k + i] = 0.0;
                }
            }
            for j in 0..n {
                let s = st.assignment[j];
                for i in 0..k {
                    st.suff[s * k + i] += data.suff(j)[i];
                }
            }
            for &s in &st.occupied {
                for i in 0..k {
                    xi_buf[i] = prior.xi[i] + st.suff[s * k + i];
                }
                st.psi[s] = family.psi(&xi_buf, prior.nu + st.count[s] as f64)?;
            }
        }

        if sweep >= config.burn_in_sweeps {
            let t = st.occupied.len();
            histogram[t - 1] += 1;
            sum_t += t as f64;
            if let Some(p) = profiles.as_mut() {
                let mut sizes: Vec<u16> =
                    st.occupied.iter().map(|&s| st.count[s] as u16).collect();
                sizes.sort_unstable();
                p.push(sizes);
            }
        }
    }

    // compact final labels in order of first appearance
    let mut relabel: Vec<Option<usize>> = vec![None; st.count.len()];
    let mut next = 0usize;
    let final_assignment: Vec<usize> = st
        .assignment
        .iter()
        .map(|&s| {
            *relabel[s].get_or_insert_with(|| {
                let l = next;
                next += 1;
                l
            })
        })
        .collect();

    Ok(ChainStats {
        chain,
        histogram,
        mean_t: sum_t / config.sample_sweeps as f64,
        final_assignment,
        block_profiles: profiles,
    })
}
