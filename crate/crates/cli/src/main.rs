//! Command-line driver: every engine and experiment behind one binary.
//!
//! Exit codes: 0 on success (a manifest is written next to the artifacts),
//! 1 on domain errors (invalid models, hyperparameters, configs), 2 when a
//! computation refuses to start because a documented size cap would be
//! exceeded. Identical invocations produce byte-identical artifacts; only
//! the manifest timestamp differs between reruns.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use gibbsmix::data::Dataset;
use gibbsmix::expfam::{ConjugatePrior, ExpFam};
use gibbsmix::experiments::{
    extra_cluster_census, fig3_size_distribution, gen_mixture_data, inconsistency_sweep,
    MixtureSpec, SweepConfig,
};
use gibbsmix::formats::{
    csv_cell, read_config, write_csv, write_json, write_manifest, DataSpec, FamilySpec, ModelSpec,
    PriorSpec,
};
use gibbsmix::gibbs::{gibbs_sampler, GibbsConfig};
use gibbsmix::laplace::{splitting_bound, MomentSpaceBox};
use gibbsmix::posterior::{exact_joint_enumeration, exact_joint_subset_dp};
use gibbsmix::theory::{
    bounded_case_constant, capture_convergence_experiment, lemma_bound, ObservationRegion,
    DEFAULT_PHI_CAP,
};
use gibbsmix::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gibbsmix",
    version,
    about = "Posteriors on the number of clusters under Gibbs-type partition priors, \
             with certified upper bounds",
    after_help = "Artifacts land in --out (or $GIBBSMIX_OUT_DIR, or the working \
                  directory) together with a manifest.json recording the effective \
                  configuration."
)]
struct Cli {
    /// Output directory; defaults to $GIBBSMIX_OUT_DIR, then "."
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap the worker thread count (results do not depend on it)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Echo the effective configuration to stderr
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Path to the JSON configuration
    #[arg(long)]
    config: PathBuf,
    /// Override the configuration's seed (see each subcommand's doc for
    /// which seed that is)
    #[arg(long)]
    seed: Option<u64>,
    /// Override the generated dataset's size
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
enum EngineChoice {
    /// Subset dynamic program (n <= 20)
    #[default]
    SubsetDp,
    /// Direct enumeration of partitions (n <= 13)
    Enumeration,
}

#[derive(Subcommand)]
enum Command {
    /// Exact posterior of the block count. --seed/--n act on the data's
    /// generate section.
    Exact {
        #[command(flatten)]
        common: Overrides,
        /// Which exact engine to run
        #[arg(long, value_enum, default_value_t = EngineChoice::SubsetDp)]
        engine: EngineChoice,
    },
    /// Collapsed Gibbs sampler. --seed overrides the sampler seed, --n the
    /// generated dataset's size.
    Gibbs {
        #[command(flatten)]
        common: Overrides,
    },
    /// Prior of the block count under a partition model. Either --config
    /// ({"model": ..., "n": ...}) or the --theta/--n shortcut for a
    /// Dirichlet-process model.
    Prior {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dirichlet-process concentration (shortcut without a config)
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Posterior-mass bound report at one block count. --seed/--n act on
    /// the data's generate section.
    Bounds {
        #[command(flatten)]
        common: Overrides,
    },
    /// Size distribution of one of two blocks under a Dirichlet-process
    /// partition prior.
    Fig3 {
        /// Concentration parameter (the distribution is free of it)
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        n: usize,
    },
    /// Capture frequencies of subset means across seeds and sizes. --seed
    /// overrides the master seed.
    Capture {
        #[command(flatten)]
        common: Overrides,
    },
    /// Certify splitting and sandwich constants over a moment-space box.
    Certify {
        /// Path to the JSON configuration
        #[arg(long)]
        config: PathBuf,
    },
    /// Posterior-versus-bound sweep over growing n. --seed overrides the
    /// data seed.
    Sweep {
        #[command(flatten)]
        common: Overrides,
    },
}

/// Model + family + prior + data: the common head of most configs.
#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemConfig {
    model: ModelSpec,
    family: FamilySpec,
    prior: PriorSpec,
    data: DataSpec,
}

impl ProblemConfig {
    fn build(&self) -> Result<(gibbsmix::GibbsPartitionModel, ExpFam, ConjugatePrior, Dataset)> {
        let model = self.model.build()?;
        let family = self.family.build();
        let prior = self.prior.build();
        let data = self.data.build(&family)?;
        Ok((model, family, prior, data))
    }

    fn override_generate(&mut self, seed: Option<u64>, n: Option<usize>) -> Result<()> {
        if seed.is_none() && n.is_none() {
            return Ok(());
        }
        let Some(g) = self.data.generate.as_mut() else {
            return Err(Error::Domain(
                "--seed/--n override the data's generate section, but this config supplies \
                 explicit data"
                    .into(),
            ));
        };
        if let Some(s) = seed {
            g.seed = s;
        }
        if let Some(n) = n {
            g.n = n;
        }
        Ok(())
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GibbsRunConfig {
    #[serde(flatten)]
    problem: ProblemConfig,
    gibbs: GibbsConfig,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorRunConfig {
    model: ModelSpec,
    n: usize,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsConfig {
    #[serde(flatten)]
    problem: ProblemConfig,
    /// Block count under scrutiny.
    t: usize,
    /// Per-point constant, given directly ...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    /// ... or derived from a region of the observation space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    region: Option<ObservationRegion>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureMeans {
    weights: Vec<f64>,
    /// Component means; [mean, variance] pairs for the normal-gamma family.
    component_means: Vec<Vec<f64>>,
}

impl MixtureMeans {
    fn build(&self, family: &ExpFam) -> Result<MixtureSpec> {
        MixtureSpec::from_means(family, self.weights.clone(), &self.component_means)
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptureConfig {
    family: FamilySpec,
    /// Moment-space box that subset means must stay in.
    lo: Vec<f64>,
    hi: Vec<f64>,
    beta: f64,
    n_grid: Vec<usize>,
    num_seeds: usize,
    master_seed: u64,
    mixture: MixtureMeans,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertifyConfig {
    family: FamilySpec,
    prior: PriorSpec,
    /// Moment-space box to certify over.
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFileConfig {
    model: ModelSpec,
    family: FamilySpec,
    prior: PriorSpec,
    mixture: MixtureMeans,
    t_star: usize,
    exact_ns: Vec<usize>,
    mcmc_ns: Vec<usize>,
    gibbs: GibbsConfig,
    region: ObservationRegion,
    data_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phi_cap: Option<usize>,
    /// Block-size threshold for the extra-cluster census of sampler rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    census_threshold: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // capping workers never changes results, only wall time
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("GIBBSMIX_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    match run(cli, &out_dir) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(match err {
                Error::Refused(_) => 2,
                _ => 1,
            });
        }
    }
}

fn echo_config<T: Serialize>(verbose: bool, config: &T) {
    if verbose {
        if let Ok(text) = serde_json::to_string_pretty(config) {
            eprintln!("effective config: {text}");
        }
    }
}

fn run(cli: Cli, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    match cli.command {
        Command::Exact { common, engine } => {
            let mut config: ProblemConfig = read_config(&common.config)?;
            config.override_generate(common.seed, common.n)?;
            echo_config(cli.verbose, &config);
            let (model, _family, prior, data) = config.build()?;
            let posterior = match engine {
                EngineChoice::SubsetDp => exact_joint_subset_dp(&model, &prior, &data)?,
                EngineChoice::Enumeration => exact_joint_enumeration(&model, &prior, &data)?,
            };
            write_json(&out_dir.join("exact_posterior.json"), &posterior)?;
            write_manifest(
                out_dir,
                "exact",
                &config,
                &["exact_posterior.json".to_string()],
            )?;
        }
        Command::Gibbs { common } => {
            let mut config: GibbsRunConfig = read_config(&common.config)?;
            config.problem.override_generate(None, common.n)?;
            if let Some(seed) = common.seed {
                config.gibbs.seed = seed;
            }
            echo_config(cli.verbose, &config);
            let (model, _family, prior, data) = config.problem.build()?;
            let result = gibbs_sampler(&model, &prior, &data, &config.gibbs)?;
            write_json(&out_dir.join("gibbs_chains.json"), &result)?;
            write_manifest(
                out_dir,
                "gibbs",
                &config,
                &["gibbs_chains.json".to_string()],
            )?;
        }
        Command::Prior { config, theta, n } => {
            let effective = match (config, theta, n) {
                (Some(path), None, None) => read_config::<PriorRunConfig>(&path)?,
                (None, Some(theta), Some(n)) => PriorRunConfig {
                    model: ModelSpec::DirichletProcess { theta },
                    n,
                },
                _ => {
                    return Err(Error::Domain(
                        "prior takes either --config or both --theta and --n".into(),
                    ))
                }
            };
            echo_config(cli.verbose, &effective);
            let model = effective.model.build()?;
            let prior = model.prior_on_t(effective.n)?;
            let rows: Vec<Vec<String>> = prior
                .probabilities
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    vec![
                        effective.n.to_string(),
                        (i + 1).to_string(),
                        csv_cell(Some(*p)),
                    ]
                })
                .collect();
            write_csv(
                &out_dir.join("prior_on_t.csv"),
                &effective,
                &["n", "t", "probability"],
                &rows,
            )?;
            write_manifest(out_dir, "prior", &effective, &["prior_on_t.csv".to_string()])?;
        }
        Command::Bounds { common } => {
            let mut config: BoundsConfig = read_config(&common.config)?;
            config.problem.override_generate(common.seed, common.n)?;
            echo_config(cli.verbose, &config);
            let (model, family, prior, data) = config.problem.build()?;
            let c = match (&config.c, &config.region) {
                (Some(c), None) => *c,
                (None, Some(region)) => bounded_case_constant(&family, &prior, region)?,
                _ => {
                    return Err(Error::Domain(
                        "bounds takes exactly one of c (a number) or region".into(),
                    ))
                }
            };
            let report = lemma_bound(&model, &prior, &data, config.t, c)?;
            write_json(&out_dir.join("bound_report.json"), &report)?;
            write_manifest(
                out_dir,
                "bounds",
                &config,
                &["bound_report.json".to_string()],
            )?;
        }
        Command::Fig3 { theta, n } => {
            #[derive(Serialize)]
            struct Fig3Config {
                theta: f64,
                n: usize,
            }
            let config = Fig3Config { theta, n };
            echo_config(cli.verbose, &config);
            let rows = fig3_size_distribution(theta, n)?;
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.a.to_string(),
                        csv_cell(Some(r.pmf)),
                        csv_cell(Some(r.cdf)),
                    ]
                })
                .collect();
            write_csv(&out_dir.join("fig3.csv"), &config, &["a", "pmf", "cdf"], &cells)?;
            write_manifest(out_dir, "fig3", &config, &["fig3.csv".to_string()])?;
        }
        Command::Capture { common } => {
            let mut config: CaptureConfig = read_config(&common.config)?;
            if let Some(seed) = common.seed {
                config.master_seed = seed;
            }
            if common.n.is_some() {
                return Err(Error::Domain(
                    "capture sweeps its own n grid; set n_grid in the config".into(),
                ));
            }
            echo_config(cli.verbose, &config);
            let family = config.family.build();
            let u = MomentSpaceBox::new(&family, config.lo.clone(), config.hi.clone())?;
            let mixture = config.mixture.build(&family)?;
            let seeds: Vec<u64> = (0..config.num_seeds)
                .map(|i| {
                    gibbsmix::experiments::derive_seed(config.master_seed, &[i as u64])
                })
                .collect();
            let fam = family.clone();
            let gen = move |seed: u64, n: usize| gen_mixture_data(&fam, &mixture, n, seed);
            let rows = capture_convergence_experiment(
                &family,
                &u,
                config.beta,
                &config.n_grid,
                &seeds,
                &gen,
            )?;
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.seeds.to_string(),
                        csv_cell(Some(r.frequency)),
                    ]
                })
                .collect();
            write_csv(
                &out_dir.join("capture_frequencies.csv"),
                &config,
                &["n", "seeds", "frequency"],
                &cells,
            )?;
            write_manifest(
                out_dir,
                "capture",
                &config,
                &["capture_frequencies.csv".to_string()],
            )?;
        }
        Command::Certify { config } => {
            let config: CertifyConfig = read_config(&config)?;
            echo_config(cli.verbose, &config);
            let family = config.family.build();
            let prior = config.prior.build();
            let u = MomentSpaceBox::new(&family, config.lo.clone(), config.hi.clone())?;
            let bound = splitting_bound(&family, &prior, &u)?;
            write_json(&out_dir.join("certificate.json"), &bound)?;
            write_manifest(
                out_dir,
                "certify",
                &config,
                &["certificate.json".to_string()],
            )?;
        }
        Command::Sweep { common } => {
            let mut config: SweepFileConfig = read_config(&common.config)?;
            if let Some(seed) = common.seed {
                config.data_seed = seed;
            }
            if common.n.is_some() {
                return Err(Error::Domain(
                    "sweep takes its n values from exact_ns and mcmc_ns in the config".into(),
                ));
            }
            echo_config(cli.verbose, &config);
            let family = config.family.build();
            let sweep = SweepConfig {
                model: config.model.build()?,
                family: family.clone(),
                prior: config.prior.build(),
                mixture: config.mixture.build(&family)?,
                t_star: config.t_star,
                exact_ns: config.exact_ns.clone(),
                mcmc_ns: config.mcmc_ns.clone(),
                gibbs: config.gibbs.clone(),
                region: config.region.clone(),
                data_seed: config.data_seed,
                phi_cap: config.phi_cap.unwrap_or(DEFAULT_PHI_CAP),
            };
            let rows = inconsistency_sweep(&sweep)?;
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.engine.clone(),
                        csv_cell(Some(r.posterior_t_star)),
                        csv_cell(Some(r.se)),
                        csv_cell(Some(r.c)),
                        csv_cell(Some(r.phi_hat)),
                        r.preconditions_hold.to_string(),
                        csv_cell(r.bound),
                        csv_cell(r.phi_exact),
                        csv_cell(r.bound_exact_phi),
                        r.excluded.to_string(),
                        csv_cell(Some(r.running_max)),
                    ]
                })
                .collect();
            write_csv(
                &out_dir.join("sweep.csv"),
                &config,
                &[
                    "n",
                    "engine",
                    "posterior_t_star",
                    "se",
                    "c",
                    "phi_hat",
                    "preconditions_hold",
                    "bound",
                    "phi_exact",
                    "bound_exact_phi",
                    "excluded",
                    "running_max",
                ],
                &cells,
            )?;
            let mut artifacts = vec!["sweep.csv".to_string()];
            if let Some(threshold) = config.census_threshold {
                // census the largest sampler run, profiles switched on
                if let Some(&n) = config.mcmc_ns.iter().max() {
                    let data =
                        gen_mixture_data(&family, &sweep.mixture, n, sweep.data_seed)?;
                    let mut gibbs = sweep.gibbs.clone();
                    gibbs.seed = gibbsmix::experiments::derive_seed(
                        sweep.gibbs.seed,
                        &[n as u64],
                    );
                    gibbs.record_block_profiles = true;
                    let run = gibbs_sampler(&sweep.model, &sweep.prior, &data, &gibbs)?;
                    let census = extra_cluster_census(&run, threshold)?;
                    write_json(&out_dir.join("census.json"), &census)?;
                    artifacts.push("census.json".to_string());
                }
            }
            write_manifest(out_dir, "sweep", &config, &artifacts)?;
        }
    }
    Ok(())
}
