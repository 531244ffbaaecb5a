//! Command-line front end: experiment configuration, execution, and CSV/JSON
//! emission.
//!
//! Every run writes `<out>/<command>.csv` with the measured cells and
//! `<out>/<command>.json` with the resolved configuration, the seed, and the
//! pass/fail verdict of its asserted checks. CSV bodies are byte-identical
//! across runs of the same configuration.
//!
//! Flags resolve in the order: explicit flag, `RIDGEVAR_SEED` /
//! `RIDGEVAR_WORKERS` environment overrides, `--config` file entries
//! (flat `key = value` lines), built-in default.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{Atom, Domain, QuadratureSpec, WeightFn};
use crate::pipeline::{self, RateGenerator};
use crate::report::{self, Cell};
use crate::sampling::{self, MaureyConfig};
use crate::training::{self, FitOptions, FitProblem, Regularizer};
use crate::{la, mc};

#[derive(Debug, Parser)]
#[command(name = "ridgevar", version, about = "weighted-variation approximation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonOpts {
    /// Flat key = value file supplying defaults for this command's flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for the CSV and JSON artifacts.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (default: available cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Base seed for all randomness in the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo sample budget per error estimate.
    #[arg(long)]
    pub mc_samples: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Atom norms and norm/weight ratios over an offset grid.
    Norms {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        dim: Option<usize>,
        /// Offset grid as lo:hi:count.
        #[arg(long, value_name = "LO:HI:COUNT", allow_hyphen_values = true)]
        t_grid: Option<String>,
        /// Weight kind: ball-power | unweighted | square-chord-sqrt.
        #[arg(long)]
        weight: Option<String>,
    },
    /// Constructive single-atom approximation rate over grid sizes.
    ApproximateAtom {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        /// Comma-separated grid sizes.
        #[arg(long, value_delimiter = ',')]
        m: Option<Vec<usize>>,
        /// Atom offset.
        #[arg(long)]
        t: Option<f64>,
    },
    /// Full pipeline rate experiment on a random combination.
    Rates {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        m: Option<Vec<usize>>,
        /// Number of atoms in the random input combination.
        #[arg(long)]
        atoms: Option<usize>,
        /// Weighted cost the input is rescaled to.
        #[arg(long)]
        budget: Option<f64>,
        /// Sampling trials per cell (best draw wins).
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Random n-term compression of a synthetic combination.
    Maurey {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        atoms: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Train a shallow network with the weighted regularizer.
    Train {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        dim: Option<usize>,
        /// Number of data sites.
        #[arg(long)]
        sites: Option<usize>,
        #[arg(long)]
        neurons: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        /// Regularizer: weighted-vw | path-norm | weight-decay.
        #[arg(long)]
        regularizer: Option<String>,
    },
    /// Interpolation path: warm-started fits along decreasing penalties.
    Path {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        sites: Option<usize>,
        #[arg(long)]
        neurons: Option<usize>,
        /// Comma-separated decreasing penalties.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
    },
}

/// Flat `key = value` configuration file.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    entries: std::collections::BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {} is not key = value", lineno + 1))
            })?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(ConfigFile { entries })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::invalid(format!("config key '{key}' has invalid value '{raw}'"))),
        }
    }

    pub fn get_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|p| p.trim().parse::<T>())
                .collect::<std::result::Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| Error::invalid(format!("config key '{key}' has an invalid list"))),
        }
    }
}

fn env_u64(name: &str) -> Option<u64> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

fn env_usize(name: &str) -> Option<usize> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

struct Resolved {
    cfg: ConfigFile,
    out: PathBuf,
    seed: u64,
    mc_samples: usize,
}

fn resolve_common(common: &CommonOpts) -> Result<Resolved> {
    let cfg = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let seed = common
        .seed
        .or_else(|| env_u64("RIDGEVAR_SEED"))
        .or(cfg.get("seed")?)
        .unwrap_or(7);
    let workers = common
        .workers
        .or_else(|| env_usize("RIDGEVAR_WORKERS"))
        .or(cfg.get("workers")?);
    if let Some(w) = workers {
        // ignore failure when a pool already exists (repeat calls in-process)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global();
    }
    let mc_samples = common
        .mc_samples
        .or(cfg.get("mc_samples")?)
        .unwrap_or(100_000);
    std::fs::create_dir_all(&common.out)?;
    Ok(Resolved {
        cfg,
        out: common.out.clone(),
        seed,
        mc_samples,
    })
}

fn parse_domain(name: &str, dim: usize) -> Result<Domain> {
    match name {
        "ball" => Domain::ball(dim),
        "square" => {
            if dim != 2 {
                return Err(Error::invalid("the square domain is two dimensional"));
            }
            Ok(Domain::square())
        }
        other => Err(Error::invalid(format!("unknown domain '{other}'"))),
    }
}

fn parse_weight(name: &str, dim: usize) -> Result<WeightFn> {
    match name {
        "ball-power" => Ok(WeightFn::ball_power(dim)),
        "unweighted" => Ok(WeightFn::Unweighted),
        "square-chord-sqrt" => Ok(WeightFn::SquareChordSqrt),
        other => Err(Error::invalid(format!("unknown weight '{other}'"))),
    }
}

fn parse_t_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::invalid("t-grid must be lo:hi:count"));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| Error::invalid("bad t-grid lower bound"))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| Error::invalid("bad t-grid upper bound"))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| Error::invalid("bad t-grid count"))?;
    if count < 2 || hi <= lo {
        return Err(Error::invalid("t-grid needs hi > lo and count >= 2"));
    }
    Ok((0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect())
}

/// Execute a parsed command. Returns the process exit code: zero when every
/// asserted check passed.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Norms {
            common,
            dim,
            t_grid,
            weight,
        } => {
            let r = resolve_common(&common)?;
            let dim = dim.or(r.cfg.get("dim")?).unwrap_or(3);
            let spec = t_grid
                .or(r.cfg.get("t_grid")?)
                .unwrap_or_else(|| "-0.9:0.9999:50".to_string());
            let weight_name = weight
                .or(r.cfg.get("weight")?)
                .unwrap_or_else(|| "ball-power".to_string());
            let wf = parse_weight(&weight_name, dim)?;
            let offsets = parse_t_grid(&spec)?;
            let dom = Domain::ball(dim)?;
            let exponent = 1.5 + (dim as f64 - 1.0) / 4.0;
            let mut rows = Vec::new();
            let mut ratios = Vec::new();
            let mut dir = vec![0.0; dim];
            dir[0] = 1.0;
            for &t in &offsets {
                let atom = Atom::from_unit(dir.clone(), t);
                let norm =
                    crate::geometry::atom_l2_norm(&atom, &dom, &QuadratureSpec::slice(512))?;
                let w = wf.weight(&atom);
                let ratio = norm / (1.0 - t).powf(exponent);
                ratios.push(ratio);
                rows.push(vec![
                    Cell::from(dim),
                    Cell::from(t),
                    Cell::from(norm),
                    Cell::from(w),
                    Cell::from(ratio),
                ]);
            }
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
            let pass = hi / lo <= 10.0;
            report::write_csv(
                &r.out.join("norms.csv"),
                &["dim", "t", "norm", "weight", "norm_ratio"],
                &rows,
            )?;
            report::write_json(
                &r.out.join("norms.json"),
                &json!({
                    "command": "norms",
                    "config": {"dim": dim, "t_grid": spec, "weight": weight_name, "seed": r.seed},
                    "ratio_band": [lo, hi],
                    "max_over_min": hi / lo,
                    "threshold": 10.0,
                    "pass": pass,
                }),
            )?;
            println!(
                "norms: dim {dim}, ratio band [{lo:.5}, {hi:.5}], max/min {:.3} -> {}",
                hi / lo,
                verdict(pass)
            );
            Ok(if pass { 0 } else { 1 })
        }

        Command::ApproximateAtom {
            common,
            domain,
            dim,
            m,
            t,
        } => {
            let r = resolve_common(&common)?;
            let dim = dim.or(r.cfg.get("dim")?).unwrap_or(2);
            let domain_name = domain
                .or(r.cfg.get("domain")?)
                .unwrap_or_else(|| "ball".to_string());
            let dom = parse_domain(&domain_name, dim)?;
            let m_list = m
                .or(r.cfg.get_list("m")?)
                .unwrap_or_else(|| vec![8, 16, 32, 64]);
            let offset = t.or(r.cfg.get("t")?).unwrap_or(0.5);
            let q = QuadratureSpec::monte_carlo(r.mc_samples, r.seed ^ 0xA70);
            let wf = WeightFn::ball_power(dim);
            let n_list: Vec<usize> = m_list
                .iter()
                .map(|&m| pipeline::budget_for_m(&dom, m))
                .collect::<Result<_>>()?;
            let generator = RateGenerator::SingleAtom {
                offset,
                direction_seed: r.seed,
            };
            let rep = pipeline::rate_experiment(&generator, &n_list, &dom, &wf, &q, 1, r.seed)?;
            let pass = rep.slope <= rep.target_slope + 0.10;
            emit_rate_artifacts(&r, "approximate-atom", &rep, pass, json!({
                "domain": domain_name, "dim": dim, "m": m_list, "t": offset,
                "seed": r.seed, "mc_samples": r.mc_samples,
            }))?;
            println!(
                "approximate-atom: slope {:.4} (stderr {:.4}, target {:.4}) -> {}",
                rep.slope,
                rep.slope_stderr,
                rep.target_slope,
                verdict(pass)
            );
            Ok(if pass { 0 } else { 1 })
        }

        Command::Rates {
            common,
            domain,
            dim,
            m,
            atoms,
            budget,
            trials,
        } => {
            let r = resolve_common(&common)?;
            let dim = dim.or(r.cfg.get("dim")?).unwrap_or(2);
            let domain_name = domain
                .or(r.cfg.get("domain")?)
                .unwrap_or_else(|| "ball".to_string());
            let dom = parse_domain(&domain_name, dim)?;
            let m_list = m
                .or(r.cfg.get_list("m")?)
                .unwrap_or_else(|| vec![8, 16, 32, 64]);
            let atoms = atoms.or(r.cfg.get("atoms")?).unwrap_or(200);
            let budget = budget.or(r.cfg.get("budget")?).unwrap_or(1.0);
            let trials = trials.or(r.cfg.get("trials")?).unwrap_or(10);
            let wf = match dom {
                Domain::Square => WeightFn::SquareChordSqrt,
                _ => WeightFn::ball_power(dim),
            };
            let q = QuadratureSpec::monte_carlo(r.mc_samples, r.seed ^ 0x7A7E5);
            let n_list: Vec<usize> = m_list
                .iter()
                .map(|&m| pipeline::budget_for_m(&dom, m))
                .collect::<Result<_>>()?;
            let generator = RateGenerator::RandomCombination {
                count: atoms,
                weighted_cost: budget,
                seed: r.seed,
                offset_range: (-0.99, 0.99),
            };
            let rep = pipeline::rate_experiment(&generator, &n_list, &dom, &wf, &q, trials, r.seed)?;
            let pass = rep.slope <= rep.target_slope + 0.25;
            emit_rate_artifacts(&r, "rates", &rep, pass, json!({
                "domain": domain_name, "dim": dim, "m": m_list, "atoms": atoms,
                "budget": budget, "trials": trials, "seed": r.seed,
                "mc_samples": r.mc_samples,
            }))?;
            println!(
                "rates: slope {:.4} (stderr {:.4}, target {:.4}) -> {}",
                rep.slope,
                rep.slope_stderr,
                rep.target_slope,
                verdict(pass)
            );
            Ok(if pass { 0 } else { 1 })
        }

        Command::Maurey {
            common,
            atoms,
            n_list,
            seeds,
            trials,
        } => {
            let r = resolve_common(&common)?;
            let atoms = atoms.or(r.cfg.get("atoms")?).unwrap_or(100);
            let n_list = n_list
                .or(r.cfg.get_list("n_list")?)
                .unwrap_or_else(|| vec![4, 16, 64]);
            let seeds = seeds.or(r.cfg.get("seeds")?).unwrap_or(20);
            let trials = trials.or(r.cfg.get("trials")?).unwrap_or(10);
            let dom = Domain::ball(2)?;
            let q = QuadratureSpec::monte_carlo(r.mc_samples.max(20_000), r.seed ^ 0x3A5);
            let mut rows = Vec::new();
            let mut medians = Vec::new();
            let mut hits = 0usize;
            let mut cells = 0usize;
            for &n in &n_list {
                let mut errs = Vec::new();
                for s in 0..seeds {
                    let h = pipeline::random_combination(
                        2,
                        atoms,
                        r.seed.wrapping_add(1000 + s as u64),
                        (-0.9, 0.9),
                        1.0,
                        &WeightFn::Unweighted,
                    );
                    let cfg = MaureyConfig::new(
                        n,
                        trials,
                        r.seed.wrapping_add(s as u64),
                        WeightFn::Unweighted,
                    );
                    let out = sampling::maurey_compress_outcome(&h, &cfg, &dom, &q)?;
                    let bound = out.total_mass * out.max_element_norm / (n as f64).sqrt();
                    cells += 1;
                    if out.error <= bound {
                        hits += 1;
                    }
                    rows.push(vec![
                        Cell::from(n),
                        Cell::from(s),
                        Cell::from(out.error),
                        Cell::from(bound),
                        Cell::from(r.seed.wrapping_add(s as u64)),
                    ]);
                    errs.push(out.error);
                }
                errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                medians.push((n, errs[errs.len() / 2], 0.0));
            }
            let (slope, _, _) = pipeline::fit_loglog(&medians);
            let hit_rate = hits as f64 / cells as f64;
            let pass = (slope + 0.5).abs() <= 0.15 && hit_rate >= 0.95;
            report::write_csv(
                &r.out.join("maurey.csv"),
                &["n", "seed_index", "error", "bound", "seed"],
                &rows,
            )?;
            report::write_json(
                &r.out.join("maurey.json"),
                &json!({
                    "command": "maurey",
                    "config": {"atoms": atoms, "n_list": n_list, "seeds": seeds,
                               "trials": trials, "seed": r.seed},
                    "median_slope": slope,
                    "target_slope": -0.5,
                    "slope_tolerance": 0.15,
                    "bound_hit_rate": hit_rate,
                    "pass": pass,
                }),
            )?;
            println!(
                "maurey: median slope {slope:.4}, bound hit rate {hit_rate:.3} -> {}",
                verdict(pass)
            );
            Ok(if pass { 0 } else { 1 })
        }

        Command::Train {
            common,
            dim,
            sites,
            neurons,
            lambda,
            iterations,
            restarts,
            regularizer,
        } => {
            let r = resolve_common(&common)?;
            let dim = dim.or(r.cfg.get("dim")?).unwrap_or(2);
            let sites = sites.or(r.cfg.get("sites")?).unwrap_or(10);
            let neurons = neurons.or(r.cfg.get("neurons")?).unwrap_or(2 * sites);
            let lambda = lambda.or(r.cfg.get("lambda")?).unwrap_or(1e-3);
            let iterations = iterations.or(r.cfg.get("iterations")?).unwrap_or(5000);
            let restarts = restarts.or(r.cfg.get("restarts")?).unwrap_or(10);
            let reg_name = regularizer
                .or(r.cfg.get("regularizer")?)
                .unwrap_or_else(|| "weighted-vw".to_string());
            let regularizer = match reg_name.as_str() {
                "weighted-vw" => Regularizer::WeightedVw,
                "path-norm" => Regularizer::PathNorm,
                "weight-decay" => Regularizer::WeightDecay,
                other => return Err(Error::invalid(format!("unknown regularizer '{other}'"))),
            };
            let (problem, wf) = synth_problem(dim, sites, neurons, lambda, regularizer, r.seed)?;
            let report_fit =
                training::fit(&problem, &wf, &FitOptions::new(iterations, restarts, r.seed))?;
            let zero_net_objective: f64 = problem.targets.iter().map(|y| y * y).sum();
            let pass = report_fit.objective.is_finite()
                && report_fit.objective <= zero_net_objective + 1e-12;
            let rows: Vec<Vec<Cell>> = report_fit
                .trace
                .iter()
                .map(|(it, obj)| vec![Cell::from(*it), Cell::from(*obj)])
                .collect();
            report::write_csv(&r.out.join("train.csv"), &["iteration", "objective"], &rows)?;
            let mut doc = training::fit_report_json(&report_fit, &wf);
            doc["command"] = json!("train");
            doc["config"] = json!({
                "dim": dim, "sites": sites, "neurons": neurons, "lambda": lambda,
                "iterations": iterations, "restarts": restarts,
                "regularizer": reg_name, "seed": r.seed,
            });
            doc["pass"] = json!(pass);
            report::write_json(&r.out.join("train.json"), &doc)?;
            println!(
                "train: objective {:.6e}, data fit {:.6e}, {} active neurons -> {}",
                report_fit.objective,
                report_fit.data_fit,
                report_fit.active_neurons,
                verdict(pass)
            );
            Ok(if pass { 0 } else { 1 })
        }

        Command::Path {
            common,
            dim,
            sites,
            neurons,
            lambdas,
            iterations,
            restarts,
        } => {
            let r = resolve_common(&common)?;
            let dim = dim.or(r.cfg.get("dim")?).unwrap_or(2);
            let sites = sites.or(r.cfg.get("sites")?).unwrap_or(8);
            let neurons = neurons.or(r.cfg.get("neurons")?).unwrap_or(3 * sites);
            let lambdas = lambdas
                .or(r.cfg.get_list("lambdas")?)
                .unwrap_or_else(|| vec![1e-1, 1e-2, 1e-3, 1e-4]);
            let iterations = iterations.or(r.cfg.get("iterations")?).unwrap_or(4000);
            let restarts = restarts.or(r.cfg.get("restarts")?).unwrap_or(4);
            let (problem, wf) = synth_problem(
                dim,
                sites,
                neurons,
                *lambdas.first().unwrap_or(&1e-2),
                Regularizer::WeightedVw,
                r.seed,
            )?;
            let (path, _) = training::min_norm_path(
                &problem,
                &lambdas,
                &wf,
                &FitOptions::new(iterations, restarts, r.seed),
            )?;
            let last = path.last().unwrap();
            let m_proxy = last.variation_cost.max(1e-12);
            let rms = (last.data_fit / sites as f64).sqrt();
            let pass = rms <= 10.0 * (last.lambda * m_proxy).sqrt();
            let rows: Vec<Vec<Cell>> = path
                .iter()
                .map(|p| {
                    vec![
                        Cell::from(p.lambda),
                        Cell::from(p.objective),
                        Cell::from(p.data_fit),
                        Cell::from(p.max_residual),
                        Cell::from(p.variation_cost),
                        Cell::from(p.active_neurons),
                    ]
                })
                .collect();
            report::write_csv(
                &r.out.join("path.csv"),
                &[
                    "lambda",
                    "objective",
                    "data_fit",
                    "max_residual",
                    "variation_cost",
                    "active_neurons",
                ],
                &rows,
            )?;
            report::write_json(
                &r.out.join("path.json"),
                &json!({
                    "command": "path",
                    "config": {"dim": dim, "sites": sites, "neurons": neurons,
                               "lambdas": lambdas, "iterations": iterations,
                               "restarts": restarts, "seed": r.seed},
                    "final_rms_residual": rms,
                    "residual_bound": 10.0 * (last.lambda * m_proxy).sqrt(),
                    "final_variation_cost": last.variation_cost,
                    "pass": pass,
                }),
            )?;
            println!(
                "path: final rms residual {rms:.4e}, cost {:.4} -> {}",
                last.variation_cost,
                verdict(pass)
            );
            Ok(if pass { 0 } else { 1 })
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn emit_rate_artifacts(
    r: &Resolved,
    command: &str,
    rep: &pipeline::RateReport,
    pass: bool,
    config: serde_json::Value,
) -> Result<()> {
    let rows: Vec<Vec<Cell>> = rep
        .entries
        .iter()
        .map(|e| {
            vec![
                Cell::from(e.n),
                Cell::from(e.error),
                Cell::from(e.stderr),
                Cell::from(r.seed),
            ]
        })
        .collect();
    report::write_csv(
        &r.out.join(format!("{command}.csv")),
        &["n", "error", "stderr", "seed"],
        &rows,
    )?;
    report::write_json(
        &r.out.join(format!("{command}.json")),
        &json!({
            "command": command,
            "config": config,
            "slope": rep.slope,
            "intercept": rep.intercept,
            "slope_stderr": rep.slope_stderr,
            "target_slope": rep.target_slope,
            "skipped_cells": rep.excluded.iter().map(|(n, why)| json!({"n": n, "reason": why})).collect::<Vec<_>>(),
            "pass": pass,
        }),
    )?;
    Ok(())
}

/// Random data sites in the ball with targets from a smooth ridge mixture.
fn synth_problem(
    dim: usize,
    sites: usize,
    neurons: usize,
    lambda: f64,
    regularizer: Regularizer,
    seed: u64,
) -> Result<(FitProblem, WeightFn)> {
    use rand::Rng;
    let mut rng = mc::block_rng(seed, 0xDA7A);
    let mut data_sites = Vec::with_capacity(sites);
    for _ in 0..sites {
        let dir = mc::random_unit_vector(dim, &mut rng);
        let radius = rng.gen_range(0.0f64..0.9).powf(1.0 / dim as f64);
        data_sites.push(la::scale(&dir, radius));
    }
    let anchors: Vec<(Vec<f64>, f64, f64)> = (0..3)
        .map(|_| {
            (
                mc::random_unit_vector(dim, &mut rng),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let targets: Vec<f64> = data_sites
        .iter()
        .map(|x| {
            anchors
                .iter()
                .map(|(d, t, a)| a * (la::dot(d, x) - t).max(0.0))
                .sum()
        })
        .collect();
    Ok((
        FitProblem {
            data_sites,
            targets,
            lambda,
            n_neurons: neurons,
            regularizer,
        },
        WeightFn::ball_power(dim),
    ))
}
