//! Shallow ReLU data fitting with a weighted, bias-penalizing regularizer,
//! plus path-norm and weight-decay baselines and the small-penalty
//! interpolation path.
//!
//! The network `f(x) = sum_j a_j (xi_j . x - t_j)_+` keeps unconstrained
//! input weights; the regularizer of one neuron is its output weight times
//! `||xi|| w(xi / ||xi||, t / ||xi||)`, which is invariant under the
//! rescaling `(xi, t, a) -> (c xi, c t, a / c)`. Training runs proximal
//! subgradient descent with exact periodic refits of the output weights.

use rayon::prelude::*;
use serde::Serialize;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Atom, AtomCombination, WeightFn};
use crate::la;
use crate::mc;

#[derive(Debug, Clone, Serialize)]
pub struct Neuron {
    pub input_weight: Vec<f64>,
    pub bias: f64,
    pub output_weight: f64,
}

impl Neuron {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.output_weight * (la::dot(&self.input_weight, x) - self.bias).max(0.0)
    }
}

/// A single-hidden-layer ReLU network with unconstrained input weights.
#[derive(Debug, Clone, Serialize)]
pub struct ShallowNet {
    pub neurons: Vec<Neuron>,
    pub dim: usize,
}

impl ShallowNet {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.neurons.iter().map(|n| n.eval(x)).sum()
    }

    /// Neurons with `|a| > 1e-6` times the largest output weight.
    pub fn active_neurons(&self) -> usize {
        let peak = self
            .neurons
            .iter()
            .map(|n| n.output_weight.abs())
            .fold(0.0f64, f64::max);
        if peak == 0.0 {
            return 0;
        }
        self.neurons
            .iter()
            .filter(|n| n.output_weight.abs() > 1e-6 * peak)
            .count()
    }

    /// Neurons whose normalized bias sits below minus one, i.e. the ReLU is
    /// affine on the whole unit ball. The power weight evaluates above its
    /// boundary value there, so these are worth flagging.
    pub fn affine_neuron_count(&self) -> usize {
        self.neurons
            .iter()
            .filter(|n| {
                let u = la::norm(&n.input_weight);
                u > 0.0 && n.bias / u < -1.0
            })
            .count()
    }

    /// Merge neurons whose normalized parameters coincide within `tol`,
    /// accumulating output weights at unit input scale.
    pub fn merge_parallel(&self, tol: f64) -> ShallowNet {
        let mut merged: Vec<(Vec<f64>, f64, f64)> = Vec::new();
        for n in &self.neurons {
            let u = la::norm(&n.input_weight);
            if u * n.output_weight.abs() == 0.0 {
                continue;
            }
            let dir = la::scale(&n.input_weight, 1.0 / u);
            let tau = n.bias / u;
            let a = n.output_weight * u;
            match merged
                .iter_mut()
                .find(|(d, t, _)| la::dist(d, &dir) < tol && (t - tau).abs() < tol)
            {
                Some(slot) => slot.2 += a,
                None => merged.push((dir, tau, a)),
            }
        }
        ShallowNet {
            neurons: merged
                .into_iter()
                .map(|(dir, tau, a)| Neuron {
                    input_weight: dir,
                    bias: tau,
                    output_weight: a,
                })
                .collect(),
            dim: self.dim,
        }
    }

    /// View the network as an atom combination over normalized parameters.
    pub fn atom_combination(&self) -> AtomCombination {
        AtomCombination::from_terms(
            self.neurons
                .iter()
                .filter_map(|n| {
                    let u = la::norm(&n.input_weight);
                    if u <= 0.0 {
                        return None;
                    }
                    Some((
                        Atom::from_unit(la::scale(&n.input_weight, 1.0 / u), n.bias / u),
                        n.output_weight * u,
                    ))
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regularizer {
    /// `sum_j |a_j| ||xi_j|| w(xi_j / ||xi_j||, t_j / ||xi_j||)`.
    WeightedVw,
    /// `sum_j |a_j| ||xi_j||`.
    PathNorm,
    /// `(1/2) sum_j (a_j^2 + ||xi_j||^2)`.
    WeightDecay,
}

/// Variation norm of one neuron with unconstrained input weight:
/// `||xi|| w(xi / ||xi||, t / ||xi||)`, using degree-one homogeneity of the
/// ReLU.
pub fn neuron_variation_norm(input_weight: &[f64], bias: f64, wf: &WeightFn) -> Result<f64> {
    let u = la::norm(input_weight);
    if u <= 0.0 {
        return Err(Error::invalid("zero input weight has no variation norm"));
    }
    let atom = Atom::from_unit(la::scale(input_weight, 1.0 / u), bias / u);
    Ok(u * wf.weight(&atom))
}

/// Value of a regularizer on a network.
pub fn regularizer_value(net: &ShallowNet, kind: Regularizer, wf: &WeightFn) -> Result<f64> {
    let mut total = 0.0;
    for n in &net.neurons {
        let u = la::norm(&n.input_weight);
        match kind {
            Regularizer::WeightedVw => {
                if u <= 0.0 {
                    if n.output_weight != 0.0 {
                        return Err(Error::invalid(
                            "zero input weight with nonzero output weight",
                        ));
                    }
                    continue;
                }
                total += n.output_weight.abs() * neuron_variation_norm(&n.input_weight, n.bias, wf)?;
            }
            Regularizer::PathNorm => {
                if u <= 0.0 {
                    if n.output_weight != 0.0 {
                        return Err(Error::invalid(
                            "zero input weight with nonzero output weight",
                        ));
                    }
                    continue;
                }
                total += n.output_weight.abs() * u;
            }
            Regularizer::WeightDecay => {
                total += 0.5 * (n.output_weight * n.output_weight + u * u);
            }
        }
    }
    Ok(total)
}

/// A data-fitting problem instance.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub data_sites: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub lambda: f64,
    pub n_neurons: usize,
    pub regularizer: Regularizer,
}

impl FitProblem {
    pub fn validate(&self) -> Result<()> {
        if self.data_sites.len() != self.targets.len() {
            return Err(Error::invalid("sites and targets differ in length"));
        }
        if self.data_sites.is_empty() {
            return Err(Error::invalid("no data"));
        }
        if self.lambda <= 0.0 {
            return Err(Error::invalid("lambda must be positive"));
        }
        if self.n_neurons == 0 {
            return Err(Error::invalid("need at least one neuron"));
        }
        Ok(())
    }
}

/// Optimizer options. The step schedule depends only on the iteration index
/// and output weights are refit exactly at fixed intervals, so a longer
/// budget extends a shorter run of the same seed without changing its
/// prefix.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    pub step: f64,
    pub polish_every: usize,
    /// Warm start; restarts beyond the first add a small seeded
    /// perturbation.
    pub init: Option<ShallowNet>,
}

impl FitOptions {
    pub fn new(iterations: usize, restarts: usize, seed: u64) -> FitOptions {
        FitOptions {
            iterations,
            restarts,
            seed,
            step: 0.02,
            polish_every: 250,
            init: None,
        }
    }
}

/// Result of a fit: the best restart's polished network and diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub net: ShallowNet,
    pub objective: f64,
    pub data_fit: f64,
    pub reg_value: f64,
    pub active_neurons: usize,
    pub affine_neurons: usize,
    pub restart_index: usize,
    /// Downsampled best-objective trace, `(iteration, objective)`.
    pub trace: Vec<(usize, f64)>,
}

struct State {
    xi: Vec<Vec<f64>>,
    t: Vec<f64>,
    a: Vec<f64>,
}

impl State {
    fn to_net(&self, dim: usize) -> ShallowNet {
        ShallowNet {
            neurons: self
                .xi
                .iter()
                .zip(&self.t)
                .zip(&self.a)
                .map(|((xi, &t), &a)| Neuron {
                    input_weight: xi.clone(),
                    bias: t,
                    output_weight: a,
                })
                .collect(),
            dim,
        }
    }
}

fn objective_parts(
    state: &State,
    problem: &FitProblem,
    wf: &WeightFn,
) -> Result<(f64, f64, f64)> {
    let mut data = 0.0;
    for (x, y) in problem.data_sites.iter().zip(&problem.targets) {
        let mut v = 0.0;
        for ((xi, &t), &a) in state.xi.iter().zip(&state.t).zip(&state.a) {
            v += a * (la::dot(xi, x) - t).max(0.0);
        }
        let r = v - y;
        data += r * r;
    }
    let net = state.to_net(problem.data_sites[0].len());
    let reg = regularizer_value(&net, problem.regularizer, wf)?;
    Ok((data + problem.lambda * reg, data, reg))
}

/// Per-neuron regularizer weight for the proximal step on output weights:
/// the coefficient of `|a_j|` for the two l1-type regularizers.
fn prox_weight(xi: &[f64], t: f64, kind: Regularizer, wf: &WeightFn) -> f64 {
    let u = la::norm(xi);
    if u <= 1e-300 {
        return 0.0;
    }
    match kind {
        Regularizer::WeightedVw => {
            let atom = Atom::from_unit(la::scale(xi, 1.0 / u), t / u);
            u * wf.weight(&atom)
        }
        Regularizer::PathNorm => u,
        Regularizer::WeightDecay => 0.0,
    }
}

/// Exact coordinate descent for the output weights with fixed directions and
/// biases: for l1-type regularizers each coordinate solve is a
/// soft-threshold, for weight decay a scaled least-squares coordinate.
fn polish_outputs(state: &mut State, problem: &FitProblem, wf: &WeightFn) {
    let m = problem.data_sites.len();
    let k = state.a.len();
    // design matrix column per neuron
    let mut cols = vec![0.0; k * m];
    for (j, (xi, &t)) in state.xi.iter().zip(&state.t).enumerate() {
        for (i, x) in problem.data_sites.iter().enumerate() {
            cols[j * m + i] = (la::dot(xi, x) - t).max(0.0);
        }
    }
    let col_sq: Vec<f64> = (0..k)
        .map(|j| cols[j * m..(j + 1) * m].iter().map(|v| v * v).sum())
        .collect();
    let thresholds: Vec<f64> = (0..k)
        .map(|j| prox_weight(&state.xi[j], state.t[j], problem.regularizer, wf))
        .collect();
    let mut residual: Vec<f64> = problem
        .data_sites
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let mut v = -problem.targets[i];
            for j in 0..k {
                v += state.a[j] * cols[j * m + i];
            }
            v
        })
        .collect();
    for _ in 0..400 {
        let mut delta_max = 0.0f64;
        for j in 0..k {
            if col_sq[j] <= 1e-300 {
                continue;
            }
            let col = &cols[j * m..(j + 1) * m];
            let corr: f64 = col.iter().zip(&residual).map(|(c, r)| c * r).sum();
            // minimize over a_j: ||r - (a_new - a_old) col||^2 + lam pen |a_j|
            let raw = state.a[j] - corr / col_sq[j];
            let new = match problem.regularizer {
                Regularizer::WeightDecay => {
                    // quadratic penalty folds into the denominator
                    (state.a[j] * col_sq[j] - corr)
                        / (col_sq[j] + 0.5 * problem.lambda)
                }
                _ => {
                    let th = 0.5 * problem.lambda * thresholds[j] / col_sq[j];
                    raw.signum() * (raw.abs() - th).max(0.0)
                }
            };
            let delta = new - state.a[j];
            if delta != 0.0 {
                state.a[j] = new;
                for (r, c) in residual.iter_mut().zip(col) {
                    *r += delta * c;
                }
                delta_max = delta_max.max(delta.abs());
            }
        }
        if delta_max < 1e-13 {
            break;
        }
    }
}

fn descend(
    problem: &FitProblem,
    wf: &WeightFn,
    opts: &FitOptions,
    restart: usize,
) -> Result<(f64, State, Vec<(usize, f64)>)> {
    let d = problem.data_sites[0].len();
    let k = problem.n_neurons;
    let mut rng = mc::block_rng(opts.seed, 0xF17 ^ (restart as u64) << 8);
    let mut state = match &opts.init {
        Some(net) => {
            let mut s = State {
                xi: net.neurons.iter().map(|n| n.input_weight.clone()).collect(),
                t: net.neurons.iter().map(|n| n.bias).collect(),
                a: net.neurons.iter().map(|n| n.output_weight).collect(),
            };
            while s.xi.len() < k {
                s.xi.push(mc::random_unit_vector(d, &mut rng));
                s.t.push(rng.gen_range(-1.0..1.0));
                s.a.push(0.0);
            }
            if restart > 0 {
                let scale = 0.02 * restart as f64;
                for xi in s.xi.iter_mut() {
                    for c in xi.iter_mut() {
                        *c += scale * rng.gen_range(-1.0..1.0);
                    }
                }
                for t in s.t.iter_mut() {
                    *t += scale * rng.gen_range(-1.0..1.0);
                }
            }
            s
        }
        None => State {
            xi: (0..k).map(|_| mc::random_unit_vector(d, &mut rng)).collect(),
            t: (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            a: vec![0.0; k],
        },
    };

    let p_exp = 0.5 + d as f64 / 4.0;
    let m = problem.data_sites.len();
    let mut best_obj = f64::INFINITY;
    let mut best_state: Option<State> = None;
    let mut trace = Vec::new();
    let trace_every = (opts.iterations / 200).max(1);

    let mut relu = vec![0.0; k];
    for it in 0..=opts.iterations {
        // polished checkpoints; the schedule depends only on the iteration
        // index so longer budgets extend shorter ones exactly
        if it % opts.polish_every == 0 || it == opts.iterations {
            let mut snap = State {
                xi: state.xi.clone(),
                t: state.t.clone(),
                a: state.a.clone(),
            };
            polish_outputs(&mut snap, problem, wf);
            let (obj, _, _) = objective_parts(&snap, problem, wf)?;
            if !obj.is_finite() {
                return Err(Error::Diverged(format!(
                    "objective became {obj} at iteration {it}"
                )));
            }
            if obj < best_obj {
                best_obj = obj;
                best_state = Some(State {
                    xi: snap.xi.clone(),
                    t: snap.t.clone(),
                    a: snap.a.clone(),
                });
            }
            // continue from the polished outputs
            state.a = snap.a;
        }
        if it % trace_every == 0 {
            trace.push((it, best_obj));
        }
        if it == opts.iterations {
            break;
        }

        let eta = opts.step / (1.0 + it as f64 / 250.0);
        // full-batch residuals
        let mut ga = vec![0.0; k];
        let mut gxi = vec![vec![0.0; d]; k];
        let mut gt = vec![0.0; k];
        for (x, y) in problem.data_sites.iter().zip(&problem.targets) {
            let mut v = 0.0;
            for (j, (xi, &t)) in state.xi.iter().zip(&state.t).enumerate() {
                relu[j] = (la::dot(xi, x) - t).max(0.0);
                v += state.a[j] * relu[j];
            }
            let r = 2.0 * (v - y) / m as f64;
            for j in 0..k {
                if relu[j] > 0.0 {
                    let aj = state.a[j];
                    for (g, xc) in gxi[j].iter_mut().zip(x) {
                        *g += r * aj * xc;
                    }
                    gt[j] -= r * aj;
                }
                ga[j] += r * relu[j];
            }
        }
        // regularizer subgradients for the smooth blocks
        for j in 0..k {
            let u = la::norm(&state.xi[j]);
            if u <= 1e-12 {
                continue;
            }
            let lam = problem.lambda;
            match problem.regularizer {
                Regularizer::WeightedVw => {
                    let tau = state.t[j] / u;
                    let base = (1.0 - tau).max(0.0);
                    let aj = state.a[j].abs();
                    if aj > 0.0 && base > 0.0 {
                        let wt = -p_exp * base.powf(p_exp - 1.0);
                        let wxi = (1.0 - p_exp) * base.powf(p_exp) + p_exp * base.powf(p_exp - 1.0);
                        gt[j] += lam * aj * wt;
                        for (g, xc) in gxi[j].iter_mut().zip(&state.xi[j]) {
                            *g += lam * aj * wxi * xc / u;
                        }
                    }
                }
                Regularizer::PathNorm => {
                    let aj = state.a[j].abs();
                    if aj > 0.0 {
                        for (g, xc) in gxi[j].iter_mut().zip(&state.xi[j]) {
                            *g += lam * aj * xc / u;
                        }
                    }
                }
                Regularizer::WeightDecay => {
                    ga[j] += lam * state.a[j];
                    for (g, xc) in gxi[j].iter_mut().zip(&state.xi[j]) {
                        *g += lam * xc;
                    }
                }
            }
        }
        // parameter update: gradient step on directions and biases,
        // proximal step on the output weights for the l1-type penalties
        for j in 0..k {
            for (xc, g) in state.xi[j].iter_mut().zip(&gxi[j]) {
                *xc -= eta * g;
            }
            state.t[j] -= eta * gt[j];
            let raw = state.a[j] - eta * ga[j];
            state.a[j] = match problem.regularizer {
                Regularizer::WeightDecay => raw,
                kind => {
                    let th =
                        eta * problem.lambda * prox_weight(&state.xi[j], state.t[j], kind, wf);
                    raw.signum() * (raw.abs() - th).max(0.0)
                }
            };
        }
    }
    let best = best_state.unwrap_or(state);
    Ok((best_obj, best, trace))
}

/// Fit a shallow network by proximal subgradient descent with restarts; the
/// best polished restart wins. Restarts run in parallel on split seeds.
pub fn fit(problem: &FitProblem, wf: &WeightFn, opts: &FitOptions) -> Result<FitReport> {
    problem.validate()?;
    if opts.restarts == 0 || opts.iterations == 0 {
        return Err(Error::invalid("need at least one restart and iteration"));
    }
    let runs: Vec<Result<(f64, State, Vec<(usize, f64)>)>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| descend(problem, wf, opts, r))
        .collect();
    let mut best: Option<(f64, State, Vec<(usize, f64)>, usize)> = None;
    for (r, run) in runs.into_iter().enumerate() {
        let (obj, state, trace) = run?;
        if best.as_ref().map_or(true, |(b, _, _, _)| obj < *b) {
            best = Some((obj, state, trace, r));
        }
    }
    let (objective, state, trace, restart_index) = best.unwrap();
    let d = problem.data_sites[0].len();
    let (_, data_fit, reg_value) = objective_parts(&state, problem, wf)?;
    let net = state.to_net(d);
    Ok(FitReport {
        active_neurons: net.active_neurons(),
        affine_neurons: net.affine_neuron_count(),
        net,
        objective,
        data_fit,
        reg_value,
        restart_index,
        trace,
    })
}

/// One step of the interpolation path.
#[derive(Debug, Clone, Serialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub objective: f64,
    pub data_fit: f64,
    pub max_residual: f64,
    pub variation_cost: f64,
    pub active_neurons: usize,
}

/// Warm-started fits along a decreasing penalty path. As the penalty
/// vanishes the residual goes to zero and the weighted cost stabilizes at
/// the interpolation cost.
pub fn min_norm_path(
    problem: &FitProblem,
    lambdas: &[f64],
    wf: &WeightFn,
    opts: &FitOptions,
) -> Result<(Vec<PathPoint>, ShallowNet)> {
    if lambdas.len() < 2 || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("need a strictly decreasing penalty list"));
    }
    let mut current = opts.init.clone();
    let mut out = Vec::new();
    let mut last_net = None;
    for (step, &lambda) in lambdas.iter().enumerate() {
        let mut p = problem.clone();
        p.lambda = lambda;
        let mut o = opts.clone();
        o.init = current.take();
        o.seed = opts.seed.wrapping_add(step as u64);
        let report = fit(&p, wf, &o)?;
        let max_residual = p
            .data_sites
            .iter()
            .zip(&p.targets)
            .map(|(x, y)| (report.net.eval(x) - y).abs())
            .fold(0.0f64, f64::max);
        let variation_cost = regularizer_value(&report.net, Regularizer::WeightedVw, wf)?;
        out.push(PathPoint {
            lambda,
            objective: report.objective,
            data_fit: report.data_fit,
            max_residual,
            variation_cost,
            active_neurons: report.active_neurons,
        });
        current = Some(report.net.clone());
        last_net = Some(report.net);
    }
    Ok((out, last_net.unwrap()))
}

/// JSON view of a fit: config echo, objective trace, and the per-neuron
/// regularizer breakdown.
pub fn fit_report_json(report: &FitReport, wf: &WeightFn) -> serde_json::Value {
    let breakdown: Vec<serde_json::Value> = report
        .net
        .neurons
        .iter()
        .map(|n| {
            let u = la::norm(&n.input_weight);
            let nvn = if u > 0.0 {
                neuron_variation_norm(&n.input_weight, n.bias, wf).unwrap_or(f64::NAN)
            } else {
                0.0
            };
            serde_json::json!({
                "input_weight": n.input_weight,
                "bias": n.bias,
                "output_weight": n.output_weight,
                "neuron_norm": nvn,
                "penalty": n.output_weight.abs() * nvn,
            })
        })
        .collect();
    serde_json::json!({
        "objective": report.objective,
        "data_fit": report.data_fit,
        "reg_value": report.reg_value,
        "active_neurons": report.active_neurons,
        "affine_neurons": report.affine_neurons,
        "restart_index": report.restart_index,
        "trace": report.trace,
        "neurons": breakdown,
    })
}
