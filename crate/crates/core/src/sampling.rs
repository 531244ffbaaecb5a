//! Random n-term compression of long atom combinations, a deterministic
//! greedy comparator, and least-squares projection onto a dictionary span.
//!
//! The compressor draws `n` independent indices with probabilities
//! proportional to the weighted coefficient masses and averages the picked
//! elements, the classical Maurey sampling argument: for elements of norm at
//! most `delta` and total mass `V`, the best of a few draws lands within
//! `V * delta / sqrt(n)` of the target.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Atom, AtomCombination, Domain, QuadratureSpec, WeightFn};
use crate::mc;

/// Configuration for the randomized compressor.
#[derive(Debug, Clone)]
pub struct MaureyConfig {
    /// Term budget of the output.
    pub n: usize,
    /// Number of independent draws; the best one is returned.
    pub trials: usize,
    pub seed: u64,
    /// Weight used to rescale dictionary elements before sampling.
    pub normalization: WeightFn,
}

impl MaureyConfig {
    pub fn new(n: usize, trials: usize, seed: u64, normalization: WeightFn) -> MaureyConfig {
        MaureyConfig {
            n,
            trials,
            seed,
            normalization,
        }
    }
}

/// One sampling element: a small combination with its signed mass, so the
/// target is `sum_j coeff_j * combo_j`.
#[derive(Debug, Clone)]
pub struct Element {
    pub combo: AtomCombination,
    pub coeff: f64,
}

/// Outcome of an element-level compression run.
#[derive(Debug, Clone)]
pub struct CompressionOutcome {
    pub combination: AtomCombination,
    /// L2 error of the best draw against the target.
    pub error: f64,
    /// Errors of every draw, in trial order.
    pub trial_errors: Vec<f64>,
    /// Total sampled mass `V`.
    pub total_mass: f64,
    /// Largest element norm `delta`.
    pub max_element_norm: f64,
}

/// Compress `sum_j coeff_j combo_j` to at most `n` elements by Maurey
/// sampling, evaluating every trial against the target on one shared,
/// seeded sample stream and keeping the best.
pub fn compress_elements(
    elements: &[Element],
    n: usize,
    trials: usize,
    seed: u64,
    dom: &Domain,
    samples: usize,
    sample_seed: u64,
) -> Result<CompressionOutcome> {
    if n == 0 || trials == 0 {
        return Err(Error::invalid("need a positive budget and trial count"));
    }
    let nel = elements.len();
    let total_mass: f64 = elements.iter().map(|e| e.coeff.abs()).sum();
    if total_mass <= 0.0 || nel == 0 {
        return Ok(CompressionOutcome {
            combination: AtomCombination::new(),
            error: 0.0,
            trial_errors: vec![0.0; trials],
            total_mass: 0.0,
            max_element_norm: 0.0,
        });
    }
    let mut cum = Vec::with_capacity(nel);
    let mut acc = 0.0;
    for e in elements {
        acc += e.coeff.abs();
        cum.push(acc);
    }

    // per-trial sample counts over the element index distribution
    let counts: Vec<Vec<u32>> = (0..trials)
        .map(|t| {
            let mut rng = mc::block_rng(seed, t as u64 ^ 0xA5A5_0000);
            let mut c = vec![0u32; nel];
            for _ in 0..n {
                let u: f64 = rng.gen_range(0.0..total_mass);
                let idx = cum.partition_point(|v| *v <= u).min(nel - 1);
                c[idx] += 1;
            }
            c
        })
        .collect();
    // candidate coefficients per trial: (V / n) * sign(c_j) * count_j
    let gammas: Vec<Vec<f64>> = counts
        .iter()
        .map(|c| {
            elements
                .iter()
                .zip(c)
                .map(|(e, k)| total_mass / n as f64 * e.coeff.signum() * *k as f64)
                .collect()
        })
        .collect();

    // one pass over a shared sample stream: per block evaluate all elements,
    // then accumulate squared residuals of every trial plus element norms
    let d = dom.dim();
    let blocks = samples.div_ceil(mc::BLOCK);
    let per_block: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..blocks as u64)
        .into_par_iter()
        .map(|b| {
            let len = if (b as usize) == blocks - 1 {
                samples - (blocks - 1) * mc::BLOCK
            } else {
                mc::BLOCK
            };
            let mut buf = Vec::with_capacity(len * d);
            mc::fill_domain_block(dom, sample_seed, b, len, &mut buf);
            let mut evals = vec![0.0; nel * len];
            for (j, e) in elements.iter().enumerate() {
                let row = &mut evals[j * len..(j + 1) * len];
                for (s, x) in buf.chunks_exact(d).enumerate() {
                    row[s] = e.combo.eval(x);
                }
            }
            let mut norms_sq = vec![0.0; nel];
            for (j, ns) in norms_sq.iter_mut().enumerate() {
                let row = &evals[j * len..(j + 1) * len];
                *ns = row.iter().map(|v| v * v).sum();
            }
            let mut residuals = vec![0.0; trials];
            for s in 0..len {
                let target: f64 = elements
                    .iter()
                    .enumerate()
                    .map(|(j, e)| e.coeff * evals[j * len + s])
                    .sum();
                for (t, g) in gammas.iter().enumerate() {
                    let mut approx = 0.0;
                    for (j, gj) in g.iter().enumerate() {
                        if *gj != 0.0 {
                            approx += gj * evals[j * len + s];
                        }
                    }
                    let r = target - approx;
                    residuals[t] += r * r;
                }
            }
            (residuals, norms_sq, len)
        })
        .collect();

    let vol = dom.volume();
    let mut residuals = vec![0.0; trials];
    let mut norms_sq = vec![0.0; nel];
    let mut total = 0usize;
    for (r, ns, len) in per_block {
        for (a, b) in residuals.iter_mut().zip(&r) {
            *a += b;
        }
        for (a, b) in norms_sq.iter_mut().zip(&ns) {
            *a += b;
        }
        total += len;
    }
    let trial_errors: Vec<f64> = residuals
        .iter()
        .map(|r| (r / total as f64 * vol).max(0.0).sqrt())
        .collect();
    let max_element_norm = norms_sq
        .iter()
        .map(|n| (n / total as f64 * vol).max(0.0).sqrt())
        .fold(0.0f64, f64::max);

    let best = trial_errors
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap();
    let mut out = AtomCombination::new();
    for (e, g) in elements.iter().zip(&gammas[best]) {
        if *g != 0.0 {
            out.extend(&e.combo.scaled(*g));
        }
    }
    let out = out.merged();
    Ok(CompressionOutcome {
        combination: out,
        error: trial_errors[best],
        trial_errors,
        total_mass,
        max_element_norm,
    })
}

/// Compress an atom combination to at most `cfg.n` atoms. Every term is
/// rescaled by the normalization weight, sampled with probability
/// proportional to its weighted mass, and the best of `cfg.trials` draws is
/// returned.
pub fn maurey_compress(
    h: &AtomCombination,
    cfg: &MaureyConfig,
    dom: &Domain,
    q: &QuadratureSpec,
) -> Result<AtomCombination> {
    maurey_compress_outcome(h, cfg, dom, q).map(|o| o.combination)
}

/// Like [`maurey_compress`] but returning draw diagnostics.
pub fn maurey_compress_outcome(
    h: &AtomCombination,
    cfg: &MaureyConfig,
    dom: &Domain,
    q: &QuadratureSpec,
) -> Result<CompressionOutcome> {
    q.validate()?;
    let (samples, sample_seed) = match q {
        QuadratureSpec::MonteCarlo { samples, seed } => (*samples, *seed),
        _ => return Err(Error::invalid("compression requires Monte Carlo quadrature")),
    };
    let elements: Vec<Element> = h
        .terms()
        .iter()
        .map(|(atom, a)| {
            let w = cfg.normalization.weight(atom);
            if w > 1e-14 {
                Element {
                    combo: AtomCombination::from_terms(vec![(atom.clone(), 1.0 / w)]),
                    coeff: a * w,
                }
            } else {
                Element {
                    combo: AtomCombination::from_terms(vec![(atom.clone(), 1.0)]),
                    coeff: *a,
                }
            }
        })
        .collect();
    compress_elements(
        &elements,
        cfg.n,
        cfg.trials,
        cfg.seed,
        dom,
        samples,
        sample_seed,
    )
}

/// Orthogonal greedy selection of `n` terms from the support of `h`, with a
/// least-squares refit over the selected atoms after every pick.
pub fn greedy_compress(
    h: &AtomCombination,
    n: usize,
    dom: &Domain,
    q: &QuadratureSpec,
) -> Result<AtomCombination> {
    q.validate()?;
    let (samples, seed) = match q {
        QuadratureSpec::MonteCarlo { samples, seed } => (*samples, *seed),
        _ => return Err(Error::invalid("greedy compression requires Monte Carlo quadrature")),
    };
    let support: Vec<&Atom> = h.terms().iter().map(|(a, _)| a).collect();
    let nel = support.len();
    if nel == 0 || n == 0 {
        return Ok(AtomCombination::new());
    }
    let d = dom.dim();
    // column matrix of atom values on the shared stream plus the target
    let mut cols = vec![0.0; nel * samples];
    let mut target = vec![0.0; samples];
    let blocks = samples.div_ceil(mc::BLOCK);
    let mut offset = 0usize;
    let mut buf = Vec::new();
    for b in 0..blocks as u64 {
        let len = if (b as usize) == blocks - 1 {
            samples - (blocks - 1) * mc::BLOCK
        } else {
            mc::BLOCK
        };
        mc::fill_domain_block(dom, seed, b, len, &mut buf);
        for (s, x) in buf.chunks_exact(d).enumerate() {
            target[offset + s] = h.eval(x);
            for (j, atom) in support.iter().enumerate() {
                cols[j * samples + offset + s] = atom.eval(x);
            }
        }
        offset += len;
    }

    let mut selected: Vec<usize> = Vec::new();
    let mut coeffs: Vec<f64> = Vec::new();
    let mut residual = target.clone();
    for _ in 0..n.min(nel) {
        // most correlated unselected column
        let mut best = (usize::MAX, 0.0f64);
        for j in 0..nel {
            if selected.contains(&j) {
                continue;
            }
            let col = &cols[j * samples..(j + 1) * samples];
            let corr: f64 = col.iter().zip(&residual).map(|(a, r)| a * r).sum();
            let nn: f64 = col.iter().map(|a| a * a).sum::<f64>().sqrt();
            let score = if nn > 1e-14 { corr.abs() / nn } else { 0.0 };
            if best.0 == usize::MAX || score > best.1 {
                best = (j, score);
            }
        }
        if best.0 == usize::MAX || best.1 <= 1e-14 {
            break;
        }
        selected.push(best.0);
        // least-squares refit on the selected set
        let k = selected.len();
        let mut gram = nalgebra::DMatrix::zeros(k, k);
        let mut rhs = nalgebra::DVector::zeros(k);
        for (a, &ja) in selected.iter().enumerate() {
            let ca = &cols[ja * samples..(ja + 1) * samples];
            rhs[a] = ca.iter().zip(&target).map(|(x, y)| x * y).sum();
            for (b, &jb) in selected.iter().enumerate().skip(a) {
                let cb = &cols[jb * samples..(jb + 1) * samples];
                let g: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
                gram[(a, b)] = g;
                gram[(b, a)] = g;
            }
        }
        for a in 0..k {
            gram[(a, a)] += 1e-12 * gram[(a, a)].max(1.0);
        }
        let sol = gram
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .or_else(|| gram.lu().solve(&rhs))
            .ok_or_else(|| Error::IllConditioned("greedy refit failed".into()))?;
        coeffs = sol.iter().cloned().collect();
        // refresh the residual
        residual.copy_from_slice(&target);
        for (c, &j) in coeffs.iter().zip(&selected) {
            let col = &cols[j * samples..(j + 1) * samples];
            for (r, v) in residual.iter_mut().zip(col) {
                *r -= c * v;
            }
        }
        let rn: f64 = residual.iter().map(|r| r * r).sum();
        if rn / samples as f64 <= 1e-24 {
            break;
        }
    }
    Ok(AtomCombination::from_terms(
        selected
            .iter()
            .zip(&coeffs)
            .map(|(&j, &c)| (support[j].clone(), c))
            .collect(),
    ))
}

/// Least-squares projection of `f` onto the span of `atoms`, solving the
/// ridge-stabilized normal equations over a shared Monte Carlo sample set.
pub fn project_onto_span(
    f: &AtomCombination,
    atoms: &[Atom],
    dom: &Domain,
    q: &QuadratureSpec,
    ridge: f64,
) -> Result<AtomCombination> {
    q.validate()?;
    if ridge < 0.0 {
        return Err(Error::invalid("ridge must be nonnegative"));
    }
    let (samples, seed) = match q {
        QuadratureSpec::MonteCarlo { samples, seed } => (*samples, *seed),
        _ => return Err(Error::invalid("projection requires Monte Carlo quadrature")),
    };
    let n = atoms.len();
    if n == 0 {
        return Ok(AtomCombination::new());
    }
    let d = dom.dim();
    let blocks = samples.div_ceil(mc::BLOCK);
    // accumulate G = A^T A / S and b = A^T f / S blockwise
    let partials: Vec<(nalgebra::DMatrix<f64>, nalgebra::DVector<f64>)> = (0..blocks as u64)
        .into_par_iter()
        .map(|bi| {
            let len = if (bi as usize) == blocks - 1 {
                samples - (blocks - 1) * mc::BLOCK
            } else {
                mc::BLOCK
            };
            let mut buf = Vec::with_capacity(len * d);
            mc::fill_domain_block(dom, seed, bi, len, &mut buf);
            let mut vals = vec![0.0; n];
            let mut g = nalgebra::DMatrix::zeros(n, n);
            let mut b = nalgebra::DVector::zeros(n);
            for x in buf.chunks_exact(d) {
                for (j, atom) in atoms.iter().enumerate() {
                    vals[j] = atom.eval(x);
                }
                let fx = f.eval(x);
                for j in 0..n {
                    let vj = vals[j];
                    if vj == 0.0 {
                        continue;
                    }
                    b[j] += vj * fx;
                    for k in j..n {
                        g[(j, k)] += vj * vals[k];
                    }
                }
            }
            (g, b)
        })
        .collect();
    let mut gram = nalgebra::DMatrix::zeros(n, n);
    let mut rhs = nalgebra::DVector::zeros(n);
    for (g, b) in partials {
        gram += g;
        rhs += b;
    }
    let sf = samples as f64;
    gram /= sf;
    rhs /= sf;
    for j in 0..n {
        for k in 0..j {
            gram[(j, k)] = gram[(k, j)];
        }
        gram[(j, j)] += ridge;
    }
    let max_diag = (0..n).map(|j| gram[(j, j)]).fold(0.0f64, f64::max);
    let sol = match gram.clone().cholesky() {
        Some(ch) => {
            // a vanishing pivot means the dictionary is rank deficient on
            // this sample set; without a ridge that solve is meaningless
            let min_pivot = (0..n).map(|j| ch.l_dirty()[(j, j)]).fold(f64::INFINITY, f64::min);
            if ridge == 0.0 && min_pivot * min_pivot <= 1e-12 * max_diag {
                return Err(Error::IllConditioned(
                    "Gram matrix is numerically singular; pass a positive ridge".into(),
                ));
            }
            ch.solve(&rhs)
        }
        None => {
            if ridge == 0.0 {
                return Err(Error::IllConditioned(
                    "Gram matrix is singular; pass a positive ridge".into(),
                ));
            }
            gram.lu()
                .solve(&rhs)
                .ok_or_else(|| Error::IllConditioned("normal equations unsolvable".into()))?
        }
    };
    Ok(AtomCombination::from_terms(
        atoms
            .iter()
            .cloned()
            .zip(sol.iter().cloned())
            .filter(|(_, c)| c.abs() > 0.0)
            .collect(),
    ))
}
