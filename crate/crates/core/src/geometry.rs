//! Domains, ReLU ridge atoms, atom weights, and integration on the domain.
//!
//! An atom is the function `x -> (xi . x - t)_+` for a unit direction `xi`
//! and scalar offset `t`. Its hyperplane cut `{xi . x = t}` splits the domain
//! into a zero region and an affine region. The weight of an atom measures
//! how close its cut sits to the domain boundary; weighted l1 costs of atom
//! combinations are the central quantity of the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la;
use crate::mc;
use crate::quadrature;

/// Supported domains: the unit Euclidean ball in `R^d` or the square
/// `[-1, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Ball { dim: usize },
    Square,
}

impl Domain {
    pub fn ball(dim: usize) -> Result<Domain> {
        if dim < 2 {
            return Err(Error::invalid("ball dimension must be at least 2"));
        }
        Ok(Domain::Ball { dim })
    }

    pub fn square() -> Domain {
        Domain::Square
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Ball { dim } => *dim,
            Domain::Square => 2,
        }
    }

    pub fn volume(&self) -> f64 {
        mc::domain_volume(self)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Ball { .. } => la::norm(x) <= 1.0 + 1e-12,
            Domain::Square => x.iter().all(|c| c.abs() <= 1.0 + 1e-12),
        }
    }
}

/// A ReLU ridge atom `(xi . x - t)_+` with unit direction `xi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    direction: Vec<f64>,
    offset: f64,
}

impl Atom {
    /// Build an atom, normalizing the direction. Errors on a zero direction.
    pub fn new(direction: Vec<f64>, offset: f64) -> Result<Atom> {
        let direction = la::normalized(&direction)
            .ok_or_else(|| Error::invalid("atom direction must be nonzero"))?;
        Ok(Atom { direction, offset })
    }

    /// Build an atom from an already unit-norm direction.
    pub fn from_unit(direction: Vec<f64>, offset: f64) -> Atom {
        debug_assert!((la::norm(&direction) - 1.0).abs() < 1e-12);
        Atom { direction, offset }
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Evaluate `(xi . x - t)_+`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (la::dot(&self.direction, x) - self.offset).max(0.0)
    }

    /// Bitwise merge key used when combining terms over shared grids.
    pub(crate) fn bit_key(&self) -> Vec<u64> {
        let mut k: Vec<u64> = self.direction.iter().map(|c| c.to_bits()).collect();
        k.push(self.offset.to_bits());
        k
    }
}

/// Integration method: a 1-D slice rule for quantities that reduce to one
/// dimension on the ball, or seeded Monte Carlo on the full domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadratureSpec {
    SliceQuad { points: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl QuadratureSpec {
    pub fn slice(points: usize) -> QuadratureSpec {
        QuadratureSpec::SliceQuad { points }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> QuadratureSpec {
        QuadratureSpec::MonteCarlo { samples, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            QuadratureSpec::SliceQuad { points } if *points < 16 => {
                Err(Error::invalid("slice quadrature needs at least 16 points"))
            }
            QuadratureSpec::MonteCarlo { samples, .. } if *samples < 1000 => {
                Err(Error::invalid("Monte Carlo needs at least 1000 samples"))
            }
            _ => Ok(()),
        }
    }
}

/// Atom weight functions on the parameter set of active atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightFn {
    /// `(1 - t)^(1/2 + d/4)` on the ball; for `d = 2` this is exactly `1 - t`.
    BallPower { dim: usize },
    /// Square root of the Euclidean length of the chord `{xi . x = t}`
    /// clipped to the square.
    SquareChordSqrt,
    /// Constant weight one (the classical unweighted variation cost).
    Unweighted,
    /// Piecewise-linear table in the offset, direction independent.
    Custom { offsets: Vec<f64>, values: Vec<f64> },
}

impl WeightFn {
    pub fn ball_power(dim: usize) -> WeightFn {
        WeightFn::BallPower { dim }
    }

    /// Evaluate the weight at an atom.
    pub fn eval(&self, atom: &Atom) -> f64 {
        self.eval_params(atom.offset())
    }

    /// Evaluate at a raw `(direction, offset)` pair; only the chord weight
    /// looks at the direction, which callers pass through [`WeightFn::eval`].
    fn eval_params(&self, t: f64) -> f64 {
        match self {
            WeightFn::BallPower { dim } => {
                let p = 0.5 + *dim as f64 / 4.0;
                (1.0 - t).max(0.0).powf(p)
            }
            WeightFn::SquareChordSqrt => unreachable!("handled in eval"),
            WeightFn::Unweighted => 1.0,
            WeightFn::Custom { offsets, values } => interp_table(offsets, values, t),
        }
    }
}

impl WeightFn {
    /// Weight of an atom. For the chord weight this clips the hyperplane cut
    /// against the square exactly.
    pub fn weight(&self, atom: &Atom) -> f64 {
        match self {
            WeightFn::SquareChordSqrt => {
                let dir2 = [atom.direction()[0], atom.direction()[1]];
                match square_chord(dir2, atom.offset()) {
                    Some((a, b)) => la::dist(&a, &b).sqrt(),
                    None => 0.0,
                }
            }
            _ => self.eval(atom),
        }
    }
}

fn interp_table(offsets: &[f64], values: &[f64], t: f64) -> f64 {
    assert!(
        offsets.len() == values.len() && !offsets.is_empty(),
        "custom weight table must be nonempty and aligned"
    );
    if t <= offsets[0] {
        return values[0];
    }
    if t >= *offsets.last().unwrap() {
        return *values.last().unwrap();
    }
    let idx = offsets.partition_point(|o| *o <= t);
    let (t0, t1) = (offsets[idx - 1], offsets[idx]);
    let (v0, v1) = (values[idx - 1], values[idx]);
    if t1 <= t0 {
        return v0;
    }
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Endpoints of the segment `{x in [-1,1]^2 : n . x = c}`, or `None` when the
/// line misses the square. Liang-Barsky style clipping along the line.
pub fn square_chord(n: [f64; 2], c: f64) -> Option<([f64; 2], [f64; 2])> {
    let p0 = [n[0] * c, n[1] * c];
    let d = la::rot90(n);
    let mut s_lo = f64::NEG_INFINITY;
    let mut s_hi = f64::INFINITY;
    for k in 0..2 {
        if d[k].abs() < 1e-15 {
            if p0[k].abs() > 1.0 {
                return None;
            }
            continue;
        }
        let a = (-1.0 - p0[k]) / d[k];
        let b = (1.0 - p0[k]) / d[k];
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        s_lo = s_lo.max(a);
        s_hi = s_hi.min(b);
    }
    if s_hi <= s_lo {
        return None;
    }
    Some((
        [p0[0] + s_lo * d[0], p0[1] + s_lo * d[1]],
        [p0[0] + s_hi * d[0], p0[1] + s_hi * d[1]],
    ))
}

/// A finite combination `sum_j a_j phi_j` of ridge atoms.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AtomCombination {
    terms: Vec<(Atom, f64)>,
}

impl AtomCombination {
    pub fn new() -> AtomCombination {
        AtomCombination { terms: Vec::new() }
    }

    pub fn from_terms(terms: Vec<(Atom, f64)>) -> AtomCombination {
        AtomCombination { terms }
    }

    pub fn push(&mut self, atom: Atom, coeff: f64) {
        self.terms.push((atom, coeff));
    }

    pub fn terms(&self) -> &[(Atom, f64)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(a, c)| c * a.eval(x)).sum()
    }

    /// Plain l1 mass of the coefficients.
    pub fn l1_mass(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.abs()).sum()
    }

    /// Weighted l1 cost `sum_j w(phi_j) |a_j|`.
    pub fn variation_cost(&self, wf: &WeightFn) -> f64 {
        self.terms
            .iter()
            .map(|(a, c)| wf.weight(a) * c.abs())
            .sum()
    }

    /// Rescale all coefficients by `c`.
    pub fn scaled(&self, c: f64) -> AtomCombination {
        AtomCombination {
            terms: self
                .terms
                .iter()
                .map(|(a, v)| (a.clone(), c * v))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: &AtomCombination) {
        self.terms.extend(other.terms.iter().cloned());
    }

    /// Merge terms whose atoms are bit-identical and drop negligible
    /// coefficients. Atoms drawn from a shared grid merge exactly.
    pub fn merged(&self) -> AtomCombination {
        use std::collections::BTreeMap;
        let mut map: BTreeMap<Vec<u64>, (Atom, f64)> = BTreeMap::new();
        for (a, c) in &self.terms {
            map.entry(a.bit_key())
                .and_modify(|e| e.1 += c)
                .or_insert_with(|| (a.clone(), *c));
        }
        let cap = map
            .values()
            .map(|(_, c)| c.abs())
            .fold(0.0f64, f64::max)
            * 1e-15;
        AtomCombination {
            terms: map
                .into_values()
                .filter(|(_, c)| c.abs() > cap)
                .collect(),
        }
    }
}

/// `L2(domain)` norm of a single atom.
///
/// On the ball the norm reduces exactly to a 1-D integral over slices
/// orthogonal to the direction; Monte Carlo is accepted as a cross-check.
/// On the square only Monte Carlo is supported. Atoms with `t >= 1` on the
/// ball vanish and report norm zero.
pub fn atom_l2_norm(atom: &Atom, dom: &Domain, q: &QuadratureSpec) -> Result<f64> {
    q.validate()?;
    match (dom, q) {
        (Domain::Ball { dim }, QuadratureSpec::SliceQuad { points }) => {
            if atom.dim() != *dim {
                return Err(Error::invalid("atom/domain dimension mismatch"));
            }
            Ok(quadrature::ball_atom_norm_sq(*dim, atom.offset(), *points).sqrt())
        }
        (_, QuadratureSpec::MonteCarlo { samples, seed }) => {
            let est = mc::mean_over_domain(dom, *samples, *seed, |x| {
                let v = atom.eval(x);
                v * v
            });
            Ok((est.mean * dom.volume()).sqrt())
        }
        (Domain::Square, QuadratureSpec::SliceQuad { .. }) => Err(Error::invalid(
            "slice quadrature is only defined on the ball; use Monte Carlo on the square",
        )),
    }
}

/// Admissibility scan of a weight over a direction/offset grid.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    /// Largest observed `||phi|| / w(phi)` over atoms with positive weight.
    pub max_ratio: f64,
    /// Atom attaining the maximum, absent when every weight vanished.
    pub worst_atom: Option<Atom>,
    /// Atoms where the weight vanishes but the norm does not.
    pub zero_weight_atoms: Vec<Atom>,
}

/// Scan `||phi / w(phi)||` over a grid of directions and offsets. A weight is
/// admissible when the maximum stays finite and stable as the grid refines.
pub fn check_admissible(
    wf: &WeightFn,
    dom: &Domain,
    grid_density: usize,
) -> Result<AdmissibilityReport> {
    if grid_density < 8 {
        return Err(Error::invalid("grid density must be at least 8"));
    }
    let d = dom.dim();
    let k = (grid_density as f64).log2().ceil().max(1.0) as u32;
    let dirs = crate::grids::build_direction_grid(d, k)?;
    let offsets = crate::grids::build_offset_grid(grid_density)?;

    let mut max_ratio = f64::NEG_INFINITY;
    let mut worst = None;
    let mut zero_weight = Vec::new();
    for dir in dirs.points() {
        for &t in offsets.points() {
            let atom = Atom::from_unit(dir.clone(), t);
            let norm = match dom {
                Domain::Ball { dim } => {
                    quadrature::ball_atom_norm_sq(*dim, t, 512).sqrt()
                }
                Domain::Square => {
                    let q = QuadratureSpec::monte_carlo(20_000, 0x5eed ^ t.to_bits());
                    atom_l2_norm(&atom, dom, &q)?
                }
            };
            let w = wf.weight(&atom);
            if w <= 1e-13 {
                if norm > 1e-10 {
                    zero_weight.push(atom);
                }
                continue;
            }
            let ratio = norm / w;
            if ratio > max_ratio {
                max_ratio = ratio;
                worst = Some(atom);
            }
        }
    }
    Ok(AdmissibilityReport {
        max_ratio: if worst.is_some() { max_ratio } else { 0.0 },
        worst_atom: worst,
        zero_weight_atoms: zero_weight,
    })
}

/// `L2(domain)` distance between two atom combinations, with the Monte Carlo
/// standard error of the squared distance propagated to the norm.
pub fn l2_error_with_stderr(
    f: &AtomCombination,
    g: &AtomCombination,
    dom: &Domain,
    q: &QuadratureSpec,
) -> Result<(f64, f64)> {
    q.validate()?;
    // closed slice path: two single atoms sharing a direction on the ball
    if let (Domain::Ball { dim }, QuadratureSpec::SliceQuad { points }) = (dom, q) {
        if let Some(v) = shared_direction_error(f, g, *dim, *points) {
            return Ok((v, 0.0));
        }
        return Err(Error::invalid(
            "slice quadrature for errors requires single atoms sharing a direction",
        ));
    }
    let (samples, seed) = match q {
        QuadratureSpec::MonteCarlo { samples, seed } => (*samples, *seed),
        _ => unreachable!(),
    };
    let est = mc::mean_over_domain(dom, samples, seed, |x| {
        let v = f.eval(x) - g.eval(x);
        v * v
    });
    let vol = dom.volume();
    let err_sq = (est.mean * vol).max(0.0);
    let err = err_sq.sqrt();
    // delta method: d sqrt(u) = 1/(2 sqrt(u)) du
    let stderr = if err > 1e-300 {
        0.5 * est.stderr * vol / err
    } else {
        (est.stderr * vol).sqrt()
    };
    Ok((err, stderr))
}

/// `L2(domain)` distance between two atom combinations.
pub fn l2_error(
    f: &AtomCombination,
    g: &AtomCombination,
    dom: &Domain,
    q: &QuadratureSpec,
) -> Result<f64> {
    l2_error_with_stderr(f, g, dom, q).map(|(e, _)| e)
}

fn shared_direction_error(
    f: &AtomCombination,
    g: &AtomCombination,
    dim: usize,
    points: usize,
) -> Option<f64> {
    if f.len() != 1 || g.len() != 1 {
        return None;
    }
    let (fa, fc) = &f.terms()[0];
    let (ga, gc) = &g.terms()[0];
    if la::dist(fa.direction(), ga.direction()) > 1e-12 {
        return None;
    }
    let (t1, t2) = (fa.offset(), ga.offset());
    let v = quadrature::unit_ball_volume(dim - 1);
    // s = cos(theta) removes the endpoint singularity; split at the kinks
    let integrand = |th: f64| {
        let (sin, cos) = th.sin_cos();
        let diff = fc * (cos - t1).max(0.0) - gc * (cos - t2).max(0.0);
        diff * diff * sin.powi(dim as i32)
    };
    let mut knots = vec![0.0, std::f64::consts::PI];
    for t in [t1, t2] {
        if t > -1.0 && t < 1.0 {
            knots.push(t.acos());
        }
    }
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut acc = 0.0;
    for w in knots.windows(2) {
        acc += quadrature::integrate(integrand, w[0], w[1], points.max(64));
    }
    Some((v * acc).max(0.0).sqrt())
}
