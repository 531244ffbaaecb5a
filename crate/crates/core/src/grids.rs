//! Discrete direction and offset grids and the finite atom dictionary.
//!
//! Directions come from dyadic vertex lattices on the faces of the cube
//! `[-1,1]^d`, renormalized to the sphere. Offsets are equally spaced on
//! `[-1, 0]` and cosine-graded on `[0, 1]` so spacing refines like
//! `sqrt(1 - t^2) / m` toward the boundary.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Atom;
use crate::la;

/// Hard cap on the per-face vertex count of a direction grid.
pub const DIRECTION_CAP: usize = 10_000_000;

/// Quasi-uniform unit vectors obtained by renormalizing the dyadic vertex
/// lattice (2^k subdivisions per axis of `[-1,1]`) on every cube face.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionGrid {
    k: u32,
    dim: usize,
    points: Vec<Vec<f64>>,
    #[serde(skip)]
    index: HashMap<Vec<u64>, usize>,
}

impl DirectionGrid {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Face lattice spacing `2 / 2^k` on `[-1, 1]`.
    pub fn face_spacing(&self) -> f64 {
        2.0 / (1u64 << self.k) as f64
    }

    /// Index of a direction that was built from the same lattice, if any.
    pub fn index_of(&self, dir: &[f64]) -> Option<usize> {
        let key: Vec<u64> = dir.iter().map(|c| c.to_bits()).collect();
        self.index.get(&key).copied()
    }

    /// Nearest grid direction and its Euclidean distance.
    pub fn nearest(&self, dir: &[f64]) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d = la::dist(p, dir);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

/// Map a point on the cube boundary to the sphere. All grid code funnels
/// through this so equal lattice points normalize to bit-identical vectors.
pub fn cube_point_to_sphere(p: &[f64]) -> Vec<f64> {
    la::normalized(p).expect("cube boundary point is nonzero")
}

/// Build the direction grid `W_k` for dimension `d >= 2`, `k >= 1`.
/// Shared face/edge vertices are deduplicated; for `d = 2` the count is
/// exactly `4 * 2^k`, in higher dimensions it is `2d 2^{k(d-1)}` up to the
/// lower-order vertex sharing corrections.
pub fn build_direction_grid(d: usize, k: u32) -> Result<DirectionGrid> {
    if d < 2 {
        return Err(Error::invalid("dimension must be at least 2"));
    }
    if k < 1 {
        return Err(Error::invalid("grid level k must be at least 1"));
    }
    let m = 1usize << k;
    let per_face = (m + 1).pow(d as u32 - 1);
    if per_face > DIRECTION_CAP {
        return Err(Error::invalid(format!(
            "direction grid with {per_face} vertices per face exceeds cap {DIRECTION_CAP}"
        )));
    }
    let h = 2.0 / m as f64;
    let mut seen: HashMap<Vec<u64>, ()> = HashMap::new();
    let mut points = Vec::new();
    for axis in 0..d {
        for side in [-1.0f64, 1.0] {
            // enumerate the (d-1)-dimensional lattice on this face
            let mut idx = vec![0usize; d - 1];
            loop {
                let mut p = Vec::with_capacity(d);
                let mut it = idx.iter();
                for coord in 0..d {
                    if coord == axis {
                        p.push(side);
                    } else {
                        let i = *it.next().unwrap();
                        p.push(-1.0 + i as f64 * h);
                    }
                }
                let key: Vec<u64> = p.iter().map(|c| c.to_bits()).collect();
                if seen.insert(key, ()).is_none() {
                    points.push(p);
                }
                // advance the mixed-radix counter
                let mut carry = true;
                for slot in idx.iter_mut() {
                    if *slot < m {
                        *slot += 1;
                        carry = false;
                        break;
                    }
                    *slot = 0;
                }
                if carry {
                    break;
                }
            }
        }
    }
    let mut sphere: Vec<Vec<f64>> = points.iter().map(|p| cube_point_to_sphere(p)).collect();
    sphere.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sphere.dedup_by(|a, b| la::dist(a, b) < 1e-12);
    let index = sphere
        .iter()
        .enumerate()
        .map(|(i, p)| (p.iter().map(|c| c.to_bits()).collect(), i))
        .collect();
    Ok(DirectionGrid {
        k,
        dim: d,
        points: sphere,
        index,
    })
}

/// Graded offsets: `2m` points, equally spaced on `[-1, 0]` and
/// cosine-spaced on `(0, 1]` ending exactly at one.
#[derive(Debug, Clone, Serialize)]
pub struct OffsetGrid {
    m: usize,
    points: Vec<f64>,
}

impl OffsetGrid {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, idx: usize) -> f64 {
        self.points[idx]
    }

    /// Index of the largest grid offset `<= t`, if any.
    pub fn floor_index(&self, t: f64) -> Option<usize> {
        let n = self.points.partition_point(|p| *p <= t);
        n.checked_sub(1)
    }

    /// Index of the smallest grid offset `>= t`, if any.
    pub fn ceil_index(&self, t: f64) -> Option<usize> {
        let n = self.points.partition_point(|p| *p < t);
        (n < self.points.len()).then_some(n)
    }
}

/// Build the offset grid `T_m` for `m >= 2` and validate its spacing:
/// on the cosine-graded side consecutive gaps are squeezed between
/// `pi sqrt(1 - t_{j+1}^2) / (2m)` and `pi sqrt(1 - t_j^2) / (2m)`.
pub fn build_offset_grid(m: usize) -> Result<OffsetGrid> {
    if m < 2 {
        return Err(Error::invalid("offset grid needs m >= 2"));
    }
    let mf = m as f64;
    let mut points = Vec::with_capacity(2 * m);
    for j in 1..=m {
        points.push(-1.0 + j as f64 / mf);
    }
    for j in 1..=m {
        points.push((std::f64::consts::PI * (m - j) as f64 / (2.0 * mf)).cos());
    }
    // spacing sanity: 0-based indices m..2m-2 cover the graded pairs
    let tol = 1e-12;
    for j in m..(2 * m - 2) {
        let (a, b) = (points[j], points[j + 1]);
        let gap = b - a;
        let lo = std::f64::consts::PI * (1.0 - b * b).max(0.0).sqrt() / (2.0 * mf);
        let hi = std::f64::consts::PI * (1.0 - a * a).max(0.0).sqrt() / (2.0 * mf);
        if gap < lo - tol || gap > hi + tol {
            return Err(Error::invalid(format!(
                "offset spacing violated at index {j}: gap {gap} outside [{lo}, {hi}]"
            )));
        }
        if (1.0 - a * a).sqrt() > 2.0 * (1.0 - b * b).sqrt() + tol {
            return Err(Error::invalid(format!(
                "offset half-width doubling violated at index {j}"
            )));
        }
    }
    debug_assert!(points.windows(2).all(|w| w[0] < w[1]));
    debug_assert_eq!(*points.last().unwrap(), 1.0);
    Ok(OffsetGrid { m, points })
}

/// The finite atom set: every grid direction paired with every grid offset.
/// The atom list is materialized lazily; large dictionaries are usually
/// consumed through their grids.
#[derive(Debug, Clone)]
pub struct DiscreteDictionary {
    pub directions: DirectionGrid,
    pub offsets: OffsetGrid,
    atoms: std::sync::OnceLock<Vec<Atom>>,
}

impl DiscreteDictionary {
    pub fn from_grids(directions: DirectionGrid, offsets: OffsetGrid) -> DiscreteDictionary {
        DiscreteDictionary {
            directions,
            offsets,
            atoms: std::sync::OnceLock::new(),
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        self.atoms.get_or_init(|| {
            self.directions
                .points()
                .iter()
                .flat_map(|dir| {
                    self.offsets
                        .points()
                        .iter()
                        .map(|t| Atom::from_unit(dir.clone(), *t))
                        .collect::<Vec<_>>()
                })
                .collect()
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len() * self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// JSON export: directions, offsets, and (direction, offset) index pairs
    /// for every atom, enough to rebuild the dictionary elsewhere.
    pub fn to_json(&self) -> serde_json::Value {
        let pairs: Vec<[usize; 2]> = (0..self.directions.len())
            .flat_map(|i| (0..self.offsets.len()).map(move |j| [i, j]))
            .collect();
        serde_json::json!({
            "dim": self.directions.dim(),
            "k": self.directions.k(),
            "m": self.offsets.m(),
            "directions": self.directions.points(),
            "offsets": self.offsets.points(),
            "atom_index_pairs": pairs,
        })
    }
}

/// Size the grids for a neuron budget: the largest `k` (with `m = 2^k`)
/// whose full dictionary fits in `n` atoms, using exact deduplicated counts.
pub fn build_dictionary(d: usize, n: usize) -> Result<DiscreteDictionary> {
    let mut chosen: Option<(DirectionGrid, OffsetGrid)> = None;
    let mut k = 1u32;
    loop {
        let m = 1usize << k;
        let dirs = match build_direction_grid(d, k) {
            Ok(g) => g,
            Err(_) => break,
        };
        let offsets = build_offset_grid(m)?;
        if dirs.len() * offsets.len() <= n {
            chosen = Some((dirs, offsets));
            k += 1;
        } else {
            break;
        }
    }
    match chosen {
        Some((dirs, offsets)) => Ok(DiscreteDictionary::from_grids(dirs, offsets)),
        None => {
            let need = build_direction_grid(d, 1)?.len() * 4;
            Err(Error::BudgetTooSmall { need, got: n })
        }
    }
}

/// `m` equally spaced unit vectors on the circle, `mu_j = (cos, sin)(2 pi j / m)`.
pub fn planar_boundary_points(m: usize) -> Result<Vec<[f64; 2]>> {
    if m < 4 || m % 2 != 0 {
        return Err(Error::invalid("circle grid needs even m >= 4"));
    }
    Ok((0..m)
        .map(|j| {
            let th = std::f64::consts::TAU * j as f64 / m as f64;
            [th.cos(), th.sin()]
        })
        .collect())
}

/// Periodic distance between indices modulo `m`.
pub fn periodic_index_distance(i: usize, j: usize, m: usize) -> usize {
    let a = i % m;
    let b = j % m;
    let d = a.abs_diff(b);
    d.min(m - d)
}

/// `m` points equally spaced by perimeter length on the boundary of the
/// square `[-1,1]^2`, starting at the corner `(1, -1)` and walking counter
/// clockwise. For `m` divisible by 4 the corners are included.
pub fn square_boundary_points(m: usize) -> Result<Vec<[f64; 2]>> {
    if m < 8 || m % 4 != 0 {
        return Err(Error::invalid("square grid needs m >= 8 divisible by 4"));
    }
    Ok((0..m)
        .map(|j| square_perimeter_point(8.0 * j as f64 / m as f64))
        .collect())
}

/// Point of the square boundary at perimeter parameter `s` in `[0, 8)`.
pub fn square_perimeter_point(s: f64) -> [f64; 2] {
    let s = s.rem_euclid(8.0);
    if s < 2.0 {
        [1.0, -1.0 + s]
    } else if s < 4.0 {
        [3.0 - s, 1.0]
    } else if s < 6.0 {
        [-1.0, 5.0 - s]
    } else {
        [s - 7.0, -1.0]
    }
}

/// Perimeter parameter in `[0, 8)` of a point on the square boundary.
pub fn square_perimeter_param(p: [f64; 2]) -> f64 {
    let (x, y) = (p[0], p[1]);
    // resolve corners consistently with square_perimeter_point
    if (x - 1.0).abs() < 1e-9 && y < 1.0 - 1e-9 {
        (1.0 + y).rem_euclid(8.0)
    } else if (y - 1.0).abs() < 1e-9 && x > -1.0 + 1e-9 {
        3.0 - x
    } else if (x + 1.0).abs() < 1e-9 && y > -1.0 + 1e-9 {
        5.0 - y
    } else {
        (7.0 + x).rem_euclid(8.0)
    }
}
