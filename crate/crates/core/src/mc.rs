//! Seeded, chunked Monte Carlo integration over the supported domains.
//!
//! Sample streams are split into fixed-size blocks, each block seeded by a
//! deterministic mix of the stream seed and the block index. Blocks are
//! evaluated in parallel and reduced in block order, so parallel and serial
//! runs produce bit-identical sums.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::geometry::Domain;
use crate::quadrature::unit_ball_volume;

pub const BLOCK: usize = 8192;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// RNG for one block of a seeded stream.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(block)))
}

/// A uniformly random unit vector in `R^d`.
pub fn random_unit_vector<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = crate::la::norm(&v);
        if n > 1e-12 {
            return crate::la::scale(&v, 1.0 / n);
        }
    }
}

/// Fill `out` (length `len * d`) with uniform samples from the unit ball.
/// Rejection from the bounding cube for d <= 4, direction times graded
/// radius beyond that.
fn fill_ball<R: Rng>(d: usize, len: usize, rng: &mut R, out: &mut Vec<f64>) {
    out.clear();
    if d <= 4 {
        let mut x = vec![0.0; d];
        for _ in 0..len {
            loop {
                let mut s = 0.0;
                for xi in x.iter_mut() {
                    *xi = rng.gen_range(-1.0..1.0);
                    s += *xi * *xi;
                }
                if s <= 1.0 {
                    break;
                }
            }
            out.extend_from_slice(&x);
        }
    } else {
        for _ in 0..len {
            let dir = random_unit_vector(d, rng);
            let r = rng.gen_range(0.0f64..1.0).powf(1.0 / d as f64);
            out.extend(dir.iter().map(|c| c * r));
        }
    }
}

fn fill_square<R: Rng>(len: usize, rng: &mut R, out: &mut Vec<f64>) {
    out.clear();
    for _ in 0..len {
        out.push(rng.gen_range(-1.0..1.0));
        out.push(rng.gen_range(-1.0..1.0));
    }
}

/// Fill a block of uniform domain samples; deterministic in `(seed, block)`.
pub fn fill_domain_block(dom: &Domain, seed: u64, block: u64, len: usize, out: &mut Vec<f64>) {
    let mut rng = block_rng(seed, block);
    match dom {
        Domain::Ball { dim } => fill_ball(*dim, len, &mut rng, out),
        Domain::Square => fill_square(len, &mut rng, out),
    }
}

pub fn domain_volume(dom: &Domain) -> f64 {
    match dom {
        Domain::Ball { dim } => unit_ball_volume(*dim),
        Domain::Square => 4.0,
    }
}

/// Mean and standard error estimates from a Monte Carlo stream.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    fn from_moments(sum: f64, sum_sq: f64, n: usize) -> Estimate {
        let nf = n as f64;
        let mean = sum / nf;
        let var = (sum_sq / nf - mean * mean).max(0.0);
        Estimate {
            mean,
            stderr: (var / nf).sqrt(),
            samples: n,
        }
    }
}

/// Mean of `f` over uniform samples from the domain. Multiply by
/// [`domain_volume`] for the integral.
pub fn mean_over_domain<F>(dom: &Domain, samples: usize, seed: u64, f: F) -> Estimate
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = dom.dim();
    let blocks = samples.div_ceil(BLOCK);
    let moments: Vec<(f64, f64, usize)> = (0..blocks as u64)
        .into_par_iter()
        .map(|b| {
            let len = if (b as usize) == blocks - 1 {
                samples - (blocks - 1) * BLOCK
            } else {
                BLOCK
            };
            let mut buf = Vec::with_capacity(len * d);
            fill_domain_block(dom, seed, b, len, &mut buf);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for x in buf.chunks_exact(d) {
                let v = f(x);
                sum += v;
                sum_sq += v * v;
            }
            (sum, sum_sq, len)
        })
        .collect();
    let (mut s, mut ss, mut n) = (0.0, 0.0, 0usize);
    for (a, b, c) in moments {
        s += a;
        ss += b;
        n += c;
    }
    Estimate::from_moments(s, ss, n)
}

/// Mean of `f` over uniform samples from an axis-aligned box, together with
/// the box volume. Useful when the integrand is supported inside the box.
pub fn mean_over_box<F>(lo: &[f64], hi: &[f64], samples: usize, seed: u64, f: F) -> (Estimate, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = lo.len();
    let vol: f64 = lo.iter().zip(hi).map(|(a, b)| (b - a).max(0.0)).product();
    if vol <= 0.0 {
        return (
            Estimate {
                mean: 0.0,
                stderr: 0.0,
                samples: 0,
            },
            0.0,
        );
    }
    let blocks = samples.div_ceil(BLOCK);
    let moments: Vec<(f64, f64, usize)> = (0..blocks as u64)
        .into_par_iter()
        .map(|b| {
            let len = if (b as usize) == blocks - 1 {
                samples - (blocks - 1) * BLOCK
            } else {
                BLOCK
            };
            let mut rng = block_rng(seed, b);
            let mut x = vec![0.0; d];
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..len {
                for k in 0..d {
                    x[k] = rng.gen_range(lo[k]..hi[k]);
                }
                let v = f(&x);
                sum += v;
                sum_sq += v * v;
            }
            (sum, sum_sq, len)
        })
        .collect();
    let (mut s, mut ss, mut n) = (0.0, 0.0, 0usize);
    for (a, b, c) in moments {
        s += a;
        ss += b;
        n += c;
    }
    (Estimate::from_moments(s, ss, n), vol)
}
