//! Verification oracles and experiment utilities.
//!
//! [`reference_projection`] is an independent check on the optimizer: it is
//! classical iterative proportional scaling on the moment constraints
//! η_v = η̂_v, implemented by direct componentwise comparisons with no use
//! of the incidence bitmap or solver kernels, so a kernel bug cannot
//! confirm itself. Both routes target the same unique projection point and
//! must agree wherever both converge.

use std::time::Duration;

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::error::{Error, Result};
use crate::poset::Basis;
use crate::sum::neumaier;
use crate::tensor::{NormalizedTensor, RawTensor, Shape};

/// One evaluation of a reconstruction against its input.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rmse: f64,
    pub kl: f64,
    pub parameter_count: usize,
    pub wall_time: Duration,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "rmse,kl,params,time_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.rmse,
            self.kl,
            self.parameter_count,
            self.wall_time.as_secs_f64() * 1e3
        )
    }
}

/// Iterative proportional scaling to the constraint set η = η̂.
///
/// Cycles over the basis, multiplying q on each up-set by η̂_v/η_v and
/// renormalizing, until max_v |η_v − η̂_v| ≤ tol. Intended for small
/// instances; shares no code with the solver kernels.
pub fn reference_projection(
    p: &NormalizedTensor,
    basis: &Basis,
    tol: f64,
) -> Result<NormalizedTensor> {
    if tol <= 0.0 || tol.is_nan() {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let space = p.space();
    let members: Vec<Vec<usize>> = space.iter().map(|v| v.components().to_vec()).collect();
    let basis_members: Vec<Vec<usize>> = basis.iter().map(|v| v.components().to_vec()).collect();

    // Up-set ordinal lists by direct componentwise comparison.
    let up_sets: Vec<Vec<usize>> = basis_members
        .iter()
        .map(|u| {
            members
                .iter()
                .enumerate()
                .filter(|(_, v)| u.iter().zip(v.iter()).all(|(a, b)| a <= b))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let eta_hat: Vec<f64> = up_sets
        .iter()
        .map(|ids| ids.iter().map(|&j| p.prob(j)).sum())
        .collect();

    let n = space.len();
    let mut q = vec![1.0 / n as f64; n];
    let residual = |q: &[f64]| -> f64 {
        up_sets
            .iter()
            .zip(&eta_hat)
            .map(|(ids, hat)| (ids.iter().map(|&j| q[j]).sum::<f64>() - hat).abs())
            .fold(0.0, f64::max)
    };

    const MAX_CYCLES: usize = 200_000;
    for _ in 0..MAX_CYCLES {
        if residual(&q) <= tol {
            return NormalizedTensor::new(space.clone(), q, 1.0)
                .map(|t| t.with_total_mass(p.total_mass()));
        }
        for (ids, &hat) in up_sets.iter().zip(&eta_hat) {
            let eta: f64 = ids.iter().map(|&j| q[j]).sum();
            if eta <= 0.0 {
                if hat > 0.0 {
                    return Err(Error::Oracle(format!(
                        "up-set mass vanished while its target is {hat}"
                    )));
                }
                continue;
            }
            let factor = hat / eta;
            for &j in ids {
                q[j] *= factor;
            }
            let total: f64 = q.iter().sum();
            for qj in q.iter_mut() {
                *qj /= total;
            }
        }
    }
    Err(Error::Oracle(format!(
        "iterative scaling did not reach tolerance {tol} within {MAX_CYCLES} cycles"
    )))
}

/// Root mean squared error over the full grid (entries outside Ω are the
/// emitted zeros).
pub fn rmse(x: &RawTensor, x_hat: &RawTensor) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {}",
            x.shape(),
            x_hat.shape()
        )));
    }
    let n = x.shape().cell_count();
    let ss = neumaier(
        x.values()
            .iter()
            .zip(x_hat.values())
            .map(|(a, b)| (a - b) * (a - b)),
    );
    Ok((ss / n as f64).sqrt())
}

/// A seeded tensor of i.i.d. Uniform(0,1) entries in row-major order.
///
/// The generator is xoshiro256** seeded through SplitMix64 from the given
/// 64-bit seed; each entry is `(next_u64() >> 11) * 2⁻⁵³`. The algorithm is
/// pinned so streams reproduce across implementations.
pub fn synthetic_tensor(shape: Shape, seed: u64) -> RawTensor {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let scale = 1.0 / (1u64 << 53) as f64;
    let values = (0..shape.cell_count())
        .map(|_| (rng.next_u64() >> 11) as f64 * scale)
        .collect();
    RawTensor::from_dense(shape, values).expect("uniform draws form a valid tensor")
}
