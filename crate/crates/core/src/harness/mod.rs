//! Seeded Monte Carlo studies built on the simulator and estimators.
//!
//! Replication `j` of a study cell with coordinates `c` runs with seed
//! `derive_seed(base, c ++ [j])`. Replications run on the rayon pool and are
//! collected in index order, and moments are reduced in a fixed pairwise tree,
//! so results do not depend on the thread count.

pub mod acceptance;
pub mod dynamic;
pub mod identifiability;
pub mod sweep;

use rayon::prelude::*;

use crate::design::SwitchbackDesign;
use crate::error::Result;
use crate::estimators::{AggregatedSales, EstimatorId, EstimatorSuite};
use crate::market::DemandProcess;
use crate::rng::derive_seed;
use crate::simulator::{ExperimentTrace, HorizonMode, Market};
use crate::stats::Moments;

/// Runs `reps` replications and maps each trace through `f`, in index order.
pub fn replicate<T, F>(
    market: &Market,
    horizon: HorizonMode,
    base_seed: u64,
    coords: &[u64],
    reps: usize,
    f: F,
) -> Vec<T>
where
    T: Send,
    F: Fn(&ExperimentTrace) -> T + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|j| {
            let mut c = coords.to_vec();
            c.push(j as u64);
            f(&market.run(derive_seed(base_seed, &c), horizon))
        })
        .collect()
}

/// Replication moments of one estimator over a batch of aggregates.
pub fn estimator_moments(
    aggs: &[AggregatedSales],
    suite: &EstimatorSuite,
    id: EstimatorId,
    eps: f64,
) -> Result<Moments> {
    let xs = aggs.iter().map(|a| suite.apply(id, a, eps).map(|e| e.value)).collect::<Result<Vec<_>>>()?;
    Ok(Moments::from_slice(&xs))
}

/// Limit of `E[estimate]` as `delta -> 0` where theory gives one.
///
/// The debiased estimators target `d(p*)` for any patience mixture. The naive
/// ones have closed-form limits only for homogeneous patience: the total-sales
/// estimator on two-price designs, and the same-day estimator on the top pair
/// of any ladder, where the factor is `1 + c (QE(p0) - QE(p1)) / (p0 - p1)`
/// with `c = gamma / (1 - gamma)` and `QE(p) = E[(p - P)+]`.
pub fn predicted_limit(process: &DemandProcess, design: &SwitchbackDesign, id: EstimatorId) -> Option<f64> {
    let d = process.demand_gradient(design.reference_price()).ok()?;
    match id {
        EstimatorId::ThreePriceKnown | EstimatorId::ThreePriceUnknown => (design.levels() == 3).then_some(d),
        EstimatorId::NaiveTotal => {
            let gamma = process.homogeneous_gamma()?;
            if design.levels() != 2 {
                return None;
            }
            let q = design.probs()[1];
            Some((1.0 / q + gamma / (1.0 - gamma)) * d)
        }
        EstimatorId::NaiveSameDay => {
            let gamma = process.homogeneous_gamma()?;
            let p = design.prices();
            let gap = design.expected_discount_mass(p[0]) - design.expected_discount_mass(p[1]);
            Some((1.0 + gamma / (1.0 - gamma) * gap / (p[0] - p[1])) * d)
        }
    }
}
