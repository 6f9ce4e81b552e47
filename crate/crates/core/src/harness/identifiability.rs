//! Two demand processes that a two-price switchback cannot tell apart.
//!
//! A myopic market with values uniform on `[p* - h, p* + h]` and a market of
//! patience `gamma2` with values uniform on `[p* - H, p* + H]`,
//! `H = h (1 + gamma2/(1 - gamma2) q)`, produce the same level differences
//! `D(p* + shading) - D(p* - eps) = -eps / (2h)` although their gradients at
//! `p*` differ by the factor `H / h`.

use serde::Serialize;

use super::replicate;
use crate::buyer::PostExperimentBelief;
use crate::design::SwitchbackDesign;
use crate::error::{Error, Result};
use crate::estimators::AggregatedSales;
use crate::market::{ConditionalDemandFamily, DemandProcess};
use crate::simulator::{aggregate, HorizonMode, Market};
use crate::stats::Moments;

pub fn nonidentifiability_pair(h: f64, gamma2: f64, q: f64, p_star: f64) -> Result<(DemandProcess, DemandProcess)> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("half-width {h} must be positive")));
    }
    if !(0.0..1.0).contains(&gamma2) {
        return Err(Error::Domain(format!("patience {gamma2} outside [0, 1)")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("discount probability {q} outside (0, 1)")));
    }
    let wide = h * (1.0 + gamma2 / (1.0 - gamma2) * q);
    let first = DemandProcess::homogeneous(
        0.0,
        ConditionalDemandFamily::UniformValues { lo: p_star - h, hi: p_star + h },
        p_star,
    )?;
    let second = DemandProcess::homogeneous(
        gamma2,
        ConditionalDemandFamily::UniformValues { lo: p_star - wide, hi: p_star + wide },
        p_star,
    )?;
    Ok((first, second))
}

/// Replication summary of the observables of one process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observables {
    /// `N(0) - N(1)`.
    pub same_day_difference: Moments,
    /// `C(0) - C(1)`.
    pub total_difference: Moments,
    /// `C(i) - N(i)` per level: delayed sales attributed to each price.
    pub delayed_by_level: Vec<Moments>,
    pub gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub first: Observables,
    pub second: Observables,
    /// `|mean difference| / combined SE` for `N(0) - N(1)`.
    pub same_day_z: f64,
    /// Same for `C(0) - C(1)`.
    pub total_z: f64,
    pub gradient_ratio: f64,
    pub predicted_ratio: f64,
    pub passed: bool,
}

fn observe(aggs: &[AggregatedSales], gradient: f64) -> Observables {
    let diff = |f: &dyn Fn(&AggregatedSales) -> f64| Moments::from_slice(&aggs.iter().map(f).collect::<Vec<_>>());
    let levels = aggs.first().map_or(0, AggregatedSales::levels);
    Observables {
        same_day_difference: diff(&|a| a.same_day(0) - a.same_day(1)),
        total_difference: diff(&|a| a.total(0) - a.total(1)),
        delayed_by_level: (0..levels).map(|i| diff(&|a| a.total(i) - a.same_day(i))).collect(),
        gradient,
    }
}

fn z_score(a: &Moments, b: &Moments) -> f64 {
    let se = (a.se().powi(2) + b.se().powi(2)).sqrt();
    let gap = (a.mean - b.mean).abs();
    if gap == 0.0 {
        0.0
    } else {
        gap / se
    }
}

/// Runs both processes on `design` with independent seeds and compares the
/// level-difference statistics. Passes when both differences agree within
/// three combined standard errors.
pub fn verify_observational_gap(
    pair: &(DemandProcess, DemandProcess),
    design: &SwitchbackDesign,
    replications: usize,
    seed: u64,
    horizon: HorizonMode,
) -> Result<GapReport> {
    if design.levels() != 2 {
        return Err(Error::Usage("the observational gap is defined on two-price designs".into()));
    }
    let p_star = design.reference_price();
    let mut obs = Vec::with_capacity(2);
    for (tag, process) in [&pair.0, &pair.1].into_iter().enumerate() {
        let market = Market::new(process, design, PostExperimentBelief::Zero)?;
        let aggs = replicate(&market, horizon, seed, &[tag as u64], replications, aggregate);
        obs.push(observe(&aggs, process.demand_gradient(p_star)?));
    }
    let second = obs.pop().expect("two processes");
    let first = obs.pop().expect("two processes");
    let same_day_z = z_score(&first.same_day_difference, &second.same_day_difference);
    let total_z = z_score(&first.total_difference, &second.total_difference);
    let gamma2 = pair.1.homogeneous_gamma().unwrap_or(0.0);
    let predicted_ratio = 1.0 + gamma2 / (1.0 - gamma2) * design.probs()[1];
    let gradient_ratio = first.gradient / second.gradient;
    Ok(GapReport {
        passed: same_day_z <= 3.0 && total_z <= 3.0,
        first,
        second,
        same_day_z,
        total_z,
        gradient_ratio,
        predicted_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassShiftReport {
    /// Paired change in `N(0)` and `N(1)`.
    pub offsets: [Moments; 2],
    /// Paired change in `N(0) - N(1)`.
    pub difference_change: Moments,
    pub passed: bool,
}

/// Moves `mass` of values from just above zero to the top of the support
/// (uniform on `[0, 1]` against a demand curve `1 + mass - p` on `(mass, 1]`
/// with an atom of `mass` at 1) and checks that `N(0)` and `N(1)` shift by the
/// same amount. Both markets share seeds.
pub fn mass_shift_check(
    gamma: f64,
    mass: f64,
    design: &SwitchbackDesign,
    replications: usize,
    seed: u64,
    horizon: HorizonMode,
) -> Result<MassShiftReport> {
    let p_star = design.reference_price();
    if !(mass > 0.0 && mass < design.prices()[design.levels() - 1]) {
        return Err(Error::Domain(format!("shifted mass {mass} must lie below the lowest price")));
    }
    let base = DemandProcess::homogeneous(gamma, ConditionalDemandFamily::UniformValues { lo: 0.0, hi: 1.0 }, p_star)?;
    let shifted = DemandProcess::homogeneous(
        gamma,
        ConditionalDemandFamily::LinearDemand { intercept: 1.0 + mass, slope: 1.0, lo: mass, hi: 1.0 },
        p_star,
    )?;
    let a = replicate(
        &Market::new(&base, design, PostExperimentBelief::Zero)?,
        horizon,
        seed,
        &[],
        replications,
        aggregate,
    );
    let b = replicate(
        &Market::new(&shifted, design, PostExperimentBelief::Zero)?,
        horizon,
        seed,
        &[],
        replications,
        aggregate,
    );
    let paired = |f: &dyn Fn(&AggregatedSales) -> f64| {
        Moments::from_slice(&a.iter().zip(&b).map(|(x, y)| f(y) - f(x)).collect::<Vec<_>>())
    };
    let offsets = [paired(&|s| s.same_day(0)), paired(&|s| s.same_day(1))];
    let difference_change = paired(&|s| s.same_day(0) - s.same_day(1));
    let passed = difference_change.mean.abs() <= 3.0 * difference_change.se();
    Ok(MassShiftReport { offsets, difference_change, passed })
}
