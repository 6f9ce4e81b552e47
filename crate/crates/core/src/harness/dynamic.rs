//! Gradient of long-run sales and revenue with respect to a uniform shift of
//! the whole price ladder.
//!
//! Two experiments are run per replication, the original design and the
//! design with every price raised by `alpha`, on the same seed. Average sales
//! `(1/T) sum C_t` and revenue `(1/T) sum C_t p_t` are differenced and divided
//! by `alpha`; as `delta -> 0` these approach `d(p(K))` and, up to `O(eps)`,
//! `d(p*)` and `r(p*) = p* d(p*) + D(p*)`.

use serde::Serialize;

use super::replicate;
use crate::buyer::{limit_option_value, PostExperimentBelief};
use crate::design::SwitchbackDesign;
use crate::error::{Error, Result};
use crate::market::DemandProcess;
use crate::simulator::{HorizonMode, Market};
use crate::stats::Moments;

/// Allowance for cancellation when differencing two long-run averages.
const ROUNDING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicReport {
    pub alpha: f64,
    pub demand_difference: Moments,
    pub revenue_difference: Moments,
    /// `d(p(K))`, the limit of the demand difference.
    pub gradient_at_bottom: f64,
    pub gradient_at_reference: f64,
    pub revenue_gradient: f64,
    /// Allowance for the `O(eps)` gap between the difference and `d(p*)`.
    pub demand_slack: f64,
    /// Allowance for the `O(eps)` gap between the difference and `r(p*)`.
    pub revenue_slack: f64,
    pub demand_ok: bool,
    pub revenue_ok: bool,
}

impl DynamicReport {
    pub fn passed(&self) -> bool {
        self.demand_ok && self.revenue_ok
    }
}

/// Pinned `O(eps)` allowances. With `rho` the curvature bound and `d0` the
/// gradient bound of `D` around `p*`, `L` the largest shading of any atom and
/// `w = eps_bar + alpha`: demand `rho w`; revenue `(2 d0 + p_max rho)(w + L)`.
fn slacks(process: &DemandProcess, design: &SwitchbackDesign, alpha: f64) -> Result<(f64, f64)> {
    let p = design.prices();
    let shading = process
        .mixture()
        .atoms()
        .iter()
        .map(|a| limit_option_value(design, p[0], a.gamma))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let w = design.epsilon_bar() + alpha.abs();
    let reg = process.measure_regularity(w + shading);
    let p_max = p[0] + alpha.max(0.0);
    Ok((reg.curvature_bound * w, (2.0 * reg.gradient_bound + p_max * reg.curvature_bound) * (w + shading)))
}

pub fn dynamic_gradient_check(
    process: &DemandProcess,
    design: &SwitchbackDesign,
    belief: PostExperimentBelief,
    alpha: f64,
    replications: usize,
    seed: u64,
    horizon: HorizonMode,
) -> Result<DynamicReport> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(Error::Domain("price shift must be nonzero".into()));
    }
    let p_star = design.reference_price();
    let shifted_design = design.shifted(alpha)?;
    let shifted_process = process.clone().with_reference_price(p_star + alpha)?;
    let base = Market::new(process, design, belief)?;
    let moved = Market::new(&shifted_process, &shifted_design, belief)?;
    let a = replicate(&base, horizon, seed, &[], replications, |t| (t.average_total_sales(), t.average_revenue()));
    let b = replicate(&moved, horizon, seed, &[], replications, |t| (t.average_total_sales(), t.average_revenue()));
    let demand: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (y.0 - x.0) / alpha).collect();
    let revenue: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (y.1 - x.1) / alpha).collect();
    let demand_difference = Moments::from_slice(&demand);
    let revenue_difference = Moments::from_slice(&revenue);
    let gradient_at_bottom = process.demand_gradient(design.prices()[design.levels() - 1])?;
    let gradient_at_reference = process.demand_gradient(p_star)?;
    let (_, revenue_gradient) = process.revenue_and_gradient(p_star)?;
    let (demand_slack, revenue_slack) = slacks(process, design, alpha)?;
    let demand_ok = (demand_difference.mean - gradient_at_reference).abs()
        <= 3.0 * demand_difference.se() + demand_slack + ROUNDING_TOL;
    let revenue_ok = (revenue_difference.mean - revenue_gradient).abs()
        <= 3.0 * revenue_difference.se() + revenue_slack + ROUNDING_TOL;
    Ok(DynamicReport {
        alpha,
        demand_difference,
        revenue_difference,
        gradient_at_bottom,
        gradient_at_reference,
        revenue_gradient,
        demand_slack,
        revenue_slack,
        demand_ok,
        revenue_ok,
    })
}
