//! The end-to-end acceptance suite: ten checks of the simulator and
//! estimators against closed-form limits.
//!
//! Each criterion draws its seeds from `derive_seed(config.seed, [id, ..])`,
//! so criteria can be run individually with identical results.

use serde::Serialize;

use super::dynamic::dynamic_gradient_check;
use super::identifiability::{nonidentifiability_pair, verify_observational_gap};
use super::replicate;
use crate::buyer::{acceptance_threshold, build_threshold_table, limit_threshold, option_value, PostExperimentBelief};
use crate::design::SwitchbackDesign;
use crate::error::{Error, Result};
use crate::estimators::{
    predicted_bias_factor, reconstruct_same_day, simplified_unknown, AggregatedSales, BiasKind, EstimatorId,
    EstimatorSuite,
};
use crate::market::{ConditionalDemandFamily, DemandProcess, PatienceAtom, PatienceMixture, TimeVariation};
use crate::rng::derive_seed;
use crate::simulator::{aggregate, HorizonMode, Market, CONSERVATION_TOL};
use crate::stats::{ols_slope, Moments};

pub const CRITERIA: usize = 10;

const P_STAR: f64 = 0.5;
const DELTA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AcceptanceConfig {
    pub seed: u64,
    /// Replications per criterion (the residual-scaling check may add more).
    pub replications: usize,
    /// Replications for the debiased-estimator criteria, whose per-replication
    /// spread is several times that of the naive estimators.
    pub debiasing_replications: usize,
    /// Horizon used by the criteria that run fixed-length experiments.
    pub fixed_horizon: usize,
    /// Upper limit on replications per step of the residual-scaling check.
    pub max_residual_replications: usize,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        AcceptanceConfig {
            seed: 20_240_601,
            replications: 200,
            debiasing_replications: 4000,
            fixed_horizon: 10_000,
            max_residual_replications: 1 << 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

pub fn criterion_name(id: usize) -> &'static str {
    match id {
        1 => "naive total-sales bias factor",
        2 => "naive same-day bias factor",
        3 => "debiased estimator, known arrivals",
        4 => "debiased estimator, unknown arrivals",
        5 => "same-day reconstruction",
        6 => "non-identifiability pair",
        7 => "linear residual in the discount step",
        8 => "ladder-shift gradients",
        9 => "structural invariants",
        10 => "vanishing post-experiment term",
        _ => "unknown criterion",
    }
}

pub fn run_acceptance(config: &AcceptanceConfig, suite: &EstimatorSuite) -> Vec<CriterionOutcome> {
    (1..=CRITERIA).map(|id| run_criterion(id, config, suite)).collect()
}

/// Runs one criterion. Errors raised while evaluating it count as failures.
pub fn run_criterion(id: usize, config: &AcceptanceConfig, suite: &EstimatorSuite) -> CriterionOutcome {
    let result = match id {
        1 => bias_factor(config, suite, BiasKind::Total),
        2 => bias_factor(config, suite, BiasKind::SameDay),
        3 => debiased_known(config, suite),
        4 => debiased_unknown(config, suite),
        5 => reconstruction(config),
        6 => identifiability(config),
        7 => residual_scaling(config, suite),
        8 => ladder_shift(config),
        9 => structural(config),
        10 => post_experiment_term(),
        _ => Err(Error::Usage(format!("no acceptance criterion {id}"))),
    };
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionOutcome { id, name: criterion_name(id), passed, detail }
}

type Check = Result<(bool, String)>;

fn uniform(lo: f64, hi: f64) -> ConditionalDemandFamily {
    ConditionalDemandFamily::UniformValues { lo, hi }
}

/// Two atoms whose values are correlated with patience: `gamma = 0.2` on
/// `U[0, 1]` and `gamma = 0.8` on `U[0.2, 1.2]`, equal weights, `d(0.5) = -1`.
pub fn heterogeneous_process() -> Result<DemandProcess> {
    let mixture = PatienceMixture::new(
        vec![PatienceAtom { gamma: 0.2, weight: 0.5 }, PatienceAtom { gamma: 0.8, weight: 0.5 }],
        PatienceMixture::DEFAULT_GAP,
    )?;
    DemandProcess::new(mixture, vec![uniform(0.0, 1.0), uniform(0.2, 1.2)], TimeVariation::Constant, P_STAR)
}

/// Homogeneous `gamma` market with truncated-logistic values of scale `0.1`,
/// centred above `p*` so that `d(p*) = -1` with nonzero curvature.
pub fn curved_process(gamma: f64) -> Result<DemandProcess> {
    const SCALE: f64 = 0.1;
    let slope = |center: f64| ConditionalDemandFamily::LogisticDemand { center, scale: SCALE }.gradient(P_STAR);
    // |d(p*)| falls monotonically as the centre moves up from p*.
    let (mut lo, mut hi) = (P_STAR, P_STAR + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid)? < -1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    DemandProcess::homogeneous(
        gamma,
        ConditionalDemandFamily::LogisticDemand { center: 0.5 * (lo + hi), scale: SCALE },
        P_STAR,
    )
}

fn within(mean: f64, target: f64, tol: f64) -> bool {
    (mean - target).abs() <= tol
}

fn values(aggs: &[AggregatedSales], suite: &EstimatorSuite, id: EstimatorId, eps: f64) -> Result<Vec<f64>> {
    aggs.iter().map(|a| suite.apply(id, a, eps).map(|e| e.value)).collect()
}

fn bias_factor(config: &AcceptanceConfig, suite: &EstimatorSuite, kind: BiasKind) -> Check {
    let (gamma, q, eps) = (0.5, 0.3, 0.01);
    let process = DemandProcess::homogeneous(gamma, uniform(0.0, 1.0), P_STAR)?;
    let design = SwitchbackDesign::two_price(P_STAR, eps, q, DELTA)?;
    let market = Market::new(&process, &design, PostExperimentBelief::Zero)?;
    let aggs =
        replicate(&market, HorizonMode::Geometric, derive_seed(config.seed, &[1]), &[], config.replications, aggregate);
    let id = match kind {
        BiasKind::Total => EstimatorId::NaiveTotal,
        BiasKind::SameDay => EstimatorId::NaiveSameDay,
    };
    let m = Moments::from_slice(&values(&aggs, suite, id, eps)?);
    let target = predicted_bias_factor(kind, gamma, q)? * process.demand_gradient(P_STAR)?;
    let tol = (3.0 * m.se()).max(0.02 * target.abs());
    Ok((
        within(m.mean, target, tol),
        format!("{id} mean {:.4} (se {:.4}) vs {target:.4}, tolerance {tol:.4}", m.mean, m.se()),
    ))
}

/// Aggregates of the heterogeneous three-price experiment shared by
/// criteria 3 to 5.
fn heterogeneous_runs(config: &AcceptanceConfig, tag: u64, replications: usize) -> Result<(Vec<AggregatedSales>, f64)> {
    let eps = 0.01;
    let process = heterogeneous_process()?;
    let design = SwitchbackDesign::three_price(P_STAR, eps, 0.25, 0.25, DELTA)?;
    let market = Market::new(&process, &design, PostExperimentBelief::Zero)?;
    let aggs = replicate(
        &market,
        HorizonMode::Fixed(config.fixed_horizon),
        derive_seed(config.seed, &[tag]),
        &[],
        replications,
        aggregate,
    );
    Ok((aggs, process.demand_gradient(P_STAR)?))
}

fn debiased_known(config: &AcceptanceConfig, suite: &EstimatorSuite) -> Check {
    let eps = 0.01;
    let (aggs, d) = heterogeneous_runs(config, 3, config.debiasing_replications)?;
    let known = Moments::from_slice(&values(&aggs, suite, EstimatorId::ThreePriceKnown, eps)?);
    let naive = Moments::from_slice(&values(&aggs, suite, EstimatorId::NaiveSameDay, eps)?);
    let tol = (3.0 * known.se()).max(d.abs() * 5.0 * eps);
    let unbiased = within(known.mean, d, tol);
    let separated = (naive.mean - d).abs() > 5.0 * naive.se();
    Ok((
        unbiased && separated,
        format!(
            "three_price_known {:.4} (se {:.4}) vs {d}, tolerance {tol:.4}; naive_same_day {:.4} deviates by {:.1} se",
            known.mean,
            known.se(),
            naive.mean,
            (naive.mean - d).abs() / naive.se()
        ),
    ))
}

fn debiased_unknown(config: &AcceptanceConfig, suite: &EstimatorSuite) -> Check {
    let eps = 0.01;
    let (aggs, d) = heterogeneous_runs(config, 4, config.debiasing_replications)?;
    let xs = values(&aggs, suite, EstimatorId::ThreePriceUnknown, eps)?;
    let mut worst = 0.0f64;
    for (a, &x) in aggs.iter().zip(&xs) {
        let closed = simplified_unknown(a, eps)?;
        let c = a.totals();
        let q = a.design().probs();
        let scale = q[2] * (1.0 + q[2] / q[1]) * (c[0] + 2.0 * c[1] + c[2]) / eps;
        worst = worst.max((x - closed).abs() / scale);
    }
    let m = Moments::from_slice(&xs);
    let tol = (3.0 * m.se()).max(d.abs() * 5.0 * eps);
    let identity = worst <= crate::estimators::IDENTITY_TOL;
    Ok((
        within(m.mean, d, tol) && identity,
        format!(
            "three_price_unknown {:.4} (se {:.4}) vs {d}, tolerance {tol:.4}; closed-form gap {worst:.1e} relative",
            m.mean,
            m.se()
        ),
    ))
}

fn reconstruction(config: &AcceptanceConfig) -> Check {
    let (aggs, _) = heterogeneous_runs(config, 5, config.replications)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for i in 0..3 {
        let diffs = aggs.iter().map(|a| Ok(reconstruct_same_day(a)?[i] - a.same_day(i))).collect::<Result<Vec<_>>>()?;
        let m = Moments::from_slice(&diffs);
        ok &= m.mean.abs() <= 3.0 * m.se();
        detail.push(format!("level {i}: {:+.2e} (se {:.2e})", m.mean, m.se()));
    }
    Ok((ok, format!("reconstructed minus true same-day sales, {}", detail.join("; "))))
}

fn identifiability(config: &AcceptanceConfig) -> Check {
    let (h, gamma2, q, eps) = (0.5, 0.5, 0.3, 0.05);
    let pair = nonidentifiability_pair(h, gamma2, q, P_STAR)?;
    let design = SwitchbackDesign::two_price(P_STAR, eps, q, DELTA)?;
    let r = verify_observational_gap(
        &pair,
        &design,
        config.replications,
        derive_seed(config.seed, &[6]),
        HorizonMode::Geometric,
    )?;
    let ratio_ok = (r.gradient_ratio - 1.3).abs() <= 1e-12;
    Ok((
        r.passed && ratio_ok,
        format!(
            "N(0)-N(1): {:.5} vs {:.5} ({:.2} se); C(0)-C(1): {:.5} vs {:.5} ({:.2} se); gradient ratio {:.12}",
            r.first.same_day_difference.mean,
            r.second.same_day_difference.mean,
            r.same_day_z,
            r.first.total_difference.mean,
            r.second.total_difference.mean,
            r.total_z,
            r.gradient_ratio
        ),
    ))
}

/// Mean error of `three_price_known` at one step, with replications doubled
/// until the standard error is at most a fifth of the error.
fn residual_at(
    config: &AcceptanceConfig,
    suite: &EstimatorSuite,
    process: &DemandProcess,
    eps: f64,
) -> Result<(Moments, bool)> {
    let d = process.demand_gradient(P_STAR)?;
    let design = SwitchbackDesign::three_price(P_STAR, eps, 0.25, 0.25, DELTA)?;
    let market = Market::new(process, &design, PostExperimentBelief::Zero)?;
    let seed = derive_seed(config.seed, &[7, eps.to_bits()]);
    let horizon = HorizonMode::Fixed(config.fixed_horizon);
    let mut xs: Vec<f64> = Vec::new();
    let mut batch = config.replications.max(2);
    loop {
        let start = xs.len();
        let aggs = replicate(&market, horizon, seed, &[start as u64], batch, aggregate);
        xs.extend(values(&aggs, suite, EstimatorId::ThreePriceKnown, eps)?.into_iter().map(|x| x - d));
        let m = Moments::from_slice(&xs);
        if m.se() <= 0.2 * m.mean.abs() {
            return Ok((m, true));
        }
        if xs.len() >= config.max_residual_replications {
            return Ok((m, false));
        }
        batch = xs.len().min(config.max_residual_replications - xs.len());
    }
}

fn residual_scaling(config: &AcceptanceConfig, suite: &EstimatorSuite) -> Check {
    let process = curved_process(0.5)?;
    let steps = [0.04, 0.02, 0.01];
    let mut log_eps = Vec::new();
    let mut log_err = Vec::new();
    let mut precise = true;
    let mut detail = Vec::new();
    for eps in steps {
        let (m, ok) = residual_at(config, suite, &process, eps)?;
        precise &= ok;
        log_eps.push(f64::ln(eps));
        log_err.push(m.mean.abs().ln());
        detail.push(format!("eps {eps}: {:+.4} (se {:.4}, n {})", m.mean, m.se(), m.n));
    }
    let slope = ols_slope(&log_eps, &log_err);
    Ok((precise && (slope - 1.0).abs() <= 0.3, format!("log-log slope {slope:.3}; {}", detail.join("; "))))
}

fn ladder_shift(config: &AcceptanceConfig) -> Check {
    let process = DemandProcess::homogeneous(0.5, uniform(0.0, 1.0), P_STAR)?;
    let design = SwitchbackDesign::three_price(P_STAR, 0.02, 0.25, 0.25, DELTA)?;
    let r = dynamic_gradient_check(
        &process,
        &design,
        PostExperimentBelief::Zero,
        0.01,
        config.replications,
        derive_seed(config.seed, &[8]),
        HorizonMode::Geometric,
    )?;
    Ok((
        r.passed(),
        format!(
            "demand {:.4} (se {:.1e}) vs d(p*) {}, slack {:.4}; revenue {:.4} (se {:.1e}) vs r(p*) {}, slack {:.4}",
            r.demand_difference.mean,
            r.demand_difference.se(),
            r.gradient_at_reference,
            r.demand_slack,
            r.revenue_difference.mean,
            r.revenue_difference.se(),
            r.revenue_gradient,
            r.revenue_slack
        ),
    ))
}

fn structural(config: &AcceptanceConfig) -> Check {
    let setups = [
        (
            DemandProcess::homogeneous(0.5, uniform(0.0, 1.0), P_STAR)?,
            SwitchbackDesign::two_price(P_STAR, 0.01, 0.3, DELTA)?,
        ),
        (heterogeneous_process()?, SwitchbackDesign::three_price(P_STAR, 0.01, 0.25, 0.25, DELTA)?),
        (curved_process(0.5)?, SwitchbackDesign::three_price(P_STAR, 0.04, 0.2, 0.3, 1e-3)?),
    ];
    let mut periods = 0usize;
    let mut worst = 0.0f64;
    for (s, (process, design)) in setups.iter().enumerate() {
        for belief in [PostExperimentBelief::Zero, PostExperimentBelief::ReferenceForever] {
            let table = build_threshold_table(design, process.mixture(), design.delta(), belief)?;
            table.check_invariants(design)?;
            let bottom = design.prices()[design.levels() - 1];
            for atom in process.mixture().atoms() {
                if option_value(design, bottom, atom.gamma, design.delta())? != 0.0 {
                    return Ok((false, format!("nonzero shading at the bottom price (setup {s})")));
                }
            }
            if belief == PostExperimentBelief::Zero && table.row(0).last() != Some(&bottom) {
                return Ok((false, format!("bottom threshold differs from the bottom price (setup {s})")));
            }
            let market = Market::new(process, design, belief)?;
            for j in 0..5u64 {
                let trace = market.run(derive_seed(config.seed, &[9, s as u64, j]), HorizonMode::Geometric);
                trace.check_invariants()?;
                if let Some(r) = trace.records.iter().find(|r| r.price_index == 0 && r.total_sales != r.same_day_sales)
                {
                    return Ok((false, format!("C != N at the top price in period {}", r.t)));
                }
                periods += trace.horizon;
                worst = worst.max(trace.max_conservation_error);
            }
        }
    }
    Ok((worst <= CONSERVATION_TOL, format!("{periods} periods checked; worst relative mass imbalance {worst:.1e}")))
}

fn post_experiment_term() -> Check {
    let design = SwitchbackDesign::three_price(P_STAR, 0.05, 0.25, 0.25, DELTA)?;
    let mut ratios = Vec::new();
    for gamma in [0.2, 0.5, 0.8] {
        for level in 0..2 {
            let limit = limit_threshold(&design, level, gamma)?;
            let gap = |delta: f64| -> Result<f64> {
                Ok((acceptance_threshold(&design, level, gamma, delta, PostExperimentBelief::ReferenceForever)?
                    - limit)
                    .abs())
            };
            ratios.push(gap(1e-3)? / gap(1e-4)?);
        }
    }
    let ok = ratios.iter().all(|r| (5.0..=20.0).contains(r));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok((ok, format!("gap ratios at delta 1e-3 / 1e-4: {}", shown.join(", "))))
}
