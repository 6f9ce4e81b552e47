//! Estimator sweeps over grids of ending probabilities and discount steps.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{predicted_limit, replicate};
use crate::buyer::PostExperimentBelief;
use crate::design::SwitchbackDesign;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorId, EstimatorSuite};
use crate::market::DemandProcess;
use crate::rng::float_coord;
use crate::simulator::{aggregate, HorizonMode, Market};

/// Design family instantiated at each `(delta, eps)` cell around the
/// process's reference price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignTemplate {
    TwoPrice { q: f64 },
    ThreePrice { q1: f64, q2: f64 },
}

impl DesignTemplate {
    pub fn build(&self, p_star: f64, eps: f64, delta: f64) -> Result<SwitchbackDesign> {
        match *self {
            DesignTemplate::TwoPrice { q } => SwitchbackDesign::two_price(p_star, eps, q, delta),
            DesignTemplate::ThreePrice { q1, q2 } => SwitchbackDesign::three_price(p_star, eps, q1, q2, delta),
        }
    }

    pub fn levels(&self) -> usize {
        match self {
            DesignTemplate::TwoPrice { .. } => 2,
            DesignTemplate::ThreePrice { .. } => 3,
        }
    }
}

/// How long each simulated experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonPolicy {
    /// Geometric with the cell's `delta`.
    Geometric,
    /// Fixed at `ceil(1 / delta)`, the geometric mean.
    MeanMatched,
    /// Fixed at the given length in every cell.
    Fixed(usize),
}

impl HorizonPolicy {
    pub fn mode(&self, delta: f64) -> HorizonMode {
        match *self {
            HorizonPolicy::Geometric => HorizonMode::Geometric,
            HorizonPolicy::MeanMatched => HorizonMode::Fixed((1.0 / delta).ceil() as usize),
            HorizonPolicy::Fixed(t) => HorizonMode::Fixed(t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub process: DemandProcess,
    pub template: DesignTemplate,
    pub belief: PostExperimentBelief,
    pub deltas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub replications: usize,
    pub estimators: Vec<EstimatorId>,
    pub seed: u64,
    pub horizon: HorizonPolicy,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.deltas.is_empty() || self.epsilons.is_empty() {
            return Err(Error::Config("sweep grids must be nonempty".into()));
        }
        if let Some(d) = self.deltas.iter().find(|&&d| !(d > 0.0 && d < 1.0)) {
            return Err(Error::Config(format!("ending probability {d} outside (0, 1)")));
        }
        if let Some(e) = self.epsilons.iter().find(|&&e| !(e > 0.0)) {
            return Err(Error::Config(format!("discount step {e} must be positive")));
        }
        if self.replications < 2 {
            return Err(Error::Config("a sweep needs at least 2 replications per cell".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        if let Some(id) = self.estimators.iter().find(|id| id.levels() > self.template.levels()) {
            return Err(Error::Config(format!("{id} needs a three-price design")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub delta: f64,
    pub eps: f64,
    pub estimator: EstimatorId,
    pub mean: f64,
    pub se: f64,
    pub replications: u64,
    pub predicted: Option<f64>,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    /// Replications in which some price level never occurred.
    pub flagged_replications: usize,
}

/// Convergence summary for one estimator at one discount step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendCheck {
    pub estimator: EstimatorId,
    pub eps: f64,
    /// Errors do not grow (beyond two combined standard errors) as `delta` decreases.
    pub monotone_in_delta: bool,
    /// Error at the smallest `delta` within `max(3 SE, 2% of the limit)`.
    pub final_cell_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub trends: Vec<TrendCheck>,
}

pub fn run_sweep(spec: &SweepSpec, suite: &EstimatorSuite) -> Result<SweepResult> {
    spec.validate()?;
    let p_star = spec.process.reference_price();
    let mut cells = Vec::new();
    for &delta in &spec.deltas {
        for &eps in &spec.epsilons {
            let design = spec.template.build(p_star, eps, delta)?;
            let market = Market::new(&spec.process, &design, spec.belief)?;
            let aggs = replicate(
                &market,
                spec.horizon.mode(delta),
                spec.seed,
                &[float_coord(delta), float_coord(eps)],
                spec.replications,
                aggregate,
            );
            let flagged = aggs.iter().filter(|a| !a.empty_levels().is_empty()).count();
            for &id in &spec.estimators {
                let m = super::estimator_moments(&aggs, suite, id, eps)?;
                let predicted = predicted_limit(&spec.process, &design, id);
                let abs_err = predicted.map(|p| (m.mean - p).abs());
                cells.push(SweepCell {
                    delta,
                    eps,
                    estimator: id,
                    mean: m.mean,
                    se: m.se(),
                    replications: m.n,
                    predicted,
                    abs_err,
                    rel_err: predicted.zip(abs_err).map(|(p, e)| if p != 0.0 { e / p.abs() } else { f64::NAN }),
                    flagged_replications: flagged,
                });
            }
        }
    }
    let trends = trend_checks(&cells, &spec.estimators, &spec.epsilons);
    Ok(SweepResult { cells, trends })
}

fn trend_checks(cells: &[SweepCell], estimators: &[EstimatorId], epsilons: &[f64]) -> Vec<TrendCheck> {
    let mut out = Vec::new();
    for &id in estimators {
        for &eps in epsilons {
            let mut column: Vec<&SweepCell> =
                cells.iter().filter(|c| c.estimator == id && c.eps == eps && c.abs_err.is_some()).collect();
            if column.is_empty() {
                continue;
            }
            column.sort_by(|a, b| b.delta.total_cmp(&a.delta));
            let monotone = column.windows(2).all(|w| {
                let slack = 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
                w[1].abs_err.unwrap() <= w[0].abs_err.unwrap() + slack
            });
            let last = column[column.len() - 1];
            let tol = (3.0 * last.se).max(0.02 * last.predicted.unwrap().abs());
            out.push(TrendCheck {
                estimator: id,
                eps,
                monotone_in_delta: monotone,
                final_cell_ok: last.abs_err.unwrap() <= tol,
            });
        }
    }
    out
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "delta,eps,estimator,mean,se,predicted,abs_err")?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                c.delta,
                c.eps,
                c.estimator,
                c.mean,
                c.se,
                opt(c.predicted),
                opt(c.abs_err)
            )?;
        }
        Ok(())
    }

    pub fn all_trends_pass(&self) -> bool {
        self.trends.iter().all(|t| t.monotone_in_delta && t.final_cell_ok)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::ConditionalDemandFamily;

    fn spec(gamma: f64, reps: usize) -> SweepSpec {
        SweepSpec {
            process: DemandProcess::homogeneous(
                gamma,
                ConditionalDemandFamily::UniformValues { lo: 0.0, hi: 1.0 },
                0.5,
            )
            .unwrap(),
            template: DesignTemplate::ThreePrice { q1: 0.25, q2: 0.25 },
            belief: PostExperimentBelief::Zero,
            deltas: vec![1e-2, 1e-3],
            epsilons: vec![0.04, 0.02],
            replications: reps,
            estimators: EstimatorId::ALL.to_vec(),
            seed: 17,
            horizon: HorizonPolicy::MeanMatched,
        }
    }

    #[test]
    fn grid_shape_and_csv() {
        let r = run_sweep(&spec(0.5, 8), &EstimatorSuite::default()).unwrap();
        assert_eq!(r.cells.len(), 2 * 2 * 4);
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 17);
        // naive_total has no closed-form limit on a three-price ladder
        assert!(text.lines().any(|l| l.contains("naive_total") && l.ends_with(",,")));
    }

    #[test]
    fn myopic_cells_agree_with_the_gradient() {
        let r = run_sweep(&spec(0.0, 40), &EstimatorSuite::default()).unwrap();
        for c in r.cells.iter().filter(|c| c.estimator != EstimatorId::NaiveTotal) {
            let err = c.abs_err.unwrap();
            assert!(err <= 3.0 * c.se + 1e-9, "{c:?}");
        }
    }

    #[test]
    fn reruns_are_identical() {
        let s = spec(0.5, 6);
        let a = run_sweep(&s, &EstimatorSuite::default()).unwrap();
        let b = run_sweep(&s, &EstimatorSuite::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(0.5, 1);
        assert!(matches!(run_sweep(&s, &EstimatorSuite::default()), Err(Error::Config(_))));
        s.replications = 4;
        s.template = DesignTemplate::TwoPrice { q: 0.3 };
        assert!(matches!(run_sweep(&s, &EstimatorSuite::default()), Err(Error::Config(_))));
        s.estimators = vec![EstimatorId::NaiveTotal];
        s.deltas.clear();
        assert!(matches!(run_sweep(&s, &EstimatorSuite::default()), Err(Error::Config(_))));
    }
}
