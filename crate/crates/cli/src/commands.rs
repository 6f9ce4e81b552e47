//! Subcommand implementations. Each returns its report after writing files
//! under the configured output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use switchback::buyer::limit_option_value;
use switchback::estimators::{demand_level_estimate, revenue_gradient_estimate, EstimateReport};
use switchback::harness::acceptance::{run_acceptance, AcceptanceConfig, CriterionOutcome};
use switchback::harness::dynamic::{dynamic_gradient_check, DynamicReport};
use switchback::harness::identifiability::{nonidentifiability_pair, verify_observational_gap, GapReport};
use switchback::harness::predicted_limit;
use switchback::harness::sweep::{run_sweep, SweepResult};
use switchback::rng::derive_seed;
use switchback::stats::Moments;
use switchback::{aggregate, EstimatorId, EstimatorSuite, HorizonMode, Market, SwitchbackDesign};

use crate::config::RunConfig;
use crate::CliError;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(w)?;
    Ok(w.flush()?)
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateValue {
    pub estimator: EstimatorId,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationSummary {
    pub replication: usize,
    pub seed: u64,
    pub horizon: usize,
    pub totals: Vec<f64>,
    pub same_day: Vec<f64>,
    pub counts: Vec<usize>,
    pub empty_levels: Vec<usize>,
    pub estimates: Vec<EstimateValue>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RevenueSummary {
    pub estimator: EstimatorId,
    pub gradient_estimate: f64,
    pub demand_estimate: f64,
    /// Whether the demand level was corrected for the (known, homogeneous)
    /// shading at `p*`; otherwise it is `C(0)`.
    pub shading_corrected: bool,
    pub revenue_gradient: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub seed: u64,
    pub replications: usize,
    pub fixed_horizon: Option<usize>,
    pub estimates: Vec<EstimateReport>,
    pub revenue: Option<RevenueSummary>,
    pub warnings: Vec<String>,
    pub runs: Vec<ReplicationSummary>,
}

/// Runs `run.replications` experiments. Replication `j` uses seed
/// `derive_seed(run.seed, [j])` and writes `traces/trace_<j>.csv`.
pub fn cmd_simulate(config: &RunConfig) -> Result<SimulationSummary, CliError> {
    let (process, design) = config.validated()?;
    let estimators = config.estimators(design.levels())?;
    let market = Market::new(&process, &design, config.belief())?;
    let suite = EstimatorSuite::default();
    let out = &config.run.out;
    let trace_dir = out.join("traces");
    fs::create_dir_all(&trace_dir)?;

    let mut runs = Vec::with_capacity(config.run.replications);
    let mut warnings = Vec::new();
    let mut aggs = Vec::with_capacity(config.run.replications);
    for j in 0..config.run.replications {
        let seed = derive_seed(config.run.seed, &[j as u64]);
        let trace = market.run(seed, config.horizon());
        trace.check_invariants()?;
        trace.write_csv(BufWriter::new(File::create(trace_dir.join(format!("trace_{j:04}.csv")))?))?;
        let agg = aggregate(&trace);
        let empty = agg.empty_levels();
        if !empty.is_empty() {
            warnings.push(format!("replication {j}: price levels {empty:?} never posted; their aggregates are 0"));
        }
        let estimates = estimators
            .iter()
            .map(|&id| Ok(EstimateValue { estimator: id, value: suite.apply(id, &agg, eps_of(&design))?.value }))
            .collect::<Result<Vec<_>, CliError>>()?;
        runs.push(ReplicationSummary {
            replication: j,
            seed,
            horizon: trace.horizon,
            totals: agg.totals().to_vec(),
            same_day: agg.same_days().to_vec(),
            counts: agg.counts().to_vec(),
            empty_levels: empty,
            estimates,
        });
        aggs.push(agg);
    }

    let estimates: Vec<EstimateReport> = estimators
        .iter()
        .enumerate()
        .map(|(k, &id)| {
            let xs: Vec<f64> = runs.iter().map(|r| r.estimates[k].value).collect();
            let m = Moments::from_slice(&xs);
            EstimateReport {
                estimator: id,
                inputs: id.inputs(),
                mean: m.mean,
                se: m.se(),
                replications: m.n,
                predicted: predicted_limit(&process, &design, id),
            }
        })
        .collect();

    let revenue = estimates.iter().find(|r| r.estimator == EstimatorId::ThreePriceUnknown).map(|r| {
        let p_star = design.reference_price();
        let shading = process.homogeneous_gamma().and_then(|g| limit_option_value(&design, p_star, g).ok());
        let levels: Vec<f64> = aggs.iter().map(|a| demand_level_estimate(a, r.mean, shading)).collect();
        let demand = Moments::from_slice(&levels).mean;
        RevenueSummary {
            estimator: r.estimator,
            gradient_estimate: r.mean,
            demand_estimate: demand,
            shading_corrected: shading.is_some(),
            revenue_gradient: revenue_gradient_estimate(r.mean, demand, p_star),
        }
    });

    let summary = SimulationSummary {
        seed: config.run.seed,
        replications: config.run.replications,
        fixed_horizon: config.run.fixed_horizon,
        estimates,
        revenue,
        warnings,
        runs,
    };
    write_json(&out.join("summary.json"), &summary)?;
    for r in &summary.estimates {
        println!("{:<20} mean {:>10.5}  se {:.5}  n {}", r.estimator.name(), r.mean, r.se, r.replications);
    }
    Ok(summary)
}

/// Discount step of a ladder: the common spacing, or the first gap.
fn eps_of(design: &SwitchbackDesign) -> f64 {
    design.spacing().unwrap_or(design.prices()[0] - design.prices()[1])
}

#[derive(Debug, Clone, Serialize)]
struct SweepSummary<'a> {
    passed: bool,
    #[serde(flatten)]
    result: &'a SweepResult,
}

/// Writes `sweep.csv` and `sweep.json`.
pub fn cmd_sweep(config: &RunConfig) -> Result<SweepResult, CliError> {
    let spec = config.sweep_spec()?;
    let result = run_sweep(&spec, &EstimatorSuite::default())?;
    let out = &config.run.out;
    fs::create_dir_all(out)?;
    result.write_csv(BufWriter::new(File::create(out.join("sweep.csv"))?))?;
    write_json(&out.join("sweep.json"), &SweepSummary { passed: result.all_trends_pass(), result: &result })?;
    println!("{} cells written to {}", result.cells.len(), out.join("sweep.csv").display());
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub acceptance: Vec<CriterionOutcome>,
    pub observational_gap: GapReport,
    pub dynamic: DynamicReport,
}

pub fn cmd_verify(config: &RunConfig) -> Result<VerificationReport, CliError> {
    cmd_verify_with(config, &EstimatorSuite::default())
}

/// `verify` with a caller-supplied estimator suite.
pub fn cmd_verify_with(config: &RunConfig, suite: &EstimatorSuite) -> Result<VerificationReport, CliError> {
    let (process, design) = config.validated()?;
    let run = &config.run;
    let acceptance_config = AcceptanceConfig {
        seed: run.seed,
        replications: run.replications.max(2),
        fixed_horizon: run.fixed_horizon.unwrap_or(AcceptanceConfig::default().fixed_horizon),
        ..AcceptanceConfig::default()
    };
    let acceptance = run_acceptance(&acceptance_config, suite);
    for outcome in &acceptance {
        println!("{outcome}");
    }

    let v = config.verify.unwrap_or_default();
    let p_star = design.reference_price();
    let pair = nonidentifiability_pair(v.h, v.gamma2, v.q, p_star)?;
    let gap_design = SwitchbackDesign::two_price(p_star, v.eps, v.q, design.delta())?;
    let observational_gap = verify_observational_gap(
        &pair,
        &gap_design,
        run.replications.max(2),
        derive_seed(run.seed, &[101]),
        HorizonMode::Geometric,
    )?;
    println!(
        "[{}] observational gap: {:.2} se apart; gradient ratio {:.4} (predicted {:.4})",
        if observational_gap.passed { "PASS" } else { "FAIL" },
        observational_gap.same_day_z,
        observational_gap.gradient_ratio,
        observational_gap.predicted_ratio
    );

    let dynamic = dynamic_gradient_check(
        &process,
        &design,
        config.belief(),
        run.alpha,
        run.replications.max(2),
        derive_seed(run.seed, &[102]),
        config.horizon(),
    )?;
    println!(
        "[{}] ladder shift: demand {:.4} vs {:.4}; revenue {:.4} vs {:.4}",
        if dynamic.passed() { "PASS" } else { "FAIL" },
        dynamic.demand_difference.mean,
        dynamic.gradient_at_reference,
        dynamic.revenue_difference.mean,
        dynamic.revenue_gradient
    );

    let passed = acceptance.iter().all(|o| o.passed) && observational_gap.passed && dynamic.passed();
    let report = VerificationReport { passed, acceptance, observational_gap, dynamic };
    fs::create_dir_all(&run.out)?;
    write_json(&run.out.join("verification.json"), &report)?;
    Ok(report)
}
