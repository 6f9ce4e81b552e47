//! Continuum-market switchback simulation.
//!
//! Buyers are never sampled. For each patience atom the simulator tracks the
//! mass of waiting buyers in the value intervals `[v*(i+1), v*(i))` cut out by
//! the threshold table, so the only randomness is the price sequence, the
//! horizon and the demand multiplier.
//!
//! Random draws happen in a fixed order: the horizon first (geometric mode
//! only), then, for every period, the price level followed by the multiplier.

use std::io::{self, Write};

use serde::Serialize;

use crate::buyer::{build_threshold_table, PostExperimentBelief, ThresholdTable};
use crate::design::SwitchbackDesign;
use crate::error::{Error, Result};
use crate::estimators::{AggregatedSales, Normalization};
use crate::market::{DemandProcess, MultiplierStream};
use crate::rng::{rng_from_seed, SimRng};

/// Relative tolerance of the per-atom mass balance.
pub const CONSERVATION_TOL: f64 = 1e-12;

const REFERENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HorizonMode {
    /// `T` drawn from the design's geometric ending law.
    Geometric,
    /// Exactly this many periods; buyers still discount with the design's `delta`.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodRecord {
    pub t: usize,
    pub price_index: usize,
    pub price: f64,
    pub same_day_sales: f64,
    pub delayed_sales: f64,
    pub total_sales: f64,
}

/// Cumulative mass accounting for one patience atom.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct AtomBalance {
    /// Arrivals with value at or above the bottom threshold.
    pub eligible_arrivals: f64,
    pub purchases: f64,
    /// Mass still waiting when the experiment ended (not counted as sales).
    pub pool: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentTrace {
    pub records: Vec<PeriodRecord>,
    pub horizon: usize,
    pub design: SwitchbackDesign,
    pub seed: Option<u64>,
    pub balances: Vec<AtomBalance>,
    /// Largest relative mass-balance violation seen over every prefix.
    pub max_conservation_error: f64,
}

/// Per-atom masses precomputed from the threshold table.
#[derive(Debug, Clone)]
struct AtomTables {
    /// `same_day[j]`: arriving mass buying at level `j`, before the multiplier.
    same_day: Vec<f64>,
    /// `interval[i]`: arriving mass in `[v*(i+1), v*(i))`, before the multiplier.
    interval: Vec<f64>,
}

/// A demand process and design bound together with their threshold table.
#[derive(Debug, Clone)]
pub struct Market {
    process: DemandProcess,
    design: SwitchbackDesign,
    table: ThresholdTable,
    atoms: Vec<AtomTables>,
}

impl Market {
    pub fn new(process: &DemandProcess, design: &SwitchbackDesign, belief: PostExperimentBelief) -> Result<Self> {
        let (p_process, p_design) = (process.reference_price(), design.reference_price());
        if (p_process - p_design).abs() > REFERENCE_TOL * p_process.abs().max(1.0) {
            return Err(Error::Config(format!(
                "reference price mismatch: demand process has p* = {p_process}, design has p* = {p_design}"
            )));
        }
        let table = build_threshold_table(design, process.mixture(), design.delta(), belief)?;
        let levels = design.levels();
        let atoms = (0..table.atoms())
            .map(|k| {
                let d: Vec<f64> = table.row(k).iter().map(|&v| process.atom_demand(k, v)).collect();
                let interval = (0..levels - 1).map(|i| (d[i + 1] - d[i]).max(0.0)).collect();
                AtomTables { same_day: d, interval }
            })
            .collect();
        Ok(Market { process: process.clone(), design: design.clone(), table, atoms })
    }

    pub fn process(&self) -> &DemandProcess {
        &self.process
    }

    pub fn design(&self) -> &SwitchbackDesign {
        &self.design
    }

    pub fn thresholds(&self) -> &ThresholdTable {
        &self.table
    }

    /// Random experiment.
    pub fn run(&self, seed: u64, horizon: HorizonMode) -> ExperimentTrace {
        let mut rng = rng_from_seed(seed);
        let t_max = match horizon {
            HorizonMode::Geometric => self.design.draw_horizon(&mut rng),
            HorizonMode::Fixed(t) => t,
        };
        let design = &self.design;
        let mut trace = self.simulate(t_max, &mut rng, |rng| design.draw_price(rng));
        trace.seed = Some(seed);
        trace
    }

    /// Experiment with a prescribed price sequence; the multiplier stream is
    /// seeded with `seed`.
    pub fn run_forced(&self, levels: &[usize], seed: u64) -> Result<ExperimentTrace> {
        if let Some(&bad) = levels.iter().find(|&&i| i >= self.design.levels()) {
            return Err(Error::Domain(format!("forced price level {bad} out of range")));
        }
        let mut rng = rng_from_seed(seed);
        let mut it = levels.iter().copied();
        let mut trace = self.simulate(levels.len(), &mut rng, |_| it.next().expect("sequence length is the horizon"));
        trace.seed = Some(seed);
        Ok(trace)
    }

    fn simulate(
        &self,
        t_max: usize,
        rng: &mut SimRng,
        mut next_level: impl FnMut(&mut SimRng) -> usize,
    ) -> ExperimentTrace {
        let levels = self.design.levels();
        let mut pools = vec![vec![0.0; levels - 1]; self.atoms.len()];
        let mut balances = vec![AtomBalance::default(); self.atoms.len()];
        let mut max_err = 0.0f64;
        let mut records = Vec::with_capacity(t_max);
        let mut multipliers: MultiplierStream = self.process.variation().stream();

        for t in 0..t_max {
            let j = next_level(rng);
            let m = multipliers.next(rng);
            let mut same_day = 0.0;
            let mut delayed = 0.0;
            for ((tables, pool), bal) in self.atoms.iter().zip(&mut pools).zip(&mut balances) {
                let released: f64 = pool[..j].iter().sum();
                pool[..j].iter_mut().for_each(|w| *w = 0.0);
                let fresh = m * tables.same_day[j];
                let mut waiting = 0.0;
                for (w, &add) in pool[j..].iter_mut().zip(&tables.interval[j..]) {
                    *w += m * add;
                    waiting += m * add;
                }
                same_day += fresh;
                delayed += released;
                bal.eligible_arrivals += fresh + waiting;
                bal.purchases += fresh + released;
                let pooled: f64 = pool.iter().sum();
                let err = (bal.eligible_arrivals - bal.purchases - pooled).abs() / bal.eligible_arrivals.max(1.0);
                max_err = max_err.max(err);
            }
            records.push(PeriodRecord {
                t,
                price_index: j,
                price: self.design.prices()[j],
                same_day_sales: same_day,
                delayed_sales: delayed,
                total_sales: same_day + delayed,
            });
        }
        for (bal, pool) in balances.iter_mut().zip(&pools) {
            bal.pool = pool.iter().sum();
        }
        ExperimentTrace {
            records,
            horizon: t_max,
            design: self.design.clone(),
            seed: None,
            balances,
            max_conservation_error: max_err,
        }
    }
}

pub fn run_experiment(
    process: &DemandProcess,
    design: &SwitchbackDesign,
    belief: PostExperimentBelief,
    seed: u64,
    horizon: HorizonMode,
) -> Result<ExperimentTrace> {
    Ok(Market::new(process, design, belief)?.run(seed, horizon))
}

impl ExperimentTrace {
    /// `(1/T) sum C_t`.
    pub fn average_total_sales(&self) -> f64 {
        self.records.iter().map(|r| r.total_sales).sum::<f64>() / self.horizon.max(1) as f64
    }

    /// `(1/T) sum C_t p_t`.
    pub fn average_revenue(&self) -> f64 {
        self.records.iter().map(|r| r.total_sales * r.price).sum::<f64>() / self.horizon.max(1) as f64
    }

    /// Structural checks that must hold on every run: top-price periods have no
    /// delayed sales, `N_t <= C_t`, and mass balance per atom.
    pub fn check_invariants(&self) -> Result<()> {
        for r in &self.records {
            if r.price_index == 0 && r.delayed_sales != 0.0 {
                return Err(Error::InternalConsistency(format!(
                    "period {}: delayed sales {} at the top price",
                    r.t, r.delayed_sales
                )));
            }
            if r.same_day_sales < 0.0 || r.delayed_sales < 0.0 {
                return Err(Error::InternalConsistency(format!("period {}: negative sales", r.t)));
            }
        }
        if self.max_conservation_error > CONSERVATION_TOL {
            return Err(Error::InternalConsistency(format!(
                "mass balance violated by {:e}",
                self.max_conservation_error
            )));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,price_index,price,same_day_sales,delayed_sales,total_sales")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.t, r.price_index, r.price, r.same_day_sales, r.delayed_sales, r.total_sales
            )?;
        }
        Ok(())
    }
}

/// Level aggregates with the `q_i T` normalization.
pub fn aggregate(trace: &ExperimentTrace) -> AggregatedSales {
    aggregate_with(trace, Normalization::Design)
}

pub fn aggregate_with(trace: &ExperimentTrace, normalization: Normalization) -> AggregatedSales {
    let levels = trace.design.levels();
    let mut totals = vec![0.0; levels];
    let mut same_day = vec![0.0; levels];
    let mut counts = vec![0usize; levels];
    for r in &trace.records {
        totals[r.price_index] += r.total_sales;
        same_day[r.price_index] += r.same_day_sales;
        counts[r.price_index] += 1;
    }
    for i in 0..levels {
        let denom = match normalization {
            Normalization::Design => trace.design.probs()[i] * trace.horizon as f64,
            Normalization::RealizedCounts => counts[i] as f64,
        };
        if denom > 0.0 {
            totals[i] /= denom;
            same_day[i] /= denom;
        }
    }
    AggregatedSales::new(trace.design.clone(), totals, same_day, counts, trace.horizon, normalization)
        .expect("aggregates match the design")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{ConditionalDemandFamily, PatienceAtom, PatienceMixture, TimeVariation};

    fn uniform() -> ConditionalDemandFamily {
        ConditionalDemandFamily::UniformValues { lo: 0.0, hi: 1.0 }
    }

    fn market(gamma: f64, design: &SwitchbackDesign) -> Market {
        let process = DemandProcess::homogeneous(gamma, uniform(), 0.5).unwrap();
        Market::new(&process, design, PostExperimentBelief::Zero).unwrap()
    }

    #[test]
    fn forced_sequence_myopic() {
        let d = SwitchbackDesign::two_price(0.5, 0.1, 0.3, 1e-4).unwrap();
        let tr = market(0.0, &d).run_forced(&[0, 1, 1], 0).unwrap();
        let got: Vec<(f64, f64)> = tr.records.iter().map(|r| (r.same_day_sales, r.total_sales)).collect();
        let want = [(0.5, 0.5), (0.6, 0.7), (0.6, 0.6)];
        for (g, w) in got.iter().zip(want) {
            assert!((g.0 - w.0).abs() < 1e-12 && (g.1 - w.1).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn patient_buyers_shade_the_top_price() {
        let d = SwitchbackDesign::two_price(0.5, 0.1, 0.3, 1e-4).unwrap();
        let tr = market(0.5, &d).run_forced(&[0], 0).unwrap();
        // threshold 0.5 + 0.03 (1 - 1e-4) / (1 - 0.5 (1 - 1e-4)) / (0.5 / 0.5) ~ 0.53
        assert!((tr.records[0].same_day_sales - 0.47).abs() < 1e-5);
        assert_eq!(tr.records[0].same_day_sales, tr.records[0].total_sales);
    }

    #[test]
    fn top_price_never_releases() {
        let d = SwitchbackDesign::three_price(0.5, 0.05, 0.25, 0.25, 1e-3).unwrap();
        for gamma in [0.0, 0.5, 0.9] {
            let tr = market(gamma, &d).run_forced(&[0; 50], 1).unwrap();
            assert!(tr.records.iter().all(|r| r.delayed_sales == 0.0));
            tr.check_invariants().unwrap();
        }
    }

    #[test]
    fn bottom_price_drains_the_pool() {
        let d = SwitchbackDesign::three_price(0.5, 0.05, 0.25, 0.25, 1e-3).unwrap();
        let tr = market(0.6, &d).run_forced(&[0, 1, 0, 2, 2, 1], 3).unwrap();
        assert!(tr.records[3].delayed_sales > 0.0);
        assert_eq!(tr.records[4].same_day_sales, tr.records[4].total_sales);
        assert!(tr.balances[0].pool > 0.0);
    }

    #[test]
    fn conservation_with_mixture_and_noise() {
        let d = SwitchbackDesign::three_price(0.5, 0.05, 0.2, 0.3, 1e-3).unwrap();
        let mix = PatienceMixture::new(
            vec![
                PatienceAtom { gamma: 0.1, weight: 0.3 },
                PatienceAtom { gamma: 0.5, weight: 0.3 },
                PatienceAtom { gamma: 0.9, weight: 0.4 },
            ],
            0.05,
        )
        .unwrap();
        let fams = vec![uniform(), ConditionalDemandFamily::UniformValues { lo: 0.2, hi: 1.2 }, uniform()];
        let process =
            DemandProcess::new(mix, fams, TimeVariation::Ar1Scale { persistence: 0.8, innovation_bound: 0.05 }, 0.5)
                .unwrap();
        let tr = run_experiment(&process, &d, PostExperimentBelief::ReferenceForever, 11, HorizonMode::Fixed(20_000))
            .unwrap();
        tr.check_invariants().unwrap();
        for b in &tr.balances {
            let err = (b.eligible_arrivals - b.purchases - b.pool).abs();
            assert!(err <= CONSERVATION_TOL * b.eligible_arrivals, "{b:?}");
        }
    }

    #[test]
    fn seeds_reproduce_traces() {
        let d = SwitchbackDesign::two_price(0.5, 0.1, 0.3, 1e-2).unwrap();
        let m = market(0.5, &d);
        let a = m.run(9, HorizonMode::Geometric);
        let b = m.run(9, HorizonMode::Geometric);
        let c = m.run(10, HorizonMode::Geometric);
        assert_eq!(a.records, b.records);
        assert_ne!(a.records, c.records);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert!(String::from_utf8(x)
            .unwrap()
            .starts_with("t,price_index,price,same_day_sales,delayed_sales,total_sales\n"));
    }

    #[test]
    fn mismatched_reference_price() {
        let d = SwitchbackDesign::two_price(0.6, 0.1, 0.3, 1e-2).unwrap();
        let process = DemandProcess::homogeneous(0.5, uniform(), 0.5).unwrap();
        let err = Market::new(&process, &d, PostExperimentBelief::Zero).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0.5") && msg.contains("0.6"), "{msg}");
    }

    #[test]
    fn aggregate_arithmetic() {
        let d = SwitchbackDesign::new(vec![1.0, 0.5], vec![0.7, 0.3], 0.1, 1.0).unwrap();
        let records = [(0, 0.5), (1, 0.7), (1, 0.6)]
            .iter()
            .enumerate()
            .map(|(t, &(i, c))| PeriodRecord {
                t,
                price_index: i,
                price: d.prices()[i],
                same_day_sales: c,
                delayed_sales: 0.0,
                total_sales: c,
            })
            .collect();
        let tr = ExperimentTrace {
            records,
            horizon: 3,
            design: d,
            seed: None,
            balances: vec![],
            max_conservation_error: 0.0,
        };
        let agg = aggregate(&tr);
        assert!((agg.total(0) - 0.5 / 2.1).abs() < 1e-12);
        assert!((agg.total(1) - 1.3 / 0.9).abs() < 1e-12);
        let real = aggregate_with(&tr, Normalization::RealizedCounts);
        assert!((real.total(1) - 0.65).abs() < 1e-12);
    }

    #[test]
    fn single_level_trace_flags_empty_levels() {
        let d = SwitchbackDesign::two_price(0.5, 0.1, 0.3, 1e-2).unwrap();
        let tr = market(0.0, &d).run_forced(&[0; 10], 0).unwrap();
        let agg = aggregate(&tr);
        assert_eq!(agg.total(1), 0.0);
        assert_eq!(agg.empty_levels(), vec![1]);
    }

    #[test]
    fn myopic_top_level_converges_to_static_demand() {
        let d = SwitchbackDesign::two_price(0.5, 0.1, 0.3, 1e-4).unwrap();
        let m = market(0.0, &d);
        let xs: Vec<f64> = (0..200).map(|s| aggregate(&m.run(s, HorizonMode::Geometric)).total(0)).collect();
        let mom = crate::stats::Moments::from_slice(&xs);
        assert!((mom.mean - 0.5).abs() < 3.0 * mom.se() + 1e-9, "{} +- {}", mom.mean, mom.se());
    }

    #[test]
    fn total_sales_reach_bottom_demand() {
        let d = SwitchbackDesign::two_price(0.5, 0.1, 0.3, 1e-4).unwrap();
        let m = market(0.5, &d);
        let xs: Vec<f64> = (0..200).map(|s| m.run(s, HorizonMode::Geometric).average_total_sales()).collect();
        let mom = crate::stats::Moments::from_slice(&xs);
        assert!((mom.mean - 0.6).abs() < 3.0 * mom.se() + 1e-3, "{} +- {}", mom.mean, mom.se());
    }
}
