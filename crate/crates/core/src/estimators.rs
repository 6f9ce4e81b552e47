//! Demand-gradient estimators on level aggregates.
//!
//! Every estimator is a linear function of the aggregates `C(i)` (total sales)
//! and `N(i)` (same-day sales) divided by the discount step.

use serde::{Deserialize, Serialize};

use crate::design::SwitchbackDesign;
use crate::error::{Error, Result};

/// Relative tolerance of the algebraic identities checked at run time.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Denominator used when averaging sales per price level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `q_i T`, under which the unbiasedness arguments hold.
    #[default]
    Design,
    /// Realized number of periods at each level. Non-canonical; for variance
    /// comparisons only.
    RealizedCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregatedSales {
    design: SwitchbackDesign,
    totals: Vec<f64>,
    same_day: Vec<f64>,
    counts: Vec<usize>,
    horizon: usize,
    normalization: Normalization,
}

impl AggregatedSales {
    pub fn new(
        design: SwitchbackDesign,
        totals: Vec<f64>,
        same_day: Vec<f64>,
        counts: Vec<usize>,
        horizon: usize,
        normalization: Normalization,
    ) -> Result<Self> {
        let k = design.levels();
        if totals.len() != k || same_day.len() != k || counts.len() != k {
            return Err(Error::Usage(format!("aggregates must have {k} levels")));
        }
        if totals.iter().chain(&same_day).any(|&x| !(x >= 0.0)) {
            return Err(Error::Domain("aggregates must be non-negative".into()));
        }
        Ok(AggregatedSales { design, totals, same_day, counts, horizon, normalization })
    }

    /// Aggregates supplied directly (total and same-day per level).
    pub fn from_levels(design: &SwitchbackDesign, totals: &[f64], same_day: &[f64]) -> Result<Self> {
        Self::new(
            design.clone(),
            totals.to_vec(),
            same_day.to_vec(),
            vec![0; design.levels()],
            0,
            Normalization::Design,
        )
    }

    pub fn design(&self) -> &SwitchbackDesign {
        &self.design
    }

    pub fn levels(&self) -> usize {
        self.totals.len()
    }

    /// `C(i)`.
    pub fn total(&self, i: usize) -> f64 {
        self.totals[i]
    }

    /// `N(i)`.
    pub fn same_day(&self, i: usize) -> f64 {
        self.same_day[i]
    }

    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    pub fn same_days(&self) -> &[f64] {
        &self.same_day
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Levels that never occurred; their aggregates are zero.
    pub fn empty_levels(&self) -> Vec<usize> {
        if self.horizon == 0 {
            return Vec::new();
        }
        (0..self.levels()).filter(|&i| self.counts[i] == 0).collect()
    }

    /// The two highest levels, as a two-price record. The probabilities of the
    /// remaining levels are folded into the lower one so the view is a valid
    /// design; the aggregates are copied unchanged.
    pub fn top_pair(&self) -> AggregatedSales {
        if self.levels() == 2 {
            return self.clone();
        }
        let p = self.design.prices();
        let q0 = self.design.probs()[0];
        let design =
            SwitchbackDesign::new(vec![p[0], p[1]], vec![q0, 1.0 - q0], self.design.delta(), self.design.price_cap())
                .expect("sub-ladder of a valid design");
        AggregatedSales {
            design,
            totals: self.totals[..2].to_vec(),
            same_day: self.same_day[..2].to_vec(),
            counts: self.counts[..2].to_vec(),
            horizon: self.horizon,
            normalization: self.normalization,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    NaiveTotal,
    NaiveSameDay,
    ThreePriceKnown,
    ThreePriceUnknown,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 4] = [
        EstimatorId::NaiveTotal,
        EstimatorId::NaiveSameDay,
        EstimatorId::ThreePriceKnown,
        EstimatorId::ThreePriceUnknown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorId::NaiveTotal => "naive_total",
            EstimatorId::NaiveSameDay => "naive_same_day",
            EstimatorId::ThreePriceKnown => "three_price_known",
            EstimatorId::ThreePriceUnknown => "three_price_unknown",
        }
    }

    /// Aggregates the estimator reads.
    pub fn inputs(self) -> &'static str {
        match self {
            EstimatorId::NaiveTotal => "C0,C1",
            EstimatorId::NaiveSameDay => "N0,N1",
            EstimatorId::ThreePriceKnown => "N0,N1,N2",
            EstimatorId::ThreePriceUnknown => "C0,C1,C2",
        }
    }

    pub fn levels(self) -> usize {
        match self {
            EstimatorId::NaiveTotal | EstimatorId::NaiveSameDay => 2,
            EstimatorId::ThreePriceKnown | EstimatorId::ThreePriceUnknown => 3,
        }
    }
}

impl std::fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator {s:?}")))
    }
}

/// A point estimate with the intermediate differences of the three-price forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    /// `N(1) - N(2)` (or its reconstruction).
    pub delta1: Option<f64>,
    /// `N(0) - N(1)` (or its reconstruction).
    pub delta2: Option<f64>,
}

impl Estimate {
    fn plain(value: f64) -> Self {
        Estimate { value, delta1: None, delta2: None }
    }
}

/// Replication summary of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimator: EstimatorId,
    pub inputs: &'static str,
    pub mean: f64,
    pub se: f64,
    pub replications: u64,
    pub predicted: Option<f64>,
}

fn check_levels(agg: &AggregatedSales, want: usize, name: &str) -> Result<()> {
    if agg.levels() != want {
        return Err(Error::Usage(format!("{name} needs {want} price levels, got {}", agg.levels())));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("discount step {eps} must be positive")))
    }
}

/// `(C(0) - C(1)) / eps`.
pub fn naive_total(agg: &AggregatedSales, eps: f64) -> Result<Estimate> {
    check_levels(agg, 2, "naive_total")?;
    check_eps(eps)?;
    Ok(Estimate::plain((agg.total(0) - agg.total(1)) / eps))
}

/// `(N(0) - N(1)) / eps`.
pub fn naive_same_day(agg: &AggregatedSales, eps: f64) -> Result<Estimate> {
    check_levels(agg, 2, "naive_same_day")?;
    check_eps(eps)?;
    Ok(Estimate::plain((agg.same_day(0) - agg.same_day(1)) / eps))
}

fn debiased(n: [f64; 3], q1: f64, q2: f64, eps: f64) -> Result<Estimate> {
    let delta1 = n[1] - n[2];
    let delta2 = n[0] - n[1];
    let value = (delta1 - q2 / q1 * (delta2 - delta1)) / eps;
    if q1 == q2 {
        let short = (delta1 - (delta2 - delta1)) / eps;
        let scale = (n[0].abs() + 2.0 * n[1].abs() + n[2].abs()) / eps;
        if (short - value).abs() > IDENTITY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InternalConsistency(format!(
                "difference-of-differences form {short} disagrees with {value}"
            )));
        }
    }
    Ok(Estimate { value, delta1: Some(delta1), delta2: Some(delta2) })
}

/// `(N(1) - N(2) - (q2/q1)(N(0) - N(1) - (N(1) - N(2)))) / eps`.
pub fn three_price_known(agg: &AggregatedSales, eps: f64) -> Result<Estimate> {
    check_levels(agg, 3, "three_price_known")?;
    check_eps(eps)?;
    let q = agg.design().probs();
    debiased([agg.same_day(0), agg.same_day(1), agg.same_day(2)], q[1], q[2], eps)
}

/// Same-day aggregates rebuilt from total sales:
/// `N(0) = C(0)`, `N(1) = q0 C(0) + (q1 + q2) C(1)`, `N(2) = q0 C(0) + q1 C(1) + q2 C(2)`.
pub fn reconstruct_same_day(agg: &AggregatedSales) -> Result<[f64; 3]> {
    check_levels(agg, 3, "reconstruct_same_day")?;
    let q = agg.design().probs();
    let c = agg.totals();
    Ok([c[0], q[0] * c[0] + (q[1] + q[2]) * c[1], q[0] * c[0] + q[1] * c[1] + q[2] * c[2]])
}

/// Debiased estimator on reconstructed same-day sales, cross-checked against
/// the closed form `q2 (1 + q2/q1)(2 C(1) - C(0) - C(2)) / eps`.
pub fn three_price_unknown(agg: &AggregatedSales, eps: f64) -> Result<Estimate> {
    check_eps(eps)?;
    let n = reconstruct_same_day(agg)?;
    let q = agg.design().probs();
    let (q1, q2) = (q[1], q[2]);
    let plug_in = debiased(n, q1, q2, eps)?;
    let simple = simplified_unknown(agg, eps)?;
    let c = agg.totals();
    let scale = q2 * (1.0 + q2 / q1) * (c[0].abs() + 2.0 * c[1].abs() + c[2].abs()) / eps;
    if (plug_in.value - simple).abs() > IDENTITY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InternalConsistency(format!(
            "plug-in estimate {} disagrees with closed form {simple}",
            plug_in.value
        )));
    }
    Ok(plug_in)
}

/// `q2 (1 + q2/q1)(2 C(1) - C(0) - C(2)) / eps`.
pub fn simplified_unknown(agg: &AggregatedSales, eps: f64) -> Result<f64> {
    check_levels(agg, 3, "three_price_unknown")?;
    check_eps(eps)?;
    let q = agg.design().probs();
    let c = agg.totals();
    Ok(q[2] * (1.0 + q[2] / q[1]) * (2.0 * c[1] - c[0] - c[2]) / eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    Total,
    SameDay,
}

/// Limit of the naive estimators divided by `d(p*)` for homogeneous patience:
/// `1/q + gamma/(1-gamma)` on total sales, `1 + gamma/(1-gamma) q` on same-day sales.
pub fn predicted_bias_factor(kind: BiasKind, gamma: f64, q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Domain(format!("patience {gamma} outside [0, 1)")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("discount probability {q} outside (0, 1)")));
    }
    let c = gamma / (1.0 - gamma);
    Ok(match kind {
        BiasKind::Total => 1.0 / q + c,
        BiasKind::SameDay => 1.0 + c * q,
    })
}

/// Estimate of `D(p*)`. Top-price same-day sales measure `D(p* + B)` where `B`
/// is the shading at `p*`; when `B` is known this is corrected to first
/// order, `N(0) - d_hat B`. Otherwise `C(0)` is returned, which is off by
/// `O(B)`.
pub fn demand_level_estimate(agg: &AggregatedSales, d_hat: f64, shading: Option<f64>) -> f64 {
    match shading {
        Some(b) => agg.same_day(0) - d_hat * b,
        None => agg.total(0),
    }
}

/// `p* d + D`.
pub fn revenue_gradient_estimate(d_hat: f64, demand_hat: f64, p_star: f64) -> f64 {
    p_star * d_hat + demand_hat
}

pub type EstimatorFn = fn(&AggregatedSales, f64) -> Result<Estimate>;

/// The estimator implementations used by the harness. Swappable so the
/// acceptance suite can be run against deliberately broken variants.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorSuite {
    pub naive_total: EstimatorFn,
    pub naive_same_day: EstimatorFn,
    pub three_price_known: EstimatorFn,
    pub three_price_unknown: EstimatorFn,
}

impl Default for EstimatorSuite {
    fn default() -> Self {
        EstimatorSuite { naive_total, naive_same_day, three_price_known, three_price_unknown }
    }
}

impl EstimatorSuite {
    pub fn get(&self, id: EstimatorId) -> EstimatorFn {
        match id {
            EstimatorId::NaiveTotal => self.naive_total,
            EstimatorId::NaiveSameDay => self.naive_same_day,
            EstimatorId::ThreePriceKnown => self.three_price_known,
            EstimatorId::ThreePriceUnknown => self.three_price_unknown,
        }
    }

    /// Applies `id`; naive estimators on a three-price record use its top pair.
    pub fn apply(&self, id: EstimatorId, agg: &AggregatedSales, eps: f64) -> Result<Estimate> {
        if id.levels() == 2 && agg.levels() > 2 {
            (self.get(id))(&agg.top_pair(), eps)
        } else {
            (self.get(id))(agg, eps)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_agg(c: [f64; 2], n: [f64; 2]) -> AggregatedSales {
        let d = SwitchbackDesign::two_price(0.5, 0.1, 0.3, 1e-4).unwrap();
        AggregatedSales::from_levels(&d, &c, &n).unwrap()
    }

    fn three_agg(q: [f64; 3], c: [f64; 3], n: [f64; 3]) -> AggregatedSales {
        let d = SwitchbackDesign::three_price(0.5, 0.01, q[1], q[2], 1e-4).unwrap();
        assert!((d.probs()[0] - q[0]).abs() < 1e-15);
        AggregatedSales::from_levels(&d, &c, &n).unwrap()
    }

    #[test]
    fn naive_examples() {
        let a = two_agg([0.47, 0.60], [0.47, 0.60]);
        assert!((naive_total(&a, 0.1).unwrap().value + 1.3).abs() < 1e-12);
        assert!((naive_same_day(&a, 0.1).unwrap().value + 1.3).abs() < 1e-12);
        assert_eq!(naive_total(&two_agg([0.5, 0.5], [0.5, 0.5]), 0.1).unwrap().value, 0.0);
        let three = three_agg([0.5, 0.25, 0.25], [0.5; 3], [0.5; 3]);
        assert!(matches!(naive_total(&three, 0.1), Err(Error::Usage(_))));
        assert!(matches!(three_price_known(&a, 0.1), Err(Error::Usage(_))));
    }

    #[test]
    fn debiased_examples() {
        let a = three_agg([0.5, 0.25, 0.25], [0.0; 3], [0.50, 0.52, 0.54]);
        let e = three_price_known(&a, 0.01).unwrap();
        assert!((e.value + 2.0).abs() < 1e-10);
        assert!((e.delta1.unwrap() + 0.02).abs() < 1e-12 && (e.delta2.unwrap() + 0.02).abs() < 1e-12);
        let b = three_agg([0.5, 0.25, 0.25], [0.0; 3], [0.49, 0.52, 0.54]);
        assert!((three_price_known(&b, 0.01).unwrap().value + 1.0).abs() < 1e-10);
    }

    #[test]
    fn reconstruction_example() {
        let a = three_agg([0.4, 0.3, 0.3], [0.5, 0.6, 0.7], [0.0; 3]);
        let n = reconstruct_same_day(&a).unwrap();
        for (g, w) in n.iter().zip([0.5, 0.56, 0.59]) {
            assert!((g - w).abs() < 1e-12, "{n:?}");
        }
    }

    #[test]
    fn unknown_arrivals_examples() {
        let a = three_agg([0.5, 0.25, 0.25], [0.5, 0.6, 0.7], [0.0; 3]);
        assert!(three_price_unknown(&a, 0.05).unwrap().value.abs() < 1e-12);
        let b = three_agg([0.5, 0.25, 0.25], [0.47, 0.58, 0.62], [0.0; 3]);
        assert!((three_price_unknown(&b, 0.05).unwrap().value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn bias_factors() {
        let t = predicted_bias_factor(BiasKind::Total, 0.5, 0.3).unwrap();
        assert!((t - 13.0 / 3.0).abs() < 1e-12);
        assert!((predicted_bias_factor(BiasKind::SameDay, 0.5, 0.3).unwrap() - 1.3).abs() < 1e-12);
        assert_eq!(predicted_bias_factor(BiasKind::Total, 0.0, 0.5).unwrap(), 2.0);
        assert_eq!(predicted_bias_factor(BiasKind::SameDay, 0.0, 0.5).unwrap(), 1.0);
        assert!(matches!(predicted_bias_factor(BiasKind::Total, 1.0, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn revenue_assembly() {
        assert_eq!(revenue_gradient_estimate(-1.0, 0.5, 0.5), 0.0);
        assert!((revenue_gradient_estimate(-0.7692, 0.5, 0.5) - 0.1154).abs() < 1e-12);
        assert_eq!(revenue_gradient_estimate(0.0, 0.3, 0.5), 0.3);
        let a = two_agg([0.5, 0.6], [0.47, 0.6]);
        assert_eq!(demand_level_estimate(&a, -1.0, None), 0.5);
        assert!((demand_level_estimate(&a, -1.0, Some(0.03)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn top_pair_keeps_top_aggregates() {
        let a = three_agg([0.5, 0.25, 0.25], [0.4, 0.5, 0.6], [0.3, 0.45, 0.6]);
        let s = EstimatorSuite::default();
        let e = s.apply(EstimatorId::NaiveSameDay, &a, 0.01).unwrap();
        assert!((e.value + 15.0).abs() < 1e-9);
        assert_eq!("three_price_unknown".parse::<EstimatorId>().unwrap(), EstimatorId::ThreePriceUnknown);
    }

    fn agg_strategy() -> impl Strategy<Value = (f64, f64, [f64; 3], [f64; 3])> {
        (0.05f64..0.45, 0.05f64..0.45, prop::array::uniform3(0.0f64..2.0), prop::array::uniform3(0.0f64..2.0))
    }

    proptest! {
        #[test]
        fn plug_in_matches_closed_form((q1, q2, c, n) in agg_strategy()) {
            let a = three_agg([1.0 - q1 - q2, q1, q2], c, n);
            let plug = three_price_unknown(&a, 0.02).unwrap().value;
            let closed = simplified_unknown(&a, 0.02).unwrap();
            let scale = q2 * (1.0 + q2 / q1) * (c[0] + 2.0 * c[1] + c[2]) / 0.02;
            prop_assert!((plug - closed).abs() <= IDENTITY_TOL * scale.max(1e-300));
        }

        #[test]
        fn estimators_are_scale_equivariant((q1, q2, c, n) in agg_strategy(), k in 0.1f64..10.0) {
            let a = three_agg([1.0 - q1 - q2, q1, q2], c, n);
            let b = three_agg([1.0 - q1 - q2, q1, q2], c.map(|x| k * x), n.map(|x| k * x));
            let s = EstimatorSuite::default();
            for id in EstimatorId::ALL {
                let x = s.apply(id, &a, 0.03).unwrap().value;
                let y = s.apply(id, &b, 0.03).unwrap().value;
                prop_assert!((y - k * x).abs() <= 1e-9 * (1.0 + (k * x).abs()));
            }
        }

        #[test]
        fn equal_probabilities_reduce_to_differences(q in 0.05f64..0.45, n in prop::array::uniform3(0.0f64..2.0)) {
            let a = three_agg([1.0 - 2.0 * q, q, q], [0.0; 3], n);
            let e = three_price_known(&a, 0.01).unwrap();
            let (d1, d2) = (e.delta1.unwrap(), e.delta2.unwrap());
            prop_assert!((e.value - (d1 - (d2 - d1)) / 0.01).abs() <= 1e-9 * (1.0 + e.value.abs()));
        }
    }
}
