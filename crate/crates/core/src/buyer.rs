//! Forward-looking purchase rule.
//!
//! During the experiment a buyer with value `v` and patience `gamma` accepts
//! the posted price `p` iff
//!
//! ```text
//! v >= p + gamma (1 - delta) / (1 - gamma (1 - delta)) * E[(p - P)+] + scaled post-experiment term
//! ```
//!
//! The rule depends on the posted price only, not on the price history, so
//! thresholds are tabulated once per (price level, patience atom).

use serde::{Deserialize, Serialize};

use crate::design::SwitchbackDesign;
use crate::error::{Error, Result};
use crate::market::PatienceMixture;

/// What a buyer expects to gain once the experiment has ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostExperimentBelief {
    /// No surplus after the experiment.
    #[default]
    Zero,
    /// The reference price is posted forever after the experiment, so the
    /// post-experiment utility is `max(v - p*, 0)` whenever it ends.
    ReferenceForever,
}

fn check_patience(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::Domain(format!("patience {gamma} outside [0, 1)")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("ending probability {delta} outside (0, 1)")))
    }
}

/// Value shading `B` at posted price `p` for a finite ending probability.
pub fn option_value(design: &SwitchbackDesign, p: f64, gamma: f64, delta: f64) -> Result<f64> {
    check_patience(gamma)?;
    check_delta(delta)?;
    let g = gamma * (1.0 - delta);
    Ok(g / (1.0 - g) * design.expected_discount_mass(p))
}

/// `gamma / (1 - gamma) * E[(p - P)+]`, the shading in the `delta -> 0` limit.
pub fn limit_option_value(design: &SwitchbackDesign, p: f64, gamma: f64) -> Result<f64> {
    check_patience(gamma)?;
    Ok(gamma / (1.0 - gamma) * design.expected_discount_mass(p))
}

/// Lowest value that accepts price level `level`.
///
/// Under [`PostExperimentBelief::ReferenceForever`] the Bellman acceptance
/// condition, after moving the waiting utility to the right-hand side, reads
/// `v - p >= B + kappa * max(v - p*, 0)` with
/// `kappa = gamma delta / (1 - gamma (1 - delta))`. The left minus right side
/// is strictly increasing in `v` (slope 1 or `1 - kappa`), so the threshold is
/// its unique root: `p + B` when that is below `p*`, otherwise
/// `(p + B - kappa p*) / (1 - kappa)`.
pub fn acceptance_threshold(
    design: &SwitchbackDesign,
    level: usize,
    gamma: f64,
    delta: f64,
    belief: PostExperimentBelief,
) -> Result<f64> {
    let p = *design.prices().get(level).ok_or_else(|| Error::Domain(format!("price level {level} out of range")))?;
    let shading = option_value(design, p, gamma, delta)?;
    match belief {
        PostExperimentBelief::Zero => Ok(p + shading),
        PostExperimentBelief::ReferenceForever => {
            let p_ref = design.reference_price();
            let kappa = gamma * delta / (1.0 - gamma * (1.0 - delta));
            if p + shading < p_ref {
                Ok(p + shading)
            } else {
                Ok((p + shading - kappa * p_ref) / (1.0 - kappa))
            }
        }
    }
}

/// `p(level) + gamma / (1 - gamma) * E[(p(level) - P)+]`.
pub fn limit_threshold(design: &SwitchbackDesign, level: usize, gamma: f64) -> Result<f64> {
    let p = *design.prices().get(level).ok_or_else(|| Error::Domain(format!("price level {level} out of range")))?;
    Ok(p + limit_option_value(design, p, gamma)?)
}

/// Acceptance thresholds for every (patience atom, price level) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdTable {
    /// `thresholds[k][i]`: atom `k`, price level `i`.
    thresholds: Vec<Vec<f64>>,
    gammas: Vec<f64>,
    delta: f64,
    belief: PostExperimentBelief,
}

impl ThresholdTable {
    pub fn get(&self, atom: usize, level: usize) -> f64 {
        self.thresholds[atom][level]
    }

    pub fn row(&self, atom: usize) -> &[f64] {
        &self.thresholds[atom]
    }

    pub fn atoms(&self) -> usize {
        self.thresholds.len()
    }

    pub fn levels(&self) -> usize {
        self.thresholds.first().map_or(0, Vec::len)
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn belief(&self) -> PostExperimentBelief {
        self.belief
    }

    /// Ordering invariants: every threshold is at least its price, thresholds
    /// strictly decrease down the ladder, and are nondecreasing in patience.
    pub fn check_invariants(&self, design: &SwitchbackDesign) -> Result<()> {
        for (k, row) in self.thresholds.iter().enumerate() {
            for (i, (&v, &p)) in row.iter().zip(design.prices()).enumerate() {
                if v < p {
                    return Err(Error::InternalConsistency(format!(
                        "threshold {v} below price {p} (atom {k}, level {i})"
                    )));
                }
            }
            if row.windows(2).any(|w| !(w[0] > w[1])) {
                return Err(Error::InternalConsistency(format!(
                    "thresholds for atom {k} not strictly decreasing: {row:?}"
                )));
            }
        }
        for pair in self.thresholds.windows(2) {
            if pair[0].iter().zip(&pair[1]).any(|(a, b)| b < a) {
                return Err(Error::InternalConsistency("thresholds decrease with patience".into()));
            }
        }
        Ok(())
    }
}

pub fn build_threshold_table(
    design: &SwitchbackDesign,
    mixture: &PatienceMixture,
    delta: f64,
    belief: PostExperimentBelief,
) -> Result<ThresholdTable> {
    let thresholds = mixture
        .atoms()
        .iter()
        .map(|a| {
            (0..design.levels())
                .map(|i| acceptance_threshold(design, i, a.gamma, delta, belief))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let table = ThresholdTable { thresholds, gammas: mixture.atoms().iter().map(|a| a.gamma).collect(), delta, belief };
    table.check_invariants(design)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::PatienceAtom;
    use proptest::prelude::*;

    fn two() -> SwitchbackDesign {
        SwitchbackDesign::two_price(0.5, 0.1, 0.3, 1e-4).unwrap()
    }

    #[test]
    fn option_value_examples() {
        let d = two();
        let b = limit_option_value(&d, 0.5, 0.5).unwrap();
        assert!((b - 0.03).abs() < 1e-15);
        assert!((option_value(&d, 0.5, 0.5, 1e-9).unwrap() - 0.03).abs() < 1e-9);
        assert_eq!(option_value(&d, 0.5, 0.0, 1e-4).unwrap(), 0.0);
        assert_eq!(option_value(&d, 0.4, 0.7, 1e-4).unwrap(), 0.0);
        assert!(matches!(option_value(&d, 0.5, 1.0, 1e-4), Err(Error::Domain(_))));
        assert!(matches!(option_value(&d, 0.5, -0.1, 1e-4), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_belief_thresholds() {
        let d = two();
        let top = acceptance_threshold(&d, 0, 0.5, 1e-6, PostExperimentBelief::Zero).unwrap();
        assert!((top - 0.53).abs() < 1e-5);
        let bottom = acceptance_threshold(&d, 1, 0.5, 1e-6, PostExperimentBelief::Zero).unwrap();
        assert_eq!(bottom, 0.4);
    }

    #[test]
    fn reference_forever_vanishes_linearly_in_delta() {
        let d = SwitchbackDesign::three_price(0.5, 0.05, 0.25, 0.25, 1e-4).unwrap();
        for gamma in [0.3, 0.5, 0.8] {
            for level in 0..2 {
                let limit = limit_threshold(&d, level, gamma).unwrap();
                let gap = |delta| {
                    (acceptance_threshold(&d, level, gamma, delta, PostExperimentBelief::ReferenceForever).unwrap()
                        - limit)
                        .abs()
                };
                let ratio = gap(1e-3) / gap(1e-4);
                assert!((ratio - 10.0).abs() < 0.1, "gamma {gamma} level {level}: ratio {ratio}");
            }
        }
    }

    #[test]
    fn reference_forever_solves_the_bellman_condition() {
        let d = SwitchbackDesign::three_price(0.5, 0.05, 0.25, 0.25, 1e-4).unwrap();
        let (gamma, delta) = (0.6, 0.05);
        for level in 0..3 {
            let p = d.prices()[level];
            let v = acceptance_threshold(&d, level, gamma, delta, PostExperimentBelief::ReferenceForever).unwrap();
            // Waiting utility under "buy at the first price <= p":
            // a (v - p + E) + u_post with u_post = gamma delta U / (1 - gamma (1 - delta)(1 - Q)).
            let qe = d.expected_discount_mass(p);
            let q = d.lower_price_probability(p) + d.probs()[level];
            let e = if q > 0.0 { qe / q } else { 0.0 };
            let g = gamma * (1.0 - delta);
            let a = g * q / (1.0 - g * (1.0 - q));
            let u_post = gamma * delta * (v - 0.5).max(0.0) / (1.0 - g * (1.0 - q));
            let wait = a * (v - p + e) + u_post;
            assert!(((v - p) - wait).abs() < 1e-12, "level {level}: buy {} wait {wait}", v - p);
        }
    }

    #[test]
    fn table_example() {
        let d = SwitchbackDesign::three_price(0.5, 0.05, 0.25, 0.25, 1e-4).unwrap();
        let m = PatienceMixture::new(
            vec![PatienceAtom { gamma: 0.0, weight: 0.5 }, PatienceAtom { gamma: 0.5, weight: 0.5 }],
            0.05,
        )
        .unwrap();
        let t = build_threshold_table(&d, &m, 1e-12, PostExperimentBelief::Zero).unwrap();
        // QE = 0.0375 at p*, 0.0125 at p* - eps, 0 at the bottom.
        let expect = [[0.5, 0.45, 0.40], [0.5375, 0.4625, 0.40]];
        for k in 0..2 {
            for i in 0..3 {
                assert!((t.get(k, i) - expect[k][i]).abs() < 1e-9, "({k}, {i}) = {}", t.get(k, i));
            }
        }
        let myopic =
            build_threshold_table(&d, &PatienceMixture::single(0.0).unwrap(), 1e-4, PostExperimentBelief::Zero)
                .unwrap();
        assert_eq!(myopic.row(0), d.prices());
    }

    #[test]
    fn bottom_threshold_is_the_bottom_price() {
        let d = SwitchbackDesign::three_price(0.5, 0.05, 0.2, 0.3, 1e-4).unwrap();
        for gamma in [0.0, 0.4, 0.9] {
            for belief in [PostExperimentBelief::Zero, PostExperimentBelief::ReferenceForever] {
                assert_eq!(acceptance_threshold(&d, 2, gamma, 1e-4, belief).unwrap(), 0.4);
            }
        }
    }

    proptest! {
        #[test]
        fn delta_limit_bound(gamma in 0.0f64..0.9, delta in 1e-6f64..1e-2, q1 in 0.05f64..0.45, q2 in 0.05f64..0.45) {
            let d = SwitchbackDesign::three_price(0.5, 0.04, q1, q2, delta).unwrap();
            // QE <= eps_bar, so both beliefs lie within gamma eps_bar / (1 - gamma)^2 * delta of the limit.
            let c = gamma * d.epsilon_bar() / (1.0 - gamma).powi(2);
            for level in 0..3 {
                let limit = limit_threshold(&d, level, gamma).unwrap();
                for belief in [PostExperimentBelief::Zero, PostExperimentBelief::ReferenceForever] {
                    let v = acceptance_threshold(&d, level, gamma, delta, belief).unwrap();
                    prop_assert!((v - limit).abs() <= c * delta + 1e-15);
                }
            }
        }

        #[test]
        fn tables_are_ordered(g1 in 0.0f64..0.45, g2 in 0.5f64..0.95, delta in 1e-5f64..0.2) {
            let d = SwitchbackDesign::three_price(0.5, 0.05, 0.3, 0.2, delta).unwrap();
            let m = PatienceMixture::new(
                vec![PatienceAtom { gamma: g1, weight: 0.4 }, PatienceAtom { gamma: g2, weight: 0.6 }],
                0.05,
            ).unwrap();
            for belief in [PostExperimentBelief::Zero, PostExperimentBelief::ReferenceForever] {
                let t = build_threshold_table(&d, &m, delta, belief).unwrap();
                prop_assert!(t.check_invariants(&d).is_ok());
            }
        }
    }
}
