//! Demand-generating processes.
//!
//! A unit mass of buyers arrives every period. Buyers are split into a finite
//! mixture of patience atoms; each atom carries its own value distribution, so
//! value and patience may be arbitrarily correlated. A time-varying multiplier
//! scales every period's arriving mass. Because the multiplier has long-run
//! mean one, the analytic mixture demand is exactly the time-averaged static
//! demand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{uniform01, SimRng};

const WEIGHT_TOL: f64 = 1e-12;

/// One patience level and the share of arriving buyers that carry it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatienceAtom {
    pub gamma: f64,
    pub weight: f64,
}

/// Finite distribution over patience levels, bounded away from one by `gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatienceMixture {
    atoms: Vec<PatienceAtom>,
    gap: f64,
}

impl PatienceMixture {
    pub const DEFAULT_GAP: f64 = 0.01;

    pub fn new(atoms: Vec<PatienceAtom>, gap: f64) -> Result<Self> {
        if !(gap > 0.0 && gap <= 1.0) {
            return Err(Error::Construction(format!("patience gap must lie in (0, 1], got {gap}")));
        }
        if atoms.is_empty() {
            return Err(Error::Construction("patience mixture needs at least one atom".into()));
        }
        for a in &atoms {
            if !(a.gamma >= 0.0 && a.gamma <= 1.0 - gap) {
                return Err(Error::Domain(format!("patience {} outside [0, {}]", a.gamma, 1.0 - gap)));
            }
            if !(a.weight >= 0.0) {
                return Err(Error::Construction(format!("negative atom weight {}", a.weight)));
            }
        }
        if atoms.windows(2).any(|w| w[0].gamma >= w[1].gamma) {
            return Err(Error::Construction("patience atoms must be listed with strictly increasing gamma".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Construction(format!("atom weights sum to {total}, expected 1")));
        }
        Ok(PatienceMixture { atoms, gap })
    }

    pub fn single(gamma: f64) -> Result<Self> {
        Self::new(vec![PatienceAtom { gamma, weight: 1.0 }], Self::DEFAULT_GAP)
    }

    pub fn atoms(&self) -> &[PatienceAtom] {
        &self.atoms
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Value distribution of one patience atom, described by its survival
/// function `D(p) = P(v >= p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditionalDemandFamily {
    /// Values uniform on `[lo, hi]`.
    #[serde(rename = "uniform")]
    UniformValues { lo: f64, hi: f64 },
    /// `D(p) = intercept - slope * p` on `(lo, hi]`, one below `lo` and zero
    /// above `hi`. Any gap at either end is a point mass of values there.
    #[serde(rename = "linear")]
    LinearDemand { intercept: f64, slope: f64, lo: f64, hi: f64 },
    /// Logistic values truncated to `v >= 0`.
    #[serde(rename = "logistic")]
    LogisticDemand { center: f64, scale: f64 },
}

impl ConditionalDemandFamily {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::UniformValues { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Self::LinearDemand { intercept, slope, lo, hi } => {
                let top = intercept - slope * lo;
                let bottom = intercept - slope * hi;
                slope > 0.0
                    && lo.is_finite()
                    && hi.is_finite()
                    && lo < hi
                    && top <= 1.0 + WEIGHT_TOL
                    && bottom >= -WEIGHT_TOL
            }
            Self::LogisticDemand { center, scale } => center.is_finite() && scale > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Construction(format!("invalid demand family {self:?}")))
        }
    }

    /// Mass of values at or above `p`.
    pub fn survival(&self, p: f64) -> f64 {
        match *self {
            Self::UniformValues { lo, hi } => {
                if p <= lo {
                    1.0
                } else if p >= hi {
                    0.0
                } else {
                    (hi - p) / (hi - lo)
                }
            }
            Self::LinearDemand { intercept, slope, lo, hi } => {
                if p <= lo {
                    1.0
                } else if p > hi {
                    0.0
                } else {
                    (intercept - slope * p).clamp(0.0, 1.0)
                }
            }
            Self::LogisticDemand { center, scale } => {
                if p <= 0.0 {
                    1.0
                } else {
                    logistic_tail(p, center, scale) / logistic_tail(0.0, center, scale)
                }
            }
        }
    }

    /// Prices at which the survival function has a kink.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            Self::UniformValues { lo, hi } | Self::LinearDemand { lo, hi, .. } => vec![lo, hi],
            Self::LogisticDemand { .. } => vec![0.0],
        }
    }

    fn check_smooth(&self, p: f64) -> Result<()> {
        if self.kinks().contains(&p) {
            Err(Error::NonDifferentiable { price: p })
        } else {
            Ok(())
        }
    }

    pub fn gradient(&self, p: f64) -> Result<f64> {
        self.check_smooth(p)?;
        Ok(match *self {
            Self::UniformValues { lo, hi } => {
                if p > lo && p < hi {
                    -1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Self::LinearDemand { slope, lo, hi, .. } => {
                if p > lo && p < hi {
                    -slope
                } else {
                    0.0
                }
            }
            Self::LogisticDemand { center, scale } => {
                if p < 0.0 {
                    0.0
                } else {
                    let s = logistic_tail(p, center, scale);
                    -s * (1.0 - s) / (scale * logistic_tail(0.0, center, scale))
                }
            }
        })
    }

    /// Second derivative of the survival function.
    pub fn curvature(&self, p: f64) -> Result<f64> {
        self.check_smooth(p)?;
        Ok(match *self {
            Self::UniformValues { .. } | Self::LinearDemand { .. } => 0.0,
            Self::LogisticDemand { center, scale } => {
                if p < 0.0 {
                    0.0
                } else {
                    let s = logistic_tail(p, center, scale);
                    s * (1.0 - s) * (1.0 - 2.0 * s) / (scale * scale * logistic_tail(0.0, center, scale))
                }
            }
        })
    }

    /// Smallest price at which nobody buys, if the support is bounded.
    pub fn upper_bound(&self) -> Option<f64> {
        match *self {
            Self::UniformValues { hi, .. } | Self::LinearDemand { hi, .. } => Some(hi),
            Self::LogisticDemand { .. } => None,
        }
    }
}

fn logistic_tail(p: f64, center: f64, scale: f64) -> f64 {
    1.0 / (1.0 + ((p - center) / scale).exp())
}

/// Law of the per-period multiplier applied to every atom's arriving mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum TimeVariation {
    #[default]
    Constant,
    /// I.i.d. multipliers uniform on `[1 - half_width, 1 + half_width]`.
    IidScale { half_width: f64 },
    /// `m_t = 1 + x_t`, `x_t = persistence * x_{t-1} + u_t`, `u_t` uniform on
    /// `[-innovation_bound, innovation_bound]`, `x_0 = 0`.
    Ar1Scale { persistence: f64, innovation_bound: f64 },
}

impl TimeVariation {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.multiplier_bounds();
        let params_ok = match *self {
            TimeVariation::Constant => true,
            TimeVariation::IidScale { half_width } => half_width >= 0.0,
            TimeVariation::Ar1Scale { persistence, innovation_bound } => {
                (0.0..1.0).contains(&persistence) && innovation_bound >= 0.0
            }
        };
        if params_ok && lo > 0.0 && hi.is_finite() {
            Ok(())
        } else {
            Err(Error::Construction(format!(
                "time variation {self:?} does not keep the multiplier inside a positive bounded range"
            )))
        }
    }

    /// Range `[m_lo, m_hi]` the multiplier never leaves.
    pub fn multiplier_bounds(&self) -> (f64, f64) {
        match *self {
            TimeVariation::Constant => (1.0, 1.0),
            TimeVariation::IidScale { half_width } => (1.0 - half_width, 1.0 + half_width),
            TimeVariation::Ar1Scale { persistence, innovation_bound } => {
                let r = innovation_bound / (1.0 - persistence);
                (1.0 - r, 1.0 + r)
            }
        }
    }

    pub fn stream(&self) -> MultiplierStream {
        MultiplierStream { law: *self, state: 0.0 }
    }
}

/// Sequential sampler of multipliers for one replication.
#[derive(Debug, Clone)]
pub struct MultiplierStream {
    law: TimeVariation,
    state: f64,
}

impl MultiplierStream {
    /// Next multiplier. The constant law consumes no randomness.
    pub fn next(&mut self, rng: &mut SimRng) -> f64 {
        match self.law {
            TimeVariation::Constant => 1.0,
            TimeVariation::IidScale { half_width } => 1.0 + half_width * (2.0 * uniform01(rng) - 1.0),
            TimeVariation::Ar1Scale { persistence, innovation_bound } => {
                self.state = persistence * self.state + innovation_bound * (2.0 * uniform01(rng) - 1.0);
                1.0 + self.state
            }
        }
    }
}

/// Sup-norm bounds on the demand curve near the reference price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    /// Bound on demand mass.
    pub mass_bound: f64,
    /// Bound on `|d(p)|` in the neighbourhood.
    pub gradient_bound: f64,
    /// Bound on `|d'(p)|` in the neighbourhood.
    pub curvature_bound: f64,
    /// Half-width of the neighbourhood around the reference price.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProcess {
    mixture: PatienceMixture,
    families: Vec<ConditionalDemandFamily>,
    variation: TimeVariation,
    reference_price: f64,
}

impl DemandProcess {
    pub fn new(
        mixture: PatienceMixture,
        families: Vec<ConditionalDemandFamily>,
        variation: TimeVariation,
        reference_price: f64,
    ) -> Result<Self> {
        if families.len() != mixture.len() {
            return Err(Error::Construction(format!(
                "{} demand families for {} patience atoms",
                families.len(),
                mixture.len()
            )));
        }
        for f in &families {
            f.validate()?;
        }
        variation.validate()?;
        if !(reference_price >= 0.0 && reference_price.is_finite()) {
            return Err(Error::Domain(format!("reference price {reference_price} must be >= 0")));
        }
        Ok(DemandProcess { mixture, families, variation, reference_price })
    }

    /// All buyers share patience `gamma` and the value distribution `family`.
    pub fn homogeneous(gamma: f64, family: ConditionalDemandFamily, reference_price: f64) -> Result<Self> {
        Self::new(PatienceMixture::single(gamma)?, vec![family], TimeVariation::Constant, reference_price)
    }

    pub fn with_variation(mut self, variation: TimeVariation) -> Result<Self> {
        variation.validate()?;
        self.variation = variation;
        Ok(self)
    }

    pub fn with_reference_price(mut self, reference_price: f64) -> Result<Self> {
        if !(reference_price >= 0.0 && reference_price.is_finite()) {
            return Err(Error::Domain(format!("reference price {reference_price} must be >= 0")));
        }
        self.reference_price = reference_price;
        Ok(self)
    }

    pub fn mixture(&self) -> &PatienceMixture {
        &self.mixture
    }

    pub fn families(&self) -> &[ConditionalDemandFamily] {
        &self.families
    }

    pub fn variation(&self) -> TimeVariation {
        self.variation
    }

    pub fn reference_price(&self) -> f64 {
        self.reference_price
    }

    /// Patience level shared by every buyer, if there is only one.
    pub fn homogeneous_gamma(&self) -> Option<f64> {
        match self.mixture.atoms() {
            [only] => Some(only.gamma),
            _ => None,
        }
    }

    fn atoms(&self) -> impl Iterator<Item = (&PatienceAtom, &ConditionalDemandFamily)> {
        self.mixture.atoms().iter().zip(&self.families)
    }

    fn check_price(p: f64) -> Result<()> {
        if p >= 0.0 && p.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("price must be non-negative, got {p}")))
        }
    }

    /// Mass of this period's arrivals who would buy at `p` if the price
    /// never moved, given the period's multiplier.
    pub fn static_demand(&self, p: f64, multiplier: f64) -> Result<f64> {
        Ok(multiplier * self.average_demand(p)?)
    }

    /// Time-averaged static demand `D(p)`.
    pub fn average_demand(&self, p: f64) -> Result<f64> {
        Self::check_price(p)?;
        Ok(self.atoms().map(|(a, f)| a.weight * f.survival(p)).sum())
    }

    /// Contribution of atom `k` to `D(p)` (already weighted).
    pub fn atom_demand(&self, k: usize, p: f64) -> f64 {
        self.mixture.atoms()[k].weight * self.families[k].survival(p)
    }

    /// `d(p) = D'(p)`.
    pub fn demand_gradient(&self, p: f64) -> Result<f64> {
        Self::check_price(p)?;
        self.atoms().map(|(a, f)| Ok(a.weight * f.gradient(p)?)).sum()
    }

    /// `D''(p)`.
    pub fn demand_curvature(&self, p: f64) -> Result<f64> {
        Self::check_price(p)?;
        self.atoms().map(|(a, f)| Ok(a.weight * f.curvature(p)?)).sum()
    }

    /// `(p D(p), p d(p) + D(p))`.
    pub fn revenue_and_gradient(&self, p: f64) -> Result<(f64, f64)> {
        let demand = self.average_demand(p)?;
        let grad = self.demand_gradient(p)?;
        Ok((p * demand, p * grad + demand))
    }

    /// Sup-norm bounds of `D`, `d` and `d'` over `[p* - radius, p* + radius]`
    /// (clipped at zero), evaluated on a fine grid that skips kinks.
    pub fn measure_regularity(&self, radius: f64) -> Regularity {
        const STEPS: usize = 2000;
        let lo = (self.reference_price - radius).max(0.0);
        let hi = self.reference_price + radius;
        let (mut d0, mut rho, mut h) = (0.0f64, 0.0f64, 0.0f64);
        for j in 0..=STEPS {
            let p = lo + (hi - lo) * j as f64 / STEPS as f64;
            if let Ok(v) = self.average_demand(p) {
                h = h.max(v);
            }
            if let Ok(g) = self.demand_gradient(p) {
                d0 = d0.max(g.abs());
            }
            if let Ok(c) = self.demand_curvature(p) {
                rho = rho.max(c.abs());
            }
        }
        Regularity { mass_bound: h, gradient_bound: d0, curvature_bound: rho, radius }
    }

    /// Checks declared regularity constants against the analytic curve.
    pub fn check_regularity(&self, declared: &Regularity) -> Result<()> {
        let measured = self.measure_regularity(declared.radius);
        let slack = 1e-12;
        if measured.mass_bound > declared.mass_bound + slack
            || measured.gradient_bound > declared.gradient_bound + slack
            || measured.curvature_bound > declared.curvature_bound + slack
        {
            return Err(Error::Construction(format!(
                "declared regularity {declared:?} is violated by the demand curve ({measured:?})"
            )));
        }
        Ok(())
    }
}
