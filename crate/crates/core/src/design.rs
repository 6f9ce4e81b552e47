//! Switchback designs: a descending price ladder, i.i.d. level probabilities
//! and a per-period ending probability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{uniform01, SimRng};

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchbackDesign {
    prices: Vec<f64>,
    probs: Vec<f64>,
    delta: f64,
    price_cap: f64,
    epsilon_bar: f64,
}

impl SwitchbackDesign {
    /// General ladder `p(0) > p(1) > ... > p(K)` in `[0, price_cap]`.
    pub fn new(prices: Vec<f64>, probs: Vec<f64>, delta: f64, price_cap: f64) -> Result<Self> {
        if prices.len() < 2 {
            return Err(Error::Construction("a switchback design needs at least two prices".into()));
        }
        if prices.len() != probs.len() {
            return Err(Error::Construction(format!("{} prices but {} probabilities", prices.len(), probs.len())));
        }
        if prices.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::Construction(format!("prices must be strictly decreasing: {prices:?}")));
        }
        if prices.iter().any(|&p| !(p >= 0.0 && p <= price_cap)) {
            return Err(Error::Construction(format!("prices {prices:?} must lie in [0, {price_cap}]")));
        }
        if probs.iter().any(|&q| !(q > 0.0)) {
            return Err(Error::Construction(format!("probabilities must be positive: {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::Construction(format!("probabilities sum to {total}, expected 1")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Construction(format!("ending probability {delta} must lie in (0, 1)")));
        }
        let epsilon_bar = prices[0] - prices[prices.len() - 1];
        Ok(SwitchbackDesign { prices, probs, delta, price_cap, epsilon_bar })
    }

    /// Prices `(p*, p* - eps)` with probabilities `(1 - q, q)`.
    pub fn two_price(p_star: f64, eps: f64, q: f64, delta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= p_star) {
            return Err(Error::Construction(format!("discount {eps} must lie in (0, p* = {p_star}]")));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Construction(format!("discount probability {q} must lie in (0, 1)")));
        }
        Self::new(vec![p_star, p_star - eps], vec![1.0 - q, q], delta, p_star)
    }

    /// Prices `(p*, p* - eps, p* - 2 eps)` with probabilities `(1 - q1 - q2, q1, q2)`.
    pub fn three_price(p_star: f64, eps: f64, q1: f64, q2: f64, delta: f64) -> Result<Self> {
        if !(eps > 0.0 && 2.0 * eps <= p_star) {
            return Err(Error::Construction(format!("discount {eps} must satisfy 0 < 2 eps <= p* = {p_star}")));
        }
        if !(q1 > 0.0 && q2 > 0.0 && q1 + q2 < 1.0) {
            return Err(Error::Construction(format!(
                "discount probabilities ({q1}, {q2}) must be positive with sum below 1"
            )));
        }
        Self::new(vec![p_star, p_star - eps, p_star - 2.0 * eps], vec![1.0 - q1 - q2, q1, q2], delta, p_star)
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn price_cap(&self) -> f64 {
        self.price_cap
    }

    pub fn epsilon_bar(&self) -> f64 {
        self.epsilon_bar
    }

    /// Number of price levels, `K + 1`.
    pub fn levels(&self) -> usize {
        self.prices.len()
    }

    pub fn reference_price(&self) -> f64 {
        self.prices[0]
    }

    /// Common gap between adjacent prices, if the ladder is equally spaced.
    pub fn spacing(&self) -> Option<f64> {
        let gap = self.prices[0] - self.prices[1];
        let tol = 1e-9 * gap.max(1.0);
        self.prices.windows(2).all(|w| ((w[0] - w[1]) - gap).abs() <= tol).then_some(gap)
    }

    /// Same ladder and probabilities with every price moved by `alpha`.
    pub fn shifted(&self, alpha: f64) -> Result<Self> {
        let prices: Vec<f64> = self.prices.iter().map(|p| p + alpha).collect();
        Self::new(prices, self.probs.clone(), self.delta, self.price_cap + alpha.max(0.0))
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.prices.clone(), self.probs.clone(), delta, self.price_cap)
    }

    /// `E[(p - P)+]` for a price `P` drawn from the design, i.e. the product
    /// of the probability of a strictly lower price and the expected discount
    /// conditional on one.
    pub fn expected_discount_mass(&self, p: f64) -> f64 {
        self.prices.iter().zip(&self.probs).map(|(&pi, &qi)| qi * (p - pi).max(0.0)).sum()
    }

    /// Probability of seeing a price strictly below `p`.
    pub fn lower_price_probability(&self, p: f64) -> f64 {
        self.prices.iter().zip(&self.probs).filter(|(&pi, _)| pi < p).map(|(_, &qi)| qi).sum()
    }

    /// Draws a price index by inverting the cumulative level probabilities.
    pub fn draw_price(&self, rng: &mut SimRng) -> usize {
        let u = uniform01(rng);
        let mut acc = 0.0;
        for (i, q) in self.probs.iter().enumerate() {
            acc += q;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    /// Draws the experiment length, geometric on `{1, 2, ...}` with success
    /// probability `delta`, by inversion: `T = 1 + floor(ln U / ln(1 - delta))`
    /// with `U` uniform on `(0, 1]`.
    pub fn draw_horizon(&self, rng: &mut SimRng) -> usize {
        let u = 1.0 - uniform01(rng);
        let t = (u.ln() / (-self.delta).ln_1p()).floor();
        1 + t.min(usize::MAX as f64 / 2.0) as usize
    }
}
