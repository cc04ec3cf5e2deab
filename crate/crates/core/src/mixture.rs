//! Gaussian mixtures over log price.
//!
//! A [`GaussianMixture`] is the density returned by the network for one
//! feature cell and week, and also the result of pooling several of them
//! (ensemble members, or the cells of a larger area).

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Smallest admissible component variance, in squared log-price units.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Tolerance on the sum of component weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Gaussian density with mean `mean` and variance `var`.
pub fn normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    let d = y - mean;
    (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
}

pub(crate) fn normal_ln_pdf(y: f64, mean: f64, var: f64) -> f64 {
    let d = y - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    #[serde(rename = "w")]
    pub weight: f64,
    #[serde(rename = "mu")]
    pub mean: f64,
    pub var: f64,
}

impl Component {
    pub fn new(weight: f64, mean: f64, var: f64) -> Self {
        Self { weight, mean, var }
    }
}

/// Summary statistics of a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean_log: f64,
    pub median_log: f64,
    /// `exp(mean_log)`.
    pub gmean_price: f64,
    /// Mean of the implied lognormal mixture over price.
    pub mean_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr", into = "MixtureRepr")]
pub struct GaussianMixture {
    components: Vec<Component>,
}

#[derive(Serialize, Deserialize)]
struct MixtureRepr {
    components: Vec<Component>,
}

impl TryFrom<MixtureRepr> for GaussianMixture {
    type Error = Error;

    fn try_from(r: MixtureRepr) -> Result<Self> {
        GaussianMixture::new(r.components)
    }
}

impl From<GaussianMixture> for MixtureRepr {
    fn from(m: GaussianMixture) -> Self {
        MixtureRepr {
            components: m.components,
        }
    }
}

impl GaussianMixture {
    /// Validates weights (non-negative, summing to one) and variances.
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        let mut total = 0.0;
        for (k, c) in components.iter().enumerate() {
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(Error::InvalidArgument(format!("component {k} has weight {}", c.weight)));
            }
            if !c.mean.is_finite() {
                return Err(Error::InvalidArgument(format!("component {k} has mean {}", c.mean)));
            }
            if !(c.var >= VARIANCE_FLOOR) || !c.var.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "component {k} variance {} below floor {VARIANCE_FLOOR}",
                    c.var
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {total}")));
        }
        Ok(Self { components })
    }

    /// Single Gaussian component.
    pub fn normal(mean: f64, var: f64) -> Result<Self> {
        Self::new(vec![Component::new(1.0, mean, var)])
    }

    /// Constructs without validation; callers guarantee the invariants.
    pub(crate) fn from_valid(components: Vec<Component>) -> Self {
        debug_assert!(Self::new(components.clone()).is_ok());
        Self { components }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal_pdf(y, c.mean, c.var))
            .sum()
    }

    /// Log density, stable far in the tails.
    pub fn ln_pdf(&self, y: f64) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for c in &self.components {
            if c.weight > 0.0 {
                max = max.max(c.weight.ln() + normal_ln_pdf(y, c.mean, c.var));
            }
        }
        let sum: f64 = self
            .components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| (c.weight.ln() + normal_ln_pdf(y, c.mean, c.var) - max).exp())
            .sum();
        max + sum.ln()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * std_normal_cdf((y - c.mean) / c.var.sqrt()))
            .sum()
    }

    /// Interval that holds all but a negligible amount of mass.
    pub fn support_envelope(&self) -> (f64, f64) {
        let max_sd = self.components.iter().map(|c| c.var.sqrt()).fold(0.0, f64::max);
        let lo = self.components.iter().map(|c| c.mean).fold(f64::INFINITY, f64::min);
        let hi = self.components.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max);
        (lo - 10.0 * max_sd, hi + 10.0 * max_sd)
    }

    /// Inverse CDF by safeguarded Newton iteration inside a shrinking bisection bracket.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level {p} outside (0, 1)")));
        }
        let (mut lo, mut hi) = self.support_envelope();
        let width = hi - lo;
        while self.cdf(lo) > p {
            lo -= width;
        }
        while self.cdf(hi) < p {
            hi += width;
        }
        let mut y = 0.5 * (lo + hi);
        for _ in 0..400 {
            let f = self.cdf(y) - p;
            if f == 0.0 {
                return Ok(y);
            }
            if f < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            if hi - lo <= 4.0 * f64::EPSILON * (1.0 + y.abs()) {
                break;
            }
            let slope = self.pdf(y);
            let newton = y - f / slope;
            y = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(y)
    }

    pub fn mean_log(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance_log(&self) -> f64 {
        let m = self.mean_log();
        self.components
            .iter()
            .map(|c| c.weight * (c.var + (c.mean - m).powi(2)))
            .sum()
    }

    pub fn moments(&self) -> Moments {
        let mean_log = self.mean_log();
        let median_log = self.quantile(0.5).expect("0.5 is a valid level");
        Moments {
            mean_log,
            median_log,
            gmean_price: mean_log.exp(),
            mean_price: self
                .components
                .iter()
                .map(|c| c.weight * (c.mean + 0.5 * c.var).exp())
                .sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.last().expect("non-empty");
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        chosen.mean + chosen.var.sqrt() * z
    }
}

/// Weighted pooling: the density `Σ w_i f_i / Σ w_i`, kept as the
/// concatenation of all components with rescaled weights.
pub fn pool(mixtures: &[GaussianMixture], weights: &[f64]) -> Result<GaussianMixture> {
    if mixtures.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} mixtures but {} weights",
            mixtures.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument(
            "pool weights must be finite and non-negative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("pool weights sum to zero".into()));
    }
    let mut components = Vec::with_capacity(mixtures.iter().map(GaussianMixture::len).sum());
    for (m, w) in mixtures.iter().zip(weights) {
        let scale = w / total;
        components.extend(
            m.components
                .iter()
                .map(|c| Component::new(c.weight * scale, c.mean, c.var)),
        );
    }
    let sum: f64 = components.iter().map(|c| c.weight).sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        for c in &mut components {
            c.weight /= sum;
        }
    }
    Ok(GaussianMixture::from_valid(components))
}

/// Equal-weight pooling.
pub fn pool_equal(mixtures: &[GaussianMixture]) -> Result<GaussianMixture> {
    pool(mixtures, &vec![1.0; mixtures.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mix(parts: &[(f64, f64, f64)]) -> GaussianMixture {
        GaussianMixture::new(parts.iter().map(|&(w, m, v)| Component::new(w, m, v)).collect()).unwrap()
    }

    /// Composite Simpson quadrature; independent of the erfc-based CDF.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
        h * (0.5 * (f(a) + f(b)) + inner)
    }

    #[test]
    fn validation() {
        assert!(GaussianMixture::new(vec![]).is_err());
        assert!(GaussianMixture::new(vec![Component::new(0.6, 0.0, 1.0)]).is_err());
        assert!(GaussianMixture::new(vec![Component::new(1.0, 0.0, 1e-7)]).is_err());
        assert!(GaussianMixture::new(vec![Component::new(1.2, 0.0, 1.0), Component::new(-0.2, 0.0, 1.0)]).is_err());
    }

    #[test]
    fn pdf_examples() {
        assert!((GaussianMixture::normal(0.0, 1.0).unwrap().pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        let pair = mix(&[(0.5, 0.0, 1.0), (0.5, 4.0, 1.0)]);
        // 2 * 0.5 * phi(2) = phi(2)
        let phi2 = (-2.0f64).exp() / (2.0 * PI).sqrt();
        assert!((pair.pdf(2.0) - phi2).abs() < 1e-15);
        assert!((pair.pdf(2.0) - 0.05399).abs() < 1e-5);
    }

    #[test]
    fn pdf_integrates_to_one() {
        for m in [
            mix(&[(1.0, 13.0, 0.04)]),
            mix(&[(0.2, 12.0, 0.01), (0.5, 13.0, 0.2), (0.3, 14.5, 0.05)]),
            mix(&[(0.5, 0.0, 1.0), (0.5, 4.0, 1.0)]),
        ] {
            let (a, b) = m.support_envelope();
            let total = trapezoid(|y| m.pdf(y), a, b, 200_000);
            assert!((total - 1.0).abs() < 1e-6, "{total}");
        }
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(GaussianMixture::normal(0.0, 1.0).unwrap().cdf(0.0), 0.5);
        assert!((mix(&[(0.5, -1.0, 1.0), (0.5, 1.0, 1.0)]).cdf(0.0) - 0.5).abs() < 1e-15);
        let m = mix(&[(0.7, 13.0, 0.04), (0.3, 14.0, 0.09)]);
        let (a, _) = m.support_envelope();
        let quad = simpson(|y| m.pdf(y), a, 13.5, 20_000);
        assert!((m.cdf(13.5) - quad).abs() < 1e-8, "{} vs {quad}", m.cdf(13.5));
    }

    #[test]
    fn quantile_closed_form() {
        let (mu, var): (f64, f64) = (13.0, 0.04);
        let m = GaussianMixture::normal(mu, var).unwrap();
        let n = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        for p in [0.01, 0.2, 0.5, 0.8, 0.99] {
            let want = mu + var.sqrt() * statrs::distribution::ContinuousCDF::inverse_cdf(&n, p);
            assert!((m.quantile(p).unwrap() - want).abs() < 1e-9);
        }
        let pair = mix(&[(0.5, -1.0, 1.0), (0.5, 1.0, 1.0)]);
        assert!(pair.quantile(0.5).unwrap().abs() < 1e-9);
        assert!(m.quantile(0.0).is_err());
        assert!(m.quantile(1.0).is_err());
        assert!(m.quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_matches_grid_inversion_of_quadrature() {
        let m = mix(&[(0.25, 12.4, 0.03), (0.45, 13.1, 0.08), (0.3, 13.9, 0.05)]);
        let (a, b) = m.support_envelope();
        // cumulative Simpson panels on a fine grid, then linear search
        let n = 400_000;
        let h = (b - a) / n as f64;
        for p in [0.2, 0.8] {
            let mut acc = 0.0;
            let mut y = a;
            let mut found = None;
            for i in 0..n {
                let x0 = a + i as f64 * h;
                let step = h / 6.0 * (m.pdf(x0) + 4.0 * m.pdf(x0 + 0.5 * h) + m.pdf(x0 + h));
                if acc + step >= p {
                    // interpolate inside the panel
                    found = Some(x0 + h * (p - acc) / step);
                    break;
                }
                acc += step;
                y = x0 + h;
            }
            let grid = found.unwrap_or(y);
            assert!((m.quantile(p).unwrap() - grid).abs() < 1e-6, "p={p}");
        }
    }

    #[test]
    fn moments_lognormal_identities() {
        let m = GaussianMixture::normal(13.0, 0.04).unwrap();
        let mo = m.moments();
        assert!((mo.mean_log - 13.0).abs() < 1e-12);
        assert!((mo.median_log - 13.0).abs() < 1e-9);
        assert!((mo.gmean_price / 13f64.exp() - 1.0).abs() < 1e-12);
        assert!((mo.mean_price / 13.02f64.exp() - 1.0).abs() < 1e-12);
        assert!((mix(&[(0.5, 12.0, 0.01), (0.5, 14.0, 0.01)]).mean_log() - 13.0).abs() < 1e-12);
    }

    #[test]
    fn mean_price_matches_monte_carlo() {
        let m = mix(&[
            (0.1, 12.2, 0.02),
            (0.4, 12.9, 0.05),
            (0.3, 13.4, 0.03),
            (0.2, 14.0, 0.1),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mc: f64 = (0..n).map(|_| m.sample(&mut rng).exp()).sum::<f64>() / n as f64;
        assert!((m.moments().mean_price / mc - 1.0).abs() < 0.002);
    }

    #[test]
    fn pool_examples() {
        let m = mix(&[(0.3, 1.0, 0.5), (0.7, 2.0, 0.2)]);
        let same = pool(std::slice::from_ref(&m), &[1.0]).unwrap();
        assert_eq!(same, m);
        let a = GaussianMixture::normal(0.0, 1.0).unwrap();
        let b = GaussianMixture::normal(4.0, 1.0).unwrap();
        let p = pool(&[a, b], &[0.5, 0.5]).unwrap();
        assert!((p.pdf(2.0) - 0.05399).abs() < 1e-5);
        let copies = vec![m.clone(); 30];
        let p30 = pool_equal(&copies).unwrap();
        assert_eq!(p30.len(), 60);
        for y in [-1.0, 0.5, 1.5, 2.2, 4.0] {
            assert!((p30.pdf(y) - m.pdf(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_errors() {
        let m = GaussianMixture::normal(0.0, 1.0).unwrap();
        assert!(pool(std::slice::from_ref(&m), &[0.0]).is_err());
        assert!(pool(&[m.clone(), m.clone()], &[1.0]).is_err());
        assert!(pool(&[m], &[-1.0]).is_err());
    }

    #[test]
    fn json_shape() {
        let m = mix(&[(0.25, 1.0, 0.5), (0.75, 2.0, 0.2)]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(
            s,
            r#"{"components":[{"w":0.25,"mu":1.0,"var":0.5},{"w":0.75,"mu":2.0,"var":0.2}]}"#
        );
        let back: GaussianMixture = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<GaussianMixture>(r#"{"components":[{"w":0.5,"mu":1.0,"var":0.5}]}"#).is_err());
    }

    fn arb_mixture() -> impl proptest::strategy::Strategy<Value = GaussianMixture> {
        use proptest::prelude::*;
        proptest::collection::vec((0.05f64..1.0, 10.0f64..16.0, 0.001f64..0.5), 1..6).prop_map(|parts| {
            let total: f64 = parts.iter().map(|p| p.0).sum();
            GaussianMixture::new(parts.iter().map(|&(w, m, v)| Component::new(w / total, m, v)).collect()).unwrap()
        })
    }

    proptest::proptest! {
        #[test]
        fn quantile_inverts_cdf(m in arb_mixture(), p in 0.001f64..0.999) {
            let y = m.quantile(p).unwrap();
            proptest::prop_assert!((m.cdf(y) - p).abs() < 1e-10);
        }

        #[test]
        fn quantile_of_cdf_is_identity(m in arb_mixture(), t in 0.05f64..0.95) {
            let lo = m.quantile(0.001).unwrap();
            let hi = m.quantile(0.999).unwrap();
            let y = lo + t * (hi - lo);
            // inversion is only well-posed where the density is not vanishing
            proptest::prop_assume!(m.pdf(y) > 1e-3);
            proptest::prop_assert!((m.quantile(m.cdf(y)).unwrap() - y).abs() < 1e-8);
        }

        #[test]
        fn cdf_monotone(m in arb_mixture(), a in 8.0f64..18.0, d in 1e-3f64..2.0) {
            proptest::prop_assert!(m.cdf(a + d) >= m.cdf(a));
        }

        #[test]
        fn pool_is_linear(a in arb_mixture(), b in arb_mixture(), wa in 0.01f64..5.0, wb in 0.01f64..5.0, y in 9.0f64..17.0) {
            let p = pool(&[a.clone(), b.clone()], &[wa, wb]).unwrap();
            let want = (wa * a.pdf(y) + wb * b.pdf(y)) / (wa + wb);
            proptest::prop_assert!((p.pdf(y) - want).abs() <= 1e-12 * (1.0 + want));
        }

        #[test]
        fn arithmetic_mean_dominates_geometric(m in arb_mixture()) {
            let mo = m.moments();
            proptest::prop_assert!(mo.mean_price > mo.gmean_price);
        }
    }
}
