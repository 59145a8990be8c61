//! Finite-support offspring laws and the constants derived from them.
//!
//! A law is written as a literal `"k:p,k:p,..."`, e.g. `"0:0.25,2:0.75"`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::unit_interval;

/// Tolerance used when a caller does not supply one for `q`.
pub const DEFAULT_EXTINCTION_TOL: f64 = 1e-13;

const NORMALIZATION_TOL: f64 = 1e-12;
const MAX_FIXED_POINT_ITERS: usize = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("offspring law has no entries with positive probability")]
    Empty,
    #[error("negative probability {p} for k = {k}")]
    NegativeProbability { k: u32, p: f64 },
    #[error("probability {p} for k = {k} is not finite")]
    NonFinite { k: u32, p: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("support point {0} listed twice")]
    DuplicateSupport(u32),
    #[error("cannot parse law literal `{0}` (expected `k:p,k:p,...`)")]
    Parse(String),
}

/// Why a (law, λ) pair is outside the transient positive-speed regime.
#[derive(Debug, Error, Clone, PartialEq, Serialize)]
pub enum RegimeError {
    #[error("lambda must be a positive finite number, got {0}")]
    InvalidLambda(f64),
    #[error("subcritical or critical law: m = {m} <= 1")]
    Subcritical { m: f64 },
    #[error("zero-speed regime: lambda = {lambda} <= lambda_c = {lambda_c}")]
    ZeroSpeed { lambda: f64, lambda_c: f64 },
    #[error("non-transient regime: lambda = {lambda} >= m = {m}")]
    NonTransient { lambda: f64, m: f64 },
}

impl RegimeError {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            RegimeError::InvalidLambda(_) => "invalid-lambda",
            RegimeError::Subcritical { .. } => "subcritical",
            RegimeError::ZeroSpeed { .. } => "zero-speed",
            RegimeError::NonTransient { .. } => "non-transient",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawStats {
    /// Mean offspring number.
    pub m: f64,
    /// Extinction probability.
    pub q: f64,
    /// Zero-speed threshold `E[ν q^(ν-1)]`.
    pub lambda_c: f64,
}

/// Probability mass function of the offspring number on a finite support.
///
/// Entries with zero probability are dropped; the support is kept sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct OffspringLaw {
    support: Vec<u32>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl OffspringLaw {
    pub fn new<I>(entries: I) -> Result<Self, LawError>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut entries: Vec<(u32, f64)> = entries.into_iter().collect();
        for &(k, p) in &entries {
            if !p.is_finite() {
                return Err(LawError::NonFinite { k, p });
            }
            if p < 0.0 {
                return Err(LawError::NegativeProbability { k, p });
            }
        }
        entries.sort_by_key(|&(k, _)| k);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(LawError::DuplicateSupport(w[0].0));
            }
        }
        let total: f64 = entries.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LawError::NotNormalized(total));
        }
        entries.retain(|&(_, p)| p > 0.0);
        if entries.is_empty() {
            return Err(LawError::Empty);
        }
        let support: Vec<u32> = entries.iter().map(|&(k, _)| k).collect();
        let probs: Vec<f64> = entries.iter().map(|&(_, p)| p).collect();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cdf.push(acc);
        }
        Ok(OffspringLaw {
            support,
            probs,
            cdf,
        })
    }

    /// Law putting all its mass on `k`.
    pub fn deterministic(k: u32) -> Self {
        OffspringLaw::new([(k, 1.0)]).expect("point mass is a valid law")
    }

    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn k_max(&self) -> u32 {
        *self.support.last().expect("law is non-empty")
    }

    pub fn prob(&self, k: u32) -> f64 {
        match self.support.binary_search(&k) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    /// `Some(b)` when the law is a point mass at `b`.
    pub fn degenerate(&self) -> Option<u32> {
        (self.support.len() == 1).then(|| self.support[0])
    }

    /// `m = Σ k p_k`.
    pub fn mean(&self) -> f64 {
        self.entries().map(|(k, p)| f64::from(k) * p).sum()
    }

    /// Probability generating function `f(s) = Σ p_k s^k`.
    pub fn pgf(&self, s: f64) -> f64 {
        self.entries().map(|(k, p)| p * s.powi(k as i32)).sum()
    }

    /// `f'(s) = Σ k p_k s^(k-1)` with `0^0 = 1`.
    pub fn pgf_derivative(&self, s: f64) -> f64 {
        self.entries()
            .filter(|&(k, _)| k > 0)
            .map(|(k, p)| f64::from(k) * p * s.powi(k as i32 - 1))
            .sum()
    }

    /// Smallest fixed point of the generating function, by monotone
    /// iteration `s_{n+1} = f(s_n)` from `s_0 = 0`.
    ///
    /// Stops once the step falls below `tol/2`, scaled by the local
    /// contraction factor so that slowly converging near-critical laws
    /// still land within `tol` of the root.
    pub fn extinction_probability(&self, tol: f64) -> f64 {
        assert!(tol > 0.0, "tolerance must be positive");
        if self.prob(0) == 0.0 {
            return 0.0;
        }
        if self.mean() <= 1.0 {
            return 1.0;
        }
        let mut s = 0.0f64;
        for _ in 0..MAX_FIXED_POINT_ITERS {
            let next = self.pgf(s);
            let step = next - s;
            s = next;
            let contraction = self.pgf_derivative(s).min(1.0 - 1e-12);
            if step < 0.5 * tol * (1.0 - contraction) {
                break;
            }
        }
        s
    }

    /// `λ_c = E[ν q^(ν-1)]`, i.e. `f'(q)`, with `0^0 = 1`.
    pub fn lambda_c(&self, q: f64) -> f64 {
        self.pgf_derivative(q)
    }

    pub fn stats(&self) -> LawStats {
        let q = self.extinction_probability(DEFAULT_EXTINCTION_TOL);
        LawStats {
            m: self.mean(),
            q,
            lambda_c: self.lambda_c(q),
        }
    }

    /// Succeeds iff `m > 1` and `λ_c < λ < m`.
    pub fn validate_regime(&self, lambda: f64) -> Result<LawStats, RegimeError> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(RegimeError::InvalidLambda(lambda));
        }
        let stats = self.stats();
        if stats.m <= 1.0 {
            return Err(RegimeError::Subcritical { m: stats.m });
        }
        if lambda <= stats.lambda_c {
            return Err(RegimeError::ZeroSpeed {
                lambda,
                lambda_c: stats.lambda_c,
            });
        }
        if lambda >= stats.m {
            return Err(RegimeError::NonTransient { lambda, m: stats.m });
        }
        Ok(stats)
    }

    /// Inverse-CDF lookup for a uniform `u ∈ [0,1)`.
    pub fn quantile(&self, u: f64) -> u32 {
        let i = self.cdf.partition_point(|&c| c <= u);
        self.support[i.min(self.support.len() - 1)]
    }

    /// Offspring count derived from a 64-bit key (used for per-node draws).
    pub fn sample_from_key(&self, key: u64) -> u32 {
        self.quantile(unit_interval(key))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if let Some(b) = self.degenerate() {
            return b;
        }
        self.quantile(rng.random::<f64>())
    }
}

impl fmt::Display for OffspringLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, p)) in self.entries().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}:{p}")?;
        }
        Ok(())
    }
}

impl FromStr for OffspringLaw {
    type Err = LawError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LawError::Parse(s.to_string());
        let mut entries = Vec::new();
        for item in s.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let (k, p) = item.split_once(':').ok_or_else(bad)?;
            let k: u32 = k.trim().parse().map_err(|_| bad())?;
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            entries.push((k, p));
        }
        if entries.is_empty() {
            return Err(bad());
        }
        OffspringLaw::new(entries)
    }
}

impl Serialize for OffspringLaw {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OffspringLaw {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::Seed;
    use proptest::prelude::*;

    fn law(s: &str) -> OffspringLaw {
        s.parse().unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(law("0:0.25,2:0.75").mean(), 1.5);
        assert_eq!(law("1:0.5,3:0.5").mean(), 2.0);
        assert_eq!(law("2:1.0").mean(), 2.0);
    }

    #[test]
    fn extinction_examples() {
        assert_eq!(law("2:1.0").extinction_probability(1e-12), 0.0);
        assert_eq!(law("0:1.0").extinction_probability(1e-12), 1.0);
        let q = law("0:0.25,2:0.75").extinction_probability(1e-12);
        assert!((q - 1.0 / 3.0).abs() <= 1e-12, "q = {q}");
    }

    #[test]
    fn unary_law_never_dies() {
        assert_eq!(law("1:1").extinction_probability(1e-12), 0.0);
    }

    #[test]
    fn lambda_c_examples() {
        assert_eq!(law("2:1.0").lambda_c(0.0), 0.0);
        assert!((law("0:0.25,2:0.75").lambda_c(1.0 / 3.0) - 0.5).abs() < 1e-15);
        assert_eq!(law("1:0.5,3:0.5").lambda_c(0.0), 0.5);
    }

    #[test]
    fn regime_examples() {
        let l = law("0:0.25,2:0.75");
        let st = l.validate_regime(0.8).unwrap();
        assert!((st.lambda_c - 0.5).abs() < 1e-12);
        assert!(matches!(
            l.validate_regime(0.4),
            Err(RegimeError::ZeroSpeed { .. })
        ));
        assert!(matches!(
            law("2:1.0").validate_regime(2.0),
            Err(RegimeError::NonTransient { .. })
        ));
        assert!(matches!(
            law("0:0.5,1:0.5").validate_regime(0.3),
            Err(RegimeError::Subcritical { .. })
        ));
        assert!(matches!(
            l.validate_regime(-1.0),
            Err(RegimeError::InvalidLambda(_))
        ));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!("".parse::<OffspringLaw>(), Err(LawError::Parse(_))));
        assert!(matches!("0:0.5,x:0.5".parse::<OffspringLaw>(), Err(LawError::Parse(_))));
        assert!(matches!("0:0.5,2:0.6".parse::<OffspringLaw>(), Err(LawError::NotNormalized(_))));
        assert!(matches!("1:0.5,1:0.5".parse::<OffspringLaw>(), Err(LawError::DuplicateSupport(1))));
        assert!(matches!("1:-0.5,2:1.5".parse::<OffspringLaw>(), Err(LawError::NegativeProbability { .. })));
    }

    #[test]
    fn display_round_trip() {
        let l = law("2:0.75, 0:0.25");
        assert_eq!(l.to_string(), "0:0.25,2:0.75");
        assert_eq!(law(&l.to_string()), l);
    }

    #[test]
    fn zero_mass_entries_are_dropped() {
        let l = law("0:0,1:0.5,3:0.5");
        assert_eq!(l.support(), &[1, 3]);
    }

    #[test]
    fn sample_deterministic_law() {
        let mut rng = Seed(3).rng();
        for _ in 0..100 {
            assert_eq!(law("2:1.0").sample(&mut rng), 2);
        }
    }

    #[test]
    fn sample_frequencies() {
        let n = 200_000;
        let mut rng = Seed(11).rng();
        let l = law("0:0.25,2:0.75");
        let zeros = (0..n).filter(|_| l.sample(&mut rng) == 0).count();
        let freq = zeros as f64 / n as f64;
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((freq - 0.25).abs() < 3.0 * sigma, "freq = {freq}");

        let l = law("1:0.5,3:0.5");
        let xs: Vec<f64> = (0..n).map(|_| f64::from(l.sample(&mut rng))).collect();
        let (m, se) = crate::stats::mean_stderr(&xs);
        assert!((m - 2.0).abs() < 3.0 * se, "mean = {m} se = {se}");
    }

    #[test]
    fn quantile_edges() {
        let l = law("0:0.25,2:0.75");
        assert_eq!(l.quantile(0.0), 0);
        assert_eq!(l.quantile(0.2499), 0);
        assert_eq!(l.quantile(0.25), 2);
        assert_eq!(l.quantile(0.999_999_999), 2);
    }

    fn arb_law() -> impl Strategy<Value = OffspringLaw> {
        prop::collection::vec(0.0f64..1.0, 2..6).prop_map(|w| {
            let total: f64 = w.iter().sum::<f64>() + 1e-9;
            let mut entries: Vec<(u32, f64)> =
                w.iter().enumerate().map(|(k, x)| (k as u32, x / total)).collect();
            let rest = 1.0 - entries.iter().map(|e| e.1).sum::<f64>();
            entries[0].1 += rest;
            OffspringLaw::new(entries).unwrap()
        })
    }

    proptest! {
        #[test]
        fn fixed_point_residual(l in arb_law()) {
            let tol = 1e-10;
            let q = l.extinction_probability(tol);
            prop_assert!((l.pgf(q) - q).abs() <= 10.0 * tol);
            prop_assert!((0.0..=1.0).contains(&q));
        }

        #[test]
        fn moving_mass_from_zero_to_two_lowers_q(
            p0 in 0.05f64..0.5, p1 in 0.0f64..0.3, shift in 0.0f64..1.0
        ) {
            let p2 = 1.0 - p0 - p1;
            prop_assume!(p2 > 0.0);
            let d = shift * p0;
            let a = OffspringLaw::new([(0, p0), (1, p1), (2, p2)]).unwrap();
            let b = OffspringLaw::new([(0, p0 - d), (1, p1), (2, p2 + d)]).unwrap();
            let qa = a.extinction_probability(1e-12);
            let qb = b.extinction_probability(1e-12);
            prop_assert!(qb <= qa + 1e-9, "qa = {qa} qb = {qb}");
        }

        #[test]
        fn lambda_c_below_mean(l in arb_law()) {
            let st = l.stats();
            if st.m > 1.0 {
                prop_assert!(st.lambda_c >= 0.0);
                prop_assert!(st.lambda_c < st.m);
            }
        }
    }
}
