//! The invariant law of the environment seen from the walker, through its
//! degree marginal, and the Green-function identity on double trees.

use rayon::prelude::*;
use serde::Serialize;

use super::EnvError;
use crate::conductance::beta_regular;
use crate::offspring::OffspringLaw;
use crate::seed::Seed;
use crate::speed::{conductance_sample, SampleConfig, SpeedError};
use crate::stats::{mean_stderr, pairwise_sum};
use crate::tree::double::DoubleTree;
use crate::tree::{NodeId, TreeArena};
use crate::walk::{double_step_y, step_arena};

/// Unnormalized stationary density at the root: `(λ+ν⁺) β_e / (λ−1+β_e+Σβ⁺_i)`.
pub fn density_weight(nu_plus: u32, beta_e: f64, beta_plus: &[f64], lambda: f64) -> Result<f64, EnvError> {
    if beta_plus.len() != nu_plus as usize {
        return Err(EnvError::Domain(format!(
            "{} conductances given for {nu_plus} children",
            beta_plus.len()
        )));
    }
    if beta_e == 0.0 {
        return Ok(0.0);
    }
    let den = lambda - 1.0 + beta_e + beta_plus.iter().sum::<f64>();
    if den <= 0.0 {
        return Err(EnvError::NonpositiveDenominator(den));
    }
    Ok((lambda + f64::from(nu_plus)) * beta_e / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeSource {
    Empirical,
    Predicted,
}

/// Law of the number of children of the walker's position.
#[derive(Clone, Debug, Serialize)]
pub struct DegreeLaw {
    pub source: DegreeSource,
    /// `pmf[k]` is the probability of `k` children.
    pub pmf: Vec<f64>,
    pub samples: usize,
    /// Mean of the unnormalized weights (predicted law only).
    pub normalization: Option<f64>,
    pub normalization_stderr: Option<f64>,
    /// Replicas discarded as extinct (empirical law only).
    pub rejected_replicas: usize,
}

impl DegreeLaw {
    pub fn prob(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn total_variation(&self, other: &DegreeLaw) -> f64 {
        crate::stats::total_variation(&self.pmf, &other.pmf)
    }
}

fn normalize(mut pmf: Vec<f64>) -> Vec<f64> {
    let total = pairwise_sum(&pmf);
    for p in &mut pmf {
        *p /= total;
    }
    pmf
}

/// Degree marginal of the limit law, by weighting draws of
/// `(ν⁺, β_e, β⁺_1, …, β⁺_ν⁺)` with [`density_weight`].
pub fn predicted_degree_law(law: &OffspringLaw, lambda: f64, cfg: &SampleConfig, seed: Seed) -> Result<DegreeLaw, EnvError> {
    law.validate_regime(lambda).map_err(SpeedError::from)?;
    if cfg.samples < 2 {
        return Err(EnvError::InsufficientSamples(cfg.samples));
    }
    let draws: Vec<(u32, f64)> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let (nu, b0, den) = conductance_sample(law, lambda, cfg, seed.derive("sample").index(i))?;
            let w = if b0 == 0.0 {
                0.0
            } else {
                (lambda + f64::from(nu)) * b0 / den
            };
            Ok((nu, w))
        })
        .collect::<Result<_, SpeedError>>()?;
    let k_max = law.k_max() as usize;
    let mut by_k = vec![Vec::new(); k_max + 1];
    for &(nu, w) in &draws {
        by_k[nu as usize].push(w);
    }
    let pmf: Vec<f64> = by_k.iter().map(|ws| pairwise_sum(ws)).collect();
    let weights: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let (norm, norm_se) = mean_stderr(&weights);
    if norm <= 0.0 {
        return Err(EnvError::NonpositiveDenominator(norm));
    }
    Ok(DegreeLaw {
        source: DegreeSource::Predicted,
        pmf: normalize(pmf),
        samples: cfg.samples,
        normalization: Some(norm),
        normalization_stderr: Some(norm_se),
        rejected_replicas: 0,
    })
}

/// Empirical law of the number of children of `X_horizon` over surviving
/// trees. `e_*` counts as having one child.
pub fn empirical_degree_law(
    law: &OffspringLaw,
    lambda: f64,
    horizon: usize,
    replicas: usize,
    extinction_budget: usize,
    seed: Seed,
) -> Result<DegreeLaw, EnvError> {
    law.validate_regime(lambda).map_err(SpeedError::from)?;
    if replicas == 0 {
        return Err(EnvError::InsufficientSamples(0));
    }
    let degrees: Vec<Option<usize>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut arena = TreeArena::new(law.clone(), seed.derive("tree").index(i));
            if arena.is_extinct(extinction_budget) {
                return None;
            }
            let mut rng = seed.derive("walk").index(i).rng();
            let mut x = NodeId::STAR;
            for _ in 0..horizon {
                x = step_arena(&mut arena, x, lambda, &mut rng);
            }
            Some(if x == NodeId::STAR { 1 } else { arena.child_count(x) })
        })
        .collect();
    let rejected = degrees.iter().filter(|d| d.is_none()).count();
    let kept: Vec<usize> = degrees.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(SpeedError::AllReplicasRejected(replicas).into());
    }
    let k_max = (law.k_max() as usize).max(1);
    let mut pmf = vec![0.0; k_max + 1];
    for &k in &kept {
        pmf[k] += 1.0;
    }
    Ok(DegreeLaw {
        source: DegreeSource::Empirical,
        pmf: normalize(pmf),
        samples: kept.len(),
        normalization: None,
        normalization_stderr: None,
        rejected_replicas: rejected,
    })
}

/// Monte Carlo and closed form of the weighted Green sum at `e⁺` on a
/// double tree of two regular trees.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GreenCheck {
    pub b_left: u32,
    pub b_right: u32,
    pub lambda: f64,
    pub mc: f64,
    pub stderr: f64,
    pub closed: f64,
    /// `λ^{-1}(1−β_left)(1−β_right)`; the weighted sum converges when this
    /// is below 1, and it bounds the geometric decay of late contributions.
    pub truncation_factor: f64,
}

impl GreenCheck {
    /// Agreement within `max(abs_tol, k·stderr)`.
    pub fn agrees(&self, abs_tol: f64, k: f64) -> bool {
        (self.mc - self.closed).abs() <= abs_tol.max(k * self.stderr)
    }
}

/// Estimates `E[Σ_{ℓ≥0} λ^{−N_ℓ(e⁺,e⁻)} 1{Y_ℓ = e⁺}]`, where `N_ℓ` counts
/// crossings of the directed edge `e⁺ → e⁻` before time `ℓ`, and compares it
/// with `(λ+b_r)/(λ−1+β_l+b_r β_r)`.
pub fn green_sum_check(
    b_left: u32,
    b_right: u32,
    lambda: f64,
    horizon: usize,
    replicas: usize,
    seed: Seed,
) -> Result<GreenCheck, EnvError> {
    if !(lambda > 0.0) || lambda >= f64::from(b_left.min(b_right)) {
        return Err(EnvError::Domain(format!(
            "need 0 < lambda < min({b_left}, {b_right}), got {lambda}"
        )));
    }
    if replicas < 2 {
        return Err(EnvError::InsufficientSamples(replicas));
    }
    let beta_l = beta_regular(b_left, lambda)?;
    let beta_r = beta_regular(b_right, lambda)?;
    let closed = (lambda + f64::from(b_right)) / (lambda - 1.0 + beta_l + f64::from(b_right) * beta_r);
    let truncation_factor = (1.0 - beta_l) * (1.0 - beta_r) / lambda;

    let sums: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.derive("green").index(i);
            let left = TreeArena::new(OffspringLaw::deterministic(b_left), s.derive("left"));
            let right = TreeArena::new(OffspringLaw::deterministic(b_right), s.derive("right"));
            let mut dt = DoubleTree::glue(left, right);
            let mut rng = s.derive("walk").rng();
            let root = dt.root();
            let mut cur = root.clone();
            let mut weight = 1.0;
            let mut total = 1.0;
            for _ in 0..horizon {
                let next = double_step_y(&mut dt, &cur, lambda, &mut rng);
                if cur == root && dt.is_root(&next) {
                    weight /= lambda;
                }
                if next == root {
                    total += weight;
                }
                cur = next;
            }
            total
        })
        .collect();
    let (mc, stderr) = mean_stderr(&sums);
    Ok(GreenCheck {
        b_left,
        b_right,
        lambda,
        mc,
        stderr,
        closed,
        truncation_factor,
    })
}
