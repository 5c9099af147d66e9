use std::sync::Arc;

use super::{Scm, ScmError, World};
use crate::maps::{DiscreteMatching, MatchingKind};
use crate::measures::DiscreteMeasure;
use crate::{rng, Measure};

/// `n` draws of the `X` noise vector. Draw `i` comes from substream `i`, so
/// it does not depend on `n`.
pub fn noise_sample(m: &Scm, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, ScmError> {
    if n == 0 {
        return Err(ScmError::EmptySample);
    }
    Ok((0..n)
        .map(|i| {
            let mut r = rng::substream(seed, i as u64);
            m.noise().iter().map(|law| law.sample(&mut r)).collect()
        })
        .collect())
}

/// Empirical `P_a = g_a♯Q`. The same noise draws are used for every `a`, so
/// atom `i` of two samples with equal seed is one unit under two
/// interventions. Coincident atoms are kept separate.
pub fn interventional_sample(m: &Scm, a: f64, n: usize, seed: u64) -> Result<Measure, ScmError> {
    let world = World::new(m, a);
    let points = noise_sample(m, n, seed)?
        .iter()
        .map(|u| world.forward(u))
        .collect::<Result<Vec<_>, _>>()?;
    DiscreteMeasure::uniform(format!("scm:a={a}:n={n}:seed={seed}"), points)
        .map_err(|e| ScmError::Parameter(e.to_string()))
}

/// Index-aligned matching `P_a → P_{a'}` of two interventional samples.
pub fn counterfactual_matching(
    m: &Scm,
    a: f64,
    a_prime: f64,
    n: usize,
    seed: u64,
) -> Result<DiscreteMatching<f64>, ScmError> {
    let src = Arc::new(interventional_sample(m, a, n, seed)?);
    let dst = Arc::new(interventional_sample(m, a_prime, n, seed)?);
    DiscreteMatching::new(src, dst, (0..n).collect(), MatchingKind::Counterfactual)
        .map_err(|e| ScmError::Parameter(e.to_string()))
}
