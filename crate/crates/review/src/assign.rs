//! Splitting review work among experts.

use std::collections::BTreeMap;

use ils_core::model::Polarity;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::samples::Sample;
use crate::ReviewError;

/// Per-expert ordered sample ids.
pub type Worklists = BTreeMap<String, Vec<String>>;

/// Positives go to every expert. Negatives are shuffled with `seed` and
/// dealt round-robin, so list sizes differ by at most one. Each list keeps
/// positives first, then its negatives in dealt order.
pub fn assign_samples(samples: &[Sample], experts: &[String], seed: u64) -> Result<Worklists, ReviewError> {
    if experts.is_empty() {
        return Err(ReviewError::NoExperts);
    }
    let mut sorted_experts = experts.to_vec();
    sorted_experts.sort();
    sorted_experts.dedup();
    if sorted_experts.len() != experts.len() {
        return Err(ReviewError::DuplicateExpert);
    }

    let mut positives: Vec<&str> = Vec::new();
    let mut negatives: Vec<&str> = Vec::new();
    for s in samples {
        match s.polarity {
            Polarity::Positive => positives.push(&s.sample_id),
            Polarity::Negative => negatives.push(&s.sample_id),
        }
    }
    positives.sort_unstable();
    negatives.sort_unstable();
    negatives.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut lists: Worklists = experts
        .iter()
        .map(|e| (e.clone(), positives.iter().map(|s| s.to_string()).collect()))
        .collect();
    for (i, id) in negatives.iter().enumerate() {
        let expert = &experts[i % experts.len()];
        lists.get_mut(expert).expect("listed").push(id.to_string());
    }
    Ok(lists)
}
