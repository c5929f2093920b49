use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifiers::LabeledShape;
use crate::error::{Result, ShapeError};

fn by_class(data: &[LabeledShape]) -> BTreeMap<u32, Vec<&LabeledShape>> {
    let mut groups: BTreeMap<u32, Vec<&LabeledShape>> = BTreeMap::new();
    for s in data {
        groups.entry(s.label).or_default().push(s);
    }
    groups
}

/// Splits every class independently: `max(1, ⌊fraction · n⌋)` shuffled
/// samples go to train, the rest to test.
pub fn stratified_split(
    data: &[LabeledShape],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledShape>, Vec<LabeledShape>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ShapeError::InvalidInput(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let groups = by_class(data);
    if let Some((&label, g)) = groups.iter().find(|(_, g)| g.len() < 2) {
        return Err(ShapeError::InsufficientClassSize {
            label,
            available: g.len(),
            required: 2,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut members) in groups {
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = ((train_fraction * n as f64).floor() as usize).clamp(1, n - 1);
        train.extend(members[..n_train].iter().map(|s| (*s).clone()));
        test.extend(members[n_train..].iter().map(|s| (*s).clone()));
    }
    Ok((train, test))
}

/// Draws exactly `n_i` samples per class without replacement.
pub fn subsample_per_class(train: &[LabeledShape], n_i: usize, seed: u64) -> Result<Vec<LabeledShape>> {
    let groups = by_class(train);
    if let Some((&label, g)) = groups.iter().find(|(_, g)| g.len() < n_i) {
        return Err(ShapeError::InsufficientClassSize {
            label,
            available: g.len(),
            required: n_i,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_i * groups.len());
    for (_, mut members) in groups {
        members.shuffle(&mut rng);
        out.extend(members[..n_i].iter().map(|s| (*s).clone()));
    }
    Ok(out)
}
