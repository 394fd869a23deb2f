use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Sample, SplitTag};
use crate::error::{Error, Result};

/// Seeded, class-stratified three-way split.
///
/// Global sizes are `round(n * ratio)` for train and dev (test takes the
/// rest); every class gets within one sample of its proportional share.
pub fn split(corpus: &Corpus, ratios: [f64; 3], seed: u64) -> Result<(Corpus, Corpus, Corpus)> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::BadRatios);
    }
    let n = corpus.len();
    let round = |x: f64| (x + 1e-9).round() as usize;
    let train_total = round(n as f64 * ratios[0]).min(n);
    let dev_total = round(n as f64 * ratios[1]).min(n - train_total);
    let targets = [train_total, dev_total, n - train_total - dev_total];

    let mut by_class: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
    for s in &corpus.samples {
        by_class.entry(&s.sketch_class).or_default().push(s);
    }

    // floor quotas per class, then hand out the remaining units with at most
    // one extra per (class, split) cell
    let classes: Vec<(&str, Vec<&Sample>)> = by_class.into_iter().collect();
    let mut quotas: Vec<[usize; 3]> = Vec::with_capacity(classes.len());
    let mut remainders: Vec<[f64; 3]> = Vec::with_capacity(classes.len());
    for (_, members) in &classes {
        let size = members.len() as f64;
        let mut q = [0usize; 3];
        let mut r = [0f64; 3];
        for s in 0..3 {
            let exact = size * ratios[s];
            q[s] = (exact + 1e-9).floor() as usize;
            r[s] = exact - q[s] as f64;
        }
        quotas.push(q);
        remainders.push(r);
    }
    let mut need: [usize; 3] = [0; 3];
    for s in 0..3 {
        let assigned: usize = quotas.iter().map(|q| q[s]).sum();
        need[s] = targets[s].saturating_sub(assigned);
    }
    let mut order: Vec<usize> = (0..classes.len()).collect();
    let extras = |c: usize, quotas: &[[usize; 3]]| classes[c].1.len() - quotas[c].iter().sum::<usize>();
    order.sort_by_key(|&c| (std::cmp::Reverse(extras(c, &quotas)), c));
    for c in order {
        for _ in 0..extras(c, &quotas) {
            let pick = (0..3)
                .filter(|&s| quotas[c][s] as f64 <= classes[c].1.len() as f64 * ratios[s])
                .max_by(|&a, &b| {
                    need[a]
                        .cmp(&need[b])
                        .then(remainders[c][a].total_cmp(&remainders[c][b]))
                        .then(b.cmp(&a))
                })
                .unwrap_or(2);
            quotas[c][pick] += 1;
            need[pick] = need[pick].saturating_sub(1);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<Sample>; 3] = Default::default();
    for (c, (_, members)) in classes.iter().enumerate() {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        let mut it = members.into_iter();
        for (s, part) in parts.iter_mut().enumerate() {
            part.extend(it.by_ref().take(quotas[c][s]).cloned());
        }
    }
    let [train, dev, test] = parts;
    Ok((
        Corpus::new(train, SplitTag::Train),
        Corpus::new(dev, SplitTag::Dev),
        Corpus::new(test, SplitTag::Test),
    ))
}
