//! Reference partitions: uniformly random and correlation-clustered.

use rand::Rng;

use super::{CoalitionStructure, Evaluator, Provenance};
use crate::error::{Error, Result};
use crate::seed;
use crate::timeseries::CorrelationMatrix;
use crate::AgentId;

/// Labels in `0..n_blocks` for `n` items, drawn uniformly among all
/// labellings that use every label.
///
/// Equivalent to drawing uniform labels and rejecting draws with an empty
/// block, but sampled sequentially: with `m` items left and `e` labels used
/// so far, the next item reuses one of the used labels with probability
/// `(e/k) c(m-1, e) / c(m, e)`, where `c(m, e)` is the probability that `m`
/// uniform labels cover the `k - e` unused ones.
pub fn random_labels<R: Rng + ?Sized>(n: usize, n_blocks: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n_blocks == 0 || n_blocks > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} agents into {n_blocks} non-empty coalitions"
        )));
    }
    let k = n_blocks as f64;
    // log c(m, e) for m in 0..=n, e in 0..=n_blocks
    let idx = |m: usize, e: usize| m * (n_blocks + 1) + e;
    let mut log_c = vec![f64::NEG_INFINITY; (n + 1) * (n_blocks + 1)];
    log_c[idx(0, n_blocks)] = 0.0;
    for m in 1..=n {
        for e in 0..=n_blocks {
            let stay = (e as f64 / k).ln() + log_c[idx(m - 1, e)];
            let grow = if e < n_blocks {
                ((k - e as f64) / k).ln() + log_c[idx(m - 1, e + 1)]
            } else {
                f64::NEG_INFINITY
            };
            log_c[idx(m, e)] = log_add(stay, grow);
        }
    }
    // unused labels in random order so new blocks get a uniform label
    let mut fresh: Vec<usize> = (0..n_blocks).collect();
    let mut labels = Vec::with_capacity(n);
    let mut used = 0;
    for m in (1..=n).rev() {
        let p_stay = if used == 0 {
            0.0
        } else {
            ((used as f64 / k).ln() + log_c[idx(m - 1, used)] - log_c[idx(m, used)]).exp()
        };
        if rng.random::<f64>() < p_stay {
            labels.push(fresh[rng.random_range(0..used)]);
        } else {
            let pick = rng.random_range(used..n_blocks);
            fresh.swap(used, pick);
            labels.push(fresh[used]);
            used += 1;
        }
    }
    debug_assert_eq!(used, n_blocks);
    Ok(labels)
}

fn log_add(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

fn structure_from_groups(mut groups: Vec<Vec<AgentId>>, unassigned: Vec<AgentId>, ev: &Evaluator, provenance: Provenance) -> Result<CoalitionStructure> {
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort();
    Ok(CoalitionStructure {
        coalitions: groups.iter().map(|g| ev.coalition(g)).collect::<Result<_>>()?,
        unassigned,
        requirements: *ev.requirements(),
        mode: ev.mode(),
        provenance,
    })
}

/// Splits every agent of the evaluator's series set into `n_coal`
/// non-empty coalitions uniformly at random.
pub fn random_partition(ev: &Evaluator, n_coal: usize, rng_seed: u64) -> Result<CoalitionStructure> {
    let ids = ev.series().ids();
    let mut rng = seed::rng(rng_seed);
    let labels = random_labels(ids.len(), n_coal, &mut rng)?;
    let mut groups = vec![Vec::new(); n_coal];
    for (&id, &l) in ids.iter().zip(&labels) {
        groups[l].push(id);
    }
    structure_from_groups(groups, Vec::new(), ev, Provenance::Random { seed: rng_seed })
}

/// Average-linkage agglomeration on `rho^2`: starting from singletons, the
/// two groups with the highest mean pairwise `rho^2` merge until `n_coal`
/// groups remain (ties: lowest group positions). Agents missing from
/// `corr` (degenerate series) are left unassigned.
pub fn correlated_partition(ev: &Evaluator, corr: &CorrelationMatrix, n_coal: usize) -> Result<CoalitionStructure> {
    let n = corr.n();
    if n_coal == 0 || n_coal > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} agents into {n_coal} non-empty coalitions"
        )));
    }
    let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut link: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| corr.get(i, j) * corr.get(i, j)).collect())
        .collect();
    while groups.len() > n_coal {
        let mut best = (0, 1, f64::NEG_INFINITY);
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                if link[a][b] > best.2 {
                    best = (a, b, link[a][b]);
                }
            }
        }
        let (a, b, _) = best;
        let (na, nb) = (groups[a].len() as f64, groups[b].len() as f64);
        for c in 0..groups.len() {
            let merged = (na * link[a][c] + nb * link[b][c]) / (na + nb);
            link[a][c] = merged;
            link[c][a] = merged;
        }
        let moved = groups.remove(b);
        groups[a].extend(moved);
        link.remove(b);
        for row in &mut link {
            row.remove(b);
        }
    }
    let ids = corr.ids();
    let groups = groups
        .into_iter()
        .map(|g| g.into_iter().map(|i| ids[i]).collect())
        .collect();
    structure_from_groups(groups, corr.degenerate().to_vec(), ev, Provenance::Correlated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalition::tests::{gaussian_set, set};
    use crate::coalition::{mean_within_rho2, ContractMode, GridRequirements, Moments};
    use crate::timeseries::correlation_matrix;
    use std::collections::BTreeMap;

    #[test]
    fn extremes_are_singletons_and_grand_coalition() {
        let s = gaussian_set(&[(5.0, 1.0); 8], 100, 1);
        let m = Moments::compute(&s).unwrap();
        let ev = Evaluator::new(&s, &m, GridRequirements::new(0.1, 0.0, 1).unwrap(), ContractMode::Analytic).unwrap();
        let all = random_partition(&ev, 8, 3).unwrap();
        assert!(all.coalitions.iter().all(|c| c.size() == 1));
        let grand = random_partition(&ev, 1, 3).unwrap();
        assert_eq!(grand.coalitions.len(), 1);
        assert_eq!(grand.coalitions[0].size(), 8);
        all.check_partition(s.ids()).unwrap();
        assert!(random_partition(&ev, 9, 3).is_err());
    }

    #[test]
    fn labellings_are_uniform_over_surjections() {
        // 4 items onto 2 labels: 14 surjections, each with probability 1/14
        let mut rng = seed::rng(7);
        let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let draws = 140_000;
        for _ in 0..draws {
            *counts.entry(random_labels(4, 2, &mut rng).unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), 14);
        let expected = draws as f64 / 14.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 13 degrees of freedom; 99.9% quantile is 34.5
        assert!(chi2 < 34.5, "chi2 = {chi2}");
    }

    #[test]
    fn block_sizes_average_twenty() {
        let mut rng = seed::rng(11);
        let draws = 10_000;
        let mut first_block = 0usize;
        for _ in 0..draws {
            let labels = random_labels(200, 10, &mut rng).unwrap();
            let mut sizes = [0usize; 10];
            for l in labels {
                sizes[l] += 1;
            }
            assert!(sizes.iter().all(|&s| s > 0));
            first_block += sizes[0];
        }
        let mean = first_block as f64 / draws as f64;
        assert!((mean - 20.0).abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn perfectly_correlated_pair_merges_first() {
        let base = gaussian_set(&[(0.0, 1.0); 4], 300, 5);
        let dup: Vec<f64> = base.values(0).iter().map(|x| 2.0 * x + 1.0).collect();
        let mut cols: Vec<Vec<f64>> = (0..4).map(|i| base.values(i).to_vec()).collect();
        cols.push(dup);
        let s = set(cols);
        let m = Moments::compute(&s).unwrap();
        let ev = Evaluator::new(&s, &m, GridRequirements::new(0.1, 0.0, 4).unwrap(), ContractMode::Analytic).unwrap();
        let corr = correlation_matrix(&s).unwrap();
        let cs = correlated_partition(&ev, &corr, 4).unwrap();
        let pair = cs.coalitions.iter().find(|c| c.size() == 2).unwrap();
        assert_eq!(pair.members, vec![AgentId(0), AgentId(4)]);
    }

    #[test]
    fn recovers_two_blocks() {
        // two latent factors, three agents each
        let f = gaussian_set(&[(0.0, 1.0); 2], 500, 8);
        let noise = gaussian_set(&[(0.0, 0.3); 6], 500, 9);
        let cols = (0..6)
            .map(|i| {
                let sign = if i % 3 == 1 { -1.0 } else { 1.0 };
                f.values(i / 3)
                    .iter()
                    .zip(noise.values(i))
                    .map(|(a, e)| sign * a + e)
                    .collect()
            })
            .collect();
        let s = set(cols);
        let m = Moments::compute(&s).unwrap();
        let ev = Evaluator::new(&s, &m, GridRequirements::new(0.1, 0.0, 2).unwrap(), ContractMode::Analytic).unwrap();
        let cs = correlated_partition(&ev, &correlation_matrix(&s).unwrap(), 2).unwrap();
        let groups: Vec<Vec<AgentId>> = cs.coalitions.iter().map(|c| c.members.clone()).collect();
        assert_eq!(
            groups,
            vec![
                vec![AgentId(0), AgentId(1), AgentId(2)],
                vec![AgentId(3), AgentId(4), AgentId(5)]
            ]
        );
    }

    #[test]
    fn correlated_is_more_correlated_than_random() {
        for seed_value in 0..20 {
            let f = gaussian_set(&[(0.0, 1.0); 3], 400, 200 + seed_value);
            let noise = gaussian_set(&[(0.0, 1.0); 18], 400, 300 + seed_value);
            let cols = (0..18)
                .map(|i| {
                    f.values(i % 3)
                        .iter()
                        .zip(noise.values(i))
                        .map(|(a, e)| a * (i % 5) as f64 / 4.0 + e)
                        .collect()
                })
                .collect();
            let s = set(cols);
            let m = Moments::compute(&s).unwrap();
            let ev = Evaluator::new(&s, &m, GridRequirements::new(0.1, 0.0, 3).unwrap(), ContractMode::Analytic).unwrap();
            let corr = correlation_matrix(&s).unwrap();
            let c = correlated_partition(&ev, &corr, 3).unwrap();
            let r = random_partition(&ev, 3, seed_value).unwrap();
            assert!(mean_within_rho2(&c, &corr) >= mean_within_rho2(&r, &corr));
        }
    }
}
