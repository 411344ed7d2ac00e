use std::collections::BTreeSet;

use chrono::NaiveDate;
use proptest::prelude::*;
use prosumer_coalitions::climate::{generate_synthetic_climate, CellCoord, SyntheticClimate};
use prosumer_coalitions::coalition::{
    form_coalitions, grow_seed, max_contract, random_partition, resolve_overlaps, shortfall_probability,
    ContractMode, FormationContext, FormationOptions, GridRequirements,
};
use prosumer_coalitions::graph::{build_epsilon_graph, disjoint_cliques, EnumerationLimits};
use prosumer_coalitions::prosumer::{pv_power, wind_power, PvParams, TurbineParams};
use prosumer_coalitions::timeseries::{correlation_matrix, deseasonalize, pearson, stats, SeriesSet};
use prosumer_coalitions::{seed, AgentId};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn start() -> chrono::NaiveDateTime {
    NaiveDate::from_ymd_opt(2021, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

/// Factor-model series with positive means, `n` agents, `len` hours.
fn factor_series(n: usize, len: usize, s: u64) -> SeriesSet {
    let mut rng = seed::rng(s);
    let k = rng.random_range(1..=3);
    let f: Vec<Vec<f64>> = (0..k).map(|_| (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let cols = (0..n)
        .map(|i| {
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mu = rng.random_range(0.0..5.0);
            let v = (0..len)
                .map(|t| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    mu + w.iter().zip(&f).map(|(w, f)| w * f[t]).sum::<f64>() + e
                })
                .collect();
            (AgentId(i as u32), v)
        })
        .collect();
    SeriesSet::new(start(), cols).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn contract_round_trip(mu in -1e6..1e6f64, sigma in 1e-3..1e6f64, phi in 1e-6..(1.0 - 1e-6f64)) {
        let c = max_contract(mu, sigma, phi).unwrap();
        prop_assert!((shortfall_probability(mu, sigma, c) - phi).abs() <= 1e-9);
    }

    #[test]
    fn contract_monotone_and_equivariant(
        mu in -1e5..1e5f64,
        sigma in 1e-2..1e5f64,
        phi in 1e-4..0.49f64,
        dphi in 1e-3..0.01f64,
        shift in -1e5..1e5f64,
        grow in 1.01..3.0f64,
    ) {
        let c = max_contract(mu, sigma, phi).unwrap();
        prop_assert!(max_contract(mu, sigma, phi + dphi).unwrap() > c);
        prop_assert!(max_contract(mu, sigma * grow, phi).unwrap() < c);
        let shifted = max_contract(mu + shift, sigma, phi).unwrap();
        prop_assert!((shifted - (c + shift)).abs() <= 1e-9 * (1.0 + c.abs() + shift.abs()));
    }

    #[test]
    fn pearson_symmetric_and_affine(s in any::<u64>(), alpha in 0.1..10.0f64, beta in -100.0..100.0f64) {
        let set = factor_series(2, 200, s);
        let (a, b) = (set.values(0), set.values(1));
        let r = pearson(a, b).unwrap();
        prop_assert_eq!(r, pearson(b, a).unwrap());
        let scaled: Vec<f64> = a.iter().map(|x| alpha * x + beta).collect();
        prop_assert!((pearson(&scaled, b).unwrap() - r).abs() < 1e-12);
        let flipped: Vec<f64> = a.iter().map(|x| -alpha * x + beta).collect();
        prop_assert!((pearson(&flipped, b).unwrap() + r).abs() < 1e-12);
    }

    #[test]
    fn variance_identity(s in any::<u64>(), size in 1usize..8) {
        let set = factor_series(8, 300, s);
        let corr = correlation_matrix(&set).unwrap();
        let sd: Vec<f64> = (0..8).map(|i| stats(set.values(i)).unwrap().std_dev).collect();
        let sum: Vec<f64> = (0..set.len()).map(|t| (0..size).map(|i| set.values(i)[t]).sum()).collect();
        let direct = stats(&sum).unwrap().std_dev.powi(2);
        let composed: f64 = (0..size).flat_map(|i| (0..size).map(move |j| (i, j))).map(|(i, j)| corr.get(i, j) * sd[i] * sd[j]).sum();
        prop_assert!((direct - composed).abs() <= 1e-9 * direct);
    }

    #[test]
    fn wind_curve_shape(v in 0.0..40.0f64, dv in 0.0..5.0f64) {
        let t = TurbineParams::default();
        let p = wind_power(v, &t);
        if v < t.cut_in || v > t.cut_out {
            prop_assert_eq!(p, 0.0);
        }
        if v + dv <= t.rated_speed {
            prop_assert!(wind_power(v + dv, &t) >= p);
        }
        prop_assert!((0.0..=t.rated_power).contains(&p));
    }

    #[test]
    fn pv_non_increasing_in_cloud(irr in 0.0..1200.0f64, c in 0.0..1.0f64, dc in 0.0..1.0f64) {
        let pv = PvParams::default();
        let hi = (c + dc).min(1.0);
        prop_assert!(pv_power(irr, hi, &pv) <= pv_power(irr, c, &pv));
        prop_assert!(pv_power(irr, c, &pv) >= 0.0);
    }

    #[test]
    fn csv_round_trip(s in any::<u64>(), n in 1usize..6, len in 2usize..50) {
        let set = factor_series(n, len, s);
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = SeriesSet::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.ids(), set.ids());
        prop_assert_eq!(back.start(), set.start());
        for i in 0..n {
            for (x, y) in set.values(i).iter().zip(back.values(i)) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn epsilon_graphs_nest_and_seeds_persist(s in any::<u64>(), k_min in 2usize..4) {
        let set = factor_series(12, 60, s);
        let corr = correlation_matrix(&set).unwrap();
        let mut rng = seed::rng(s ^ 1);
        let (e1, e2) = {
            let a: f64 = rng.random_range(0.0..0.3);
            let b: f64 = rng.random_range(0.0..0.3);
            (a.min(b), a.max(b))
        };
        let (g1, g2) = (build_epsilon_graph(&corr, e1).unwrap(), build_epsilon_graph(&corr, e2).unwrap());
        for (i, j, _) in g1.edges() {
            prop_assert!(g2.is_adjacent(i, j));
        }
        let seeds = disjoint_cliques(&g1, k_min, EnumerationLimits::default()).unwrap();
        let mut seen = BTreeSet::new();
        for c in &seeds.cliques {
            prop_assert!(c.len() >= k_min);
            let idx: Vec<usize> = c.iter().map(|&id| g2.index_of(id).unwrap()).collect();
            prop_assert!(g2.is_clique(&idx));
            for &id in c {
                prop_assert!(seen.insert(id));
            }
        }
    }

    #[test]
    fn random_partition_is_a_partition(s in any::<u64>(), n in 2usize..30, frac in 0.0..1.0f64, draw in any::<u64>()) {
        let set = factor_series(n, 40, s);
        let ctx = FormationContext::new(&set).unwrap();
        let n_coal = 1 + ((n - 1) as f64 * frac) as usize;
        let ev = ctx.evaluator(GridRequirements::new(0.1, 0.0, n_coal).unwrap(), ContractMode::Analytic).unwrap();
        let cs = random_partition(&ev, n_coal, draw).unwrap();
        prop_assert_eq!(cs.coalitions.len(), n_coal);
        prop_assert!(cs.unassigned.is_empty());
        prop_assert!(cs.check_partition(set.ids()).is_ok());
        let total: usize = cs.coalitions.iter().map(|c| c.size()).sum();
        prop_assert_eq!(total, n);
    }

    #[test]
    fn formation_invariants(s in any::<u64>(), n_coal in 1usize..4, phi in 0.05..0.45f64, p_min in 0.0..6.0f64) {
        let set = factor_series(14, 120, s);
        let req = GridRequirements::new(phi, p_min, n_coal).unwrap();
        let opts = FormationOptions::default();
        let cs = match form_coalitions(&set, req, ContractMode::Analytic, &opts) {
            Ok(cs) => cs,
            Err(prosumer_coalitions::Error::Infeasible { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(cs.check_partition(set.ids()).is_ok());
        for c in &cs.coalitions {
            prop_assert!(!c.members.is_empty());
            prop_assert_eq!(c.valid, c.p_phi >= p_min);
            prop_assert_eq!(c.utility > 0.0, c.valid && c.p_phi > 0.0);
            if c.valid {
                prop_assert!((c.utility * c.size() as f64 - c.p_phi).abs() <= 1e-9 * (1.0 + c.p_phi.abs()));
            } else {
                prop_assert_eq!(c.utility, 0.0);
            }
        }

        // growth keeps the seed; overlap resolution yields disjoint sets
        let ctx = FormationContext::new(&set).unwrap();
        let eps = ctx.seeds(n_coal, &opts).unwrap();
        let ev = ctx.evaluator(req, ContractMode::Analytic).unwrap();
        let grown: Vec<Vec<AgentId>> = eps
            .seeds
            .cliques
            .iter()
            .map(|seed| {
                let g = grow_seed(seed, &eps.graph, &ev, &BTreeSet::new()).unwrap();
                assert!(seed.iter().all(|id| g.members.contains(id)));
                g.members
            })
            .collect();
        let resolved = resolve_overlaps(&grown, &ev).unwrap();
        let mut seen = BTreeSet::new();
        for c in &resolved.coalitions {
            for &id in &c.members {
                prop_assert!(seen.insert(id));
            }
        }
    }
}

fn cell_corr(grid: &prosumer_coalitions::climate::ClimateGrid, a: CellCoord, b: CellCoord) -> f64 {
    let w = |c| grid.series(c).unwrap().iter().map(|v| v.wind_speed).collect::<Vec<_>>();
    pearson(&w(a), &w(b)).unwrap()
}

#[test]
fn longer_correlation_length_never_decorrelates_cells() {
    let cells: Vec<CellCoord> = (0..3).flat_map(|y| (0..3).map(move |x| CellCoord::new(x, y))).collect();
    for length in [0.5, 1.0, 2.0] {
        // per pair: correlation differences between 2L and L over 20 seeds
        let mut diffs = vec![Vec::new(); cells.len() * cells.len()];
        for s in 0..20 {
            let grid_at = |l: f64| {
                generate_synthetic_climate(&SyntheticClimate {
                    width: 3,
                    height: 3,
                    duration_days: 120,
                    spatial_corr_length: l,
                    seed: Some(seed::derive(77, s)),
                    ..SyntheticClimate::default()
                })
                .unwrap()
            };
            let (g1, g2) = (grid_at(length), grid_at(2.0 * length));
            for (ia, &a) in cells.iter().enumerate() {
                for (ib, &b) in cells.iter().enumerate().skip(ia + 1) {
                    diffs[ia * cells.len() + ib].push(cell_corr(&g2, a, b) - cell_corr(&g1, a, b));
                }
            }
        }
        for d in diffs.iter().filter(|d| !d.is_empty()) {
            let n = d.len() as f64;
            let m = d.iter().sum::<f64>() / n;
            let se = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
            assert!(m >= -3.0 * se, "length {length}: mean change {m} (se {se})");
        }
    }
}

/// A second pass only removes the local stratum mean of the first residual,
/// whose size for noisy data is of order `1/sqrt(window)` of the residual.
#[test]
fn second_deseasonalize_pass_is_small() {
    let mut rng = seed::rng(12);
    let hours = 24 * 365;
    let values: Vec<f64> = (0..hours)
        .map(|t| {
            let day = t as f64 / 24.0;
            let e: f64 = StandardNormal.sample(&mut rng);
            5.0 + 3.0 * (std::f64::consts::TAU * (t % 24) as f64 / 24.0).sin()
                + 4.0 * (std::f64::consts::TAU * day / 365.0).cos()
                + e
        })
        .collect();
    let window = 30;
    let once = deseasonalize(&values, window).unwrap();
    let twice = deseasonalize(&once, window).unwrap();
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let change: Vec<f64> = once.iter().zip(&twice).map(|(a, b)| a - b).collect();
    assert!(rms(&change) < rms(&once) / (window as f64).sqrt(), "{} vs {}", rms(&change), rms(&once));
}
