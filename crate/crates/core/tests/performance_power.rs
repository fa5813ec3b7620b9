mod common;

use cellfree::campaign::SetupState;
use cellfree::config::{ProcessingMode, Scheme};
use cellfree::performance::{
    dl_se_mr_closed_form, ul_mr_moments, ul_se_mr_closed_form, HardeningAccumulator, LogAccumulator,
    instantaneous_sinr,
};
use cellfree::power::{
    dl_centralized_equal, dl_distributed_proportional, duality_power, DUALITY_POWER_TOL, DUALITY_SINR_TOL,
};
use cellfree::processing::{compute_combiners, NormAccumulator};
use cellfree::report::Direction;
use cellfree::run_campaign;
use num_complex::Complex64;
use proptest::prelude::*;

fn cfg_for(seed: u64, l: usize, n: usize, k: usize, tp: usize) -> cellfree::SimulationConfig {
    let mut cfg = common::config(l, n, k, tp);
    cfg.seed = seed;
    cfg.network.area_side_km = 0.3;
    cfg
}

/// First of 50 consecutive drops where clustering succeeds.
fn try_feasible(mut cfg: cellfree::SimulationConfig) -> Option<(cellfree::SimulationConfig, SetupState)> {
    let start = cfg.seed;
    (start..start + 50).find_map(|s| {
        cfg.seed = s;
        SetupState::build(&cfg, 0).ok().map(|st| (cfg.clone(), st))
    })
}

fn first_feasible(cfg: cellfree::SimulationConfig) -> (cellfree::SimulationConfig, SetupState) {
    try_feasible(cfg).expect("a feasible drop")
}

#[test]
fn mr_monte_carlo_agrees_with_closed_forms() {
    let (mut cfg, st) = first_feasible(cfg_for(21, 6, 2, 4, 2));
    cfg.num_realizations = 20_000;
    let rep = run_campaign(&cfg).unwrap();
    let ul_cf = ul_se_mr_closed_form(&st.topology, &st.assignment, &st.stats, cfg.frame.ul_prelog());
    let rho = dl_distributed_proportional(&st.assignment, &st.topology.large_scale, cfg.power.ap_power_w);
    let dl_cf = dl_se_mr_closed_form(
        &st.topology,
        &st.assignment,
        &st.stats,
        &rho,
        cfg.dl_noise(),
        cfg.frame.dl_prelog(),
    );
    for (direction, cf) in [(Direction::Ul, ul_cf), (Direction::Dl, dl_cf)] {
        let rows: Vec<_> = rep.rows.iter().filter(|r| r.direction == direction).collect();
        assert_eq!(rows.len(), 4);
        for (r, c) in rows.iter().zip(&cf) {
            assert!(r.stderr > 0.0);
            assert!((r.se - c).abs() <= 4.0 * r.stderr, "{direction} UE {}: {} vs {c} ± {}", r.ue, r.se, r.stderr);
        }
    }
}

#[test]
fn side_information_bound_dominates_use_and_forget() {
    let (mut cfg, _) = first_feasible(cfg_for(3, 6, 2, 4, 2));
    cfg.num_realizations = 2000;
    let dist = run_campaign(&cfg).unwrap();
    cfg.mode = ProcessingMode::Centralized;
    let cent = run_campaign(&cfg).unwrap();
    let a = cent.values(Scheme::Mr, Direction::Ul);
    let b = dist.values(Scheme::Mr, Direction::Ul);
    for (x, y) in a.iter().zip(&b) {
        assert!(x >= y, "{x} < {y}");
    }
}

#[test]
fn se_is_linear_in_the_prelog() {
    let (mut cfg, _) = first_feasible(cfg_for(5, 5, 1, 3, 2));
    cfg.schemes = vec![Scheme::Mr, Scheme::LpMmse];
    cfg.frame.ul_data_len = 50;
    cfg.frame.dl_data_len = 40;
    let a = run_campaign(&cfg).unwrap();
    cfg.frame.ul_data_len = 100;
    cfg.frame.dl_data_len = 80;
    let b = run_campaign(&cfg).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!(common::rel_diff(2.0 * x.se, y.se) <= 1e-12);
    }
    cfg.frame.ul_data_len = 0;
    let c = run_campaign(&cfg).unwrap();
    assert!(c.values(Scheme::Mr, Direction::Ul).iter().all(|&v| v == 0.0));
}

#[test]
fn genie_reference_is_above_hardening_bound() {
    let (mut cfg, _) = first_feasible(cfg_for(9, 8, 1, 5, 3));
    cfg.schemes = vec![Scheme::Mr, Scheme::LpMmse];
    cfg.genie = true;
    cfg.num_realizations = 1000;
    let rep = run_campaign(&cfg).unwrap();
    for s in [Scheme::Mr, Scheme::LpMmse] {
        let dl = rep.values(s, Direction::Dl);
        let genie = rep.values(s, Direction::DlGenie);
        for (d, g) in dl.iter().zip(&genie) {
            assert!(g >= d, "{s}: genie {g} < bound {d}");
        }
    }
}

#[test]
fn deterministic_gain_makes_genie_equal_bound() {
    let mut log = LogAccumulator::new(1);
    let mut hard = HardeningAccumulator::new(1);
    let (g, rho, noise) = (Complex64::new(0.8, -0.3), 0.5, 0.2);
    for _ in 0..10 {
        log.add(&[rho * g.norm_sqr() / noise]);
        hard.add(&[g * rho.sqrt()], &[rho * g.norm_sqr()]);
    }
    let a = log.se(0, 0.5).se;
    let b = hard.se(0, 1.0, noise, 0.5).unwrap().se;
    assert!(common::rel_diff(a, b) <= 1e-12);
}

#[test]
fn equal_centralized_split_respects_every_ap_budget() {
    let (cfg, st) = first_feasible(cfg_for(13, 8, 2, 6, 3));
    let plan = st.plan();
    let mut acc = NormAccumulator::new(6, 8);
    for r in 0..300 {
        acc.add(&compute_combiners(Scheme::PMmse, &plan, &st.draw(r).estimate), &st.assignment);
    }
    let rho = dl_centralized_equal(6, cfg.power.ap_power_w, 3);
    for l in 0..8 {
        let used: f64 = st
            .assignment
            .served_by_ap(l)
            .iter()
            .map(|&i| rho[i] * acc.per_ap_mean(i, l) / acc.collective_mean(i).unwrap())
            .sum();
        assert!(used <= cfg.power.ap_power_w * (1.0 + 1e-12));
    }
}

#[test]
fn proportional_split_uses_the_full_budget_and_serves_every_master() {
    let (_, st) = first_feasible(cfg_for(17, 10, 1, 8, 3));
    let rho = dl_distributed_proportional(&st.assignment, &st.topology.large_scale, 1.0);
    for l in 0..10 {
        let served = st.assignment.served_by_ap(l);
        let total: f64 = (0..8).map(|k| rho[k * 10 + l]).sum();
        if served.is_empty() {
            assert_eq!(total, 0.0);
        } else {
            assert!((total - 1.0).abs() <= 1e-12);
        }
    }
    for k in 0..8 {
        assert!(rho[k * 10 + st.assignment.master(k)] > 0.0);
    }
}

/// Instantaneous UL SINR evaluated term by term for a fixed combiner and fixed estimates.
fn sinr_by_hand(k: usize, v: &[Complex64], st: &SetupState, hhat: &cellfree::topology::ChannelRealization, p: &[f64]) -> f64 {
    let n = st.stats.antennas();
    let serving = st.assignment.serving_list(k);
    let inner = |i: usize| -> Complex64 {
        serving
            .iter()
            .flat_map(|&l| (0..n).map(move |j| (l, j)))
            .map(|(l, j)| v[l * n + j].conj() * hhat.get(i, l)[j])
            .sum()
    };
    let mut den = 0.0;
    for i in 0..p.len() {
        if i != k {
            den += p[i] * inner(i).norm_sqr();
        }
        for &l in &serving {
            let c = st.stats.error_covariance(i, l);
            let x = nalgebra::DVector::from_column_slice(&v[l * n..(l + 1) * n]);
            den += p[i] * (x.adjoint() * c * &x)[(0, 0)].re;
        }
    }
    for &l in &serving {
        den += st.stats.noise() * v[l * n..(l + 1) * n].iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    p[k] * inner(k).norm_sqr() / den
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn duality_reproduces_ul_sinrs(
        seed in 0u64..10_000,
        l in 1usize..=10,
        n in 1usize..=2,
        k in 1usize..=6,
        tp in 1usize..=4,
    ) {
        let feasible = try_feasible(cfg_for(seed, l, n, k, tp));
        prop_assume!(feasible.is_some());
        let (_, st) = feasible.unwrap();
        let ul = ul_mr_moments(&st.topology, &st.assignment, &st.stats);
        let d = duality_power(&ul, st.stats.noise(), DUALITY_SINR_TOL, DUALITY_POWER_TOL).unwrap();
        prop_assert!(d.rho.iter().all(|&r| r >= 0.0));
        for (a, b) in d.dl_sinr.iter().zip(&d.ul_sinr) {
            prop_assert!(common::rel_diff(*a, *b) <= 1e-6);
        }
        let ev = |t: bool| {
            let schur = nalgebra::Schur::try_new(d.matrices.system(t), 1e-15, 100_000).expect("Schur converges");
            let mut e: Vec<(f64, f64)> = schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
            e.sort_by(|a, b| a.partial_cmp(b).unwrap());
            e
        };
        let (e1, e2) = (ev(false), ev(true));
        let scale = e1.iter().map(|z| z.0.abs()).fold(0.0, f64::max);
        for (a, b) in e1.iter().zip(&e2) {
            prop_assert!((a.0 - b.0).abs() <= 1e-9 * scale && (a.1 - b.1).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn stronger_interferer_never_helps(seed in 0u64..10_000, victim in 0usize..5, r in 0usize..100) {
        let (_, st) = first_feasible(cfg_for(seed, 6, 2, 5, 2));
        let d = st.draw(r);
        let plan = st.plan();
        let mut p = vec![0.1; 5];
        for scheme in [Scheme::Mr, Scheme::PMmse, Scheme::LpMmse] {
            let c = compute_combiners(scheme, &plan, &d.estimate);
            let before: Vec<f64> = (0..5).map(|k| sinr_by_hand(k, c.v.ue(k), &st, &d.estimate, &p)).collect();
            for k in 0..5 {
                let lib = instantaneous_sinr(k, c.v.ue(k), &plan, &d.estimate);
                prop_assert!(common::rel_diff(lib, before[k]) <= 1e-10);
            }
            p[victim] *= 2.0;
            for k in (0..5).filter(|&k| k != victim) {
                let after = sinr_by_hand(k, c.v.ue(k), &st, &d.estimate, &p);
                prop_assert!(after <= before[k], "UE {}: {} -> {}", k, before[k], after);
            }
            p[victim] = 0.1;
        }
    }
}
