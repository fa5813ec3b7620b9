mod common;

use cellfree::accounting::{multiplication_count, OpCounter};
use cellfree::campaign::SetupState;
use cellfree::config::Scheme;
use cellfree::dcc::{compute_partners, ClusterAssignment};
use cellfree::estimation::{despread_pilots, estimate_all, EstimationStats};
use cellfree::performance::instantaneous_sinr;
use cellfree::processing::{combiner_for_ue, compute_combiners, mmse_optimal_sinr, NormAccumulator, ProcessingPlan};
use cellfree::rng::complex_normal;
use cellfree::topology::{sample_channel, spatial_correlation_matrix, LargeScale, Topology};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type CMatrix = DMatrix<Complex64>;

/// Accumulates `E{x y^H}` for complex vectors.
struct CrossCov {
    sum: CMatrix,
    n: usize,
}

impl CrossCov {
    fn new(dim: usize) -> Self {
        CrossCov {
            sum: CMatrix::zeros(dim, dim),
            n: 0,
        }
    }

    fn add(&mut self, x: &[Complex64], y: &[Complex64]) {
        for r in 0..x.len() {
            for c in 0..y.len() {
                self.sum[(r, c)] += x[r] * y[c].conj();
            }
        }
        self.n += 1;
    }

    /// Entrywise `|Ŝ − S| ≤ 5 √(A_rr B_cc / n)`, the standard deviation of a
    /// sample cross-covariance of Gaussian vectors with covariances `A`, `B`.
    fn assert_close(&self, expected: &CMatrix, a: &CMatrix, b: &CMatrix) {
        let n = self.n as f64;
        for r in 0..expected.nrows() {
            for c in 0..expected.ncols() {
                let got = self.sum[(r, c)] / n;
                let sd = (a[(r, r)].re * b[(c, c)].re / n).sqrt();
                assert!(
                    (got - expected[(r, c)]).norm() <= 5.0 * sd,
                    "entry ({r},{c}): {got} vs {}",
                    expected[(r, c)]
                );
            }
        }
    }
}

/// One AP with 2 antennas, three UEs; UEs 0 and 2 share pilot 0.
fn contaminated() -> (Topology, ClusterAssignment, EstimationStats) {
    let ls = LargeScale::from_gains(1, 3, vec![2e-9, 1e-9, 5e-10]);
    let r: Vec<CMatrix> = [(2e-9, 0.3), (1e-9, -0.8), (5e-10, 1.1)]
        .iter()
        .map(|&(b, phi)| spatial_correlation_matrix(b, phi, 15f64.to_radians(), 2))
        .collect();
    let topo = Topology::with_correlations(ls, 2, r).unwrap();
    let a = ClusterAssignment::from_sets(1, 2, &[0, 1, 0], &[vec![0], vec![0], vec![0]]);
    let stats = EstimationStats::new(&topo, &a, &[0.1, 0.1, 0.1], 1e-10).unwrap();
    (topo, a, stats)
}

#[test]
fn sample_statistics_match_estimation_covariances() {
    let (topo, _, stats) = contaminated();
    let draws = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut y_cov = CrossCov::new(2);
    let mut hhat_cov = CrossCov::new(2);
    let mut err_cov = CrossCov::new(2);
    let mut ortho = CrossCov::new(2);
    let mut shared = CrossCov::new(2);
    for _ in 0..draws {
        let h = sample_channel(&topo, &mut rng);
        let y = despread_pilots(&h, &stats, &mut rng);
        let hhat = estimate_all(&y, &stats);
        let e: Vec<Complex64> = h.get(0, 0).iter().zip(hhat.get(0, 0)).map(|(a, b)| a - b).collect();
        y_cov.add(y.get(0, 0), y.get(0, 0));
        hhat_cov.add(hhat.get(0, 0), hhat.get(0, 0));
        err_cov.add(&e, &e);
        ortho.add(hhat.get(0, 0), &e);
        shared.add(hhat.get(0, 0), hhat.get(2, 0));
    }
    let psi = stats.psi(0, 0);
    let b = stats.estimate_covariance(0, 0);
    let c = stats.error_covariance(0, 0);
    y_cov.assert_close(psi, psi, psi);
    hhat_cov.assert_close(b, b, b);
    err_cov.assert_close(c, c, c);
    ortho.assert_close(&CMatrix::zeros(2, 2), b, c);

    // UEs on the same pilot have correlated estimates: p τ_p R_0 Ψ⁻¹ R_2
    let expected = topo.correlation(0, 0) * stats.psi_inv(0, 0) * topo.correlation(2, 0) * Complex64::new(0.2, 0.0);
    shared.assert_close(&expected, b, stats.estimate_covariance(2, 0));
    assert!(expected.norm() > 0.1 * b.norm());
}

#[test]
fn estimate_and_error_covariances_decompose_r() {
    let (topo, _, stats) = contaminated();
    for k in 0..3 {
        let sum = stats.estimate_covariance(k, 0) + stats.error_covariance(k, 0);
        let r = topo.correlation(k, 0);
        assert!((sum - r).norm() <= 1e-10 * r.norm());
    }
}

/// First drop at or after `seed` where clustering succeeds.
fn state(seed: u64, serve_all: bool) -> SetupState {
    let mut cfg = common::config(6, 2, 5, 3);
    cfg.cluster.serve_all = serve_all;
    cfg.cluster.neighbor_radius_km = 0.15;
    (seed..)
        .find_map(|s| {
            cfg.seed = s;
            SetupState::build(&cfg, 0).ok()
        })
        .unwrap()
}

#[test]
fn batch_combiners_match_per_ue_combiners() {
    for serve_all in [false, true] {
        let st = state(3, serve_all);
        let plan = st.plan();
        let d = st.draw(0);
        for scheme in Scheme::ALL {
            let batch = compute_combiners(scheme, &plan, &d.estimate);
            for k in 0..plan.num_ues() {
                let single = combiner_for_ue(scheme, k, &plan, &d.estimate, None);
                let got = batch.v.ue(k);
                let scale = single.iter().map(|z| z.norm()).fold(0.0, f64::max);
                for (a, b) in got.iter().zip(&single) {
                    assert!((a - b).norm() <= 1e-9 * scale, "{scheme} UE {k}");
                }
                for l in 0..plan.num_aps() {
                    if !st.assignment.serves(l, k) {
                        assert!(batch.v.get(k, l).iter().all(|z| *z == Complex64::new(0.0, 0.0)));
                    }
                }
            }
        }
    }
}

#[test]
fn pmmse_coincides_with_mmse_when_everyone_is_served_everywhere() {
    let st = state(8, true);
    let plan = st.plan();
    for r in 0..5 {
        let d = st.draw(r);
        let m = compute_combiners(Scheme::Mmse, &plan, &d.estimate);
        let p = compute_combiners(Scheme::PMmse, &plan, &d.estimate);
        for k in 0..plan.num_ues() {
            let (a, b) = (m.v.ue(k), p.v.ue(k));
            let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
            let norm: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            assert!(diff <= 1e-12 * norm);
        }
    }
}

#[test]
fn lmmse_equals_lpmmse_when_aps_serve_everyone() {
    // K ≤ τ_p and serve-all, so D_l is the whole UE set
    let mut cfg = common::config(4, 2, 3, 3);
    cfg.cluster.serve_all = true;
    let st = common::setup(&cfg, 0);
    let plan = st.plan();
    let d = st.draw(1);
    let a = compute_combiners(Scheme::LMmse, &plan, &d.estimate);
    let b = compute_combiners(Scheme::LpMmse, &plan, &d.estimate);
    assert_eq!(a.v, b.v);
}

#[test]
fn lone_partner_pmmse_is_whitened_matched_filter() {
    // P_k = {k}: by Sherman–Morrison v ∝ Z'^{-1} ĥ with Z' = p C + σ² I
    let mut cfg = common::config(4, 2, 2, 2);
    cfg.network.area_side_km = 4.0;
    cfg.cluster.neighbor_radius_km = 0.0;
    let mut checked = 0;
    for seed in 0..20 {
        cfg.seed = seed;
        let st = common::setup(&cfg, 0);
        let k = 0;
        if st.partners[k] != vec![k] {
            continue;
        }
        let l = st.assignment.master(k);
        let d = st.draw(0);
        let v = combiner_for_ue(Scheme::PMmse, k, &st.plan(), &d.estimate, None);
        let z = st.stats.error_covariance(k, l) * Complex64::new(0.1, 0.0)
            + CMatrix::identity(2, 2) * Complex64::new(st.stats.noise(), 0.0);
        let target = z.lu().solve(&nalgebra::DVector::from_column_slice(d.estimate.get(k, l))).unwrap();
        let block = &v[l * 2..l * 2 + 2];
        let ratio = block[0] / target[0];
        for j in 0..2 {
            assert!((block[j] - ratio * target[j]).norm() <= 1e-10 * block[j].norm());
        }
        checked += 1;
    }
    assert!(checked > 0, "no isolated UE found");
}

#[test]
fn mmse_beats_every_other_combiner() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..3 {
        let st = state(seed, false);
        let plan = st.plan();
        for r in 0..10 {
            let d = st.draw(r);
            for k in 0..plan.num_ues() {
                let best = mmse_optimal_sinr(k, &plan, &d.estimate);
                let tol = best * 1e-10;
                let mmse = combiner_for_ue(Scheme::Mmse, k, &plan, &d.estimate, None);
                assert!((instantaneous_sinr(k, &mmse, &plan, &d.estimate) - best).abs() <= 1e-8 * best);
                for scheme in [Scheme::Mr, Scheme::PMmse, Scheme::LpMmse, Scheme::LMmse] {
                    let v = combiner_for_ue(scheme, k, &plan, &d.estimate, None);
                    assert!(instantaneous_sinr(k, &v, &plan, &d.estimate) <= best + tol);
                }
                for _ in 0..20 {
                    let mut v = vec![Complex64::new(0.0, 0.0); plan.num_aps() * plan.antennas()];
                    for &l in st.assignment.serving_aps(k) {
                        for j in 0..plan.antennas() {
                            v[l * plan.antennas() + j] = complex_normal(&mut rng);
                        }
                    }
                    assert!(instantaneous_sinr(k, &v, &plan, &d.estimate) <= best + tol);
                }
            }
        }
    }
}

#[test]
fn instrumented_counts_match_closed_form_for_local_schemes() {
    for seed in 0..5 {
        let st = state(seed, false);
        let plan = st.plan();
        let d = st.draw(0);
        for scheme in [Scheme::Mr, Scheme::LpMmse, Scheme::LMmse] {
            for k in 0..plan.num_ues() {
                let counter = OpCounter::new();
                combiner_for_ue(scheme, k, &plan, &d.estimate, Some(&counter));
                let expected = multiplication_count(scheme, k, &st.assignment, &st.partners, 2, 3);
                assert_eq!(counter.counts(), expected, "{scheme} UE {k}");
            }
        }
    }
}

#[test]
fn instrumented_counts_match_solve_convention_for_central_schemes() {
    let st = state(4, false);
    let plan = st.plan();
    let d = st.draw(0);
    for scheme in [Scheme::Mmse, Scheme::PMmse] {
        for k in 0..plan.num_ues() {
            let counter = OpCounter::new();
            combiner_for_ue(scheme, k, &plan, &d.estimate, Some(&counter));
            let expected = multiplication_count(scheme, k, &st.assignment, &st.partners, 2, 3);
            assert_eq!(counter.counts(), expected, "{scheme} UE {k}");
        }
    }
}

#[test]
fn normalized_precoders_have_unit_power_on_fresh_draws() {
    let st = state(6, false);
    let plan = st.plan();
    let k_count = plan.num_ues();
    let mut first = NormAccumulator::new(k_count, plan.num_aps());
    let mut fresh = NormAccumulator::new(k_count, plan.num_aps());
    let mut samples = vec![Vec::new(); k_count];
    for r in 0..400 {
        let c = compute_combiners(Scheme::LpMmse, &plan, &st.draw(r).estimate);
        first.add(&c, &st.assignment);
    }
    for r in 400..800 {
        let c = compute_combiners(Scheme::LpMmse, &plan, &st.draw(r).estimate);
        fresh.add(&c, &st.assignment);
        for (k, s) in samples.iter_mut().enumerate() {
            let norm: f64 = c.v.ue(k).iter().map(|z| z.norm_sqr()).sum();
            s.push(norm / first.collective_mean(k).unwrap());
        }
    }
    for s in samples {
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // two independent estimates of the same mean
        let se = (2.0 * var / n).sqrt();
        assert!((mean - 1.0).abs() <= 4.0 * se, "mean {mean}, se {se}");
    }
}

#[test]
fn mr_per_ap_norm_is_estimate_power() {
    let st = state(2, false);
    let plan = st.plan();
    let mut acc = NormAccumulator::new(plan.num_ues(), plan.num_aps());
    for r in 0..4000 {
        acc.add(&compute_combiners(Scheme::Mr, &plan, &st.draw(r).estimate), &st.assignment);
    }
    for k in 0..plan.num_ues() {
        for &l in st.assignment.serving_aps(k) {
            let expected = st.stats.estimate_power(k, l);
            // ‖ĥ‖² of a 2-antenna Gaussian vector has relative std ≤ 1
            assert!(common::rel_diff(acc.per_ap_mean(k, l), expected) <= 5.0 / (4000f64).sqrt());
        }
    }
}

#[test]
fn lpmmse_gain_has_bounded_support_unlike_mr() {
    // N = L = K = 1 with practically perfect CSI
    let ls = LargeScale::from_gains(1, 1, vec![1.0]);
    let topo = Topology::from_large_scale(ls, 1, 15.0).unwrap();
    let a = ClusterAssignment::from_sets(1, 1, &[0], &[vec![0]]);
    let stats = EstimationStats::new(&topo, &a, &[1.0], 1e-9).unwrap();
    let partners = compute_partners(&a);
    let plan = ProcessingPlan::new(&a, &partners, &stats);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut lp, mut mr) = (Vec::new(), Vec::new());
    for _ in 0..10_000 {
        let h = sample_channel(&topo, &mut rng);
        let (v_lp, v_mr) = (
            combiner_for_ue(Scheme::LpMmse, 0, &plan, &h, None),
            combiner_for_ue(Scheme::Mr, 0, &plan, &h, None),
        );
        lp.push((v_lp[0].conj() * h.get(0, 0)[0]).re);
        mr.push((v_mr[0].conj() * h.get(0, 0)[0]).re);
    }
    let spread = |x: &[f64]| x.iter().cloned().fold(0.0, f64::max) / (x.iter().sum::<f64>() / x.len() as f64);
    assert!(lp.iter().all(|&g| g < 1.0));
    assert!(spread(&lp) < spread(&mr));
    assert!(spread(&mr) > 5.0);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sinr_is_scale_invariant(seed in 0u64..1000, theta in 0.0f64..6.28, k in 0usize..5) {
        let st = state(seed, false);
        let plan = st.plan();
        let d = st.draw(seed as usize);
        for scheme in Scheme::ALL {
            let v = combiner_for_ue(scheme, k, &plan, &d.estimate, None);
            let s = Complex64::from_polar(7e3, theta);
            let w: Vec<Complex64> = v.iter().map(|z| z * s).collect();
            let (a, b) = (instantaneous_sinr(k, &v, &plan, &d.estimate), instantaneous_sinr(k, &w, &plan, &d.estimate));
            prop_assert!(common::rel_diff(a, b) <= 1e-9);
        }
    }

    #[test]
    fn random_probe_never_beats_mmse(seed in 0u64..1000, probe in any::<u64>()) {
        let st = state(seed, seed % 2 == 0);
        let plan = st.plan();
        let d = st.draw(0);
        let mut rng = ChaCha8Rng::seed_from_u64(probe);
        for k in 0..plan.num_ues() {
            let best = mmse_optimal_sinr(k, &plan, &d.estimate);
            let v: Vec<Complex64> = (0..plan.num_aps() * plan.antennas())
                .map(|_| if rng.random_bool(0.8) { complex_normal(&mut rng) } else { Complex64::new(0.0, 0.0) })
                .collect();
            prop_assert!(instantaneous_sinr(k, &v, &plan, &d.estimate) <= best * (1.0 + 1e-10));
        }
    }
}
