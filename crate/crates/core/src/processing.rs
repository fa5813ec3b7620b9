//! Receive combining.
//!
//! Centralized schemes solve on the `N|M_k|`-dimensional subspace of the
//! APs serving UE `k`; local schemes solve one `N × N` system per AP. The
//! batch entry point [`compute_combiners`] shares Gram factorizations
//! between UEs whenever they are identical (UEs with the same serving set
//! under MMSE, all UEs of an AP under L-MMSE/LP-MMSE). The per-UE functions
//! recompute everything and charge an [`OpCounter`]; both paths produce the
//! same vectors.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::accounting::OpCounter;
use crate::config::Scheme;
use crate::dcc::ClusterAssignment;
use crate::error::{Error, Result};
use crate::estimation::EstimationStats;
use crate::linalg::{hermitize, norm_sqr, rank_one_update, CMatrix, HermitianSolver};
use crate::topology::ChannelRealization;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Setup-level inputs of every combiner, with the error-covariance sums
/// that do not change between realizations.
pub struct ProcessingPlan<'a> {
    pub assignment: &'a ClusterAssignment,
    pub partners: &'a [Vec<usize>],
    pub stats: &'a EstimationStats,
    // Σ_{i} p_i C_il + σ² I over all UEs, per AP
    all_error: Vec<CMatrix>,
    // Σ_{i∈D_l} p_i C_il + σ² I, per AP
    local_error: Vec<CMatrix>,
    // Σ_{i∈P_k} p_i C_il + σ² I for l ∈ M_k, per UE (ascending l)
    partner_error: Vec<Vec<CMatrix>>,
}

impl<'a> ProcessingPlan<'a> {
    pub fn new(assignment: &'a ClusterAssignment, partners: &'a [Vec<usize>], stats: &'a EstimationStats) -> Self {
        let l_count = stats.num_aps();
        let p = stats.ue_power();
        let sum_over = |l: usize, ues: &mut dyn Iterator<Item = usize>| {
            let n = stats.antennas();
            let mut m = CMatrix::identity(n, n) * Complex64::new(stats.noise(), 0.0);
            for i in ues {
                m += stats.error_covariance(i, l) * Complex64::new(p[i], 0.0);
            }
            hermitize(&mut m);
            m
        };
        let all_error = (0..l_count)
            .map(|l| sum_over(l, &mut (0..stats.num_ues())))
            .collect();
        let local_error = (0..l_count)
            .map(|l| sum_over(l, &mut assignment.served_by_ap(l).iter().copied()))
            .collect();
        let partner_error = (0..stats.num_ues())
            .map(|k| {
                assignment
                    .serving_aps(k)
                    .iter()
                    .map(|&l| sum_over(l, &mut partners[k].iter().copied()))
                    .collect()
            })
            .collect();
        ProcessingPlan {
            assignment,
            partners,
            stats,
            all_error,
            local_error,
            partner_error,
        }
    }

    pub fn num_ues(&self) -> usize {
        self.stats.num_ues()
    }

    pub fn num_aps(&self) -> usize {
        self.stats.num_aps()
    }

    pub fn antennas(&self) -> usize {
        self.stats.antennas()
    }

    /// `Σ_i p_i C_il + σ² I` over all UEs.
    pub fn total_error(&self, l: usize) -> &CMatrix {
        &self.all_error[l]
    }
}

/// Combining vectors of all UEs for one realization, stored like a channel
/// realization; blocks outside `M_k` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerSet {
    pub scheme: Scheme,
    pub v: ChannelRealization,
}

fn gather(x: &[Complex64], serving: &[usize], n: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(serving.len() * n);
    for &l in serving {
        out.extend_from_slice(&x[l * n..(l + 1) * n]);
    }
    out
}

fn scatter(compact: &[Complex64], serving: &[usize], n: usize, out: &mut [Complex64]) {
    for (j, &l) in serving.iter().enumerate() {
        out[l * n..(l + 1) * n].copy_from_slice(&compact[j * n..(j + 1) * n]);
    }
}

/// `Σ_{i∈members} p_i ĥ_i ĥ_i^H` restricted to `serving`, plus the
/// block-diagonal error term.
fn central_gram(
    serving: &[usize],
    members: &[usize],
    error_blocks: &[&CMatrix],
    plan: &ProcessingPlan,
    hhat: &ChannelRealization,
    counter: Option<&OpCounter>,
) -> CMatrix {
    let n = plan.antennas();
    let dim = n * serving.len();
    let p = plan.stats.ue_power();
    let mut g = CMatrix::zeros(dim, dim);
    for &i in members {
        let x = gather(hhat.ue(i), serving, n);
        let ops = rank_one_update(&mut g, &x, p[i]);
        if let Some(c) = counter {
            c.add_combining(ops);
        }
    }
    for (j, block) in error_blocks.iter().enumerate() {
        let mut sub = g.view_mut((j * n, j * n), (n, n));
        sub += *block;
    }
    g
}

fn local_gram(
    l: usize,
    members: &mut dyn Iterator<Item = usize>,
    error: &CMatrix,
    plan: &ProcessingPlan,
    hhat: &ChannelRealization,
    counter: Option<&OpCounter>,
) -> CMatrix {
    let p = plan.stats.ue_power();
    let mut g = error.clone();
    for i in members {
        let ops = rank_one_update(&mut g, hhat.get(i, l), p[i]);
        if let Some(c) = counter {
            c.add_combining(ops);
        }
    }
    g
}

fn scaled(x: Vec<Complex64>, s: f64) -> Vec<Complex64> {
    x.into_iter().map(|z| z * s).collect()
}

/// `v_k = D_k ĥ_k`.
pub fn mr_combiner(
    k: usize,
    hhat: &ChannelRealization,
    assignment: &ClusterAssignment,
    counter: Option<&OpCounter>,
) -> Vec<Complex64> {
    let n = hhat.antennas();
    let mut v = vec![ZERO; hhat.num_aps() * n];
    for &l in assignment.serving_aps(k) {
        v[l * n..(l + 1) * n].copy_from_slice(hhat.get(k, l));
        if let Some(c) = counter {
            c.charge_estimate(n, assignment.pilot_len());
        }
    }
    v
}

fn centralized_combiner(
    k: usize,
    members: &[usize],
    error_blocks: &[&CMatrix],
    plan: &ProcessingPlan,
    hhat: &ChannelRealization,
    counter: Option<&OpCounter>,
) -> Vec<Complex64> {
    let n = plan.antennas();
    let serving = plan.assignment.serving_list(k);
    if let Some(c) = counter {
        for _ in 0..members.len() * serving.len() {
            c.charge_estimate(n, plan.stats.pilot_len());
        }
    }
    let g = central_gram(&serving, members, error_blocks, plan, hhat, counter);
    let solver = HermitianSolver::new(g);
    if let Some(c) = counter {
        c.charge_solve(n * serving.len());
    }
    let x = solver.solve(&gather(hhat.ue(k), &serving, n));
    let mut v = vec![ZERO; plan.num_aps() * n];
    scatter(&scaled(x, plan.stats.ue_power()[k]), &serving, n, &mut v);
    v
}

/// `v_k = p_k (Σ_i p_i D_k ĥ_i ĥ_i^H D_k + Z_k)^† D_k ĥ_k` over all `K` UEs.
pub fn mmse_combiner(
    k: usize,
    plan: &ProcessingPlan,
    hhat: &ChannelRealization,
    counter: Option<&OpCounter>,
) -> Vec<Complex64> {
    let members: Vec<usize> = (0..plan.num_ues()).collect();
    let blocks: Vec<&CMatrix> = plan.assignment.serving_aps(k).iter().map(|&l| &plan.all_error[l]).collect();
    centralized_combiner(k, &members, &blocks, plan, hhat, counter)
}

/// MMSE restricted to the partner set `P_k`, in the Gram and in `Z'_k`.
pub fn pmmse_combiner(
    k: usize,
    plan: &ProcessingPlan,
    hhat: &ChannelRealization,
    counter: Option<&OpCounter>,
) -> Vec<Complex64> {
    let blocks: Vec<&CMatrix> = plan.partner_error[k].iter().collect();
    centralized_combiner(k, &plan.partners[k], &blocks, plan, hhat, counter)
}

fn local_combiner(
    k: usize,
    l: usize,
    members: &[usize],
    error: &CMatrix,
    plan: &ProcessingPlan,
    hhat: &ChannelRealization,
    counter: Option<&OpCounter>,
) -> Vec<Complex64> {
    let n = plan.antennas();
    if let Some(c) = counter {
        for _ in members {
            c.charge_estimate(n, plan.stats.pilot_len());
        }
    }
    let g = local_gram(l, &mut members.iter().copied(), error, plan, hhat, counter);
    let solver = HermitianSolver::new(g);
    if let Some(c) = counter {
        c.charge_solve(n);
    }
    scaled(solver.solve(hhat.get(k, l)), plan.stats.ue_power()[k])
}

/// `v_kl = p_k (Σ_{i∈D_l} p_i (ĥ_il ĥ_il^H + C_il) + σ² I)^{-1} ĥ_kl`.
pub fn lpmmse_combiner(
    k: usize,
    l: usize,
    plan: &ProcessingPlan,
    hhat: &ChannelRealization,
    counter: Option<&OpCounter>,
) -> Vec<Complex64> {
    let members: Vec<usize> = plan.assignment.served_by_ap(l).iter().copied().collect();
    local_combiner(k, l, &members, &plan.local_error[l], plan, hhat, counter)
}

/// LP-MMSE with every UE of the network in the Gram matrix.
pub fn lmmse_combiner(
    k: usize,
    l: usize,
    plan: &ProcessingPlan,
    hhat: &ChannelRealization,
    counter: Option<&OpCounter>,
) -> Vec<Complex64> {
    let members: Vec<usize> = (0..plan.num_ues()).collect();
    local_combiner(k, l, &members, &plan.all_error[l], plan, hhat, counter)
}

/// Collective combiner of UE `k`, computed from scratch.
pub fn combiner_for_ue(
    scheme: Scheme,
    k: usize,
    plan: &ProcessingPlan,
    hhat: &ChannelRealization,
    counter: Option<&OpCounter>,
) -> Vec<Complex64> {
    match scheme {
        Scheme::Mr => mr_combiner(k, hhat, plan.assignment, counter),
        Scheme::Mmse => mmse_combiner(k, plan, hhat, counter),
        Scheme::PMmse => pmmse_combiner(k, plan, hhat, counter),
        Scheme::LMmse | Scheme::LpMmse => {
            let n = plan.antennas();
            let mut v = vec![ZERO; plan.num_aps() * n];
            for &l in plan.assignment.serving_aps(k) {
                let b = if scheme == Scheme::LMmse {
                    lmmse_combiner(k, l, plan, hhat, counter)
                } else {
                    lpmmse_combiner(k, l, plan, hhat, counter)
                };
                v[l * n..(l + 1) * n].copy_from_slice(&b);
            }
            v
        }
    }
}

/// Combiners of all UEs, sharing factorizations where possible.
pub fn compute_combiners(scheme: Scheme, plan: &ProcessingPlan, hhat: &ChannelRealization) -> CombinerSet {
    let k_count = plan.num_ues();
    let n = plan.antennas();
    let a = plan.assignment;
    let p = plan.stats.ue_power();
    let mut v = ChannelRealization::zeros(k_count, plan.num_aps(), n);
    match scheme {
        Scheme::Mr => {
            for k in 0..k_count {
                for &l in a.serving_aps(k) {
                    v.get_mut(k, l).copy_from_slice(hhat.get(k, l));
                }
            }
        }
        Scheme::Mmse | Scheme::PMmse => {
            // UEs whose Gram matrices coincide share one factorization
            let mut groups: BTreeMap<(Vec<usize>, Vec<usize>), Vec<usize>> = BTreeMap::new();
            for k in 0..k_count {
                let members = if scheme == Scheme::Mmse {
                    Vec::new()
                } else {
                    plan.partners[k].clone()
                };
                groups.entry((a.serving_list(k), members)).or_default().push(k);
            }
            let everyone: Vec<usize> = (0..k_count).collect();
            for ((serving, members), ues) in groups {
                let first = ues[0];
                let (members, blocks): (&[usize], Vec<&CMatrix>) = if scheme == Scheme::Mmse {
                    (&everyone, serving.iter().map(|&l| &plan.all_error[l]).collect())
                } else {
                    (&members, plan.partner_error[first].iter().collect())
                };
                let g = central_gram(&serving, members, &blocks, plan, hhat, None);
                let solver = HermitianSolver::new(g);
                for k in ues {
                    let x = solver.solve(&gather(hhat.ue(k), &serving, n));
                    scatter(&scaled(x, p[k]), &serving, n, v.ue_mut(k));
                }
            }
        }
        Scheme::LMmse | Scheme::LpMmse => {
            for l in 0..plan.num_aps() {
                let served = a.served_by_ap(l);
                if served.is_empty() {
                    continue;
                }
                let g = if scheme == Scheme::LMmse {
                    local_gram(l, &mut (0..k_count), &plan.all_error[l], plan, hhat, None)
                } else {
                    local_gram(l, &mut served.iter().copied(), &plan.local_error[l], plan, hhat, None)
                };
                let solver = HermitianSolver::new(g);
                for &k in served {
                    let x = solver.solve(hhat.get(k, l));
                    v.get_mut(k, l).copy_from_slice(&scaled(x, p[k]));
                }
            }
        }
    }
    CombinerSet { scheme, v }
}

/// The maximal instantaneous SINR attained by MMSE combining:
/// `p_k ĥ_k^H D_k (Σ_{i≠k} p_i D_k ĥ_i ĥ_i^H D_k + Z_k)^† D_k ĥ_k`.
pub fn mmse_optimal_sinr(k: usize, plan: &ProcessingPlan, hhat: &ChannelRealization) -> f64 {
    let n = plan.antennas();
    let serving = plan.assignment.serving_list(k);
    let others: Vec<usize> = (0..plan.num_ues()).filter(|&i| i != k).collect();
    let blocks: Vec<&CMatrix> = serving.iter().map(|&l| &plan.all_error[l]).collect();
    let g = central_gram(&serving, &others, &blocks, plan, hhat, None);
    let x = gather(hhat.ue(k), &serving, n);
    plan.stats.ue_power()[k] * HermitianSolver::new(g).inverse_quad_form(&x)
}

/// Per-setup normalization of precoders built from combiners.
///
/// Accumulates `‖D_k v_k‖²` per UE and `‖v_kl‖²` per UE–AP pair over
/// realizations; partial accumulators merge by addition.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAccumulator {
    num_aps: usize,
    count: u64,
    collective: Vec<f64>,
    per_ap: Vec<f64>,
}

impl NormAccumulator {
    pub fn new(num_ues: usize, num_aps: usize) -> Self {
        NormAccumulator {
            num_aps,
            count: 0,
            collective: vec![0.0; num_ues],
            per_ap: vec![0.0; num_ues * num_aps],
        }
    }

    pub fn add(&mut self, combiners: &CombinerSet, assignment: &ClusterAssignment) {
        self.count += 1;
        for k in 0..self.collective.len() {
            for &l in assignment.serving_aps(k) {
                let e = norm_sqr(combiners.v.get(k, l));
                self.per_ap[k * self.num_aps + l] += e;
                self.collective[k] += e;
            }
        }
    }

    pub fn merge(&mut self, other: &NormAccumulator) {
        self.count += other.count;
        for (a, b) in self.collective.iter_mut().zip(&other.collective) {
            *a += b;
        }
        for (a, b) in self.per_ap.iter_mut().zip(&other.per_ap) {
            *a += b;
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Monte-Carlo estimate of `E{‖D_k v_k‖²}`.
    pub fn collective_mean(&self, k: usize) -> Result<f64> {
        let e = self.collective[k] / self.count.max(1) as f64;
        if self.count == 0 || !(e > 0.0) {
            return Err(Error::DegeneratePrecoder { ue: k });
        }
        Ok(e)
    }

    /// Monte-Carlo estimate of `E{‖v_kl‖²}`.
    pub fn per_ap_mean(&self, k: usize, l: usize) -> f64 {
        self.per_ap[k * self.num_aps + l] / self.count.max(1) as f64
    }
}

/// `w̄ = v / √Ê`.
pub fn normalize_precoder(v: &[Complex64], mean_norm: f64) -> Result<Vec<Complex64>> {
    if !(mean_norm > 0.0) {
        return Err(Error::Numeric("precoder normalization is zero".into()));
    }
    let s = 1.0 / mean_norm.sqrt();
    Ok(v.iter().map(|z| z * s).collect())
}
