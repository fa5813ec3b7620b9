//! Joint initial access, pilot assignment and cooperation-cluster formation.
//!
//! A UE joining the network
//!
//! 1. appoints the AP with the largest large-scale gain as its *master*,
//! 2. is assigned the pilot on which the master sees the least pilot power
//!    (skipping pilots where the master already serves a UE it is master
//!    of), and
//! 3. is offered to the neighboring APs, each of which serves it if it has
//!    no UE on that pilot yet, or if the newcomer has a stronger channel than
//!    the UE currently using the pilot there. A UE is never evicted from its
//!    own master.
//!
//! Every AP therefore serves at most one UE per pilot, `|D_l| ≤ τ_p`, and
//! every admitted UE is served by at least its master.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::config::{ClusterConfig, SimulationConfig};
use crate::error::{Error, Result};
use crate::topology::LargeScale;

/// What the master AP needs to evaluate `tr(Ψ_tl)`.
#[derive(Debug, Clone)]
pub struct PilotContext {
    pub pilot_len: usize,
    pub antennas: usize,
    /// UL pilot power of every UE (index = UE).
    pub ue_power: Vec<f64>,
    pub noise: f64,
}

impl PilotContext {
    pub fn from_config(cfg: &SimulationConfig) -> Self {
        PilotContext {
            pilot_len: cfg.frame.pilot_len,
            antennas: cfg.network.antennas_per_ap,
            ue_power: vec![cfg.power.ue_power_w; cfg.network.num_ues],
            noise: cfg.ul_noise(),
        }
    }
}

/// UEs sharing each pilot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PilotBook {
    pub sharers: Vec<Vec<usize>>,
}

/// Pilot, master and serving sets of every UE.
///
/// `D_il = I_N` exactly when `i ∈ served_by_ap(l)`, otherwise zero; the
/// diagonal matrices are never materialized.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterAssignment {
    num_aps: usize,
    pilot_len: usize,
    serve_all: bool,
    pilot_of: Vec<Option<usize>>,
    master_of: Vec<Option<usize>>,
    served_by_ap: Vec<BTreeSet<usize>>,
    serving_aps: Vec<BTreeSet<usize>>,
    // UE using each pilot at each AP (clustered mode only)
    #[serde(skip)]
    slot: Vec<Vec<Option<usize>>>,
}

impl ClusterAssignment {
    pub fn empty(num_aps: usize, num_ues: usize, pilot_len: usize) -> Self {
        ClusterAssignment {
            num_aps,
            pilot_len,
            serve_all: false,
            pilot_of: vec![None; num_ues],
            master_of: vec![None; num_ues],
            served_by_ap: vec![BTreeSet::new(); num_aps],
            serving_aps: vec![BTreeSet::new(); num_ues],
            slot: vec![vec![None; pilot_len]; num_aps],
        }
    }

    /// Builds an assignment from explicit pilots and serving sets. Masters
    /// are the first serving AP. Intended for tests and hand-built cases.
    pub fn from_sets(num_aps: usize, pilot_len: usize, pilots: &[usize], serving: &[Vec<usize>]) -> Self {
        assert_eq!(pilots.len(), serving.len());
        let mut a = Self::empty(num_aps, pilots.len(), pilot_len);
        a.serve_all = false;
        for (k, (&t, aps)) in pilots.iter().zip(serving).enumerate() {
            assert!(t < pilot_len);
            a.pilot_of[k] = Some(t);
            a.master_of[k] = aps.first().copied();
            for &l in aps {
                a.serving_aps[k].insert(l);
                a.served_by_ap[l].insert(k);
                a.slot[l][t] = Some(k);
            }
        }
        a
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn num_ues(&self) -> usize {
        self.pilot_of.len()
    }

    pub fn pilot_len(&self) -> usize {
        self.pilot_len
    }

    pub fn is_serve_all(&self) -> bool {
        self.serve_all
    }

    pub fn is_admitted(&self, k: usize) -> bool {
        self.pilot_of[k].is_some()
    }

    /// Pilot index of UE `k` (0-based).
    pub fn pilot(&self, k: usize) -> usize {
        self.pilot_of[k].expect("UE not admitted")
    }

    pub fn master(&self, k: usize) -> usize {
        self.master_of[k].expect("UE not admitted")
    }

    pub fn pilots(&self) -> Vec<usize> {
        self.pilot_of.iter().map(|p| p.expect("UE not admitted")).collect()
    }

    /// `D_l`: UEs served by AP `l`.
    pub fn served_by_ap(&self, l: usize) -> &BTreeSet<usize> {
        &self.served_by_ap[l]
    }

    /// `M_k`: APs serving UE `k`, ascending.
    pub fn serving_aps(&self, k: usize) -> &BTreeSet<usize> {
        &self.serving_aps[k]
    }

    pub fn serving_list(&self, k: usize) -> Vec<usize> {
        self.serving_aps[k].iter().copied().collect()
    }

    #[inline]
    pub fn serves(&self, l: usize, k: usize) -> bool {
        self.served_by_ap[l].contains(&k)
    }

    pub fn pilot_book(&self) -> PilotBook {
        let mut sharers = vec![Vec::new(); self.pilot_len];
        for (k, p) in self.pilot_of.iter().enumerate() {
            if let Some(t) = p {
                sharers[*t].push(k);
            }
        }
        PilotBook { sharers }
    }

    fn serve(&mut self, l: usize, k: usize) {
        let t = self.pilot(k);
        self.served_by_ap[l].insert(k);
        self.serving_aps[k].insert(l);
        if !self.serve_all {
            self.slot[l][t] = Some(k);
        }
    }

    fn drop_service(&mut self, l: usize, k: usize) {
        let t = self.pilot(k);
        self.served_by_ap[l].remove(&k);
        self.serving_aps[k].remove(&l);
        if !self.serve_all && self.slot[l][t] == Some(k) {
            self.slot[l][t] = None;
        }
    }

    /// Removes a UE from the network (e.g. before re-running its access
    /// procedure).
    pub fn remove_ue(&mut self, k: usize) {
        if !self.is_admitted(k) {
            return;
        }
        let aps: Vec<usize> = self.serving_aps[k].iter().copied().collect();
        for l in aps {
            self.drop_service(l, k);
        }
        self.pilot_of[k] = None;
        self.master_of[k] = None;
    }

    /// Whether `master` already masters a UE on pilot `t`.
    fn master_blocked(&self, master: usize, t: usize) -> bool {
        self.pilot_of
            .iter()
            .zip(&self.master_of)
            .any(|(p, m)| *p == Some(t) && *m == Some(master))
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for k in 0..self.num_ues() {
            if !self.is_admitted(k) {
                if !self.serving_aps[k].is_empty() {
                    return Err(format!("UE {k} not admitted but served"));
                }
                continue;
            }
            let m = self.master(k);
            if !self.serving_aps[k].contains(&m) {
                return Err(format!("UE {k} not served by its master {m}"));
            }
            for &l in &self.serving_aps[k] {
                if !self.served_by_ap[l].contains(&k) {
                    return Err(format!("M_{k} and D_{l} disagree"));
                }
            }
        }
        for l in 0..self.num_aps {
            for &k in &self.served_by_ap[l] {
                if !self.serving_aps[k].contains(&l) {
                    return Err(format!("D_{l} and M_{k} disagree"));
                }
            }
            if self.serve_all {
                continue;
            }
            if self.served_by_ap[l].len() > self.pilot_len {
                return Err(format!("AP {l} serves {} > τ_p UEs", self.served_by_ap[l].len()));
            }
            let mut used = BTreeSet::new();
            for &k in &self.served_by_ap[l] {
                if !used.insert(self.pilot(k)) {
                    return Err(format!("AP {l} serves two UEs on pilot {}", self.pilot(k)));
                }
            }
        }
        Ok(())
    }
}

/// Step 1: the AP with the largest gain; ties go to the lowest index.
pub fn appoint_master(beta_row: &[f64]) -> usize {
    assert!(!beta_row.is_empty(), "no APs");
    let mut best = 0;
    for (l, &b) in beta_row.iter().enumerate().skip(1) {
        if b > beta_row[best] {
            best = l;
        }
    }
    best
}

/// `tr(Ψ_tl)` at AP `l` for every pilot, counting only admitted UEs.
pub fn pilot_traces(l: usize, assignment: &ClusterAssignment, ls: &LargeScale, ctx: &PilotContext) -> Vec<f64> {
    let n = ctx.antennas as f64;
    let tp = ctx.pilot_len as f64;
    let mut traces = vec![n * ctx.noise; assignment.pilot_len()];
    for (k, p) in assignment.pilot_of.iter().enumerate() {
        if let Some(t) = p {
            traces[*t] += tp * ctx.ue_power[k] * n * ls.beta(k, l);
        }
    }
    traces
}

/// Argmin over the non-blocked pilots; ties go to the lowest index.
pub fn select_pilot(traces: &[f64], blocked: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (t, &tr) in traces.iter().enumerate() {
        if blocked[t] {
            continue;
        }
        if best.is_none_or(|b| tr < traces[b]) {
            best = Some(t);
        }
    }
    best
}

/// Step 2: the pilot with the least contamination at the master AP.
pub fn assign_pilot(
    ue: usize,
    master: usize,
    assignment: &ClusterAssignment,
    ls: &LargeScale,
    ctx: &PilotContext,
) -> Result<usize> {
    let traces = pilot_traces(master, assignment, ls, ctx);
    let blocked: Vec<bool> = (0..assignment.pilot_len())
        .map(|t| assignment.master_blocked(master, t))
        .collect();
    select_pilot(&traces, &blocked).ok_or(Error::MasterAtCapacity { ue, master })
}

/// APs invited by `master`: all within the wrap-around radius, nearest
/// first, capped at `max_neighbors`. The master itself is excluded.
pub fn neighbor_aps(master: usize, ls: &LargeScale, cluster: &ClusterConfig) -> Vec<usize> {
    let mut near: Vec<(f64, usize)> = (0..ls.num_aps())
        .filter(|&l| l != master)
        .map(|l| (ls.ap_distance(master, l), l))
        .filter(|&(d, _)| d <= cluster.neighbor_radius_km)
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    near.truncate(cluster.max_neighbors);
    near.into_iter().map(|(_, l)| l).collect()
}

/// Step 3: the master serves the UE; each neighbor serves it if the pilot
/// slot is free or held by a weaker UE it is not master of.
pub fn form_cluster(
    ue: usize,
    pilot: usize,
    master: usize,
    neighbors: &[usize],
    ls: &LargeScale,
    assignment: &mut ClusterAssignment,
) {
    assignment.pilot_of[ue] = Some(pilot);
    assignment.master_of[ue] = Some(master);

    if let Some(j) = assignment.slot[master][pilot] {
        debug_assert_ne!(assignment.master_of[j], Some(master));
        assignment.drop_service(master, j);
    }
    assignment.serve(master, ue);

    for &l in neighbors {
        match assignment.slot[l][pilot] {
            None => assignment.serve(l, ue),
            Some(j) => {
                if assignment.master_of[j] == Some(l) {
                    continue;
                }
                if ls.beta(ue, l) > ls.beta(j, l) {
                    assignment.drop_service(l, j);
                    assignment.serve(l, ue);
                }
            }
        }
    }
}

/// Runs Steps 1–3 for a UE that is not yet in the network.
pub fn admit_ue(
    ue: usize,
    ls: &LargeScale,
    assignment: &mut ClusterAssignment,
    ctx: &PilotContext,
    cluster: &ClusterConfig,
) -> Result<()> {
    if assignment.is_admitted(ue) {
        return Err(Error::AlreadyAdmitted(ue));
    }
    let master = appoint_master(ls.beta_row(ue));
    let pilot = assign_pilot(ue, master, assignment, ls, ctx)?;
    let neighbors = neighbor_aps(master, ls, cluster);
    form_cluster(ue, pilot, master, &neighbors, ls, assignment);
    Ok(())
}

/// Admits UE `ue` with a prescribed pilot (the initial orthogonal batch).
pub fn admit_with_pilot(
    ue: usize,
    pilot: usize,
    ls: &LargeScale,
    assignment: &mut ClusterAssignment,
    cluster: &ClusterConfig,
) -> Result<()> {
    if assignment.is_admitted(ue) {
        return Err(Error::AlreadyAdmitted(ue));
    }
    let master = appoint_master(ls.beta_row(ue));
    if assignment.master_blocked(master, pilot) {
        return Err(Error::MasterAtCapacity { ue, master });
    }
    let neighbors = neighbor_aps(master, ls, cluster);
    form_cluster(ue, pilot, master, &neighbors, ls, assignment);
    Ok(())
}

/// Admits all UEs in index order: the first `τ_p` get distinct pilots, the
/// rest go through the full access procedure.
pub fn form_clusters(
    ls: &LargeScale,
    pilot_len: usize,
    ctx: &PilotContext,
    cluster: &ClusterConfig,
) -> Result<ClusterAssignment> {
    let k = ls.num_ues();
    let mut a = ClusterAssignment::empty(ls.num_aps(), k, pilot_len);
    for ue in 0..k {
        if ue < pilot_len {
            admit_with_pilot(ue, ue, ls, &mut a, cluster)?;
        } else {
            admit_ue(ue, ls, &mut a, ctx, cluster)?;
        }
    }
    Ok(a)
}

/// Benchmark assignment: every AP serves every UE. Masters and pilots
/// follow the same Step 1/Step 2 rules (initial batch with distinct pilots).
pub fn serve_all(ls: &LargeScale, pilot_len: usize, ctx: &PilotContext) -> Result<ClusterAssignment> {
    let k = ls.num_ues();
    let l_count = ls.num_aps();
    let mut a = ClusterAssignment::empty(l_count, k, pilot_len);
    a.serve_all = true;
    for ue in 0..k {
        let master = appoint_master(ls.beta_row(ue));
        let pilot = if ue < pilot_len {
            ue
        } else {
            assign_pilot(ue, master, &a, ls, ctx)?
        };
        a.pilot_of[ue] = Some(pilot);
        a.master_of[ue] = Some(master);
        for l in 0..l_count {
            a.serve(l, ue);
        }
    }
    Ok(a)
}

/// Cluster assignment for a setup according to the config.
pub fn assignment_for(cfg: &SimulationConfig, ls: &LargeScale) -> Result<ClusterAssignment> {
    let ctx = PilotContext::from_config(cfg);
    if cfg.cluster.serve_all {
        serve_all(ls, cfg.frame.pilot_len, &ctx)
    } else {
        form_clusters(ls, cfg.frame.pilot_len, &ctx, &cfg.cluster)
    }
}

/// `P_k = { i : M_k ∩ M_i ≠ ∅ }`, each ascending.
pub fn compute_partners(assignment: &ClusterAssignment) -> Vec<Vec<usize>> {
    let k = assignment.num_ues();
    let mut sets = vec![BTreeSet::new(); k];
    for l in 0..assignment.num_aps() {
        let served = assignment.served_by_ap(l);
        for &a in served {
            sets[a].extend(served.iter().copied());
        }
    }
    for (i, s) in sets.iter_mut().enumerate() {
        if assignment.is_admitted(i) {
            s.insert(i);
        }
    }
    sets.into_iter().map(|s| s.into_iter().collect()).collect()
}
