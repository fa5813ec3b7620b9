//! Fronthaul signaling and per-UE complexity accounting.
//!
//! Fronthaul loads are counted in complex scalars per AP and coherence
//! block. Complexity is counted in complex multiplications per UE and
//! coherence block, split into channel estimation and combiner computation.
//! Solving an `n × n` Hermitian system is charged `(n³ − n)/3` for the
//! factorization plus `n²` for the substitutions; a rank-one Gram update is
//! charged `n(n + 1)/2`.

use std::cell::Cell;

use serde::Serialize;

use crate::config::{ProcessingMode, Scheme, SimulationConfig};
use crate::dcc::ClusterAssignment;

/// Complex scalars AP `l` exchanges with the CPU per coherence block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FronthaulLoad {
    pub pilot: u64,
    pub uplink: u64,
    pub downlink: u64,
}

impl FronthaulLoad {
    pub fn total(&self) -> u64 {
        self.pilot + self.uplink + self.downlink
    }
}

/// Multiplication counts of one UE.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub estimation: u64,
    pub combining: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.estimation + self.combining
    }
}

/// Running multiplication counter threaded through the instrumented
/// combiner functions.
#[derive(Debug, Default)]
pub struct OpCounter {
    estimation: Cell<u64>,
    combining: Cell<u64>,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_estimation(&self, n: u64) {
        self.estimation.set(self.estimation.get() + n);
    }

    pub fn add_combining(&self, n: u64) {
        self.combining.set(self.combining.get() + n);
    }

    /// One estimate `ĥ_kl` obtained: despreading (`Nτ_p`) plus filtering (`N²`).
    pub fn charge_estimate(&self, antennas: usize, pilot_len: usize) {
        self.add_estimation((antennas * pilot_len + antennas * antennas) as u64);
    }

    /// Factorization and substitutions of an `n × n` system.
    pub fn charge_solve(&self, n: usize) {
        self.add_combining(solve_cost(n));
    }

    pub fn counts(&self) -> OpCounts {
        OpCounts {
            estimation: self.estimation.get(),
            combining: self.combining.get(),
        }
    }
}

pub fn solve_cost(n: usize) -> u64 {
    let n = n as u64;
    (n * n * n - n) / 3 + n * n
}

pub fn gram_update_cost(n: usize) -> u64 {
    let n = n as u64;
    n * (n + 1) / 2
}

/// Per-AP fronthaul load.
pub fn fronthaul_load(
    mode: ProcessingMode,
    l: usize,
    assignment: &ClusterAssignment,
    antennas: usize,
    pilot_len: usize,
    ul_len: usize,
    dl_len: usize,
) -> FronthaulLoad {
    match mode {
        ProcessingMode::Centralized => FronthaulLoad {
            pilot: (pilot_len * antennas) as u64,
            uplink: (ul_len * antennas) as u64,
            downlink: (dl_len * antennas) as u64,
        },
        ProcessingMode::Distributed => {
            let d = assignment.served_by_ap(l).len();
            FronthaulLoad {
                pilot: 0,
                uplink: (ul_len * d) as u64,
                downlink: (dl_len * d) as u64,
            }
        }
    }
}

/// Closed-form multiplication count of UE `k` under `scheme`.
///
/// L-MMSE is the local scheme with all `K` UEs in every AP's Gram matrix,
/// counted like LP-MMSE with `|D_l|` replaced by `K`.
pub fn multiplication_count(
    scheme: Scheme,
    k: usize,
    assignment: &ClusterAssignment,
    partners: &[Vec<usize>],
    antennas: usize,
    pilot_len: usize,
) -> OpCounts {
    let n = antennas as u64;
    let est = n * pilot_len as u64 + n * n;
    let m = assignment.serving_aps(k).len() as u64;
    let big_k = assignment.num_ues() as u64;
    let nm = n * m;
    let central = |members: u64| OpCounts {
        estimation: est * members * m,
        combining: (nm * nm + nm) / 2 * members + nm * nm + (nm * nm * nm - nm) / 3,
    };
    let local = |load: u64| OpCounts {
        estimation: est * load,
        combining: (n * n + n) / 2 * load + ((n * n * n - n) / 3 + n * n) * m,
    };
    match scheme {
        Scheme::Mr => OpCounts {
            estimation: est * m,
            combining: 0,
        },
        Scheme::Mmse => central(big_k),
        Scheme::PMmse => central(partners[k].len() as u64),
        Scheme::LpMmse => {
            let load: usize = assignment
                .serving_aps(k)
                .iter()
                .map(|&l| assignment.served_by_ap(l).len())
                .sum();
            local(load as u64)
        }
        Scheme::LMmse => local(big_k * m),
    }
}

/// Fronthaul and complexity of one setup.
#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub mode: ProcessingMode,
    pub fronthaul: Vec<FronthaulLoad>,
    /// `(scheme, per-UE counts)`.
    pub complexity: Vec<(Scheme, Vec<OpCounts>)>,
}

impl CostReport {
    pub fn new(cfg: &SimulationConfig, assignment: &ClusterAssignment, partners: &[Vec<usize>]) -> Self {
        let n = cfg.network.antennas_per_ap;
        let tp = cfg.frame.pilot_len;
        let fronthaul = (0..assignment.num_aps())
            .map(|l| {
                fronthaul_load(
                    cfg.mode,
                    l,
                    assignment,
                    n,
                    tp,
                    cfg.frame.ul_data_len,
                    cfg.frame.dl_data_len,
                )
            })
            .collect();
        let complexity = cfg
            .schemes
            .iter()
            .map(|&s| {
                let counts = (0..assignment.num_ues())
                    .map(|k| multiplication_count(s, k, assignment, partners, n, tp))
                    .collect();
                (s, counts)
            })
            .collect();
        CostReport {
            mode: cfg.mode,
            fronthaul,
            complexity,
        }
    }

    /// Comma-separated table: one row per AP (`fronthaul`) and per UE and
    /// scheme (`complexity`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,index,scheme,pilot,uplink,downlink,estimation,combining\n");
        for (l, f) in self.fronthaul.iter().enumerate() {
            out.push_str(&format!(
                "fronthaul,{l},,{},{},{},,\n",
                f.pilot, f.uplink, f.downlink
            ));
        }
        for (s, counts) in &self.complexity {
            for (k, c) in counts.iter().enumerate() {
                out.push_str(&format!("complexity,{k},{s},,,,{},{}\n", c.estimation, c.combining));
            }
        }
        out
    }
}

/// One network size in a scalability sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ScalabilityRow {
    pub num_ues: usize,
    pub max_ap_load: usize,
    pub max_cluster: usize,
    pub max_pmmse_ops: u64,
    pub max_lpmmse_ops: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalabilityReport {
    pub rows: Vec<ScalabilityRow>,
    /// K-independent bound on the per-UE P-MMSE and LP-MMSE counts.
    pub pmmse_bound: u64,
    pub lpmmse_bound: u64,
    pub scalable: bool,
}

/// Checks the scalability conditions over assignments of growing size:
/// every AP serves at most `τ_p` UEs, and the per-UE P-MMSE and LP-MMSE
/// counts stay below the bound implied by `|M_k| ≤ max_cluster`,
/// `|P_k| ≤ (τ_p − 1)|M_k| + 1` and `|D_l| ≤ τ_p`, none of which involve `K`.
pub fn assert_scalable(
    assignments: &[&ClusterAssignment],
    antennas: usize,
    pilot_len: usize,
    max_cluster: usize,
) -> ScalabilityReport {
    let n = antennas as u64;
    let tp = pilot_len as u64;
    let m = max_cluster as u64;
    let est = n * tp + n * n;
    let nm = n * m;
    let p_bound = (tp - 1) * m + 1;
    let pmmse_bound = est * p_bound * m + (nm * nm + nm) / 2 * p_bound + nm * nm + (nm * nm * nm - nm) / 3;
    let lpmmse_bound = est * tp * m + (n * n + n) / 2 * tp * m + ((n * n * n - n) / 3 + n * n) * m;

    let mut scalable = true;
    let mut rows = Vec::new();
    for a in assignments {
        let partners = crate::dcc::compute_partners(a);
        let max_ap_load = (0..a.num_aps()).map(|l| a.served_by_ap(l).len()).max().unwrap_or(0);
        let max_cluster_seen = (0..a.num_ues()).map(|k| a.serving_aps(k).len()).max().unwrap_or(0);
        let max_of = |s: Scheme| {
            (0..a.num_ues())
                .map(|k| multiplication_count(s, k, a, &partners, antennas, pilot_len).total())
                .max()
                .unwrap_or(0)
        };
        let row = ScalabilityRow {
            num_ues: a.num_ues(),
            max_ap_load,
            max_cluster: max_cluster_seen,
            max_pmmse_ops: max_of(Scheme::PMmse),
            max_lpmmse_ops: max_of(Scheme::LpMmse),
        };
        scalable &= row.max_ap_load <= pilot_len
            && row.max_cluster <= max_cluster
            && row.max_pmmse_ops <= pmmse_bound
            && row.max_lpmmse_ops <= lpmmse_bound;
        rows.push(row);
    }
    ScalabilityReport {
        rows,
        pmmse_bound,
        lpmmse_bound,
        scalable,
    }
}
