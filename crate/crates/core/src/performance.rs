//! Spectral-efficiency bounds.
//!
//! * Centralized UL: the side-information bound, the mean over realizations
//!   of `log2(1 + SINR)` with the instantaneous SINR evaluated on the
//!   estimates ([`instantaneous_sinrs`], [`LogAccumulator`]).
//! * Distributed UL and all DL: use-and-then-forget / hardening bounds,
//!   `log2` of a SINR built from averaged moments
//!   ([`HardeningAccumulator`]).
//! * MR closed forms for both bounds ([`ul_mr_moments`], [`dl_mr_moments`]).

use num_complex::Complex64;
use serde::Serialize;

use crate::dcc::ClusterAssignment;
use crate::error::{Error, Result};
use crate::estimation::EstimationStats;
use crate::linalg::{dot_h, norm_sqr, quad_form, trace_of_product, trace_re};
use crate::processing::{CombinerSet, ProcessingPlan};
use crate::topology::{ChannelRealization, Topology};

/// Denominators this close to zero (in standard errors) are sampling noise.
pub const CLAMP_SIGMAS: f64 = 3.0;
pub const CLAMP_FLOOR: f64 = 1e-15;

/// A spectral efficiency with its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeValue {
    pub se: f64,
    pub stderr: f64,
}

impl SeValue {
    pub const ZERO: SeValue = SeValue { se: 0.0, stderr: 0.0 };
}

/// `prelog · log2(1 + sinr)`, with the standard error of the SINR carried
/// through the logarithm.
pub fn se_from_sinr(prelog: f64, sinr: f64, sinr_stderr: f64) -> SeValue {
    SeValue {
        se: prelog * (1.0 + sinr).log2(),
        stderr: prelog * sinr_stderr / ((1.0 + sinr) * std::f64::consts::LN_2),
    }
}

/// `G[k·K + i] = Σ_{l∈M_k} c_kl v_kl^H x_il`.
///
/// With `x = h` and unit scales this gives the UL terms `v_k^H D_k h_i`; with
/// the precoder scales it gives `conj(h_i^H D_k w_k)`.
pub fn cross_gains(
    v: &ChannelRealization,
    x: &ChannelRealization,
    assignment: &ClusterAssignment,
    scale: Option<&[f64]>,
) -> Vec<Complex64> {
    let k_count = assignment.num_ues();
    let l_count = assignment.num_aps();
    let mut g = vec![Complex64::new(0.0, 0.0); k_count * k_count];
    for k in 0..k_count {
        for &l in assignment.serving_aps(k) {
            let c = scale.map_or(1.0, |s| s[k * l_count + l]);
            if c == 0.0 {
                continue;
            }
            let vk = v.get(k, l);
            let row = &mut g[k * k_count..(k + 1) * k_count];
            for (i, gi) in row.iter_mut().enumerate() {
                *gi += dot_h(vk, x.get(i, l)) * c;
            }
        }
    }
    g
}

/// Instantaneous UL SINR of every UE evaluated on the estimates:
/// `p_k |v_k^H D_k ĥ_k|² / (Σ_{i≠k} p_i |v_k^H D_k ĥ_i|² + v_k^H Z_k v_k)`.
pub fn instantaneous_sinrs(combiners: &CombinerSet, plan: &ProcessingPlan, hhat: &ChannelRealization) -> Vec<f64> {
    let k_count = plan.num_ues();
    let p = plan.stats.ue_power();
    let g = cross_gains(&combiners.v, hhat, plan.assignment, None);
    (0..k_count)
        .map(|k| {
            let row = &g[k * k_count..(k + 1) * k_count];
            let signal = p[k] * row[k].norm_sqr();
            let mut den = 0.0;
            for (i, gi) in row.iter().enumerate() {
                if i != k {
                    den += p[i] * gi.norm_sqr();
                }
            }
            for &l in plan.assignment.serving_aps(k) {
                den += quad_form(plan.total_error(l), combiners.v.get(k, l));
            }
            if signal == 0.0 {
                0.0
            } else {
                signal / den
            }
        })
        .collect()
}

/// Instantaneous SINR of UE `k` for an arbitrary collective combiner.
pub fn instantaneous_sinr(k: usize, v: &[Complex64], plan: &ProcessingPlan, hhat: &ChannelRealization) -> f64 {
    let n = plan.antennas();
    let p = plan.stats.ue_power();
    let serving = plan.assignment.serving_list(k);
    let proj = |i: usize| {
        serving
            .iter()
            .map(|&l| dot_h(&v[l * n..(l + 1) * n], hhat.get(i, l)))
            .sum::<Complex64>()
    };
    let signal = p[k] * proj(k).norm_sqr();
    let mut den = 0.0;
    for i in 0..plan.num_ues() {
        if i != k {
            den += p[i] * proj(i).norm_sqr();
        }
    }
    for &l in &serving {
        den += quad_form(plan.total_error(l), &v[l * n..(l + 1) * n]);
    }
    if signal == 0.0 {
        0.0
    } else {
        signal / den
    }
}

/// Running mean of per-realization `log2(1 + SINR)` values, per UE.
#[derive(Debug, Clone, PartialEq)]
pub struct LogAccumulator {
    count: u64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl LogAccumulator {
    pub fn new(num_ues: usize) -> Self {
        LogAccumulator {
            count: 0,
            sum: vec![0.0; num_ues],
            sum_sq: vec![0.0; num_ues],
        }
    }

    pub fn add(&mut self, sinrs: &[f64]) {
        self.count += 1;
        for (k, s) in sinrs.iter().enumerate() {
            let x = (1.0 + s).log2();
            self.sum[k] += x;
            self.sum_sq[k] += x * x;
        }
    }

    pub fn merge(&mut self, other: &LogAccumulator) {
        self.count += other.count;
        for k in 0..self.sum.len() {
            self.sum[k] += other.sum[k];
            self.sum_sq[k] += other.sum_sq[k];
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `prelog ·` mean, with the standard error `prelog · std/√n`.
    pub fn se(&self, k: usize, prelog: f64) -> SeValue {
        let n = self.count as f64;
        if self.count == 0 {
            return SeValue::ZERO;
        }
        let mean = self.sum[k] / n;
        let var = if self.count > 1 {
            ((self.sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        SeValue {
            se: prelog * mean,
            stderr: prelog * (var / n).sqrt(),
        }
    }
}

/// Per-UE sums of `x = (Re s, Im s, q)` and of `x xᵀ`, where `s` is the
/// effective-gain sample and `q` the total received power sample.
///
/// The hardening SINR is `a|E s|² / (E q − a|E s|² + c)`:
/// UL use-and-then-forget: `s = v_k^H D_k h_k`, `a = p_k`,
/// `q = Σ_i p_i |v_k^H D_k h_i|² + σ² ‖D_k v_k‖²`, `c = 0`;
/// DL hardening: `s = h_k^H D_k w_k`, `a = 1`, `q = Σ_i |h_k^H D_i w_i|²`,
/// `c = σ²_dl`.
#[derive(Debug, Clone, PartialEq)]
pub struct HardeningAccumulator {
    count: u64,
    // per UE: 3 first moments then 6 second moments (upper triangle)
    sums: Vec<[f64; 9]>,
}

impl HardeningAccumulator {
    pub fn new(num_ues: usize) -> Self {
        HardeningAccumulator {
            count: 0,
            sums: vec![[0.0; 9]; num_ues],
        }
    }

    /// Adds one realization; `s` and `q` hold one value per UE.
    pub fn add(&mut self, s: &[Complex64], q: &[f64]) {
        self.count += 1;
        for (k, acc) in self.sums.iter_mut().enumerate() {
            let x = [s[k].re, s[k].im, q[k]];
            acc[0] += x[0];
            acc[1] += x[1];
            acc[2] += x[2];
            acc[3] += x[0] * x[0];
            acc[4] += x[0] * x[1];
            acc[5] += x[0] * x[2];
            acc[6] += x[1] * x[1];
            acc[7] += x[1] * x[2];
            acc[8] += x[2] * x[2];
        }
    }

    pub fn merge(&mut self, other: &HardeningAccumulator) {
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            for j in 0..9 {
                a[j] += b[j];
            }
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `(E s, E q)`.
    pub fn means(&self, k: usize) -> (Complex64, f64) {
        let n = self.count.max(1) as f64;
        let a = &self.sums[k];
        (Complex64::new(a[0] / n, a[1] / n), a[2] / n)
    }

    fn covariance(&self, k: usize) -> [[f64; 3]; 3] {
        let n = self.count as f64;
        let a = &self.sums[k];
        let m = [a[0] / n, a[1] / n, a[2] / n];
        let denom = (n - 1.0).max(1.0);
        let c = |s: f64, i: usize, j: usize| (s - n * m[i] * m[j]) / denom;
        let c00 = c(a[3], 0, 0);
        let c01 = c(a[4], 0, 1);
        let c02 = c(a[5], 0, 2);
        let c11 = c(a[6], 1, 1);
        let c12 = c(a[7], 1, 2);
        let c22 = c(a[8], 2, 2);
        [[c00, c01, c02], [c01, c11, c12], [c02, c12, c22]]
    }

    /// Hardening SINR and its delta-method standard error.
    pub fn sinr(&self, k: usize, a: f64, c: f64) -> Result<(f64, f64)> {
        if self.count == 0 {
            return Err(Error::NoRealizations);
        }
        let n = self.count as f64;
        let (s, q) = self.means(k);
        let signal = a * s.norm_sqr();
        if signal == 0.0 {
            return Ok((0.0, 0.0));
        }
        let mut den = q - signal + c;
        let cov = self.covariance(k);
        let quad = |g: [f64; 3]| {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += g[i] * cov[i][j] * g[j];
                }
            }
            (acc.max(0.0) / n).sqrt()
        };
        if den <= 0.0 {
            let den_se = quad([-2.0 * a * s.re, -2.0 * a * s.im, 1.0]);
            if -den <= CLAMP_SIGMAS * den_se {
                den = CLAMP_FLOOR;
            } else {
                return Err(Error::Numeric(format!(
                    "UE {k}: interference-plus-noise term {den:e} is negative beyond sampling error {den_se:e}"
                )));
            }
        }
        let sinr = signal / den;
        let d2 = den * den;
        let grad = [
            2.0 * a * s.re * (den + signal) / d2,
            2.0 * a * s.im * (den + signal) / d2,
            -signal / d2,
        ];
        Ok((sinr, quad(grad)))
    }

    pub fn se(&self, k: usize, a: f64, c: f64, prelog: f64) -> Result<SeValue> {
        let (sinr, se) = self.sinr(k, a, c)?;
        Ok(se_from_sinr(prelog, sinr, se))
    }
}

/// UL samples for the use-and-then-forget bound from one realization.
/// `gains` are the unscaled [`cross_gains`] of the combiners on the true
/// channels.
pub fn ul_hardening_samples(
    gains: &[Complex64],
    combiners: &CombinerSet,
    assignment: &ClusterAssignment,
    ue_power: &[f64],
    noise: f64,
) -> (Vec<Complex64>, Vec<f64>) {
    let k_count = ue_power.len();
    let mut s = Vec::with_capacity(k_count);
    let mut q = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let row = &gains[k * k_count..(k + 1) * k_count];
        s.push(row[k]);
        let mut total: f64 = row.iter().zip(ue_power).map(|(g, p)| p * g.norm_sqr()).sum();
        let norm: f64 = assignment
            .serving_aps(k)
            .iter()
            .map(|&l| norm_sqr(combiners.v.get(k, l)))
            .sum();
        total += noise * norm;
        q.push(total);
    }
    (s, q)
}

/// DL samples from one realization. `gains` are [`cross_gains`] with the
/// precoder scales, so `gains[i·K + k] = conj(h_k^H D_i w_i)`.
pub fn dl_hardening_samples(gains: &[Complex64], num_ues: usize) -> (Vec<Complex64>, Vec<f64>) {
    let mut s = Vec::with_capacity(num_ues);
    let mut q = Vec::with_capacity(num_ues);
    for k in 0..num_ues {
        s.push(gains[k * num_ues + k].conj());
        q.push((0..num_ues).map(|i| gains[i * num_ues + k].norm_sqr()).sum());
    }
    (s, q)
}

/// Genie-aided DL SINR: the UE knows its instantaneous effective channels.
pub fn genie_sinrs(gains: &[Complex64], num_ues: usize, noise: f64) -> Vec<f64> {
    (0..num_ues)
        .map(|k| {
            let signal = gains[k * num_ues + k].norm_sqr();
            let interference: f64 = (0..num_ues)
                .filter(|&i| i != k)
                .map(|i| gains[i * num_ues + k].norm_sqr())
                .sum();
            signal / (interference + noise)
        })
        .collect()
}

/// Statistics of UL combining that enter the use-and-then-forget bound and
/// the duality construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UplinkMoments {
    /// `b_k = E{v_k^H D_k h_k}`.
    pub signal: Vec<Complex64>,
    /// `A[k·K + i] = E{|v_k^H D_k h_i|²}`.
    pub interference: Vec<f64>,
    /// `c_k = E{‖D_k v_k‖²}`.
    pub combiner_norm: Vec<f64>,
    pub ue_power: Vec<f64>,
    pub noise: f64,
}

impl UplinkMoments {
    pub fn num_ues(&self) -> usize {
        self.signal.len()
    }

    pub fn interference(&self, k: usize, i: usize) -> f64 {
        self.interference[k * self.num_ues() + i]
    }

    pub fn sinr(&self, k: usize) -> f64 {
        let signal = self.ue_power[k] * self.signal[k].norm_sqr();
        if signal == 0.0 {
            return 0.0;
        }
        let total: f64 = (0..self.num_ues())
            .map(|i| self.ue_power[i] * self.interference(k, i))
            .sum();
        signal / (total - signal + self.noise * self.combiner_norm[k])
    }

    pub fn sinrs(&self) -> Vec<f64> {
        (0..self.num_ues()).map(|k| self.sinr(k)).collect()
    }
}

/// Closed-form UL moments of MR combining `v_kl = ĥ_kl`.
pub fn ul_mr_moments(topology: &Topology, assignment: &ClusterAssignment, stats: &EstimationStats) -> UplinkMoments {
    let k_count = assignment.num_ues();
    let p = stats.ue_power();
    let tp = stats.pilot_len() as f64;
    let mut signal = vec![Complex64::new(0.0, 0.0); k_count];
    let mut norm = vec![0.0; k_count];
    let mut interference = vec![0.0; k_count * k_count];
    for k in 0..k_count {
        let tk = stats.pilot(k);
        let mut coherent = vec![Complex64::new(0.0, 0.0); k_count];
        for &l in assignment.serving_aps(k) {
            // p_k τ_p R_kl Ψ^{-1} R_kl
            let e = stats.estimate_covariance(k, l);
            let power = trace_re(e);
            signal[k] += power;
            norm[k] += power;
            let psi_inv_r = stats.psi_inv(tk, l) * topology.correlation(k, l);
            for i in 0..k_count {
                interference[k * k_count + i] += trace_of_product(topology.correlation(i, l), e).re;
                if stats.pilot(i) == tk {
                    coherent[i] += trace_of_product(topology.correlation(i, l), &psi_inv_r);
                }
            }
        }
        for i in 0..k_count {
            if stats.pilot(i) == tk {
                interference[k * k_count + i] += p[k] * p[i] * tp * tp * coherent[i].norm_sqr();
            }
        }
    }
    UplinkMoments {
        signal,
        interference,
        combiner_norm: norm,
        ue_power: p.to_vec(),
        noise: stats.noise(),
    }
}

/// Closed-form UL SE of MR combining.
pub fn ul_se_mr_closed_form(
    topology: &Topology,
    assignment: &ClusterAssignment,
    stats: &EstimationStats,
    prelog: f64,
) -> Vec<f64> {
    ul_mr_moments(topology, assignment, stats)
        .sinrs()
        .into_iter()
        .map(|s| prelog * (1.0 + s).log2())
        .collect()
}

/// DL hardening-bound moments with the transmit powers folded into the
/// precoders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DownlinkMoments {
    /// `|E{h_k^H D_k w_k}|`.
    pub signal: Vec<f64>,
    /// `I[k·K + i] = E{|h_k^H D_i w_i|²}`.
    pub interference: Vec<f64>,
    pub noise: f64,
}

impl DownlinkMoments {
    pub fn num_ues(&self) -> usize {
        self.signal.len()
    }

    pub fn sinr(&self, k: usize) -> f64 {
        let k_count = self.num_ues();
        let signal = self.signal[k] * self.signal[k];
        if signal == 0.0 {
            return 0.0;
        }
        let total: f64 = self.interference[k * k_count..(k + 1) * k_count].iter().sum();
        signal / (total - signal + self.noise)
    }

    pub fn sinrs(&self) -> Vec<f64> {
        (0..self.num_ues()).map(|k| self.sinr(k)).collect()
    }
}

/// Closed-form DL moments of MR precoding normalized per AP,
/// `w_il = √ρ_il ĥ_il / √E{‖ĥ_il‖²}`, with `rho[i·L + l] = ρ_il`.
pub fn dl_mr_moments(
    topology: &Topology,
    assignment: &ClusterAssignment,
    stats: &EstimationStats,
    rho: &[f64],
    noise: f64,
) -> DownlinkMoments {
    let k_count = assignment.num_ues();
    let l_count = assignment.num_aps();
    let p = stats.ue_power();
    let tp = stats.pilot_len() as f64;
    let mut signal = vec![0.0; k_count];
    let mut interference = vec![0.0; k_count * k_count];
    for i in 0..k_count {
        let ti = stats.pilot(i);
        let mut coherent = vec![Complex64::new(0.0, 0.0); k_count];
        for &l in assignment.serving_aps(i) {
            let r = rho[i * l_count + l];
            let e = stats.estimate_covariance(i, l);
            let power = trace_re(e);
            if r == 0.0 || power == 0.0 {
                continue;
            }
            signal[i] += (r * power).sqrt();
            let psi_inv_r = stats.psi_inv(ti, l) * topology.correlation(i, l);
            for k in 0..k_count {
                interference[k * k_count + i] += r * trace_of_product(e, topology.correlation(k, l)).re / power;
                if stats.pilot(k) == ti {
                    // √ρ_il √(p_k p_i) τ_p tr(R_kl Ψ^{-1} R_il) / √tr(E_il)
                    let t = trace_of_product(topology.correlation(k, l), &psi_inv_r);
                    coherent[k] += t * ((r * p[k] * p[i]).sqrt() * tp / power.sqrt());
                }
            }
        }
        for k in 0..k_count {
            if stats.pilot(k) == ti {
                interference[k * k_count + i] += coherent[k].norm_sqr();
            }
        }
    }
    DownlinkMoments {
        signal,
        interference,
        noise,
    }
}

/// Closed-form DL SE of per-AP normalized MR precoding.
pub fn dl_se_mr_closed_form(
    topology: &Topology,
    assignment: &ClusterAssignment,
    stats: &EstimationStats,
    rho: &[f64],
    noise: f64,
    prelog: f64,
) -> Vec<f64> {
    dl_mr_moments(topology, assignment, stats, rho, noise)
        .sinrs()
        .into_iter()
        .map(|s| prelog * (1.0 + s).log2())
        .collect()
}

/// Sorted values with empirical CDF levels `i/n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfStatistics {
    pub values: Vec<f64>,
    pub levels: Vec<f64>,
    pub mean: f64,
}

pub fn cdf_statistics(values: &[f64]) -> Result<CdfStatistics> {
    if values.is_empty() {
        return Err(Error::Empty("CDF input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let levels = (1..=sorted.len()).map(|i| i as f64 / n).collect();
    let mean = sorted.iter().sum::<f64>() / n;
    Ok(CdfStatistics {
        values: sorted,
        levels,
        mean,
    })
}
