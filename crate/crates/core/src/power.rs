//! UL and DL power allocation, and DL powers from UL–DL duality.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dcc::ClusterAssignment;
use crate::error::{Error, Result};
use crate::performance::{DownlinkMoments, UplinkMoments};
use crate::topology::LargeScale;

/// Every UE transmits at full power `P`.
pub fn ul_full_power(num_ues: usize, max_power: f64) -> Vec<f64> {
    vec![max_power; num_ues]
}

/// Network-wide equal allocation `ρ_i = ρ/τ_p`. Each AP serves at most
/// `τ_p` UEs, so no AP exceeds `ρ`.
pub fn dl_centralized_equal(num_ues: usize, ap_power: f64, pilot_len: usize) -> Vec<f64> {
    vec![ap_power / pilot_len as f64; num_ues]
}

/// `ρ_kl = ρ √β_kl / Σ_{i∈D_l} √β_il` for `k ∈ D_l`, else 0; returned as
/// `rho[k·L + l]`.
pub fn dl_distributed_proportional(assignment: &ClusterAssignment, ls: &LargeScale, ap_power: f64) -> Vec<f64> {
    let l_count = assignment.num_aps();
    let mut rho = vec![0.0; assignment.num_ues() * l_count];
    for l in 0..l_count {
        let served = assignment.served_by_ap(l);
        let total: f64 = served.iter().map(|&i| ls.beta(i, l).sqrt()).sum();
        if total == 0.0 {
            continue;
        }
        for &k in served {
            rho[k * l_count + l] = ap_power * ls.beta(k, l).sqrt() / total;
        }
    }
    rho
}

/// `Γ`, `Σ` and the UL SINR targets of the duality construction.
#[derive(Debug, Clone, Serialize)]
pub struct DualityMatrices {
    pub gamma_diag: Vec<f64>,
    /// Row-major `Σ[k][i]`.
    pub sigma: Vec<f64>,
    pub targets: Vec<f64>,
}

impl DualityMatrices {
    /// `Γ_kk = |b_k|²/(c_k γ_k)` and
    /// `Σ_ki = A[i][k]/c_i − δ_ki |b_k|²/c_k`, i.e. the DL moments of the
    /// precoders `w̄_i = v_i/√c_i`.
    pub fn new(ul: &UplinkMoments) -> Result<Self> {
        let k_count = ul.num_ues();
        let targets = ul.sinrs();
        let mut gamma_diag = Vec::with_capacity(k_count);
        let mut sigma = vec![0.0; k_count * k_count];
        for k in 0..k_count {
            let c = ul.combiner_norm[k];
            let b2 = ul.signal[k].norm_sqr();
            if !(c > 0.0) || targets[k] <= 0.0 {
                return Err(Error::DegeneratePrecoder { ue: k });
            }
            gamma_diag.push(b2 / (c * targets[k]));
            for i in 0..k_count {
                let mut s = ul.interference(i, k) / ul.combiner_norm[i];
                if i == k {
                    s -= b2 / c;
                }
                sigma[k * k_count + i] = s;
            }
        }
        Ok(DualityMatrices {
            gamma_diag,
            sigma,
            targets,
        })
    }

    pub fn num_ues(&self) -> usize {
        self.gamma_diag.len()
    }

    /// `Γ − Σ` (or `Γ − Σᵀ`).
    pub fn system(&self, transpose: bool) -> DMatrix<f64> {
        let k = self.num_ues();
        DMatrix::from_fn(k, k, |r, c| {
            let s = if transpose { self.sigma[c * k + r] } else { self.sigma[r * k + c] };
            let g = if r == c { self.gamma_diag[r] } else { 0.0 };
            g - s
        })
    }
}

/// DL moments of the precoders `√ρ_i v_i/√c_i` built from UL statistics.
pub fn downlink_from_uplink(ul: &UplinkMoments, rho: &[f64], dl_noise: f64) -> DownlinkMoments {
    let k_count = ul.num_ues();
    let signal = (0..k_count)
        .map(|k| (rho[k] * ul.signal[k].norm_sqr() / ul.combiner_norm[k]).sqrt())
        .collect();
    let mut interference = vec![0.0; k_count * k_count];
    for k in 0..k_count {
        for i in 0..k_count {
            interference[k * k_count + i] = rho[i] * ul.interference(i, k) / ul.combiner_norm[i];
        }
    }
    DownlinkMoments {
        signal,
        interference,
        noise: dl_noise,
    }
}

/// Outcome of the duality construction.
#[derive(Debug, Clone, Serialize)]
pub struct DualityPower {
    pub rho: Vec<f64>,
    pub dl_sinr: Vec<f64>,
    pub ul_sinr: Vec<f64>,
    pub matrices: DualityMatrices,
}

pub const DUALITY_SINR_TOL: f64 = 1e-6;
pub const DUALITY_POWER_TOL: f64 = 1e-9;
const NEGATIVE_POWER_TOL: f64 = 1e-12;

/// DL powers `ρ = (Γ − Σ)^{-1} 1 σ²_dl` that reach the UL SINRs with the
/// precoders `w̄_i = v_i/√E{‖D_i v_i‖²}`.
///
/// The result is verified: every DL SINR must match its UL counterpart to
/// `sinr_tol` (relative) and `Σρ/σ²_dl = Σp/σ²_ul` to `power_tol`.
pub fn duality_power(ul: &UplinkMoments, dl_noise: f64, sinr_tol: f64, power_tol: f64) -> Result<DualityPower> {
    let m = DualityMatrices::new(ul)?;
    let k_count = m.num_ues();
    let a = m.system(false);
    let rhs = DVector::from_element(k_count, dl_noise);
    let lu = a.lu();
    let rho_vec = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Infeasible("Γ − Σ is singular".into()))?;
    let mut rho: Vec<f64> = rho_vec.iter().copied().collect();
    let scale = rho.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    for (k, r) in rho.iter_mut().enumerate() {
        if *r < 0.0 {
            if *r < -NEGATIVE_POWER_TOL * scale.max(1.0) {
                return Err(Error::Numeric(format!("duality power of UE {k} is negative ({r:e})")));
            }
            *r = 0.0;
        }
    }

    let dl_sinr = downlink_from_uplink(ul, &rho, dl_noise).sinrs();
    let ul_sinr = m.targets.clone();
    for k in 0..k_count {
        let rel = (dl_sinr[k] - ul_sinr[k]).abs() / ul_sinr[k].abs().max(f64::MIN_POSITIVE);
        if rel > sinr_tol {
            return Err(Error::Numeric(format!(
                "UE {k}: DL SINR {} differs from UL SINR {} (relative {rel:e})",
                dl_sinr[k], ul_sinr[k]
            )));
        }
    }
    let dl_total: f64 = rho.iter().sum::<f64>() / dl_noise;
    let ul_total: f64 = ul.ue_power.iter().sum::<f64>() / ul.noise;
    if (dl_total - ul_total).abs() > power_tol * ul_total.abs() {
        return Err(Error::Numeric(format!(
            "total power mismatch: Σρ/σ²_dl = {dl_total}, Σp/σ²_ul = {ul_total}"
        )));
    }
    Ok(DualityPower {
        rho,
        dl_sinr,
        ul_sinr,
        matrices: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn full_power_and_equal_split() {
        assert_eq!(ul_full_power(3, 0.1), vec![0.1; 3]);
        assert!(ul_full_power(0, 0.1).is_empty());
        assert_eq!(dl_centralized_equal(2, 1.0, 10), vec![0.1, 0.1]);
        assert_eq!(dl_centralized_equal(1, 1.0, 1), vec![1.0]);
    }

    #[test]
    fn proportional_split() {
        let ls = LargeScale::from_gains(1, 3, vec![4.0, 1.0, 9.0]);
        let a = ClusterAssignment::from_sets(1, 3, &[0, 1, 2], &[vec![0], vec![0], vec![0]]);
        let rho = dl_distributed_proportional(&a, &ls, 1.0);
        assert!((rho[0] - 2.0 / 6.0).abs() < 1e-15);
        assert!((rho[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((rho.iter().sum::<f64>() - 1.0).abs() < 1e-15);

        let a2 = ClusterAssignment::from_sets(1, 3, &[0, 1], &[vec![0], vec![0]]);
        let ls2 = LargeScale::from_gains(1, 2, vec![4.0, 1.0]);
        let rho2 = dl_distributed_proportional(&a2, &ls2, 1.0);
        assert!((rho2[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((rho2[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_ue_duality_returns_ul_power() {
        let ul = UplinkMoments {
            signal: vec![Complex64::new(2.0, 0.5)],
            interference: vec![6.0],
            combiner_norm: vec![1.5],
            ue_power: vec![0.3],
            noise: 0.7,
        };
        let d = duality_power(&ul, 0.7, 1e-9, 1e-12).unwrap();
        assert!((d.rho[0] - 0.3).abs() < 1e-12);
    }
}
