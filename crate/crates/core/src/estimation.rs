//! Pilot despreading and MMSE channel estimation.
//!
//! Everything that depends only on the setup (pilot correlation matrices,
//! their inverses, the estimation filters and the error covariances) is
//! computed once in [`EstimationStats`]. A realization then costs one pilot
//! despreading per `(t, l)` and one `N × N` filter per `(k, l)`.

use num_complex::Complex64;
use rand::Rng;

use crate::dcc::{ClusterAssignment, PilotBook};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_inverse, hermitize, mat_vec, trace_re, CMatrix};
use crate::rng::complex_normal;
use crate::topology::{ChannelRealization, Topology};

/// Despread pilot signals `y_tl`, stored as `[t][l][antenna]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservations {
    num_aps: usize,
    antennas: usize,
    data: Vec<Complex64>,
}

impl PilotObservations {
    pub fn get(&self, t: usize, l: usize) -> &[Complex64] {
        let start = (t * self.num_aps + l) * self.antennas;
        &self.data[start..start + self.antennas]
    }
}

/// `Ψ_tl = Σ_{i∈S_t} τ_p p_i R_il + σ² I_N`.
pub fn pilot_correlation(
    sharers: &[usize],
    l: usize,
    topology: &Topology,
    ue_power: &[f64],
    pilot_len: usize,
    noise: f64,
) -> CMatrix {
    let n = topology.antennas;
    let mut psi = CMatrix::identity(n, n) * Complex64::new(noise, 0.0);
    for &i in sharers {
        psi += topology.correlation(i, l) * Complex64::new(pilot_len as f64 * ue_power[i], 0.0);
    }
    psi
}

/// Setup-level estimation statistics.
#[derive(Debug, Clone)]
pub struct EstimationStats {
    num_aps: usize,
    antennas: usize,
    pilot_len: usize,
    noise: f64,
    ue_power: Vec<f64>,
    pilots: Vec<usize>,
    book: PilotBook,
    psi: Vec<CMatrix>,
    psi_inv: Vec<CMatrix>,
    filter: Vec<CMatrix>,
    estimate_cov: Vec<CMatrix>,
    error_cov: Vec<CMatrix>,
}

impl EstimationStats {
    /// Precomputes `Ψ_tl`, `Ψ_tl^{-1}` and, for every UE–AP pair, the filter
    /// `√(p_k τ_p) R_kl Ψ^{-1}`, the estimate covariance
    /// `p_k τ_p R_kl Ψ^{-1} R_kl` and the error covariance `C_kl`.
    pub fn new(
        topology: &Topology,
        assignment: &ClusterAssignment,
        ue_power: &[f64],
        noise: f64,
    ) -> Result<Self> {
        let l_count = topology.num_aps();
        let k_count = topology.num_ues();
        let n = topology.antennas;
        let tp = assignment.pilot_len();
        assert_eq!(ue_power.len(), k_count);
        let book = assignment.pilot_book();
        let pilots = assignment.pilots();

        let mut psi = Vec::with_capacity(tp * l_count);
        let mut psi_inv = Vec::with_capacity(tp * l_count);
        for t in 0..tp {
            for l in 0..l_count {
                let p = pilot_correlation(&book.sharers[t], l, topology, ue_power, tp, noise);
                let inv = if book.sharers[t].is_empty() && noise == 0.0 {
                    CMatrix::zeros(n, n)
                } else {
                    hermitian_inverse(&p).map_err(|_| {
                        Error::Numeric(format!("pilot correlation of pilot {t} at AP {l} is singular"))
                    })?
                };
                psi.push(p);
                psi_inv.push(inv);
            }
        }

        let mut filter = Vec::with_capacity(k_count * l_count);
        let mut estimate_cov = Vec::with_capacity(k_count * l_count);
        let mut error_cov = Vec::with_capacity(k_count * l_count);
        for k in 0..k_count {
            let t = pilots[k];
            let scale = (ue_power[k] * tp as f64).sqrt();
            for l in 0..l_count {
                let r = topology.correlation(k, l);
                let r_psi_inv = r * &psi_inv[t * l_count + l];
                let mut est = &r_psi_inv * r * Complex64::new(scale * scale, 0.0);
                hermitize(&mut est);
                let mut err = r - &est;
                hermitize(&mut err);
                filter.push(r_psi_inv * Complex64::new(scale, 0.0));
                estimate_cov.push(est);
                error_cov.push(err);
            }
        }

        Ok(EstimationStats {
            num_aps: l_count,
            antennas: n,
            pilot_len: tp,
            noise,
            ue_power: ue_power.to_vec(),
            pilots,
            book,
            psi,
            psi_inv,
            filter,
            estimate_cov,
            error_cov,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn num_ues(&self) -> usize {
        self.ue_power.len()
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn pilot_len(&self) -> usize {
        self.pilot_len
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn ue_power(&self) -> &[f64] {
        &self.ue_power
    }

    pub fn pilot(&self, k: usize) -> usize {
        self.pilots[k]
    }

    pub fn pilot_book(&self) -> &PilotBook {
        &self.book
    }

    pub fn psi(&self, t: usize, l: usize) -> &CMatrix {
        &self.psi[t * self.num_aps + l]
    }

    pub fn psi_inv(&self, t: usize, l: usize) -> &CMatrix {
        &self.psi_inv[t * self.num_aps + l]
    }

    /// `√(p_k τ_p) R_kl Ψ_{t_k l}^{-1}`.
    pub fn filter(&self, k: usize, l: usize) -> &CMatrix {
        &self.filter[k * self.num_aps + l]
    }

    /// `E{ĥ_kl ĥ_kl^H} = p_k τ_p R_kl Ψ^{-1} R_kl`.
    pub fn estimate_covariance(&self, k: usize, l: usize) -> &CMatrix {
        &self.estimate_cov[k * self.num_aps + l]
    }

    /// `C_kl = R_kl − p_k τ_p R_kl Ψ^{-1} R_kl`.
    pub fn error_covariance(&self, k: usize, l: usize) -> &CMatrix {
        &self.error_cov[k * self.num_aps + l]
    }

    /// `E{‖ĥ_kl‖²} = p_k τ_p tr(R_kl Ψ^{-1} R_kl)`.
    pub fn estimate_power(&self, k: usize, l: usize) -> f64 {
        trace_re(self.estimate_covariance(k, l))
    }
}

/// `y_tl = Σ_{i∈S_t} √(τ_p p_i) h_il + n_tl` for every pilot and AP.
///
/// Noise is drawn for every `(t, l)` in pilot-major order whether or not
/// the noise power is zero, so the stream position is configuration
/// independent.
pub fn despread_pilots<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    stats: &EstimationStats,
    rng: &mut R,
) -> PilotObservations {
    let l_count = stats.num_aps;
    let n = stats.antennas;
    let tp = stats.pilot_len;
    let sigma = stats.noise.sqrt();
    let mut data = vec![Complex64::new(0.0, 0.0); tp * l_count * n];
    for t in 0..tp {
        for l in 0..l_count {
            let y = &mut data[(t * l_count + l) * n..(t * l_count + l + 1) * n];
            for i in &stats.book.sharers[t] {
                let a = (tp as f64 * stats.ue_power[*i]).sqrt();
                for (yy, hh) in y.iter_mut().zip(channel.get(*i, l)) {
                    *yy += hh * a;
                }
            }
            for yy in y.iter_mut() {
                *yy += complex_normal(rng) * sigma;
            }
        }
    }
    PilotObservations {
        num_aps: l_count,
        antennas: n,
        data,
    }
}

/// `ĥ_kl = √(p_k τ_p) R_kl Ψ_{t_k l}^{-1} y_{t_k l}`.
pub fn mmse_estimate(k: usize, l: usize, y: &PilotObservations, stats: &EstimationStats) -> Vec<Complex64> {
    mat_vec(stats.filter(k, l), y.get(stats.pilot(k), l))
}

/// Estimates of every UE at every AP.
pub fn estimate_all(y: &PilotObservations, stats: &EstimationStats) -> ChannelRealization {
    let k_count = stats.num_ues();
    let mut out = ChannelRealization::zeros(k_count, stats.num_aps, stats.antennas);
    for k in 0..k_count {
        for l in 0..stats.num_aps {
            let est = mmse_estimate(k, l, y, stats);
            out.get_mut(k, l).copy_from_slice(&est);
        }
    }
    out
}
