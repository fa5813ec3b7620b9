//! Network geometry, large-scale fading, spatial correlation and channel
//! sampling.
//!
//! APs and UEs are dropped uniformly on a square that wraps around at its
//! edges, so every node sees an (approximately) infinite network. The AP
//! height enters as a constant vertical offset and gives a natural minimum
//! distance.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::{ChannelModel, SimulationConfig};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_sqrt, trace_re, CMatrix};
use crate::rng::complex_normal;

/// A point on the square, in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Signed shortest difference `b - a` on a circle of circumference `side`.
#[inline]
pub fn toroidal_delta(a: f64, b: f64, side: f64) -> f64 {
    let mut d = (b - a) % side;
    if d > side / 2.0 {
        d -= side;
    } else if d < -side / 2.0 {
        d += side;
    }
    d
}

/// Wrap-around distance in km between two points on a `side × side` torus
/// with a vertical offset of `height_km`.
pub fn wraparound_distance(a: Point, b: Point, side_km: f64, height_km: f64) -> f64 {
    let dx = toroidal_delta(a.x, b.x, side_km);
    let dy = toroidal_delta(a.y, b.y, side_km);
    (dx * dx + dy * dy + height_km * height_km).sqrt()
}

/// Linear channel gain for a link of length `d_km` with the given shadowing
/// realization (dB).
pub fn large_scale_coefficient(d_km: f64, shadow_db: f64, model: &ChannelModel) -> Result<f64> {
    if !(d_km > 0.0) {
        return Err(Error::Domain(format!("link distance must be positive, got {d_km}")));
    }
    let db = -model.pathloss_at_1m_db - model.pathloss_slope_db * (d_km * 1000.0).log10() + shadow_db;
    Ok(10f64.powf(db / 10.0))
}

/// Local-scattering correlation matrix of a half-wavelength ULA.
///
/// Entry `(m, n)` is
/// `β · exp(jπ(m−n) sin φ) · exp(−(σ_φ π (m−n) cos φ)² / 2)`
/// with nominal angle `φ` and angular standard deviation `σ_φ` (radians).
/// The diagonal is `β`, so the trace is exactly `Nβ`.
pub fn spatial_correlation_matrix(beta: f64, angle: f64, spread: f64, n: usize) -> CMatrix {
    let mut r = CMatrix::zeros(n, n);
    let (s, c) = angle.sin_cos();
    for col in 0..n {
        r[(col, col)] = Complex64::new(beta, 0.0);
        for row in (col + 1)..n {
            let d = (row as f64) - (col as f64);
            let envelope = (-(spread * PI * d * c).powi(2) / 2.0).exp();
            let v = Complex64::from_polar(beta * envelope, PI * d * s);
            r[(row, col)] = v;
            r[(col, row)] = v.conj();
        }
    }
    r
}

/// Uniform drop of `num_aps` APs and `num_ues` UEs on `[0, side)²`.
pub fn place_entities<R: Rng + ?Sized>(
    num_aps: usize,
    num_ues: usize,
    side_km: f64,
    rng: &mut R,
) -> (Vec<Point>, Vec<Point>) {
    assert!(side_km > 0.0, "area side must be positive");
    let mut draw = |count: usize| -> Vec<Point> {
        (0..count)
            .map(|_| {
                let x = rng.random::<f64>() * side_km;
                let y = rng.random::<f64>() * side_km;
                Point::new(x, y)
            })
            .collect()
    };
    let aps = draw(num_aps);
    let ues = draw(num_ues);
    (aps, ues)
}

/// Positions and large-scale fading of one network setup.
///
/// This is all the cluster formation needs; the correlation matrices live
/// in [`Topology`].
#[derive(Debug, Clone, Serialize)]
pub struct LargeScale {
    pub side_km: f64,
    pub height_km: f64,
    pub ap_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
    beta: Vec<f64>,
    angle: Vec<f64>,
}

impl LargeScale {
    /// Drops the nodes and draws independent shadowing for every link.
    pub fn generate<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<Self> {
        let net = &cfg.network;
        let (aps, ues) = place_entities(net.num_aps, net.num_ues, net.area_side_km, rng);
        let mut shadows = vec![0.0; aps.len() * ues.len()];
        for s in &mut shadows {
            let z: f64 = rng.sample(StandardNormal);
            *s = cfg.channel.shadowing_std_db * z;
        }
        Self::from_positions(
            aps,
            ues,
            net.area_side_km,
            net.ap_height_m / 1000.0,
            &shadows,
            &cfg.channel,
        )
    }

    pub fn from_positions(
        ap_positions: Vec<Point>,
        ue_positions: Vec<Point>,
        side_km: f64,
        height_km: f64,
        shadow_db: &[f64],
        model: &ChannelModel,
    ) -> Result<Self> {
        let l = ap_positions.len();
        let k = ue_positions.len();
        assert_eq!(shadow_db.len(), k * l);
        let mut beta = Vec::with_capacity(k * l);
        let mut angle = Vec::with_capacity(k * l);
        for (ki, ue) in ue_positions.iter().enumerate() {
            for (li, ap) in ap_positions.iter().enumerate() {
                let d = wraparound_distance(*ap, *ue, side_km, height_km);
                beta.push(large_scale_coefficient(d, shadow_db[ki * l + li], model)?);
                let dx = toroidal_delta(ap.x, ue.x, side_km);
                let dy = toroidal_delta(ap.y, ue.y, side_km);
                angle.push(dy.atan2(dx));
            }
        }
        Ok(LargeScale {
            side_km,
            height_km,
            ap_positions,
            ue_positions,
            beta,
            angle,
        })
    }

    /// Explicit gains, positions at the origin. Useful for hand-built cases.
    pub fn from_gains(num_aps: usize, num_ues: usize, beta: Vec<f64>) -> Self {
        assert_eq!(beta.len(), num_aps * num_ues);
        LargeScale {
            side_km: 1.0,
            height_km: 0.0,
            ap_positions: vec![Point::new(0.0, 0.0); num_aps],
            ue_positions: vec![Point::new(0.0, 0.0); num_ues],
            angle: vec![0.0; beta.len()],
            beta,
        }
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }

    #[inline]
    pub fn beta(&self, k: usize, l: usize) -> f64 {
        self.beta[k * self.num_aps() + l]
    }

    pub fn beta_row(&self, k: usize) -> &[f64] {
        let l = self.num_aps();
        &self.beta[k * l..(k + 1) * l]
    }

    pub fn angle(&self, k: usize, l: usize) -> f64 {
        self.angle[k * self.num_aps() + l]
    }

    /// Horizontal wrap-around distance between two APs (km).
    pub fn ap_distance(&self, a: usize, b: usize) -> f64 {
        wraparound_distance(self.ap_positions[a], self.ap_positions[b], self.side_km, 0.0)
    }
}

/// Large-scale fading plus the `N × N` spatial correlation matrix of every
/// UE–AP link.
#[derive(Debug, Clone)]
pub struct Topology {
    pub large_scale: LargeScale,
    pub antennas: usize,
    correlation: Vec<CMatrix>,
    correlation_sqrt: Vec<CMatrix>,
}

impl Topology {
    /// Draws a complete setup: positions, shadowing and correlation matrices.
    pub fn generate<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<Self> {
        let ls = LargeScale::generate(cfg, rng)?;
        Self::from_large_scale(ls, cfg.network.antennas_per_ap, cfg.channel.angular_spread_deg)
    }

    pub fn from_large_scale(ls: LargeScale, antennas: usize, spread_deg: f64) -> Result<Self> {
        let spread = spread_deg.to_radians();
        let mut correlation = Vec::with_capacity(ls.num_aps() * ls.num_ues());
        for k in 0..ls.num_ues() {
            for l in 0..ls.num_aps() {
                correlation.push(spatial_correlation_matrix(ls.beta(k, l), ls.angle(k, l), spread, antennas));
            }
        }
        Self::with_correlations(ls, antennas, correlation)
    }

    /// Uses the given correlation matrices (row-major over `(k, l)`).
    pub fn with_correlations(ls: LargeScale, antennas: usize, correlation: Vec<CMatrix>) -> Result<Self> {
        assert_eq!(correlation.len(), ls.num_aps() * ls.num_ues());
        let correlation_sqrt = correlation.iter().map(hermitian_sqrt).collect::<Result<Vec<_>>>()?;
        Ok(Topology {
            large_scale: ls,
            antennas,
            correlation,
            correlation_sqrt,
        })
    }

    /// Hand-built topology: gains are taken from the traces, positions are
    /// all at the origin.
    pub fn custom(num_aps: usize, num_ues: usize, antennas: usize, correlation: Vec<CMatrix>) -> Result<Self> {
        let beta = correlation.iter().map(|r| trace_re(r) / antennas as f64).collect();
        Self::with_correlations(LargeScale::from_gains(num_aps, num_ues, beta), antennas, correlation)
    }

    pub fn num_aps(&self) -> usize {
        self.large_scale.num_aps()
    }

    pub fn num_ues(&self) -> usize {
        self.large_scale.num_ues()
    }

    #[inline]
    pub fn correlation(&self, k: usize, l: usize) -> &CMatrix {
        &self.correlation[k * self.num_aps() + l]
    }

    #[inline]
    pub fn correlation_sqrt(&self, k: usize, l: usize) -> &CMatrix {
        &self.correlation_sqrt[k * self.num_aps() + l]
    }

    pub fn beta(&self, k: usize, l: usize) -> f64 {
        self.large_scale.beta(k, l)
    }
}

/// One small-scale fading realization: `h_kl` for every UE–AP pair, stored
/// contiguously as `[k][l][antenna]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    num_aps: usize,
    antennas: usize,
    data: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn zeros(num_ues: usize, num_aps: usize, antennas: usize) -> Self {
        ChannelRealization {
            num_aps,
            antennas,
            data: vec![Complex64::new(0.0, 0.0); num_ues * num_aps * antennas],
        }
    }

    pub fn num_ues(&self) -> usize {
        self.data.len() / (self.num_aps * self.antennas).max(1)
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> &[Complex64] {
        let start = (k * self.num_aps + l) * self.antennas;
        &self.data[start..start + self.antennas]
    }

    /// Collective vector of UE `k` (all APs concatenated).
    #[inline]
    pub fn ue(&self, k: usize) -> &[Complex64] {
        let len = self.num_aps * self.antennas;
        &self.data[k * len..(k + 1) * len]
    }

    #[inline]
    pub fn ue_mut(&mut self, k: usize) -> &mut [Complex64] {
        let len = self.num_aps * self.antennas;
        &mut self.data[k * len..(k + 1) * len]
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    #[inline]
    pub fn get_mut(&mut self, k: usize, l: usize) -> &mut [Complex64] {
        let start = (k * self.num_aps + l) * self.antennas;
        &mut self.data[start..start + self.antennas]
    }
}

/// Draws `h_kl = R_kl^{1/2} z` with `z ~ CN(0, I)` independently for every
/// UE and AP.
pub fn sample_channel<R: Rng + ?Sized>(topology: &Topology, rng: &mut R) -> ChannelRealization {
    let n = topology.antennas;
    let mut out = ChannelRealization::zeros(topology.num_ues(), topology.num_aps(), n);
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..topology.num_ues() {
        for l in 0..topology.num_aps() {
            for zi in z.iter_mut() {
                *zi = complex_normal(rng);
            }
            let s = topology.correlation_sqrt(k, l);
            let h = out.get_mut(k, l);
            for c in 0..n {
                let zc = z[c];
                for r in 0..n {
                    h[r] += s[(r, c)] * zc;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigenvalues;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn coincident_points_see_only_height() {
        let p = Point::new(0.3, 0.7);
        assert!((wraparound_distance(p, p, 2.0, 0.01) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn distance_wraps_across_the_edge() {
        let d = wraparound_distance(Point::new(0.1, 0.1), Point::new(1.9, 1.9), 2.0, 0.0);
        assert!((d - (0.08f64).sqrt()).abs() < 1e-12);
        assert!((d - 0.2828).abs() < 1e-4);
    }

    #[test]
    fn mid_span_does_not_wrap() {
        let d = wraparound_distance(Point::new(0.0, 0.0), Point::new(1.0, 0.0), 2.0, 0.0);
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pathloss_at_ten_metres() {
        let m = ChannelModel::default();
        let b = large_scale_coefficient(0.01, 0.0, &m).unwrap();
        // 10^(-6.72)
        assert!((b / 1.905_460_717_963_248e-7 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shadowing_is_a_db_offset() {
        let m = ChannelModel::default();
        let a = large_scale_coefficient(0.3, 0.0, &m).unwrap();
        let b = large_scale_coefficient(0.3, 10.0, &m).unwrap();
        assert!((b / a - 10.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_distance_costs_twelve_point_seven() {
        let m = ChannelModel::default();
        let a = large_scale_coefficient(0.2, 0.0, &m).unwrap();
        let b = large_scale_coefficient(0.4, 0.0, &m).unwrap();
        let expected = 10f64.powf(36.7 * 2f64.log10() / 10.0);
        assert!((a / b - expected).abs() < 1e-9);
        assert!((a / b - 12.7).abs() < 0.05);
    }

    #[test]
    fn nonpositive_distance_is_a_domain_error() {
        let m = ChannelModel::default();
        assert!(matches!(large_scale_coefficient(0.0, 0.0, &m), Err(Error::Domain(_))));
    }

    #[test]
    fn single_antenna_correlation_is_beta() {
        let r = spatial_correlation_matrix(3.5, 0.4, 0.2, 1);
        assert_eq!(r.shape(), (1, 1));
        assert_eq!(r[(0, 0)], Complex64::new(3.5, 0.0));
    }

    #[test]
    fn wide_spread_decorrelates() {
        let r = spatial_correlation_matrix(2.0, 0.0, 1e3, 4);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 2.0 } else { 0.0 };
                assert!((r[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn fifteen_degree_spread_is_psd() {
        let beta = 1e-7;
        let r = spatial_correlation_matrix(beta, 0.0, 15f64.to_radians(), 4);
        let ev = hermitian_eigenvalues(&r);
        assert!(ev[0] >= -1e-12 * beta, "min eigenvalue {}", ev[0]);
        assert!((crate::linalg::trace_re(&r) - 4.0 * beta).abs() <= 1e-12 * 4.0 * beta);
    }

    #[test]
    fn positions_lie_in_the_square() {
        let mut rng = stream(3, 0);
        let (aps, ues) = place_entities(50, 30, 2.0, &mut rng);
        assert_eq!((aps.len(), ues.len()), (50, 30));
        for p in aps.iter().chain(&ues) {
            assert!((0.0..2.0).contains(&p.x) && (0.0..2.0).contains(&p.y));
        }
        let (aps2, _) = place_entities(50, 30, 2.0, &mut stream(4, 0));
        assert_ne!(aps, aps2);
    }

    #[test]
    fn no_ues_is_a_valid_skeleton() {
        let (aps, ues) = place_entities(5, 0, 1.0, &mut stream(3, 0));
        assert_eq!(aps.len(), 5);
        assert!(ues.is_empty());
    }

    #[test]
    fn zero_covariance_gives_zero_channel() {
        let topo = Topology::custom(1, 1, 2, vec![CMatrix::zeros(2, 2)]).unwrap();
        let h = sample_channel(&topo, &mut stream(1, 1));
        assert!(h.get(0, 0).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn sample_covariance_matches_correlation() {
        let beta = 1.0;
        let r = spatial_correlation_matrix(beta, 0.5, 10f64.to_radians(), 3);
        let topo = Topology::custom(2, 1, 3, vec![r.clone(), r.clone()]).unwrap();
        let draws = 100_000;
        let mut rng = stream(11, 5);
        let mut cov = CMatrix::zeros(3, 3);
        let mut cross = CMatrix::zeros(3, 3);
        for _ in 0..draws {
            let h = sample_channel(&topo, &mut rng);
            let (a, b) = (h.get(0, 0), h.get(0, 1));
            for i in 0..3 {
                for j in 0..3 {
                    cov[(i, j)] += a[i] * a[j].conj();
                    cross[(i, j)] += a[i] * b[j].conj();
                }
            }
        }
        let tol = 5.0 / (draws as f64).sqrt() * beta;
        for i in 0..3 {
            for j in 0..3 {
                let c = cov[(i, j)] / draws as f64;
                assert!((c - r[(i, j)]).norm() <= tol, "cov ({i},{j})");
                assert!((cross[(i, j)] / draws as f64).norm() <= tol, "cross ({i},{j})");
            }
        }
    }

    #[test]
    fn whitened_channels_are_white() {
        let r = spatial_correlation_matrix(2.0, -0.3, 20f64.to_radians(), 2);
        let topo = Topology::custom(1, 1, 2, vec![r.clone()]).unwrap();
        let s_inv = crate::linalg::hermitian_inverse(topo.correlation_sqrt(0, 0)).unwrap();
        let draws = 100_000;
        let mut rng = stream(12, 1);
        let mut cov = CMatrix::zeros(2, 2);
        for _ in 0..draws {
            let h = sample_channel(&topo, &mut rng);
            let w = crate::linalg::mat_vec(&s_inv, h.get(0, 0));
            crate::linalg::rank_one_update(&mut cov, &w, 1.0 / draws as f64);
        }
        let tol = 5.0 / (draws as f64).sqrt();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((cov[(i, j)] - Complex64::new(want, 0.0)).norm() <= tol);
            }
        }
    }

    proptest! {
        #[test]
        fn wraparound_is_a_metric(
            ax in 0.0..2.0f64, ay in 0.0..2.0f64,
            bx in 0.0..2.0f64, by in 0.0..2.0f64,
            cx in 0.0..2.0f64, cy in 0.0..2.0f64,
        ) {
            let (a, b, c) = (Point::new(ax, ay), Point::new(bx, by), Point::new(cx, cy));
            let d = |p, q| wraparound_distance(p, q, 2.0, 0.0);
            prop_assert!((d(a, b) - d(b, a)).abs() < 1e-12);
            prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
            prop_assert!(d(a, b) <= 2f64.sqrt() + 1e-12);
        }

        #[test]
        fn correlation_trace_is_n_beta(
            beta in 1e-12..1.0f64, angle in -3.2..3.2f64, spread in 0.0..1.0f64, n in 1usize..9,
        ) {
            let r = spatial_correlation_matrix(beta, angle, spread, n);
            let tr = crate::linalg::trace_re(&r);
            prop_assert!((tr - n as f64 * beta).abs() <= 1e-12 * n as f64 * beta);
            let ev = hermitian_eigenvalues(&r);
            prop_assert!(ev[0] >= -1e-10 * beta);
        }
    }
}
