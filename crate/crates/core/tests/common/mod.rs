#![allow(dead_code)]

use cellfree::campaign::SetupState;
use cellfree::config::{
    ChannelModel, ClusterConfig, FrameConfig, NetworkConfig, PowerConfig, ProcessingMode, Scheme,
    SimulationConfig, dbm_to_watt,
};


pub fn config(num_aps: usize, antennas: usize, num_ues: usize, pilot_len: usize) -> SimulationConfig {
    SimulationConfig {
        seed: 7,
        num_setups: 1,
        num_realizations: 64,
        mode: ProcessingMode::Distributed,
        schemes: vec![Scheme::Mr],
        genie: false,
        network: NetworkConfig {
            num_aps,
            antennas_per_ap: antennas,
            num_ues,
            area_side_km: 0.5,
            ap_height_m: 10.0,
        },
        frame: FrameConfig {
            pilot_len,
            coherence_len: 200,
            ul_data_len: (200 - pilot_len) / 2,
            dl_data_len: (200 - pilot_len) / 2,
        },
        power: PowerConfig {
            ue_power_w: 0.1,
            ap_power_w: 1.0,
            noise_power_w: dbm_to_watt(-94.0),
            ul_noise_power_w: None,
            dl_noise_power_w: None,
        },
        channel: ChannelModel::default(),
        cluster: ClusterConfig::default(),
    }
}

pub fn setup(cfg: &SimulationConfig, index: usize) -> SetupState {
    SetupState::build(cfg, index).expect("setup builds")
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
