//! Shipped profiles, compiled into the binary.
//!
//! `contention_coeff` in `wifi5.json`, and `throughput` and
//! `invocation_overhead_s` in `compute_s10.json`, are frozen outputs of the
//! fits in [`crate::harness::calibrate`].

use crate::harness::{ComputeProfile, ThermalPreset};
use crate::transport::NetProfile;

pub const ETHERNET_JSON: &str = include_str!("../presets/ethernet.json");
pub const WIFI5_JSON: &str = include_str!("../presets/wifi5.json");
pub const THERMAL_S10_JSON: &str = include_str!("../presets/thermal_s10.json");
pub const COMPUTE_S10_JSON: &str = include_str!("../presets/compute_s10.json");

pub const NET_PRESETS: [&str; 2] = ["ethernet", "wifi5"];

pub fn ethernet() -> NetProfile {
    NetProfile::from_json(ETHERNET_JSON).expect("shipped ethernet preset is valid")
}

pub fn wifi5() -> NetProfile {
    NetProfile::from_json(WIFI5_JSON).expect("shipped wifi5 preset is valid")
}

pub fn thermal_s10() -> ThermalPreset {
    ThermalPreset::from_json(THERMAL_S10_JSON).expect("shipped thermal preset is valid")
}

pub fn compute_s10() -> ComputeProfile {
    ComputeProfile::from_json(COMPUTE_S10_JSON).expect("shipped compute preset is valid")
}

/// Network preset by name (`ethernet`, `wifi5`, or `wifi`).
pub fn net_by_name(name: &str) -> Option<NetProfile> {
    match name.to_ascii_lowercase().as_str() {
        "ethernet" | "eth" => Some(ethernet()),
        "wifi5" | "wifi" => Some(wifi5()),
        _ => None,
    }
}
