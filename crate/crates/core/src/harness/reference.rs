//! Published figures the simulator is calibrated against or checked with.

/// Message size of the collective benchmark anchor (37.5 MB).
pub const COLLECTIVE_ANCHOR_BYTES: usize = 75 * (1 << 20) / 2;
/// 37.5 MB allreduce on WiFi: K=16 takes this many times longer than K=2.
pub const WIFI_SLOWDOWN: f64 = 63.0;
/// Same comparison on wired Ethernet.
pub const ETHERNET_SLOWDOWN: f64 = 1.3;
pub const ETHERNET_SLOWDOWN_LIMIT: f64 = 1.5;

pub const CLUSTER_SIZE: usize = 138;
/// Chunk-wise ring aggregation time on the full cluster, seconds.
pub const INCEPTION_V3_CHUNKWISE_S: f64 = 84.0;
pub const RESNET50_CHUNKWISE_S: f64 = 47.0;

pub const SQUEEZENET_V11_EFFICIENCY: f64 = 0.858;
pub const RESNET152_EFFICIENCY: f64 = 0.122;

pub const RAR_VS_TREE_K: usize = 46;
pub const RAR_VS_TREE_SPEEDUP: f64 = 1.56;

pub const FIXED_GLOBAL_BATCH: usize = 32;

pub const THERMAL_BASE_T_COMP_S: f64 = 18.2;
pub const THERMAL_STEP_MULTIPLIERS: [f64; 2] = [1.148, 1.363];

/// Mobile-GPU over CPU speedups, percent. Recorded in report metadata only.
pub const GPGPU_SPEEDUP_PERCENT: [f64; 3] = [3525.0, 4298.0, 2244.0];
