use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Link model for simulated transfers.
///
/// Effective bandwidth shrinks linearly with the number of nodes sharing the
/// medium: `base_bandwidth / (1 + contention_coeff * max(0, k_active - 2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetProfile {
    /// Megabits per second (10^6 bits).
    pub base_bandwidth: f64,
    /// Milliseconds per message.
    pub latency: f64,
    /// Standard deviation of the lognormal bandwidth-term multiplier.
    pub jitter_frac: f64,
    pub contention_coeff: f64,
    /// Probability that any one message kills its link.
    pub disconnect_prob: f64,
    pub seed: u64,
}

impl NetProfile {
    /// Fast, lossless, contention-free link.
    pub fn ideal() -> Self {
        Self {
            base_bandwidth: 1e6,
            latency: 0.0,
            jitter_frac: 0.0,
            contention_coeff: 0.0,
            disconnect_prob: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.base_bandwidth > 0.0 && self.base_bandwidth.is_finite()) {
            return Err(format!(
                "base_bandwidth must be positive, got {}",
                self.base_bandwidth
            ));
        }
        // 1.0 is accepted for degenerate "link always drops" scenarios
        if !(0.0..=1.0).contains(&self.disconnect_prob) {
            return Err(format!(
                "disconnect_prob must lie in [0, 1], got {}",
                self.disconnect_prob
            ));
        }
        if !(self.jitter_frac >= 0.0) {
            return Err(format!(
                "jitter_frac must be >= 0, got {}",
                self.jitter_frac
            ));
        }
        if !(self.contention_coeff >= 0.0) {
            return Err(format!(
                "contention_coeff must be >= 0, got {}",
                self.contention_coeff
            ));
        }
        if !(self.latency >= 0.0) {
            return Err(format!("latency must be >= 0, got {}", self.latency));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let p: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        p.validate()?;
        Ok(p)
    }

    pub fn latency_s(&self) -> f64 {
        self.latency * 1e-3
    }

    /// Megabits per second available to one transfer with `k_active` nodes on the medium.
    pub fn effective_bandwidth(&self, k_active: usize) -> f64 {
        let crowd = k_active.saturating_sub(2) as f64;
        self.base_bandwidth / (1.0 + self.contention_coeff * crowd)
    }

    /// Whether every transfer time is a pure function of its size.
    pub fn is_deterministic(&self) -> bool {
        self.jitter_frac == 0.0 && self.disconnect_prob == 0.0
    }

    pub fn with_contention(mut self, c: f64) -> Self {
        self.contention_coeff = c;
        self
    }
}

/// Jitter-free transfer time: `latency + bytes * 8 / (10^6 * effective_bw)`.
pub fn nominal_transfer_time(bytes: usize, k_active: usize, profile: &NetProfile) -> f64 {
    profile.latency_s() + bytes as f64 * 8.0 / (1e6 * profile.effective_bandwidth(k_active))
}

/// Timing of one simulated message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer {
    pub latency_s: f64,
    /// Time the sender's uplink is busy (the jittered bandwidth term).
    pub occupancy_s: f64,
    pub disconnected: bool,
}

impl Transfer {
    /// Delivery time after the send starts.
    pub fn total(&self) -> f64 {
        self.latency_s + self.occupancy_s
    }
}

/// Per-sender random stream that turns message sizes into [`Transfer`]s.
///
/// Each rank owns its own ChaCha stream, so simulated durations depend only
/// on the seed, the rank and the order of that rank's sends.
#[derive(Debug, Clone)]
pub struct LinkSampler {
    profile: NetProfile,
    rng: ChaCha8Rng,
    sigma: f64,
    mu: f64,
}

impl LinkSampler {
    pub fn new(profile: &NetProfile, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
        rng.set_stream(stream);
        // lognormal with mean 1 and standard deviation jitter_frac
        let sigma = (1.0 + profile.jitter_frac * profile.jitter_frac)
            .ln()
            .sqrt();
        Self {
            profile: profile.clone(),
            rng,
            sigma,
            mu: -0.5 * sigma * sigma,
        }
    }

    pub fn profile(&self) -> &NetProfile {
        &self.profile
    }

    pub fn sample(&mut self, bytes: usize, k_active: usize) -> Transfer {
        let disconnected = self.profile.disconnect_prob > 0.0
            && self.rng.random::<f64>() < self.profile.disconnect_prob;
        let mut occupancy = bytes as f64 * 8.0 / (1e6 * self.profile.effective_bandwidth(k_active));
        if self.sigma > 0.0 {
            let z: f64 = self.rng.sample(StandardNormal);
            occupancy *= (self.mu + self.sigma * z).exp();
        }
        Transfer {
            latency_s: self.profile.latency_s(),
            occupancy_s: occupancy,
            disconnected,
        }
    }

    /// Seconds from send start to delivery for a `bytes`-sized message.
    pub fn transfer_time(&mut self, bytes: usize, k_active: usize) -> f64 {
        self.sample(bytes, k_active).total()
    }
}
