use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThrottleTier {
    pub threshold_c: f64,
    pub multiplier: f64,
}

/// Lumped device temperature with step throttling.
///
/// `dT/dt = heat_rate * busy - cool_rate * (T - ambient)`, integrated
/// exactly over each busy or idle interval. Compute time is multiplied by
/// the multiplier of the highest tier whose threshold `T` has reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalModel {
    pub temp: f64,
    pub ambient: f64,
    /// Degrees C per second while computing.
    pub heat_rate: f64,
    /// Relaxation rate toward ambient, per second.
    pub cool_rate: f64,
    pub tiers: Vec<ThrottleTier>,
}

impl ThermalModel {
    pub fn new(
        ambient: f64,
        heat_rate: f64,
        cool_rate: f64,
        tiers: Vec<ThrottleTier>,
    ) -> Result<Self, String> {
        let m = Self {
            temp: ambient,
            ambient,
            heat_rate,
            cool_rate,
            tiers,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.heat_rate >= 0.0) || !(self.cool_rate >= 0.0) {
            return Err("heat_rate and cool_rate must be >= 0".into());
        }
        if self.temp < self.ambient {
            return Err("temperature below ambient".into());
        }
        for w in self.tiers.windows(2) {
            if w[1].threshold_c <= w[0].threshold_c {
                return Err("tier thresholds must increase strictly".into());
            }
            if w[1].multiplier < w[0].multiplier {
                return Err("tier multipliers must not decrease".into());
            }
        }
        if self.tiers.iter().any(|t| t.multiplier < 1.0) {
            return Err("tier multipliers must be >= 1".into());
        }
        Ok(())
    }

    /// No heating at all.
    pub fn inert(ambient: f64) -> Self {
        Self {
            temp: ambient,
            ambient,
            heat_rate: 0.0,
            cool_rate: 0.0,
            tiers: Vec::new(),
        }
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier_at(self.temp)
    }

    pub fn multiplier_at(&self, temp: f64) -> f64 {
        self.tiers
            .iter()
            .filter(|t| temp >= t.threshold_c)
            .map(|t| t.multiplier)
            .next_back()
            .unwrap_or(1.0)
    }

    pub fn tier(&self) -> usize {
        self.tiers
            .iter()
            .filter(|t| self.temp >= t.threshold_c)
            .count()
    }

    pub fn scale_cooling(&mut self, factor: f64) {
        self.cool_rate *= factor;
    }

    pub fn run_busy(&mut self, secs: f64) {
        self.relax(secs, self.heat_rate);
    }

    pub fn run_idle(&mut self, secs: f64) {
        self.relax(secs, 0.0);
    }

    fn relax(&mut self, secs: f64, heat: f64) {
        if secs <= 0.0 {
            return;
        }
        let excess = self.temp - self.ambient;
        let next = if self.cool_rate.is_infinite() {
            0.0
        } else if self.cool_rate == 0.0 {
            excess + heat * secs
        } else {
            let eq = heat / self.cool_rate;
            eq + (excess - eq) * (-self.cool_rate * secs).exp()
        };
        self.temp = self.ambient + next.max(0.0);
    }
}


/// Device thermal behaviour plus the scenario it is exercised in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalPreset {
    pub ambient_c: f64,
    pub heat_rate: f64,
    pub cool_rate: f64,
    pub tiers: Vec<ThrottleTier>,
    /// Cooling-rate multiplier with the fan running.
    pub fan_cool_factor: f64,
    /// Unthrottled compute time per iteration, seconds.
    pub base_t_comp_s: f64,
    /// Non-compute time per iteration, seconds.
    pub idle_s: f64,
    pub duration_s: f64,
    pub model: String,
    pub batch: usize,
}

impl ThermalPreset {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let p: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.model(false).map(|_| ())?;
        if !(self.fan_cool_factor >= 1.0) {
            return Err("fan_cool_factor must be >= 1".into());
        }
        if !(self.base_t_comp_s > 0.0 && self.idle_s >= 0.0 && self.duration_s > 0.0)
            || self.batch == 0
        {
            return Err("base_t_comp_s, duration_s and batch must be positive, idle_s >= 0".into());
        }
        Ok(())
    }

    pub fn model(&self, fan_on: bool) -> Result<ThermalModel, String> {
        let mut m = ThermalModel::new(
            self.ambient_c,
            self.heat_rate,
            self.cool_rate,
            self.tiers.clone(),
        )?;
        if fan_on {
            m.scale_cooling(self.fan_cool_factor);
        }
        Ok(m)
    }
}
