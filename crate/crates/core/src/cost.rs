//! Local computing, digital-twin computing and the round totals `T` and `E`.

use crate::error::{invalid, Binding, Error, Result};

/// Effective switched capacitance of client CPUs.
pub const DEFAULT_KAPPA: f64 = 2e-28;

/// Weibull accuracy-contribution parameters `(w1, w2, w3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcParams {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for AcParams {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 1.0,
            w3: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientProfile {
    pub id: usize,
    /// Number of local samples `D_n`.
    pub data_size: f64,
    /// CPU cycles per sample `c_n`.
    pub cycles_per_sample: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Largest fraction of data the twin may hold.
    pub v_max: f64,
    /// Local model size `d_n` in bits.
    pub model_bits: f64,
    pub honest: bool,
    pub ac: AcParams,
}

impl ClientProfile {
    pub fn validate(&self) -> Result<()> {
        let id = self.id;
        if !(self.data_size >= 1.0) {
            return Err(invalid(format!("client {id}: data size must be >= 1")));
        }
        if !(self.cycles_per_sample > 0.0) {
            return Err(invalid(format!(
                "client {id}: cycles per sample must be positive"
            )));
        }
        if !(self.f_min > 0.0 && self.f_min <= self.f_max) {
            return Err(invalid(format!("client {id}: need 0 < f_min <= f_max")));
        }
        if !(self.p_min > 0.0 && self.p_min <= self.p_max) {
            return Err(invalid(format!("client {id}: need 0 < p_min <= p_max")));
        }
        if !(0.0..=1.0).contains(&self.v_max) {
            return Err(invalid(format!("client {id}: v_max must lie in [0, 1]")));
        }
        if !(self.model_bits >= 0.0) {
            return Err(invalid(format!(
                "client {id}: model size must be nonnegative"
            )));
        }
        Ok(())
    }

    /// Local workload in cycles when a fraction `v` lives in the twin.
    pub fn local_cycles(&self, v: f64) -> f64 {
        self.cycles_per_sample * (1.0 - v) * self.data_size
    }

    /// Samples held by the twin, `v D + eps`.
    pub fn twin_samples(&self, v: f64, epsilon: f64) -> f64 {
        v * self.data_size + epsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerProfile {
    /// Server CPU frequency `f_S` in Hz.
    pub f_server: f64,
    /// Twin size deviation `eps` in samples.
    pub dt_deviation: f64,
    /// Round deadline `T_max` in seconds.
    pub t_max: f64,
    /// Effective capacitance coefficient of client CPUs.
    pub kappa: f64,
}

impl ServerProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_server > 0.0)
            || !(self.dt_deviation >= 0.0)
            || !(self.t_max > 0.0)
            || !(self.kappa > 0.0)
        {
            return Err(invalid(
                "server profile needs f_S > 0, eps >= 0, T_max > 0, kappa > 0",
            ));
        }
        Ok(())
    }
}

fn check_fraction(profile: &ClientProfile, v: f64) -> Result<()> {
    if !(0.0..=profile.v_max).contains(&v) {
        return Err(invalid(format!(
            "client {}: v = {v} outside [0, {}]",
            profile.id, profile.v_max
        )));
    }
    Ok(())
}

/// Local training latency (s) and energy (J) at frequency `f`.
pub fn local_cost(profile: &ClientProfile, kappa: f64, v: f64, f: f64) -> Result<(f64, f64)> {
    check_fraction(profile, v)?;
    if !(profile.f_min..=profile.f_max).contains(&f) {
        return Err(invalid(format!(
            "client {}: f = {f} outside [{}, {}]",
            profile.id, profile.f_min, profile.f_max
        )));
    }
    let w = profile.local_cycles(v);
    Ok((w / f, 0.5 * kappa * w * f * f))
}

/// Local energy written in terms of the local latency `t`: `kappa W^3 / (2 t^2)`.
pub fn local_energy_for_time(profile: &ClientProfile, kappa: f64, v: f64, t: f64) -> f64 {
    let w = profile.local_cycles(v);
    if w == 0.0 {
        return 0.0;
    }
    kappa * w.powi(3) / (2.0 * t * t)
}

/// Twin-side computing latency for a client given its share `alpha` of the
/// server CPU. Server energy is not accounted.
pub fn dt_cost(profile: &ClientProfile, server: &ServerProfile, v: f64, alpha: f64) -> Result<f64> {
    check_fraction(profile, v)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!(
            "client {}: alpha = {alpha} outside [0, 1]",
            profile.id
        )));
    }
    let work = profile.cycles_per_sample * profile.twin_samples(v, server.dt_deviation);
    if work == 0.0 {
        return Ok(0.0);
    }
    if alpha == 0.0 {
        return Err(Error::Infeasible {
            client: profile.id,
            binding: Binding::TwinDeadline,
        });
    }
    Ok(work / (alpha * server.f_server))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientCost {
    pub id: usize,
    pub t_cmp: f64,
    pub e_cmp: f64,
    pub t_com: f64,
    pub e_com: f64,
    pub t_server: f64,
}

impl ClientCost {
    pub fn round_time(&self) -> f64 {
        (self.t_cmp + self.t_com).max(self.t_server)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub clients: Vec<ClientCost>,
    /// Synchronous round latency `T`.
    pub latency: f64,
    /// Total client energy `E`.
    pub energy: f64,
}

impl CostReport {
    /// Unit-weighted sum `T + E` used when comparing schemes.
    pub fn total_cost(&self) -> f64 {
        self.latency + self.energy
    }
}

pub fn aggregate_cost(entries: Vec<ClientCost>) -> Result<CostReport> {
    if entries.is_empty() {
        return Err(Error::EmptySelection);
    }
    for c in &entries {
        let all = [c.t_cmp, c.e_cmp, c.t_com, c.e_com, c.t_server];
        if all.iter().any(|x| !(*x >= 0.0)) {
            return Err(invalid(format!(
                "client {}: negative or NaN cost entry",
                c.id
            )));
        }
    }
    let latency = entries
        .iter()
        .map(ClientCost::round_time)
        .fold(0.0, f64::max);
    let energy = entries.iter().map(|c| c.e_cmp + c.e_com).sum();
    Ok(CostReport {
        clients: entries,
        latency,
        energy,
    })
}
