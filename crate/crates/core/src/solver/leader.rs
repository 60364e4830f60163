//! Closed-form leader responses for the twin fraction and the local CPU
//! frequency, given the time left for local computing `A = T_max - t_com`.

use crate::cost::ClientProfile;
use crate::error::{invalid, Binding, Error, Result};

/// Map as much data as allowed to the twin, provided the remaining local
/// work still fits into `available` seconds at `f_max`.
pub fn leader_v(profile: &ClientProfile, available: f64) -> Result<f64> {
    if !(available > 0.0) {
        return Err(Error::Infeasible {
            client: profile.id,
            binding: Binding::RoundDeadline,
        });
    }
    let f_needed = profile.local_cycles(profile.v_max) / available;
    if f_needed > profile.f_max {
        return Err(Error::Infeasible {
            client: profile.id,
            binding: Binding::LocalFrequency,
        });
    }
    Ok(profile.v_max)
}

/// Slowest admissible frequency: `max(f_tilde, f_min)` with
/// `f_tilde = (1 - v) c D / A`.
pub fn leader_f(profile: &ClientProfile, v: f64, available: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(format!(
            "client {}: v = {v} outside [0, 1]",
            profile.id
        )));
    }
    if !(available > 0.0) {
        return Err(Error::Infeasible {
            client: profile.id,
            binding: Binding::RoundDeadline,
        });
    }
    let f_tilde = profile.local_cycles(v) / available;
    if f_tilde > profile.f_max {
        return Err(Error::Infeasible {
            client: profile.id,
            binding: Binding::LocalFrequency,
        });
    }
    Ok(f_tilde.max(profile.f_min))
}
