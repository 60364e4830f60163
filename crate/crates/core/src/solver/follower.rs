//! Server-side best response: split the server CPU among twins so that every
//! twin finishes at the same time, never earlier than the clients' own
//! round time.

use crate::cost::{ClientProfile, ServerProfile};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FollowerBranch {
    /// Enough server capacity: every twin finishes exactly at `t_total`.
    Sufficient,
    /// Capacity exhausted: `sum(alpha) = 1` and twins finish after `t_total`.
    Saturated,
    /// No twin workload at all.
    Idle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollowerResponse {
    pub alpha: Vec<f64>,
    pub branch: FollowerBranch,
    /// Common twin latency `t_S`.
    pub t_server: f64,
}

/// Best response for twin workloads `works[n] = c_n * D_hat_n` (cycles).
pub fn alpha_for_workloads(works: &[f64], f_server: f64, t_total: f64) -> Result<FollowerResponse> {
    if !(t_total > 0.0) {
        return Err(invalid("t_total must be positive"));
    }
    if let Some(w) = works.iter().find(|w| !(**w >= 0.0)) {
        return Err(invalid(format!("negative twin workload {w}")));
    }
    let total: f64 = works.iter().sum();
    if total == 0.0 {
        return Ok(FollowerResponse {
            alpha: vec![0.0; works.len()],
            branch: FollowerBranch::Idle,
            t_server: 0.0,
        });
    }
    let alpha: Vec<f64> = works.iter().map(|w| w / (t_total * f_server)).collect();
    if alpha.iter().sum::<f64>() <= 1.0 {
        return Ok(FollowerResponse {
            alpha,
            branch: FollowerBranch::Sufficient,
            t_server: t_total,
        });
    }
    let alpha = works.iter().map(|w| w / total).collect();
    Ok(FollowerResponse {
        alpha,
        branch: FollowerBranch::Saturated,
        t_server: total / f_server,
    })
}

/// Follower response given each selected client's twin fraction `v`.
pub fn follower_alpha(
    clients: &[ClientProfile],
    server: &ServerProfile,
    v: &[f64],
    t_total: f64,
) -> Result<FollowerResponse> {
    if clients.len() != v.len() {
        return Err(invalid("one twin fraction per client required"));
    }
    let works: Vec<f64> = clients
        .iter()
        .zip(v)
        .map(|(c, &v)| c.cycles_per_sample * c.twin_samples(v, server.dt_deviation))
        .collect();
    alpha_for_workloads(&works, server.f_server, t_total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn symmetric_saturated() {
        let r = alpha_for_workloads(&[5e9; 3], 1e9, 1.0).unwrap();
        assert_eq!(r.branch, FollowerBranch::Saturated);
        for a in &r.alpha {
            assert_relative_eq!(*a, 1.0 / 3.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn single_client_sufficient() {
        // c = 1e7, D_hat = 500
        let r = alpha_for_workloads(&[1e7 * 500.0], 1e11, 2.0).unwrap();
        assert_eq!(r.branch, FollowerBranch::Sufficient);
        assert_relative_eq!(r.alpha[0], 0.025, max_relative = 1e-12);
        let t_s = 1e7 * 500.0 / (r.alpha[0] * 1e11);
        assert_relative_eq!(t_s, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn two_clients_saturated() {
        let r = alpha_for_workloads(&[6e9, 4e9], 1e9, 1.0).unwrap();
        assert_eq!(r.branch, FollowerBranch::Saturated);
        assert_relative_eq!(r.alpha[0], 0.6, max_relative = 1e-12);
        assert_relative_eq!(r.alpha[1], 0.4, max_relative = 1e-12);
        let t: Vec<f64> = [6e9, 4e9]
            .iter()
            .zip(&r.alpha)
            .map(|(w, a)| w / (a * 1e9))
            .collect();
        assert_relative_eq!(t[0], t[1], max_relative = 1e-12);
        assert_relative_eq!(t[0], r.t_server, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(alpha_for_workloads(&[-1.0], 1e9, 1.0).is_err());
        assert!(alpha_for_workloads(&[1.0], 1e9, 0.0).is_err());
        let idle = alpha_for_workloads(&[0.0, 0.0], 1e9, 1.0).unwrap();
        assert_eq!(idle.branch, FollowerBranch::Idle);
    }

    proptest! {
        #[test]
        fn twins_finish_together(works in prop::collection::vec(1e6f64..1e11, 1..6), t in 0.01f64..20.0) {
            let r = alpha_for_workloads(&works, 1e11, t).unwrap();
            let ts: Vec<f64> = works.iter().zip(&r.alpha).map(|(w, a)| w / (a * 1e11)).collect();
            let hi = ts.iter().cloned().fold(f64::MIN, f64::max);
            let lo = ts.iter().cloned().fold(f64::MAX, f64::min);
            prop_assert!((hi - lo) / hi <= 1e-9);
            prop_assert!(hi >= t * (1.0 - 1e-12));
            let sum: f64 = r.alpha.iter().sum();
            prop_assert!(sum <= 1.0 + 1e-12);
            if r.branch == FollowerBranch::Saturated {
                prop_assert!((sum - 1.0).abs() <= 1e-12);
            }
        }
    }
}
