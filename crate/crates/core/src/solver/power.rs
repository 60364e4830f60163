//! Transmit-power optimisation.
//!
//! Each client maximises its energy efficiency `R(p) / U(p)` with
//! `R(p) = B log2(1 + p F)` and `U(p) = p d`, subject to the rate it needs to
//! meet its deadline (`R(p) >= d / G`) and its power box. The ratio is solved
//! by Dinkelbach's method; every parametric subproblem
//! `max R(p) - q U(p)` is concave and handled through its Lagrangian:
//!
//! ```text
//! L(p, l) = R(p) - q U(p) + l1 (R(p) - d/G) + l2 (p - p_min) + l3 (p_max - p)
//! dL/dp = 0  =>  p = B (1 + l1) / (ln2 (q d - l2 + l3)) - 1/F
//! ```
//!
//! with the multipliers driven by projected subgradient steps.

use std::f64::consts::LN_2;

use crate::error::{invalid, Binding, Error, Result};

/// One client's power subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerProblem {
    pub id: usize,
    /// Effective gain-to-interference ratio `F = |h|^2 / (I + sigma^2)`.
    pub gain_ratio: f64,
    /// Payload `d` in bits.
    pub bits: f64,
    pub bandwidth: f64,
    /// Transmission deadline `G` in seconds (may be infinite).
    pub deadline: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl PowerProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain_ratio > 0.0 && self.gain_ratio.is_finite()) {
            return Err(invalid(format!("client {}: F must be positive", self.id)));
        }
        if !(self.bits >= 0.0) || !(self.bandwidth > 0.0) {
            return Err(invalid(format!(
                "client {}: need d >= 0 and B > 0",
                self.id
            )));
        }
        if !(self.deadline > 0.0) {
            return Err(Error::Infeasible {
                client: self.id,
                binding: Binding::RoundDeadline,
            });
        }
        if !(self.p_min > 0.0 && self.p_min <= self.p_max) {
            return Err(invalid(format!(
                "client {}: need 0 < p_min <= p_max",
                self.id
            )));
        }
        Ok(())
    }

    /// `R(p) = B log2(1 + p F)`.
    pub fn rate(&self, p: f64) -> f64 {
        self.bandwidth * (p * self.gain_ratio).ln_1p() / LN_2
    }

    /// `U(p) = p d`.
    pub fn outlay(&self, p: f64) -> f64 {
        p * self.bits
    }

    pub fn required_rate(&self) -> f64 {
        self.bits / self.deadline
    }

    /// Smallest power meeting the deadline, ignoring the box.
    pub fn required_power(&self) -> f64 {
        (self.required_rate() / self.bandwidth * LN_2).exp_m1() / self.gain_ratio
    }

    /// Feasible power interval, if any.
    pub fn feasible_interval(&self) -> Option<(f64, f64)> {
        let lo = self.required_power().max(self.p_min);
        (lo <= self.p_max).then_some((lo, self.p_max))
    }

    /// `R(p) - q U(p)`.
    pub fn parametric(&self, q: f64, p: f64) -> f64 {
        self.rate(p) - q * self.outlay(p)
    }

    /// `dL/dp` at `p`.
    pub fn lagrangian_gradient(&self, q: f64, duals: &DualState, p: f64) -> f64 {
        let [l1, l2, l3] = duals.multipliers;
        let marginal = self.bandwidth * self.gain_ratio / (LN_2 * (1.0 + p * self.gain_ratio));
        (1.0 + l1) * marginal - q * self.bits + l2 - l3
    }

    /// Constraint values in `g(p) >= 0` form, scaled to be dimensionless.
    pub fn slacks(&self, p: f64) -> [f64; 3] {
        let need = self.required_rate();
        let rate_slack = if need > 0.0 {
            (self.rate(p) - need) / need
        } else {
            1.0
        };
        [
            rate_slack,
            (p - self.p_min) / self.p_max,
            (self.p_max - p) / self.p_max,
        ]
    }
}

/// Lagrange multipliers of the rate, lower-power and upper-power constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualState {
    pub multipliers: [f64; 3],
    /// Current step sizes `mu_i`.
    pub steps: [f64; 3],
    /// Subgradient iteration index `l`.
    pub iteration: usize,
}

impl DualState {
    pub fn new(steps: [f64; 3]) -> Self {
        Self {
            multipliers: [0.0; 3],
            steps,
            iteration: 0,
        }
    }
}

/// Projected subgradient step `l_i <- max(0, l_i - mu_i * slack_i)`.
pub fn subgradient_duals(duals: &DualState, slacks: [f64; 3]) -> DualState {
    let mut next = *duals;
    for i in 0..3 {
        next.multipliers[i] = (duals.multipliers[i] - duals.steps[i] * slacks[i]).max(0.0);
    }
    next.iteration += 1;
    next
}

/// Stationary point of the Lagrangian for fixed `q` and multipliers, clamped
/// to the power box. A non-positive denominator means the Lagrangian is
/// nondecreasing in `p`; the better feasible end of the interval is returned.
pub fn kkt_stationary_power(problem: &PowerProblem, q: f64, duals: &DualState) -> f64 {
    let [l1, l2, l3] = duals.multipliers;
    let denom = LN_2 * (q * problem.bits - l2 + l3);
    if denom <= 0.0 {
        let lo = problem
            .feasible_interval()
            .map_or(problem.p_min, |(lo, _)| lo);
        let hi = problem.p_max;
        return if problem.parametric(q, hi) >= problem.parametric(q, lo) {
            hi
        } else {
            lo
        };
    }
    let p = problem.bandwidth * (1.0 + l1) / denom - 1.0 / problem.gain_ratio;
    p.clamp(problem.p_min, problem.p_max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientSettings {
    pub initial_step: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for SubgradientSettings {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            max_iterations: 500,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DinkelbachSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub subgradient: SubgradientSettings,
}

impl Default for DinkelbachSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100,
            subgradient: SubgradientSettings::default(),
        }
    }
}

/// Outcome of one parametric subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolution {
    pub power: f64,
    pub duals: DualState,
    /// Whether the multipliers settled before the iteration cap.
    pub dual_converged: bool,
}

/// Solves `max R(p) - q U(p)` over the feasible interval.
///
/// The multipliers follow diminishing steps `mu0 / sqrt(l + 1)` on the
/// Lagrangian maximiser over the power box. The returned power is the
/// maximiser projected onto the feasible interval, which is exact for this
/// one-dimensional concave problem.
pub fn solve_parametric(
    problem: &PowerProblem,
    q: f64,
    settings: &SubgradientSettings,
) -> Result<InnerSolution> {
    let (lo, hi) = problem.feasible_interval().ok_or(Error::Infeasible {
        client: problem.id,
        binding: Binding::TransmitPower,
    })?;
    let mut duals = DualState::new([settings.initial_step; 3]);
    let mut dual_converged = false;
    for l in 0..settings.max_iterations {
        let step = settings.initial_step / ((l + 1) as f64).sqrt();
        duals.steps = [step; 3];
        let p = kkt_stationary_power(problem, q, &duals);
        let next = subgradient_duals(&duals, problem.slacks(p));
        let moved = (0..3)
            .map(|i| (next.multipliers[i] - duals.multipliers[i]).abs())
            .fold(0.0, f64::max);
        duals = next;
        if moved < settings.tolerance {
            dual_converged = true;
            break;
        }
    }
    let free = kkt_stationary_power(problem, q, &DualState::new([0.0; 3]));
    Ok(InnerSolution {
        power: free.clamp(lo, hi),
        duals,
        dual_converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DinkelbachStep {
    pub q: f64,
    /// `W(q) = max_p R(p) - q U(p)`.
    pub w: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachTrace {
    pub steps: Vec<DinkelbachStep>,
    pub converged: bool,
    pub iterations: usize,
    /// Efficiency `R(p*) / U(p*)` at the returned power.
    pub q_final: f64,
    pub duals: DualState,
}

/// Maximises `R(p) / U(p)` subject to the deadline and the power box.
pub fn dinkelbach_power(
    problem: &PowerProblem,
    settings: &DinkelbachSettings,
) -> Result<(f64, DinkelbachTrace)> {
    problem.validate()?;
    let (lo, _) = problem.feasible_interval().ok_or(Error::Infeasible {
        client: problem.id,
        binding: Binding::TransmitPower,
    })?;
    if problem.bits == 0.0 {
        // nothing to send: the ratio is unbounded, the cheapest power wins
        let trace = DinkelbachTrace {
            steps: Vec::new(),
            converged: true,
            iterations: 0,
            q_final: f64::INFINITY,
            duals: DualState::new([0.0; 3]),
        };
        return Ok((lo, trace));
    }
    let mut q = 0.0;
    let mut steps = Vec::new();
    for _ in 0..settings.max_iterations {
        let inner = solve_parametric(problem, q, &settings.subgradient)?;
        let p = inner.power;
        let w = problem.parametric(q, p);
        steps.push(DinkelbachStep { q, w, power: p });
        let q_next = problem.rate(p) / problem.outlay(p);
        if w.abs() <= settings.tolerance {
            let iterations = steps.len();
            let trace = DinkelbachTrace {
                steps,
                converged: true,
                iterations,
                q_final: q_next,
                duals: inner.duals,
            };
            return Ok((p, trace));
        }
        q = q_next;
    }
    Err(Error::NotConverged {
        what: "dinkelbach",
        iterations: steps.len(),
        history: steps.iter().map(|s| s.q).collect(),
    })
}

/// A client entering the successive power allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerClient {
    pub id: usize,
    /// Squared channel magnitude.
    pub gain: f64,
    pub bits: f64,
    pub deadline: f64,
    pub p_min: f64,
    pub p_max: f64,
}

/// Successive optimisation over a fixed SIC order (strongest first). The
/// last-decoded client is solved first; each earlier client then sees the
/// interference of the powers already fixed after it.
///
/// Returns powers and traces in decode order.
pub fn successive_power(
    ordered: &[PowerClient],
    noise_power: f64,
    bandwidth: f64,
    settings: &DinkelbachSettings,
) -> Result<Vec<(f64, DinkelbachTrace)>> {
    let mut out = vec![None; ordered.len()];
    let mut interference = noise_power;
    for (k, c) in ordered.iter().enumerate().rev() {
        let problem = PowerProblem {
            id: c.id,
            gain_ratio: c.gain / interference,
            bits: c.bits,
            bandwidth,
            deadline: c.deadline,
            p_min: c.p_min,
            p_max: c.p_max,
        };
        let (p, trace) = dinkelbach_power(&problem, settings)?;
        interference += p * c.gain;
        out[k] = Some((p, trace));
    }
    Ok(out
        .into_iter()
        .map(|x| x.expect("every slot filled"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn problem(f: f64, deadline: f64) -> PowerProblem {
        PowerProblem {
            id: 0,
            gain_ratio: f,
            bits: 1e6,
            bandwidth: 1e6,
            deadline,
            p_min: 0.01,
            p_max: 0.1,
        }
    }

    /// Independent check: ratio maximised on a 1e-6 W grid over the feasible set.
    fn grid_ratio(pr: &PowerProblem) -> Option<f64> {
        let n = ((pr.p_max - pr.p_min) / 1e-6).round() as usize;
        let mut best: Option<(f64, f64)> = None;
        for k in 0..=n {
            let p = pr.p_min + (pr.p_max - pr.p_min) * k as f64 / n as f64;
            let r = pr.bandwidth * (1.0 + p * pr.gain_ratio).log2();
            if r < pr.bits / pr.deadline {
                continue;
            }
            let ratio = r / (p * pr.bits);
            if best.map_or(true, |(_, b)| ratio > b) {
                best = Some((p, ratio));
            }
        }
        best.map(|b| b.0)
    }

    #[test]
    fn lower_bound_wins_when_deadline_loose() {
        let pr = problem(1e4, 2.0);
        // needs p >= (2^0.5 - 1) / 1e4
        assert_relative_eq!(
            pr.required_power(),
            (2f64.sqrt() - 1.0) / 1e4,
            max_relative = 1e-12
        );
        let (p, trace) = dinkelbach_power(&pr, &DinkelbachSettings::default()).unwrap();
        assert_eq!(p, 0.01);
        assert_eq!(grid_ratio(&pr), Some(0.01));
        assert!(trace.converged);
    }

    #[test]
    fn unreachable_rate_is_infeasible() {
        let pr = problem(1e2, 0.1);
        assert!(pr.rate(pr.p_max) < pr.required_rate());
        assert!(matches!(
            dinkelbach_power(&pr, &DinkelbachSettings::default()),
            Err(Error::Infeasible {
                binding: Binding::TransmitPower,
                ..
            })
        ));
        assert_eq!(grid_ratio(&pr), None);
    }

    #[test]
    fn first_iterate_has_positive_w() {
        let pr = problem(1e5, 5.0);
        let (_, trace) = dinkelbach_power(&pr, &DinkelbachSettings::default()).unwrap();
        let first = trace.steps[0];
        assert_eq!(first.q, 0.0);
        assert_eq!(first.power, pr.p_max);
        assert_eq!(first.w, pr.rate(pr.p_max));
        assert!(first.w > 0.0);
    }

    #[test]
    fn no_deadline_means_p_min() {
        let pr = problem(3e3, f64::INFINITY);
        let (p, _) = dinkelbach_power(&pr, &DinkelbachSettings::default()).unwrap();
        assert_eq!(p, pr.p_min);
        assert_eq!(grid_ratio(&pr), Some(pr.p_min));
    }

    #[test]
    fn degenerate_box() {
        let mut pr = problem(1e4, 1.0);
        pr.p_min = 0.05;
        pr.p_max = 0.05;
        let (p, _) = dinkelbach_power(&pr, &DinkelbachSettings::default()).unwrap();
        assert_eq!(p, 0.05);
    }

    #[test]
    fn stationary_point_inversion() {
        // choose q with B / (ln2 q d) = 2 / F  =>  p = 1/F
        let pr = PowerProblem {
            id: 0,
            gain_ratio: 50.0,
            bits: 1e6,
            bandwidth: 1e6,
            deadline: 10.0,
            p_min: 1e-3,
            p_max: 0.1,
        };
        let q = pr.bandwidth * pr.gain_ratio / (2.0 * LN_2 * pr.bits);
        let zero = DualState::new([0.0; 3]);
        let p = kkt_stationary_power(&pr, q, &zero);
        assert_relative_eq!(p, 1.0 / pr.gain_ratio, max_relative = 1e-12);
        // finite-difference check of dL/dp = 0
        let h = 1e-9 * p;
        let fd = (pr.parametric(q, p + h) - pr.parametric(q, p - h)) / (2.0 * h);
        assert!(fd.abs() / (q * pr.bits) < 1e-4, "fd = {fd}");
        assert!(pr.lagrangian_gradient(q, &zero, p).abs() / (q * pr.bits) < 1e-12);
    }

    #[test]
    fn stationary_point_limits() {
        let pr = problem(1e4, 10.0);
        // q -> infinity drives the raw point to -1/F, clamped to p_min
        let zero = DualState::new([0.0; 3]);
        assert_eq!(kkt_stationary_power(&pr, 1e30, &zero), pr.p_min);
        // a large lower-bound multiplier removes the denominator: boundary candidates
        let mut d = zero;
        d.multipliers[1] = 1e30;
        assert_eq!(kkt_stationary_power(&pr, 1.0, &d), pr.p_max);
        // the rate multiplier scales the marginal-rate term up
        let q = 1e3;
        let mut d1 = zero;
        d1.multipliers[0] = 1.0;
        let p0 = pr.bandwidth / (LN_2 * q * pr.bits) - 1.0 / pr.gain_ratio;
        let p1 = 2.0 * pr.bandwidth / (LN_2 * q * pr.bits) - 1.0 / pr.gain_ratio;
        assert_relative_eq!(kkt_stationary_power(&pr, q, &zero), p0.clamp(0.01, 0.1));
        assert_relative_eq!(kkt_stationary_power(&pr, q, &d1), p1.clamp(0.01, 0.1));
    }

    #[test]
    fn subgradient_updates() {
        let d = DualState {
            multipliers: [0.3, 0.1, 0.0],
            steps: [0.1, 0.05, 0.1],
            iteration: 4,
        };
        assert_eq!(subgradient_duals(&d, [0.0; 3]).multipliers, d.multipliers);
        let n = subgradient_duals(&d, [0.0, -0.02, 0.5]);
        assert_relative_eq!(n.multipliers[1], 0.101, max_relative = 1e-12);
        assert_eq!(n.multipliers[2], 0.0);
        assert_eq!(n.iteration, 5);
    }

    #[test]
    fn rate_multiplier_tracks_binding_deadline() {
        // deadline binds: the unconstrained maximiser sits below p_req
        let pr = PowerProblem {
            id: 0,
            gain_ratio: 200.0,
            bits: 1e6,
            bandwidth: 1e6,
            deadline: 0.25,
            p_min: 0.01,
            p_max: 0.1,
        };
        let p_req = pr.required_power();
        assert!(p_req > pr.p_min && p_req < pr.p_max);
        let q = pr.rate(p_req) / pr.outlay(p_req);
        let sol = solve_parametric(&pr, q, &SubgradientSettings::default()).unwrap();
        assert_relative_eq!(sol.power, p_req, max_relative = 1e-12);
        // the multiplier moves toward the one that makes p_req stationary
        let zero = DualState::new([0.0; 3]);
        assert!(sol.duals.multipliers[0] > 0.0);
        let before = pr.lagrangian_gradient(q, &zero, p_req).abs();
        let after = pr.lagrangian_gradient(q, &sol.duals, p_req).abs();
        assert!(after < before, "{after} vs {before}");
    }

    #[test]
    fn successive_two_clients() {
        let clients = [
            PowerClient {
                id: 1,
                gain: 1e-10,
                bits: 1e6,
                deadline: 0.5,
                p_min: 0.01,
                p_max: 0.1,
            },
            PowerClient {
                id: 2,
                gain: 1e-12,
                bits: 1e6,
                deadline: 0.5,
                p_min: 0.01,
                p_max: 0.1,
            },
        ];
        let sigma2 = 3.981e-15;
        let out = successive_power(&clients, sigma2, 1e6, &DinkelbachSettings::default()).unwrap();
        let p2 = out[1].0;
        // last client solved alone
        let alone = PowerProblem {
            id: 2,
            gain_ratio: 1e-12 / sigma2,
            bits: 1e6,
            bandwidth: 1e6,
            deadline: 0.5,
            p_min: 0.01,
            p_max: 0.1,
        };
        assert_eq!(
            p2,
            dinkelbach_power(&alone, &DinkelbachSettings::default())
                .unwrap()
                .0
        );
        let f1 = 1e-10 / (p2 * 1e-12 + sigma2);
        assert!(f1 < 1e-10 / sigma2);

        let single =
            successive_power(&clients[1..], sigma2, 1e6, &DinkelbachSettings::default()).unwrap();
        assert_eq!(single[0].0, p2);
    }

    #[test]
    fn successive_reports_infeasible_client() {
        let clients = [
            PowerClient {
                id: 7,
                gain: 1e-14,
                bits: 1e6,
                deadline: 0.01,
                p_min: 0.01,
                p_max: 0.1,
            },
            PowerClient {
                id: 8,
                gain: 1e-12,
                bits: 1e6,
                deadline: 10.0,
                p_min: 0.01,
                p_max: 0.1,
            },
        ];
        let err =
            successive_power(&clients, 3.981e-15, 1e6, &DinkelbachSettings::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::Infeasible {
                client: 7,
                binding: Binding::TransmitPower
            }
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dinkelbach_matches_grid(f in 1e1f64..1e6, g in 0.05f64..20.0) {
            let pr = problem(f, g);
            match dinkelbach_power(&pr, &DinkelbachSettings::default()) {
                Ok((p, trace)) => {
                    let grid = grid_ratio(&pr).unwrap();
                    prop_assert!((p - grid).abs() <= 1.0000001e-6, "p={p} grid={grid}");
                    prop_assert!(trace.steps.windows(2).all(|w| w[1].q >= w[0].q));
                    prop_assert!(trace.steps.last().unwrap().w.abs() <= 1e-6);
                    let ratio = pr.rate(p) / pr.outlay(p);
                    prop_assert!((ratio - trace.q_final).abs() <= 1e-9 * ratio);
                }
                Err(Error::Infeasible { .. }) => prop_assert!(grid_ratio(&pr).is_none()),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
