//! Joint equilibrium of the allocation game.
//!
//! The leader side (clients) minimises total energy `E`; the follower (server)
//! splits its CPU to minimise the round latency `T`. Every client maps
//! `v_max` of its data to the twin, and all clients share a common local
//! computing time and a common transmission time. The leader step searches
//! over the common transmission deadline `t`: for each `t` the minimum-power
//! SIC solution is found by successive power optimisation and the remaining
//! `T_max - t_com` is spent on local computing at the slowest admissible
//! frequency.

use crate::channel::{self, ChannelState, ClientGain, TransmitEntry, TransmitPlan};
use crate::cost::{
    aggregate_cost, dt_cost, local_cost, ClientCost, ClientProfile, CostReport, ServerProfile,
};
use crate::error::{invalid, Binding, Error, Result};

use super::follower::{follower_alpha, FollowerBranch};
use super::leader::{leader_f, leader_v};
use super::power::{
    successive_power, DinkelbachSettings, DinkelbachTrace, PowerClient, PowerProblem,
};

/// Uplink multiple-access scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Uplink {
    /// Shared band with SIC at the receiver.
    Noma,
    /// Static equal FDMA split: each client gets `B/N` and `sigma^2/N`.
    Oma,
}

/// One allocation problem: the selected clients and their channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub clients: Vec<ClientProfile>,
    /// Squared channel magnitudes, aligned with `clients`.
    pub gains: Vec<f64>,
    pub server: ServerProfile,
    pub bandwidth: f64,
    pub noise_power: f64,
    pub uplink: Uplink,
}

impl Instance {
    pub fn validate(&self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(Error::EmptySelection);
        }
        if self.gains.len() != self.clients.len() {
            return Err(invalid("one channel gain per client required"));
        }
        for (i, c) in self.clients.iter().enumerate() {
            c.validate()?;
            if self.clients[..i].iter().any(|o| o.id == c.id) {
                return Err(invalid(format!("client {} listed twice", c.id)));
            }
        }
        self.server.validate()?;
        self.channel().map(|_| ())
    }

    pub fn channel(&self) -> Result<ChannelState> {
        let gains = self
            .clients
            .iter()
            .zip(&self.gains)
            .map(|(c, &gain)| ClientGain { id: c.id, gain })
            .collect();
        ChannelState::new(gains, self.noise_power, self.bandwidth)
    }

    /// Indices into `clients` in SIC decoding order.
    pub fn decode_positions(&self) -> Result<Vec<usize>> {
        let order = channel::decoding_order(&self.channel()?);
        Ok(order
            .iter()
            .map(|id| {
                self.clients
                    .iter()
                    .position(|c| c.id == *id)
                    .expect("id from channel")
            })
            .collect())
    }
}

/// Per-client decision variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub power: f64,
    pub frequency: f64,
    pub fraction: f64,
    pub alpha: f64,
}

/// Cost of arbitrary decisions under the common-transmission-time model:
/// `t_com = max_n d_n / R_n` and every client pays `p_n t_com`.
pub fn evaluate(instance: &Instance, choices: &[Choice]) -> Result<CostReport> {
    instance.validate()?;
    if choices.len() != instance.clients.len() {
        return Err(invalid("one choice per client required"));
    }
    let rates = uplink_rates(instance, choices)?;
    let mut t_com: f64 = 0.0;
    for ((c, r), ch) in instance.clients.iter().zip(&rates).zip(choices) {
        if c.model_bits > 0.0 {
            if !(*r > 0.0) {
                return Err(Error::InfeasibleTransmission(c.id));
            }
            if ch.power < c.p_min || ch.power > c.p_max {
                return Err(invalid(format!(
                    "client {} power {} outside bounds",
                    c.id, ch.power
                )));
            }
            t_com = t_com.max(c.model_bits / r);
        }
    }
    let mut entries = Vec::with_capacity(choices.len());
    for (c, ch) in instance.clients.iter().zip(choices) {
        let (t_cmp, e_cmp) = local_cost(c, instance.server.kappa, ch.fraction, ch.frequency)?;
        let t_server = dt_cost(c, &instance.server, ch.fraction, ch.alpha)?;
        entries.push(ClientCost {
            id: c.id,
            t_cmp,
            e_cmp,
            t_com,
            e_com: ch.power * t_com,
            t_server,
        });
    }
    let sum_alpha: f64 = choices.iter().map(|c| c.alpha).sum();
    if sum_alpha > 1.0 + 1e-12 {
        return Err(invalid(format!("server shares sum to {sum_alpha} > 1")));
    }
    aggregate_cost(entries)
}

fn uplink_rates(instance: &Instance, choices: &[Choice]) -> Result<Vec<f64>> {
    match instance.uplink {
        Uplink::Noma => {
            let state = instance.channel()?;
            let entries = instance
                .clients
                .iter()
                .zip(choices)
                .map(|(c, ch)| TransmitEntry {
                    id: c.id,
                    power: ch.power,
                    payload_bits: c.model_bits,
                })
                .collect();
            let plan = TransmitPlan::new(entries, channel::decoding_order(&state))?;
            instance
                .clients
                .iter()
                .map(|c| channel::rate(&state, &plan, c.id))
                .collect()
        }
        Uplink::Oma => {
            let n = instance.clients.len() as f64;
            let band = instance.bandwidth / n;
            let noise = instance.noise_power / n;
            Ok(instance
                .gains
                .iter()
                .zip(choices)
                .map(|(g, ch)| band * (ch.power * g / noise).ln_1p() / std::f64::consts::LN_2)
                .collect())
        }
    }
}

/// Whether every client's round time fits into `t_max` (relative slack 1e-9).
pub fn within_deadline(report: &CostReport, t_max: f64) -> bool {
    report
        .clients
        .iter()
        .all(|c| c.round_time() <= t_max * (1.0 + 1e-9))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub dinkelbach: DinkelbachSettings,
    /// Relative change of `E` that ends the outer loop.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Points of the coarse scan over the transmission deadline.
    pub scan_points: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dinkelbach: DinkelbachSettings::default(),
            tolerance: 1e-4,
            max_iterations: 50,
            scan_points: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientAllocation {
    pub id: usize,
    pub power: f64,
    pub frequency: f64,
    pub fraction: f64,
    pub alpha: f64,
    pub rate: f64,
    /// This client's own computing time `W_n / f_n`; below the common value
    /// only when it already runs at `f_min`.
    pub t_cmp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationDecision {
    pub clients: Vec<ClientAllocation>,
    /// Client ids in SIC decoding order.
    pub decode_order: Vec<usize>,
    pub t_cmp: f64,
    pub t_com: f64,
    pub t_server: f64,
    pub t_total: f64,
    pub branch: FollowerBranch,
}

impl AllocationDecision {
    pub fn choices(&self) -> Vec<Choice> {
        self.clients
            .iter()
            .map(|c| Choice {
                power: c.power,
                frequency: c.frequency,
                fraction: c.fraction,
                alpha: c.alpha,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub decision: AllocationDecision,
    pub report: CostReport,
    /// Power traces keyed by client id, in decoding order.
    pub traces: Vec<(usize, DinkelbachTrace)>,
    pub iterations: usize,
    pub energy_history: Vec<f64>,
}

/// Leader-side plan for one transmission deadline.
#[derive(Debug, Clone)]
struct LeaderPlan {
    deadline: f64,
    powers: Vec<f64>,
    rates: Vec<f64>,
    t_com: f64,
    energy: f64,
}

struct Leader<'a> {
    inst: &'a Instance,
    /// Local workloads at `v_max`.
    work: Vec<f64>,
    order: Vec<usize>,
}

impl Leader<'_> {
    fn power_problem(&self, k: usize, deadline: f64, interference: f64) -> PowerProblem {
        let c = &self.inst.clients[k];
        let (gain_ratio, bandwidth) = match self.inst.uplink {
            Uplink::Noma => (self.inst.gains[k] / interference, self.inst.bandwidth),
            Uplink::Oma => {
                let n = self.inst.clients.len() as f64;
                (
                    self.inst.gains[k] * n / self.inst.noise_power,
                    self.inst.bandwidth / n,
                )
            }
        };
        PowerProblem {
            id: c.id,
            gain_ratio,
            bits: c.model_bits,
            bandwidth,
            deadline,
            p_min: c.p_min,
            p_max: c.p_max,
        }
    }

    /// Componentwise minimal powers meeting `deadline`, last-decoded first.
    /// Returns the first client that cannot make it on failure.
    fn min_powers(&self, deadline: f64) -> std::result::Result<(Vec<f64>, Vec<f64>), usize> {
        let n = self.inst.clients.len();
        let (mut powers, mut rates) = (vec![0.0; n], vec![0.0; n]);
        let mut interference = self.inst.noise_power;
        for &k in self.order.iter().rev() {
            let pr = self.power_problem(k, deadline, interference);
            let (lo, _) = pr.feasible_interval().ok_or(pr.id)?;
            powers[k] = lo;
            rates[k] = pr.rate(lo);
            interference += lo * self.inst.gains[k];
        }
        Ok((powers, rates))
    }

    fn plan(&self, deadline: f64) -> Option<LeaderPlan> {
        let (powers, rates) = self.min_powers(deadline).ok()?;
        Some(self.complete(deadline, powers, rates))
    }

    fn complete(&self, deadline: f64, powers: Vec<f64>, rates: Vec<f64>) -> LeaderPlan {
        let inst = self.inst;
        let t_com = inst
            .clients
            .iter()
            .zip(&rates)
            .filter(|(c, _)| c.model_bits > 0.0)
            .map(|(c, r)| c.model_bits / r)
            .fold(0.0, f64::max);
        let budget = inst.server.t_max - t_com;
        let freqs = inst
            .clients
            .iter()
            .zip(&self.work)
            .map(|(c, w)| (w / budget).clamp(c.f_min, c.f_max));
        let compute: f64 = self
            .work
            .iter()
            .zip(freqs)
            .map(|(w, f)| 0.5 * inst.server.kappa * w * f * f)
            .sum();
        let energy = compute + t_com * powers.iter().sum::<f64>();
        LeaderPlan {
            deadline,
            powers,
            rates,
            t_com,
            energy,
        }
    }

    /// Minimum-energy plan over the feasible deadline range.
    fn best_plan(&self, scan_points: usize) -> Result<LeaderPlan> {
        let inst = self.inst;
        let t_max = inst.server.t_max;
        // longest local phase at f_max bounds the transmission deadline from above
        let (slowest, t_local) = inst
            .clients
            .iter()
            .zip(&self.work)
            .map(|(c, w)| (c.id, w / c.f_max))
            .fold(
                (inst.clients[0].id, 0.0),
                |acc, x| if x.1 > acc.1 { x } else { acc },
            );
        let t_hi = t_max - t_local;
        if !(t_hi > 0.0) {
            return Err(Error::Infeasible {
                client: slowest,
                binding: Binding::LocalFrequency,
            });
        }
        if let Err(id) = self.min_powers(t_hi) {
            return Err(Error::Infeasible {
                client: id,
                binding: Binding::TransmitPower,
            });
        }
        // feasibility is monotone in the deadline
        let (mut lo, mut hi) = (0.0, t_hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.min_powers(mid).is_ok() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let t_lo = hi;
        let k = scan_points.max(3);
        let grid: Vec<f64> = (0..k)
            .map(|i| t_lo + (t_hi - t_lo) * i as f64 / (k - 1) as f64)
            .collect();
        let energies: Vec<f64> = grid
            .iter()
            .map(|&t| self.plan(t).map_or(f64::INFINITY, |p| p.energy))
            .collect();
        let best = (0..k).fold(0, |b, i| if energies[i] < energies[b] { i } else { b });
        let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(k - 1)]);
        let mut best_plan = self.plan(grid[best]).expect("feasible grid point");
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let eval = |t: f64| self.plan(t).map_or(f64::INFINITY, |p| p.energy);
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let (mut e1, mut e2) = (eval(x1), eval(x2));
        while b - a > 1e-12 * t_max {
            if e1 <= e2 {
                b = x2;
                x2 = x1;
                e2 = e1;
                x1 = b - phi * (b - a);
                e1 = eval(x1);
            } else {
                a = x1;
                x1 = x2;
                e1 = e2;
                x2 = a + phi * (b - a);
                e2 = eval(x2);
            }
        }
        for t in [x1, x2] {
            if let Some(p) = self.plan(t) {
                if p.energy < best_plan.energy {
                    best_plan = p;
                }
            }
        }
        Ok(best_plan)
    }
}

/// Solves the allocation game for the selected clients.
///
/// Returns the equilibrium decision, its cost report and the power traces.
/// Any infeasible client is reported with the constraint that binds.
pub fn stackelberg_solve(instance: &Instance, settings: &SolverSettings) -> Result<Equilibrium> {
    instance.validate()?;
    let inst = instance;
    let t_max = inst.server.t_max;
    let mut fractions = Vec::with_capacity(inst.clients.len());
    for c in &inst.clients {
        // v_max is admissible as soon as the local share fits at f_max
        let v = leader_v(c, t_max).or_else(|e| match e {
            Error::Infeasible { .. } => Err(Error::Infeasible {
                client: c.id,
                binding: Binding::LocalFrequency,
            }),
            e => Err(e),
        })?;
        fractions.push(v);
    }
    let leader = Leader {
        inst,
        work: inst
            .clients
            .iter()
            .zip(&fractions)
            .map(|(c, &v)| c.local_cycles(v))
            .collect(),
        order: inst.decode_positions()?,
    };

    let mut t_total = t_max;
    let mut history = Vec::new();
    let mut state = None;
    for iteration in 1..=settings.max_iterations {
        let follower = follower_alpha(&inst.clients, &inst.server, &fractions, t_total)?;
        let plan = leader.best_plan(settings.scan_points)?;
        let available = t_max - plan.t_com;
        let freqs: Vec<f64> = inst
            .clients
            .iter()
            .zip(&fractions)
            // only rounding at the f_max edge can fail here
            .map(|(c, &v)| leader_f(c, v, available).unwrap_or(c.f_max))
            .collect();
        let t_cmp = leader
            .work
            .iter()
            .zip(&freqs)
            .map(|(w, f)| w / f)
            .fold(0.0, f64::max);
        let round = t_cmp + plan.t_com;
        history.push(plan.energy);
        let n = history.len();
        let settled = n > 1
            && (history[n - 1] - history[n - 2]).abs() <= settings.tolerance * history[n - 2].abs();
        let consistent = (round - t_total).abs() <= 1e-12 * t_total;
        t_total = round;
        state = Some((plan, freqs, t_cmp, follower, iteration));
        if settled && consistent {
            break;
        }
    }
    let (plan, freqs, t_cmp, mut follower, iterations) =
        state.ok_or_else(|| invalid("zero iteration cap"))?;
    if iterations == settings.max_iterations {
        follower = follower_alpha(&inst.clients, &inst.server, &fractions, t_total)?;
    }
    if follower.t_server > t_max * (1.0 + 1e-12) {
        let heaviest = inst
            .clients
            .iter()
            .zip(&fractions)
            .max_by(|a, b| {
                (a.0.cycles_per_sample * a.0.twin_samples(*a.1, 0.0))
                    .total_cmp(&(b.0.cycles_per_sample * b.0.twin_samples(*b.1, 0.0)))
            })
            .map(|(c, _)| c.id)
            .expect("nonempty");
        return Err(Error::Infeasible {
            client: heaviest,
            binding: Binding::TwinDeadline,
        });
    }

    // the final powers come from the Dinkelbach machinery at the chosen deadline
    let deadline = plan.deadline;
    let power_clients: Vec<PowerClient> = leader
        .order
        .iter()
        .map(|&k| {
            let c = &inst.clients[k];
            PowerClient {
                id: c.id,
                gain: inst.gains[k],
                bits: c.model_bits,
                deadline: if c.model_bits > 0.0 {
                    deadline
                } else {
                    f64::INFINITY
                },
                p_min: c.p_min,
                p_max: c.p_max,
            }
        })
        .collect();
    let solved = match inst.uplink {
        Uplink::Noma => successive_power(
            &power_clients,
            inst.noise_power,
            inst.bandwidth,
            &settings.dinkelbach,
        )?,
        Uplink::Oma => {
            let n = inst.clients.len() as f64;
            power_clients
                .iter()
                .map(|pc| {
                    let pr = PowerProblem {
                        id: pc.id,
                        gain_ratio: pc.gain * n / inst.noise_power,
                        bits: pc.bits,
                        bandwidth: inst.bandwidth / n,
                        deadline: pc.deadline,
                        p_min: pc.p_min,
                        p_max: pc.p_max,
                    };
                    super::power::dinkelbach_power(&pr, &settings.dinkelbach)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let mut powers = plan.powers.clone();
    for (&k, (p, _)) in leader.order.iter().zip(&solved) {
        powers[k] = *p;
    }
    let traces = leader
        .order
        .iter()
        .zip(solved)
        .map(|(&k, (_, tr))| (inst.clients[k].id, tr))
        .collect();

    let clients: Vec<ClientAllocation> = inst
        .clients
        .iter()
        .enumerate()
        .map(|(k, c)| ClientAllocation {
            id: c.id,
            power: powers[k],
            frequency: freqs[k],
            fraction: fractions[k],
            alpha: follower.alpha[k],
            rate: plan.rates[k],
            t_cmp: leader.work[k] / freqs[k],
        })
        .collect();
    let decision = AllocationDecision {
        decode_order: leader.order.iter().map(|&k| inst.clients[k].id).collect(),
        clients,
        t_cmp,
        t_com: plan.t_com,
        t_server: follower.t_server,
        t_total,
        branch: follower.branch,
    };
    let report = evaluate(inst, &decision.choices())?;
    Ok(Equilibrium {
        decision,
        report,
        traces,
        iterations,
        energy_history: history,
    })
}
