//! Certification of the solver against the brute-force oracles.
//!
//! Shared by the `selftest` subcommand and the acceptance tests.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::oracle::{
    grid_min_energy, grid_min_makespan_alpha, grid_min_power_pair, neighborhood_spread, GridSpec,
    PairInstance, DEFAULT_STEPS,
};
use crate::rng::stream;
use crate::scenario::Scenario;
use crate::solver::{
    evaluate, follower_alpha, stackelberg_solve, successive_power, within_deadline,
    DinkelbachSettings, Equilibrium, FollowerBranch, Instance, PowerClient, SolverSettings, Uplink,
};

const TAG_DATA_SIZE: u64 = 900;
const TAG_FOLLOWER: u64 = 901;
const TAG_PAIRS: u64 = 902;
const TAG_DEVIATIONS: u64 = 903;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

pub fn check(pass: bool, detail: impl Into<String>) -> Check {
    Check {
        pass,
        detail: detail.into(),
    }
}

/// Every certification at full size, labelled.
pub fn run_all(base: &Scenario) -> Vec<(&'static str, Check)> {
    let (closed, certified) = closed_form(base, 200);
    vec![
        ("closed-form allocation", closed),
        ("follower split", follower(base, 200)),
        ("dinkelbach convergence", dinkelbach(&certified)),
        ("successive power", power_pairs(base, 100)),
        ("equilibrium stability", stability(base, 50, 100)),
    ]
}

/// Single-client instance at the default ranges, with the data size drawn
/// from [500, 3000] so that both the `f_min` and the interior frequency regimes occur.
fn single_client(base: &Scenario, seed: u64) -> Instance {
    let profiles = base.profiles(seed);
    let gains = base.gains(seed, &base.distances(seed), 0).expect("gains");
    let id = (seed % base.clients as u64) as usize;
    let mut inst = base.instance(&profiles, &gains, &[id], Uplink::Noma);
    inst.clients[0].data_size = stream(seed, &[TAG_DATA_SIZE]).random_range(500..=3000) as f64;
    inst
}

/// Stackelberg energy against the brute-force grid on `count` feasible
/// single-client instances; also returns the equilibria for [`dinkelbach`].
pub fn closed_form(base: &Scenario, count: usize) -> (Check, Vec<Equilibrium>) {
    let start = Instant::now();
    let settings = SolverSettings::default();
    let mut certified = Vec::new();
    let mut worst: f64 = 0.0;
    let mut problems = Vec::new();
    let mut skipped = 0;
    let mut seed = 0;
    while certified.len() < count {
        let inst = single_client(base, seed);
        seed += 1;
        let spec = GridSpec::for_instance(&inst, DEFAULT_STEPS).expect("grid");
        match (
            stackelberg_solve(&inst, &settings),
            grid_min_energy(&inst, &spec),
        ) {
            (Ok(eq), Ok(grid)) => {
                let spread = neighborhood_spread(&inst, &spec, &grid);
                let gap = (eq.report.energy - grid.energy).abs();
                worst = worst.max(gap / spread.max(f64::MIN_POSITIVE));
                if gap > spread {
                    problems.push(format!(
                        "seed {}: |E - E_grid| = {gap:.3e} > spread {spread:.3e}",
                        seed - 1
                    ));
                }
                certified.push(eq);
            }
            (Err(_), Err(_)) => skipped += 1,
            (Ok(_), Err(e)) => {
                problems.push(format!("seed {}: grid found nothing ({e})", seed - 1))
            }
            (Err(e), Ok(_)) => problems.push(format!(
                "seed {}: solver failed on a feasible instance ({e})",
                seed - 1
            )),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = problems.is_empty() && secs < 10.0;
    let mut detail = format!(
        "{count} instances ({skipped} infeasible skipped), worst gap/spread {worst:.3}, {secs:.2} s (limit 10 s)"
    );
    if let Some(p) = problems.first() {
        detail += &format!("; {} problems, first: {p}", problems.len());
    }
    (check(pass, detail), certified)
}

/// Follower shares on `count` random three-client instances: equal twin
/// finishing times, share budget, and no better split on the simplex grid.
pub fn follower(base: &Scenario, count: u64) -> Check {
    let server = base.server();
    let mut worst_spread: f64 = 0.0;
    let mut saturated = 0;
    let mut problems = Vec::new();
    for seed in 0..count {
        let mut rng = stream(seed, &[TAG_FOLLOWER]);
        let profiles = base.profiles(seed);
        let clients: Vec<_> = (0..3)
            .map(|k| profiles[(seed as usize + 7 * k) % base.clients].clone())
            .collect();
        let v: Vec<f64> = clients
            .iter()
            .map(|c| rng.random_range(0.01..=c.v_max))
            .collect();
        // log-uniform budget so both branches are exercised
        let t_total = 10f64.powf(rng.random_range(-3.0..1.0));
        let r = follower_alpha(&clients, &server, &v, t_total).expect("follower");
        let works: Vec<f64> = clients
            .iter()
            .zip(&v)
            .map(|(c, v)| c.cycles_per_sample * (v * c.data_size + server.dt_deviation))
            .collect();
        let ts: Vec<f64> = works
            .iter()
            .zip(&r.alpha)
            .map(|(w, a)| w / (a * server.f_server))
            .collect();
        let hi = ts.iter().cloned().fold(f64::MIN, f64::max);
        let lo = ts.iter().cloned().fold(f64::MAX, f64::min);
        worst_spread = worst_spread.max((hi - lo) / hi);
        let sum: f64 = r.alpha.iter().sum();
        if (hi - lo) / hi > 1e-9 {
            problems.push(format!("seed {seed}: spread {:.2e}", (hi - lo) / hi));
        }
        if sum > 1.0 + 1e-12 {
            problems.push(format!("seed {seed}: sum alpha {sum}"));
        }
        if r.branch == FollowerBranch::Saturated {
            saturated += 1;
            if (sum - 1.0).abs() > 1e-12 {
                problems.push(format!("seed {seed}: saturated but sum alpha {sum}"));
            }
        }
        let grid =
            grid_min_makespan_alpha(&works, server.f_server, t_total, 200).expect("alpha grid");
        let ours = hi.max(t_total);
        if grid.makespan < ours * (1.0 - 1e-9) {
            problems.push(format!(
                "seed {seed}: grid makespan {} < {ours}",
                grid.makespan
            ));
        }
    }
    let detail = format!(
        "{count} instances ({saturated} saturated), worst relative spread {worst_spread:.2e}"
    );
    match problems.first() {
        None => check(true, detail),
        Some(p) => check(
            false,
            format!("{detail}; {} problems, first: {p}", problems.len()),
        ),
    }
}

/// Monotone `q` and `|W(q*)| <= 1e-6` within 20 iterations on every trace.
pub fn dinkelbach(certified: &[Equilibrium]) -> Check {
    let mut traces = 0;
    let mut max_iter = 0;
    let mut worst_w: f64 = 0.0;
    let mut problems = Vec::new();
    for eq in certified {
        for (id, t) in &eq.traces {
            if t.steps.is_empty() {
                continue;
            }
            traces += 1;
            max_iter = max_iter.max(t.iterations);
            if t.steps.windows(2).any(|w| w[1].q < w[0].q) {
                problems.push(format!("client {id}: q decreased"));
            }
            let w = t.steps.last().map(|s| s.w.abs()).unwrap_or(0.0);
            worst_w = worst_w.max(w);
            if !t.converged || w > 1e-6 {
                problems.push(format!("client {id}: |W| = {w:.2e} at exit"));
            }
            if t.iterations > 20 {
                problems.push(format!("client {id}: {} iterations", t.iterations));
            }
        }
    }
    let detail =
        format!("{traces} traces, max |W(q*)| {worst_w:.2e}, max {max_iter} iterations (limit 20)");
    match problems.first() {
        None if traces > 0 => check(true, detail),
        None => check(false, "no Dinkelbach traces recorded"),
        Some(p) => check(
            false,
            format!("{detail}; {} problems, first: {p}", problems.len()),
        ),
    }
}

fn pair_energy(inst: &PairInstance, p: [f64; 2]) -> (f64, [f64; 2]) {
    let b = inst.bandwidth;
    let r0 = b * (1.0 + p[0] * inst.gains[0] / (p[1] * inst.gains[1] + inst.noise_power)).log2();
    let r1 = b * (1.0 + p[1] * inst.gains[1] / inst.noise_power).log2();
    let t = [inst.bits[0] / r0, inst.bits[1] / r1];
    (p[0] * t[0] + p[1] * t[1], t)
}

/// Successive power allocation against a refined 2-D grid on `count`
/// feasible two-client instances.
pub fn power_pairs(base: &Scenario, count: usize) -> Check {
    let settings = DinkelbachSettings::default();
    let mut done = 0;
    let mut skipped = 0;
    let mut worst: f64 = 0.0;
    let mut problems = Vec::new();
    let mut seed = 0u64;
    while done < count {
        let mut rng = stream(seed, &[TAG_PAIRS]);
        let gains = base.gains(seed, &base.distances(seed), 0).expect("gains");
        seed += 1;
        let (a, b) = (
            rng.random_range(0..base.clients),
            rng.random_range(0..base.clients),
        );
        if a == b {
            continue;
        }
        let (strong, weak) = if gains[a] >= gains[b] {
            (gains[a], gains[b])
        } else {
            (gains[b], gains[a])
        };
        let bits = [
            base.model_bits * rng.random_range(0.5..2.0),
            base.model_bits * rng.random_range(0.5..2.0),
        ];
        let inst = PairInstance {
            gains: [strong, weak],
            bits,
            deadline: rng.random_range(0.1..1.0),
            noise_power: base.noise_power(),
            bandwidth: base.bandwidth,
            p_min: base.p_min,
            p_max: base.p_max,
        };
        let clients: Vec<PowerClient> = (0..2)
            .map(|k| PowerClient {
                id: k,
                gain: inst.gains[k],
                bits: inst.bits[k],
                deadline: inst.deadline,
                p_min: inst.p_min,
                p_max: inst.p_max,
            })
            .collect();
        let ours = successive_power(&clients, inst.noise_power, inst.bandwidth, &settings);
        let grid = grid_min_power_pair(&inst, 101, 8);
        match (ours, grid) {
            (Ok(sol), Ok((_, e_grid))) => {
                let (e, t) = pair_energy(&inst, [sol[0].0, sol[1].0]);
                if t.iter().any(|t| *t > inst.deadline * (1.0 + 1e-9)) {
                    problems.push(format!("seed {}: deadline missed", seed - 1));
                }
                let rel = (e - e_grid).abs() / e_grid;
                worst = worst.max(rel);
                if rel > 1e-3 {
                    problems.push(format!("seed {}: relative gap {rel:.2e}", seed - 1));
                }
                done += 1;
            }
            (Err(_), Err(_)) => skipped += 1,
            (Ok(_), Err(_)) => problems.push(format!(
                "seed {}: grid infeasible but solver returned powers",
                seed - 1
            )),
            (Err(e), Ok(_)) => problems.push(format!(
                "seed {}: solver failed on a feasible pair ({e})",
                seed - 1
            )),
        }
    }
    let detail = format!(
        "{count} pairs ({skipped} infeasible skipped), worst relative gap {worst:.2e} (limit 1e-3)"
    );
    match problems.first() {
        None => check(true, detail),
        Some(p) => check(
            false,
            format!("{detail}; {} problems, first: {p}", problems.len()),
        ),
    }
}

/// Unilateral deviations of the follower and the leader on `count`
/// equilibria, `per_side` feasible deviations each.
pub fn stability(base: &Scenario, count: usize, per_side: usize) -> Check {
    let settings = SolverSettings::default();
    let mut instances = Vec::new();
    let mut seed = 0u64;
    while instances.len() < count {
        let profiles = base.profiles(seed);
        let gains = base.gains(seed, &base.distances(seed), 0).expect("gains");
        let offset = (seed as usize * 3) % base.clients;
        let ids: Vec<usize> = (0..base.selected)
            .map(|k| (offset + k) % base.clients)
            .collect();
        let inst = base.instance(&profiles, &gains, &ids, Uplink::Noma);
        if let Ok(eq) = stackelberg_solve(&inst, &settings) {
            instances.push((seed, inst, eq));
        }
        seed += 1;
    }
    let results: Vec<(f64, f64, Vec<String>)> = instances
        .par_iter()
        .map(|(seed, inst, eq)| deviations(*seed, inst, eq, per_side))
        .collect();
    let best_t = results.iter().map(|r| r.0).fold(f64::MIN, f64::max);
    let best_e = results.iter().map(|r| r.1).fold(f64::MIN, f64::max);
    let problems: Vec<&String> = results.iter().flat_map(|r| &r.2).collect();
    let detail = format!(
        "{count} instances x {per_side} follower + {per_side} leader deviations, largest gain in T {best_t:.2e}, in E {best_e:.2e} (limit 1e-6)"
    );
    match problems.first() {
        None => check(true, detail),
        Some(p) => check(
            false,
            format!("{detail}; {} problems, first: {p}", problems.len()),
        ),
    }
}

/// Largest improvement found for the follower (in `T`) and the leader (in
/// `E`) over `per_side` feasible unilateral deviations each.
fn deviations(
    seed: u64,
    inst: &Instance,
    eq: &Equilibrium,
    per_side: usize,
) -> (f64, f64, Vec<String>) {
    let mut rng = stream(seed, &[TAG_DEVIATIONS]);
    let t_max = inst.server.t_max;
    let base_choices = eq.decision.choices();
    let n = base_choices.len();
    let mut problems = Vec::new();
    let (mut best_t, mut best_e) = (f64::MIN, f64::MIN);
    let mut follower = 0;
    let mut leader = 0;
    for _ in 0..100_000 {
        if follower == per_side && leader == per_side {
            break;
        }
        let mut ch = base_choices.clone();
        let k = rng.random_range(0..n);
        let c = &inst.clients[k];
        let as_follower = follower < per_side && (leader == per_side || rng.random_bool(0.5));
        if as_follower {
            ch[k].alpha = (ch[k].alpha * (1.0 + rng.random_range(-0.05..0.05))).clamp(0.0, 1.0);
        } else {
            match rng.random_range(0..3) {
                0 => {
                    ch[k].power = (ch[k].power * (1.0 + rng.random_range(-0.05..0.05)))
                        .clamp(c.p_min, c.p_max)
                }
                1 => {
                    ch[k].frequency = (ch[k].frequency * (1.0 + rng.random_range(-0.05..0.05)))
                        .clamp(c.f_min, c.f_max)
                }
                _ => {
                    ch[k].fraction = (ch[k].fraction + c.v_max * rng.random_range(-0.05..0.05))
                        .clamp(0.0, c.v_max)
                }
            }
        }
        let Ok(report) = evaluate(inst, &ch) else {
            continue;
        };
        if !within_deadline(&report, t_max) {
            continue;
        }
        if as_follower {
            follower += 1;
            let gain = eq.report.latency - report.latency;
            best_t = best_t.max(gain);
            if gain > 1e-6 {
                problems.push(format!(
                    "seed {seed}: alpha deviation of client {} cuts T by {gain:.2e}",
                    c.id
                ));
            }
        } else {
            leader += 1;
            let gain = eq.report.energy - report.energy;
            best_e = best_e.max(gain);
            if gain > 1e-6 {
                problems.push(format!(
                    "seed {seed}: deviation of client {} cuts E by {gain:.2e}",
                    c.id
                ));
            }
        }
    }
    if follower < per_side || leader < per_side {
        problems.push(format!(
            "seed {seed}: only {follower}/{leader} feasible deviations found"
        ));
    }
    (best_t, best_e, problems)
}
