//! Allocation under every scheme, including the comparison baselines.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::channel;
use crate::cost::{aggregate_cost, ClientCost, CostReport};
use crate::error::{Binding, Error, Result};
use crate::scenario::Scheme;
use crate::solver::{
    evaluate, stackelberg_solve, successive_power, within_deadline, AllocationDecision,
    ClientAllocation, FollowerBranch, Instance, PowerClient, SolverSettings, Uplink,
};

/// Attempts of the random scheme before it reports infeasibility.
pub const RANDOM_TRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub scheme: Scheme,
    pub decision: AllocationDecision,
    pub report: CostReport,
}

/// Allocation for `instance` under `scheme`. The uplink of `instance` is
/// overridden by the scheme; `rng` is only drawn from by [`Scheme::Random`].
pub fn allocate<R: Rng + ?Sized>(
    instance: &Instance,
    scheme: Scheme,
    settings: &SolverSettings,
    rng: &mut R,
) -> Result<Allocation> {
    let mut inst = instance.clone();
    inst.uplink = if scheme == Scheme::Oma {
        Uplink::Oma
    } else {
        Uplink::Noma
    };
    match scheme {
        Scheme::Proposed | Scheme::Oma => {
            let eq = stackelberg_solve(&inst, settings)?;
            Ok(Allocation {
                scheme,
                decision: eq.decision,
                report: eq.report,
            })
        }
        Scheme::NoDt => {
            for c in &mut inst.clients {
                c.v_max = 0.0;
            }
            inst.server.dt_deviation = 0.0;
            let eq = stackelberg_solve(&inst, settings)?;
            Ok(Allocation {
                scheme,
                decision: eq.decision,
                report: eq.report,
            })
        }
        Scheme::Ideal => ideal(&inst, settings),
        Scheme::Random => random(&inst, rng),
    }
}

/// Clients with unlimited computing: no local cost and no twin; powers are
/// the minimum that delivers every model within `T_max`.
fn ideal(inst: &Instance, settings: &SolverSettings) -> Result<Allocation> {
    inst.validate()?;
    let t_max = inst.server.t_max;
    let order = inst.decode_positions()?;
    let ordered: Vec<PowerClient> = order
        .iter()
        .map(|&k| {
            let c = &inst.clients[k];
            PowerClient {
                id: c.id,
                gain: inst.gains[k],
                bits: c.model_bits,
                deadline: if c.model_bits > 0.0 {
                    t_max
                } else {
                    f64::INFINITY
                },
                p_min: c.p_min,
                p_max: c.p_max,
            }
        })
        .collect();
    let mut powers = vec![0.0; inst.clients.len()];
    let solved = successive_power(
        &ordered,
        inst.noise_power,
        inst.bandwidth,
        &settings.dinkelbach,
    )?;
    for (&k, (p, _)) in order.iter().zip(&solved) {
        powers[k] = *p;
    }
    let rates = noma_rates(inst, &powers)?;
    let t_com = inst
        .clients
        .iter()
        .zip(&rates)
        .filter(|(c, _)| c.model_bits > 0.0)
        .map(|(c, r)| c.model_bits / r)
        .fold(0.0, f64::max);
    let entries = inst
        .clients
        .iter()
        .zip(&powers)
        .map(|(c, &p)| ClientCost {
            id: c.id,
            t_cmp: 0.0,
            e_cmp: 0.0,
            t_com,
            e_com: p * t_com,
            t_server: 0.0,
        })
        .collect();
    let report = aggregate_cost(entries)?;
    let clients = inst
        .clients
        .iter()
        .enumerate()
        .map(|(k, c)| ClientAllocation {
            id: c.id,
            power: powers[k],
            frequency: f64::INFINITY,
            fraction: 0.0,
            alpha: 0.0,
            rate: rates[k],
            t_cmp: 0.0,
        })
        .collect();
    let decision = AllocationDecision {
        clients,
        decode_order: order.iter().map(|&k| inst.clients[k].id).collect(),
        t_cmp: 0.0,
        t_com,
        t_server: 0.0,
        t_total: t_com,
        branch: FollowerBranch::Idle,
    };
    Ok(Allocation {
        scheme: Scheme::Ideal,
        decision,
        report,
    })
}

fn noma_rates(inst: &Instance, powers: &[f64]) -> Result<Vec<f64>> {
    let state = inst.channel()?;
    let entries = inst
        .clients
        .iter()
        .zip(powers)
        .map(|(c, &p)| channel::TransmitEntry {
            id: c.id,
            power: p,
            payload_bits: c.model_bits,
        })
        .collect();
    let plan = channel::TransmitPlan::new(entries, channel::decoding_order(&state))?;
    inst.clients
        .iter()
        .map(|c| channel::rate(&state, &plan, c.id))
        .collect()
}

/// Uniform decisions within the box bounds and `alpha` uniform on the
/// simplex, redrawn until the round fits into `T_max`.
fn random<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Result<Allocation> {
    inst.validate()?;
    let t_max = inst.server.t_max;
    let mut last_violator = inst.clients[0].id;
    for _ in 0..RANDOM_TRIES {
        let draws: Vec<f64> = inst.clients.iter().map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        let choices: Vec<_> = inst
            .clients
            .iter()
            .zip(&draws)
            .map(|(c, e)| crate::solver::Choice {
                power: rng.random_range(c.p_min..=c.p_max),
                frequency: rng.random_range(c.f_min..=c.f_max),
                fraction: rng.random_range(0.0..=c.v_max),
                alpha: e / total,
            })
            .collect();
        let report = evaluate(inst, &choices)?;
        if within_deadline(&report, t_max) {
            let rates = noma_rates(inst, &choices.iter().map(|c| c.power).collect::<Vec<_>>())?;
            let order = inst.decode_positions()?;
            let clients = inst
                .clients
                .iter()
                .zip(&choices)
                .zip(report.clients.iter().zip(&rates))
                .map(|((c, ch), (cc, &rate))| ClientAllocation {
                    id: c.id,
                    power: ch.power,
                    frequency: ch.frequency,
                    fraction: ch.fraction,
                    alpha: ch.alpha,
                    rate,
                    t_cmp: cc.t_cmp,
                })
                .collect();
            let fold = |f: fn(&ClientCost) -> f64| report.clients.iter().map(f).fold(0.0, f64::max);
            let decision = AllocationDecision {
                clients,
                decode_order: order.iter().map(|&k| inst.clients[k].id).collect(),
                t_cmp: fold(|c| c.t_cmp),
                t_com: fold(|c| c.t_com),
                t_server: fold(|c| c.t_server),
                t_total: report.latency,
                branch: FollowerBranch::Saturated,
            };
            return Ok(Allocation {
                scheme: Scheme::Random,
                decision,
                report,
            });
        }
        if let Some(c) = report
            .clients
            .iter()
            .max_by(|a, b| a.round_time().total_cmp(&b.round_time()))
        {
            last_violator = c.id;
        }
    }
    Err(Error::Infeasible {
        client: last_violator,
        binding: Binding::RoundDeadline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::scenario::Scenario;

    fn instance(n: usize, seed: u64) -> Instance {
        let s = Scenario::default();
        let profiles = s.profiles(seed);
        let d = s.distances(seed);
        let g = s.gains(seed, &d, 0).unwrap();
        let ids: Vec<usize> = (0..n).collect();
        s.instance(&profiles, &g, &ids, Uplink::Noma)
    }

    #[test]
    fn ideal_pays_only_transmission() {
        let inst = instance(5, 1);
        let a = allocate(
            &inst,
            Scheme::Ideal,
            &SolverSettings::default(),
            &mut stream(0, &[]),
        )
        .unwrap();
        let e_com: f64 = a.report.clients.iter().map(|c| c.e_com).sum();
        assert_eq!(a.report.energy, e_com);
        assert!(a
            .report
            .clients
            .iter()
            .all(|c| c.e_cmp == 0.0 && c.t_cmp == 0.0));
    }

    #[test]
    fn no_dt_keeps_all_data_local() {
        let inst = instance(5, 2);
        let a = allocate(
            &inst,
            Scheme::NoDt,
            &SolverSettings::default(),
            &mut stream(0, &[]),
        )
        .unwrap();
        assert!(a
            .decision
            .clients
            .iter()
            .all(|c| c.fraction == 0.0 && c.alpha == 0.0));
        assert!(a.report.clients.iter().all(|c| c.t_server == 0.0));
    }

    #[test]
    fn random_respects_bounds() {
        let inst = instance(5, 3);
        let mut rng = stream(7, &[]);
        for _ in 0..1000 {
            let a = allocate(&inst, Scheme::Random, &SolverSettings::default(), &mut rng).unwrap();
            for (c, p) in a.decision.clients.iter().zip(&inst.clients) {
                assert!((p.p_min..=p.p_max).contains(&c.power));
                assert!((p.f_min..=p.f_max).contains(&c.frequency));
                assert!((0.0..=p.v_max).contains(&c.fraction));
                assert!((0.0..=1.0).contains(&c.alpha));
            }
            let sum: f64 = a.decision.clients.iter().map(|c| c.alpha).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(within_deadline(&a.report, inst.server.t_max));
        }
    }

    #[test]
    fn oma_single_client_matches_noma() {
        let inst = instance(1, 4);
        let s = SolverSettings::default();
        let a = allocate(&inst, Scheme::Oma, &s, &mut stream(0, &[])).unwrap();
        let b = allocate(&inst, Scheme::Proposed, &s, &mut stream(0, &[])).unwrap();
        assert_eq!(a.decision.clients[0].power, b.decision.clients[0].power);
        approx::assert_relative_eq!(
            a.report.total_cost(),
            b.report.total_cost(),
            max_relative = 1e-12
        );
    }
}
