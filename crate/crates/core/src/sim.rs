//! End-to-end simulation: selection, allocation, training, screening,
//! aggregation and cost accounting, one CSV row per round.

use std::io::Write;

use rand::seq::SliceRandom;

use crate::baseline::{allocate, Allocation};
use crate::cost::ClientProfile;
use crate::error::{Error, Result};
use crate::fl::data::{client_labels, partition, uniform_noise};
use crate::fl::{
    accuracy, fl_round, mnist, Dataset, FlRound, GaussianMixture, ModelParams, Participant,
    RoundConfig,
};
use crate::reputation::ReputationState;
use crate::rng::stream;
use crate::scenario::{DatasetChoice, Scenario, Scheme};
use crate::solver::{SolverSettings, Uplink};

/// Everything that stays fixed over a run: clients, positions and data.
#[derive(Debug, Clone)]
pub struct World {
    pub profiles: Vec<ClientProfile>,
    pub distances: Vec<f64>,
    pub data: Vec<Dataset>,
    /// Twin mapping noise per client, `D * dim` values each.
    pub noise: Vec<Vec<f64>>,
    pub validation: Dataset,
    pub test: Dataset,
}

impl World {
    pub fn build(s: &Scenario) -> Result<Self> {
        let seed = s.seed;
        let profiles = s.profiles(seed);
        let distances = s.distances(seed);
        let sizes = vec![s.data_size; s.clients];
        let (data, validation, test) = match &s.dataset {
            DatasetChoice::Synthetic => {
                let mixture = GaussianMixture::new(&s.mixture, &mut stream(seed, &[TAG_MIXTURE]))?;
                let all: Vec<usize> = (0..mixture.classes()).collect();
                let labels = client_labels(
                    s.clients,
                    mixture.classes(),
                    s.distribution,
                    &mut stream(seed, &[TAG_LABELS]),
                )?;
                let data = labels
                    .iter()
                    .enumerate()
                    .map(|(id, l)| {
                        mixture.sample(
                            s.data_size,
                            l,
                            &mut stream(seed, &[TAG_CLIENT_DATA, id as u64]),
                        )
                    })
                    .collect();
                let validation = mixture.sample(
                    s.validation_size,
                    &all,
                    &mut stream(seed, &[TAG_VALIDATION]),
                );
                let test = mixture.sample(s.test_size, &all, &mut stream(seed, &[TAG_TEST]));
                (data, validation, test)
            }
            DatasetChoice::Mnist(dir) => {
                let full = mnist::load_mnist(dir)?;
                let need = s.test_size + s.validation_size + s.clients * s.data_size;
                if full.len() < need {
                    return Err(Error::Config(format!(
                        "MNIST has {} samples, the scenario needs {need}",
                        full.len()
                    )));
                }
                let mut idx: Vec<usize> = (0..full.len()).collect();
                idx.shuffle(&mut stream(seed, &[TAG_MIXTURE]));
                let test = full.select(&idx[..s.test_size]);
                let validation = full.select(&idx[s.test_size..s.test_size + s.validation_size]);
                let pool = full.select(&idx[s.test_size + s.validation_size..]);
                let labels = client_labels(
                    s.clients,
                    pool.classes(),
                    s.distribution,
                    &mut stream(seed, &[TAG_LABELS]),
                )?;
                let cells = partition(
                    &pool,
                    &sizes,
                    &labels,
                    &mut stream(seed, &[TAG_CLIENT_DATA]),
                )?;
                (
                    cells.iter().map(|c| pool.select(c)).collect(),
                    validation,
                    test,
                )
            }
        };
        let noise = (0..s.clients)
            .map(|id| {
                uniform_noise(
                    s.data_size,
                    test.dim(),
                    &mut stream(seed, &[TAG_TWIN_NOISE, id as u64]),
                )
            })
            .collect();
        Ok(Self {
            profiles,
            distances,
            data,
            noise,
            validation,
            test,
        })
    }
}

/// One output row per round.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub scheme: Scheme,
    pub seed: u64,
    /// Test accuracy of the global model after the round.
    pub accuracy: f64,
    pub latency: f64,
    pub energy: f64,
    pub total_cost: f64,
    pub t_cmp: f64,
    pub t_com: f64,
    pub t_server: f64,
    pub ni_count: usize,
    /// Clients dropped by the allocator before a feasible set was found.
    pub dropped: Vec<usize>,
    pub gamma: f64,
    pub selected: Vec<usize>,
}

pub const HEADER: [&str; 14] = [
    "round",
    "scheme",
    "seed",
    "accuracy",
    "latency",
    "energy",
    "total_cost",
    "t_cmp",
    "t_com",
    "t_server",
    "ni_count",
    "dropped",
    "gamma",
    "selected",
];

fn join(ids: &[usize]) -> String {
    ids.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

impl MetricsRow {
    pub fn record(&self) -> [String; 14] {
        [
            self.round.to_string(),
            self.scheme.to_string(),
            self.seed.to_string(),
            self.accuracy.to_string(),
            self.latency.to_string(),
            self.energy.to_string(),
            self.total_cost.to_string(),
            self.t_cmp.to_string(),
            self.t_com.to_string(),
            self.t_server.to_string(),
            self.ni_count.to_string(),
            join(&self.dropped),
            self.gamma.to_string(),
            join(&self.selected),
        ]
    }
}

pub fn write_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// One allocation with the fresh-reputation top-`N` selection and no
/// reselection, so infeasibility is returned as an error.
pub fn solve_round(s: &Scenario, round: usize) -> Result<(Vec<usize>, Allocation)> {
    s.validate()?;
    let profiles = s.profiles(s.seed);
    let gains = s.gains(s.seed, &s.distances(s.seed), round)?;
    let reputation = ReputationState::new(&profiles, s.epsilon, s.weights, s.pi_prior)?;
    let selected = reputation.select_top_n(s.selected)?;
    let inst = s.instance(&profiles, &gains, &selected, Uplink::Noma);
    let mut rng = stream(s.seed, &[TAG_SOLVE, round as u64]);
    let a = allocate(&inst, s.scheme, &SolverSettings::default(), &mut rng)?;
    Ok((selected, a))
}

/// Selection with drop-and-reselect: an infeasible client is removed from
/// this round's candidates and the best remaining clients are selected
/// again. Returns `None` once no candidate is left.
pub fn select_and_allocate(
    s: &Scenario,
    reputation: &ReputationState,
    profiles: &[ClientProfile],
    gains: &[f64],
    settings: &SolverSettings,
    round: usize,
) -> Result<(Option<(Vec<usize>, Allocation)>, Vec<usize>)> {
    let mut dropped = Vec::new();
    loop {
        let n = s.selected.min(s.clients - dropped.len());
        if n == 0 {
            return Ok((None, dropped));
        }
        let selected = reputation.select_top_n_excluding(n, &dropped)?;
        let inst = s.instance(profiles, gains, &selected, Uplink::Noma);
        let mut rng = stream(
            s.seed,
            &[TAG_RANDOM_ALLOC, round as u64, dropped.len() as u64],
        );
        match allocate(&inst, s.scheme, settings, &mut rng) {
            Ok(a) => return Ok((Some((selected, a)), dropped)),
            Err(Error::Infeasible { client, binding }) => {
                log::warn!("round {round}: dropping client {client} ({binding})");
                dropped.push(client);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Full outcome of one simulated round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub row: MetricsRow,
    pub allocation: Option<Allocation>,
    /// `None` when no client could be scheduled.
    pub fl: Option<FlRound>,
}

/// A running simulation; call [`Simulation::step`] once per round.
pub struct Simulation {
    scenario: Scenario,
    world: World,
    reputation: ReputationState,
    model: ModelParams,
    settings: SolverSettings,
    round: usize,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let world = World::build(scenario)?;
        let reputation = ReputationState::new(
            &world.profiles,
            scenario.epsilon,
            scenario.weights,
            scenario.pi_prior,
        )?;
        let model = ModelParams::zeros(world.test.dim(), world.test.classes());
        Ok(Self {
            scenario: scenario.clone(),
            world,
            reputation,
            model,
            settings: SolverSettings::default(),
            round: 0,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn reputation(&self) -> &ReputationState {
        &self.reputation
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn step(&mut self) -> Result<RoundOutcome> {
        let s = &self.scenario;
        let round = self.round;
        let gains = s.gains(s.seed, &self.world.distances, round)?;
        let (picked, dropped) = select_and_allocate(
            s,
            &self.reputation,
            &self.world.profiles,
            &gains,
            &self.settings,
            round,
        )?;
        let Some((selected, allocation)) = picked else {
            log::warn!("round {round}: no feasible client left");
            self.reputation.update_staleness(&[])?;
            self.round += 1;
            let row = MetricsRow {
                round,
                scheme: s.scheme,
                seed: s.seed,
                accuracy: accuracy(&self.model, &self.world.test),
                latency: 0.0,
                energy: 0.0,
                total_cost: 0.0,
                t_cmp: 0.0,
                t_com: 0.0,
                t_server: 0.0,
                ni_count: 0,
                dropped,
                gamma: 1.0,
                selected: Vec::new(),
            };
            return Ok(RoundOutcome {
                row,
                allocation: None,
                fl: None,
            });
        };
        self.reputation.update_staleness(&selected)?;

        let participants: Vec<Participant<'_>> = allocation
            .decision
            .clients
            .iter()
            .map(|c| Participant {
                id: c.id,
                data: &self.world.data[c.id],
                noise: &self.world.noise[c.id],
                honest: self.world.profiles[c.id].honest,
                fraction: c.fraction,
            })
            .collect();
        let config = RoundConfig {
            train: s.train,
            epsilon: s.epsilon,
            deviation: s.dt_deviation,
            twin: !matches!(s.scheme, Scheme::NoDt | Scheme::Ideal),
            roni_threshold: s.roni.then_some(s.roni_threshold),
        };
        let fl = fl_round(
            &self.model,
            &participants,
            &self.world.validation,
            &config,
            s.seed,
            round,
        )?;
        for &(id, verdict) in &fl.verdicts {
            self.reputation.record_verdict(id, verdict)?;
        }
        self.model = fl.model.clone();
        let report = &allocation.report;
        let d = &allocation.decision;
        let row = MetricsRow {
            round,
            scheme: s.scheme,
            seed: s.seed,
            accuracy: accuracy(&self.model, &self.world.test),
            latency: report.latency,
            energy: report.energy,
            total_cost: report.total_cost(),
            t_cmp: d.t_cmp,
            t_com: d.t_com,
            t_server: d.t_server,
            ni_count: fl.excluded.len(),
            dropped,
            gamma: fl.gamma,
            selected,
        };
        self.round += 1;
        Ok(RoundOutcome {
            row,
            allocation: Some(allocation),
            fl: Some(fl),
        })
    }
}

/// Runs all rounds of `scenario`.
pub fn run_simulation(scenario: &Scenario) -> Result<Vec<MetricsRow>> {
    let mut sim = Simulation::new(scenario)?;
    (0..scenario.rounds)
        .map(|_| sim.step().map(|o| o.row))
        .collect()
}

const TAG_MIXTURE: u64 = 20;
const TAG_LABELS: u64 = 21;
const TAG_CLIENT_DATA: u64 = 22;
const TAG_VALIDATION: u64 = 23;
const TAG_TEST: u64 = 24;
const TAG_TWIN_NOISE: u64 = 25;
const TAG_RANDOM_ALLOC: u64 = 30;
const TAG_SOLVE: u64 = 31;

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        Scenario {
            rounds: 3,
            validation_size: 300,
            test_size: 300,
            data_size: 200,
            ..Scenario::default()
        }
    }

    #[test]
    fn zero_rounds_is_header_only() {
        let s = Scenario {
            rounds: 0,
            ..small()
        };
        let mut buf = Vec::new();
        write_csv(&run_simulation(&s).unwrap(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), HEADER.join(",") + "\n");
    }

    #[test]
    fn same_seed_same_bytes() {
        let s = Scenario {
            poison_ratio: 0.3,
            ..small()
        };
        let csv = |s: &Scenario| {
            let mut buf = Vec::new();
            write_csv(&run_simulation(s).unwrap(), &mut buf).unwrap();
            buf
        };
        let a = csv(&s);
        assert_eq!(a, csv(&s));
        assert_ne!(
            a,
            csv(&Scenario {
                seed: 1,
                ..s.clone()
            })
        );
    }

    #[test]
    fn every_scheme_runs() {
        for scheme in Scheme::ALL {
            let rows = run_simulation(&Scenario {
                scheme,
                rounds: 2,
                ..small()
            })
            .unwrap();
            assert_eq!(rows.len(), 2);
            for r in rows {
                assert_eq!(r.selected.len(), 5);
                assert!(r.total_cost.is_finite() && r.total_cost > 0.0);
                assert!(r.latency <= 10.0 * (1.0 + 1e-9));
            }
        }
    }
}
