//! Experiment configuration as flat `key = value` text.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::{self, MIN_DISTANCE_M};
use crate::cost::{AcParams, ClientProfile, ServerProfile};
use crate::error::{Error, Result};
use crate::fl::{Distribution, MixtureSpec, TrainSettings};
use crate::reputation::Weights;
use crate::rng::stream;
use crate::solver::{Instance, Uplink};

/// Resource-allocation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Equilibrium of the allocation game over NOMA.
    Proposed,
    /// No twin: all data trained locally.
    NoDt,
    /// The proposed allocation over an equal FDMA split.
    Oma,
    /// Clients with unlimited computing: only transmission costs.
    Ideal,
    /// Uniform random decisions within the bounds.
    Random,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Proposed,
        Scheme::NoDt,
        Scheme::Oma,
        Scheme::Ideal,
        Scheme::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::NoDt => "no_dt",
            Scheme::Oma => "oma",
            Scheme::Ideal => "ideal",
            Scheme::Random => "random",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetChoice {
    Synthetic,
    /// Directory holding `train-images-idx3-ubyte` and `train-labels-idx1-ubyte`.
    Mnist(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub clients: usize,
    pub selected: usize,
    pub radius: f64,
    pub bandwidth: f64,
    pub noise_density: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub cycles_per_sample: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub f_server: f64,
    pub t_max: f64,
    pub model_bits: f64,
    pub kappa: f64,
    pub data_size: usize,
    pub v_max_lo: f64,
    pub v_max_hi: f64,
    /// Twin size deviation in samples.
    pub epsilon: f64,
    /// Amplitude of the feature noise on twin copies.
    pub dt_deviation: f64,
    pub ac: AcParams,
    pub weights: Weights,
    pub pi_prior: f64,
    pub roni: bool,
    pub roni_threshold: f64,
    pub poison_ratio: f64,
    pub dataset: DatasetChoice,
    pub distribution: Distribution,
    pub mixture: MixtureSpec,
    pub validation_size: usize,
    pub test_size: usize,
    pub train: TrainSettings,
    pub scheme: Scheme,
    pub rounds: usize,
    pub seed: u64,
    /// Seeds per point in cost sweeps.
    pub sweep_seeds: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            clients: 20,
            selected: 5,
            radius: 500.0,
            bandwidth: 1e6,
            noise_density: channel::NOISE_DENSITY_DBM_HZ,
            p_min: 0.01,
            p_max: 0.1,
            cycles_per_sample: 1e7,
            f_min: 1e9,
            f_max: 1e10,
            f_server: 1e11,
            t_max: 10.0,
            model_bits: 1e6,
            kappa: crate::cost::DEFAULT_KAPPA,
            data_size: 1000,
            v_max_lo: 0.2,
            v_max_hi: 0.6,
            epsilon: 0.0,
            dt_deviation: 0.0,
            ac: AcParams::default(),
            weights: Weights::PROPOSED,
            pi_prior: crate::reputation::DEFAULT_PI_PRIOR,
            roni: true,
            roni_threshold: 0.02,
            poison_ratio: 0.0,
            dataset: DatasetChoice::Synthetic,
            distribution: Distribution::Iid,
            mixture: MixtureSpec::default(),
            validation_size: 1000,
            test_size: 2000,
            train: TrainSettings::default(),
            scheme: Scheme::Proposed,
            rounds: 50,
            seed: 0,
            sweep_seeds: 20,
        }
    }
}

/// Recognised keys with a one-line description each.
pub const KEYS: &[(&str, &str)] = &[
    ("clients", "number of clients M"),
    ("selected", "clients selected per round N"),
    ("radius", "cell radius in m"),
    ("bandwidth", "uplink bandwidth B in Hz"),
    ("noise_density", "noise spectral density in dBm/Hz"),
    ("p_min", "minimum transmit power in W"),
    ("p_max", "maximum transmit power in W"),
    ("cycles_per_sample", "CPU cycles per sample"),
    ("f_min", "minimum client CPU frequency in Hz"),
    ("f_max", "maximum client CPU frequency in Hz"),
    ("f_server", "server CPU frequency in Hz"),
    ("t_max", "round deadline in s"),
    ("model_bits", "model upload size in bits"),
    ("kappa", "effective switched capacitance"),
    ("data_size", "samples per client"),
    ("v_max_lo", "lower end of the per-client twin fraction cap"),
    ("v_max_hi", "upper end of the per-client twin fraction cap"),
    ("epsilon", "twin size deviation in samples"),
    ("dt_deviation", "feature noise amplitude on twin copies"),
    ("ac", "accuracy-contribution parameters w1,w2,w3"),
    ("weights", "reputation weights for AC,MS,PI"),
    (
        "selection",
        "proposed (0.3,0.5,0.2 with RONI) or benchmark (0.5,0.5,0 without RONI)",
    ),
    ("pi_prior", "PI degree of a client with no history"),
    ("roni", "true or false"),
    (
        "roni_threshold",
        "accuracy drop that marks an update negative",
    ),
    ("poison_ratio", "fraction of label-flipping clients"),
    ("dataset", "synthetic or mnist"),
    (
        "mnist_dir",
        "directory with MNIST IDX files (implies dataset = mnist)",
    ),
    ("distribution", "iid or noniid"),
    (
        "labels_per_client",
        "labels per client in the non-IID split",
    ),
    ("classes", "classes of the synthetic task"),
    ("dim", "feature dimension of the synthetic task"),
    ("separation", "class-mean spread of the synthetic task"),
    (
        "scale_lo",
        "smallest feature standard deviation of the synthetic task",
    ),
    (
        "scale_hi",
        "largest feature standard deviation of the synthetic task",
    ),
    ("validation_size", "server validation samples for RONI"),
    ("test_size", "held-out test samples"),
    ("learning_rate", "SGD step size"),
    ("local_epochs", "epochs per local or twin update"),
    ("batch_size", "SGD minibatch size"),
    ("scheme", "proposed, no_dt, oma, ideal or random"),
    ("rounds", "FL rounds"),
    ("seed", "run seed"),
    ("sweep_seeds", "seeds per point in cost sweeps"),
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn triple(key: &str, value: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "{key}: expected three comma-separated numbers"
        )));
    }
    Ok([
        num(key, parts[0])?,
        num(key, parts[1])?,
        num(key, parts[2])?,
    ])
}

impl Scenario {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "clients" => self.clients = num(key, value)?,
            "selected" => self.selected = num(key, value)?,
            "radius" => self.radius = num(key, value)?,
            "bandwidth" => self.bandwidth = num(key, value)?,
            "noise_density" => self.noise_density = num(key, value)?,
            "p_min" => self.p_min = num(key, value)?,
            "p_max" => self.p_max = num(key, value)?,
            "cycles_per_sample" => self.cycles_per_sample = num(key, value)?,
            "f_min" => self.f_min = num(key, value)?,
            "f_max" => self.f_max = num(key, value)?,
            "f_server" => self.f_server = num(key, value)?,
            "t_max" => self.t_max = num(key, value)?,
            "model_bits" => self.model_bits = num(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "data_size" => self.data_size = num(key, value)?,
            "v_max_lo" => self.v_max_lo = num(key, value)?,
            "v_max_hi" => self.v_max_hi = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "dt_deviation" => self.dt_deviation = num(key, value)?,
            "ac" => {
                let [w1, w2, w3] = triple(key, value)?;
                self.ac = AcParams { w1, w2, w3 };
            }
            "weights" => {
                let [a, m, p] = triple(key, value)?;
                self.weights = Weights::new(a, m, p).map_err(|e| Error::Config(e.to_string()))?;
            }
            "selection" => match value {
                "proposed" => {
                    self.weights = Weights::PROPOSED;
                    self.roni = true;
                }
                "benchmark" => {
                    self.weights = Weights::BENCHMARK;
                    self.roni = false;
                }
                _ => return Err(Error::Config(format!("selection: unknown value '{value}'"))),
            },
            "pi_prior" => self.pi_prior = num(key, value)?,
            "roni" => self.roni = num(key, value)?,
            "roni_threshold" => self.roni_threshold = num(key, value)?,
            "poison_ratio" => self.poison_ratio = num(key, value)?,
            "dataset" => match value {
                "synthetic" => self.dataset = DatasetChoice::Synthetic,
                "mnist" => {
                    if !matches!(self.dataset, DatasetChoice::Mnist(_)) {
                        self.dataset = DatasetChoice::Mnist(PathBuf::from("."));
                    }
                }
                _ => return Err(Error::Config(format!("dataset: unknown value '{value}'"))),
            },
            "mnist_dir" => self.dataset = DatasetChoice::Mnist(PathBuf::from(value)),
            "distribution" => match value {
                "iid" => self.distribution = Distribution::Iid,
                "noniid" => {
                    if self.distribution == Distribution::Iid {
                        self.distribution = Distribution::NonIid {
                            labels_per_client: 5,
                        };
                    }
                }
                _ => {
                    return Err(Error::Config(format!(
                        "distribution: unknown value '{value}'"
                    )))
                }
            },
            "labels_per_client" => {
                self.distribution = Distribution::NonIid {
                    labels_per_client: num(key, value)?,
                };
            }
            "classes" => self.mixture.classes = num(key, value)?,
            "dim" => self.mixture.dim = num(key, value)?,
            "separation" => self.mixture.separation = num(key, value)?,
            "scale_lo" => self.mixture.scale_lo = num(key, value)?,
            "scale_hi" => self.mixture.scale_hi = num(key, value)?,
            "validation_size" => self.validation_size = num(key, value)?,
            "test_size" => self.test_size = num(key, value)?,
            "learning_rate" => self.train.learning_rate = num(key, value)?,
            "local_epochs" => self.train.epochs = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "scheme" => self.scheme = value.parse()?,
            "rounds" => self.rounds = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "sweep_seeds" => self.sweep_seeds = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = Scenario::default();
        s.apply_text(text)?;
        Ok(s)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// `key=value` override as given on the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{kv}'")))?;
        self.set(k, v)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.clients == 0 || self.selected == 0 || self.selected > self.clients {
            return bad("need 1 <= selected <= clients");
        }
        let positive = [
            self.radius,
            self.bandwidth,
            self.p_min,
            self.p_max,
            self.cycles_per_sample,
            self.f_min,
            self.f_max,
            self.f_server,
            self.t_max,
            self.kappa,
        ];
        if positive.iter().any(|x| !(*x > 0.0 && x.is_finite())) || !(self.model_bits >= 0.0) {
            return bad("physical constants must be positive");
        }
        if self.p_min > self.p_max || self.f_min > self.f_max {
            return bad("need p_min <= p_max and f_min <= f_max");
        }
        if !(0.0 <= self.v_max_lo && self.v_max_lo <= self.v_max_hi && self.v_max_hi <= 1.0) {
            return bad("need 0 <= v_max_lo <= v_max_hi <= 1");
        }
        if !(0.0..=1.0).contains(&self.poison_ratio) {
            return bad("poison_ratio must lie in [0, 1]");
        }
        if !(self.epsilon >= 0.0) || !(self.dt_deviation >= 0.0) || self.data_size == 0 {
            return bad("need epsilon >= 0, dt_deviation >= 0 and data_size >= 1");
        }
        if !(0.0..=1.0).contains(&self.pi_prior) || !(self.roni_threshold >= 0.0) {
            return bad("need pi_prior in [0, 1] and roni_threshold >= 0");
        }
        if self.validation_size == 0 && self.roni {
            return bad("RONI needs a validation set");
        }
        Ok(())
    }

    /// Canonical dump of every key, parseable by [`Scenario::from_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("clients", self.clients.to_string());
        put("selected", self.selected.to_string());
        put("radius", self.radius.to_string());
        put("bandwidth", self.bandwidth.to_string());
        put("noise_density", self.noise_density.to_string());
        put("p_min", self.p_min.to_string());
        put("p_max", self.p_max.to_string());
        put("cycles_per_sample", self.cycles_per_sample.to_string());
        put("f_min", self.f_min.to_string());
        put("f_max", self.f_max.to_string());
        put("f_server", self.f_server.to_string());
        put("t_max", self.t_max.to_string());
        put("model_bits", self.model_bits.to_string());
        put("kappa", self.kappa.to_string());
        put("data_size", self.data_size.to_string());
        put("v_max_lo", self.v_max_lo.to_string());
        put("v_max_hi", self.v_max_hi.to_string());
        put("epsilon", self.epsilon.to_string());
        put("dt_deviation", self.dt_deviation.to_string());
        put(
            "ac",
            format!("{},{},{}", self.ac.w1, self.ac.w2, self.ac.w3),
        );
        put(
            "weights",
            format!(
                "{},{},{}",
                self.weights.ac, self.weights.ms, self.weights.pi
            ),
        );
        put("pi_prior", self.pi_prior.to_string());
        put("roni", self.roni.to_string());
        put("roni_threshold", self.roni_threshold.to_string());
        put("poison_ratio", self.poison_ratio.to_string());
        match &self.dataset {
            DatasetChoice::Synthetic => put("dataset", "synthetic".into()),
            DatasetChoice::Mnist(p) => put("mnist_dir", p.display().to_string()),
        }
        match self.distribution {
            Distribution::Iid => put("distribution", "iid".into()),
            Distribution::NonIid { labels_per_client } => {
                put("labels_per_client", labels_per_client.to_string())
            }
        }
        put("classes", self.mixture.classes.to_string());
        put("dim", self.mixture.dim.to_string());
        put("separation", self.mixture.separation.to_string());
        put("scale_lo", self.mixture.scale_lo.to_string());
        put("scale_hi", self.mixture.scale_hi.to_string());
        put("validation_size", self.validation_size.to_string());
        put("test_size", self.test_size.to_string());
        put("learning_rate", self.train.learning_rate.to_string());
        put("local_epochs", self.train.epochs.to_string());
        put("batch_size", self.train.batch_size.to_string());
        put("scheme", self.scheme.to_string());
        put("rounds", self.rounds.to_string());
        put("seed", self.seed.to_string());
        put("sweep_seeds", self.sweep_seeds.to_string());
        out
    }

    pub fn server(&self) -> ServerProfile {
        ServerProfile {
            f_server: self.f_server,
            dt_deviation: self.epsilon,
            t_max: self.t_max,
            kappa: self.kappa,
        }
    }

    pub fn noise_power(&self) -> f64 {
        channel::noise_power(self.noise_density, self.bandwidth)
    }

    /// Static per-client parameters for one seed. Twin caps are drawn
    /// uniformly from `[v_max_lo, v_max_hi]`; `round(poison_ratio * M)`
    /// randomly chosen clients are dishonest.
    pub fn profiles(&self, seed: u64) -> Vec<ClientProfile> {
        let mut rng = stream(seed, &[TAG_PROFILES]);
        let caps: Vec<f64> = (0..self.clients)
            .map(|_| {
                if self.v_max_hi > self.v_max_lo {
                    rng.random_range(self.v_max_lo..=self.v_max_hi)
                } else {
                    self.v_max_lo
                }
            })
            .collect();
        let mut ids: Vec<usize> = (0..self.clients).collect();
        ids.shuffle(&mut stream(seed, &[TAG_POISONERS]));
        let bad = (self.poison_ratio * self.clients as f64).round() as usize;
        let poisoners = &ids[..bad];
        (0..self.clients)
            .map(|id| ClientProfile {
                id,
                data_size: self.data_size as f64,
                cycles_per_sample: self.cycles_per_sample,
                f_min: self.f_min,
                f_max: self.f_max,
                p_min: self.p_min,
                p_max: self.p_max,
                v_max: caps[id],
                model_bits: self.model_bits,
                honest: !poisoners.contains(&id),
                ac: self.ac,
            })
            .collect()
    }

    /// Client distances, uniform over the disc.
    pub fn distances(&self, seed: u64) -> Vec<f64> {
        channel::sample_distances(
            self.clients,
            self.radius,
            &mut stream(seed, &[TAG_POSITIONS]),
        )
    }

    /// Block-fading gains of every client in `round`.
    pub fn gains(&self, seed: u64, distances: &[f64], round: usize) -> Result<Vec<f64>> {
        let mut rng = stream(seed, &[TAG_FADING, round as u64]);
        let state = channel::sample_gains(distances, self.bandwidth, &mut rng)?;
        Ok(state.gains().iter().map(|g| g.gain).collect())
    }

    /// Allocation instance for the selected clients.
    pub fn instance(
        &self,
        profiles: &[ClientProfile],
        gains: &[f64],
        selected: &[usize],
        uplink: Uplink,
    ) -> Instance {
        Instance {
            clients: selected.iter().map(|&i| profiles[i].clone()).collect(),
            gains: selected.iter().map(|&i| gains[i]).collect(),
            server: self.server(),
            bandwidth: self.bandwidth,
            noise_power: self.noise_power(),
            uplink,
        }
    }
}

const TAG_PROFILES: u64 = 10;
const TAG_POISONERS: u64 = 11;
const TAG_POSITIONS: u64 = 12;
const TAG_FADING: u64 = 13;

/// Smallest distance any client can have.
pub const MIN_DISTANCE: f64 = MIN_DISTANCE_M;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let s = Scenario::default();
        s.validate().unwrap();
        assert_eq!(Scenario::from_text(&s.to_text()).unwrap(), s);
        assert_eq!(
            (s.clients, s.selected, s.bandwidth, s.t_max),
            (20, 5, 1e6, 10.0)
        );
    }

    #[test]
    fn parses_and_overrides() {
        let mut s =
            Scenario::from_text("# comment\nselected = 3\nscheme = oma\nselection = benchmark\n")
                .unwrap();
        assert_eq!(s.selected, 3);
        assert_eq!(s.scheme, Scheme::Oma);
        assert_eq!(s.weights, Weights::BENCHMARK);
        assert!(!s.roni);
        s.apply_override("bandwidth=2e6").unwrap();
        assert_eq!(s.bandwidth, 2e6);
        assert!(s.apply_override("nope=1").is_err());
        assert!(Scenario::from_text("selected 3").is_err());
        assert!(Scenario::from_text("scheme = fast").is_err());
        let mut bad = Scenario::default();
        bad.selected = 30;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn profiles_are_seeded() {
        let s = Scenario {
            poison_ratio: 0.3,
            ..Scenario::default()
        };
        let a = s.profiles(4);
        assert_eq!(a, s.profiles(4));
        assert_eq!(a.iter().filter(|p| !p.honest).count(), 6);
        assert!(a.iter().all(|p| (0.2..=0.6).contains(&p.v_max)));
        assert_ne!(a, s.profiles(5));
        let d = s.distances(4);
        assert!(d.iter().all(|&x| (MIN_DISTANCE..=500.0).contains(&x)));
        assert_eq!(s.gains(4, &d, 2).unwrap(), s.gains(4, &d, 2).unwrap());
        assert_ne!(s.gains(4, &d, 2).unwrap(), s.gains(4, &d, 3).unwrap());
    }
}
