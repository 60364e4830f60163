//! Federated learning with twin-side training, label-flipping clients and
//! reject-on-negative-influence screening.

pub mod data;
pub mod mnist;
pub mod model;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

pub use data::{Dataset, Distribution, GaussianMixture, MixtureSpec};
pub use model::ModelParams;

use crate::error::{invalid, Error, Result};
use crate::reputation::Verdict;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 5,
            batch_size: 10,
        }
    }
}

/// Samples of a client of size `size` mapped to its twin at fraction `v`.
pub fn mapped_count(size: usize, v: f64) -> usize {
    ((v * size as f64).round() as usize).min(size)
}

/// Minibatch SGD on `data` from `model`; batches are reshuffled every epoch.
pub fn sgd<R: Rng + ?Sized>(
    model: &ModelParams,
    data: &Dataset,
    settings: &TrainSettings,
    rng: &mut R,
) -> ModelParams {
    let mut w = model.clone();
    if data.is_empty() || settings.learning_rate == 0.0 {
        return w;
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; w.dim()];
    let mut buf = vec![0.0; w.classes()];
    let batch = settings.batch_size.max(1);
    for _ in 0..settings.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                w.accumulate_gradient(data.row(i), data.label(i), scale, &mut grad, &mut buf);
            }
            for (wi, g) in w.weights_mut().iter_mut().zip(&grad) {
                *wi -= settings.learning_rate * g;
            }
        }
    }
    w
}

/// Local update on the share a client keeps, i.e. all but the first
/// `round(v D)` samples. `None` when nothing is left locally.
pub fn local_train<R: Rng + ?Sized>(
    model: &ModelParams,
    data: &Dataset,
    v: f64,
    settings: &TrainSettings,
    rng: &mut R,
) -> Option<ModelParams> {
    let k = mapped_count(data.len(), v);
    if k == data.len() {
        return None;
    }
    Some(sgd(model, &data.slice(k..data.len()), settings, rng))
}

/// The twin's copy of a client: the first `round(v D)` samples with each
/// feature shifted by `deviation * u`, plus `round(eps)` extra copies
/// resampled from it. `noise` must hold at least `D * dim` values.
pub fn twin_dataset<R: Rng + ?Sized>(
    data: &Dataset,
    v: f64,
    epsilon: f64,
    deviation: f64,
    noise: &[f64],
    rng: &mut R,
) -> Result<Dataset> {
    if noise.len() < data.len() * data.dim() {
        return Err(invalid("not enough mapping noise for the client data"));
    }
    let k = mapped_count(data.len(), v);
    let base = if k > 0 {
        data.slice(0..k)
    } else {
        data.clone()
    };
    let source = data::perturb(&base, deviation, noise);
    let mut out = if k > 0 {
        source.clone()
    } else {
        Dataset::empty(data.dim(), data.classes())
    };
    let extra = epsilon.round().max(0.0) as usize;
    for _ in 0..extra {
        if source.is_empty() {
            break;
        }
        let i = rng.random_range(0..source.len());
        out.push(source.row(i), source.label(i));
    }
    Ok(out)
}

/// Twin-side training on the mapped data; an empty set leaves the model as is.
pub fn dt_train<R: Rng + ?Sized>(
    model: &ModelParams,
    mapped: &Dataset,
    settings: &TrainSettings,
    rng: &mut R,
) -> ModelParams {
    sgd(model, mapped, settings, rng)
}

/// One client's contribution to the aggregate.
#[derive(Debug, Clone, Copy)]
pub struct Contribution<'a> {
    pub id: usize,
    /// `None` only when the client kept no local samples.
    pub local: Option<&'a ModelParams>,
    pub data_size: usize,
    pub mapped: usize,
}

/// `w = (1/D) sum[(D_n - m_n) w_n + (m_n + eps) w_S]` with `D = sum D_n`,
/// where `m_n = round(v_n D_n)` samples live in the twin.
pub fn aggregate(
    parts: &[Contribution<'_>],
    twin: &ModelParams,
    epsilon: f64,
) -> Result<ModelParams> {
    let total: usize = parts.iter().map(|p| p.data_size).sum();
    if parts.is_empty() || total == 0 {
        return Err(invalid("aggregation needs a positive total data size"));
    }
    let d = total as f64;
    let mut out = vec![0.0; twin.dim()];
    let mut twin_weight = 0.0;
    for p in parts {
        let local = (p.data_size - p.mapped) as f64;
        if local > 0.0 {
            let w = p
                .local
                .ok_or_else(|| invalid(format!("client {} has local data but no update", p.id)))?;
            if !w.same_shape(twin) {
                return Err(invalid("model shapes differ"));
            }
            let a = local / d;
            for (o, x) in out.iter_mut().zip(w.weights()) {
                *o += a * x;
            }
        }
        twin_weight += (p.mapped as f64 + epsilon) / d;
    }
    for (o, x) in out.iter_mut().zip(twin.weights()) {
        *o += twin_weight * x;
    }
    ModelParams::from_weights(twin.features(), twin.classes(), out)
}

/// Aggregation inflation `1 + eps N / D`.
pub fn convergence_factor(epsilon: f64, clients: usize, total_data: f64) -> Result<f64> {
    if !(total_data > 0.0) {
        return Err(invalid("total data size must be positive"));
    }
    Ok(1.0 + epsilon * clients as f64 / total_data)
}

pub fn accuracy(model: &ModelParams, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data.rows().filter(|(x, y)| model.predict(x) == *y).count();
    hits as f64 / data.len() as f64
}

/// Negative influence when the model without the candidate beats the model
/// with it on the validation set by more than `threshold`.
pub fn roni_screen(
    without: &ModelParams,
    with: &ModelParams,
    validation: &Dataset,
    threshold: f64,
) -> Result<Verdict> {
    if validation.is_empty() {
        return Err(invalid("RONI needs a validation set"));
    }
    let drop = accuracy(without, validation) - accuracy(with, validation);
    Ok(if drop > threshold {
        Verdict::Negative
    } else {
        Verdict::Positive
    })
}

/// A participating client for one round.
#[derive(Debug, Clone, Copy)]
pub struct Participant<'a> {
    pub id: usize,
    pub data: &'a Dataset,
    /// Twin noise stream for this client.
    pub noise: &'a [f64],
    pub honest: bool,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundConfig {
    pub train: TrainSettings,
    pub epsilon: f64,
    pub deviation: f64,
    /// Whether the twin exists at all; without it `v` and `eps` play no role.
    pub twin: bool,
    /// RONI threshold, or `None` to accept every update.
    pub roni_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlRound {
    pub round: usize,
    pub selected: Vec<usize>,
    pub verdicts: Vec<(usize, Verdict)>,
    pub excluded: Vec<usize>,
    /// Per included client `(id, local weight, twin weight)` in the aggregate.
    pub weights: Vec<(usize, f64, f64)>,
    /// Sum of all aggregation weights; equals `gamma`.
    pub weight_sum: f64,
    pub gamma: f64,
    pub model: ModelParams,
    /// Every submitted local update, screened or not, in selection order.
    pub locals: Vec<(usize, Option<ModelParams>)>,
    pub twin: ModelParams,
}

/// One round of local training, twin training, screening and aggregation.
pub fn fl_round(
    global: &ModelParams,
    participants: &[Participant<'_>],
    validation: &Dataset,
    config: &RoundConfig,
    seed: u64,
    round: usize,
) -> Result<FlRound> {
    if participants.is_empty() {
        return Err(Error::EmptySelection);
    }
    let r = round as u64;
    let locals: Vec<Option<ModelParams>> = participants
        .par_iter()
        .map(|p| {
            let v = if config.twin { p.fraction } else { 0.0 };
            let mut rng = stream(seed, &[TAG_LOCAL, r, p.id as u64]);
            if p.honest {
                local_train(global, p.data, v, &config.train, &mut rng)
            } else {
                local_train(global, &data::poison(p.data), v, &config.train, &mut rng)
            }
        })
        .collect();

    let epsilon = if config.twin { config.epsilon } else { 0.0 };
    let (twin_model, mapped): (ModelParams, Vec<usize>) = if config.twin {
        let mut mapped_all = Dataset::empty(global.features(), global.classes());
        let mut counts = Vec::with_capacity(participants.len());
        for p in participants {
            let mut rng = stream(seed, &[TAG_TWIN_EXTRA, r, p.id as u64]);
            let set = twin_dataset(
                p.data,
                p.fraction,
                epsilon,
                config.deviation,
                p.noise,
                &mut rng,
            )?;
            mapped_all.extend(&set);
            counts.push(mapped_count(p.data.len(), p.fraction));
        }
        let mut rng = stream(seed, &[TAG_TWIN_TRAIN, r]);
        (
            dt_train(global, &mapped_all, &config.train, &mut rng),
            counts,
        )
    } else {
        (global.clone(), vec![0; participants.len()])
    };

    let parts: Vec<Contribution<'_>> = participants
        .iter()
        .zip(&locals)
        .zip(&mapped)
        .map(|((p, w), &m)| Contribution {
            id: p.id,
            local: w.as_ref(),
            data_size: p.data.len(),
            mapped: m,
        })
        .collect();

    let mut verdicts = Vec::new();
    let mut excluded = Vec::new();
    if let Some(threshold) = config.roni_threshold {
        // each submitted update is screened on its own against the incoming global model
        for p in &parts {
            let verdict = match p.local {
                Some(w) => roni_screen(global, w, validation, threshold)?,
                None => Verdict::Positive,
            };
            if verdict == Verdict::Negative {
                excluded.push(p.id);
            }
            verdicts.push((p.id, verdict));
        }
    }
    let kept: Vec<Contribution<'_>> = parts
        .iter()
        .copied()
        .filter(|c| !excluded.contains(&c.id))
        .collect();
    let (model, weights, weight_sum, gamma) = if kept.is_empty() {
        (global.clone(), Vec::new(), 0.0, 1.0)
    } else {
        let total: usize = kept.iter().map(|c| c.data_size).sum();
        let d = total as f64;
        let weights: Vec<(usize, f64, f64)> = kept
            .iter()
            .map(|c| {
                (
                    c.id,
                    (c.data_size - c.mapped) as f64 / d,
                    (c.mapped as f64 + epsilon) / d,
                )
            })
            .collect();
        let sum = weights.iter().map(|w| w.1 + w.2).sum();
        (
            aggregate(&kept, &twin_model, epsilon)?,
            weights,
            sum,
            convergence_factor(epsilon, kept.len(), d)?,
        )
    };
    Ok(FlRound {
        round,
        selected: participants.iter().map(|p| p.id).collect(),
        verdicts,
        excluded,
        weights,
        weight_sum,
        gamma,
        model,
        locals: participants
            .iter()
            .map(|p| p.id)
            .zip(locals.iter().cloned())
            .collect(),
        twin: twin_model,
    })
}

const TAG_LOCAL: u64 = 1;
const TAG_TWIN_EXTRA: u64 = 2;
const TAG_TWIN_TRAIN: u64 = 3;
