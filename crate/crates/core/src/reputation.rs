//! Reputation bookkeeping and top-N client selection.
//!
//! A client's reputation mixes three factors: its accuracy contribution (a
//! Weibull curve in its data amount), its normalised model staleness, and
//! the fraction of its past updates that passed screening.

use crate::cost::{AcParams, ClientProfile};
use crate::error::{invalid, Error, Result};

/// PI degree assumed for a client with no screening history.
pub const DEFAULT_PI_PRIOR: f64 = 0.5;

/// Factor weights `(xi_1, xi_2, xi_3)` for AC, MS and PI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub ac: f64,
    pub ms: f64,
    pub pi: f64,
}

impl Weights {
    /// AC 0.3, MS 0.5, PI 0.2.
    pub const PROPOSED: Weights = Weights {
        ac: 0.3,
        ms: 0.5,
        pi: 0.2,
    };
    /// AC and MS only, equally weighted.
    pub const BENCHMARK: Weights = Weights {
        ac: 0.5,
        ms: 0.5,
        pi: 0.0,
    };

    pub fn new(ac: f64, ms: f64, pi: f64) -> Result<Self> {
        let w = Weights { ac, ms, pi };
        if [ac, ms, pi].iter().any(|x| !(x.is_finite() && *x >= 0.0)) || ac + ms + pi <= 0.0 {
            return Err(invalid(
                "reputation weights must be nonnegative with a positive sum",
            ));
        }
        Ok(w)
    }

    pub fn sum(&self) -> f64 {
        self.ac + self.ms + self.pi
    }
}

/// Screening verdict for one submitted update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Positive,
    Negative,
}

/// `w1 - w2 exp(-w3 (D + eps))`.
pub fn accuracy_contribution(ac: AcParams, data_size: f64, epsilon: f64) -> f64 {
    ac.w1 - ac.w2 * (-ac.w3 * (data_size + epsilon)).exp()
}

/// `I_PI / (I_PI + I_NI)`, or `prior` when there is no history.
pub fn pi_degree(positive: u32, negative: u32, prior: f64) -> f64 {
    let total = positive + negative;
    if total == 0 {
        prior
    } else {
        positive as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientRecord {
    pub id: usize,
    pub ac: f64,
    pub ms: u64,
    pub positive: u32,
    pub negative: u32,
    pub last_selected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReputationState {
    clients: Vec<ClientRecord>,
    weights: Weights,
    pi_prior: f64,
    round: usize,
}

impl ReputationState {
    /// Every client starts with staleness 1 and an empty screening history.
    pub fn new(
        profiles: &[ClientProfile],
        epsilon: f64,
        weights: Weights,
        pi_prior: f64,
    ) -> Result<Self> {
        if profiles.is_empty() {
            return Err(invalid("at least one client required"));
        }
        if !(0.0..=1.0).contains(&pi_prior) {
            return Err(invalid("PI prior must lie in [0, 1]"));
        }
        for p in profiles {
            if !(p.ac.w2 >= 0.0 && p.ac.w3 > 0.0) {
                return Err(invalid(format!(
                    "client {}: AC parameters need w2 >= 0, w3 > 0",
                    p.id
                )));
            }
        }
        let clients = profiles
            .iter()
            .map(|p| ClientRecord {
                id: p.id,
                ac: accuracy_contribution(p.ac, p.data_size, epsilon),
                ms: 1,
                positive: 0,
                negative: 0,
                last_selected: None,
            })
            .collect();
        Ok(Self {
            clients,
            weights,
            pi_prior,
            round: 0,
        })
    }

    pub fn clients(&self) -> &[ClientRecord] {
        &self.clients
    }

    pub fn weights(&self) -> Weights {
        self.weights
    }

    pub fn round(&self) -> usize {
        self.round
    }

    fn index(&self, id: usize) -> Result<usize> {
        self.clients
            .iter()
            .position(|c| c.id == id)
            .ok_or(Error::UnknownClient(id))
    }

    pub fn record(&self, id: usize) -> Result<&ClientRecord> {
        Ok(&self.clients[self.index(id)?])
    }

    /// Closes a round: selected clients reset to staleness 1, the rest age by one.
    pub fn update_staleness(&mut self, selected: &[usize]) -> Result<()> {
        let idx = selected
            .iter()
            .map(|&id| self.index(id))
            .collect::<Result<Vec<_>>>()?;
        for (i, c) in self.clients.iter_mut().enumerate() {
            if idx.contains(&i) {
                c.ms = 1;
                c.last_selected = Some(self.round);
            } else {
                c.ms += 1;
            }
        }
        self.round += 1;
        Ok(())
    }

    pub fn record_verdict(&mut self, id: usize, verdict: Verdict) -> Result<()> {
        let i = self.index(id)?;
        match verdict {
            Verdict::Positive => self.clients[i].positive += 1,
            Verdict::Negative => self.clients[i].negative += 1,
        }
        Ok(())
    }

    /// Staleness of every client divided by the population total.
    pub fn normalized_staleness(&self) -> Vec<f64> {
        let total: u64 = self.clients.iter().map(|c| c.ms).sum();
        self.clients
            .iter()
            .map(|c| c.ms as f64 / total as f64)
            .collect()
    }

    pub fn pi_degree_of(&self, id: usize) -> Result<f64> {
        let c = self.record(id)?;
        Ok(pi_degree(c.positive, c.negative, self.pi_prior))
    }

    pub fn reputation(&self, id: usize) -> Result<f64> {
        let i = self.index(id)?;
        Ok(self.scores()[i])
    }

    /// Reputation of every client, in client order.
    pub fn scores(&self) -> Vec<f64> {
        let ms = self.normalized_staleness();
        let w = self.weights;
        self.clients
            .iter()
            .zip(ms)
            .map(|(c, ms)| {
                w.ac * c.ac + w.ms * ms + w.pi * pi_degree(c.positive, c.negative, self.pi_prior)
            })
            .collect()
    }

    /// The `n` highest-reputation clients, ties broken by ascending id.
    pub fn select_top_n(&self, n: usize) -> Result<Vec<usize>> {
        self.select_top_n_excluding(n, &[])
    }

    /// As [`select_top_n`](Self::select_top_n) but never returns ids in `excluded`.
    pub fn select_top_n_excluding(&self, n: usize, excluded: &[usize]) -> Result<Vec<usize>> {
        let available = self
            .clients
            .iter()
            .filter(|c| !excluded.contains(&c.id))
            .count();
        if n == 0 || n > available {
            return Err(invalid(format!(
                "cannot select {n} of {available} available clients"
            )));
        }
        let scores = self.scores();
        let mut ranked: Vec<(usize, f64)> = self
            .clients
            .iter()
            .zip(scores)
            .filter(|(c, _)| !excluded.contains(&c.id))
            .map(|(c, z)| (c.id, z))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(ranked.into_iter().take(n).map(|(id, _)| id).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn profiles(m: usize) -> Vec<ClientProfile> {
        (0..m)
            .map(|id| ClientProfile {
                id,
                data_size: 1000.0,
                cycles_per_sample: 1e7,
                f_min: 1e9,
                f_max: 1e10,
                p_min: 0.01,
                p_max: 0.1,
                v_max: 0.5,
                model_bits: 1e6,
                honest: true,
                ac: AcParams::default(),
            })
            .collect()
    }

    #[test]
    fn weibull_contribution() {
        let ac = AcParams {
            w1: 1.0,
            w2: 1.0,
            w3: 1e-4,
        };
        assert_relative_eq!(
            accuracy_contribution(ac, 1000.0, 0.0),
            1.0 - (-0.1f64).exp(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            accuracy_contribution(ac, 1000.0, 0.0),
            0.09516,
            max_relative = 1e-4
        );
        assert_relative_eq!(accuracy_contribution(ac, 1e9, 0.0), 1.0);
        assert_eq!(accuracy_contribution(ac, 0.0, 0.0), 0.0);
    }

    #[test]
    fn staleness_transitions() {
        let mut s = ReputationState::new(&profiles(3), 0.0, Weights::PROPOSED, 0.5).unwrap();
        s.update_staleness(&[]).unwrap();
        s.update_staleness(&[]).unwrap();
        assert!(s.clients().iter().all(|c| c.ms == 3));
        s.update_staleness(&[1]).unwrap();
        assert_eq!(s.record(1).unwrap().ms, 1);
        assert_eq!(s.record(0).unwrap().ms, 4);
        assert_eq!(s.record(1).unwrap().last_selected, Some(2));
        assert!(matches!(
            s.update_staleness(&[9]),
            Err(Error::UnknownClient(9))
        ));
    }

    #[test]
    fn normalized_staleness_values() {
        let mut s = ReputationState::new(&profiles(2), 0.0, Weights::PROPOSED, 0.5).unwrap();
        s.update_staleness(&[0]).unwrap();
        s.update_staleness(&[0]).unwrap();
        // ms = (1, 3)
        assert_eq!(s.normalized_staleness(), vec![0.25, 0.75]);
        let s = ReputationState::new(&profiles(4), 0.0, Weights::PROPOSED, 0.5).unwrap();
        assert_eq!(s.normalized_staleness(), vec![0.25; 4]);
        let s = ReputationState::new(&profiles(1), 0.0, Weights::PROPOSED, 0.5).unwrap();
        assert_eq!(s.normalized_staleness(), vec![1.0]);
    }

    #[test]
    fn pi_degree_values() {
        assert_eq!(pi_degree(3, 1, 0.5), 0.75);
        assert_eq!(pi_degree(7, 0, 0.5), 1.0);
        assert_eq!(pi_degree(0, 0, 0.5), 0.5);
        assert_eq!(pi_degree(0, 4, 0.5), 0.0);
    }

    #[test]
    fn weighted_score() {
        let w = Weights::PROPOSED;
        let z = w.ac * 0.5 + w.ms * 0.2 + w.pi * 1.0;
        assert_relative_eq!(z, 0.45, max_relative = 1e-12);

        let mut s =
            ReputationState::new(&profiles(2), 0.0, Weights::new(1.0, 0.0, 0.0).unwrap(), 0.5)
                .unwrap();
        s.update_staleness(&[1]).unwrap();
        assert_eq!(s.reputation(0).unwrap(), s.record(0).unwrap().ac);

        // benchmark weights ignore PI entirely
        let mut b = ReputationState::new(&profiles(2), 0.0, Weights::BENCHMARK, 0.5).unwrap();
        b.record_verdict(0, Verdict::Negative).unwrap();
        let ms = b.normalized_staleness();
        assert_relative_eq!(
            b.reputation(0).unwrap(),
            0.5 * b.record(0).unwrap().ac + 0.5 * ms[0]
        );
    }

    #[test]
    fn top_n_selection() {
        let mut s =
            ReputationState::new(&profiles(3), 0.0, Weights::new(0.0, 0.0, 1.0).unwrap(), 0.5)
                .unwrap();
        // PI degrees (0.9, 0.1, 0.5)
        for _ in 0..9 {
            s.record_verdict(0, Verdict::Positive).unwrap();
            s.record_verdict(1, Verdict::Negative).unwrap();
        }
        s.record_verdict(0, Verdict::Negative).unwrap();
        s.record_verdict(1, Verdict::Positive).unwrap();
        assert_eq!(s.select_top_n(2).unwrap(), vec![0, 2]);

        let s = ReputationState::new(&profiles(3), 0.0, Weights::PROPOSED, 0.5).unwrap();
        assert_eq!(s.select_top_n(2).unwrap(), vec![0, 1]);
        assert_eq!(s.select_top_n(3).unwrap(), vec![0, 1, 2]);
        assert!(s.select_top_n(4).is_err());
        assert_eq!(s.select_top_n_excluding(2, &[0]).unwrap(), vec![1, 2]);
    }

    #[test]
    fn negative_history_ranks_last() {
        let mut s = ReputationState::new(&profiles(2), 0.0, Weights::PROPOSED, 0.5).unwrap();
        s.record_verdict(0, Verdict::Negative).unwrap();
        s.record_verdict(1, Verdict::Positive).unwrap();
        assert_eq!(s.pi_degree_of(0).unwrap(), 0.0);
        assert_eq!(s.select_top_n(1).unwrap(), vec![1]);
    }

    proptest! {
        #[test]
        fn staleness_conservation(sel in prop::collection::vec(any::<bool>(), 8), rounds in 1usize..6) {
            let mut s = ReputationState::new(&profiles(8), 0.0, Weights::PROPOSED, 0.5).unwrap();
            for _ in 0..rounds {
                let before: Vec<u64> = s.clients().iter().map(|c| c.ms).collect();
                let chosen: Vec<usize> = (0..8).filter(|&i| sel[i]).collect();
                s.update_staleness(&chosen).unwrap();
                for (i, c) in s.clients().iter().enumerate() {
                    if sel[i] { prop_assert_eq!(c.ms, 1); } else { prop_assert_eq!(c.ms, before[i] + 1); }
                }
                let sum: f64 = s.normalized_staleness().iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn selection_invariant_to_weight_scale(
            j in -8i32..8,
            hist in prop::collection::vec((0u32..5, 0u32..5), 6),
            picks in prop::collection::vec(0usize..6, 0..4),
            n in 1usize..6,
        ) {
            // powers of two scale exactly, so genuine ties stay ties
            let k = 2f64.powi(j);
            let w = Weights::PROPOSED;
            let scaled = Weights::new(w.ac * k, w.ms * k, w.pi * k).unwrap();
            let mut a = ReputationState::new(&profiles(6), 0.0, w, 0.5).unwrap();
            for (i, &(p, q)) in hist.iter().enumerate() {
                for _ in 0..p { a.record_verdict(i, Verdict::Positive).unwrap(); }
                for _ in 0..q { a.record_verdict(i, Verdict::Negative).unwrap(); }
            }
            a.update_staleness(&picks).unwrap();
            let mut b = a.clone();
            b.weights = scaled;
            prop_assert_eq!(a.select_top_n(n).unwrap(), b.select_top_n(n).unwrap());
        }

        #[test]
        fn ac_monotone(d1 in 0.0f64..1e5, d2 in 0.0f64..1e5) {
            let ac = AcParams::default();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(accuracy_contribution(ac, lo, 0.0) <= accuracy_contribution(ac, hi, 0.0));
        }
    }
}
