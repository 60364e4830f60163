//! NOMA uplink: block-fading channel gains, SIC decoding order, achievable
//! rates and transmission latency/energy.
//!
//! The server decodes the strongest client first and subtracts it, so a
//! client only sees interference from clients decoded after it. The
//! last-decoded client is interference-free.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{invalid, Error, Result};

/// Path-loss exponent of the large-scale fading law `|h|^2 = g * d^-3.76`.
pub const PATH_LOSS_EXPONENT: f64 = 3.76;
/// Thermal noise spectral density in dBm/Hz.
pub const NOISE_DENSITY_DBM_HZ: f64 = -174.0;
/// Closest distance a client can be placed from the server, in metres.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Noise power in watts for a spectral density in dBm/Hz over `bandwidth` Hz.
pub fn noise_power(density_dbm_hz: f64, bandwidth: f64) -> f64 {
    10f64.powf((density_dbm_hz - 30.0) / 10.0) * bandwidth
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientGain {
    pub id: usize,
    /// Squared channel magnitude `|h|^2`.
    pub gain: f64,
}

/// Per-round channel realisation seen by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    gains: Vec<ClientGain>,
    noise_power: f64,
    bandwidth: f64,
}

impl ChannelState {
    pub fn new(gains: Vec<ClientGain>, noise_power: f64, bandwidth: f64) -> Result<Self> {
        if !(noise_power > 0.0) {
            return Err(invalid("noise power must be positive"));
        }
        if !(bandwidth > 0.0) {
            return Err(invalid("bandwidth must be positive"));
        }
        for (i, g) in gains.iter().enumerate() {
            if !(g.gain > 0.0) || !g.gain.is_finite() {
                return Err(invalid(format!(
                    "channel gain of client {} must be positive",
                    g.id
                )));
            }
            if gains[..i].iter().any(|o| o.id == g.id) {
                return Err(invalid(format!("duplicate client id {}", g.id)));
            }
        }
        Ok(Self {
            gains,
            noise_power,
            bandwidth,
        })
    }

    /// Builds a state whose noise power follows the thermal density over `bandwidth`.
    pub fn with_thermal_noise(gains: Vec<ClientGain>, bandwidth: f64) -> Result<Self> {
        Self::new(
            gains,
            noise_power(NOISE_DENSITY_DBM_HZ, bandwidth),
            bandwidth,
        )
    }

    pub fn gains(&self) -> &[ClientGain] {
        &self.gains
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn gain(&self, id: usize) -> Result<f64> {
        self.gains
            .iter()
            .find(|g| g.id == id)
            .map(|g| g.gain)
            .ok_or(Error::UnknownClient(id))
    }

    /// Restricts the state to `ids`, keeping their order.
    pub fn subset(&self, ids: &[usize]) -> Result<Self> {
        let gains = ids
            .iter()
            .map(|&id| self.gain(id).map(|gain| ClientGain { id, gain }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gains,
            noise_power: self.noise_power,
            bandwidth: self.bandwidth,
        })
    }
}

/// SIC decoding order: gain descending, ties by ascending client id.
pub fn decoding_order(state: &ChannelState) -> Vec<usize> {
    let mut g = state.gains.clone();
    g.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.id.cmp(&b.id)));
    g.into_iter().map(|g| g.id).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitEntry {
    pub id: usize,
    /// Transmit power in watts.
    pub power: f64,
    /// Model payload in bits.
    pub payload_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmitPlan {
    entries: Vec<TransmitEntry>,
    decode_order: Vec<usize>,
}

impl TransmitPlan {
    pub fn new(entries: Vec<TransmitEntry>, decode_order: Vec<usize>) -> Result<Self> {
        if entries.len() != decode_order.len() {
            return Err(invalid("decode order must list every client exactly once"));
        }
        for (i, id) in decode_order.iter().enumerate() {
            if decode_order[..i].contains(id) || !entries.iter().any(|e| e.id == *id) {
                return Err(invalid(
                    "decode order must be a permutation of the plan's clients",
                ));
            }
        }
        for e in &entries {
            if !(e.power >= 0.0) || !(e.payload_bits >= 0.0) {
                return Err(invalid(format!(
                    "client {}: power and payload must be nonnegative",
                    e.id
                )));
            }
        }
        Ok(Self {
            entries,
            decode_order,
        })
    }

    /// Checks `p_min <= p <= p_max` for every entry.
    pub fn check_bounds(&self, p_min: f64, p_max: f64) -> Result<()> {
        match self
            .entries
            .iter()
            .find(|e| e.power < p_min || e.power > p_max)
        {
            Some(e) => Err(invalid(format!(
                "client {} power {} outside [{p_min}, {p_max}]",
                e.id, e.power
            ))),
            None => Ok(()),
        }
    }

    pub fn entries(&self) -> &[TransmitEntry] {
        &self.entries
    }

    pub fn decode_order(&self) -> &[usize] {
        &self.decode_order
    }

    pub fn entry(&self, id: usize) -> Result<&TransmitEntry> {
        self.entries
            .iter()
            .find(|e| e.id == id)
            .ok_or(Error::UnknownClient(id))
    }
}

/// Interference-plus-noise power seen by client `n` under SIC.
pub fn interference(state: &ChannelState, plan: &TransmitPlan, n: usize) -> Result<f64> {
    let pos = plan
        .decode_order
        .iter()
        .position(|&id| id == n)
        .ok_or(Error::UnknownClient(n))?;
    let mut acc = state.noise_power;
    for &j in &plan.decode_order[pos + 1..] {
        acc += plan.entry(j)?.power * state.gain(j)?;
    }
    Ok(acc)
}

/// Achievable rate of client `n` in bits/s.
pub fn rate(state: &ChannelState, plan: &TransmitPlan, n: usize) -> Result<f64> {
    let denom = interference(state, plan, n)?;
    if !(denom > 0.0) {
        return Err(invalid("non-positive interference-plus-noise power"));
    }
    let sinr = plan.entry(n)?.power * state.gain(n)? / denom;
    Ok(state.bandwidth * sinr.ln_1p() / std::f64::consts::LN_2)
}

/// Transmission latency (s) and energy (J) of client `n`.
pub fn transmit_cost(state: &ChannelState, plan: &TransmitPlan, n: usize) -> Result<(f64, f64)> {
    let e = plan.entry(n)?;
    if e.payload_bits == 0.0 {
        return Ok((0.0, 0.0));
    }
    let r = rate(state, plan, n)?;
    if !(r > 0.0) {
        return Err(Error::InfeasibleTransmission(n));
    }
    let t = e.payload_bits / r;
    Ok((t, e.power * t))
}

/// Gains from explicit small-scale fading powers: `|h|^2 = g * d^-3.76`.
pub fn gains_from_fading(distances: &[f64], fading: &[f64]) -> Result<Vec<ClientGain>> {
    if distances.len() != fading.len() {
        return Err(invalid("one fading value per client required"));
    }
    distances
        .iter()
        .zip(fading)
        .enumerate()
        .map(|(id, (&d, &g))| {
            if !(d > 0.0) {
                return Err(invalid(format!("client {id}: distance must be positive")));
            }
            if !(g > 0.0) {
                return Err(invalid(format!(
                    "client {id}: fading power must be positive"
                )));
            }
            Ok(ClientGain {
                id,
                gain: g * d.powf(-PATH_LOSS_EXPONENT),
            })
        })
        .collect()
}

/// Draws unit-mean exponential (Rayleigh power) fading for every client.
/// Client ids are the indices into `distances`.
pub fn sample_gains<R: Rng + ?Sized>(
    distances: &[f64],
    bandwidth: f64,
    rng: &mut R,
) -> Result<ChannelState> {
    let fading: Vec<f64> = distances
        .iter()
        .map(|_| {
            let g: f64 = Exp1.sample(rng);
            // Exp1 can return exactly 0 with vanishing probability.
            g.max(f64::MIN_POSITIVE)
        })
        .collect();
    ChannelState::with_thermal_noise(gains_from_fading(distances, &fading)?, bandwidth)
}

/// Uniform placement over a disc of `radius` metres centred on the server.
pub fn sample_distances<R: Rng + ?Sized>(count: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    (0..count)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>();
            (radius * u.sqrt()).max(MIN_DISTANCE_M)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(gains: &[(usize, f64)], noise: f64) -> ChannelState {
        let g = gains
            .iter()
            .map(|&(id, gain)| ClientGain { id, gain })
            .collect();
        ChannelState::new(g, noise, 1e6).unwrap()
    }

    fn plan(entries: &[(usize, f64)], order: Vec<usize>) -> TransmitPlan {
        let e = entries
            .iter()
            .map(|&(id, power)| TransmitEntry {
                id,
                power,
                payload_bits: 1e6,
            })
            .collect();
        TransmitPlan::new(e, order).unwrap()
    }

    #[test]
    fn order_is_gain_descending() {
        let s = state(&[(1, 4e-10), (2, 1e-10), (3, 9e-10)], 1e-15);
        assert_eq!(decoding_order(&s), vec![3, 1, 2]);
        let s = state(&[(5, 1e-10), (2, 1e-10), (7, 1e-10)], 1e-15);
        assert_eq!(decoding_order(&s), vec![2, 5, 7]);
        let s = state(&[(4, 1e-10)], 1e-15);
        assert_eq!(decoding_order(&s), vec![4]);
    }

    #[test]
    fn noise_from_density() {
        // 10^(-17.4 - 3) * 1e6 W
        assert_relative_eq!(
            noise_power(-174.0, 1e6),
            10f64.powf(-20.4) * 1e6,
            max_relative = 1e-12
        );
        assert_relative_eq!(noise_power(-174.0, 1e6), 3.981e-15, max_relative = 1e-3);
    }

    #[test]
    fn single_client_rate() {
        let sigma2 = noise_power(-174.0, 1e6);
        let s = state(&[(0, 1e-10)], sigma2);
        let p = plan(&[(0, 0.1)], vec![0]);
        let r = rate(&s, &p, 0).unwrap();
        // log2(1 + 0.1e-10 / 3.981e-15) = log2(2512.9)
        assert_relative_eq!(r, 1e6 * (1.0 + 1e-11 / sigma2).log2(), max_relative = 1e-12);
        assert_relative_eq!(r, 1.13e7, max_relative = 5e-3);

        let p0 = plan(&[(0, 0.0)], vec![0]);
        assert_eq!(rate(&s, &p0, 0).unwrap(), 0.0);
    }

    #[test]
    fn two_client_rate_sees_later_interference() {
        let sigma2 = 3.981e-15;
        let s = state(&[(1, 1e-10), (2, 1e-12)], sigma2);
        let p = plan(&[(1, 0.1), (2, 0.1)], vec![1, 2]);
        let i = interference(&s, &p, 1).unwrap();
        assert_relative_eq!(i, 1.0398e-13, max_relative = 1e-4);
        // brute-force SINR
        let sinr = 0.1 * 1e-10 / (0.1 * 1e-12 + sigma2);
        let r1 = rate(&s, &p, 1).unwrap();
        assert_relative_eq!(r1, 1e6 * (1.0 + sinr).log2(), max_relative = 1e-12);
        assert_relative_eq!(r1, 6.603e6, max_relative = 1e-3);
        // last decoded sees noise only
        assert_relative_eq!(interference(&s, &p, 2).unwrap(), sigma2);

        // a quieter second client: interference 1.398e-14
        let p = plan(&[(1, 0.1), (2, 0.01)], vec![1, 2]);
        assert_relative_eq!(
            interference(&s, &p, 1).unwrap(),
            1.3981e-14,
            max_relative = 1e-4
        );
        assert_relative_eq!(rate(&s, &p, 1).unwrap(), 9.48e6, max_relative = 1e-3);
    }

    #[test]
    fn sum_rate_matches_joint_capacity() {
        let sigma2 = 3.981e-15;
        let s = state(&[(1, 3e-10), (2, 2e-12)], sigma2);
        let p = plan(&[(1, 0.07), (2, 0.03)], vec![1, 2]);
        let sum = rate(&s, &p, 1).unwrap() + rate(&s, &p, 2).unwrap();
        let joint = 1e6 * (1.0 + (0.07 * 3e-10 + 0.03 * 2e-12) / sigma2).log2();
        assert_relative_eq!(sum, joint, max_relative = 1e-9);
    }

    #[test]
    fn transmit_cost_values() {
        // rate exactly 1e7 b/s: B=1e6, SINR = 2^10 - 1
        let s = state(&[(0, 1.0)], 0.1 / 1023.0);
        let p = plan(&[(0, 0.1)], vec![0]);
        let (t, e) = transmit_cost(&s, &p, 0).unwrap();
        assert_relative_eq!(t, 0.1, max_relative = 1e-12);
        assert_relative_eq!(e, 0.01, max_relative = 1e-12);

        let zero = TransmitPlan::new(
            vec![TransmitEntry {
                id: 0,
                power: 0.1,
                payload_bits: 0.0,
            }],
            vec![0],
        )
        .unwrap();
        assert_eq!(transmit_cost(&s, &zero, 0).unwrap(), (0.0, 0.0));

        let silent = plan(&[(0, 0.0)], vec![0]);
        assert!(matches!(
            transmit_cost(&s, &silent, 0),
            Err(Error::InfeasibleTransmission(0))
        ));
    }

    #[test]
    fn gains_follow_path_loss() {
        let g = gains_from_fading(&[1.0, 10.0], &[1.0, 1.0]).unwrap();
        assert_eq!(g[0].gain, 1.0);
        assert_relative_eq!(g[1].gain, 10f64.powf(-3.76), max_relative = 1e-12);
        assert!(gains_from_fading(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = [50.0, 120.0, 499.0];
        let a = sample_gains(&d, 1e6, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_gains(&d, 1e6, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let dist = sample_distances(100, 500.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(dist.iter().all(|&x| x >= MIN_DISTANCE_M && x <= 500.0));
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(ChannelState::new(vec![ClientGain { id: 0, gain: 0.0 }], 1e-15, 1e6).is_err());
        assert!(ChannelState::new(vec![ClientGain { id: 0, gain: 1.0 }], 0.0, 1e6).is_err());
        assert!(ChannelState::new(vec![ClientGain { id: 0, gain: 1.0 }], 1.0, 0.0).is_err());
        let e = vec![TransmitEntry {
            id: 0,
            power: 0.1,
            payload_bits: 1.0,
        }];
        assert!(TransmitPlan::new(e.clone(), vec![1]).is_err());
        assert!(TransmitPlan::new(e, vec![0, 0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn removing_interference_never_hurts(
                g in prop::collection::vec(1e-13f64..1e-8, 2..5),
                p in prop::collection::vec(0.01f64..0.1, 5),
            ) {
                let gains: Vec<_> = g.iter().enumerate().map(|(id, &gain)| ClientGain { id, gain }).collect();
                let s = ChannelState::with_thermal_noise(gains, 1e6).unwrap();
                let order = decoding_order(&s);
                let entries: Vec<_> = (0..g.len()).map(|id| TransmitEntry { id, power: p[id], payload_bits: 1e6 }).collect();
                let full = TransmitPlan::new(entries.clone(), order.clone()).unwrap();
                for n in 0..g.len() {
                    let alone: Vec<_> = entries.iter().map(|e| TransmitEntry { power: if e.id == n { e.power } else { 0.0 }, ..*e }).collect();
                    let alone = TransmitPlan::new(alone, order.clone()).unwrap();
                    prop_assert!(rate(&s, &alone, n).unwrap() >= rate(&s, &full, n).unwrap());
                }
            }

            #[test]
            fn rate_increasing_in_own_power(
                g1 in 1e-12f64..1e-8, g2 in 1e-12f64..1e-8,
                p in 0.01f64..0.09, dp in 1e-4f64..0.01, other in 0.01f64..0.1,
            ) {
                let s = ChannelState::with_thermal_noise(vec![ClientGain { id: 0, gain: g1 }, ClientGain { id: 1, gain: g2 }], 1e6).unwrap();
                let order = decoding_order(&s);
                let mk = |p0: f64| TransmitPlan::new(vec![
                    TransmitEntry { id: 0, power: p0, payload_bits: 1e6 },
                    TransmitEntry { id: 1, power: other, payload_bits: 1e6 },
                ], order.clone()).unwrap();
                prop_assert!(rate(&s, &mk(p + dp), 0).unwrap() > rate(&s, &mk(p), 0).unwrap());
            }
        }
    }
}
