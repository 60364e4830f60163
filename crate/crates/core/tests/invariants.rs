use proptest::prelude::*;

use twinfl::scenario::{Scenario, Scheme};
use twinfl::{sim, Error};

fn scenario(seed: u64, scheme: Scheme, poison_ratio: f64) -> Scenario {
    Scenario {
        seed,
        scheme,
        poison_ratio,
        ..Scenario::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solved_rounds_are_deterministic_and_within_bounds(
        seed in 0u64..10_000,
        round in 0usize..5,
        scheme in prop::sample::select(vec![Scheme::Proposed, Scheme::NoDt, Scheme::Oma]),
    ) {
        let s = scenario(seed, scheme, 0.0);
        let first = sim::solve_round(&s, round);
        let second = sim::solve_round(&s, round);
        let (ids, a) = match (first, second) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(&x, &y);
                x
            }
            (Err(Error::Infeasible { .. }), Err(Error::Infeasible { .. })) => return Ok(()),
            (x, y) => return Err(TestCaseError::fail(format!("{x:?} vs {y:?}"))),
        };
        prop_assert_eq!(ids.len(), s.selected);
        let profiles = s.profiles(seed);
        let d = &a.decision;
        for c in &d.clients {
            let p = &profiles[c.id];
            prop_assert!(c.power >= p.p_min - 1e-12 && c.power <= p.p_max + 1e-12);
            prop_assert!(c.frequency >= p.f_min * (1.0 - 1e-12) && c.frequency <= p.f_max * (1.0 + 1e-12));
            prop_assert!(c.fraction >= 0.0 && c.fraction <= p.v_max + 1e-12);
            prop_assert!(c.alpha >= 0.0);
        }
        let r = &a.report;
        let t = r.clients.iter().map(|c| c.round_time()).fold(0.0, f64::max);
        let e: f64 = r.clients.iter().map(|c| c.e_cmp + c.e_com).sum();
        prop_assert!((r.latency - t).abs() <= 1e-12 * t);
        prop_assert!((r.energy - e).abs() <= 1e-12 * e);
        prop_assert!(r.latency <= s.t_max * (1.0 + 1e-9));
    }

    #[test]
    fn simulations_are_reproducible(seed in 0u64..10_000) {
        let s = Scenario { rounds: 2, ..scenario(seed, Scheme::Proposed, 0.3) };
        let a = sim::run_simulation(&s).unwrap();
        let b = sim::run_simulation(&s).unwrap();
        prop_assert_eq!(a, b);
    }
}
