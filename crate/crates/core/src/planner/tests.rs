use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::forecast::{exact_forecast, measure_errors, perturbed_forecast, ErrorProfile, ExactForecast, PerturbedForecast};
use crate::mdp::{RewardTable, TransitionKernel};
use crate::test_support::random_mdp;

/// All deterministic schedules of a tiny model.
fn all_schedules(mdp: &NonStationaryMdp) -> Vec<PolicySchedule> {
    let (ns, na, epochs) = (mdp.num_states(), mdp.num_actions(), mdp.horizon() + 1);
    let total = na.pow((ns * epochs) as u32);
    (0..total)
        .map(|mut code| {
            let mut slices = vec![vec![ActionId(0); ns]; epochs];
            for slice in slices.iter_mut() {
                for a in slice.iter_mut() {
                    *a = ActionId(code % na);
                    code /= na;
                }
            }
            PolicySchedule::new(ns, slices).unwrap()
        })
        .collect()
}

/// State 0 offers reward 0.3 and stays, or reward 0 and moves to state 1,
/// which pays 1 per step. State 2 is unused filler.
fn myopia_mdp() -> NonStationaryMdp {
    let kernel = TransitionKernel::from_rows(
        3,
        2,
        vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(2, 1.0)], vec![(2, 1.0)]],
    )
    .unwrap();
    let rewards = RewardTable::new(3, 2, vec![0.3, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
    NonStationaryMdp::stationary(kernel, rewards, 5).unwrap()
}

#[test]
fn oracle_matches_schedule_enumeration() {
    for seed in 0..5 {
        let mdp = random_mdp(seed, 2, 2, 2, 0.0);
        let oracle = solve_optimal(&mdp);
        for s0 in 0..2 {
            let best = all_schedules(&mdp)
                .iter()
                .map(|p| evaluate_policy_exact(&mdp, p, s0).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((oracle.optimal_return(s0) - best).abs() < 1e-12);
            assert!((evaluate_policy_exact(&mdp, &oracle.pi_star, s0).unwrap() - best).abs() < 1e-12);
        }
    }
}

#[test]
fn oracle_values_are_greedy_over_q() {
    let mdp = random_mdp(9, 4, 3, 7, 0.0);
    let oracle = solve_optimal(&mdp);
    assert_eq!(oracle.v_star.len(), 9);
    assert!(oracle.v_star[8].as_slice().iter().all(|&v| v == 0.0));
    for t in 0..=7 {
        for s in 0..4 {
            let q: Vec<f64> = (0..3).map(|a| oracle.q(t, s, a)).collect();
            let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(oracle.value(t, s), max);
            assert_eq!(q[oracle.pi_star.action(t, s).0], max);
        }
    }
}

#[test]
fn single_action_value_equals_oracle() {
    let mdp = random_mdp(4, 3, 1, 5, 0.0);
    let only = PolicySchedule::constant(6, 3, ActionId(0));
    let oracle = solve_optimal(&mdp);
    for s in 0..3 {
        assert_eq!(evaluate_policy_exact(&mdp, &only, s).unwrap(), oracle.value(0, s));
    }
    assert!(matches!(evaluate_policy_exact(&mdp, &only, 3), Err(Error::Index(_))));
}

#[test]
fn truncated_values_are_nested_backups() {
    let mdp = random_mdp(11, 4, 2, 9, 0.0);
    let oracle = solve_optimal(&mdp);
    for t in 0..=9 {
        for k in 0..=11 {
            let stack = psi_tilde(&mdp, t, k).unwrap();
            let last = (t + k).min(9);
            let composed = mdp.bellman_compose(t, last, &ValueVector::zeros(4)).unwrap();
            assert_eq!(stack[0].as_slice(), composed.as_slice());
            assert!(stack.last().unwrap().as_slice().iter().all(|&v| v == 0.0));
            if t + k >= 9 {
                assert_eq!(stack[0].as_slice(), oracle.v_star[t].as_slice());
            }
        }
    }
    assert!(matches!(psi_tilde(&mdp, 10, 0), Err(Error::Index(_))));
}

#[test]
fn exact_window_values_match_truth() {
    let mdp = random_mdp(12, 3, 3, 6, 0.0);
    for t in 0..=6 {
        for k in 0..=8 {
            let hat = psi_hat(&exact_forecast(&mdp, t, k).unwrap());
            let tilde = psi_tilde(&mdp, t, k).unwrap();
            assert_eq!(hat.len(), k + 2);
            for l in 0..tilde.len() {
                assert_eq!(hat[l].as_slice(), tilde[l].as_slice());
            }
            for v in &hat[tilde.len()..] {
                assert!(v.as_slice().iter().all(|&x| x == 0.0));
            }
        }
    }
}

#[test]
fn zero_lookahead_is_myopic() {
    let mdp = random_mdp(13, 4, 3, 4, 0.0);
    let w = exact_forecast(&mdp, 2, 0).unwrap();
    for s in 0..4 {
        let plan = mpdp_step(&w, s).unwrap();
        let r: Vec<f64> = (0..3).map(|a| mdp.rewards(2).get(s, a)).collect();
        let mut best = 0;
        for a in 1..3 {
            if r[a] > r[best] {
                best = a;
            }
        }
        assert_eq!(plan.action, ActionId(best));
    }
}

#[test]
fn full_lookahead_reproduces_oracle_actions() {
    let mdp = random_mdp(14, 4, 3, 6, 0.0);
    let oracle = solve_optimal(&mdp);
    for t in 0..=6 {
        let w = exact_forecast(&mdp, t, 6 - t).unwrap();
        let slice = mpdp_slice(&w);
        for s in 0..4 {
            let plan = mpdp_step(&w, s).unwrap();
            assert_eq!(plan.action, oracle.pi_star.action(t, s));
            assert_eq!(slice[s], plan.action);
            let max = plan.q_hat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(max, plan.psi_hat[0][s]);
            for a in 0..3 {
                assert_eq!(plan.q_hat[a], oracle.q(t, s, a));
            }
        }
    }
}

#[test]
fn lookahead_escapes_myopic_trap() {
    let mdp = myopia_mdp();
    let oracle = solve_optimal(&mdp);
    assert_eq!(oracle.pi_star.action(0, 0), ActionId(1));
    let k0 = mpdp_step(&exact_forecast(&mdp, 0, 0).unwrap(), 0).unwrap();
    assert_eq!(k0.action, ActionId(0));
    for k in 1..=5 {
        let plan = mpdp_step(&exact_forecast(&mdp, 0, k).unwrap(), 0).unwrap();
        assert_eq!(plan.action, ActionId(1));
    }
    assert!(matches!(mpdp_step(&exact_forecast(&mdp, 0, 1).unwrap(), 3), Err(Error::Index(_))));
}

#[test]
fn full_horizon_schedule_is_optimal() {
    for seed in 0..10 {
        let mdp = random_mdp(seed, 4, 2, 8, 0.0);
        let oracle = solve_optimal(&mdp);
        let schedule = mpdp_schedule(&mdp, &mut ExactForecast, 8).unwrap();
        assert_eq!(schedule, oracle.pi_star);
        for s in 0..4 {
            let v = evaluate_policy_exact(&mdp, &schedule, s).unwrap();
            assert!((v - oracle.optimal_return(s)).abs() <= 1e-9);
        }
    }
}

#[test]
fn policy_values_follow_backward_recursion() {
    let mdp = random_mdp(15, 3, 2, 5, 0.0);
    let schedule = PolicySchedule::from_fn(6, 3, |t, s| ActionId((t + s) % 2));
    let values = policy_values(&mdp, &schedule).unwrap();
    for t in 0..=5 {
        for s in 0..3 {
            let a = schedule.action(t, s).0;
            let expected = mdp.rewards(t).get(s, a) + mdp.kernel(t).row(s, a).expect(values[t + 1].as_slice());
            assert!((values[t][s] - expected).abs() < 1e-15);
        }
    }
}

#[test]
fn monte_carlo_agrees_with_exact_evaluation() {
    let mdp = random_mdp(16, 3, 2, 5, 0.0);
    let schedule = PolicySchedule::from_fn(6, 3, |t, s| ActionId((t * 3 + s) % 2));
    let exact = evaluate_policy_exact(&mdp, &schedule, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 1_000_000;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let g = simulate_return(&mdp, 0, &mut rng, |t, s| Ok(schedule.action(t, s))).unwrap();
        sum += g;
        sq += g * g;
    }
    let mean = sum / n as f64;
    let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - exact).abs() <= 3.0 * se, "mean {mean}, exact {exact}, se {se}");
}

#[test]
fn simulation_rejects_bad_inputs() {
    let mdp = random_mdp(17, 2, 2, 3, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(simulate_return(&mdp, 2, &mut rng, |_, _| Ok(ActionId(0))), Err(Error::Index(_))));
    assert!(matches!(simulate_return(&mdp, 0, &mut rng, |_, _| Ok(ActionId(2))), Err(Error::Index(_))));
}

fn q_gap_transcription(k: usize, j: usize, g: f64, d: f64, span_future: f64, e: &[f64], dl: &[f64]) -> f64 {
    let n = k / j;
    let mut out = g.powi(n as i32) * span_future + 2.0 * e[0] + 2.0 * dl[0] * d;
    for i in 0..n {
        let mut block = 0.0;
        for jj in 1..=j {
            block += e[i * j + jj];
            block += dl[i * j + jj] * d;
        }
        out += 4.0 * g.powi(i as i32) * block;
    }
    let mut rest = 0.0;
    for jj in 1..=(k - n * j) {
        rest += e[n * j + jj] + dl[n * j + jj] * d;
    }
    out + 4.0 * g.powi(n as i32) * rest
}

#[test]
fn q_gap_bound_examples() {
    let zero = ErrorProfile::zeros(8);
    let b = q_gap_bound(7, 2, 0.5, 3.0, 4.0, &zero).unwrap();
    assert!((b - 0.125 * 4.0).abs() < 1e-15);
    assert_eq!(q_gap_bound(5, 2, 0.0, 3.0, 4.0, &zero).unwrap(), 0.0);
    let eps: Vec<f64> = (0..8).map(|l| 0.01 * (l + 1) as f64).collect();
    let delta: Vec<f64> = (0..8).map(|l| 0.003 * (8 - l) as f64).collect();
    let profile = ErrorProfile::new(eps.clone(), delta.clone()).unwrap();
    for (k, j) in [(7, 2), (7, 3), (6, 3), (4, 1), (0, 1), (2, 5)] {
        let got = q_gap_bound(k, j, 0.6, 2.5, 1.7, &profile).unwrap();
        let want = q_gap_transcription(k, j, 0.6, 2.5, 1.7, &eps, &delta);
        assert!((got - want).abs() < 1e-12, "k {k} J {j}: {got} vs {want}");
    }
    assert!(matches!(q_gap_bound(8, 2, 0.5, 1.0, 1.0, &profile), Err(Error::Input(_))));
    assert!(matches!(q_gap_bound(3, 0, 0.5, 1.0, 1.0, &profile), Err(Error::Input(_))));
    assert!(matches!(q_gap_bound(3, 1, 1.5, 1.0, 1.0, &profile), Err(Error::Input(_))));
}

#[test]
fn perturbed_schedule_stays_valid() {
    let mdp = random_mdp(18, 3, 2, 6, 0.1);
    let profile = ErrorProfile::constant(4, 0.1, 0.2).unwrap();
    let mut provider = PerturbedForecast { profile, rng: ChaCha8Rng::seed_from_u64(3) };
    assert!(!provider.is_deterministic());
    let schedule = mpdp_schedule(&mdp, &mut provider, 3).unwrap();
    assert_eq!(schedule.num_epochs(), 7);
    schedule.validate_for(&mdp).unwrap();
}

#[test]
fn forecast_windows_share_model_tables() {
    let mdp = random_mdp(19, 3, 2, 4, 0.0);
    let w = exact_forecast(&mdp, 1, 2).unwrap();
    assert!(std::ptr::eq(w.kernel(0), Arc::as_ptr(mdp.kernel(1))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn per_step_gap_within_bound(seed in 0u64..100_000, k in 0usize..6, j in 1usize..3) {
        let mdp = random_mdp(seed, 3, 2, 10, 0.2);
        let oracle = solve_optimal(&mdp);
        let profile = ErrorProfile::constant(k + 1, 0.05, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let d_max = oracle.v_star.iter().map(|v| v.span().unwrap()).fold(0.0, f64::max);
        for t in 0..=10 {
            let w = perturbed_forecast(&mdp, t, k, &profile, &mut rng).unwrap();
            let measured = measure_errors(&w, &mdp).unwrap();
            let stacks = psi_hat(&w).iter().chain(psi_tilde(&mdp, t, k).unwrap().iter())
                .map(|v| v.span().unwrap()).fold(d_max, f64::max);
            let future = if t + k < 10 { oracle.v_star[t + k + 1].span().unwrap() } else { 0.0 };
            // gamma = 1 is always a valid contraction coefficient
            let bound = q_gap_bound(k, j, 1.0, stacks, future, &measured).unwrap();
            for s in 0..3 {
                let a = mpdp_step(&w, s).unwrap().action.0;
                let gap = oracle.value(t, s) - oracle.q(t, s, a);
                prop_assert!(gap <= bound + 1e-9);
            }
        }
    }
}
