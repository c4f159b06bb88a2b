use approx::assert_relative_eq;
use risk_sched::oracle::*;
use risk_sched::solver::{value_iterate, GridSpec, QuadratureSpec, Space};
use risk_sched::{Action, Channel, Error, ModelParams};

fn params(horizon: usize) -> ModelParams {
    ModelParams::new(0.9, 1.0, 1.0, 0.05, horizon, 0.3, 0.2).unwrap()
}

fn idle(_: usize, _: usize, _: Channel) -> Action {
    Action::Idle
}

fn transmit(_: usize, _: usize, _: Channel) -> Action {
    Action::Transmit
}

#[test]
fn horizon_zero_costs() {
    let p = params(0);
    let chain = quantize_with_bound(&p, 5, 2, 2.0).unwrap();
    assert_eq!(exact_policy_cost(&chain, idle, 0.0, Channel::Good).unwrap(), 1.0);
    let v = exact_policy_cost(&chain, transmit, 2.0, Channel::Bad).unwrap();
    assert_relative_eq!(v, (p.gamma * (p.lambda + 4.0)).exp(), max_relative = 1e-15);
}

#[test]
fn two_leaf_expansion() {
    // states {-2, -1, 0, 1, 2}; from delta = 1 the noise +-1 lands on 1.9 -> 2 and -0.1 -> 0
    let p = params(1);
    let chain = quantize_with_bound(&p, 5, 2, 2.0).unwrap();
    let v = exact_policy_cost(&chain, idle, 1.0, Channel::Good).unwrap();
    assert_relative_eq!(v, 1.1676482565318826, max_relative = 1e-15);
    let hand = (0.05f64).exp() * (0.5 * (0.05f64 * 4.0).exp() + 0.5);
    assert_relative_eq!(v, hand, max_relative = 1e-15);
}

#[test]
fn zero_error_idles_at_the_last_decision() {
    let p = params(1);
    let chain = quantize(&p, 3, 3).unwrap();
    let sol = backward_induction(&chain).unwrap();
    for t in 0..=1 {
        for c in Channel::ALL {
            assert_eq!(sol.policy.get(t, chain.zero_index(), c), Action::Idle);
        }
    }
}

#[test]
fn bad_channel_column_is_idle() {
    for (n, m, horizon) in [(9, 3, 3), (15, 5, 4), (7, 2, 2)] {
        let chain = quantize(&params(horizon), n, m).unwrap();
        let sol = backward_induction(&chain).unwrap();
        for row in &sol.policy.rows {
            assert!(row[Channel::Bad.index()].iter().all(|&u| u == Action::Idle));
        }
    }
}

#[test]
fn pointwise_last_stage_matches_full_enumeration() {
    for (n, m, horizon) in [(3, 2, 1), (5, 2, 1), (3, 3, 2)] {
        let chain = quantize(&params(horizon), n, m).unwrap();
        for c in Channel::ALL {
            let start = (chain.zero_index(), c);
            let full = enumerate_optimal(&chain, start, 1 << 24, TerminalRule::Enumerate).unwrap();
            let fast = enumerate_optimal(&chain, start, 1 << 24, TerminalRule::Pointwise).unwrap();
            assert!(full.decision_points > fast.decision_points);
            assert_relative_eq!(full.value, fast.value, max_relative = 1e-14);
        }
    }
}

#[test]
fn enumeration_backward_induction_and_policy_cost_agree() {
    let chain = quantize(&params(2), 9, 3).unwrap();
    let report = brute_force_optimal(&chain, DEFAULT_ENUMERATION_BUDGET).unwrap();
    assert!(report.max_relative_gap <= AGREEMENT_TOLERANCE, "{}", report.max_relative_gap);
    for (e, certified) in report.enumerations.iter().zip(&report.certified_costs) {
        let (i, c) = e.start;
        // the enumerated minimizer, evaluated independently, attains the minimum
        let v = exact_policy_cost(&chain, |t, j, cc| e.policy.get(t, j, cc), chain.delta_states[i], c).unwrap();
        assert_relative_eq!(v, e.value, max_relative = 1e-12);
        assert_relative_eq!(v, *certified, max_relative = 1e-12);
    }
}

#[test]
fn optimal_chain_policy_is_even_and_threshold() {
    let chain = quantize(&params(3), 15, 5).unwrap();
    let sol = backward_induction(&chain).unwrap();
    let n = chain.n_states();
    let mid = chain.zero_index();
    for (t, row) in sol.policy.rows.iter().enumerate() {
        for c in Channel::ALL {
            let col = &row[c.index()];
            let gaps = &sol.relative_gap[t][c.index()];
            for i in 0..n {
                if gaps[i] > 1e-12 {
                    assert_eq!(col[i], col[n - 1 - i], "t={t} c={c} i={i}");
                }
            }
            let mut seen = false;
            for i in mid..n {
                if col[i] == Action::Transmit {
                    seen = true;
                } else {
                    assert!(!seen || gaps[i] <= 1e-12, "t={t} c={c} i={i}");
                }
            }
        }
    }
}

#[test]
fn refinement_approaches_the_solver() {
    let p = params(3);
    let sol = value_iterate(&p, &GridSpec::auto(&p, 401).unwrap(), &QuadratureSpec::default(), Space::Folded).unwrap();
    let target = sol.log_value_at_zero(Channel::Good);
    let gap = |n: usize, m: usize, bound: f64| {
        let chain = quantize_with_bound(&p, n, m, bound).unwrap();
        let v = backward_induction(&chain).unwrap().value(chain.zero_index(), Channel::Good);
        (v.ln() - target).abs()
    };
    let coarse = gap(9, 3, 3.0);
    let fine = gap(61, 5, 5.0);
    assert!(fine < coarse, "coarse {coarse} fine {fine}");
}

#[test]
fn limits_are_enforced() {
    let chain = quantize(&params(3), 9, 3).unwrap();
    let err = enumerate_optimal(&chain, (chain.zero_index(), Channel::Good), 1 << 10, TerminalRule::Pointwise)
        .unwrap_err();
    assert!(matches!(err, Error::BudgetExceeded { required, budget } if required > budget));
    let long = quantize(&params(MAX_EXACT_HORIZON + 1), 3, 2).unwrap();
    assert!(matches!(
        exact_policy_cost(&long, idle, 0.0, Channel::Bad),
        Err(Error::HorizonTooLarge { .. })
    ));
    assert!(backward_induction(&long).is_err());
}
