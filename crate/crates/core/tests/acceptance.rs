//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::time::{Duration, Instant};

use risk_sched::densities::Normalization;
use risk_sched::oracle::{brute_force_optimal, quantize, DEFAULT_ENUMERATION_BUDGET};
use risk_sched::policy::{extract_thresholds, NeverTransmit};
use risk_sched::sim::{estimate_risk_objective, RolloutOptions};
use risk_sched::solver::{
    closed_form_never_transmit, risk_neutral_value_iterate, value_iterate, value_iterate_with, ActionSet, GridSpec,
    QuadratureSpec, Solution, SolveOptions, Space,
};
use risk_sched::{Action, Channel, ModelParams};

const Q_TIE_BAND: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn base() -> ModelParams {
    ModelParams::new(0.9, 1.0, 1.0, 0.05, 5, 0.3, 0.2).unwrap()
}

fn solve(p: &ModelParams, spec: &GridSpec, space: Space) -> Solution {
    value_iterate(p, spec, &QuadratureSpec::default(), space).unwrap()
}

/// Parameter points shared by the structural criteria; every one is feasible.
fn structural_points() -> Vec<ModelParams> {
    let mut out = Vec::new();
    for lambda in [0.5, 1.0, 2.0] {
        for gamma in [0.01, 0.05, 0.1] {
            out.push(base().with_horizon(3).with_lambda(lambda).with_gamma(gamma));
        }
    }
    out
}

fn closed_form_oracle() -> Outcome {
    let start = Instant::now();
    let p = base();
    let spec = GridSpec::auto(&p, 401).unwrap();
    let options = SolveOptions {
        actions: ActionSet::IdleOnly,
        ..Default::default()
    };
    let sol = value_iterate_with(&p, &spec, &QuadratureSpec::default(), Space::Original, options).unwrap();
    let mut worst: f64 = 0.0;
    for t in 0..sol.values.len() {
        for (i, &d) in sol.grid.nodes().iter().enumerate() {
            let exact = closed_form_never_transmit(&p, d, t).unwrap();
            for c in Channel::ALL {
                worst = worst.max((sol.values.get(t, c, i) - exact).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst <= 1e-6 && elapsed < Duration::from_secs(10),
        detail: format!("max |dlogV| = {worst:.3e} (<= 1e-6), {elapsed:.2?} (< 10s)"),
    }
}

fn small_instance_optimality() -> Outcome {
    let start = Instant::now();
    let p = base().with_horizon(3);
    let chain = quantize(&p, 9, 3).unwrap();
    let report = brute_force_optimal(&chain, DEFAULT_ENUMERATION_BUDGET).unwrap();
    let elapsed = start.elapsed();
    let bits: Vec<usize> = report.enumerations.iter().map(|e| e.decision_points).collect();
    Outcome {
        pass: report.max_relative_gap <= 1e-12 && elapsed < Duration::from_secs(60),
        detail: format!(
            "max relative gap = {:.3e} (<= 1e-12), decision bits {bits:?}, {elapsed:.2?} (< 60s)",
            report.max_relative_gap
        ),
    }
}

fn threshold_structure() -> Outcome {
    let mut violations = 0usize;
    let mut failures = Vec::new();
    for p in structural_points() {
        let spec = GridSpec::auto(&p, 401).unwrap();
        let sol = solve(&p, &spec, Space::Original);
        // up-set in |delta|: once a node transmits, every larger |delta| does
        for row in sol.policy.rows() {
            for actions in row {
                for side in [false, true] {
                    let mut seen = false;
                    for k in 0..=spec.half() {
                        let u = actions[sol.grid.index_of_step(k, side)];
                        if u == Action::Transmit {
                            seen = true;
                        } else if seen {
                            violations += 1;
                        }
                    }
                }
            }
        }
        if let Err(e) = extract_thresholds(&sol.policy, &sol.grid) {
            failures.push(format!("lambda={} gamma={}: {e}", p.lambda, p.gamma));
        }
    }
    Outcome {
        pass: violations == 0 && failures.is_empty(),
        detail: format!("9 points, up-set violations = {violations}, extraction failures = {failures:?}"),
    }
}

fn bad_channel_idles() -> Outcome {
    let mut points = structural_points();
    points.push(base());
    points.push(base().with_gamma(0.02));
    let mut transmits = 0usize;
    let mut total = 0usize;
    for p in &points {
        for space in [Space::Original, Space::Folded] {
            let sol = solve(p, &GridSpec::auto(p, 201).unwrap(), space);
            for row in sol.policy.rows() {
                total += row[Channel::Bad.index()].len();
                transmits += row[Channel::Bad.index()].iter().filter(|u| u.is_transmit()).count();
            }
        }
    }
    Outcome {
        pass: transmits == 0,
        detail: format!("{transmits} transmit decisions in the bad channel over {total} (point, stage, node) cells"),
    }
}

fn evenness() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in [base(), base().with_horizon(3).with_gamma(0.1).with_lambda(0.5)] {
        let sol = solve(&p, &GridSpec::auto(&p, 401).unwrap(), Space::Original);
        for stage in sol.values.stages() {
            for table in stage {
                for i in 0..sol.grid.len() {
                    worst = worst.max((table[i] - table[sol.grid.mirror(i)]).abs());
                }
            }
        }
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("max |W(d) - W(-d)| = {worst:.3e} (<= 1e-12)"),
    }
}

fn fold_unfold() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut disagreements = 0usize;
    let mut exempt = 0usize;
    for p in [base(), base().with_horizon(3).with_gamma(0.1).with_lambda(2.0)] {
        let spec = GridSpec::auto(&p, 401).unwrap();
        let original = solve(&p, &spec, Space::Original);
        let folded = solve(&p, &spec, Space::Folded);
        for j in 0..folded.grid.len() {
            let i = original.grid.index_of_step(j, false);
            for t in 0..original.values.len() {
                for c in Channel::ALL {
                    worst = worst.max((original.values.get(t, c, i) - folded.values.get(t, c, j)).abs());
                }
            }
            for k in 0..original.policy.len() {
                for c in Channel::ALL {
                    if original.q.gap(k, c, i) <= Q_TIE_BAND || folded.q.gap(k, c, j) <= Q_TIE_BAND {
                        exempt += 1;
                    } else if original.policy.get(k, c, i) != folded.policy.get(k, c, j) {
                        disagreements += 1;
                    }
                }
            }
        }
    }
    Outcome {
        pass: worst <= 1e-8 && disagreements == 0,
        detail: format!(
            "max |W_orig - W_fold| = {worst:.3e} (<= 1e-8), policy disagreements = {disagreements}, tie-exempt = {exempt}"
        ),
    }
}

fn monotonicity() -> Outcome {
    let mut in_delta = 0usize;
    let mut in_time = 0usize;
    let mut points = structural_points();
    points.push(base());
    for p in &points {
        let sol = solve(p, &GridSpec::auto(p, 401).unwrap(), Space::Folded);
        let stages = sol.values.stages();
        for (t, stage) in stages.iter().enumerate() {
            for c in Channel::ALL {
                let w = &stage[c.index()];
                in_delta += w.windows(2).filter(|x| x[1] < x[0]).count();
                if t > 0 {
                    let prev = &stages[t - 1][c.index()];
                    in_time += w.iter().zip(prev).filter(|(now, before)| now < before).count();
                }
            }
        }
    }
    Outcome {
        pass: in_delta == 0 && in_time == 0,
        detail: format!("violations: along the grid = {in_delta}, across stages = {in_time}"),
    }
}

fn small_risk_limit() -> Outcome {
    let p = ModelParams::new(0.9, 0.25, 1.0, 0.1, 3, 0.3, 0.2).unwrap();
    let spec = GridSpec::new(3.0, 301).unwrap();
    let quad = QuadratureSpec::default();
    let neutral = risk_neutral_value_iterate(&p, &spec, &quad, Space::Folded).unwrap();
    let last = neutral.values.last_index();
    let gammas = [0.1, 0.05, 0.025];
    let d: Vec<f64> = gammas
        .iter()
        .map(|&g| {
            let sol = solve(&p.with_gamma(g), &spec, Space::Folded);
            let mut worst: f64 = 0.0;
            for c in Channel::ALL {
                for i in 0..sol.grid.len() {
                    worst = worst.max((sol.values.get(last, c, i) / g - neutral.values.get(last, c, i)).abs());
                }
            }
            worst
        })
        .collect();
    let ratio = d[1] / d[0];
    Outcome {
        pass: d[0] > d[1] && d[1] > d[2] && (0.35..=0.65).contains(&ratio),
        detail: format!(
            "D = [{:.4}, {:.4}, {:.4}] for gamma = {gammas:?}, D(0.05)/D(0.1) = {ratio:.3} (in [0.35, 0.65])",
            d[0], d[1], d[2]
        ),
    }
}

fn monte_carlo() -> Outcome {
    let start = Instant::now();
    let p = base().with_gamma(0.02);
    let n = 1_000_000;
    let seed = 20_240_607;
    let spec = GridSpec::auto(&p, 2001).unwrap();
    let sol = solve(&p, &spec, Space::Folded);
    let schedule = extract_thresholds(&sol.policy, &sol.grid).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for c0 in Channel::ALL {
        let options = RolloutOptions {
            initial_channel: Some(c0),
            ..Default::default()
        };
        let r = estimate_risk_objective(&p, &schedule, n, seed, options).unwrap();
        let z = (r.log_mean - sol.log_value_at_zero(c0)) / r.se_log;
        pass &= !r.heavy_tail && z.abs() <= 3.0;
        parts.push(format!("threshold c0={} z={z:+.2} tail={:.4}", c0.index(), r.tail_share));
    }
    let r = estimate_risk_objective(&p, &NeverTransmit, n, seed, RolloutOptions::default()).unwrap();
    let target = closed_form_never_transmit(&p, 0.0, p.horizon + 1).unwrap();
    let z = (r.log_mean - target) / r.se_log;
    pass &= !r.heavy_tail && z.abs() <= 3.0;
    parts.push(format!("never-transmit z={z:+.2} tail={:.4}", r.tail_share));
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    Outcome {
        pass,
        detail: format!("{} (|z| <= 3), {elapsed:.2?} (< 5min)", parts.join(", ")),
    }
}

fn normalization_invariance() -> Outcome {
    let p = ModelParams::new(0.9, 0.5, 1.0, 0.05, 5, 0.3, 0.2).unwrap();
    let spec = GridSpec::auto(&p, 401).unwrap();
    let quad = QuadratureSpec::default();
    let density = value_iterate(&p, &spec, &quad, Space::Folded).unwrap();
    let options = SolveOptions {
        normalization: Normalization::Unnormalized,
        ..Default::default()
    };
    let raw = value_iterate_with(&p, &spec, &quad, Space::Folded, options).unwrap();
    let step = 0.5 * (2.0 * std::f64::consts::PI * p.sigma2).ln();
    let mut worst: f64 = 0.0;
    for t in 0..density.values.len() {
        for c in Channel::ALL {
            for i in 0..density.grid.len() {
                let shift = raw.values.get(t, c, i) - density.values.get(t, c, i);
                worst = worst.max((shift - t as f64 * step).abs());
            }
        }
    }
    let mut disagreements = 0usize;
    for k in 0..density.policy.len() {
        for c in Channel::ALL {
            for i in 0..density.grid.len() {
                if density.q.gap(k, c, i) > Q_TIE_BAND && density.policy.get(k, c, i) != raw.policy.get(k, c, i) {
                    disagreements += 1;
                }
            }
        }
    }
    Outcome {
        pass: worst <= 1e-10 && disagreements == 0,
        detail: format!("max |shift - t ln(2 pi sigma2)/2| = {worst:.3e} (<= 1e-10), policy disagreements = {disagreements}"),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("never-transmit closed form", closed_form_oracle),
        ("small-instance optimality", small_instance_optimality),
        ("threshold structure", threshold_structure),
        ("bad channel always idles", bad_channel_idles),
        ("evenness in delta", evenness),
        ("fold/unfold equivalence", fold_unfold),
        ("monotonicity in |delta| and t", monotonicity),
        ("small-risk limit", small_risk_limit),
        ("Monte Carlo consistency", monte_carlo),
        ("normalization invariance", normalization_invariance),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{}] {name}: {}", k + 1, outcome.detail);
        if !outcome.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
