//! Threshold schedules and runtime decision rules.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{Action, Channel};
use crate::solver::{Grid, PolicyTable, Space};

/// Anything that can pick an action from `(stage, error, channel)`.
///
/// `t` is the wall-clock stage, `0..=horizon`.
pub trait SchedulingPolicy: Sync {
    fn decide(&self, t: usize, delta: f64, c: Channel) -> Action;
}

impl<F> SchedulingPolicy for F
where
    F: Fn(usize, f64, Channel) -> Action + Sync,
{
    fn decide(&self, t: usize, delta: f64, c: Channel) -> Action {
        self(t, delta, c)
    }
}

/// Never transmits.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeverTransmit;

impl SchedulingPolicy for NeverTransmit {
    fn decide(&self, _: usize, _: f64, _: Channel) -> Action {
        Action::Idle
    }
}

/// Transmits at every stage regardless of the channel.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysTransmit;

impl SchedulingPolicy for AlwaysTransmit {
    fn decide(&self, _: usize, _: f64, _: Channel) -> Action {
        Action::Transmit
    }
}

/// Per-stage, per-channel error thresholds.
///
/// Transmits at stage `t` in channel `c` iff `|delta| >= threshold[t][c]`;
/// `+inf` means never.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSchedule {
    thresholds: Vec<[f64; 2]>,
}

impl ThresholdSchedule {
    pub fn new(thresholds: Vec<[f64; 2]>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::Shape("threshold schedule needs at least one stage".into()));
        }
        for (t, row) in thresholds.iter().enumerate() {
            for v in row {
                if v.is_nan() || *v < 0.0 {
                    return Err(Error::Shape(format!("threshold {v} at stage {t} must be >= 0 or inf")));
                }
            }
        }
        Ok(Self { thresholds })
    }

    pub fn horizon(&self) -> usize {
        self.thresholds.len() - 1
    }

    pub fn threshold(&self, t: usize, c: Channel) -> f64 {
        self.thresholds[t][c.index()]
    }

    pub fn stages(&self) -> &[[f64; 2]] {
        &self.thresholds
    }

    /// Writes `stage,channel,threshold` rows after the given comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> std::io::Result<()> {
        for line in comments {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "stage,channel,threshold")?;
        for (t, row) in self.thresholds.iter().enumerate() {
            for c in Channel::ALL {
                writeln!(out, "{t},{c},{}", row[c.index()])?;
            }
        }
        Ok(())
    }

    /// Reads the format produced by [`ThresholdSchedule::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows: Vec<(usize, usize, f64)> = Vec::new();
        let mut seen_header = false;
        for line in input.lines() {
            let line = line.map_err(|e| Error::Shape(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_header {
                if line != "stage,channel,threshold" {
                    return Err(Error::Shape(format!("unexpected threshold header `{line}`")));
                }
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Shape(format!("malformed threshold row `{line}`"));
            if fields.len() != 3 {
                return Err(bad());
            }
            let t: usize = fields[0].parse().map_err(|_| bad())?;
            let c: usize = fields[1].parse().map_err(|_| bad())?;
            let v: f64 = fields[2].parse().map_err(|_| bad())?;
            if c > 1 {
                return Err(bad());
            }
            rows.push((t, c, v));
        }
        let stages = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let mut table = vec![[f64::NAN; 2]; stages];
        for (t, c, v) in rows {
            table[t][c] = v;
        }
        if table.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::Shape("threshold file does not cover every (stage, channel)".into()));
        }
        Self::new(table)
    }
}

impl SchedulingPolicy for ThresholdSchedule {
    fn decide(&self, t: usize, delta: f64, c: Channel) -> Action {
        decide(self, delta, c, t)
    }
}

/// `1` iff `|delta| >= threshold[t][c]`.
pub fn decide(schedule: &ThresholdSchedule, delta: f64, c: Channel, t: usize) -> Action {
    if delta.abs() >= schedule.threshold(t, c) {
        Action::Transmit
    } else {
        Action::Idle
    }
}

/// Reads thresholds off a solved policy table.
///
/// For every stage and channel the transmit set must be exactly the nodes
/// with `|delta|` at or above its smallest member; anything else is reported
/// as [`Error::NonThresholdPolicy`] with the wall-clock stage and the first
/// offending node. Tables on the original grid are checked on both sides.
pub fn extract_thresholds(policy: &PolicyTable, grid: &Grid) -> Result<ThresholdSchedule> {
    let horizon = policy.horizon();
    let mut thresholds = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let row = policy.at_stage(t);
        let mut stage = [f64::INFINITY; 2];
        for c in Channel::ALL {
            let actions = &row[c.index()];
            if actions.len() != grid.len() {
                return Err(Error::Shape(format!(
                    "policy row has {} nodes, grid has {}",
                    actions.len(),
                    grid.len()
                )));
            }
            let threshold = actions
                .iter()
                .zip(grid.nodes())
                .filter(|(u, _)| u.is_transmit())
                .map(|(_, d)| d.abs())
                .fold(f64::INFINITY, f64::min);
            for (i, (&u, d)) in actions.iter().zip(grid.nodes()).enumerate() {
                if u.is_transmit() != (d.abs() >= threshold) {
                    return Err(Error::NonThresholdPolicy {
                        stage: t,
                        channel: c.index() as u8,
                        node: i,
                    });
                }
            }
            stage[c.index()] = threshold;
        }
        thresholds.push(stage);
    }
    ThresholdSchedule::new(thresholds)
}

/// Folded policy table lifted back to signed errors.
#[derive(Debug, Clone)]
pub struct UnfoldedPolicy {
    policy: PolicyTable,
    grid: Grid,
}

impl UnfoldedPolicy {
    /// Index of the folded node at or below `r`, clamped to the last node.
    fn node_below(&self, r: f64) -> usize {
        let m = self.grid.len() - 1;
        let h = self.grid.spec.spacing();
        let mut k = ((r / h).floor() as usize).min(m);
        if k < m && self.grid.node(k + 1) <= r {
            k += 1;
        }
        while k > 0 && self.grid.node(k) > r {
            k -= 1;
        }
        k
    }
}

/// Turns a folded policy table into a decision rule on signed errors.
///
/// Off-grid errors use the node at or below `|delta|`; errors beyond
/// `delta_max` use the boundary node. The rule is even in `delta`.
pub fn unfold_policy(folded: &PolicyTable, grid: &Grid) -> Result<UnfoldedPolicy> {
    if grid.space != Space::Folded {
        return Err(Error::Shape("unfold_policy needs a folded-grid table".into()));
    }
    if folded.rows().iter().any(|row| row.iter().any(|r| r.len() != grid.len())) {
        return Err(Error::Shape("policy rows do not match the grid".into()));
    }
    Ok(UnfoldedPolicy {
        policy: folded.clone(),
        grid: grid.clone(),
    })
}

impl SchedulingPolicy for UnfoldedPolicy {
    fn decide(&self, t: usize, delta: f64, c: Channel) -> Action {
        self.policy.at_stage(t)[c.index()][self.node_below(delta.abs())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::GridSpec;

    fn folded_grid() -> Grid {
        Grid::new(GridSpec::new(2.0, 9).unwrap(), Space::Folded)
    }

    fn row(bits: &[u8]) -> Vec<Action> {
        bits.iter()
            .map(|&b| if b == 1 { Action::Transmit } else { Action::Idle })
            .collect()
    }

    #[test]
    fn decide_examples() {
        let s = ThresholdSchedule::new(vec![[f64::INFINITY, 1.0]]).unwrap();
        assert_eq!(decide(&s, -1.5, Channel::Good, 0), Action::Transmit);
        assert_eq!(decide(&s, 1.0, Channel::Good, 0), Action::Transmit);
        assert_eq!(decide(&s, 0.99, Channel::Good, 0), Action::Idle);
        for d in [-100.0, 0.0, 3.0] {
            assert_eq!(decide(&s, d, Channel::Bad, 0), Action::Idle);
        }
    }

    #[test]
    fn extracts_thresholds_by_wall_clock_stage() {
        let grid = folded_grid();
        // rows are indexed by remaining stages: row 0 is the last decision
        let table = PolicyTable::from_rows(vec![
            [row(&[0, 0, 0, 0, 0]), row(&[0, 0, 1, 1, 1])],
            [row(&[0, 0, 0, 0, 0]), row(&[0, 0, 0, 1, 1])],
        ]);
        let s = extract_thresholds(&table, &grid).unwrap();
        assert_eq!(s.horizon(), 1);
        assert_eq!(s.threshold(0, Channel::Good), 1.5);
        assert_eq!(s.threshold(1, Channel::Good), 1.0);
        assert_eq!(s.threshold(0, Channel::Bad), f64::INFINITY);
        for t in 0..=1 {
            for c in Channel::ALL {
                for (i, &d) in grid.nodes().iter().enumerate() {
                    assert_eq!(decide(&s, d, c, t), table.at_stage(t)[c.index()][i]);
                }
            }
        }
    }

    #[test]
    fn all_idle_table_gives_infinite_thresholds() {
        let grid = folded_grid();
        let table = PolicyTable::from_rows(vec![[row(&[0; 5]), row(&[0; 5])]; 3]);
        let s = extract_thresholds(&table, &grid).unwrap();
        assert!(s.stages().iter().flatten().all(|v| v.is_infinite()));
    }

    #[test]
    fn rejects_non_threshold_tables() {
        let grid = folded_grid();
        let table = PolicyTable::from_rows(vec![
            [row(&[0; 5]), row(&[0, 0, 0, 1, 1])],
            [row(&[0; 5]), row(&[0, 1, 0, 1, 1])],
        ]);
        assert_eq!(
            extract_thresholds(&table, &grid),
            Err(Error::NonThresholdPolicy {
                stage: 0,
                channel: 1,
                node: 2
            })
        );
        // asymmetric original-grid table
        let original = Grid::new(GridSpec::new(2.0, 9).unwrap(), Space::Original);
        let table = PolicyTable::from_rows(vec![[row(&[0; 9]), row(&[1, 1, 0, 0, 0, 0, 0, 0, 1])]]);
        assert!(matches!(
            extract_thresholds(&table, &original),
            Err(Error::NonThresholdPolicy { node: 7, .. })
        ));
    }

    #[test]
    fn unfolded_rule_is_even_and_clamped() {
        let grid = folded_grid();
        let table = PolicyTable::from_rows(vec![[row(&[0; 5]), row(&[0, 0, 1, 1, 1])]]);
        let rule = unfold_policy(&table, &grid).unwrap();
        assert_eq!(rule.decide(0, 0.0, Channel::Good), Action::Idle);
        assert_eq!(rule.decide(0, 0.99, Channel::Good), Action::Idle);
        assert_eq!(rule.decide(0, 1.0, Channel::Good), Action::Transmit);
        assert_eq!(rule.decide(0, 57.0, Channel::Good), Action::Transmit);
        for d in [0.3, 0.999, 1.2, 2.0, 9.0] {
            for c in Channel::ALL {
                assert_eq!(rule.decide(0, d, c), rule.decide(0, -d, c));
            }
        }
        let original = Grid::new(grid.spec, Space::Original);
        assert!(unfold_policy(&table, &original).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = ThresholdSchedule::new(vec![[f64::INFINITY, 1.25], [f64::INFINITY, 0.1 + 0.2]]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &["gamma=0.05".to_string()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# gamma=0.05\nstage,channel,threshold\n0,0,inf\n"));
        assert_eq!(ThresholdSchedule::read_csv(&buf[..]).unwrap(), s);
        assert!(ThresholdSchedule::read_csv("stage,channel,threshold\n0,0,inf\n".as_bytes()).is_err());
        assert!(ThresholdSchedule::read_csv("stage,channel,threshold\n0,0,-1\n0,1,2\n".as_bytes()).is_err());
    }
}
