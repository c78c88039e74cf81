use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One policy history: jump times with the state entered, starting at time 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub points: Vec<(f64, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl Path {
    pub fn new(points: Vec<(f64, usize)>) -> Result<Self> {
        let p = Self {
            points,
            horizon: None,
        };
        p.check()?;
        Ok(p)
    }

    pub fn start(state: usize) -> Self {
        Self {
            points: vec![(0.0, state)],
            horizon: None,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn check(&self) -> Result<()> {
        let first = self
            .points
            .first()
            .ok_or_else(|| Error::Input("path has no points".into()))?;
        if first.0 != 0.0 {
            return Err(Error::Input(format!("path must start at time 0, got {}", first.0)));
        }
        for w in self.points.windows(2) {
            if !(w[1].0 > w[0].0) || !w[1].0.is_finite() {
                return Err(Error::Input(format!(
                    "path times must be finite and strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
            if w[1].1 == w[0].1 {
                return Err(Error::Input(format!(
                    "consecutive path points at {} and {} share state {}",
                    w[0].0, w[1].0, w[0].1
                )));
            }
        }
        Ok(())
    }

    /// State occupied at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        let idx = self.points.partition_point(|p| p.0 <= t);
        self.points[idx.saturating_sub(1)].1
    }

    /// State occupied just before `t`.
    pub fn state_before(&self, t: f64) -> usize {
        let idx = self.points.partition_point(|p| p.0 < t);
        self.points[idx.saturating_sub(1)].1
    }

    pub fn jump_count(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn last_time(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.0)
    }

    /// Sojourns `(from, to, state)` clipped to `[0, end]`.
    pub fn sojourns(&self, end: f64) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::new();
        for (k, &(t, z)) in self.points.iter().enumerate() {
            if t >= end {
                break;
            }
            let next = self.points.get(k + 1).map_or(f64::INFINITY, |p| p.0);
            out.push((t, next.min(end), z));
        }
        out
    }
}

/// The history frozen at time `s` with the current state forced to `i`.
pub fn stop_path(path: &Path, s: f64, i: usize) -> Path {
    if s <= 0.0 {
        return Path {
            points: vec![(0.0, i)],
            horizon: path.horizon,
        };
    }
    let n = path.points.partition_point(|p| p.0 < s);
    let mut points: Vec<(f64, usize)> = path.points[..n].to_vec();
    match points.last() {
        Some(&(_, z)) if z == i => {}
        _ => points.push((s, i)),
    }
    Path {
        points,
        horizon: path.horizon,
    }
}

/// Counting matrix, occupation indicators and current state at `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathStatistics {
    /// `counts[a][b]`: number of jumps from state index `a` to `b` in `(0, t]`.
    pub counts: Vec<Vec<u64>>,
    pub indicators: Vec<u8>,
    pub state: usize,
}

impl PathStatistics {
    /// `I^i(t) - I^i(0) - Σ_j (N^{ji} - N^{ij})` for every state; all zero.
    pub fn balance_defect(&self, initial: &[u8]) -> Vec<i64> {
        let n = self.indicators.len();
        (0..n)
            .map(|i| {
                let flow: i64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.counts[j][i] as i64 - self.counts[i][j] as i64)
                    .sum();
                self.indicators[i] as i64 - initial[i] as i64 - flow
            })
            .collect()
    }
}

/// Path statistics at time `t`; `labels` maps state index to label.
pub fn path_statistics(path: &Path, t: f64, labels: &[usize]) -> Result<PathStatistics> {
    let index = |z: usize| {
        labels
            .iter()
            .position(|&l| l == z)
            .ok_or_else(|| Error::Input(format!("path visits unknown state {z}")))
    };
    let n = labels.len();
    let mut counts = vec![vec![0u64; n]; n];
    for w in path.points.windows(2) {
        if w[1].0 <= t {
            counts[index(w[0].1)?][index(w[1].1)?] += 1;
        }
    }
    let state = path.state_at(t);
    let mut indicators = vec![0u8; n];
    indicators[index(state)?] = 1;
    Ok(PathStatistics {
        counts,
        indicators,
        state,
    })
}

/// Information a kernel conditions on: the stopped history at `current_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryContext {
    pub current_time: f64,
    pub current_state: usize,
    pub last_jump_time: f64,
    pub prior_points: Vec<(f64, usize)>,
}

impl HistoryContext {
    /// Fresh start in state `i` at time `s` with duration zero.
    pub fn fresh(s: f64, i: usize) -> Self {
        Self {
            current_time: s,
            current_state: i,
            last_jump_time: s,
            prior_points: vec![(0.0, i)],
        }
    }

    /// Start in state `i` at time `s` having entered it at `entered` (may be negative).
    pub fn with_duration(s: f64, i: usize, entered: f64) -> Self {
        Self {
            current_time: s,
            current_state: i,
            last_jump_time: entered,
            prior_points: vec![(0.0, i)],
        }
    }

    /// Context of the `(s, i)`-stopped version of `path`.
    pub fn from_stopped(path: &Path, s: f64, i: usize) -> Self {
        let stopped = stop_path(path, s, i);
        let last = stopped.last_time();
        Self {
            current_time: s,
            current_state: i,
            last_jump_time: last,
            prior_points: stopped.points,
        }
    }

    pub fn jump_count(&self) -> usize {
        self.prior_points.len().saturating_sub(1)
    }

    pub fn duration(&self) -> f64 {
        self.current_time - self.last_jump_time
    }

    /// Context after a jump to `j` at time `t`.
    pub fn after_jump(&self, t: f64, j: usize) -> Self {
        let mut prior_points = self.prior_points.clone();
        prior_points.push((t, j));
        Self {
            current_time: t,
            current_state: j,
            last_jump_time: t,
            prior_points,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.current_time.is_finite() && self.last_jump_time.is_finite()) {
            return Err(Error::Input("history context times must be finite".into()));
        }
        if self.last_jump_time > self.current_time {
            return Err(Error::Input(format!(
                "last jump time {} after current time {}",
                self.last_jump_time, self.current_time
            )));
        }
        if let Some(&(_, z)) = self.prior_points.last() {
            if z != self.current_state {
                return Err(Error::Input(format!(
                    "history ends in state {z} but current state is {}",
                    self.current_state
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(points: &[(f64, usize)]) -> Path {
        Path::new(points.to_vec()).unwrap()
    }

    #[test]
    fn stop_path_cases() {
        let path = p(&[(0.0, 0), (2.0, 1)]);
        assert_eq!(stop_path(&path, 1.0, 0).points, vec![(0.0, 0)]);
        assert_eq!(stop_path(&path, 3.0, 0).points, vec![(0.0, 0), (2.0, 1), (3.0, 0)]);
        assert_eq!(stop_path(&path, 0.0, 5).points, vec![(0.0, 5)]);
        // a jump exactly at s belongs to the future
        assert_eq!(stop_path(&path, 2.0, 0).points, vec![(0.0, 0)]);
    }

    #[test]
    fn statistics_examples() {
        let labels = [0, 1];
        let path = p(&[(0.0, 0), (2.0, 1)]);
        let s = path_statistics(&path, 2.0, &labels).unwrap();
        assert_eq!(s.counts[0][1], 1);
        assert_eq!(s.indicators, vec![0, 1]);
        assert_eq!(s.state, 1);
        let s = path_statistics(&path, 1.999, &labels).unwrap();
        assert_eq!(s.counts[0][1], 0);
        assert_eq!(s.indicators, vec![1, 0]);
        let path = p(&[(0.0, 0), (1.0, 1), (2.0, 0)]);
        let s = path_statistics(&path, 5.0, &labels).unwrap();
        assert_eq!((s.counts[0][1], s.counts[1][0]), (1, 1));
        assert_eq!(s.indicators, vec![1, 0]);
        assert_eq!(s.balance_defect(&[1, 0]), vec![0, 0]);
    }

    #[test]
    fn invalid_paths() {
        assert!(Path::new(vec![(1.0, 0)]).is_err());
        assert!(Path::new(vec![(0.0, 0), (1.0, 0)]).is_err());
        assert!(Path::new(vec![(0.0, 0), (1.0, 1), (1.0, 0)]).is_err());
    }
}
