//! Exact path simulation from the transition kernels and Monte Carlo
//! estimators built on it.
//!
//! Path `k` draws its uniforms from a ChaCha stream keyed by `(seed, k)`, and
//! every reduction runs over per-path values in index order, so results do
//! not depend on the number of worker threads.

use crate::error::{Error, Result};
use crate::measure::{accumulation_factor, ls_integrate_split, JumpDraw};
use crate::model::{HistoryContext, Model, Path};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Hard cap on jumps per path; a validated model never reaches it.
pub const MAX_JUMPS: usize = 1_000_000;

/// Where paths start.
#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    /// Initial state drawn from the model's `alpha` at time 0.
    Alpha,
    /// Continue a given stopped history from `ctx.current_time`.
    Context(HistoryContext),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub horizon: f64,
    pub start: Start,
    /// Worker threads; `0` uses the global pool.
    pub threads: usize,
}

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64, horizon: f64) -> Self {
        Self {
            n_paths,
            seed,
            horizon,
            start: Start::Alpha,
            threads: 0,
        }
    }

    pub fn from_context(mut self, ctx: HistoryContext) -> Self {
        self.start = Start::Context(ctx);
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    fn check(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Input("n_paths must be at least 1".into()));
        }
        if !self.horizon.is_finite() {
            return Err(Error::Input("simulation horizon must be finite".into()));
        }
        if let Start::Context(ctx) = &self.start {
            ctx.check()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl McEstimate {
    /// Mean and standard error of per-path values, summed in index order.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                value: 0.0,
                std_error: 0.0,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            value: mean,
            std_error: (var / n as f64).sqrt(),
            n,
        }
    }

    /// `|value - target| <= k * std_error` (exact match required when the
    /// standard error is zero, up to rounding).
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error + 1e-12
    }
}

/// Stream of uniforms in (0, 1) for one path.
pub struct PathRng(ChaCha8Rng);

impl PathRng {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self(rng)
    }

    pub fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

/// Draw the next jump after `ctx.current_time`.
pub fn sample_next_jump(model: &Model, ctx: &HistoryContext, rng: &mut PathRng) -> Result<JumpDraw> {
    let kernel = model.kernel(ctx)?;
    let u1 = rng.uniform();
    let u2 = rng.uniform();
    kernel.sample(u1, u2)
}

fn initial_context(model: &Model, start: &Start, rng: &mut PathRng) -> Result<HistoryContext> {
    match start {
        Start::Context(ctx) => Ok(ctx.clone()),
        Start::Alpha => {
            let u = rng.uniform();
            let mut acc = 0.0;
            let labels = model.labels();
            for (k, &a) in model.alpha.iter().enumerate() {
                acc += a;
                if u < acc {
                    return Ok(HistoryContext::fresh(0.0, labels[k]));
                }
            }
            let k = model
                .alpha
                .iter()
                .rposition(|&a| a > 0.0)
                .ok_or_else(|| Error::Input("alpha has no positive entry".into()))?;
            Ok(HistoryContext::fresh(0.0, labels[k]))
        }
    }
}

/// Path number `index` of the configuration, truncated at the horizon.
pub fn sample_path(model: &Model, config: &SimConfig, index: u64) -> Result<Path> {
    let mut rng = PathRng::new(config.seed, index);
    let mut ctx = initial_context(model, &config.start, &mut rng)?;
    for _ in 0..MAX_JUMPS {
        match sample_next_jump(model, &ctx, &mut rng)? {
            JumpDraw::At { time, dest } if time <= config.horizon => {
                ctx = ctx.after_jump(time, dest);
            }
            _ => {
                return Ok(Path {
                    points: ctx.prior_points,
                    horizon: Some(config.horizon),
                })
            }
        }
    }
    Err(Error::Internal(format!(
        "path {index} exceeded {MAX_JUMPS} jumps before the horizon; rates explode"
    )))
}

/// Run `f` inside a pool with the configured number of threads.
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Per-path values `f(path)` in index order.
pub fn map_paths<F>(model: &Model, config: &SimConfig, f: F) -> Result<Vec<f64>>
where
    F: Fn(&Path) -> Result<f64> + Sync,
{
    config.check()?;
    with_pool(config.threads, || {
        (0..config.n_paths as u64)
            .into_par_iter()
            .map(|k| sample_path(model, config, k).and_then(|p| f(&p)))
            .collect::<Result<Vec<f64>>>()
    })?
}

/// All paths of the configuration, in index order.
pub fn simulate_paths(model: &Model, config: &SimConfig) -> Result<Vec<Path>> {
    config.check()?;
    with_pool(config.threads, || {
        (0..config.n_paths as u64)
            .into_par_iter()
            .map(|k| sample_path(model, config, k))
            .collect::<Result<Vec<Path>>>()
    })?
}

fn start_time(config: &SimConfig) -> f64 {
    match &config.start {
        Start::Alpha => 0.0,
        Start::Context(ctx) => ctx.current_time,
    }
}

/// Estimate of `P(Z(t) = j)` from the configured start.
pub fn mc_transition_probability(model: &Model, t: f64, j: usize, config: &SimConfig) -> Result<McEstimate> {
    if t > config.horizon || t < start_time(config) {
        return Err(Error::Input(format!(
            "target time {t} outside [{}, {}]",
            start_time(config),
            config.horizon
        )));
    }
    let values = map_paths(model, config, |p| Ok(if p.state_at(t) == j { 1.0 } else { 0.0 }))?;
    Ok(McEstimate::from_samples(&values))
}

/// Discounted liabilities `∫_{(s,T]} κ(s)/κ(u) C(du)` along one path.
pub fn discounted_liabilities(model: &Model, path: &Path, s: f64, horizon: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut discount = 1.0;
    let sojourns = path.sojourns(f64::INFINITY);
    for (k, &(a, b, z)) in sojourns.iter().enumerate() {
        let lo = a.max(s);
        let hi = b.min(horizon);
        if hi <= lo {
            continue;
        }
        let phi = model.interest(z);
        let breaks: Vec<f64> = phi.atoms_in(lo, hi).iter().map(|x| x.at).collect();
        let d0 = discount;
        let mut err = None;
        let pay = ls_integrate_split(
            |u| match accumulation_factor(phi, lo, u) {
                Ok(acc) => d0 / acc,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            },
            model.sojourn(z),
            lo,
            hi,
            &breaks,
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        total += pay;
        discount = d0 / accumulation_factor(phi, lo, hi)?;
        if b <= horizon {
            if let Some(&(_, _, next)) = sojourns.get(k + 1) {
                total += discount * model.transition_payment(z, next, b);
            }
        }
    }
    Ok(total)
}

/// Estimate of the prospective reserve from the configured start.
pub fn mc_reserve(model: &Model, config: &SimConfig) -> Result<McEstimate> {
    if model.has_reserve_dependence() {
        return Err(Error::Precondition(
            "reserve-dependent payments must be made explicit first (transform_reserve_dependent)"
                .into(),
        ));
    }
    let s = start_time(config);
    let values = map_paths(model, config, |p| discounted_liabilities(model, p, s, config.horizon))?;
    Ok(McEstimate::from_samples(&values))
}

/// Martingale residual estimate with the two sides reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleEstimate {
    pub residual: McEstimate,
    /// Mean of `∫ Y dN^{jk}`.
    pub jumps: f64,
    /// Mean of `∫ Y I^j(u-) Λ^{jk}(du)`.
    pub compensator: f64,
}

/// `∫Y dN^{jk} - ∫Y I^j(u-) Λ^{jk}(du)` over `(a, b]` along one path.
/// Returns `(jump part, compensator part)`.
pub fn martingale_parts<Y: Fn(f64) -> f64>(
    model: &Model,
    path: &Path,
    y: &Y,
    y_breaks: &[f64],
    pair: (usize, usize),
    interval: (f64, f64),
) -> Result<(f64, f64)> {
    let (j, k) = pair;
    let (a, b) = interval;
    let mut jumps = 0.0;
    for w in path.points.windows(2) {
        let (t, to) = w[1];
        if w[0].1 == j && to == k && t > a && t <= b {
            jumps += y(t);
        }
    }
    let mut comp = 0.0;
    let rate = match model.rate(j, k) {
        Some(r) => r,
        None => return Ok((jumps, 0.0)),
    };
    for &(enter, exit, z) in &path.sojourns(f64::INFINITY) {
        if z != j {
            continue;
        }
        let lo = enter.max(a);
        let hi = exit.min(b);
        if hi <= lo {
            continue;
        }
        let ctx = HistoryContext::from_stopped(path, enter, j);
        let resolved = rate.resolve(&ctx);
        comp += ls_integrate_split(y, resolved.view(), lo, hi, y_breaks)?;
    }
    Ok((jumps, comp))
}

/// Estimate of `E[∫Y dN^{jk} - ∫Y I^j(u-) Λ^{jk}(du)]` over `(a, b]`.
pub fn martingale_residual<Y: Fn(f64) -> f64 + Sync>(
    model: &Model,
    y: Y,
    y_breaks: &[f64],
    pair: (usize, usize),
    interval: (f64, f64),
    config: &SimConfig,
) -> Result<MartingaleEstimate> {
    config.check()?;
    let parts = with_pool(config.threads, || {
        (0..config.n_paths as u64)
            .into_par_iter()
            .map(|idx| {
                let p = sample_path(model, config, idx)?;
                martingale_parts(model, &p, &y, y_breaks, pair, interval)
            })
            .collect::<Result<Vec<(f64, f64)>>>()
    })??;
    let diffs: Vec<f64> = parts.iter().map(|(n, c)| n - c).collect();
    let n = parts.len() as f64;
    Ok(MartingaleEstimate {
        residual: McEstimate::from_samples(&diffs),
        jumps: parts.iter().map(|p| p.0).sum::<f64>() / n,
        compensator: parts.iter().map(|p| p.1).sum::<f64>() / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, RateCurve};
    use crate::model::CumulativeRate;

    #[test]
    fn absorbing_everywhere() {
        let m = Model::new(vec![0, 1], 10.0);
        let p = sample_path(&m, &SimConfig::new(1, 7, 10.0), 0).unwrap();
        assert_eq!(p.points, vec![(0.0, 0)]);
    }

    #[test]
    fn forced_discrete_jump() {
        let m = Model::new(vec![0, 1], 10.0).with_rate(
            0,
            1,
            CumulativeRate::markov(RateCurve::from_atoms(vec![Atom::new(1.0, 1.0)])),
        );
        for k in 0..20 {
            let p = sample_path(&m, &SimConfig::new(20, 3, 10.0), k).unwrap();
            assert_eq!(p.points, vec![(0.0, 0), (1.0, 1)]);
        }
    }

    #[test]
    fn unreachable_target_is_exactly_zero() {
        let m = Model::new(vec![0, 1, 2], 10.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.1, 10.0)));
        let e = mc_transition_probability(&m, 10.0, 2, &SimConfig::new(500, 1, 10.0)).unwrap();
        assert_eq!((e.value, e.std_error), (0.0, 0.0));
    }

    #[test]
    fn zero_cash_flow_reserve() {
        let m = Model::new(vec![0, 1], 10.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.1, 10.0)));
        let e = mc_reserve(&m, &SimConfig::new(200, 1, 10.0)).unwrap();
        assert_eq!((e.value, e.std_error), (0.0, 0.0));
    }

    #[test]
    fn uniforms_are_open_interval() {
        let mut r = PathRng::new(0, 0);
        for _ in 0..1000 {
            let u = r.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
