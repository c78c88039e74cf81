//! Survival and jump kernels of one state, and exact sampling from them.
//!
//! For a row of rates out of state `i` seen from time `s`,
//!
//! ```text
//! p(t)    = exp(-(Λc(t∧ρ) - Λc(s))) · Π_{s<u≤t∧ρ} (1 - ΔΛ(u))
//! p^j(t)  = ∫_{(s,t]∩(s,ρ)} p(u-) Λ^j(du)
//! ```
//!
//! where `ρ` is the first reset after `s`. Time is cut into pieces on which
//! every density is one smooth shape. On a piece the jump mass is computed in
//! the variable `v = 1 - exp(-H)` (H the hazard since the piece start), so
//! that `Σ_j p^j = 1 - p` holds to rounding whatever the shapes.

use super::quad;
use super::{Shape, ShiftedRate};
use crate::error::{Error, Result};
use std::borrow::Cow;
use std::sync::OnceLock;

const TINY: f64 = 1e-300;
// Bound on the Gauss-Kronrod difference; the Kronrod value itself is far more
// accurate on these smooth integrands.
const QUAD_TOL: f64 = 1e-12;

/// One outgoing rate of the row, tagged with its destination label.
#[derive(Debug, Clone)]
pub struct RowEntry<'a> {
    pub dest: usize,
    pub rate: ShiftedRate<'a>,
}

#[derive(Debug, Clone)]
struct KPiece<'a> {
    lo: f64,
    hi: f64,
    p_lo: f64,
    hazard: f64,
    shapes: Vec<(Cow<'a, Shape>, f64)>,
    ratio: Option<Vec<f64>>,
    atom: Vec<f64>,
}

/// Jump mass accumulated before a piece and the continuous mass inside it.
#[derive(Debug, Clone)]
struct JumpRow {
    cum_lo: Vec<f64>,
    full: Vec<f64>,
}

/// Outcome of drawing the next jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpDraw {
    /// The path never leaves the state (defective part of the law).
    Never,
    At { time: f64, dest: usize },
}

/// Survival function and sub-distribution jump kernels from a fixed start.
#[derive(Debug, Clone)]
pub struct KernelPair<'a> {
    start: f64,
    rho: f64,
    dests: Vec<usize>,
    pieces: Vec<KPiece<'a>>,
    /// Built on first use; sampling never needs it.
    jump_rows: OnceLock<Result<Vec<JumpRow>>>,
}

impl<'a> KernelPair<'a> {
    /// Build the kernels of `row` from time `s` onward.
    pub fn new(row: Vec<RowEntry<'a>>, s: f64) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::Input(format!("kernel start must be finite, got {s}")));
        }
        let rho = row
            .iter()
            .filter_map(|e| e.rate.next_reset_after(s))
            .fold(f64::INFINITY, f64::min);
        let mut cuts = Vec::new();
        for e in &row {
            let end = if rho.is_finite() { rho } else { f64::MAX };
            cuts.extend(e.rate.view().breakpoints(s, end));
            cuts.extend(
                e.rate
                    .view()
                    .atoms_in(s, end)
                    .iter()
                    .filter(|a| a.at < rho)
                    .map(|a| a.at),
            );
        }
        cuts.push(s);
        cuts.retain(|&x| x >= s && x < rho);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.push(rho);

        let dests: Vec<usize> = row.iter().map(|e| e.dest).collect();
        let n = row.len();
        let mut pieces = Vec::with_capacity(cuts.len());
        let mut p = 1.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let probe = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 };
            let shapes: Vec<(Cow<'a, Shape>, f64)> = row
                .iter()
                .map(|e| {
                    let off = e.rate.offset;
                    let shape = match &e.rate.curve {
                        Cow::Borrowed(c) => c.density.shape_at(probe - off),
                        Cow::Owned(c) => Cow::Owned(c.density.shape_at(probe - off).into_owned()),
                    };
                    (shape, off)
                })
                .collect();
            let hazard = if hi.is_finite() {
                shapes.iter().map(|(sh, off)| sh.integral(lo - off, hi - off)).sum()
            } else {
                let rate: f64 = shapes.iter().map(|(sh, off)| sh.value(lo - off)).sum();
                if rate > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            };
            let ratio = constant_ratio(&shapes, lo, hi);
            let mut piece = KPiece {
                lo,
                hi,
                p_lo: p,
                hazard,
                shapes,
                ratio,
                atom: vec![0.0; n],
            };
            let p_left = clamp(p * (-hazard).exp());
            if hi < rho {
                for (k, e) in row.iter().enumerate() {
                    piece.atom[k] = e.rate.view().atom_at(hi);
                }
            }
            let m_tot: f64 = piece.atom.iter().sum();
            if m_tot > 1.0 + 1e-12 {
                return Err(Error::Input(format!(
                    "simultaneous atoms at {hi} sum to {m_tot} > 1"
                )));
            }
            p = clamp(p_left * (1.0 - m_tot).max(0.0));
            pieces.push(piece);
        }
        Ok(Self {
            start: s,
            rho,
            dests,
            pieces,
            jump_rows: OnceLock::new(),
        })
    }

    fn jump_rows(&self) -> Result<&[JumpRow]> {
        self.jump_rows
            .get_or_init(|| {
                let n = self.dests.len();
                let mut cum = vec![0.0; n];
                let mut rows = Vec::with_capacity(self.pieces.len());
                for pc in &self.pieces {
                    let full = jump_increment(pc, pc.hi, -(-pc.hazard).exp_m1())?;
                    let p_left = clamp(pc.p_lo * (-pc.hazard).exp());
                    let next: Vec<f64> = (0..n).map(|k| cum[k] + full[k] + p_left * pc.atom[k]).collect();
                    rows.push(JumpRow {
                        cum_lo: std::mem::replace(&mut cum, next),
                        full,
                    });
                }
                Ok(rows)
            })
            .as_deref()
            .map_err(Clone::clone)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    /// First reset after the start (`∞` if none).
    pub fn reset_horizon(&self) -> f64 {
        self.rho
    }

    pub fn destinations(&self) -> &[usize] {
        &self.dests
    }

    fn piece_index(&self, t: f64) -> Option<usize> {
        if t < self.start || t >= self.rho {
            return None;
        }
        let idx = self.pieces.partition_point(|p| p.lo <= t);
        Some(idx.saturating_sub(1))
    }

    fn hazard_to(&self, piece: &KPiece<'_>, t: f64) -> f64 {
        piece
            .shapes
            .iter()
            .map(|(sh, off)| sh.integral(piece.lo - off, t - off))
            .sum()
    }

    /// `p_s(t)`: probability of no jump in `(s, t]`.
    pub fn survival(&self, t: f64) -> f64 {
        if t < self.start {
            return 1.0;
        }
        match self.piece_index(t) {
            Some(k) => {
                let pc = &self.pieces[k];
                clamp(pc.p_lo * (-self.hazard_to(pc, t)).exp())
            }
            None => 0.0,
        }
    }

    /// Left limit `p_s(t-)`.
    pub fn survival_left(&self, t: f64) -> f64 {
        if t <= self.start {
            return 1.0;
        }
        let idx = self.pieces.partition_point(|p| p.lo < t).saturating_sub(1);
        let pc = &self.pieces[idx];
        if t >= self.rho {
            return 0.0;
        }
        clamp(pc.p_lo * (-self.hazard_to(pc, t)).exp())
    }

    /// Jump kernels `p_s^j(t)` in the order of [`Self::destinations`].
    pub fn jumps(&self, t: f64) -> Result<Vec<f64>> {
        let n = self.dests.len();
        if t <= self.start || self.pieces.is_empty() {
            return Ok(vec![0.0; n]);
        }
        let (pc, v) = match self.piece_index(t) {
            Some(k) => (k, -(-self.hazard_to(&self.pieces[k], t)).exp_m1()),
            None => {
                let last = self.jump_rows()?.last().expect("non-empty");
                return Ok((0..n).map(|k| last.cum_lo[k] + last.full[k]).collect());
            }
        };
        let row = &self.jump_rows()?[pc];
        let inc = jump_increment(&self.pieces[pc], t, v)?;
        Ok((0..n).map(|k| row.cum_lo[k] + inc[k]).collect())
    }

    /// Jump kernel towards destination label `dest` (zero if not in the row).
    pub fn jump(&self, dest: usize, t: f64) -> Result<f64> {
        let all = self.jumps(t)?;
        Ok(self
            .dests
            .iter()
            .position(|&d| d == dest)
            .map_or(0.0, |k| all[k]))
    }

    /// Mass never leaving the state, `p_s(∞-)`.
    pub fn defect(&self) -> f64 {
        if self.rho.is_finite() {
            return 0.0;
        }
        match self.pieces.last() {
            None => 1.0,
            Some(last) if last.hazard > 0.0 => 0.0,
            Some(last) => last.p_lo,
        }
    }

    /// Draw the next jump using two uniforms in (0, 1).
    pub fn sample(&self, u1: f64, u2: f64) -> Result<JumpDraw> {
        for pc in &self.pieces {
            let p_left = clamp(pc.p_lo * (-pc.hazard).exp());
            if p_left <= u1 {
                if pc.p_lo <= u1 {
                    // Only reachable through rounding at a piece boundary.
                    return Ok(JumpDraw::At {
                        time: pc.lo,
                        dest: self.pick_by_density(pc, pc.lo, u2),
                    });
                }
                let target = (pc.p_lo / u1).ln();
                let time = self.invert(pc, target)?;
                return Ok(JumpDraw::At {
                    time,
                    dest: self.pick_by_density(pc, time, u2),
                });
            }
            let m_tot: f64 = pc.atom.iter().sum();
            if m_tot > 0.0 && p_left * (1.0 - m_tot) <= u1 {
                let mut acc = 0.0;
                let target = u2 * m_tot;
                for (k, m) in pc.atom.iter().enumerate() {
                    acc += m;
                    if target < acc {
                        return Ok(JumpDraw::At {
                            time: pc.hi,
                            dest: self.dests[k],
                        });
                    }
                }
                let k = pc.atom.iter().rposition(|&m| m > 0.0).unwrap_or(0);
                return Ok(JumpDraw::At {
                    time: pc.hi,
                    dest: self.dests[k],
                });
            }
        }
        Ok(JumpDraw::Never)
    }

    fn pick_by_density(&self, pc: &KPiece<'_>, t: f64, u2: f64) -> usize {
        let weights = match &pc.ratio {
            Some(r) => r.clone(),
            None => ratios_at(&pc.shapes, pc.lo, pc.hi, t),
        };
        let mut acc = 0.0;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if u2 < acc {
                return self.dests[k];
            }
        }
        let k = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        self.dests[k]
    }

    /// Time `u` in the piece with hazard `H(lo, u) = target`.
    fn invert(&self, pc: &KPiece<'_>, target: f64) -> Result<f64> {
        invert_hazard(pc, target)
    }
}

fn clamp(p: f64) -> f64 {
    if p < TINY {
        0.0
    } else {
        p
    }
}

fn constant_ratio(shapes: &[(Cow<'_, Shape>, f64)], lo: f64, hi: f64) -> Option<Vec<f64>> {
    let n = shapes.len();
    let hi_probe = if hi.is_finite() { hi } else { lo + 1.0 };
    let consts: Vec<Option<f64>> = shapes
        .iter()
        .map(|(sh, off)| sh.constant_on(lo - off, hi_probe - off))
        .collect();
    let active: Vec<usize> = (0..n).filter(|&k| consts[k] != Some(0.0)).collect();
    if active.len() <= 1 {
        let mut r = vec![0.0; n];
        if let Some(&k) = active.first() {
            r[k] = 1.0;
        }
        return Some(r);
    }
    if consts.iter().all(Option::is_some) {
        let total: f64 = consts.iter().flatten().sum();
        if total > 0.0 {
            return Some(consts.iter().map(|c| c.unwrap_or(0.0) / total).collect());
        }
    }
    None
}

fn ratios_at(shapes: &[(Cow<'_, Shape>, f64)], lo: f64, hi: f64, t: f64) -> Vec<f64> {
    let vals: Vec<f64> = shapes.iter().map(|(sh, off)| sh.value(t - off).max(0.0)).collect();
    let total: f64 = vals.iter().sum();
    if total > 0.0 && total.is_finite() {
        return vals.iter().map(|v| v / total).collect();
    }
    if total.is_infinite() {
        // At a pole only the exploding rates carry weight.
        let inf: Vec<f64> = vals.iter().map(|v| if v.is_infinite() { 1.0 } else { 0.0 }).collect();
        let c: f64 = inf.iter().sum();
        return inf.iter().map(|v| v / c).collect();
    }
    // Zero total density at `t`: fall back to the shares of the piece hazard.
    let hi = if hi.is_finite() { hi } else { lo + 1.0 };
    let ints: Vec<f64> = shapes.iter().map(|(sh, off)| sh.integral(lo - off, hi - off)).collect();
    let total: f64 = ints.iter().sum();
    if total > 0.0 && total.is_finite() {
        ints.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / shapes.len() as f64; shapes.len()]
    }
}

/// Continuous jump mass of the piece on `(lo, t]`, with `v = 1 - exp(-H(lo, t))`.
fn jump_increment(pc: &KPiece<'_>, t: f64, v: f64) -> Result<Vec<f64>> {
    let n = pc.shapes.len();
    if v <= 0.0 || pc.p_lo == 0.0 {
        return Ok(vec![0.0; n]);
    }
    if let Some(r) = &pc.ratio {
        return Ok(r.iter().map(|x| pc.p_lo * x * v).collect());
    }
    let singular = pc.shapes.iter().any(|(sh, _)| sh.has_pole());
    let shares = if t.is_finite() && !singular {
        // ∫ exp(-H(lo, u)) μ_k(u) du, rescaled below so the total is exactly v.
        quad::integrate_vec(
            |u, out| {
                let h: f64 = pc.shapes.iter().map(|(sh, off)| sh.integral(pc.lo - off, u - off)).sum();
                let surv = (-h).exp();
                for (o, (sh, off)) in out.iter_mut().zip(&pc.shapes) {
                    *o = surv * sh.value(u - off).max(0.0);
                }
            },
            pc.lo,
            t,
            n,
            QUAD_TOL * 1e-3,
            QUAD_TOL,
        )
    } else {
        let mut err = None;
        let res = quad::integrate_vec(
            |w, out| match invert_hazard(pc, -(-w).ln_1p()) {
                Ok(u) => out.copy_from_slice(&ratios_at(&pc.shapes, pc.lo, pc.hi, u)),
                Err(e) => {
                    err = Some(e);
                    out.iter_mut().for_each(|x| *x = 0.0);
                }
            },
            0.0,
            v,
            n,
            QUAD_TOL,
            QUAD_TOL,
        );
        if let Some(e) = err {
            return Err(e);
        }
        res
    };
    let total: f64 = shares.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Internal(format!("jump kernel quadrature failed on [{}, {t}]", pc.lo)));
    }
    Ok(shares.iter().map(|x| pc.p_lo * v * (x / total)).collect())
}

fn invert_hazard(pc: &KPiece<'_>, target: f64) -> Result<f64> {
    let lo = pc.lo;
    if target <= 0.0 {
        return Ok(lo);
    }
    let active: Vec<&(Cow<'_, Shape>, f64)> = pc
        .shapes
        .iter()
        .filter(|(sh, off)| {
            let probe = if pc.hi.is_finite() { pc.hi } else { lo + 1.0 };
            sh.constant_on(lo - off, probe - off) != Some(0.0)
        })
        .collect();
    let probe = if pc.hi.is_finite() { pc.hi } else { lo + 1.0 };
    let consts: Option<f64> = active
        .iter()
        .map(|(sh, off)| sh.constant_on(lo - off, probe - off))
        .sum();
    if let Some(rate) = consts {
        if rate > 0.0 {
            return Ok((lo + target / rate).min(pc.hi));
        }
        return Err(Error::Internal(format!(
            "hazard inversion on a piece without intensity at t={lo}"
        )));
    }
    if let [(sh, off)] = active.as_slice() {
        if let Shape::Pole { strength, reset } = sh.as_ref() {
            let r = reset + off;
            return Ok(r - (r - lo) * (-target / strength).exp());
        }
        if let Shape::Linear { intercept, slope } = sh.as_ref() {
            // a (u-lo) + s/2 ((u-off)^2 - (lo-off)^2) = target
            let x0 = lo - off;
            let m0 = intercept + slope * x0;
            let disc = m0 * m0 + 2.0 * slope * target;
            if disc >= 0.0 && m0 + disc.sqrt() > 0.0 {
                let du = 2.0 * target / (m0 + disc.sqrt());
                return Ok((lo + du).min(pc.hi));
            }
        }
    }
    newton_bisect(pc, target)
}

fn newton_bisect(pc: &KPiece<'_>, target: f64) -> Result<f64> {
    let h = |u: f64| -> f64 {
        pc.shapes
            .iter()
            .map(|(sh, off)| sh.integral(pc.lo - off, u - off))
            .sum::<f64>()
            - target
    };
    let dens = |u: f64| -> f64 { pc.shapes.iter().map(|(sh, off)| sh.value(u - off)).sum() };
    let mut a = pc.lo;
    let mut b = pc.hi;
    if !b.is_finite() {
        let mut step = 1.0;
        b = a + step;
        while h(b) < 0.0 {
            step *= 2.0;
            b = a + step;
            if step > 1e12 {
                return Err(Error::Internal("hazard inversion failed to bracket".into()));
            }
        }
    }
    let mut u = 0.5 * (a + b);
    for _ in 0..300 {
        let fu = h(u);
        if fu == 0.0 {
            return Ok(u);
        }
        if fu < 0.0 {
            a = u;
        } else {
            b = u;
        }
        let d = dens(u);
        let mut next = if d > 0.0 && d.is_finite() { u - fu / d } else { f64::NAN };
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if (next - u).abs() <= 1e-15 * u.abs().max(1.0) || b - a <= 1e-15 * u.abs().max(1.0) {
            return Ok(next);
        }
        u = next;
    }
    Err(Error::Internal(format!(
        "hazard inversion did not converge on [{}, {}] for target {target}",
        pc.lo, pc.hi
    )))
}
