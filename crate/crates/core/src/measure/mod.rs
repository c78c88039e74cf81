//! Stieltjes measures on the time axis, integration against them, transition
//! kernels and the savings account.

mod kernel;
pub mod quad;
mod shape;

pub use kernel::{JumpDraw, KernelPair, RowEntry};
pub use shape::{Interp, Piece, PiecewiseFn, Segment, Shape, Table};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::borrow::Cow;

/// Point mass of a measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub at: f64,
    pub mass: f64,
}

impl Atom {
    pub fn new(at: f64, mass: f64) -> Self {
        Self { at, mass }
    }
}

/// Signed measure `density(t) dt + Σ mass δ_at`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StieltjesMeasure {
    #[serde(rename = "segments", default)]
    pub density: PiecewiseFn,
    #[serde(default)]
    pub atoms: Vec<Atom>,
}

impl StieltjesMeasure {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_density(density: PiecewiseFn) -> Self {
        Self {
            density,
            atoms: Vec::new(),
        }
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Self {
        Self {
            density: PiecewiseFn::zero(),
            atoms,
        }
    }

    pub fn view(&self) -> MeasureRef<'_> {
        MeasureRef {
            density: &self.density,
            atoms: &self.atoms,
            offset: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.density.is_zero() && self.atoms.iter().all(|a| a.mass == 0.0)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            density: self.density.scaled(k),
            atoms: self.atoms.iter().map(|a| Atom::new(a.at, k * a.mass)).collect(),
        }
    }

    pub fn plus(&self, other: &StieltjesMeasure) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().copied());
        Self {
            density: self.density.plus(&other.density),
            atoms: merge_atoms(atoms),
        }
    }
}

/// Sort atoms by time and merge coincident ones.
pub fn merge_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by(|a, b| a.at.total_cmp(&b.at));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(last) if last.at == a.at => last.mass += a.mass,
            _ => out.push(a),
        }
    }
    out
}

/// Cumulative transition rate on its own axis (calendar time or duration).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RateCurve {
    #[serde(rename = "segments", default)]
    pub density: PiecewiseFn,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    /// Points where the cumulative rate explodes and restarts from zero.
    #[serde(default)]
    pub resets: Vec<f64>,
}

impl RateCurve {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(mu: f64, end: f64) -> Self {
        Self::from_density(PiecewiseFn::constant(mu, end))
    }

    pub fn from_density(density: PiecewiseFn) -> Self {
        Self {
            density,
            atoms: Vec::new(),
            resets: Vec::new(),
        }
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Self {
        Self {
            density: PiecewiseFn::zero(),
            atoms,
            resets: Vec::new(),
        }
    }

    /// A pole `strength / (reset - x)` on `[0, reset)`, followed by zero density.
    pub fn pole(strength: f64, reset: f64) -> Self {
        Self {
            density: PiecewiseFn::single(reset, Shape::Pole { strength, reset }),
            atoms: Vec::new(),
            resets: vec![reset],
        }
    }

    pub fn with_atoms(mut self, atoms: Vec<Atom>) -> Self {
        self.atoms = atoms;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.density.is_zero() && self.atoms.iter().all(|a| a.mass == 0.0) && self.resets.is_empty()
    }

    pub fn is_bounded(&self) -> bool {
        self.density.is_bounded()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            density: self.density.scaled(k),
            atoms: self.atoms.iter().map(|a| Atom::new(a.at, k * a.mass)).collect(),
            resets: self.resets.clone(),
        }
    }

    pub fn view(&self) -> MeasureRef<'_> {
        MeasureRef {
            density: &self.density,
            atoms: &self.atoms,
            offset: 0.0,
        }
    }
}

/// A rate curve placed on calendar time: axis value `x = t - offset`.
#[derive(Debug, Clone)]
pub struct ShiftedRate<'a> {
    pub curve: Cow<'a, RateCurve>,
    pub offset: f64,
}

impl<'a> ShiftedRate<'a> {
    pub fn new(curve: Cow<'a, RateCurve>, offset: f64) -> Self {
        Self { curve, offset }
    }

    pub fn view(&self) -> MeasureRef<'_> {
        MeasureRef {
            density: &self.curve.density,
            atoms: &self.curve.atoms,
            offset: self.offset,
        }
    }

    /// First reset strictly after calendar time `s`.
    pub fn next_reset_after(&self, s: f64) -> Option<f64> {
        self.curve
            .resets
            .iter()
            .map(|r| r + self.offset)
            .filter(|&r| r > s)
            .min_by(f64::total_cmp)
    }

    /// Strength of a pole ending at calendar time `r`, if any.
    pub fn pole_strength_at(&self, r: f64) -> f64 {
        self.curve
            .density
            .poles()
            .iter()
            .filter(|(reset, _)| (reset + self.offset - r).abs() <= 1e-12 * r.abs().max(1.0))
            .map(|(_, c)| c)
            .sum()
    }
}

/// Borrowed view of a measure, optionally shifted along the time axis.
#[derive(Debug, Clone, Copy)]
pub struct MeasureRef<'a> {
    pub density: &'a PiecewiseFn,
    pub atoms: &'a [Atom],
    pub offset: f64,
}

impl<'a> MeasureRef<'a> {
    pub fn density_at(&self, t: f64) -> f64 {
        self.density.value(t - self.offset)
    }

    pub fn density_left(&self, t: f64) -> f64 {
        self.density.value_left(t - self.offset)
    }

    /// Continuous part over `(a, b]`.
    pub fn continuous(&self, a: f64, b: f64) -> f64 {
        self.density.integral(a - self.offset, b - self.offset)
    }

    /// Atoms with calendar time in `(a, b]`, in time order.
    pub fn atoms_in(&self, a: f64, b: f64) -> Vec<Atom> {
        let mut v: Vec<Atom> = self
            .atoms
            .iter()
            .map(|x| Atom::new(x.at + self.offset, x.mass))
            .filter(|x| x.at > a && x.at <= b)
            .collect();
        v.sort_by(|x, y| x.at.total_cmp(&y.at));
        v
    }

    /// Total atom mass at calendar time `t`.
    pub fn atom_at(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|x| x.at + self.offset == t)
            .map(|x| x.mass)
            .sum()
    }

    /// Measure of `(a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.continuous(a, b) + self.atoms_in(a, b).iter().map(|x| x.mass).sum::<f64>()
    }

    /// Density breakpoints in calendar time strictly inside `(a, b)`.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        self.density
            .breakpoints(a - self.offset, b - self.offset)
            .into_iter()
            .map(|x| x + self.offset)
            .collect()
    }

    /// Smooth pieces of the density on `[a, b]` in calendar time.
    pub fn pieces(&self, a: f64, b: f64) -> Vec<(f64, f64, Cow<'a, Shape>)> {
        self.density
            .pieces(a - self.offset, b - self.offset)
            .into_iter()
            .map(|p| (p.lo + self.offset, p.hi + self.offset, p.shape))
            .collect()
    }
}

/// Result of evaluating a rate over an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RateIncrement {
    pub continuous: f64,
    pub atoms: Vec<Atom>,
}

const LS_ABS_TOL: f64 = 1e-14;
const LS_REL_TOL: f64 = 1e-13;

/// `∫_{(a,b]} f(u) m(du)`.
pub fn ls_integrate<F: FnMut(f64) -> f64>(f: F, m: MeasureRef<'_>, a: f64, b: f64) -> Result<f64> {
    ls_integrate_split(f, m, a, b, &[])
}

/// As [`ls_integrate`], with extra points where `f` may be discontinuous.
pub fn ls_integrate_split<F: FnMut(f64) -> f64>(
    mut f: F,
    m: MeasureRef<'_>,
    a: f64,
    b: f64,
    f_breaks: &[f64],
) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Input(format!("integration bounds must be finite, got ({a}, {b}]")));
    }
    if b <= a {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (lo, hi, shape) in m.pieces(a, b) {
        if shape.constant_on(lo - m.offset, hi - m.offset) == Some(0.0) {
            continue;
        }
        let mut poles = Vec::new();
        shape.poles(&mut poles);
        if poles.iter().any(|(r, _)| r + m.offset <= hi) {
            return Err(Error::Domain(format!(
                "integration interval ({a}, {b}] reaches the pole at {}; split at the reset point",
                hi
            )));
        }
        let mut cuts: Vec<f64> = f_breaks.iter().copied().filter(|&x| x > lo && x < hi).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut x0 = lo;
        for x1 in cuts.into_iter().chain(std::iter::once(hi)) {
            let off = m.offset;
            total += quad::integrate(
                |u| f(u) * shape.value(u - off),
                x0,
                x1,
                LS_ABS_TOL,
                LS_REL_TOL,
            );
            x0 = x1;
        }
    }
    for atom in m.atoms_in(a, b) {
        total += f(atom.at) * atom.mass;
    }
    Ok(total)
}

/// Accumulation factor `exp(∫ density) · Π (1 + atom)` over `(s, t]`.
pub fn accumulation_factor(m: MeasureRef<'_>, s: f64, t: f64) -> Result<f64> {
    if t <= s {
        return Ok(1.0);
    }
    let mut factor = m.continuous(s, t).exp();
    for atom in m.atoms_in(s, t) {
        if atom.mass <= -1.0 {
            return Err(Error::Domain(format!(
                "interest atom {} at t={} is not greater than -1",
                atom.mass, atom.at
            )));
        }
        factor *= 1.0 + atom.mass;
    }
    Ok(factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ls_integrate_examples() {
        let m = StieltjesMeasure::from_density(PiecewiseFn::constant(0.1, 10.0));
        assert!((ls_integrate(|_| 1.0, m.view(), 0.0, 10.0).unwrap() - 1.0).abs() < 1e-14);
        let a = StieltjesMeasure::from_atoms(vec![Atom::new(2.0, 0.5)]);
        assert_eq!(ls_integrate(|u| u, a.view(), 0.0, 3.0).unwrap(), 1.0);
        let z = StieltjesMeasure::zero();
        assert_eq!(ls_integrate(|u| u.sin(), z.view(), 0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn ls_integrate_rejects_pole() {
        let r = RateCurve::pole(1.0, 1.0);
        assert!(matches!(ls_integrate(|_| 1.0, r.view(), 0.0, 2.0), Err(Error::Domain(_))));
        let v = ls_integrate(|_| 1.0, r.view(), 0.0, 0.5).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn savings_account_examples() {
        let c = StieltjesMeasure::from_density(PiecewiseFn::constant(0.05, 10.0));
        assert!((accumulation_factor(c.view(), 0.0, 10.0).unwrap() - 0.5f64.exp()).abs() < 1e-14);
        let a = StieltjesMeasure::from_atoms(vec![Atom::new(1.0, 0.05), Atom::new(2.0, 0.05)]);
        assert!((accumulation_factor(a.view(), 0.0, 2.0).unwrap() - 1.1025).abs() < 1e-15);
        assert_eq!(accumulation_factor(StieltjesMeasure::zero().view(), 0.0, 5.0).unwrap(), 1.0);
        let bad = StieltjesMeasure::from_atoms(vec![Atom::new(1.0, -1.0)]);
        assert!(accumulation_factor(bad.view(), 0.0, 2.0).is_err());
    }

    #[test]
    fn shifted_view_moves_atoms() {
        let r = RateCurve::from_atoms(vec![Atom::new(1.0, 0.3)]);
        let s = ShiftedRate::new(Cow::Borrowed(&r), 2.0);
        assert_eq!(s.view().atoms_in(2.5, 3.0), vec![Atom::new(3.0, 0.3)]);
        assert_eq!(s.view().atom_at(3.0), 0.3);
    }
}
