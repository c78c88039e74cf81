//! Piecewise functions on the real half-line.
//!
//! A [`PiecewiseFn`] is a contiguous list of [`Segment`]s starting at 0, each
//! carrying a parametric [`Shape`] with a closed-form primitive. Beyond the
//! last segment the function is extended by the constant value it has at the
//! end of that segment (a pole segment extends by zero, the rate restarts
//! after its reset point).

use serde::{Deserialize, Serialize};
use std::borrow::Cow;

/// Interpolation rule of a tabulated shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    /// Value `values[m]` on `[knots[m], knots[m+1])`.
    #[default]
    LeftConstant,
    /// Linear between knots. A repeated knot encodes a jump (right-continuous).
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub interp: Interp,
}

impl Table {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, interp: Interp) -> Self {
        Self {
            knots,
            values,
            interp,
        }
    }

    fn value(&self, x: f64) -> f64 {
        let n = self.knots.len();
        let idx = self.knots.partition_point(|&k| k <= x);
        if idx == 0 {
            return self.values[0];
        }
        match self.interp {
            Interp::LeftConstant => self.values[idx - 1],
            Interp::Linear => {
                if idx == n {
                    self.values[n - 1]
                } else {
                    lerp(
                        self.knots[idx - 1],
                        self.values[idx - 1],
                        self.knots[idx],
                        self.values[idx],
                        x,
                    )
                }
            }
        }
    }

    fn value_left(&self, x: f64) -> f64 {
        let n = self.knots.len();
        let idx = self.knots.partition_point(|&k| k < x);
        if idx == 0 {
            return self.values[0];
        }
        match self.interp {
            Interp::LeftConstant => self.values[idx - 1],
            Interp::Linear => {
                if idx == n {
                    self.values[n - 1]
                } else {
                    lerp(
                        self.knots[idx - 1],
                        self.values[idx - 1],
                        self.knots[idx],
                        self.values[idx],
                        x,
                    )
                }
            }
        }
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        let mut lo = a;
        let start = self.knots.partition_point(|&k| k <= a);
        for &k in self.knots[start..].iter() {
            if k >= b {
                break;
            }
            if k > lo {
                total += self.piece_integral(lo, k);
                lo = k;
            }
        }
        total + self.piece_integral(lo, b)
    }

    // [lo, hi] contains no knot in its interior.
    fn piece_integral(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        match self.interp {
            Interp::LeftConstant => self.value(lo) * (hi - lo),
            Interp::Linear => 0.5 * (self.value(lo) + self.value_left(hi)) * (hi - lo),
        }
    }
}

fn lerp(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    if x1 <= x0 {
        return y1;
    }
    let w = (x - x0) / (x1 - x0);
    y0 + w * (y1 - y0)
}

/// Parametric density or payment-rate shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Constant(f64),
    /// `intercept + slope * x`.
    Linear { intercept: f64, slope: f64 },
    /// Gompertz-Makeham form `a + b * exp(c * x)`.
    Makeham { a: f64, b: f64, c: f64 },
    Table(Table),
    /// `strength / (reset - x)`; the segment carrying it must end at `reset`.
    Pole { strength: f64, reset: f64 },
    Sum(Vec<Shape>),
    /// `Σ_p coeffs[p] * (x - origin)^p`.
    Cubic { origin: f64, coeffs: [f64; 4] },
}

fn cubic_at(origin: f64, c: &[f64; 4], x: f64) -> f64 {
    let d = x - origin;
    ((c[3] * d + c[2]) * d + c[1]) * d + c[0]
}

fn cubic_antiderivative(origin: f64, c: &[f64; 4], x: f64) -> f64 {
    let d = x - origin;
    (((c[3] / 4.0 * d + c[2] / 3.0) * d + c[1] / 2.0) * d + c[0]) * d
}

impl Shape {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Shape::Constant(v) => *v,
            Shape::Linear { intercept, slope } => intercept + slope * x,
            Shape::Makeham { a, b, c } => a + b * (c * x).exp(),
            Shape::Table(t) => t.value(x),
            Shape::Pole { strength, reset } => {
                if x < *reset {
                    strength / (reset - x)
                } else {
                    f64::INFINITY
                }
            }
            Shape::Sum(parts) => parts.iter().map(|p| p.value(x)).sum(),
            Shape::Cubic { origin, coeffs } => cubic_at(*origin, coeffs, x),
        }
    }

    pub fn value_left(&self, x: f64) -> f64 {
        match self {
            Shape::Table(t) => t.value_left(x),
            Shape::Sum(parts) => parts.iter().map(|p| p.value_left(x)).sum(),
            _ => self.value(x),
        }
    }

    /// `∫_a^b value(x) dx` for `a <= b`. Infinite when `b` reaches a pole.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self {
            Shape::Constant(v) => v * (b - a),
            Shape::Linear { intercept, slope } => {
                (b - a) * (intercept + 0.5 * slope * (a + b))
            }
            Shape::Makeham { a: m, b: g, c } => {
                let d = b - a;
                let exp_part = if *c == 0.0 {
                    g * d
                } else {
                    g * (c * a).exp() * (c * d).exp_m1() / c
                };
                m * d + exp_part
            }
            Shape::Table(t) => t.integral(a, b),
            Shape::Pole { strength, reset } => {
                if b >= *reset {
                    f64::INFINITY
                } else {
                    strength * ((b - a) / (reset - b)).ln_1p()
                }
            }
            Shape::Sum(parts) => parts.iter().map(|p| p.integral(a, b)).sum(),
            Shape::Cubic { origin, coeffs } => {
                cubic_antiderivative(*origin, coeffs, b) - cubic_antiderivative(*origin, coeffs, a)
            }
        }
    }

    /// Value if the shape is constant on `[a, b)`.
    pub fn constant_on(&self, a: f64, b: f64) -> Option<f64> {
        match self {
            Shape::Constant(v) => Some(*v),
            Shape::Linear { intercept, slope } if *slope == 0.0 => Some(*intercept),
            Shape::Makeham { a: m, b: g, c } if *g == 0.0 || *c == 0.0 => Some(m + g),
            Shape::Table(t) => {
                let inner = t.knots.iter().any(|&k| k > a && k < b);
                if inner {
                    return None;
                }
                match t.interp {
                    Interp::LeftConstant => Some(t.value(a)),
                    Interp::Linear => {
                        let (va, vb) = (t.value(a), t.value_left(b));
                        (va == vb).then_some(va)
                    }
                }
            }
            Shape::Sum(parts) => parts.iter().map(|p| p.constant_on(a, b)).sum(),
            Shape::Cubic { coeffs, .. } if coeffs[1..].iter().all(|&c| c == 0.0) => Some(coeffs[0]),
            _ => None,
        }
    }

    /// Lower and upper bound of the shape on `[a, b)`.
    pub fn bounds(&self, a: f64, b: f64) -> (f64, f64) {
        match self {
            Shape::Constant(v) => (*v, *v),
            Shape::Linear { .. } | Shape::Makeham { .. } => {
                let (va, vb) = (self.value(a), self.value_left(b));
                (va.min(vb), va.max(vb))
            }
            Shape::Table(t) => {
                let mut lo = t.value(a).min(t.value_left(b));
                let mut hi = t.value(a).max(t.value_left(b));
                for (k, v) in t.knots.iter().zip(&t.values) {
                    if *k > a && *k < b {
                        lo = lo.min(*v);
                        hi = hi.max(*v);
                    }
                }
                (lo, hi)
            }
            Shape::Pole { strength, reset } => {
                let at_a = strength / (reset - a);
                if *strength >= 0.0 {
                    (at_a, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, at_a)
                }
            }
            Shape::Sum(parts) => parts.iter().fold((0.0, 0.0), |(lo, hi), p| {
                let (l, h) = p.bounds(a, b);
                (lo + l, hi + h)
            }),
            Shape::Cubic { origin, coeffs: c } => {
                // endpoints and the roots of the derivative 3 c3 d^2 + 2 c2 d + c1
                let mut xs = vec![a, b];
                let (qa, qb, qc) = (3.0 * c[3], 2.0 * c[2], c[1]);
                if qa == 0.0 {
                    if qb != 0.0 {
                        xs.push(origin - qc / qb);
                    }
                } else {
                    let disc = qb * qb - 4.0 * qa * qc;
                    if disc >= 0.0 {
                        let r = disc.sqrt();
                        xs.push(origin + (-qb - r) / (2.0 * qa));
                        xs.push(origin + (-qb + r) / (2.0 * qa));
                    }
                }
                xs.iter()
                    .filter(|&&x| x >= a && x <= b)
                    .map(|&x| cubic_at(*origin, c, x))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
            }
        }
    }

    pub fn scaled(&self, k: f64) -> Shape {
        match self {
            Shape::Constant(v) => Shape::Constant(k * v),
            Shape::Linear { intercept, slope } => Shape::Linear {
                intercept: k * intercept,
                slope: k * slope,
            },
            Shape::Makeham { a, b, c } => Shape::Makeham {
                a: k * a,
                b: k * b,
                c: *c,
            },
            Shape::Table(t) => Shape::Table(Table {
                knots: t.knots.clone(),
                values: t.values.iter().map(|v| k * v).collect(),
                interp: t.interp,
            }),
            Shape::Pole { strength, reset } => Shape::Pole {
                strength: k * strength,
                reset: *reset,
            },
            Shape::Sum(parts) => Shape::Sum(parts.iter().map(|p| p.scaled(k)).collect()),
            Shape::Cubic { origin, coeffs } => Shape::Cubic {
                origin: *origin,
                coeffs: coeffs.map(|c| k * c),
            },
        }
    }

    /// Sum of two shapes, folding constants and linear parts where possible.
    pub fn plus(&self, other: &Shape) -> Shape {
        use Shape::*;
        match (self, other) {
            (Constant(a), Constant(b)) => Constant(a + b),
            (Constant(c), Linear { intercept, slope }) | (Linear { intercept, slope }, Constant(c)) => {
                Linear {
                    intercept: intercept + c,
                    slope: *slope,
                }
            }
            (
                Linear {
                    intercept: i1,
                    slope: s1,
                },
                Linear {
                    intercept: i2,
                    slope: s2,
                },
            ) => Linear {
                intercept: i1 + i2,
                slope: s1 + s2,
            },
            (Constant(c), Cubic { origin, coeffs }) | (Cubic { origin, coeffs }, Constant(c)) => {
                let mut k = *coeffs;
                k[0] += c;
                Cubic {
                    origin: *origin,
                    coeffs: k,
                }
            }
            (Constant(c), Makeham { a, b, c: g }) | (Makeham { a, b, c: g }, Constant(c)) => {
                Makeham {
                    a: a + c,
                    b: *b,
                    c: *g,
                }
            }
            _ => {
                let mut parts = Vec::new();
                for s in [self, other] {
                    match s {
                        Sum(p) => parts.extend(p.iter().cloned()),
                        Constant(v) if *v == 0.0 => {}
                        other => parts.push(other.clone()),
                    }
                }
                match parts.len() {
                    0 => Constant(0.0),
                    1 => parts.pop().unwrap_or(Constant(0.0)),
                    _ => Sum(parts),
                }
            }
        }
    }

    pub fn has_pole(&self) -> bool {
        match self {
            Shape::Pole { .. } => true,
            Shape::Sum(parts) => parts.iter().any(Shape::has_pole),
            _ => false,
        }
    }

    /// Pole parameters `(reset, strength)` contained in the shape.
    pub fn poles(&self, out: &mut Vec<(f64, f64)>) {
        match self {
            Shape::Pole { strength, reset } => out.push((*reset, *strength)),
            Shape::Sum(parts) => parts.iter().for_each(|p| p.poles(out)),
            _ => {}
        }
    }

    /// Table knots strictly inside `(a, b)`.
    pub fn knots_in(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        match self {
            Shape::Table(t) => out.extend(t.knots.iter().copied().filter(|&k| k > a && k < b)),
            Shape::Sum(parts) => parts.iter().for_each(|p| p.knots_in(a, b, out)),
            _ => {}
        }
    }

    /// All parameters finite and tables well formed.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Shape::Constant(v) => v.is_finite(),
            Shape::Linear { intercept, slope } => intercept.is_finite() && slope.is_finite(),
            Shape::Makeham { a, b, c } => a.is_finite() && b.is_finite() && c.is_finite(),
            Shape::Table(t) => {
                !t.knots.is_empty()
                    && t.knots.len() == t.values.len()
                    && t.knots.iter().chain(&t.values).all(|v| v.is_finite())
                    && t.knots.windows(2).all(|w| w[0] <= w[1])
            }
            Shape::Pole { strength, reset } => strength.is_finite() && reset.is_finite(),
            Shape::Sum(parts) => parts.iter().all(Shape::is_well_formed),
            Shape::Cubic { origin, coeffs } => origin.is_finite() && coeffs.iter().all(|c| c.is_finite()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub shape: Shape,
}

impl Segment {
    pub fn new(start: f64, end: f64, shape: Shape) -> Self {
        Self { start, end, shape }
    }
}

/// A function given by contiguous parametric segments from 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PiecewiseFn {
    pub segments: Vec<Segment>,
}

/// One smooth stretch of a [`PiecewiseFn`] clipped to a query interval.
#[derive(Debug, Clone)]
pub struct Piece<'a> {
    pub lo: f64,
    pub hi: f64,
    pub shape: Cow<'a, Shape>,
}

impl PiecewiseFn {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// A single segment on `[0, end)` extended constantly beyond.
    pub fn constant(value: f64, end: f64) -> Self {
        Self::new(vec![Segment::new(0.0, end, Shape::Constant(value))])
    }

    pub fn single(end: f64, shape: Shape) -> Self {
        Self::new(vec![Segment::new(0.0, end, shape)])
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Identically zero (no segments, or all segments constant zero).
    pub fn is_zero(&self) -> bool {
        self.segments
            .iter()
            .all(|s| s.shape.constant_on(s.start, s.end) == Some(0.0))
    }

    pub fn domain_end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    /// Constant extension beyond the last segment.
    pub fn tail_value(&self) -> f64 {
        match self.segments.last() {
            None => 0.0,
            Some(s) if s.shape.has_pole() => 0.0,
            Some(s) => s.shape.value_left(s.end),
        }
    }

    fn locate(&self, x: f64) -> Option<&Segment> {
        if self.segments.is_empty() || x >= self.domain_end() {
            return None;
        }
        let idx = self.segments.partition_point(|s| s.end <= x);
        self.segments.get(idx)
    }

    fn locate_left(&self, x: f64) -> Option<&Segment> {
        if self.segments.is_empty() || x > self.domain_end() {
            return None;
        }
        let idx = self.segments.partition_point(|s| s.end < x);
        self.segments.get(idx)
    }

    /// Right-continuous value at `x`.
    pub fn value(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some(s) => s.shape.value(x.max(s.start)),
            None => self.tail_value(),
        }
    }

    /// Left limit at `x`.
    pub fn value_left(&self, x: f64) -> f64 {
        match self.locate_left(x) {
            Some(s) if x > s.start => s.shape.value_left(x),
            Some(s) => {
                // x is at (or before) the start of its segment; the left limit
                // belongs to the previous segment when there is one.
                let idx = self.segments.partition_point(|t| t.end < x);
                if idx > 0 {
                    let prev = &self.segments[idx - 1];
                    prev.shape.value_left(prev.end)
                } else {
                    s.shape.value(s.start)
                }
            }
            None => self.tail_value(),
        }
    }

    /// `∫_a^b f(x) dx` for `a <= b`; infinite if a pole is reached.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.pieces(a, b)
            .iter()
            .map(|p| p.shape.integral(p.lo, p.hi))
            .sum()
    }

    /// Smooth pieces covering `[a, b]`, split at segment ends and table knots.
    pub fn pieces(&self, a: f64, b: f64) -> Vec<Piece<'_>> {
        let mut out = Vec::new();
        if b <= a {
            return out;
        }
        let mut lo = a;
        let start_idx = self.segments.partition_point(|s| s.end <= a);
        for seg in &self.segments[start_idx..] {
            if lo >= b {
                break;
            }
            let hi = seg.end.min(b);
            if hi <= lo {
                continue;
            }
            let mut knots = Vec::new();
            seg.shape.knots_in(lo, hi, &mut knots);
            knots.sort_by(f64::total_cmp);
            knots.dedup();
            let mut x = lo;
            for k in knots {
                out.push(Piece {
                    lo: x,
                    hi: k,
                    shape: Cow::Borrowed(&seg.shape),
                });
                x = k;
            }
            out.push(Piece {
                lo: x,
                hi,
                shape: Cow::Borrowed(&seg.shape),
            });
            lo = hi;
        }
        if lo < b {
            out.push(Piece {
                lo,
                hi: b,
                shape: Cow::Owned(Shape::Constant(self.tail_value())),
            });
        }
        out
    }

    /// Segment boundaries and table knots strictly inside `(a, b)`.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for seg in &self.segments {
            if seg.start > a && seg.start < b {
                out.push(seg.start);
            }
            if seg.end > a && seg.end < b {
                out.push(seg.end);
            }
            seg.shape.knots_in(a, b, &mut out);
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub fn poles(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for s in &self.segments {
            s.shape.poles(&mut out);
        }
        out
    }

    pub fn is_bounded(&self) -> bool {
        !self.segments.iter().any(|s| s.shape.has_pole())
    }

    pub fn scaled(&self, k: f64) -> PiecewiseFn {
        PiecewiseFn::new(
            self.segments
                .iter()
                .map(|s| Segment::new(s.start, s.end, s.shape.scaled(k)))
                .collect(),
        )
    }

    /// Pointwise sum, merging both partitions.
    pub fn plus(&self, other: &PiecewiseFn) -> PiecewiseFn {
        if other.is_empty() {
            return self.clone();
        }
        if self.is_empty() {
            return other.clone();
        }
        let mut cuts: Vec<f64> = self
            .segments
            .iter()
            .chain(&other.segments)
            .flat_map(|s| [s.start, s.end])
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let segments = cuts
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let shape = self.shape_at(mid).plus(&other.shape_at(mid));
                Segment::new(w[0], w[1], shape)
            })
            .collect();
        PiecewiseFn::new(segments)
    }

    /// Shape of the segment containing `x` (the tail constant beyond the end).
    pub fn shape_at(&self, x: f64) -> Cow<'_, Shape> {
        match self.locate(x) {
            Some(s) => Cow::Borrowed(&s.shape),
            None => Cow::Owned(Shape::Constant(self.tail_value())),
        }
    }

    /// Structural problems: gaps, overlaps, bad parameters.
    pub fn structural_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let mut expected = 0.0;
        for (k, s) in self.segments.iter().enumerate() {
            if !(s.start.is_finite() && s.end.is_finite()) {
                issues.push(format!("segment {k}: non-finite bounds"));
                continue;
            }
            if s.start != expected {
                issues.push(format!(
                    "segment {k}: starts at {} but previous coverage ends at {expected}",
                    s.start
                ));
            }
            if s.end <= s.start {
                issues.push(format!("segment {k}: empty or reversed interval"));
            }
            if !s.shape.is_well_formed() {
                issues.push(format!("segment {k}: malformed shape parameters"));
            }
            let mut poles = Vec::new();
            s.shape.poles(&mut poles);
            for (reset, _) in poles {
                if reset != s.end {
                    issues.push(format!(
                        "segment {k}: pole at {reset} must terminate the segment (ends at {})",
                        s.end
                    ));
                }
            }
            expected = s.end;
        }
        issues
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_integral_and_tail() {
        let f = PiecewiseFn::constant(0.1, 10.0);
        assert!((f.integral(0.0, 10.0) - 1.0).abs() < 1e-15);
        assert!((f.integral(0.0, 20.0) - 2.0).abs() < 1e-15);
        assert_eq!(f.value(50.0), 0.1);
    }

    #[test]
    fn pole_integral_closed_form() {
        let f = PiecewiseFn::single(
            1.0,
            Shape::Pole {
                strength: 1.0,
                reset: 1.0,
            },
        );
        // -ln(1 - t)
        assert!((f.integral(0.0, 0.5) - 2f64.ln()).abs() < 1e-15);
        assert!(f.integral(0.0, 1.0).is_infinite());
        assert_eq!(f.tail_value(), 0.0);
    }

    #[test]
    fn left_constant_table() {
        let t = Shape::Table(Table::new(
            vec![0.0, 1.0, 2.0],
            vec![0.1, 0.2, 0.3],
            Interp::LeftConstant,
        ));
        let f = PiecewiseFn::single(3.0, t);
        assert_eq!(f.value(1.0), 0.2);
        assert_eq!(f.value_left(1.0), 0.1);
        assert!((f.integral(0.5, 2.5) - (0.05 + 0.2 + 0.15)).abs() < 1e-15);
        assert_eq!(f.breakpoints(0.0, 3.0), vec![1.0, 2.0]);
    }

    #[test]
    fn linear_table_with_jump() {
        let t = Table::new(vec![0.0, 1.0, 1.0, 2.0], vec![0.0, 1.0, 5.0, 5.0], Interp::Linear);
        let f = PiecewiseFn::single(2.0, Shape::Table(t));
        assert_eq!(f.value(1.0), 5.0);
        assert_eq!(f.value_left(1.0), 1.0);
        assert!((f.value(0.5) - 0.5).abs() < 1e-15);
        assert!((f.integral(0.0, 2.0) - 5.5).abs() < 1e-14);
    }

    #[test]
    fn makeham_integral_matches_simpson() {
        let s = Shape::Makeham {
            a: 0.001,
            b: 0.0002,
            c: 0.09,
        };
        let (a, b) = (30.0, 50.0);
        let n = 2000;
        let h = (b - a) / n as f64;
        let mut simpson = s.value(a) + s.value(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            simpson += w * s.value(a + k as f64 * h);
        }
        simpson *= h / 3.0;
        assert!((s.integral(a, b) - simpson).abs() < 1e-12);
    }

    #[test]
    fn plus_merges_partitions() {
        let f = PiecewiseFn::new(vec![
            Segment::new(0.0, 2.0, Shape::Constant(1.0)),
            Segment::new(2.0, 4.0, Shape::Constant(2.0)),
        ]);
        let g = PiecewiseFn::single(
            3.0,
            Shape::Linear {
                intercept: 0.0,
                slope: 1.0,
            },
        );
        let h = f.plus(&g);
        assert_eq!(h.segments.len(), 3);
        for x in [0.5, 1.9, 2.5, 3.5, 7.0] {
            assert!((h.value(x) - (f.value(x) + g.value(x))).abs() < 1e-15, "x={x}");
        }
        assert!((h.integral(0.0, 4.0) - (f.integral(0.0, 4.0) + g.integral(0.0, 4.0))).abs() < 1e-14);
    }

    #[test]
    fn structural_issue_for_detached_pole() {
        let f = PiecewiseFn::single(
            2.0,
            Shape::Pole {
                strength: 1.0,
                reset: 1.0,
            },
        );
        assert_eq!(f.structural_issues().len(), 1);
    }
}
