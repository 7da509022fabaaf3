//! Radial potentials, their weighted moments, and envelope-modified variants.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::{lit, to_f64, Real};
use crate::quadrature::integrate;
use crate::tree::{Envelope, RegularTree};

/// How fast a radial function vanishes at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay<T> {
    /// Identically zero beyond the given radius.
    Compact(T),
    /// Bounded by `C e^{-rate t}` eventually.
    Exponential(T),
    /// Bounded by `C t^exponent` eventually (`exponent < 0`).
    Power(T),
}

/// A real function of the distance to the root.
pub trait RadialFn<T: Real>: Send + Sync {
    fn eval(&self, t: T) -> T;
    /// Finite points where the function may be discontinuous.
    fn knots(&self) -> Vec<T>;
    fn decay(&self) -> Decay<T>;
    /// Upper bound on `sup |V|`.
    fn bound(&self) -> T;
    /// Radius beyond which the function is zero or negligible (below `1e-14` of its bound).
    fn extent(&self) -> T;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PieceKind<T> {
    Constant { value: T },
    /// `coef * t^power * exp(-rate t)`
    ExpPoly { coef: T, power: T, rate: T },
    /// `coef * exp(-((t - center) / width)^2)`
    Gaussian { coef: T, center: T, width: T },
}

/// A closed-form term active on `[start, end)`; `end = None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Piece<T> {
    pub start: T,
    pub end: Option<T>,
    pub kind: PieceKind<T>,
}

/// Sum of closed-form pieces. Only closed forms are allowed so that a config
/// file fully determines the potential.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialPotential<T> {
    pieces: Vec<Piece<T>>,
}

impl<T: Real> Piece<T> {
    fn eval(&self, t: T) -> T {
        if t < self.start || self.end.is_some_and(|e| t >= e) {
            return T::zero();
        }
        match self.kind {
            PieceKind::Constant { value } => value,
            PieceKind::ExpPoly { coef, power, rate } => {
                let p = if power == T::zero() { T::one() } else { t.powf(power) };
                coef * p * (-rate * t).exp()
            }
            PieceKind::Gaussian { coef, center, width } => {
                let z = (t - center) / width;
                coef * (-z * z).exp()
            }
        }
    }

    fn bound(&self) -> T {
        match self.kind {
            PieceKind::Constant { value } => value.abs(),
            PieceKind::Gaussian { coef, .. } => coef.abs(),
            PieceKind::ExpPoly { coef, power, rate } => {
                let lo = self.start;
                let hi = self.end.unwrap_or(T::infinity());
                let f = |t: T| {
                    let p = if power == T::zero() { T::one() } else { t.powf(power) };
                    p * (-rate * t).exp()
                };
                let mut best = f(lo);
                if rate > T::zero() && power > T::zero() {
                    let peak = power / rate;
                    if peak > lo && peak < hi {
                        best = best.max(f(peak));
                    }
                }
                if hi.is_finite() {
                    best = best.max(f(hi));
                }
                coef.abs() * best
            }
        }
    }

    fn decay(&self) -> Decay<T> {
        if let Some(end) = self.end {
            return Decay::Compact(end);
        }
        match self.kind {
            PieceKind::Constant { .. } => Decay::Compact(self.start),
            PieceKind::Gaussian { width, .. } => Decay::Exponential(T::one() / width),
            PieceKind::ExpPoly { power, rate, .. } => {
                if rate > T::zero() {
                    Decay::Exponential(rate)
                } else {
                    Decay::Power(power)
                }
            }
        }
    }

    fn extent(&self) -> T {
        if let Some(end) = self.end {
            return end;
        }
        let cut = lit::<T>(32.2); // ln(1e14)
        match self.kind {
            PieceKind::Constant { .. } => self.start,
            PieceKind::Gaussian { center, width, .. } => (center + width * cut.sqrt()).max(self.start),
            PieceKind::ExpPoly { power, rate, .. } => {
                if rate > T::zero() {
                    // t^p e^{-rt} < 1e-14 t_peak^p e^{-r t_peak} well before this
                    let t0 = self.start.max(power.max(T::zero()) / rate);
                    t0 + (cut + power.max(T::zero()) * lit::<T>(3.0)) / rate
                } else {
                    self.start * lit::<T>(1e14).powf(-T::one() / power)
                }
            }
        }
    }
}

impl<T: Real> RadialPotential<T> {
    pub fn new(pieces: Vec<Piece<T>>) -> Result<Self> {
        for p in &pieces {
            if p.start < T::zero() {
                return Err(Error::InvalidPotential("pieces must start at t >= 0".into()));
            }
            if p.end.is_some_and(|e| !(e > p.start)) {
                return Err(Error::InvalidPotential("piece end must exceed its start".into()));
            }
            match p.kind {
                PieceKind::Constant { value } => {
                    if p.end.is_none() && value != T::zero() {
                        return Err(Error::InvalidPotential(
                            "a nonzero constant piece must have a finite end (V must vanish at infinity)".into(),
                        ));
                    }
                }
                PieceKind::Gaussian { width, .. } => {
                    if !(width > T::zero()) {
                        return Err(Error::InvalidPotential("gaussian width must be positive".into()));
                    }
                }
                PieceKind::ExpPoly { power, rate, .. } => {
                    if power < T::zero() && p.start == T::zero() {
                        return Err(Error::InvalidPotential(
                            "negative powers need a piece starting away from 0 (V must be bounded)".into(),
                        ));
                    }
                    if p.end.is_none() && !(rate > T::zero()) && !(power < T::zero()) {
                        return Err(Error::InvalidPotential(
                            "exp_poly piece on an unbounded interval does not decay".into(),
                        ));
                    }
                    if rate < T::zero() {
                        return Err(Error::InvalidPotential("exp_poly rate must be >= 0".into()));
                    }
                }
            }
        }
        Ok(Self { pieces })
    }

    /// `value` on `[a, b)`, zero elsewhere.
    pub fn well(value: T, a: T, b: T) -> Result<Self> {
        Self::new(vec![Piece { start: a, end: Some(b), kind: PieceKind::Constant { value } }])
    }

    /// `coef * exp(-(t / width)^2)` on the whole half-line.
    pub fn gaussian(coef: T, width: T) -> Result<Self> {
        Self::new(vec![Piece {
            start: T::zero(),
            end: None,
            kind: PieceKind::Gaussian { coef, center: T::zero(), width },
        }])
    }

    /// `coef * t^power * exp(-rate t)` on the whole half-line.
    pub fn exp_poly(coef: T, power: T, rate: T) -> Result<Self> {
        Self::new(vec![Piece { start: T::zero(), end: None, kind: PieceKind::ExpPoly { coef, power, rate } }])
    }

    pub fn zero() -> Self {
        Self { pieces: Vec::new() }
    }

    pub fn pieces(&self) -> &[Piece<T>] {
        &self.pieces
    }

    /// Pointwise sum of two potentials.
    pub fn plus(mut self, other: &Self) -> Self {
        self.pieces.extend_from_slice(&other.pieces);
        self
    }

    /// Pointwise multiple `factor * V`.
    pub fn scaled(&self, factor: T) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let kind = match p.kind {
                    PieceKind::Constant { value } => PieceKind::Constant { value: value * factor },
                    PieceKind::ExpPoly { coef, power, rate } => PieceKind::ExpPoly { coef: coef * factor, power, rate },
                    PieceKind::Gaussian { coef, center, width } => {
                        PieceKind::Gaussian { coef: coef * factor, center, width }
                    }
                };
                Piece { kind, ..*p }
            })
            .collect();
        Self { pieces }
    }
}

impl<T: Real> RadialFn<T> for RadialPotential<T> {
    fn eval(&self, t: T) -> T {
        self.pieces.iter().fold(T::zero(), |s, p| s + p.eval(t))
    }

    fn knots(&self) -> Vec<T> {
        let mut k: Vec<T> = self
            .pieces
            .iter()
            .flat_map(|p| std::iter::once(p.start).chain(p.end))
            .collect();
        sort_dedup(&mut k);
        k
    }

    fn decay(&self) -> Decay<T> {
        let mut worst = Decay::Compact(T::zero());
        for p in &self.pieces {
            worst = match (worst, p.decay()) {
                (Decay::Power(a), Decay::Power(b)) => Decay::Power(a.max(b)),
                (Decay::Power(a), _) | (_, Decay::Power(a)) => Decay::Power(a),
                (Decay::Exponential(a), Decay::Exponential(b)) => Decay::Exponential(a.min(b)),
                (Decay::Exponential(a), _) | (_, Decay::Exponential(a)) => Decay::Exponential(a),
                (Decay::Compact(a), Decay::Compact(b)) => Decay::Compact(a.max(b)),
            };
        }
        worst
    }

    fn bound(&self) -> T {
        self.pieces.iter().fold(T::zero(), |s, p| s + p.bound())
    }

    fn extent(&self) -> T {
        self.pieces.iter().fold(T::zero(), |s, p| s.max(p.extent()))
    }
}

pub(crate) fn sort_dedup<T: Real>(v: &mut Vec<T>) {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
    v.dedup_by(|a, b| (*a - *b).abs() <= T::epsilon() * a.abs().max(T::one()));
}

/// `V_k^±(t) = g_k(t) / (a^±_k (1+t)^(d-1)) * V(t)` on `[t_k, ∞)`.
#[derive(Debug, Clone)]
pub struct ModifiedPotential<T> {
    base: RadialPotential<T>,
    tree: RegularTree<T>,
    k: usize,
    constant: T,
    exponent: T,
}

impl<T: Real> ModifiedPotential<T> {
    pub fn new(base: &RadialPotential<T>, tree: &RegularTree<T>, k: usize, envelope: &Envelope<T>, upper: bool) -> Self {
        let constant = if upper { envelope.upper } else { envelope.lower };
        Self { base: base.clone(), tree: tree.clone(), k, constant, exponent: envelope.exponent }
    }

    pub fn envelope_constant(&self) -> T {
        self.constant
    }
}

impl<T: Real> RadialFn<T> for ModifiedPotential<T> {
    fn eval(&self, t: T) -> T {
        let v = self.base.eval(t);
        if v == T::zero() {
            return v;
        }
        self.tree.gk_eval(self.k, t) / (self.constant * (T::one() + t).powf(self.exponent)) * v
    }

    fn knots(&self) -> Vec<T> {
        let mut k = self.base.knots();
        let hi = self.base.extent().max(self.tree.start(self.k));
        k.extend(self.tree.breakpoints_in(T::zero(), hi + T::one()));
        k.push(self.tree.start(self.k));
        sort_dedup(&mut k);
        k
    }

    fn decay(&self) -> Decay<T> {
        self.base.decay()
    }

    fn bound(&self) -> T {
        // g_k <= a^+ (1+t)^alpha on the channel, so the ratio is at most a^+/a^±.
        let hi = self.tree.start(self.k).max(self.base.extent());
        let env = self.tree.envelope_constants(self.k, self.exponent + T::one(), hi + T::one());
        match env {
            Ok(e) => self.base.bound() * e.upper / self.constant,
            Err(_) => T::infinity(),
        }
    }

    fn extent(&self) -> T {
        self.base.extent()
    }
}

/// `t -> inner(t + shift)`, used to move a channel start to the origin.
#[derive(Debug, Clone)]
pub struct Shifted<P> {
    pub inner: P,
    pub shift: f64,
}

impl<T: Real, P: RadialFn<T>> RadialFn<T> for Shifted<P> {
    fn eval(&self, s: T) -> T {
        self.inner.eval(s + lit(self.shift))
    }

    fn knots(&self) -> Vec<T> {
        let shift = lit::<T>(self.shift);
        self.inner.knots().into_iter().map(|t| t - shift).filter(|&s| s >= T::zero()).collect()
    }

    fn decay(&self) -> Decay<T> {
        match self.inner.decay() {
            Decay::Compact(e) => Decay::Compact((e - lit(self.shift)).max(T::zero())),
            other => other,
        }
    }

    fn bound(&self) -> T {
        self.inner.bound()
    }

    fn extent(&self) -> T {
        (self.inner.extent() - lit(self.shift)).max(T::zero())
    }
}

/// Weight functions for moment integrals.
#[derive(Debug, Clone, Copy)]
pub enum Weight<'a, T> {
    /// `(1+t)^p`
    OnePlus(T),
    /// `t^p`
    Monomial(T),
    /// `g_0(t)`
    Branching(&'a RegularTree<T>),
    /// `g_0(t) t^(2-d)`
    BranchingScaled(&'a RegularTree<T>, T),
}

impl<T: Real> Weight<'_, T> {
    pub fn eval(&self, t: T) -> T {
        match *self {
            Weight::OnePlus(p) => (T::one() + t).powf(p),
            Weight::Monomial(p) => {
                if p == T::zero() {
                    T::one()
                } else {
                    t.powf(p)
                }
            }
            Weight::Branching(tree) => tree.gk_eval(0, t),
            Weight::BranchingScaled(tree, d) => tree.gk_eval(0, t) * t.powf(lit::<T>(2.0) - d),
        }
    }

    /// Polynomial growth exponent at infinity.
    fn growth(&self) -> T {
        match *self {
            Weight::OnePlus(p) | Weight::Monomial(p) => p,
            Weight::Branching(tree) => tree.declared_dimension().unwrap_or(T::one()) - T::one(),
            Weight::BranchingScaled(tree, d) => {
                tree.declared_dimension().unwrap_or(T::one()) - T::one() + lit::<T>(2.0) - d
            }
        }
    }

    fn knots(&self, hi: T) -> Vec<T> {
        match *self {
            Weight::Branching(tree) | Weight::BranchingScaled(tree, _) => tree.breakpoints_in(T::zero(), hi),
            _ => Vec::new(),
        }
    }
}

/// A quadrature value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moment<T> {
    pub value: T,
    pub error: T,
}

fn integrate_knots<T: Real>(f: &dyn Fn(T) -> T, knots: &[T], tol: T) -> (T, T) {
    let mut value = T::zero();
    let mut error = T::zero();
    for w in knots.windows(2) {
        let (v, e) = integrate(&f, w[0], w[1], tol, tol);
        value = value + v;
        error = error + e;
    }
    (value, error)
}

/// `∫_0^∞ V(t) w(t) dt` (or with `|V|` when `absolute`), adaptive on panels
/// split at every knot of `V` and `w`, with a doubling tail cut-off.
pub fn moment<T: Real>(v: &dyn RadialFn<T>, weight: Weight<'_, T>, absolute: bool) -> Result<Moment<T>> {
    let decay = v.decay();
    if let Decay::Power(p) = decay {
        if !(p + weight.growth() < -T::one()) {
            return Err(Error::DivergentMoment(format!(
                "|V| ~ t^{} against weight growth t^{}",
                to_f64(p),
                to_f64(weight.growth())
            )));
        }
    }
    let integrand = |t: T| {
        let x = v.eval(t);
        let x = if absolute { x.abs() } else { x };
        if x == T::zero() {
            T::zero()
        } else {
            x * weight.eval(t)
        }
    };
    let tol = lit::<T>(1e-12);
    let mut end = v.extent().max(T::one());
    if let Decay::Compact(e) = decay {
        end = e;
    }
    let knots_to = |hi: T| {
        let mut k: Vec<T> = v.knots().into_iter().filter(|&t| t < hi).collect();
        k.extend(weight.knots(hi));
        k.push(T::zero());
        k.push(hi);
        sort_dedup(&mut k);
        k
    };
    let (mut value, mut error) = integrate_knots(&integrand, &knots_to(end), tol);
    if !matches!(decay, Decay::Compact(_)) {
        let cutoff = lit::<T>(1e-14);
        for _ in 0..60 {
            let next = end * lit(2.0);
            let tail_knots: Vec<T> = knots_to(next).into_iter().filter(|&t| t >= end).collect();
            let (tail, tail_err) = integrate_knots(&integrand, &tail_knots, tol);
            value = value + tail;
            error = error + tail_err;
            end = next;
            let edge = (v.eval(end).abs() * weight.eval(end)).abs();
            if edge < cutoff && tail.abs() <= lit::<T>(1e-10) * (T::one() + value.abs()) {
                break;
            }
        }
    }
    Ok(Moment { value, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::make_geometric_tree;
    use proptest::prelude::*;

    #[test]
    fn evaluation_of_basic_shapes() {
        let well = RadialPotential::well(-1.0, 0.0, 1.0).unwrap();
        assert_eq!(well.eval(0.5), -1.0);
        assert_eq!(well.eval(2.0), 0.0);
        let g = RadialPotential::gaussian(-1.0, 1.0).unwrap();
        assert_eq!(g.eval(0.0), -1.0);
    }

    #[test]
    fn rejects_non_decaying_or_unbounded() {
        let p = Piece { start: 0.0, end: None, kind: PieceKind::Constant { value: -1.0 } };
        assert!(RadialPotential::new(vec![p]).is_err());
        assert!(RadialPotential::exp_poly(1.0, -0.5, 1.0).is_err());
        assert!(RadialPotential::exp_poly(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn well_moments() {
        let well = RadialPotential::<f64>::well(-1.0, 0.0, 1.0).unwrap();
        let m = moment(&well, Weight::Monomial(1.0), false).unwrap();
        assert!((m.value + 0.5).abs() < 1e-12);
        let m = moment(&well, Weight::Monomial(1.0), true).unwrap();
        assert!((m.value - 0.5).abs() < 1e-12);
        let m = moment(&well, Weight::OnePlus(0.0), false).unwrap();
        assert!((m.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_moment_matches_closed_form() {
        let v = RadialPotential::<f64>::exp_poly(-1.0, 0.0, 1.0).unwrap();
        let m = moment(&v, Weight::OnePlus(0.0), false).unwrap();
        assert!((m.value + 1.0).abs() < 1e-9 * 2.0);
        assert!(m.error <= 1e-9 * (1.0 + m.value.abs()));
        // ∫ t^2 e^{-t} (1+t) = 2 + 6
        let v = RadialPotential::<f64>::exp_poly(1.0, 2.0, 1.0).unwrap();
        let m = moment(&v, Weight::OnePlus(1.0), false).unwrap();
        assert!((m.value - 8.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_mass_on_geometric_tree() {
        // g_0 = 1 on [0, 2), 2 on [2, 4), 4 on [4, 8) ...
        let tree = make_geometric_tree::<f64>(2.0, 2, 30).unwrap();
        let v = RadialPotential::gaussian(-1.0, 1.0).unwrap();
        let m = moment(&v, Weight::Branching(&tree), false).unwrap();
        let erf_tail = |x: f64| {
            let (val, _) = crate::quadrature::integrate(&|t: f64| (-t * t).exp(), x, 12.0, 1e-15, 1e-15);
            val
        };
        let exact = -(0.5 * std::f64::consts::PI.sqrt() + erf_tail(2.0) + 2.0 * erf_tail(4.0) + 4.0 * erf_tail(8.0));
        assert!((m.value - exact).abs() < 1e-10, "{} vs {}", m.value, exact);
    }

    #[test]
    fn power_decay_divergence_detected() {
        let p = Piece { start: 1.0, end: None, kind: PieceKind::ExpPoly { coef: -1.0, power: -1.5, rate: 0.0 } };
        let v = RadialPotential::new(vec![p]).unwrap();
        assert!(moment(&v, Weight::OnePlus(0.0), true).is_ok());
        assert!(matches!(moment(&v, Weight::Monomial(1.0), true), Err(Error::DivergentMoment(_))));
    }

    #[test]
    fn halving_tolerance_is_within_reported_error() {
        let v = RadialPotential::gaussian(-2.0, 0.7).unwrap();
        let m = moment(&v, Weight::OnePlus(0.5), false).unwrap();
        let f = |t: f64| v.eval(t) * (1.0 + t).sqrt();
        let (fine, _) = crate::quadrature::integrate(&f, 0.0, 20.0, 1e-15, 1e-15);
        assert!((m.value - fine).abs() <= m.error.max(1e-12));
    }

    #[test]
    fn modified_potential_on_half_line_is_identity() {
        let tree = RegularTree::<f64>::half_line();
        let env = tree.envelope_constants(0, 1.0, 50.0).unwrap();
        let v = RadialPotential::gaussian(-1.0, 1.0).unwrap();
        for upper in [false, true] {
            let m = ModifiedPotential::new(&v, &tree, 0, &env, upper);
            for t in [0.0, 0.3, 1.7, 4.0] {
                assert_eq!(m.eval(t), v.eval(t));
            }
        }
    }

    #[test]
    fn modified_potential_at_vertex() {
        let tree = make_geometric_tree::<f64>(1.5, 2, 10).unwrap();
        let env = tree.envelope_constants(0, 1.5, 1e5).unwrap();
        let v = RadialPotential::gaussian(-1.0, 20.0).unwrap();
        let m = ModifiedPotential::new(&v, &tree, 0, &env, true);
        let tn = tree.vertex_distances()[2];
        let expected = tree.gk_eval(0, tn) / (env.upper * (1.0 + tn).sqrt()) * v.eval(tn);
        assert_eq!(m.eval(tn), expected);
    }

    proptest! {
        #[test]
        fn envelope_identity_and_sign(t in 0.0f64..200.0, depth in 0.1f64..5.0) {
            let tree = make_geometric_tree::<f64>(1.5, 2, 10).unwrap();
            let env = tree.envelope_constants(0, 1.5, 1e5).unwrap();
            let v = RadialPotential::gaussian(-depth, 30.0).unwrap();
            let lo = ModifiedPotential::new(&v, &tree, 0, &env, false);
            let hi = ModifiedPotential::new(&v, &tree, 0, &env, true);
            let w = (1.0 + t).sqrt();
            let target = v.eval(t) * tree.gk_eval(0, t);
            prop_assert!((lo.eval(t) * env.lower * w - target).abs() <= 1e-12 * target.abs().max(1e-300));
            prop_assert!((hi.eval(t) * env.upper * w - target).abs() <= 1e-12 * target.abs().max(1e-300));
            prop_assert!(lo.eval(t) <= 0.0 && hi.eval(t) <= 0.0);
            prop_assert!(lo.eval(t) <= hi.eval(t));
        }

        #[test]
        fn moment_linear_and_monotone(a in 0.1f64..3.0, b in 0.1f64..3.0) {
            let v1 = RadialPotential::gaussian(-1.0, 1.0).unwrap();
            let v2 = RadialPotential::well(-1.0, 0.5, 2.0).unwrap();
            let combo = v1.scaled(a).plus(&v2.scaled(b));
            let m = |v: &RadialPotential<f64>| moment(v, Weight::OnePlus(0.5), false).unwrap().value;
            prop_assert!((m(&combo) - (a * m(&v1) + b * m(&v2))).abs() < 1e-9);
            let abs = |v: &RadialPotential<f64>| moment(v, Weight::OnePlus(0.5), true).unwrap().value;
            prop_assert!(abs(&v1.scaled(a)) <= abs(&v1.scaled(a + b)));
        }
    }
}
