//! Weighted half-line eigenvalue problems
//! `-(w u')' / w + λ V u = E u` on `[start, ∞)`, truncated at `L`.
//!
//! The form is discretised by linear finite elements on a grid aligned to
//! every discontinuity of the weight and the potential. The mass and
//! potential terms are lumped with the integrand sampled at cell quarter
//! points, so a node sitting on a jump of `w` picks up the correct one-sided
//! values. Eigenvalues are located by bisection on an inertia count computed
//! with a ratio recurrence that never forms the (ill-conditioned) diagonal.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::{lit, to_f64, Real};
use crate::potential::{sort_dedup, RadialFn};
use crate::tree::RegularTree;

/// Boundary flavour at either end of a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Natural condition of the weighted form, `w u' = 0`.
    Neumann,
    /// `u = 0`.
    Dirichlet,
}

/// Weight function of a channel.
#[derive(Debug, Clone)]
pub enum ChannelWeight<T> {
    /// Branching function `g_k` of a tree.
    Branching { tree: RegularTree<T>, k: usize },
    /// `scale (1+t)^alpha`.
    OnePlus { scale: T, alpha: T },
    /// `t^alpha`.
    Power { alpha: T },
}

impl<T: Real> ChannelWeight<T> {
    pub fn eval(&self, t: T) -> T {
        match self {
            ChannelWeight::Branching { tree, k } => tree.gk_eval(*k, t),
            ChannelWeight::OnePlus { scale, alpha } => *scale * (T::one() + t).powf(*alpha),
            ChannelWeight::Power { alpha } => {
                if *alpha == T::zero() {
                    T::one()
                } else {
                    t.powf(*alpha)
                }
            }
        }
    }

    /// Jump points of the weight inside `(a, b)`.
    pub fn breakpoints(&self, a: T, b: T) -> Vec<T> {
        match self {
            ChannelWeight::Branching { tree, .. } => {
                tree.breakpoints_in(a, b).into_iter().filter(|&t| t > a && t < b).collect()
            }
            _ => Vec::new(),
        }
    }
}

/// One weighted half-line operator of the decomposition.
#[derive(Clone)]
pub struct Channel<T> {
    pub k: usize,
    pub start: T,
    pub weight: ChannelWeight<T>,
    pub left: Boundary,
    pub coupling: T,
    pub potential: Arc<dyn RadialFn<T>>,
    pub multiplicity: u128,
}

impl<T: Real> fmt::Debug for Channel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Channel")
            .field("k", &self.k)
            .field("start", &self.start)
            .field("weight", &self.weight)
            .field("left", &self.left)
            .field("coupling", &self.coupling)
            .field("multiplicity", &self.multiplicity)
            .finish_non_exhaustive()
    }
}

impl<T: Real> Channel<T> {
    /// Channel `k` of a tree: `g_k` on `[t_k, ∞)`, Neumann at the root for
    /// `k = 0` and Dirichlet at `t_k` otherwise.
    pub fn tree(tree: &RegularTree<T>, k: usize, potential: Arc<dyn RadialFn<T>>, coupling: T) -> Self {
        let (left, multiplicity) = if k == 0 { (Boundary::Neumann, 1) } else { (Boundary::Dirichlet, tree.multiplicity(k)) };
        Self {
            k,
            start: tree.start(k),
            weight: ChannelWeight::Branching { tree: tree.clone(), k },
            left,
            coupling,
            potential,
            multiplicity,
        }
    }

    /// Free-standing weighted operator used for comparison problems.
    pub fn weighted(
        start: T,
        weight: ChannelWeight<T>,
        left: Boundary,
        potential: Arc<dyn RadialFn<T>>,
        coupling: T,
    ) -> Self {
        Self { k: 0, start, weight, left, coupling, potential, multiplicity: 1 }
    }

    pub fn with_coupling(&self, coupling: T) -> Self {
        Self { coupling, ..self.clone() }
    }

    /// End of the region where the potential lives, never before `start`.
    pub fn potential_radius(&self) -> T {
        self.potential.extent().max(self.start)
    }

    fn breakpoints(&self, b: T) -> Vec<T> {
        let mut pts = self.weight.breakpoints(self.start, b);
        pts.extend(self.potential.knots().into_iter().filter(|&t| t > self.start && t < b));
        sort_dedup(&mut pts);
        pts
    }
}

/// Parameters of a grid: base step, truncation length, relative grading
/// beyond the potential region, optional step cap and right boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec<T> {
    pub h: T,
    pub length: T,
    pub grading: T,
    pub h_cap: Option<T>,
    pub right: Boundary,
}

/// Nodes `start = x_0 < … < x_N = L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub nodes: Vec<T>,
    pub right: Boundary,
}

/// Summary of a grid for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridInfo {
    pub start: f64,
    pub length: f64,
    pub cells: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub right: Boundary,
}

impl<T: Real> Grid<T> {
    /// Grid aligned to the channel's breakpoints. Cells are of size `h` on
    /// the potential region and grow like `grading * distance` beyond it.
    pub fn build(ch: &Channel<T>, spec: &GridSpec<T>) -> Result<Self> {
        if !(spec.h > T::zero()) || !(spec.length > ch.start) || spec.grading < T::zero() {
            return Err(Error::BadGrid(format!(
                "need h > 0 and L > start (h = {}, L = {}, start = {})",
                to_f64(spec.h),
                to_f64(spec.length),
                to_f64(ch.start)
            )));
        }
        let fine_end = ch.potential_radius();
        let cap = spec.h_cap.unwrap_or(T::infinity()).max(spec.h);
        let step = |x: T| {
            let graded = if x > fine_end { spec.grading * (x - fine_end) } else { T::zero() };
            graded.max(spec.h).min(cap)
        };
        let mut knots = vec![ch.start];
        knots.extend(ch.breakpoints(spec.length));
        knots.push(spec.length);
        let mut nodes = vec![ch.start];
        for seg in knots.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let mut marks = Vec::new();
            let mut x = a;
            while x < b - step(x) * lit(1e-9) {
                x = x + step(x);
                marks.push(x);
                if marks.len() > 50_000_000 {
                    return Err(Error::BadGrid("grid exceeds 5e7 cells".into()));
                }
            }
            let scale = (b - a) / (*marks.last().expect("nonempty segment") - a);
            let last = marks.len() - 1;
            for (i, m) in marks.into_iter().enumerate() {
                nodes.push(if i == last { b } else { a + (m - a) * scale });
            }
        }
        Ok(Self { nodes, right: spec.right })
    }

    /// Accepts explicit nodes, checking that no weight or potential jump
    /// falls strictly inside a cell.
    pub fn from_nodes(ch: &Channel<T>, nodes: Vec<T>, right: Boundary) -> Result<Self> {
        if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::BadGrid("nodes must be strictly increasing".into()));
        }
        let tol = T::epsilon() * lit(64.0);
        for bp in ch.breakpoints(*nodes.last().expect("two nodes")) {
            let i = nodes.partition_point(|&x| x < bp);
            let hit = |j: usize| j < nodes.len() && (nodes[j] - bp).abs() <= tol * bp.abs().max(T::one());
            if !(hit(i) || (i > 0 && hit(i - 1))) {
                return Err(Error::BadGrid(format!("breakpoint {} is not a grid node", to_f64(bp))));
            }
        }
        Ok(Self { nodes, right })
    }

    /// Every cell bisected.
    pub fn refined(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len());
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push((w[0] + w[1]) * lit(0.5));
        }
        nodes.push(*self.nodes.last().expect("grid has nodes"));
        Self { nodes, right: self.right }
    }

    pub fn with_right(&self, right: Boundary) -> Self {
        Self { nodes: self.nodes.clone(), right }
    }

    pub fn start(&self) -> T {
        self.nodes[0]
    }

    pub fn length(&self) -> T {
        *self.nodes.last().expect("grid has nodes")
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn info(&self) -> GridInfo {
        let (lo, hi) = self
            .nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold((T::infinity(), T::zero()), |(lo, hi), h| (lo.min(h), hi.max(h)));
        GridInfo {
            start: to_f64(self.start()),
            length: to_f64(self.length()),
            cells: self.cells(),
            h_min: to_f64(lo),
            h_max: to_f64(hi),
            right: self.right,
        }
    }
}

/// Discretised form: cell conductances `c_i = w(mid_i)/h_i`, lumped mass and
/// lumped `λ V w` per node, and the boundary flavours. Unknowns are the
/// nodes not pinned by a Dirichlet end.
#[derive(Debug, Clone, PartialEq)]
pub struct Pencil<T> {
    pub conductance: Vec<T>,
    pub potential: Vec<T>,
    pub mass: Vec<T>,
    pub left: Boundary,
    pub right: Boundary,
}

/// Assembles the pencil of the channel form on `grid`.
pub fn discretize_form<T: Real>(ch: &Channel<T>, grid: &Grid<T>) -> Result<Pencil<T>> {
    if (grid.start() - ch.start).abs() > T::epsilon() * lit::<T>(64.0) * ch.start.abs().max(T::one()) {
        return Err(Error::BadGrid("grid does not start at the channel start".into()));
    }
    let x = &grid.nodes;
    let n = x.len();
    let quarter = lit::<T>(0.25);
    let half = lit::<T>(0.5);
    let mut conductance = Vec::with_capacity(n - 1);
    let mut potential = vec![T::zero(); n];
    let mut mass = vec![T::zero(); n];
    for i in 0..n - 1 {
        let h = x[i + 1] - x[i];
        let w_mid = ch.weight.eval(x[i] + h * half);
        conductance.push(w_mid / h);
        for (node, t) in [(i, x[i] + h * quarter), (i + 1, x[i + 1] - h * quarter)] {
            let w = ch.weight.eval(t) * h * half;
            mass[node] = mass[node] + w;
            if ch.coupling != T::zero() {
                potential[node] = potential[node] + w * ch.coupling * ch.potential.eval(t);
            }
        }
    }
    Ok(Pencil { conductance, potential, mass, left: ch.left, right: grid.right })
}

impl<T: Real> Pencil<T> {
    fn unknowns(&self) -> std::ops::Range<usize> {
        let n = self.mass.len();
        let lo = usize::from(self.left == Boundary::Dirichlet);
        let hi = if self.right == Boundary::Dirichlet { n - 1 } else { n };
        lo..hi
    }

    pub fn dim(&self) -> usize {
        self.unknowns().len()
    }

    /// Number of eigenvalues strictly below `s` (Sylvester inertia of
    /// `A - s M` by an `LDLᵀ` sweep in ratio form).
    pub fn count_below(&self, s: T) -> usize {
        let range = self.unknowns();
        let last_node = self.mass.len() - 1;
        let tiny = T::min_positive_value();
        let mut negatives = 0;
        let mut q_prev = T::zero();
        let mut y_prev = T::zero();
        for i in range.clone() {
            let mut y = self.potential[i] - s * self.mass[i];
            if i > 0 {
                let c = self.conductance[i - 1];
                if i == range.start {
                    // left neighbour pinned to zero
                    y = y + c;
                } else {
                    y = y + c * (y_prev / q_prev);
                }
            }
            let mut q = if i < last_node { y + self.conductance[i] } else { y };
            if q == T::zero() {
                q = tiny;
            }
            if q < T::zero() {
                negatives += 1;
            }
            y_prev = y;
            q_prev = q;
        }
        negatives
    }

    /// Lower bound on the spectrum: `min p_i / m_i` over the unknowns.
    pub fn lower_bound(&self) -> T {
        self.unknowns()
            .map(|i| self.potential[i] / self.mass[i])
            .fold(T::zero(), |a, b| a.min(b))
    }

    /// Gershgorin upper bound of the symmetrised matrix `M^{-1/2} A M^{-1/2}`.
    pub fn upper_bound(&self) -> T {
        let last = self.mass.len() - 1;
        self.unknowns()
            .map(|i| {
                let mut r = self.potential[i] / self.mass[i];
                if i > 0 {
                    let c = self.conductance[i - 1];
                    r = r + c / self.mass[i] + c / (self.mass[i] * self.mass[i - 1]).sqrt();
                }
                if i < last {
                    let c = self.conductance[i];
                    r = r + c / self.mass[i] + c / (self.mass[i] * self.mass[i + 1]).sqrt();
                }
                r
            })
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// The `j`-th eigenvalue (0-based) in `[lo, hi]`, where `count_below(lo) <= j < count_below(hi)`.
    pub fn eigenvalue(&self, j: usize, lo: T, hi: T, rel_tol: T) -> T {
        bisect_eigenvalue(|s| self.count_below(s), j, lo, hi, rel_tol)
    }

    /// All eigenvalues below zero, ascending, to relative tolerance `rel_tol`.
    pub fn negative_eigenvalues(&self, rel_tol: T) -> Vec<T> {
        let n = self.count_below(T::zero());
        let lo = self.lower_bound() * lit(1.0 + 1e-9) - T::min_positive_value();
        (0..n).map(|j| self.eigenvalue(j, lo, T::zero(), rel_tol)).collect()
    }

    /// The `m` smallest eigenvalues irrespective of sign.
    pub fn lowest(&self, m: usize, rel_tol: T) -> Vec<T> {
        let lo = self.lower_bound() * lit(1.0 + 1e-9) - T::min_positive_value();
        let hi = self.upper_bound() * lit(1.0 + 1e-9) + T::min_positive_value();
        let m = m.min(self.dim());
        (0..m).map(|j| self.eigenvalue(j, lo, hi, rel_tol)).collect()
    }
}

/// Bisection on an inertia count for the `j`-th eigenvalue in `[lo, hi]`.
///
/// When both ends share a sign and differ by a large factor the geometric
/// mean is used, so eigenvalues near zero are resolved in relative terms.
pub fn bisect_eigenvalue<T: Real, F: Fn(T) -> usize>(count: F, j: usize, mut lo: T, mut hi: T, rel_tol: T) -> T {
    let four = lit::<T>(4.0);
    for _ in 0..4000 {
        let width = hi - lo;
        let scale = lo.abs().max(hi.abs());
        if width <= rel_tol * lo.abs().min(hi.abs()) || width <= T::min_positive_value() * four || scale == T::zero() {
            break;
        }
        let mid = if lo < T::zero() && hi < T::zero() && lo / hi > four {
            -(lo * hi).sqrt()
        } else if lo > T::zero() && hi / lo > four {
            (lo * hi).sqrt()
        } else if hi == T::zero() && lo < T::zero() {
            // step down towards zero geometrically
            lo * lit(1e-3)
        } else {
            (lo + hi) * lit(0.5)
        };
        if !(mid > lo && mid < hi) {
            break;
        }
        if count(mid) > j {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo + hi) * lit(0.5)
}

/// The `m` smallest eigenvalues of the pencil (diagnostic; signs kept).
pub fn lowest_eigenvalues<T: Real>(pencil: &Pencil<T>, m: usize) -> Vec<T> {
    pencil.lowest(m, lit(1e-10))
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Numerics<T> {
    /// Cell size on the potential region.
    pub h: T,
    /// Fixed or initial truncation length; by default the potential radius plus 10.
    pub length: Option<T>,
    /// Grow `L` until the Dirichlet and Neumann truncations agree.
    pub auto_truncate: bool,
    /// Also solve on the bisected grid and report `(4 E_{h/2} - E_h) / 3`.
    pub richardson: bool,
    /// Relative cell growth beyond the potential region (0 gives a uniform grid).
    pub grading: T,
    pub max_length: T,
    /// Accepted relative gap between the Dirichlet and Neumann values.
    pub bracket_tol: T,
    /// Relative tolerance of each eigenvalue.
    pub rel_tol: T,
}

impl<T: Real> Default for Numerics<T> {
    fn default() -> Self {
        Self {
            h: lit(0.01),
            length: None,
            auto_truncate: true,
            richardson: false,
            grading: lit(0.02),
            max_length: lit(1e15),
            bracket_tol: lit(1e-4),
            rel_tol: lit(1e-10),
        }
    }
}

impl<T: Real> Numerics<T> {
    pub fn uniform(h: T, length: T) -> Self {
        Self { h, length: Some(length), auto_truncate: false, grading: T::zero(), ..Self::default() }
    }

    fn spec(&self, length: T, right: Boundary) -> GridSpec<T> {
        GridSpec { h: self.h, length, grading: self.grading, h_cap: None, right }
    }
}

/// Negative eigenvalues of one channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigResult<T> {
    /// Dirichlet-at-`L` eigenvalues, ascending; these are upper bounds for the true ones.
    pub eigenvalues: Vec<T>,
    pub count: usize,
    pub grid: GridInfo,
    /// `(Dirichlet value, Neumann value)` per eigenvalue.
    pub bracket: Vec<(T, T)>,
    /// Eigenvalues present only with the Neumann truncation at the final `L`.
    pub marginal: Vec<T>,
    pub richardson: Option<Vec<T>>,
    pub truncation_converged: bool,
}

struct Truncated<T> {
    grid: Grid<T>,
    dirichlet: Vec<T>,
    neumann: Vec<T>,
}

fn solve_both<T: Real>(ch: &Channel<T>, num: &Numerics<T>, length: T) -> Result<Truncated<T>> {
    let grid = Grid::build(ch, &num.spec(length, Boundary::Dirichlet))?;
    let pd = discretize_form(ch, &grid)?;
    let pn = Pencil { right: Boundary::Neumann, ..pd.clone() };
    Ok(Truncated { dirichlet: pd.negative_eigenvalues(num.rel_tol), neumann: pn.negative_eigenvalues(num.rel_tol), grid })
}

fn agreed<T: Real>(sol: &Truncated<T>, tol: T) -> bool {
    sol.dirichlet.len() == sol.neumann.len()
        && sol.dirichlet.iter().zip(&sol.neumann).all(|(d, n)| (*d - *n).abs() <= tol * d.abs())
}

/// Negative spectrum of a channel with Dirichlet/Neumann bracketing of the
/// truncation and, when enabled, automatic growth of `L`.
pub fn solve_channel<T: Real>(ch: &Channel<T>, num: &Numerics<T>) -> Result<EigResult<T>> {
    let mut length = num.length.unwrap_or(ch.potential_radius() + lit(10.0));
    let mut sol = solve_both(ch, num, length)?;
    if num.auto_truncate {
        while !agreed(&sol, num.bracket_tol) {
            let shallowest = *sol.neumann.last().expect("disagreement implies a Neumann eigenvalue");
            let reach = ch.start + lit::<T>(12.0) / (-shallowest).sqrt();
            let next = (length * lit(2.0)).max(reach.min(length * lit(1e3)));
            if next > num.max_length {
                break;
            }
            length = next;
            sol = solve_both(ch, num, length)?;
        }
    }
    let converged = agreed(&sol, num.bracket_tol);
    let count = sol.dirichlet.len();
    let bracket = sol.dirichlet.iter().copied().zip(sol.neumann.iter().copied()).collect();
    let marginal = sol.neumann.iter().skip(count).copied().collect();
    let richardson = if num.richardson {
        let fine = discretize_form(ch, &sol.grid.refined())?.negative_eigenvalues(num.rel_tol);
        Some(
            sol.dirichlet
                .iter()
                .zip(&fine)
                .map(|(c, f)| (lit::<T>(4.0) * *f - *c) / lit(3.0))
                .collect(),
        )
    } else {
        None
    };
    Ok(EigResult {
        eigenvalues: sol.dirichlet,
        count,
        grid: sol.grid.info(),
        bracket,
        marginal,
        richardson,
        truncation_converged: converged,
    })
}

/// Number of eigenvalues below `s` on `grid`, checked against the bisected grid.
pub fn count_negative<T: Real>(ch: &Channel<T>, grid: &Grid<T>, s: T) -> Result<usize> {
    let coarse = discretize_form(ch, grid)?.count_below(s);
    let fine = discretize_form(ch, &grid.refined())?.count_below(s);
    if coarse != fine {
        return Err(Error::Unconverged(format!("count {coarse} at h and {fine} at h/2 below {}", to_f64(s))));
    }
    Ok(coarse)
}

/// Lowest eigenvalue of the pencil on a fixed grid, or `None` if nonnegative.
pub fn ground_state<T: Real>(ch: &Channel<T>, grid: &Grid<T>, rel_tol: T) -> Result<Option<T>> {
    let p = discretize_form(ch, grid)?;
    if p.count_below(T::zero()) == 0 {
        return Ok(None);
    }
    let lo = p.lower_bound() * lit(1.0 + 1e-9) - T::min_positive_value();
    Ok(Some(p.eigenvalue(0, lo, T::zero(), rel_tol)))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{ModifiedPotential, RadialPotential};
    use crate::tree::{make_geometric_tree, RegularTree};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn well(depth: f64, a: f64, b: f64) -> Arc<dyn RadialFn<f64>> {
        Arc::new(RadialPotential::well(-depth, a, b).unwrap())
    }

    fn flat(left: Boundary, v: Arc<dyn RadialFn<f64>>, lambda: f64) -> Channel<f64> {
        Channel::weighted(0.0, ChannelWeight::Power { alpha: 0.0 }, left, v, lambda)
    }

    /// Root of `f` on `[a, b]` by plain bisection.
    fn root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let fa = f(a);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if (f(m) > 0.0) == (fa > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn free_dirichlet_converges_to_pi_squared() {
        let ch = flat(Boundary::Dirichlet, Arc::new(RadialPotential::zero()), 0.0);
        let mut errs = Vec::new();
        for h in [0.02, 0.01, 0.005] {
            let grid = Grid::build(&ch, &Numerics::uniform(h, 1.0).spec(1.0, Boundary::Dirichlet)).unwrap();
            let p = discretize_form(&ch, &grid).unwrap();
            let ev = lowest_eigenvalues(&p, 2);
            errs.push((ev[0] - PI * PI).abs());
            assert!((ev[1] / ev[0] - 4.0).abs() < 0.01);
            assert!(p.negative_eigenvalues(1e-10).is_empty());
        }
        assert!(errs[2] < 1e-3);
        for w in errs.windows(2) {
            assert!((w[0] / w[1] - 4.0).abs() < 0.2, "ratio {}", w[0] / w[1]);
        }
    }

    #[test]
    fn free_stencil_is_standard_tridiagonal() {
        let ch = flat(Boundary::Dirichlet, Arc::new(RadialPotential::zero()), 0.0);
        let grid = Grid::build(&ch, &Numerics::uniform(0.1, 1.0).spec(1.0, Boundary::Dirichlet)).unwrap();
        let p = discretize_form(&ch, &grid).unwrap();
        assert_eq!(p.dim(), 9);
        for c in &p.conductance {
            assert!((c - 10.0).abs() < 1e-9);
        }
        for m in &p.mass[1..10] {
            assert!((m - 0.1).abs() < 1e-12);
        }
    }

    /// Even state of the unit-depth well on the Neumann half-line.
    fn neumann_oracle(lambda: f64) -> f64 {
        let kappa = root(|k| (lambda - k * k).sqrt() * (lambda - k * k).sqrt().tan() - k, 1e-12, lambda.sqrt().min(1.5) - 1e-12);
        -kappa * kappa
    }

    #[test]
    fn neumann_well_matches_transcendental_equation() {
        let ch = flat(Boundary::Neumann, well(1.0, 0.0, 1.0), 1.0);
        let num = Numerics { h: 0.0025, richardson: true, bracket_tol: 1e-12, ..Numerics::default() };
        let res = solve_channel(&ch, &num).unwrap();
        assert_eq!(res.count, 1);
        let exact = neumann_oracle(1.0);
        let e = res.richardson.as_ref().unwrap()[0];
        assert!((e - exact).abs() < 1e-7 * exact.abs(), "{e} vs {exact}");
        assert!(res.truncation_converged);
        let (d, n) = res.bracket[0];
        assert!(d >= n);
    }

    #[test]
    fn dirichlet_well_has_no_bound_state_at_unit_depth() {
        // odd states need k cot k = -kappa with k < 1, impossible below pi/2
        let ch = flat(Boundary::Dirichlet, well(1.0, 0.0, 1.0), 1.0);
        let res = solve_channel(&ch, &Numerics::default()).unwrap();
        assert_eq!(res.count, 0);
        let grid = Grid::build(&ch, &Numerics::<f64>::default().spec(20.0, Boundary::Dirichlet)).unwrap();
        assert_eq!(count_negative(&ch, &grid, 0.0).unwrap(), 0);
        let neu = flat(Boundary::Neumann, well(1.0, 0.0, 1.0), 1.0);
        assert_eq!(count_negative(&neu, &grid, 0.0).unwrap(), 1);
    }

    #[test]
    fn deep_dirichlet_well_matches_odd_oracle() {
        let lambda = 9.0;
        let ch = flat(Boundary::Dirichlet, well(1.0, 0.0, 1.0), lambda);
        let res = solve_channel(&ch, &Numerics { h: 0.0025, richardson: true, bracket_tol: 1e-12, ..Numerics::default() }).unwrap();
        // k cot k = -kappa, k^2 + kappa^2 = lambda
        let kappa = root(|kp| {
            let k = (lambda - kp * kp).sqrt();
            k / k.tan() + kp
        }, 1e-9, lambda.sqrt() - 1e-9);
        assert_eq!(res.count, 1);
        let e = res.richardson.unwrap()[0];
        assert!((e + kappa * kappa).abs() < 1e-6 * kappa * kappa);
    }

    #[test]
    fn repulsive_potential_has_empty_spectrum() {
        let v: Arc<dyn RadialFn<f64>> = Arc::new(RadialPotential::well(2.0, 0.0, 3.0).unwrap());
        let res = solve_channel(&flat(Boundary::Neumann, v, 5.0), &Numerics::default()).unwrap();
        assert_eq!(res.count, 0);
        assert!(res.marginal.is_empty());
    }

    #[test]
    fn positive_weight_form_is_nonnegative() {
        let ch = Channel::weighted(
            0.0,
            ChannelWeight::OnePlus { scale: 1.0, alpha: 0.5 },
            Boundary::Neumann,
            Arc::new(RadialPotential::zero()),
            1.0,
        );
        let grid = Grid::build(&ch, &Numerics::uniform(0.05, 30.0).spec(30.0, Boundary::Neumann)).unwrap();
        let p = discretize_form(&ch, &grid).unwrap();
        assert_eq!(p.count_below(0.0), 0);
        assert!(lowest_eigenvalues(&p, 1)[0] > -1e-12);
    }

    #[test]
    fn square_well_converges_at_second_order() {
        let lambda = 4.0;
        let ch = Channel::weighted(
            0.0,
            ChannelWeight::OnePlus { scale: 1.0, alpha: 0.5 },
            Boundary::Neumann,
            well(1.0, 0.5, 1.5),
            lambda,
        );
        let eig = |h: f64| {
            let grid = Grid::build(&ch, &Numerics::uniform(h, 25.0).spec(25.0, Boundary::Dirichlet)).unwrap();
            ground_state(&ch, &grid, 1e-13).unwrap().unwrap()
        };
        let (e1, e2, e3) = (eig(0.04), eig(0.02), eig(0.01));
        let ratio = (e1 - e2) / (e2 - e3);
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn pure_power_operator_scales_covariantly() {
        let alpha = 0.5;
        let base = |s: f64| -> Channel<f64> {
            let v = RadialPotential::well(-1.0 / (s * s), 0.5 * s, 1.5 * s).unwrap();
            Channel::weighted(0.0, ChannelWeight::Power { alpha }, Boundary::Dirichlet, Arc::new(v), 60.0)
        };
        let solve = |s: f64| {
            let ch = base(s);
            let grid = Grid::build(&ch, &Numerics::uniform(0.01 * s, 12.0 * s).spec(12.0 * s, Boundary::Dirichlet)).unwrap();
            discretize_form(&ch, &grid).unwrap().negative_eigenvalues(1e-13)
        };
        let e1 = solve(1.0);
        let e3 = solve(3.0);
        assert!(!e1.is_empty());
        assert_eq!(e1.len(), e3.len());
        for (a, b) in e1.iter().zip(&e3) {
            assert!((b * 9.0 - a).abs() < 1e-6 * a.abs(), "{a} vs {}", b * 9.0);
        }
    }

    #[test]
    fn truncation_bracket_narrows_with_length() {
        let ch = flat(Boundary::Neumann, well(1.0, 0.0, 1.0), 0.3);
        let gap = |l: f64| {
            let num = Numerics::uniform(0.01, l);
            let s = solve_both(&ch, &num, l).unwrap();
            assert!(s.dirichlet[0] >= s.neumann[0]);
            s.dirichlet[0] - s.neumann[0]
        };
        let (g1, g2) = (gap(6.0), gap(12.0));
        assert!(g2 < g1 && g2 > 0.0);
    }

    #[test]
    fn misaligned_grid_is_rejected() {
        let ch = flat(Boundary::Neumann, well(1.0, 0.0, 1.05), 1.0);
        let nodes: Vec<f64> = (0..=30).map(|i| i as f64 * 0.1).collect();
        assert!(matches!(Grid::from_nodes(&ch, nodes.clone(), Boundary::Dirichlet), Err(Error::BadGrid(_))));
        let ok = flat(Boundary::Neumann, well(1.0, 0.0, 1.0), 1.0);
        assert!(Grid::from_nodes(&ok, nodes, Boundary::Dirichlet).is_ok());
    }

    #[test]
    fn weak_state_is_resolved_by_auto_truncation() {
        // d = 1: E ~ -(lambda * int V)^2 for small lambda
        let lambda = 0.01;
        let ch = flat(Boundary::Neumann, well(1.0, 0.0, 1.0), lambda);
        let res = solve_channel(&ch, &Numerics::default()).unwrap();
        assert_eq!(res.count, 1);
        assert!(res.truncation_converged);
        let exact = neumann_oracle(lambda);
        assert!((res.eigenvalues[0] - exact).abs() < 1e-4 * exact.abs(), "{} vs {exact}", res.eigenvalues[0]);
        assert!(res.grid.length > 1000.0);
    }

    fn sandwich_channels(lambda: f64) -> (Channel<f64>, Channel<f64>, Channel<f64>) {
        let tree = make_geometric_tree(1.5, 2, 30).unwrap();
        let v = RadialPotential::gaussian(-1.0, 1.0).unwrap();
        let env = tree.envelope_constants(0, 1.5, 1e6).unwrap();
        let lower = {
            let vm = ModifiedPotential::new(&v, &tree, 0, &env, false);
            Channel::weighted(0.0, ChannelWeight::OnePlus { scale: env.lower, alpha: 0.5 }, Boundary::Neumann, Arc::new(vm), lambda)
        };
        let upper = {
            let vm = ModifiedPotential::new(&v, &tree, 0, &env, true);
            Channel::weighted(0.0, ChannelWeight::OnePlus { scale: env.upper, alpha: 0.5 }, Boundary::Neumann, Arc::new(vm), lambda)
        };
        (lower, Channel::tree(&tree, 0, Arc::new(v), lambda), upper)
    }

    #[test]
    fn sandwich_operators_bracket_the_channel() {
        for lambda in [0.3, 1.0, 3.0] {
            let (lo, mid, hi) = sandwich_channels(lambda);
            let grid = Grid::build(&mid, &Numerics::<f64>::default().spec(2000.0, Boundary::Dirichlet)).unwrap();
            let g = |c: &Channel<f64>| {
                let gr = Grid::from_nodes(c, grid.nodes.clone(), Boundary::Dirichlet).unwrap();
                discretize_form(c, &gr).unwrap().negative_eigenvalues(1e-12)
            };
            let (el, em, eh) = (g(&lo), g(&mid), g(&hi));
            assert!(el.len() >= em.len() && em.len() >= eh.len());
            for (j, e) in em.iter().enumerate() {
                assert!(el[j] <= *e * (1.0 - 1e-12));
                if j < eh.len() {
                    assert!(*e <= eh[j]);
                }
            }
        }
    }

    #[test]
    fn channel_geometry_follows_tree() {
        let tree = RegularTree::new(vec![1.0, 2.0, 3.0], vec![3, 2, 2], None).unwrap();
        let v: Arc<dyn RadialFn<f64>> = Arc::new(RadialPotential::zero());
        let c0 = Channel::tree(&tree, 0, v.clone(), 1.0);
        let c2 = Channel::tree(&tree, 2, v, 1.0);
        assert_eq!((c0.left, c0.multiplicity), (Boundary::Neumann, 1));
        assert_eq!((c2.left, c2.multiplicity, c2.start), (Boundary::Dirichlet, 3, 2.0));
        let grid = Grid::build(&c0, &Numerics::uniform(0.3, 5.0).spec(5.0, Boundary::Dirichlet)).unwrap();
        for bp in [1.0, 2.0, 3.0] {
            assert!(grid.nodes.iter().any(|x| (x - bp).abs() < 1e-12));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn counts_are_monotone_and_truncations_ordered(depth in 0.5f64..20.0, a in 0.0f64..2.0, len in 0.2f64..2.0, s in -5.0f64..0.0) {
            let ch = flat(Boundary::Neumann, well(depth, a, a + len), 1.0);
            let grid = Grid::build(&ch, &Numerics::uniform(0.02, 8.0).spec(8.0, Boundary::Dirichlet)).unwrap();
            let pd = discretize_form(&ch, &grid).unwrap();
            let pn = Pencil { right: Boundary::Neumann, ..pd.clone() };
            prop_assert!(pd.count_below(s) <= pd.count_below(s * 0.5));
            prop_assert!(pd.count_below(s) <= pn.count_below(s));
            let ed = pd.negative_eigenvalues(1e-12);
            let en = pn.negative_eigenvalues(1e-12);
            for (d, n) in ed.iter().zip(&en) {
                prop_assert!(d >= n);
            }
            let lambda_more = flat(Boundary::Neumann, well(depth * 1.5, a, a + len), 1.0);
            let pm = discretize_form(&lambda_more, &grid).unwrap();
            prop_assert!(pm.count_below(s) >= pd.count_below(s));
        }
    }
}
