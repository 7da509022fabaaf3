//! Regular rooted metric trees and their branching functions.
//!
//! A regular tree is fixed by the distances `t_1 < t_2 < ...` from the root to
//! each generation of vertices and the branching number `b_k` shared by all
//! vertices of generation `k`. The branching function `g_k(t)` counts the
//! branches at distance `t` of a generation-`k` subtree; `g_0` counts all
//! points of the tree at distance `t` from the root.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::{from_usize, lit, to_f64, Real};

/// How a tree was generated. Geometric trees carry their exact tail behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TreeKind {
    Explicit,
    /// `t_k = beta^k`, `b_k = b`.
    Geometric { d: f64, b: u32 },
    /// One branching vertex followed by `b_k = 1`.
    Terminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularTree<T> {
    vertex_distances: Vec<T>,
    branching_numbers: Vec<u32>,
    /// `cumulative[n] = b_1 ... b_n`, `cumulative[0] = 1`.
    cumulative: Vec<T>,
    declared_dimension: Option<T>,
    kind: TreeKind,
}

/// Power-law bracket `lower (1+t)^exponent <= g_k(t) <= upper (1+t)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope<T> {
    pub lower: T,
    pub upper: T,
    pub exponent: T,
    pub valid_from: T,
    pub checked_to: T,
}

impl<T: Real> RegularTree<T> {
    pub fn new(
        vertex_distances: Vec<T>,
        branching_numbers: Vec<u32>,
        declared_dimension: Option<T>,
    ) -> Result<Self> {
        Self::with_kind(vertex_distances, branching_numbers, declared_dimension, TreeKind::Explicit)
    }

    fn with_kind(
        vertex_distances: Vec<T>,
        branching_numbers: Vec<u32>,
        declared_dimension: Option<T>,
        kind: TreeKind,
    ) -> Result<Self> {
        if vertex_distances.len() != branching_numbers.len() {
            return Err(Error::InvalidTree(format!(
                "{} vertex distances but {} branching numbers",
                vertex_distances.len(),
                branching_numbers.len()
            )));
        }
        if let Some(&first) = vertex_distances.first() {
            if !(first > T::zero()) {
                return Err(Error::InvalidTree("t_1 must be positive".into()));
            }
        }
        if vertex_distances.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidTree("vertex distances must be strictly increasing".into()));
        }
        if branching_numbers.contains(&0) {
            return Err(Error::InvalidTree("branching numbers must be >= 1".into()));
        }
        if !branching_numbers.is_empty() && branching_numbers.iter().all(|&b| b == 1) {
            return Err(Error::InvalidTree(
                "at least one branching number must be >= 2 (use an empty tree for a half-line)".into(),
            ));
        }
        if let Some(d) = declared_dimension {
            if !(d >= T::one()) {
                return Err(Error::InvalidTree("declared dimension must be >= 1".into()));
            }
        }
        let mut cumulative = Vec::with_capacity(branching_numbers.len() + 1);
        cumulative.push(T::one());
        for &b in &branching_numbers {
            let last = *cumulative.last().unwrap();
            cumulative.push(last * from_usize::<T>(b as usize));
        }
        Ok(Self { vertex_distances, branching_numbers, cumulative, declared_dimension, kind })
    }

    /// The bare half-line: no vertices besides the root, `g_0 = 1`.
    pub fn half_line() -> Self {
        Self {
            vertex_distances: Vec::new(),
            branching_numbers: Vec::new(),
            cumulative: vec![T::one()],
            declared_dimension: Some(T::one()),
            kind: TreeKind::Explicit,
        }
    }

    pub fn vertex_distances(&self) -> &[T] {
        &self.vertex_distances
    }

    pub fn branching_numbers(&self) -> &[u32] {
        &self.branching_numbers
    }

    pub fn generations(&self) -> usize {
        self.vertex_distances.len()
    }

    pub fn declared_dimension(&self) -> Option<T> {
        self.declared_dimension
    }

    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    /// `t_k`, with `t_0 = 0` for the root.
    pub fn start(&self, k: usize) -> T {
        if k == 0 {
            T::zero()
        } else {
            self.vertex_distances[k - 1]
        }
    }

    /// Number of vertex generations `n` with `t_n <= t`.
    fn generation_at(&self, t: T) -> usize {
        self.vertex_distances.partition_point(|&tk| tk <= t)
    }

    /// Branching function `g_k(t)`; right-continuous at the vertex distances.
    pub fn gk_eval(&self, k: usize, t: T) -> T {
        assert!(k <= self.generations(), "generation {k} beyond tree depth {}", self.generations());
        let n = self.generation_at(t);
        if k == 0 {
            return self.cumulative[n];
        }
        if n < k {
            T::zero()
        } else {
            self.cumulative[n] / self.cumulative[k]
        }
    }

    /// Value of `g_k` just left of `t` (differs from `gk_eval` only at vertex distances).
    pub fn gk_left(&self, k: usize, t: T) -> T {
        let n = self.vertex_distances.partition_point(|&tk| tk < t);
        if k == 0 {
            return self.cumulative[n];
        }
        if n < k {
            T::zero()
        } else {
            self.cumulative[n] / self.cumulative[k]
        }
    }

    /// Number of copies of channel `k` in the orthogonal decomposition:
    /// `b_1 ... b_{k-1} (b_k - 1)`. Zero when `b_k = 1`.
    pub fn multiplicity(&self, k: usize) -> u128 {
        assert!(k >= 1 && k <= self.generations(), "channel index {k} out of range");
        let head: u128 = self.branching_numbers[..k - 1].iter().map(|&b| b as u128).product();
        head * (self.branching_numbers[k - 1] as u128 - 1)
    }

    /// Product `b_1 ... b_k` as an exact integer.
    pub fn leaf_count(&self, k: usize) -> u128 {
        self.branching_numbers[..k].iter().map(|&b| b as u128).product()
    }

    /// Vertex distances inside the open interval `(a, b)`.
    pub fn breakpoints_in(&self, a: T, b: T) -> Vec<T> {
        self.vertex_distances.iter().copied().filter(|&t| t > a && t < b).collect()
    }

    /// Least-squares estimate of the global dimension from the growth of `g_0`.
    ///
    /// The fit runs over the vertex distances in `[t_min, t_max]`, where `g_0`
    /// takes its right-continuous value; at least four generations are needed.
    pub fn dimension_estimate(&self, t_min: T, t_max: T) -> Result<T> {
        if !(t_max > t_min) {
            return Err(Error::InvalidArgument("dimension_estimate needs t_max > t_min".into()));
        }
        let samples: Vec<(T, T)> = self
            .vertex_distances
            .iter()
            .copied()
            .filter(|&t| t >= t_min && t <= t_max)
            .map(|t| (t.ln(), self.gk_eval(0, t).ln()))
            .collect();
        if samples.len() < 4 {
            return Err(Error::DegenerateRange {
                found: samples.len(),
                t_min: to_f64(t_min),
                t_max: to_f64(t_max),
            });
        }
        let (slope, _, _) = linear_fit(&samples);
        Ok(slope + T::one())
    }

    /// Constants `a^-_k <= g_k(t) / (1+t)^(d-1) <= a^+_k` on `[t_k, l_check]`.
    ///
    /// Extremes of the ratio sit at generation endpoints because `g_k` is
    /// piecewise constant and `(1+t)^(d-1)` is monotone. Geometric trees also
    /// fold in the exact limits of the ratio beyond `l_check`.
    pub fn envelope_constants(&self, k: usize, d: T, l_check: T) -> Result<Envelope<T>> {
        if !(d >= T::one()) {
            return Err(Error::InvalidArgument("envelope needs d >= 1".into()));
        }
        let start = self.start(k);
        if !(l_check > start) {
            return Err(Error::InvalidArgument("envelope needs L_check > t_k".into()));
        }
        let alpha = d - T::one();
        let ratio = |g: T, t: T| g / (T::one() + t).powf(alpha);

        let mut knots = vec![start];
        knots.extend(self.breakpoints_in(start, l_check));
        knots.push(l_check);

        let mut lower = T::infinity();
        let mut upper = T::zero();
        let mut peaks = Vec::new();
        for w in knots.windows(2) {
            let g = self.gk_eval(k, w[0]);
            let left = ratio(g, w[0]);
            let right = ratio(g, w[1]);
            upper = upper.max(left).max(right);
            lower = lower.min(left).min(right);
            peaks.push(left);
        }

        if peaks.len() >= 4 {
            let tail = &peaks[peaks.len() - 4..];
            let factors: Vec<T> = tail.windows(2).map(|w| w[1] / w[0]).collect();
            let grow = lit::<T>(1.1);
            let shrink = T::one() / grow;
            if factors.iter().all(|&f| f > grow) || factors.iter().all(|&f| f < shrink) {
                return Err(Error::UnboundedRatio {
                    d: to_f64(d),
                    factor: to_f64(*factors.last().unwrap()),
                });
            }
        }

        if let TreeKind::Geometric { d: dg, b } = self.kind {
            if (to_f64(d) - dg).abs() < 1e-12 {
                let bk = self.cumulative[k.min(self.generations())];
                let limit_sup = T::one() / bk;
                let limit_inf = limit_sup / from_usize::<T>(b as usize);
                upper = upper.max(limit_sup);
                lower = lower.min(limit_inf);
            }
        }

        Ok(Envelope { lower, upper, exponent: alpha, valid_from: start, checked_to: l_check })
    }
}

impl<T: Real> Envelope<T> {
    /// `a^± (1+t)^exponent`.
    pub fn bound(&self, upper: bool, t: T) -> T {
        let a = if upper { self.upper } else { self.lower };
        a * (T::one() + t).powf(self.exponent)
    }
}

/// Tree with `b_k = b` and `t_k = beta^k`, `beta = b^(1/(d-1))`, so that
/// `g_0(t_k) = t_k^(d-1)` exactly.
pub fn make_geometric_tree<T: Real>(d: T, b: u32, generations: usize) -> Result<RegularTree<T>> {
    if !(d > T::one()) {
        return Err(Error::InvalidTree(
            "geometric trees need d > 1; use a terminal tree for d = 1".into(),
        ));
    }
    if b < 2 {
        return Err(Error::InvalidTree("geometric trees need b >= 2".into()));
    }
    let beta = from_usize::<T>(b as usize).powf(T::one() / (d - T::one()));
    let t: Vec<T> = (1..=generations).map(|k| beta.powi(k as i32)).collect();
    RegularTree::with_kind(t, vec![b; generations], Some(d), TreeKind::Geometric { d: to_f64(d), b })
}

/// Star-like tree of global dimension one: a single branching vertex with `b`
/// children at distance `spacing`, then unbranched vertices every `spacing`.
pub fn make_terminal_tree<T: Real>(b: u32, spacing: T, generations: usize) -> Result<RegularTree<T>> {
    if b < 2 {
        return Err(Error::InvalidTree("terminal trees need b >= 2".into()));
    }
    if generations == 0 {
        return Err(Error::InvalidTree("terminal trees need at least one generation".into()));
    }
    let t: Vec<T> = (1..=generations).map(|k| spacing * from_usize::<T>(k)).collect();
    let mut bs = vec![1; generations];
    bs[0] = b;
    RegularTree::with_kind(t, bs, Some(T::one()), TreeKind::Terminal)
}

/// Ordinary least squares `y = slope x + intercept`; returns `(slope, intercept, r2)`.
pub fn linear_fit<T: Real>(points: &[(T, T)]) -> (T, T, T) {
    let n = from_usize::<T>(points.len());
    let mx = points.iter().fold(T::zero(), |s, p| s + p.0) / n;
    let my = points.iter().fold(T::zero(), |s, p| s + p.1) / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in points {
        sxx = sxx + (x - mx) * (x - mx);
        sxy = sxy + (x - mx) * (y - my);
        syy = syy + (y - my) * (y - my);
    }
    let slope = if sxx > T::zero() { sxy / sxx } else { T::zero() };
    let intercept = my - slope * mx;
    let r2 = if syy > T::zero() { sxy * sxy / (sxx * syy) } else { T::one() };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn binary_unit() -> RegularTree<f64> {
        RegularTree::new((1..=8).map(|k| k as f64).collect(), vec![2; 8], None).unwrap()
    }

    #[test]
    fn branching_function_values() {
        let tree = binary_unit();
        assert_eq!(tree.gk_eval(0, 2.5), 4.0);
        assert_eq!(tree.gk_eval(0, 0.5), 1.0);
        assert_eq!(tree.gk_eval(3, 3.0), 1.0);
        assert_eq!(tree.gk_eval(3, 2.999), 0.0);
        assert_eq!(tree.gk_eval(3, 5.5), 4.0);
        assert_eq!(tree.gk_left(0, 2.0), 2.0);
        assert_eq!(tree.gk_eval(0, 2.0), 4.0);
    }

    #[test]
    fn multiplicities() {
        let tree = RegularTree::<f64>::new(vec![1.0, 2.0, 3.0], vec![3, 2, 2], None).unwrap();
        assert_eq!(tree.multiplicity(1), 2);
        assert_eq!(tree.multiplicity(2), 3);
        let term = make_terminal_tree::<f64>(2, 1.0, 5).unwrap();
        assert_eq!(term.multiplicity(1), 1);
        assert_eq!(term.multiplicity(2), 0);
    }

    #[test]
    fn geometric_construction() {
        let t2 = make_geometric_tree::<f64>(2.0, 2, 6).unwrap();
        for (k, &t) in t2.vertex_distances().iter().enumerate() {
            assert_relative_eq!(t, 2f64.powi(k as i32 + 1), max_relative = 1e-14);
            assert_relative_eq!(t2.gk_eval(0, t) / t, 1.0, max_relative = 1e-14);
        }
        let t15 = make_geometric_tree::<f64>(1.5, 2, 3).unwrap();
        assert_relative_eq!(t15.vertex_distances()[0], 4.0, max_relative = 1e-14);
        assert_relative_eq!(t15.vertex_distances()[2], 64.0, max_relative = 1e-13);
        let t3 = make_geometric_tree::<f64>(3.0, 4, 2).unwrap();
        assert_relative_eq!(t3.vertex_distances()[0], 2.0, max_relative = 1e-14);
        assert!(make_geometric_tree::<f64>(1.0, 2, 3).is_err());
    }

    #[test]
    fn dimension_estimates() {
        let g = make_geometric_tree::<f64>(1.5, 2, 12).unwrap();
        assert!((g.dimension_estimate(4.0, 4096.0).unwrap() - 1.5).abs() < 1e-2);
        let g2 = make_geometric_tree::<f64>(2.0, 2, 20).unwrap();
        assert!((g2.dimension_estimate(2.0, 1e5).unwrap() - 2.0).abs() < 1e-2);
        let term = make_terminal_tree::<f64>(2, 1.0, 200).unwrap();
        assert!((term.dimension_estimate(1.0, 200.0).unwrap() - 1.0).abs() < 0.05);
        assert!(matches!(
            g.dimension_estimate(4.0, 100.0),
            Err(Error::DegenerateRange { found: 3, .. })
        ));
    }

    #[test]
    fn envelope_of_half_line_is_trivial() {
        let hl = RegularTree::<f64>::half_line();
        let env = hl.envelope_constants(0, 1.0, 100.0).unwrap();
        assert_eq!((env.lower, env.upper), (1.0, 1.0));
    }

    #[test]
    fn envelope_geometric_brackets_and_ratio_bound() {
        let (d, b) = (1.5, 2u32);
        let tree = make_geometric_tree::<f64>(d, b, 10).unwrap();
        let l_check = tree.vertex_distances()[7];
        for k in 0..3 {
            let env = tree.envelope_constants(k, d, l_check).unwrap();
            // exhaustive scan oracle
            let start = tree.start(k);
            let n = 200_000;
            for i in 0..=n {
                let t = start + (l_check - start) * i as f64 / n as f64;
                let g = tree.gk_eval(k, t);
                assert!(g >= env.bound(false, t) * (1.0 - 1e-12), "lower fails at {t}");
                assert!(g <= env.bound(true, t) * (1.0 + 1e-12), "upper fails at {t}");
            }
        }
        let env0 = tree.envelope_constants(0, d, l_check).unwrap();
        let t1 = tree.vertex_distances()[0];
        assert!(env0.lower <= 1.0 && 1.0 <= env0.upper);
        assert!(env0.upper / env0.lower <= b as f64 * ((1.0 + t1) / t1).powf(d - 1.0));
    }

    #[test]
    fn envelope_rejects_wrong_dimension() {
        let tree = make_geometric_tree::<f64>(1.5, 2, 12).unwrap();
        let l = tree.vertex_distances()[11];
        assert!(matches!(tree.envelope_constants(0, 1.1, l), Err(Error::UnboundedRatio { .. })));
    }

    #[test]
    fn invalid_trees_rejected() {
        assert!(RegularTree::<f64>::new(vec![1.0, 1.0], vec![2, 2], None).is_err());
        assert!(RegularTree::<f64>::new(vec![0.0], vec![2], None).is_err());
        assert!(RegularTree::<f64>::new(vec![1.0], vec![0], None).is_err());
        assert!(RegularTree::<f64>::new(vec![1.0, 2.0], vec![1, 1], None).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let tree = make_geometric_tree::<f32>(2.0, 2, 6).unwrap();
        assert_eq!(tree.gk_eval(0, 5.0), 4.0);
        assert!((tree.dimension_estimate(2.0, 64.0).unwrap() - 2.0).abs() < 1e-3);
    }

    fn arb_tree() -> impl Strategy<Value = RegularTree<f64>> {
        prop::collection::vec((0.1f64..3.0, 1u32..4), 1..8).prop_filter_map("needs branching", |gens| {
            let mut t = 0.0;
            let mut ts = Vec::new();
            let mut bs = Vec::new();
            for (len, b) in gens {
                t += len;
                ts.push(t);
                bs.push(b);
            }
            RegularTree::new(ts, bs, None).ok()
        })
    }

    proptest! {
        #[test]
        fn telescoping_products(tree in arb_tree(), frac in 0.0f64..1.5) {
            let t_end = *tree.vertex_distances().last().unwrap();
            let t = frac * t_end * 1.2;
            for k in 1..=tree.generations() {
                if t >= tree.start(k) {
                    let lhs = tree.gk_eval(0, t);
                    let rhs = tree.gk_eval(k, t) * tree.leaf_count(k) as f64;
                    prop_assert_eq!(lhs, rhs);
                }
            }
        }

        #[test]
        fn channel_count_equals_leaf_count(tree in arb_tree()) {
            for big_k in 1..=tree.generations() {
                let total: u128 = 1 + (1..=big_k).map(|k| tree.multiplicity(k)).sum::<u128>();
                prop_assert_eq!(total, tree.leaf_count(big_k));
            }
        }

        #[test]
        fn g0_nondecreasing(tree in arb_tree(), a in 0.0f64..20.0, b in 0.0f64..20.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(tree.gk_eval(0, lo) <= tree.gk_eval(0, hi));
        }
    }
}
