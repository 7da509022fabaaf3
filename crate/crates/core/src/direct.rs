//! Schrödinger operator on an explicitly truncated metric tree.
//!
//! Every edge carries its own linear finite elements; a vertex is a single
//! unknown shared by all incident edges, so continuity holds by construction
//! and the flux balance is the natural condition of the assembled form. The
//! node graph is itself a tree, so Gaussian elimination from the leaves to
//! the root produces no fill-in and yields both inertia counts and solves
//! in linear time.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::halfline::{bisect_eigenvalue, Boundary, Channel, Grid, GridSpec};
use crate::num::{lit, to_f64, Real};
use crate::potential::RadialFn;
use crate::tree::RegularTree;

/// Default limit on the number of unknowns.
pub const SIZE_CAP: usize = 200_000;

/// Assembled pencil on the node tree. Nodes are numbered so that every
/// parent precedes its children; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeGraphMatrix<T> {
    pub position: Vec<T>,
    pub parent: Vec<Option<usize>>,
    /// Conductance `1/h` of the cell joining a node to its parent.
    pub parent_conductance: Vec<T>,
    /// Total conductance of cells joining a node to pinned (Dirichlet) ends.
    pub pinned_conductance: Vec<T>,
    /// Diagonal of the stiffness part, accumulated cell by cell.
    pub stiffness_diag: Vec<T>,
    pub potential: Vec<T>,
    pub mass: Vec<T>,
    /// Nodes sitting on branching vertices, with their outgoing cell count.
    pub vertices: Vec<(usize, usize)>,
    pub far_end: Boundary,
}

/// Assembles the operator on the tree cut at radius `length`. The radial
/// node positions follow the same aligned grid as the half-line solver.
pub fn build_graph_matrix<T: Real>(
    tree: &RegularTree<T>,
    v: std::sync::Arc<dyn RadialFn<T>>,
    lambda: T,
    spec: &GridSpec<T>,
    cap: usize,
) -> Result<TreeGraphMatrix<T>> {
    let root = Channel::tree(tree, 0, v.clone(), lambda);
    let radial = Grid::build(&root, spec)?.nodes;
    let length = spec.length;
    let far_end = spec.right;

    // generation boundaries inside the cut
    let mut bounds = vec![T::zero()];
    bounds.extend(tree.vertex_distances().iter().copied().filter(|&t| t < length));
    bounds.push(length);

    let cells_in = |a: T, b: T| radial.iter().filter(|&&x| x > a && x < b).count() + 1;
    let mut size = 1usize;
    for (n, w) in bounds.windows(2).enumerate() {
        let edges = tree.leaf_count(n);
        let interior = (cells_in(w[0], w[1]) - 1) as u128;
        let ends = if n + 2 < bounds.len() || far_end == Boundary::Neumann { 1 } else { 0 };
        let add = edges.saturating_mul(interior + ends);
        size = size.saturating_add(usize::try_from(add).unwrap_or(usize::MAX));
        if size > cap {
            return Err(Error::SizeCapExceeded { size, cap });
        }
    }

    let mut m = TreeGraphMatrix {
        position: vec![T::zero()],
        parent: vec![None],
        parent_conductance: vec![T::zero()],
        pinned_conductance: vec![T::zero()],
        stiffness_diag: vec![T::zero()],
        potential: vec![T::zero()],
        mass: vec![T::zero()],
        vertices: Vec::new(),
        far_end,
    };
    let quarter = lit::<T>(0.25);
    let half = lit::<T>(0.5);
    let add_cell = |m: &mut TreeGraphMatrix<T>, a: usize, b: Option<usize>, xa: T, xb: T| {
        let h = xb - xa;
        m.stiffness_diag[a] = m.stiffness_diag[a] + T::one() / h;
        let ta = xa + h * quarter;
        let tb = xb - h * quarter;
        m.mass[a] = m.mass[a] + h * half;
        m.potential[a] = m.potential[a] + h * half * lambda * v.eval(ta);
        match b {
            Some(b) => {
                m.stiffness_diag[b] = m.stiffness_diag[b] + T::one() / h;
                m.mass[b] = m.mass[b] + h * half;
                m.potential[b] = m.potential[b] + h * half * lambda * v.eval(tb);
                m.parent_conductance[b] = T::one() / h;
            }
            None => m.pinned_conductance[a] = m.pinned_conductance[a] + T::one() / h,
        }
    };

    let mut frontier = vec![0usize];
    for (n, w) in bounds.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let last_generation = n + 2 == bounds.len();
        let mut pts: Vec<T> = radial.iter().copied().filter(|&x| x > a && x < b).collect();
        pts.push(b);
        let fanout = if n == 0 { 1 } else { tree.branching_numbers()[n - 1] as usize };
        let mut next = Vec::with_capacity(frontier.len() * fanout);
        for &start in &frontier {
            if n > 0 {
                m.vertices.push((start, fanout));
            }
            for _ in 0..fanout {
                let mut prev = start;
                let mut xprev = a;
                for (i, &x) in pts.iter().enumerate() {
                    let is_end = i + 1 == pts.len();
                    if is_end && last_generation && far_end == Boundary::Dirichlet {
                        add_cell(&mut m, prev, None, xprev, x);
                        break;
                    }
                    let id = m.position.len();
                    m.position.push(x);
                    m.parent.push(Some(prev));
                    m.parent_conductance.push(T::zero());
                    m.pinned_conductance.push(T::zero());
                    m.stiffness_diag.push(T::zero());
                    m.potential.push(T::zero());
                    m.mass.push(T::zero());
                    add_cell(&mut m, prev, Some(id), xprev, x);
                    prev = id;
                    xprev = x;
                }
                if !last_generation {
                    next.push(prev);
                }
            }
        }
        frontier = next;
    }
    Ok(m)
}

impl<T: Real> TreeGraphMatrix<T> {
    pub fn dim(&self) -> usize {
        self.position.len()
    }

    /// Ratio-form pivots of `A - sM` eliminated from the leaves; returns
    /// the pivots `q` and the partial values `y` (`q = y + c_parent`).
    fn factor(&self, s: T) -> (Vec<T>, Vec<T>) {
        let n = self.dim();
        let mut y: Vec<T> = (0..n).map(|i| self.potential[i] - s * self.mass[i] + self.pinned_conductance[i]).collect();
        let mut q = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut qi = y[i] + self.parent_conductance[i];
            if qi == T::zero() {
                qi = T::min_positive_value();
            }
            q[i] = qi;
            if let Some(p) = self.parent[i] {
                let c = self.parent_conductance[i];
                y[p] = y[p] + c * (y[i] / qi);
            }
        }
        (q, y)
    }

    /// Number of eigenvalues below `s`.
    pub fn count_below(&self, s: T) -> usize {
        self.factor(s).0.iter().filter(|&&q| q < T::zero()).count()
    }

    /// Solves `(A - sM) x = b`.
    pub fn solve_shifted(&self, s: T, b: &[T]) -> Vec<T> {
        let (q, _) = self.factor(s);
        let mut z = b.to_vec();
        for i in (1..self.dim()).rev() {
            let p = self.parent[i].expect("non-root node has a parent");
            z[p] = z[p] + self.parent_conductance[i] / q[i] * z[i];
        }
        let mut x = vec![T::zero(); self.dim()];
        for i in 0..self.dim() {
            let from_parent = match self.parent[i] {
                Some(p) => self.parent_conductance[i] * x[p],
                None => T::zero(),
            };
            x[i] = (z[i] + from_parent) / q[i];
        }
        x
    }

    /// `A x` (stiffness plus potential).
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y: Vec<T> = (0..self.dim())
            .map(|i| (self.potential[i] + self.pinned_conductance[i]) * x[i])
            .collect();
        for i in 1..self.dim() {
            let p = self.parent[i].expect("non-root node has a parent");
            let c = self.parent_conductance[i];
            let flux = c * (x[i] - x[p]);
            y[i] = y[i] + flux;
            y[p] = y[p] - flux;
        }
        y
    }

    /// Stiffness row sums: the accumulated diagonal minus the couplings to
    /// parent and children. Zero except next to pinned ends.
    pub fn stiffness_row_sums(&self) -> Vec<T> {
        let mut sums: Vec<T> = (0..self.dim()).map(|i| self.stiffness_diag[i] - self.parent_conductance[i]).collect();
        for i in 1..self.dim() {
            let p = self.parent[i].expect("non-root node has a parent");
            sums[p] = sums[p] - self.parent_conductance[i];
        }
        sums
    }

    fn lower_bound(&self) -> T {
        (0..self.dim()).map(|i| self.potential[i] / self.mass[i]).fold(T::zero(), |a, b| a.min(b))
    }

    /// Writes `A` and the mass diagonal in coordinate format
    /// (`row col value`, 1-based, lower triangle of `A` then `M`).
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.dim();
        writeln!(out, "% stiffness+potential {n} x {n}")?;
        for i in 0..n {
            let diag = self.stiffness_diag[i] + self.potential[i];
            writeln!(out, "{} {} {:e}", i + 1, i + 1, to_f64(diag))?;
            if let Some(p) = self.parent[i] {
                writeln!(out, "{} {} {:e}", i + 1, p + 1, -to_f64(self.parent_conductance[i]))?;
            }
        }
        writeln!(out, "% mass diagonal")?;
        for i in 0..n {
            writeln!(out, "{} {} {:e}", i + 1, i + 1, to_f64(self.mass[i]))?;
        }
        Ok(())
    }
}

/// Negative spectrum of the truncated tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectSpectrum<T> {
    /// Eigenvalues with repetition, ascending.
    pub eigenvalues: Vec<T>,
    /// Distinct values with multiplicities.
    pub entries: Vec<(T, usize)>,
    pub dim: usize,
    /// Largest `‖A v - E M v‖₂` over unit eigenvectors.
    pub max_residual: f64,
    /// Largest discrete flux imbalance at a branching vertex.
    pub max_kirchhoff: f64,
}

/// Negative eigenvalues by inertia bisection, eigenvectors by inverse
/// iteration for the residual and flux-balance checks.
pub fn direct_negative_spectrum<T: Real>(m: &TreeGraphMatrix<T>, max_count: usize) -> Result<DirectSpectrum<T>> {
    let rel_tol = lit::<T>(1e-12);
    let n_neg = m.count_below(T::zero()).min(max_count);
    let lo = m.lower_bound() * lit(1.0 + 1e-9) - T::min_positive_value();
    let eigenvalues: Vec<T> = (0..n_neg).map(|j| bisect_eigenvalue(|s| m.count_below(s), j, lo, T::zero(), rel_tol)).collect();

    let mut entries: Vec<(T, usize)> = Vec::new();
    for &e in &eigenvalues {
        match entries.last_mut() {
            Some(last) if (last.0 - e).abs() <= lit::<T>(1e-8) * e.abs().max(T::one()) => last.1 += 1,
            _ => entries.push((e, 1)),
        }
    }

    let mut max_residual = 0.0f64;
    let mut max_kirchhoff = 0.0f64;
    for &(e, _) in &entries {
        let vector = inverse_iteration(m, e);
        let av = m.apply(&vector);
        let res = av
            .iter()
            .zip(&vector)
            .zip(&m.mass)
            .fold(T::zero(), |s, ((a, x), w)| {
                let r = *a - e * *w * *x;
                s + r * r
            })
            .sqrt();
        max_residual = max_residual.max(to_f64(res));
        max_kirchhoff = max_kirchhoff.max(kirchhoff_imbalance(m, &vector));
    }
    if max_residual > 1e-8 {
        return Err(Error::Unconverged(format!("eigenvector residual {max_residual:e}")));
    }
    Ok(DirectSpectrum { eigenvalues, entries, dim: m.dim(), max_residual, max_kirchhoff })
}

fn inverse_iteration<T: Real>(m: &TreeGraphMatrix<T>, e: T) -> Vec<T> {
    let shift = e - e.abs().max(lit(1e-30)) * lit(1e-7);
    let norm = |x: &[T]| x.iter().fold(T::zero(), |s, a| s + *a * *a).sqrt();
    let mut x: Vec<T> = (0..m.dim()).map(|i| T::one() + lit::<T>(((i * 7919) % 101) as f64 / 1000.0)).collect();
    for _ in 0..6 {
        let rhs: Vec<T> = x.iter().zip(&m.mass).map(|(a, w)| *a * *w).collect();
        x = m.solve_shifted(shift, &rhs);
        let nx = norm(&x);
        x.iter_mut().for_each(|a| *a = *a / nx);
    }
    x
}

/// Largest `|Σ_out u'_j - u'_in|` over branching vertices, using one-sided
/// differences on the adjacent cells, relative to the largest nodal slope.
fn kirchhoff_imbalance<T: Real>(m: &TreeGraphMatrix<T>, u: &[T]) -> f64 {
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); m.dim()];
    let mut slope_max = T::zero();
    for i in 1..m.dim() {
        let p = m.parent[i].expect("non-root node has a parent");
        children[p].push(i);
        slope_max = slope_max.max(((u[i] - u[p]) * m.parent_conductance[i]).abs());
    }
    if slope_max == T::zero() {
        return 0.0;
    }
    let mut worst = T::zero();
    for &(node, _) in &m.vertices {
        let incoming = match m.parent[node] {
            Some(p) => (u[node] - u[p]) * m.parent_conductance[node],
            None => T::zero(),
        };
        let outgoing = children[node]
            .iter()
            .fold(T::zero(), |s, &c| s + (u[c] - u[node]) * m.parent_conductance[c]);
        worst = worst.max((outgoing - incoming).abs());
    }
    to_f64(worst / slope_max)
}
