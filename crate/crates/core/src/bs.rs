//! Birman–Schwinger kernels of `B₀ + λW`, the weak-coupling secular
//! equation, and trace-type bounds on eigenvalue counts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, Dense, Lu};
use crate::num::{from_usize, lit, to_f64, Real};
use crate::potential::{moment, sort_dedup, Decay, ModifiedPotential, RadialFn, RadialPotential, Shifted, Weight};
use crate::quadrature::{composite_rule, gauss_legendre, integrate};
use crate::special::{weak_coupling_constants, RobinGreen};
use crate::tree::RegularTree;

/// `λ K̃(d) ∫ t |Ṽ(t)| dt`, an upper bound on the number of negative
/// eigenvalues of the Dirichlet operator `-∂² + (d-1)(d-3)/(4t²) + λṼ`.
pub fn bargmann_bound<T: Real>(v_tilde: &dyn RadialFn<T>, d: T, lambda: T) -> Result<T> {
    let c = weak_coupling_constants(d)?;
    let m = moment(v_tilde, Weight::Monomial(T::one()), true)?;
    Ok(lambda * c.k_tilde * m.value)
}

/// Largest `a` with `a t^(d-1) <= g_0(t)` on `(0, l_check]`.
///
/// `g_0` is constant on each generation, so the infimum of the ratio is
/// attained as `t` approaches the next vertex from the left.
pub fn cor1_constant<T: Real>(tree: &RegularTree<T>, d: T, l_check: T) -> T {
    let alpha = d - T::one();
    let mut a = T::infinity();
    let mut left = T::zero();
    let ts = tree.vertex_distances();
    for &t in ts.iter().take_while(|&&t| t <= l_check) {
        a = a.min(tree.gk_eval(0, left) / t.powf(alpha));
        left = t;
    }
    if left < l_check {
        a = a.min(tree.gk_eval(0, left) / l_check.powf(alpha));
    }
    a
}

/// Count certificate for the root channel: `1 + λ K̃(d)/a ∫ |V| g_0 t^(2-d) dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cor1Bound<T> {
    pub bound: T,
    /// Constant `a` in `a t^(d-1) <= g_0(t)`.
    pub a: T,
    pub k_tilde: T,
    pub integral: T,
}

pub fn cor1_bound<T: Real>(v: &RadialPotential<T>, tree: &RegularTree<T>, d: T, lambda: T) -> Result<Cor1Bound<T>> {
    let c = weak_coupling_constants(d)?;
    let l_check = tree
        .vertex_distances()
        .last()
        .copied()
        .unwrap_or(T::one())
        .max(v.extent());
    let a = cor1_constant(tree, d, l_check);
    if !(a > T::zero()) {
        return Err(Error::InvalidArgument("no positive a with a t^(d-1) <= g_0".into()));
    }
    let integral = moment(v, Weight::BranchingScaled(tree, d), true)?.value;
    Ok(Cor1Bound { bound: T::one() + lambda * c.k_tilde / a * integral, a, k_tilde: c.k_tilde, integral })
}

/// Length over which envelope constants of channel `k` are checked.
pub(crate) fn envelope_length<T: Real>(tree: &RegularTree<T>, k: usize, v: &dyn RadialFn<T>) -> T {
    let last = tree.vertex_distances().last().copied().unwrap_or(T::one());
    last.max(v.extent()).max(tree.start(k) + T::one()) * lit(2.0)
}

/// `λ_c = 1 / (K̃(d) ∫ s |V_k^-(s + t_k)| ds)`; below it the trace bound
/// certifies that channel `k` has no negative eigenvalues. Infinite when
/// the potential vanishes on the channel.
pub fn channel_threshold<T: Real>(tree: &RegularTree<T>, v: &RadialPotential<T>, d: T, k: usize) -> Result<T> {
    if k == 0 || k > tree.generations() {
        return Err(Error::InvalidArgument(format!("channel {k} has no threshold")));
    }
    let c = weak_coupling_constants(d)?;
    let tk = tree.start(k);
    if let Decay::Compact(end) = v.decay() {
        if end <= tk {
            return Ok(T::infinity());
        }
    }
    let env = tree.envelope_constants(k, d, envelope_length(tree, k, v))?;
    let vm = ModifiedPotential::new(v, tree, k, &env, false);
    let shifted = Shifted { inner: vm, shift: to_f64(tk) };
    let m = moment(&shifted, Weight::Monomial(T::one()), true)?.value;
    if m == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::one() / (c.k_tilde * m))
}

/// Composite Gauss–Legendre rule on `[0, T_bs]` with panels aligned to the
/// knots of `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct BsQuadrature<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
    /// Panel end points.
    pub panels: Vec<(T, T)>,
    pub t_max: T,
    pub panel_len: T,
    pub order: usize,
    knots: Vec<T>,
}

impl<T: Real> BsQuadrature<T> {
    /// `T_bs` is grown until the tail of `∫ (1+t)^{1+2ν} |W|` is below `1e-12`.
    pub fn new(w: &dyn RadialFn<T>, d: T, panel_len: T, order: usize) -> Result<Self> {
        let nu = (lit::<T>(2.0) - d) / lit(2.0);
        let p = T::one() + lit::<T>(2.0) * nu;
        let t_max = match w.decay() {
            Decay::Compact(end) => end.max(lit(1e-6)),
            Decay::Power(q) if !(q + p < -T::one()) => {
                return Err(Error::DivergentMoment("kernel moment of W diverges".into()));
            }
            _ => {
                let mut t = w.extent().max(T::one());
                let tail = |a: T| {
                    let f = |x: T| w.eval(x).abs() * (T::one() + x).powf(p);
                    integrate(&f, a, a * lit(8.0), lit(1e-18), lit(1e-8)).0
                };
                for _ in 0..60 {
                    if tail(t) < lit(1e-12) {
                        break;
                    }
                    t = t * lit(2.0);
                }
                t
            }
        };
        let mut knots: Vec<T> = w.knots().into_iter().filter(|&k| k > T::zero() && k < t_max).collect();
        knots.push(T::zero());
        knots.push(t_max);
        sort_dedup(&mut knots);
        Ok(Self::from_knots(knots, t_max, panel_len, order))
    }

    fn from_knots(knots: Vec<T>, t_max: T, panel_len: T, order: usize) -> Self {
        let (nodes, weights) = composite_rule(&knots, panel_len, order);
        let mut panels = Vec::new();
        for seg in knots.windows(2) {
            let count = ((seg[1] - seg[0]) / panel_len).ceil().to_usize().unwrap_or(1).max(1);
            let h = (seg[1] - seg[0]) / from_usize::<T>(count);
            for i in 0..count {
                let a = seg[0] + h * from_usize::<T>(i);
                panels.push((a, if i + 1 == count { seg[1] } else { a + h }));
            }
        }
        Self { nodes, weights, panels, t_max, panel_len, order, knots }
    }

    /// Same domain with panels of half the length.
    pub fn refined(&self) -> Self {
        Self::from_knots(self.knots.clone(), self.t_max, self.panel_len * lit(0.5), self.order)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `sign(x) |x|^{1/2}`.
fn signed_sqrt<T: Real>(x: T) -> T {
    if x < T::zero() {
        -(-x).sqrt()
    } else {
        x.sqrt()
    }
}

/// Pointwise evaluation of the kernels `K`, `L`, `M = K - L` and `M(0)`.
pub struct KernelFunctions<'a, T> {
    w: &'a dyn RadialFn<T>,
    green: RobinGreen<T>,
    /// `C(ν) κ^{-2ν}`
    pub prefactor: T,
    pub c_m: T,
    pub nu: T,
}

impl<'a, T: Real> KernelFunctions<'a, T> {
    pub fn new(w: &'a dyn RadialFn<T>, kappa: T, d: T) -> Result<Self> {
        let c = weak_coupling_constants(d)?;
        Ok(Self {
            w,
            green: RobinGreen::new(kappa, d)?,
            prefactor: c.c_nu * kappa.powf(lit::<T>(-2.0) * c.nu),
            c_m: c.c_m,
            nu: c.nu,
        })
    }

    fn factors(&self, t: T, tp: T) -> (T, T) {
        (self.w.eval(t).abs().sqrt(), signed_sqrt(self.w.eval(tp)))
    }

    pub fn k(&self, t: T, tp: T) -> T {
        let (a, b) = self.factors(t, tp);
        if a == T::zero() || b == T::zero() {
            return T::zero();
        }
        a * self.green.eval(t, tp) * b
    }

    pub fn l(&self, t: T, tp: T) -> T {
        let (a, b) = self.factors(t, tp);
        let e = lit::<T>(0.5) - self.nu;
        self.prefactor * a * ((T::one() + t) * (T::one() + tp)).powf(e) * b
    }

    pub fn m(&self, t: T, tp: T) -> T {
        self.k(t, tp) - self.l(t, tp)
    }

    pub fn m0(&self, t: T, tp: T) -> T {
        let (a, b) = self.factors(t, tp);
        let (s, sp) = (T::one() + t, T::one() + tp);
        let ratio = if t > tp { (s / sp).powf(self.nu) } else { (sp / s).powf(self.nu) };
        self.c_m * a * b * (s * sp).sqrt() * ratio
    }
}

/// Kernel values at the quadrature nodes.
#[derive(Debug, Clone)]
pub struct BsKernelSet<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
    pub kappa: T,
    pub nu: T,
    pub d: T,
    /// `C(ν) κ^{-2ν}`
    pub prefactor: T,
    pub k: Dense<T>,
    pub l: Dense<T>,
    pub m: Dense<T>,
    pub m0: Dense<T>,
    /// `|W|^{1/2} (1+t)^{1/2-ν}`
    pub phi: Vec<T>,
    /// `sign(W) |W|^{1/2} (1+t)^{1/2-ν}`
    pub psi: Vec<T>,
}

/// Assembles `K(κ)`, its rank-one part `L(κ)`, the remainder `M(κ)` and
/// the limit `M(0)` on the quadrature nodes.
pub fn build_bs_kernels<T: Real>(w: &dyn RadialFn<T>, kappa: T, d: T, quad: &BsQuadrature<T>) -> Result<BsKernelSet<T>> {
    let kf = KernelFunctions::new(w, kappa, d)?;
    let n = quad.len();
    let e = lit::<T>(0.5) - kf.nu;
    let wv: Vec<T> = quad.nodes.iter().map(|&t| w.eval(t)).collect();
    let abs_half: Vec<T> = wv.iter().map(|x| x.abs().sqrt()).collect();
    let sgn_half: Vec<T> = wv.iter().map(|&x| signed_sqrt(x)).collect();
    let pw: Vec<T> = quad.nodes.iter().map(|&t| (T::one() + t).powf(e)).collect();
    let phi: Vec<T> = abs_half.iter().zip(&pw).map(|(a, p)| *a * *p).collect();
    let psi: Vec<T> = sgn_half.iter().zip(&pw).map(|(a, p)| *a * *p).collect();
    let points: Vec<_> = quad.nodes.iter().map(|&t| kf.green.point(t)).collect();
    let mut k = Dense::zeros(n);
    let mut l = Dense::zeros(n);
    let mut m = Dense::zeros(n);
    let mut m0 = Dense::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let g = if i <= j { kf.green.pair(&points[i], &points[j]) } else { kf.green.pair(&points[j], &points[i]) };
            let kij = abs_half[i] * g * sgn_half[j];
            let lij = kf.prefactor * phi[i] * psi[j];
            k.set(i, j, kij);
            l.set(i, j, lij);
            m.set(i, j, kij - lij);
            m0.set(i, j, kf.m0(quad.nodes[i], quad.nodes[j]));
        }
    }
    Ok(BsKernelSet {
        nodes: quad.nodes.clone(),
        weights: quad.weights.clone(),
        kappa,
        nu: kf.nu,
        d,
        prefactor: kf.prefactor,
        k,
        l,
        m,
        m0,
        phi,
        psi,
    })
}

impl<T: Real> BsKernelSet<T> {
    /// `D^{1/2} A D^{1/2}` with `D` the quadrature weights; for the
    /// discretised integral operator this has the same spectrum.
    pub fn symmetrised(&self, a: &Dense<T>) -> Dense<T> {
        let n = a.n;
        let mut out = Dense::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, self.weights[i].sqrt() * a.get(i, j) * self.weights[j].sqrt());
            }
        }
        out
    }

    /// Operator norm of the discretised `M(κ)`.
    pub fn m_norm(&self) -> T {
        let s = self.symmetrised(&self.m);
        operator_norm(s.n, |x| s.matvec_transposed(&s.matvec(x)), 300)
    }

    /// `1 + tr(λ (I + λM)^{-1} L)`, whose zero in `κ` is the eigenvalue condition.
    pub fn secular(&self, lambda: T) -> Result<T> {
        let n = self.nodes.len();
        let mut a = Dense::identity(n);
        for i in 0..n {
            for j in 0..n {
                let v = a.get(i, j) + lambda * self.m.get(i, j) * self.weights[j];
                a.set(i, j, v);
            }
        }
        let x = Lu::new(a)?.solve(&self.phi);
        let inner = (0..n).fold(T::zero(), |s, i| s + self.weights[i] * self.psi[i] * x[i]);
        Ok(T::one() + lambda * self.prefactor * inner)
    }
}

/// `∫∫ f(t,t') dt dt'` over the square covered by `panels`. Diagonal panel
/// pairs are split along `t = t'` and integrated on each triangle with a
/// collapsed tensor rule, so a kink on the diagonal costs no accuracy.
pub fn double_integral<T: Real, F: Fn(T, T) -> T>(f: F, panels: &[(T, T)], order: usize) -> T {
    let (x, wgt) = gauss_legendre::<T>(order);
    let half = lit::<T>(0.5);
    let unit: Vec<(T, T)> = x.iter().zip(&wgt).map(|(a, b)| ((*a + T::one()) * half, *b * half)).collect();
    let mut total = T::zero();
    for (p, &(a, b)) in panels.iter().enumerate() {
        let hp = b - a;
        for (q, &(c, d)) in panels.iter().enumerate() {
            let hq = d - c;
            for &(u, wu) in &unit {
                for &(v, wv) in &unit {
                    if p != q {
                        total = total + wu * wv * hp * hq * f(a + hp * u, c + hq * v);
                    } else {
                        let outer = a + hp * u;
                        let inner = a + hp * u * v;
                        total = total + wu * wv * hp * hp * u * (f(outer, inner) + f(inner, outer));
                    }
                }
            }
        }
    }
    total
}

/// Hilbert–Schmidt norm of the kernel `f`.
pub fn hs_norm<T: Real, F: Fn(T, T) -> T>(f: F, panels: &[(T, T)], order: usize) -> T {
    double_integral(|t, s| f(t, s).powi(2), panels, order).max(T::zero()).sqrt()
}

/// Checks that halving the panels changes `‖K(κ)‖_HS` by less than `1e-6`
/// relative; returns the norm.
pub fn check_resolution<T: Real>(w: &dyn RadialFn<T>, kappa: T, d: T, quad: &BsQuadrature<T>) -> Result<T> {
    let kf = KernelFunctions::new(w, kappa, d)?;
    let coarse = hs_norm(|t, s| kf.k(t, s), &quad.panels, quad.order);
    let fine = hs_norm(|t, s| kf.k(t, s), &quad.refined().panels, quad.order);
    let rel = to_f64((coarse - fine).abs() / fine.max(T::min_positive_value()));
    if rel > 1e-6 {
        return Err(Error::QuadratureUnderresolved(rel));
    }
    Ok(fine)
}

/// Discretisation controls for the Birman–Schwinger solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BsOptions<T> {
    pub panel_len: T,
    pub order: usize,
    /// Verify the Hilbert–Schmidt norm of `K` is stable under panel halving.
    pub check_resolution: bool,
}

impl<T: Real> Default for BsOptions<T> {
    fn default() -> Self {
        Self { panel_len: lit(0.25), order: 8, check_resolution: true }
    }
}

/// Root of the secular equation `1 + λ tr((I + λM)^{-1} L) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakSolution<T> {
    pub lambda: T,
    pub kappa: T,
    /// `-κ²`
    pub energy: T,
    /// `-(C(ν) λ |∫ W (1+t)^{d-1}|)^{1/ν}`
    pub first_order_energy: T,
    /// `∫ W (1+t)^{d-1}`
    pub integral: T,
    /// `λ ‖M(κ)‖` at the root.
    pub norm_condition: T,
    /// The secular function was nondecreasing on the sampled bracket.
    pub monotone: bool,
    pub nodes: usize,
    pub hs_norm: Option<T>,
}

/// Weak-coupling eigenvalue of `B₀ + λW` on the weighted half-line via the
/// secular equation. Requires `∫ W (1+t)^{d-1} < 0`.
pub fn solve_weak_eigenvalue<T: Real>(w: &dyn RadialFn<T>, d: T, lambda: T, opts: &BsOptions<T>) -> Result<WeakSolution<T>> {
    let c = weak_coupling_constants(d)?;
    let integral = moment(w, Weight::OnePlus(d - T::one()), false)?.value;
    let scale = moment(w, Weight::OnePlus(d - T::one()), true)?.value;
    if !(integral < -scale * lit(1e-12)) || !(lambda > T::zero()) {
        return Err(Error::NoRoot(format!("weighted integral of W is {:.3e}, not negative", to_f64(integral))));
    }
    let kappa1 = (c.c_nu * lambda * integral.abs()).powf(T::one() / (lit::<T>(2.0) * c.nu));
    solve_secular(w, d, lambda, kappa1, opts)
}

/// Solves the secular equation starting from the guess `kappa_guess` for
/// the lower end of the bracket.
pub fn solve_secular<T: Real>(
    w: &dyn RadialFn<T>,
    d: T,
    lambda: T,
    kappa_guess: T,
    opts: &BsOptions<T>,
) -> Result<WeakSolution<T>> {
    let c = weak_coupling_constants(d)?;
    let integral = moment(w, Weight::OnePlus(d - T::one()), false)?.value;
    let quad = BsQuadrature::new(w, d, opts.panel_len, opts.order)?;
    let f = |kappa: T| build_bs_kernels(w, kappa, d, &quad)?.secular(lambda);
    let mut hi = (lambda * w.bound()).sqrt() * lit(1.01);
    let mut tries = 0;
    while f(hi)? <= T::zero() {
        hi = hi * lit(2.0);
        tries += 1;
        if tries > 20 {
            return Err(Error::NoRoot("secular function negative at every upper bracket".into()));
        }
    }
    let mut lo = kappa_guess.min(hi * lit(0.5));
    tries = 0;
    while f(lo)? >= T::zero() {
        lo = lo * lit(0.1);
        tries += 1;
        if tries > 30 || lo < T::min_positive_value().sqrt() {
            return Err(Error::NoRoot("secular function positive down to tiny kappa".into()));
        }
    }
    let (bracket_lo, bracket_hi) = (lo, hi);
    let tol = lit::<T>(1e-12).max(T::epsilon() * lit(64.0));
    for _ in 0..200 {
        if hi / lo - T::one() <= tol {
            break;
        }
        let mid = (lo * hi).sqrt();
        if f(mid)? < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let kappa = (lo * hi).sqrt();
    let samples = 16;
    let ratio = (bracket_hi / bracket_lo).ln();
    let mut prev = T::neg_infinity();
    let mut monotone = true;
    for i in 0..=samples {
        let k = bracket_lo * (ratio * from_usize::<T>(i) / from_usize::<T>(samples)).exp();
        let v = f(k)?;
        if v < prev {
            monotone = false;
        }
        prev = v;
    }
    let kernels = build_bs_kernels(w, kappa, d, &quad)?;
    let norm_condition = lambda * kernels.m_norm();
    if !(norm_condition < T::one()) {
        return Err(Error::NormConditionViolated(to_f64(norm_condition)));
    }
    let hs_norm = if opts.check_resolution { Some(check_resolution(w, kappa, d, &quad)?) } else { None };
    let first = (c.c_nu * lambda * integral.abs()).powf(T::one() / c.nu);
    Ok(WeakSolution {
        lambda,
        kappa,
        energy: -kappa * kappa,
        first_order_energy: -first,
        integral,
        norm_condition,
        monotone,
        nodes: quad.len(),
        hs_norm,
    })
}

/// Second-order prediction when `∫ W (1+t)^{d-1} = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalEstimate<T> {
    /// `∫∫ W(t) W(t') s^{1-ν} s'^{1-ν} (s/s')^{ν sign(t-t')}`, `s = 1+t`.
    pub w0: T,
    /// `-(C(ν) C_M λ² W₀)^{1/ν}`
    pub energy: T,
    pub kappa: T,
}

/// Predicts the eigenvalue for a zero-mean `W`. Inconclusive unless `W₀ < 0`.
pub fn critical_case_eigenvalue<T: Real>(w: &dyn RadialFn<T>, d: T, lambda: T, opts: &BsOptions<T>) -> Result<CriticalEstimate<T>> {
    let c = weak_coupling_constants(d)?;
    let quad = BsQuadrature::new(w, d, opts.panel_len, opts.order)?;
    let nu = c.nu;
    let e = T::one() - nu;
    let w0 = double_integral(
        |t, tp| {
            let (s, sp) = (T::one() + t, T::one() + tp);
            let r = if t > tp { (s / sp).powf(nu) } else { (sp / s).powf(nu) };
            w.eval(t) * w.eval(tp) * (s * sp).powf(e) * r
        },
        &quad.panels,
        quad.order,
    );
    if !(w0 < T::zero()) {
        return Err(Error::Inconclusive(format!("W0 = {:.3e} is not negative", to_f64(w0))));
    }
    let kappa = (c.c_nu * c.c_m * lambda * lambda * w0).powf(T::one() / (lit::<T>(2.0) * nu));
    Ok(CriticalEstimate { w0, energy: -kappa * kappa, kappa })
}

/// `(κ, ‖M(κ) - M(0)‖_HS, ‖M(0)‖_HS)` for each `κ`.
pub fn hs_convergence<T: Real>(w: &dyn RadialFn<T>, d: T, kappas: &[T], opts: &BsOptions<T>) -> Result<Vec<(T, T, T)>> {
    let quad = BsQuadrature::new(w, d, opts.panel_len, opts.order)?;
    kappas
        .iter()
        .map(|&kappa| {
            let kf = KernelFunctions::new(w, kappa, d)?;
            let diff = hs_norm(|t, s| kf.m(t, s) - kf.m0(t, s), &quad.panels, quad.order);
            let base = hs_norm(|t, s| kf.m0(t, s), &quad.panels, quad.order);
            Ok((kappa, diff, base))
        })
        .collect()
}
