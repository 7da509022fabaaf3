//! Coupling sweeps: the weak-coupling power law with its sandwich bounds,
//! the exponential law at `d = 2`, emptiness for `d > 2` and the Weyl limit.

use std::sync::Arc;

use serde::Serialize;

use crate::bs::{channel_threshold, cor1_bound};
use crate::decomposition::{assemble_negative_spectrum, build_channels, choose_k_max};
use crate::direct::{build_graph_matrix, SIZE_CAP};
use crate::error::{Error, Result};
use crate::halfline::{discretize_form, ground_state, solve_channel, Boundary, Channel, ChannelWeight, Grid, GridSpec, Numerics};
use crate::num::{lit, to_f64, Real};
use crate::potential::{moment, Decay, ModifiedPotential, RadialFn, RadialPotential, Weight};
use crate::quadrature::integrate;
use crate::tree::{linear_fit, RegularTree};

/// Relative truncation-bracket width below which an eigenvalue is used in fits.
pub const RELIABLE_BRACKET: f64 = 1e-3;
/// Neumann-only values above `-EMPTY_LEVEL` do not count against emptiness.
pub const EMPTY_LEVEL: f64 = 1e-10;

/// Least-squares line with the standard error of its slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r2: f64,
    pub points: usize,
}

pub fn fit_line(points: &[(f64, f64)]) -> Option<Fit> {
    if points.len() < 2 {
        return None;
    }
    let (slope, intercept, r2) = linear_fit(points);
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let rss: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let slope_stderr = if points.len() > 2 && sxx > 0.0 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Some(Fit { slope, intercept, slope_stderr, r2, points: points.len() })
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Lowest eigenvalue of the root channel between those of the comparison
/// operators with weights `a^± (1+t)^{d-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sandwich<T> {
    pub lambda: T,
    pub e_minus: Option<T>,
    pub e1: Option<T>,
    pub e_plus: Option<T>,
    /// `|E⁺| / |λ ∫V g₀|^{2/(2-d)}`, the lower constant on `|E₁|`.
    pub c1: Option<T>,
    /// `|E⁻| / |λ ∫V g₀|^{2/(2-d)}`, the upper constant on `|E₁|`.
    pub c2: Option<T>,
    /// `∫ V g₀`
    pub integral: T,
    pub a_minus: T,
    pub a_plus: T,
    /// Truncation length of the common grid.
    pub length: f64,
    /// Relative Dirichlet/Neumann gap of `E₁` is below [`RELIABLE_BRACKET`].
    pub reliable: bool,
}

fn comparison_channel<T: Real>(
    tree: &RegularTree<T>,
    v: &RadialPotential<T>,
    d: T,
    lambda: T,
    env: &crate::tree::Envelope<T>,
    upper: bool,
) -> Channel<T> {
    let vm = ModifiedPotential::new(v, tree, 0, env, upper);
    let scale = if upper { env.upper } else { env.lower };
    Channel::weighted(
        T::zero(),
        ChannelWeight::OnePlus { scale, alpha: d - T::one() },
        Boundary::Neumann,
        Arc::new(vm),
        lambda,
    )
}

/// Computes `E⁻ ≤ E₁ ≤ E⁺` on one grid (where the inequality is exact for
/// the discrete forms) and fails on any violation.
pub fn sandwich_check<T: Real>(
    tree: &RegularTree<T>,
    v: &RadialPotential<T>,
    d: T,
    lambda: T,
    num: &Numerics<T>,
) -> Result<Sandwich<T>> {
    let integral = moment(v, Weight::Branching(tree), false)?.value;
    let pot: Arc<dyn RadialFn<T>> = Arc::new(v.clone());
    let mid = Channel::tree(tree, 0, pot, lambda);
    let mid_sol = solve_channel(&mid, num)?;
    let mut length = lit::<T>(mid_sol.grid.length);
    let reliable = mid_sol.truncation_converged
        && mid_sol
            .bracket
            .first()
            .is_some_and(|&(dv, nv)| to_f64((dv - nv).abs()) < RELIABLE_BRACKET * to_f64(dv.abs()));
    let env = tree.envelope_constants(0, d, length)?;
    let upper_sol = solve_channel(&comparison_channel(tree, v, d, lambda, &env, true), num)?;
    let env = if lit::<T>(upper_sol.grid.length) > length {
        length = lit(upper_sol.grid.length);
        tree.envelope_constants(0, d, length)?
    } else {
        env
    };
    let lower = comparison_channel(tree, v, d, lambda, &env, false);
    let upper = comparison_channel(tree, v, d, lambda, &env, true);
    let spec = GridSpec { h: num.h, length, grading: num.grading, h_cap: None, right: Boundary::Dirichlet };
    let grid = Grid::build(&mid, &spec)?;
    let e1 = ground_state(&mid, &grid, num.rel_tol)?;
    let e_minus = ground_state(&lower, &Grid::from_nodes(&lower, grid.nodes.clone(), Boundary::Dirichlet)?, num.rel_tol)?;
    let e_plus = ground_state(&upper, &Grid::from_nodes(&upper, grid.nodes.clone(), Boundary::Dirichlet)?, num.rel_tol)?;
    let slack = num.rel_tol * lit(10.0);
    let below = |a: Option<T>, b: Option<T>| match (a, b) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(a), Some(b)) => a <= b + slack * b.abs(),
    };
    if !below(e_minus, e1) || !below(e1, e_plus) {
        let f = |x: Option<T>| x.map(to_f64).unwrap_or(0.0);
        return Err(Error::SandwichViolation { lambda: to_f64(lambda), lower: f(e_minus), value: f(e1), upper: f(e_plus) });
    }
    let scale = (lambda * integral.abs()).powf(lit::<T>(2.0) / (lit::<T>(2.0) - d));
    let c = |e: Option<T>| if d < lit(2.0) && scale > T::zero() { e.map(|e| e.abs() / scale) } else { None };
    Ok(Sandwich {
        lambda,
        e_minus,
        e1,
        e_plus,
        c1: c(e_plus),
        c2: c(e_minus),
        integral,
        a_minus: env.lower,
        a_plus: env.upper,
        length: to_f64(length),
        reliable,
    })
}

/// One coupling value of a weak-coupling sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord<T> {
    pub lambda: T,
    pub e1: Option<T>,
    pub e_minus: Option<T>,
    pub e_plus: Option<T>,
    pub c1: Option<T>,
    pub c2: Option<T>,
    /// Negative eigenvalues of the tree operator with multiplicity.
    pub n_minus: u128,
    /// Count bound for the root channel.
    pub bound_cor1: Option<T>,
    /// Channels `k >= 1` certified empty by the trace bound.
    pub certified_channels: usize,
    /// Highest channel solved.
    pub k_max: usize,
    pub reliable: bool,
}

/// Solves one sweep point: sandwich, total count and certificates.
pub fn sweep_record<T: Real>(
    tree: &RegularTree<T>,
    v: &RadialPotential<T>,
    d: T,
    lambda: T,
    num: &Numerics<T>,
) -> Result<SweepRecord<T>> {
    let sw = sandwich_check(tree, v, d, lambda, num)?;
    let k_max = choose_k_max(tree, v, lambda, d, tree.generations())?;
    let spectrum = assemble_negative_spectrum(&build_channels(tree, v, lambda, k_max), num)?;
    let (bound_cor1, certified_channels) = if d < lit(2.0) {
        let b = cor1_bound(v, tree, d, lambda).ok().map(|b| b.bound);
        let mut certified = 0;
        for k in 1..=tree.generations() {
            if tree.multiplicity(k) > 0 && lambda < channel_threshold(tree, v, d, k)? {
                certified += 1;
            }
        }
        (b, certified)
    } else {
        (None, 0)
    };
    Ok(SweepRecord {
        lambda,
        e1: sw.e1,
        e_minus: sw.e_minus,
        e_plus: sw.e_plus,
        c1: sw.c1,
        c2: sw.c2,
        n_minus: spectrum.count,
        bound_cor1,
        certified_channels,
        k_max,
        reliable: sw.reliable,
    })
}

/// Outcome of a weak-coupling sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport<T> {
    pub d: f64,
    /// `∫ V g₀`
    pub integral: f64,
    /// Sorted by coupling.
    pub records: Vec<SweepRecord<T>>,
    /// `2 / (2 - d)`
    pub expected_slope: f64,
    /// Fit of `ln|E₁|` against `ln λ` over the smallest reliable decade.
    pub fit: Option<Fit>,
    /// Relative spread of `C₁` and `C₂` over the fitted records.
    pub c_spread: Option<(f64, f64)>,
    pub pass: bool,
    pub verdict: String,
}

/// Fits the records of a sweep. With `∫ V g₀ >= 0` the verdict is that the
/// negative spectrum is empty at every coupling.
pub fn summarize_weak<T: Real>(mut records: Vec<SweepRecord<T>>, d: f64, integral: f64) -> SweepReport<T> {
    records.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).expect("finite couplings"));
    let expected_slope = 2.0 / (2.0 - d);
    if integral >= 0.0 {
        let empty = records.iter().all(|r| r.e1.is_none());
        return SweepReport {
            d,
            integral,
            records,
            expected_slope,
            fit: None,
            c_spread: None,
            pass: empty,
            verdict: if empty { "empty spectrum at weak coupling" } else { "negative eigenvalue despite nonnegative integral" }.to_string(),
        };
    }
    let usable: Vec<&SweepRecord<T>> = records.iter().filter(|r| r.reliable && r.e1.is_some()).collect();
    let smallest = usable.first().map(|r| to_f64(r.lambda));
    let decade: Vec<&&SweepRecord<T>> = usable
        .iter()
        .filter(|r| smallest.is_some_and(|s| to_f64(r.lambda) <= 10.0 * s * (1.0 + 1e-12)))
        .collect();
    let points: Vec<(f64, f64)> = decade
        .iter()
        .map(|r| (to_f64(r.lambda).ln(), to_f64(r.e1.expect("filtered")).abs().ln()))
        .collect();
    let fit = fit_line(&points);
    let spread = |f: fn(&SweepRecord<T>) -> Option<T>| {
        let vals: Vec<f64> = decade.iter().filter_map(|r| f(r).map(to_f64)).collect();
        if vals.is_empty() {
            return f64::NAN;
        }
        let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
        let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
        (hi - lo) / hi
    };
    let c_spread = (!decade.is_empty()).then(|| (spread(|r| r.c1), spread(|r| r.c2)));
    let all_negative = records.iter().all(|r| r.e1.is_some());
    let (pass, verdict) = match fit {
        None => (false, "fewer than two reliable records".to_string()),
        Some(f) => {
            let ok = (f.slope - expected_slope).abs() <= 0.05 * expected_slope;
            let mut msg = format!("slope {:.4} ± {:.4}, expected {:.4}", f.slope, f.slope_stderr, expected_slope);
            if !all_negative {
                msg.push_str("; some coupling without a negative eigenvalue");
            }
            (ok && all_negative, msg)
        }
    };
    SweepReport { d, integral, records, expected_slope, fit, c_spread, pass, verdict }
}

/// Runs [`sweep_record`] for every coupling and fits the power law.
pub fn weak_sweep_fit<T: Real>(
    tree: &RegularTree<T>,
    v: &RadialPotential<T>,
    d: T,
    lambdas: &[T],
    num: &Numerics<T>,
) -> Result<SweepReport<T>> {
    check_weak_hypotheses(v, d)?;
    let integral = moment(v, Weight::Branching(tree), false)?.value;
    let records = lambdas.iter().map(|&l| sweep_record(tree, v, d, l, num)).collect::<Result<Vec<_>>>()?;
    Ok(summarize_weak(records, to_f64(d), to_f64(integral)))
}

/// `1 <= d < 2` and `∫ (1+t)^{3-d} |V| < ∞`.
pub fn check_weak_hypotheses<T: Real>(v: &RadialPotential<T>, d: T) -> Result<()> {
    if !(d >= T::one() && d < lit(2.0)) {
        return Err(Error::InvalidArgument(format!("weak-coupling sweep needs 1 <= d < 2, got {}", to_f64(d))));
    }
    moment(v, Weight::OnePlus(lit::<T>(3.0) - d), true).map(|_| ())
}

/// Lowest eigenvalue of the root channel at one coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroundRecord<T> {
    pub lambda: T,
    /// Lowest certified eigenvalue (Dirichlet truncation).
    pub e1: Option<T>,
    /// Lowest Neumann-only value when the truncation did not settle.
    pub marginal: Option<T>,
    pub reliable: bool,
    pub length: f64,
}

impl<T: Real> GroundRecord<T> {
    /// No eigenvalue and nothing below `-EMPTY_LEVEL` with the Neumann truncation.
    pub fn empty(&self) -> bool {
        self.e1.is_none() && self.marginal.is_none_or(|m| to_f64(m) > -EMPTY_LEVEL)
    }
}

/// The root channel carries the lowest eigenvalue of the tree: every other
/// channel's form is its restriction to functions vanishing near the root.
pub fn ground_record<T: Real>(tree: &RegularTree<T>, v: &RadialPotential<T>, lambda: T, num: &Numerics<T>) -> Result<GroundRecord<T>> {
    let pot: Arc<dyn RadialFn<T>> = Arc::new(v.clone());
    let sol = solve_channel(&Channel::tree(tree, 0, pot, lambda), num)?;
    let reliable = sol.truncation_converged
        && sol
            .bracket
            .first()
            .is_some_and(|&(dv, nv)| to_f64((dv - nv).abs()) < RELIABLE_BRACKET * to_f64(dv.abs()));
    Ok(GroundRecord {
        lambda,
        e1: sol.eigenvalues.first().copied(),
        marginal: sol.marginal.first().copied(),
        reliable,
        length: sol.grid.length,
    })
}

/// Exponential law at `d = 2`: fit of `ln|E₁|` against `1/λ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpReport<T> {
    pub records: Vec<GroundRecord<T>>,
    pub fit: Option<Fit>,
    /// Coupling range of the reliable records.
    pub reliable_range: Option<(f64, f64)>,
    pub pass: bool,
    pub verdict: String,
}

pub fn summarize_d2<T: Real>(mut records: Vec<GroundRecord<T>>, integral: f64) -> ExpReport<T> {
    records.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).expect("finite couplings"));
    if integral >= 0.0 {
        let empty = records.iter().all(|r| r.e1.is_none());
        let verdict = if empty { "no negative eigenvalues" } else { "negative eigenvalue despite nonnegative integral" };
        return ExpReport { records, fit: None, reliable_range: None, pass: empty, verdict: verdict.into() };
    }
    let usable: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.reliable)
        .filter_map(|r| r.e1.map(|e| (to_f64(r.lambda), to_f64(e))))
        .collect();
    let reliable_range = (!usable.is_empty()).then(|| (usable[0].0, usable[usable.len() - 1].0));
    let points: Vec<(f64, f64)> = usable.iter().map(|&(l, e)| (1.0 / l, e.abs().ln())).collect();
    let fit = fit_line(&points);
    let (pass, verdict) = match fit {
        None => (false, "fewer than two reliable records".to_string()),
        Some(f) => (f.r2 >= 0.99 && f.slope < 0.0, format!("slope {:.4}, R² {:.5}", f.slope, f.r2)),
    };
    ExpReport { records, fit, reliable_range, pass, verdict }
}

pub fn d2_fit<T: Real>(tree: &RegularTree<T>, v: &RadialPotential<T>, lambdas: &[T], num: &Numerics<T>) -> Result<ExpReport<T>> {
    if let Some(d) = tree.declared_dimension() {
        if (to_f64(d) - 2.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("tree has dimension {}, not 2", to_f64(d))));
        }
    }
    let integral = moment(v, Weight::Branching(tree), false)?.value;
    let records = lambdas.iter().map(|&l| ground_record(tree, v, l, num)).collect::<Result<Vec<_>>>()?;
    Ok(summarize_d2(records, to_f64(integral)))
}

/// Emptiness of the negative spectrum at small coupling for `d > 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupercriticalReport<T> {
    pub d: f64,
    pub records: Vec<GroundRecord<T>>,
    /// Largest grid coupling with every smaller grid coupling empty.
    pub lambda_star: Option<T>,
    /// Bisection bracket `(empty, nonempty)` of the onset above `λ*`.
    pub onset: Option<(T, T)>,
    pub pass: bool,
    pub verdict: String,
}

/// `∫ |V|^{d/2} g₀ < ∞` for the decay classes available.
pub fn check_supercritical_hypotheses<T: Real>(tree: &RegularTree<T>, v: &RadialPotential<T>, d: T) -> Result<()> {
    if !(d > lit(2.0)) {
        return Err(Error::InvalidArgument(format!("supercritical check needs d > 2, got {}", to_f64(d))));
    }
    if let Decay::Power(p) = v.decay() {
        let growth = tree.declared_dimension().unwrap_or(d) - T::one();
        if !(p * d / lit(2.0) + growth < -T::one()) {
            return Err(Error::DivergentMoment("∫ |V|^{d/2} g₀ diverges".into()));
        }
    }
    Ok(())
}

pub fn summarize_supercritical<T: Real>(mut records: Vec<GroundRecord<T>>, d: f64, onset: Option<(T, T)>) -> SupercriticalReport<T> {
    records.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).expect("finite couplings"));
    let lambda_star = records.iter().take_while(|r| r.empty()).last().map(|r| r.lambda);
    let nonempty_above = lambda_star.is_some_and(|ls| records.iter().any(|r| r.lambda > ls && !r.empty()));
    let (pass, verdict) = match lambda_star {
        None => (false, "negative eigenvalue at the smallest coupling".to_string()),
        Some(ls) if nonempty_above => (true, format!("empty up to {:.4e}, negatives above", to_f64(ls))),
        Some(ls) => (true, format!("empty up to {:.4e} across the whole grid", to_f64(ls))),
    };
    SupercriticalReport { d, records, lambda_star, onset, pass, verdict }
}

/// Scans the grid, then bisects between `λ*` and the next grid coupling.
pub fn supercritical_check<T: Real>(
    tree: &RegularTree<T>,
    v: &RadialPotential<T>,
    d: T,
    lambdas: &[T],
    num: &Numerics<T>,
) -> Result<SupercriticalReport<T>> {
    check_supercritical_hypotheses(tree, v, d)?;
    let records = lambdas.iter().map(|&l| ground_record(tree, v, l, num)).collect::<Result<Vec<_>>>()?;
    let report = summarize_supercritical(records, to_f64(d), None);
    let Some(ls) = report.lambda_star else {
        return Ok(report);
    };
    let Some(next) = report.records.iter().find(|r| r.lambda > ls && !r.empty()).map(|r| r.lambda) else {
        return Ok(report);
    };
    let onset = refine_onset(tree, v, ls, next, num)?;
    Ok(SupercriticalReport { onset: Some(onset), ..report })
}

/// Geometric bisection of the emptiness onset between an empty coupling
/// `lo` and a nonempty coupling `hi`.
pub fn refine_onset<T: Real>(tree: &RegularTree<T>, v: &RadialPotential<T>, lo: T, hi: T, num: &Numerics<T>) -> Result<(T, T)> {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..24 {
        let mid = (lo * hi).sqrt();
        if ground_record(tree, v, mid, num)?.empty() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// Strong-coupling count against the Weyl term `λ^{1/2} π^{-1} ∫ |V|^{1/2} g₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylRecord<T> {
    pub lambda: T,
    pub count: u128,
    pub prediction: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylReport<T> {
    pub records: Vec<WeylRecord<T>>,
    /// `∫ |V|^{1/2} g₀`
    pub weyl_integral: f64,
    /// Semiclassical constant for `γ = 0`, `Γ(1) / (2√π Γ(3/2)) = 1/π`.
    pub constant: f64,
    pub direct: bool,
    /// Ratio at the largest coupling within `[0.9, 1.1]`.
    pub pass: bool,
}

pub fn weyl_integral<T: Real>(tree: &RegularTree<T>, v: &RadialPotential<T>) -> T {
    let end = v.extent();
    let mut knots = v.knots();
    knots.extend(tree.breakpoints_in(T::zero(), end));
    knots.push(T::zero());
    knots.push(end);
    knots.retain(|&k| k >= T::zero() && k <= end);
    knots.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
    knots.dedup();
    let f = |t: T| v.eval(t).abs().sqrt() * tree.gk_eval(0, t);
    knots.windows(2).fold(T::zero(), |s, w| s + integrate(&f, w[0], w[1], lit(1e-13), lit(1e-11)).0)
}

/// Counts negative eigenvalues on the tree truncated at `extent + 2` with
/// a uniform grid of step `h`, either channel by channel or on the whole tree.
pub fn weyl_check<T: Real>(tree: &RegularTree<T>, v: &RadialPotential<T>, lambdas: &[T], h: T, direct: bool) -> Result<WeylReport<T>> {
    if !matches!(v.decay(), Decay::Compact(_)) {
        return Err(Error::InvalidArgument("Weyl check needs a compactly supported potential".into()));
    }
    let length = v.extent() + lit(2.0);
    let spec = GridSpec { h, length, grading: T::zero(), h_cap: None, right: Boundary::Dirichlet };
    let wi = to_f64(weyl_integral(tree, v));
    let constant = std::f64::consts::FRAC_1_PI;
    let mut records = Vec::new();
    for &lambda in lambdas {
        let count = if direct {
            let pot: Arc<dyn RadialFn<T>> = Arc::new(v.clone());
            build_graph_matrix(tree, pot, lambda, &spec, SIZE_CAP)?.count_below(T::zero()) as u128
        } else {
            let k_last = (0..=tree.generations()).filter(|&k| tree.start(k) < v.extent()).max().unwrap_or(0);
            let mut total = 0u128;
            for ch in build_channels(tree, v, lambda, k_last) {
                let grid = Grid::build(&ch, &spec)?;
                total += ch.multiplicity * discretize_form(&ch, &grid)?.count_below(T::zero()) as u128;
            }
            total
        };
        let prediction = to_f64(lambda).sqrt() * constant * wi;
        records.push(WeylRecord { lambda, count, prediction, ratio: count as f64 / prediction });
    }
    let pass = records.last().is_some_and(|r| (0.9..=1.1).contains(&r.ratio));
    Ok(WeylReport { records, weyl_integral: wi, constant, direct, pass })
}
