//! Gauss–Legendre rules and adaptive Gauss–Kronrod integration.

use crate::num::{from_usize, lit, Real};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1);
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = from_usize::<T>(n);
    let half = lit::<T>(0.5);
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (T::PI() * (from_usize::<T>(i) + lit(0.75)) / (nf + half)).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x = x - dx;
            if dx.abs() <= T::epsilon() * lit(4.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d.is_finite() { d } else { dp };
        let w = lit::<T>(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = from_usize::<T>(k);
        let p2 = ((lit::<T>(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (T::one(), T::zero());
    }
    let nf = from_usize::<T>(n);
    let d = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

/// Composite Gauss–Legendre rule: `panels` equal panels on each consecutive
/// pair of `knots`, `order` points per panel.
pub fn composite_rule<T: Real>(knots: &[T], panel_len: T, order: usize) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre::<T>(order);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for seg in knots.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let panels = ((b - a) / panel_len).ceil().to_usize().unwrap_or(1).max(1);
        let h = (b - a) / from_usize::<T>(panels);
        for p in 0..panels {
            let lo = a + h * from_usize::<T>(p);
            let mid = lo + h * lit(0.5);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + h * lit::<T>(0.5) * *xi);
                weights.push(h * lit::<T>(0.5) * *wi);
            }
        }
    }
    (nodes, weights)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One 15-point Kronrod panel: `(kronrod estimate, |kronrod - gauss|)`.
fn gk15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let c = (a + b) * lit(0.5);
    let h = (b - a) * lit(0.5);
    let fc = f(c);
    let mut kron = fc * lit(GK_WEIGHTS[7]);
    let mut gauss = fc * lit(G7_WEIGHTS[3]);
    for j in 0..7 {
        let dx = h * lit(GK_NODES[j]);
        let s = f(c - dx) + f(c + dx);
        kron = kron + s * lit(GK_WEIGHTS[j]);
        if j % 2 == 1 {
            gauss = gauss + s * lit(G7_WEIGHTS[j / 2]);
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive integral of a smooth integrand on `[a, b]`.
///
/// Returns `(value, estimated absolute error)`; panels are bisected until the
/// summed Kronrod–Gauss difference falls below `abs_tol + rel_tol |value|`.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, abs_tol: T, rel_tol: T) -> (T, T) {
    if !(b > a) {
        return (T::zero(), T::zero());
    }
    let mut panels = vec![(a, b, gk15(f, a, b))];
    for _ in 0..2000 {
        let total: T = panels.iter().fold(T::zero(), |s, p| s + p.2 .0);
        let err: T = panels.iter().fold(T::zero(), |s, p| s + p.2 .1);
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold((0, -T::one()), |best, (i, p)| if p.2 .1 > best.1 { (i, p.2 .1) } else { best });
        let (lo, hi, _) = panels.swap_remove(idx);
        let mid = (lo + hi) * lit(0.5);
        if !(mid > lo && hi > mid) {
            break;
        }
        panels.push((lo, mid, gk15(f, lo, mid)));
        panels.push((mid, hi, gk15(f, mid, hi)));
    }
    let total = panels.iter().fold(T::zero(), |s, p| s + p.2 .0);
    let err = panels.iter().fold(T::zero(), |s, p| s + p.2 .1);
    (total, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 8, 16] {
            let (x, w) = gauss_legendre::<f64>(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 1 { 2.0 / (deg as f64) } else { 0.0 };
            // integral of x^(deg-1) over [-1,1]
            let approx: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32 - 1)).sum();
            assert!((approx - exact).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn adaptive_handles_peaked_integrands() {
        let (v, e) = integrate(&|t: f64| (-t).exp(), 0.0, 40.0, 1e-14, 1e-13);
        assert!((v - (1.0 - (-40f64).exp())).abs() < 1e-12 && e < 1e-11);
        let (v, _) = integrate(&|t: f64| 1.0 / (1e-4 + t * t), -1.0, 1.0, 1e-12, 1e-12);
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!((v - exact).abs() / exact < 1e-10);
    }

    #[test]
    fn composite_rule_covers_knots() {
        let (x, w) = composite_rule::<f64>(&[0.0, 1.0, 3.5], 0.5, 6);
        assert_eq!(x.len(), (2 + 5) * 6);
        assert!((w.iter().sum::<f64>() - 3.5).abs() < 1e-13);
    }
}
