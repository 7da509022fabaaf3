//! Gamma and modified Bessel functions of real order, the weak-coupling
//! constants, and the two half-line Green functions.
//!
//! Hankel functions of imaginary argument never appear directly: every
//! kernel is expressed through `I_ν` and `K_ν` of real argument.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::{from_usize, lit, to_f64, Real};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Taylor coefficients of `1/Γ(z)` about zero, `c_1 .. c_26`.
const RGAMMA_SERIES: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_86,
    -0.655_878_071_520_253_88,
    -0.042_002_635_034_095_236,
    0.166_538_611_382_291_49,
    -0.042_197_734_555_544_337,
    -0.009_621_971_527_876_973_6,
    0.007_218_943_246_663_099_5,
    -0.001_165_167_591_859_065_1,
    -0.000_215_241_674_114_950_97,
    0.000_128_050_282_388_116_19,
    -2.013_485_478_078_823_9e-5,
    -1.250_493_482_142_670_7e-6,
    1.133_027_231_981_695_9e-6,
    -2.056_338_416_977_607_1e-7,
    6.116_095_104_481_415_8e-9,
    5.002_007_644_469_222_9e-9,
    -1.181_274_570_487_020_1e-9,
    1.043_426_711_691_100_5e-10,
    7.782_263_439_905_071_3e-12,
    -3.696_805_618_642_205_7e-12,
    5.100_370_287_454_476e-13,
    -2.058_326_053_566_506_8e-14,
    -5.348_122_539_423_018e-15,
    1.226_778_628_238_260_8e-15,
    -1.181_259_301_697_458_8e-16,
];

/// Γ(x) for `x > 0` (Lanczos, with reflection below 1/2).
pub fn gamma_fn<T: Real>(x: T) -> T {
    let half = lit::<T>(0.5);
    if x < half {
        return T::PI() / ((T::PI() * x).sin() * gamma_fn(T::one() - x));
    }
    let z = x - T::one();
    let mut acc = lit::<T>(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + lit::<T>(c) / (z + from_usize(i));
    }
    let t = z + lit::<T>(LANCZOS_G) + half;
    (lit::<T>(2.0) * T::PI()).sqrt() * t.powf(z + half) * (-t).exp() * acc
}

/// `1/Γ(1+μ)` and `1/Γ(1-μ)` for `|μ| <= 1/2` together with Temme's
/// `γ₁ = (1/Γ(1-μ) - 1/Γ(1+μ)) / 2μ` and `γ₂ = (1/Γ(1-μ) + 1/Γ(1+μ)) / 2`.
fn temme_gammas<T: Real>(mu: T) -> (T, T, T, T) {
    // 1/Γ(1+μ) = Σ_{k>=1} c_k μ^{k-1}; odd k feed γ₂, even k feed γ₁
    let mut gam1 = T::zero();
    let mut gam2 = T::zero();
    let mut power = T::one();
    let mu2 = mu * mu;
    for pair in RGAMMA_SERIES.chunks(2) {
        gam2 = gam2 + lit::<T>(pair[0]) * power;
        if let Some(&c) = pair.get(1) {
            gam1 = gam1 - lit::<T>(c) * power;
        }
        power = power * mu2;
    }
    let gampl = gam2 - gam1 * mu;
    let gammi = gam2 + gam1 * mu;
    (gam1, gam2, gampl, gammi)
}

/// Exponentially scaled modified Bessel functions and derivatives at `x`:
/// `e^{-x} I_ν, e^{-x} I'_ν, e^{x} K_ν, e^{x} K'_ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledBessel<T> {
    pub i: T,
    pub ip: T,
    pub k: T,
    pub kp: T,
}

/// Scaled `I_ν(x)`, `K_ν(x)` for `ν >= 0`, `x > 0` by Temme's series
/// (`x < 2`) or Steed's continued fraction (`x >= 2`), with `I_ν` fixed by
/// the Wronskian from the continued fraction for `I'_ν / I_ν`.
pub fn bessel_ik_scaled<T: Real>(nu: T, x: T) -> ScaledBessel<T> {
    assert!(x > T::zero() && nu >= T::zero(), "bessel_ik needs x > 0, nu >= 0");
    let eps = T::epsilon();
    let fpmin = T::min_positive_value().sqrt();
    let two = lit::<T>(2.0);
    let half = lit::<T>(0.5);
    let nl = (nu + half).floor().to_usize().unwrap_or(0);
    let xmu = nu - from_usize(nl);
    let xmu2 = xmu * xmu;
    let xi = T::one() / x;
    let xi2 = two * xi;

    // CF1: I'_ν / I_ν
    let mut h = (nu * xi).max(fpmin);
    let mut b = xi2 * nu;
    let mut d = T::zero();
    let mut c = h;
    for _ in 0..100_000 {
        b = b + xi2;
        d = T::one() / (b + d);
        c = b + T::one() / c;
        let del = c * d;
        h = del * h;
        if (del - T::one()).abs() < eps {
            break;
        }
    }
    let mut ril = fpmin;
    let mut ripl = h * ril;
    let ril1 = ril;
    let rip1 = ripl;
    let mut fact = nu * xi;
    for _ in 0..nl {
        let ritemp = fact * ril + ripl;
        fact = fact - xi;
        ripl = fact * ritemp + ril;
        ril = ritemp;
    }
    let f = ripl / ril;

    // K_μ and K_{μ+1}, scaled by e^{x}
    let (rkmu, rk1) = if x < two {
        let x2 = half * x;
        let pimu = T::PI() * xmu;
        let fact = if pimu.abs() < eps { T::one() } else { pimu / pimu.sin() };
        let dl = -x2.ln();
        let e = xmu * dl;
        let fact2 = if e.abs() < eps { T::one() } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(xmu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * dl);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = half * ee / gampl;
        let mut q = half / (ee * gammi);
        let mut cc = T::one();
        let dd = x2 * x2;
        let mut sum1 = p;
        for i in 1..100_000usize {
            let fi = from_usize::<T>(i);
            ff = (fi * ff + p + q) / (fi * fi - xmu2);
            cc = cc * dd / fi;
            p = p / (fi - xmu);
            q = q / (fi + xmu);
            let del = cc * ff;
            sum = sum + del;
            let del1 = cc * (p - fi * ff);
            sum1 = sum1 + del1;
            if del.abs() < sum.abs() * eps {
                break;
            }
        }
        let scale = x.exp();
        (sum * scale, sum1 * xi2 * scale)
    } else {
        let mut b = two * (T::one() + x);
        let mut d = T::one() / b;
        let mut delh = d;
        let mut h = d;
        let mut q1 = T::zero();
        let mut q2 = T::one();
        let a1 = lit::<T>(0.25) - xmu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = T::one() + q * delh;
        for i in 2..100_000usize {
            a = a - two * from_usize::<T>(i - 1);
            c = -a * c / from_usize::<T>(i);
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q = q + c * qnew;
            b = b + two;
            d = T::one() / (b + a * d);
            delh = (b * d - T::one()) * delh;
            h = h + delh;
            let dels = q * delh;
            s = s + dels;
            if (dels / s).abs() < eps {
                break;
            }
        }
        h = a1 * h;
        let rkmu = (T::PI() / (two * x)).sqrt() / s;
        let rk1 = rkmu * (xmu + x + half - h) * xi;
        (rkmu, rk1)
    };

    let rkmup = xmu * xi * rkmu - rk1;
    let (ri, rip) = if x < two {
        // the Wronskian route cancels badly as x -> 0
        i_series_scaled(nu, x)
    } else {
        let rimu = xi / (f * rkmu - rkmup); // scaled by e^{-x}
        (rimu * ril1 / ril, rimu * rip1 / ril)
    };
    let mut rkmu = rkmu;
    let mut rk1 = rk1;
    for i in 1..=nl {
        let rktemp = (xmu + from_usize(i)) * xi2 * rk1 + rkmu;
        rkmu = rk1;
        rk1 = rktemp;
    }
    let rk = rkmu;
    let rkp = nu * xi * rkmu - rk1;
    ScaledBessel { i: ri, ip: rip, k: rk, kp: rkp }
}

/// `e^{-x} I_ν(x)` and `e^{-x} I'_ν(x)` from the ascending series.
fn i_series_scaled<T: Real>(nu: T, x: T) -> (T, T) {
    let half_x = x * lit(0.5);
    let q = half_x * half_x;
    let mut term = T::one() / gamma_fn(nu + T::one());
    let mut sum = term;
    let mut dsum = nu * term;
    for k in 1..200usize {
        let kf = from_usize::<T>(k);
        term = term * q / (kf * (kf + nu));
        sum = sum + term;
        dsum = dsum + (lit::<T>(2.0) * kf + nu) * term;
        if term < sum * T::epsilon() {
            break;
        }
    }
    let lead = if nu == T::zero() { T::one() } else { half_x.powf(nu) };
    let scale = lead * (-x).exp();
    (sum * scale, dsum * scale / x)
}

/// Unscaled `(I_ν(x), K_ν(x))`, `ν ∈ [0, 1]`.
pub fn bessel_ik<T: Real>(nu: T, x: T) -> Result<(T, T)> {
    if !(nu >= T::zero() && nu <= T::one()) {
        return Err(Error::InvalidArgument(format!("Bessel order {} outside [0, 1]", to_f64(nu))));
    }
    if !(x > T::zero()) {
        return Err(Error::InvalidArgument("Bessel argument must be positive".into()));
    }
    if x > T::max_value().ln() - lit(1.0) {
        return Err(Error::Overflow(to_f64(x)));
    }
    let s = bessel_ik_scaled(nu, x);
    Ok((s.i * x.exp(), s.k * (-x).exp()))
}

/// Order data `ν = (2-d)/2`, `α = d-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Order<T> {
    pub nu: T,
    pub alpha: T,
}

impl<T: Real> Order<T> {
    pub fn from_dimension(d: T) -> Result<Self> {
        if !(d >= T::one() && d < lit(2.0)) {
            return Err(Error::InvalidArgument(format!("order needs 1 <= d < 2, got {}", to_f64(d))));
        }
        Ok(Self { nu: (lit::<T>(2.0) - d) / lit(2.0), alpha: d - T::one() })
    }
}

/// `K̃(d)`, `C(ν)` and `C_M(ν)` together with their reflection-formula forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakCouplingConstants<T> {
    pub d: T,
    pub nu: T,
    /// `π / (2 sin(νπ) Γ(1-ν) Γ(1+ν))`
    pub k_tilde: T,
    /// `π 2^{2ν-1} / (Γ(1-ν)² sin(νπ))`
    pub c_nu: T,
    /// `-K̃(d)`
    pub c_m: T,
    /// `1 / (2 - d)`
    pub k_tilde_reflection: T,
    /// `-1 / (2ν)`
    pub c_m_reflection: T,
}

pub fn weak_coupling_constants<T: Real>(d: T) -> Result<WeakCouplingConstants<T>> {
    if d > lit::<T>(2.0 - 1e-6) {
        return Err(Error::NearSingular(to_f64(d)));
    }
    let order = Order::from_dimension(d)?;
    let nu = order.nu;
    let two = lit::<T>(2.0);
    let sin = (nu * T::PI()).sin();
    let g_minus = gamma_fn(T::one() - nu);
    let g_plus = gamma_fn(T::one() + nu);
    let k_tilde = T::PI() / (two * sin * g_minus * g_plus);
    let c_nu = T::PI() * two.powf(two * nu - T::one()) / (g_minus * g_minus * sin);
    let c_m = -T::PI() / (two * sin * g_minus * g_plus);
    let consts = WeakCouplingConstants {
        d,
        nu,
        k_tilde,
        c_nu,
        c_m,
        k_tilde_reflection: T::one() / (two - d),
        c_m_reflection: -T::one() / (two * nu),
    };
    let tol = T::epsilon() * lit(1e3);
    debug_assert!(
        (consts.k_tilde - consts.k_tilde_reflection).abs() <= tol * consts.k_tilde.abs(),
        "reflection identity for K̃ violated"
    );
    Ok(consts)
}

/// Resolvent kernel of the Dirichlet operator `-∂² + (ν²-¼)/t²` on the
/// half-line at `-κ²`: `√(t t') I_ν(κ t_<) K_ν(κ t_>)`.
pub fn green_dirichlet<T: Real>(t: T, tp: T, kappa: T, nu: T) -> T {
    let (lo, hi) = if t < tp { (t, tp) } else { (tp, t) };
    if lo <= T::zero() {
        return T::zero();
    }
    let a = kappa * lo;
    let b = kappa * hi;
    let sa = bessel_ik_scaled(nu, a);
    let sb = if hi == lo { sa } else { bessel_ik_scaled(nu, b) };
    (t * tp).sqrt() * sa.i * sb.k * (a - b).exp()
}

/// Per-point Bessel data for the Robin Green function at fixed `κ`.
#[derive(Debug, Clone, Copy)]
pub struct RobinPoint<T> {
    sqrt_s: T,
    arg: T,
    bessel: ScaledBessel<T>,
}

/// Resolvent kernel of `B₀ = -∂² + (d-1)(d-3)/(4(1+t)²)` on the half-line
/// with `φ'(0) = (d-1)/2 φ(0)`, at the point `-κ²`.
///
/// With `s = 1 + t` the decaying solution is `√s K_ν(κs)` and the solution
/// obeying the boundary condition is `√s (I_ν(κs) + c K_ν(κs))`,
/// `c = I_{1-ν}(κ)/K_{1-ν}(κ) + (2/π) sin(νπ)`. Their Wronskian is one, so
/// `G(t,t') = √(s s') (I_ν(κ s_<) + c K_ν(κ s_<)) K_ν(κ s_>)` and
/// `(B₀ + κ²) G = δ`.
#[derive(Debug, Clone, Copy)]
pub struct RobinGreen<T> {
    pub kappa: T,
    pub nu: T,
    /// `I_{1-ν}(κ)/K_{1-ν}(κ) e^{-2κ}`
    ratio_scaled: T,
    /// `(2/π) sin(νπ)`
    reflection: T,
}

impl<T: Real> RobinGreen<T> {
    pub fn new(kappa: T, d: T) -> Result<Self> {
        let order = Order::from_dimension(d)?;
        if !(kappa > T::zero()) {
            return Err(Error::InvalidArgument("kappa must be positive".into()));
        }
        let nu = order.nu;
        let b = bessel_ik_scaled(T::one() - nu, kappa);
        Ok(Self {
            kappa,
            nu,
            ratio_scaled: b.i / b.k,
            reflection: lit::<T>(2.0) / T::PI() * (nu * T::PI()).sin(),
        })
    }

    pub fn point(&self, t: T) -> RobinPoint<T> {
        let s = T::one() + t;
        let arg = self.kappa * s;
        RobinPoint { sqrt_s: s.sqrt(), arg, bessel: bessel_ik_scaled(self.nu, arg) }
    }

    /// Kernel value from precomputed points; `lo` must be the point closer to the root.
    pub fn pair(&self, lo: &RobinPoint<T>, hi: &RobinPoint<T>) -> T {
        let (a, b) = (lo.arg, hi.arg);
        let two_k = self.kappa + self.kappa;
        let regular = lo.bessel.i * hi.bessel.k * (a - b).exp();
        let coupling = (self.ratio_scaled * (two_k - a - b).exp() + self.reflection * (-a - b).exp())
            * lo.bessel.k
            * hi.bessel.k;
        lo.sqrt_s * hi.sqrt_s * (regular + coupling)
    }

    pub fn eval(&self, t: T, tp: T) -> T {
        let (lo, hi) = if t <= tp { (t, tp) } else { (tp, t) };
        let pl = self.point(lo);
        let ph = if lo == hi { pl } else { self.point(hi) };
        self.pair(&pl, &ph)
    }

    /// Solution obeying the boundary condition at the root, scaled by
    /// `e^{-κ s}`: returns `(φ, φ')`.
    pub fn regular_solution_scaled(&self, t: T) -> (T, T) {
        let p = self.point(t);
        let ks = (self.ratio_scaled * (lit::<T>(2.0) * (self.kappa - p.arg)).exp()
            + self.reflection * (lit::<T>(-2.0) * p.arg).exp())
            * p.bessel.k;
        let ksp = (self.ratio_scaled * (lit::<T>(2.0) * (self.kappa - p.arg)).exp()
            + self.reflection * (lit::<T>(-2.0) * p.arg).exp())
            * p.bessel.kp;
        let z = p.bessel.i + ks;
        let zp = p.bessel.ip + ksp;
        let value = p.sqrt_s * z;
        let deriv = z / (lit::<T>(2.0) * p.sqrt_s) + p.sqrt_s * self.kappa * zp;
        (value, deriv)
    }

    /// Decaying solution scaled by `e^{κ s}`: returns `(φ, φ')`.
    pub fn decaying_solution_scaled(&self, t: T) -> (T, T) {
        let p = self.point(t);
        let value = p.sqrt_s * p.bessel.k;
        let deriv = p.bessel.k / (lit::<T>(2.0) * p.sqrt_s) + p.sqrt_s * self.kappa * p.bessel.kp;
        (value, deriv)
    }

    /// `∂_t G(t, t')` for `t < t'`.
    pub fn dt_below(&self, t: T, tp: T) -> T {
        assert!(t < tp);
        let (_, dv) = self.regular_solution_scaled(t);
        let (w, _) = self.decaying_solution_scaled(tp);
        let a = self.kappa * (T::one() + t);
        let b = self.kappa * (T::one() + tp);
        dv * w * (a - b).exp()
    }
}

/// Convenience wrapper: `G(t, t', κ)` of `B₀` for dimension `d`.
pub fn green_robin<T: Real>(t: T, tp: T, kappa: T, d: T) -> Result<T> {
    Ok(RobinGreen::new(kappa, d)?.eval(t, tp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn gamma_known_values() {
        assert!(rel(gamma_fn(0.5), PI.sqrt()) < 1e-13);
        assert!(rel(gamma_fn(1.0), 1.0) < 1e-13);
        assert!(rel(gamma_fn(1.5), PI.sqrt() / 2.0) < 1e-13);
        assert!(rel(gamma_fn(0.05), 19.470_085_311_255_5) < 1e-12);
        // 29! = Γ(30)
        let fact29: f64 = (1..30).map(|k| k as f64).product();
        assert!(rel(gamma_fn(30.0), fact29) < 1e-12);
    }

    #[test]
    fn temme_gammas_match_lanczos() {
        for mu in [-0.5, -0.2, 1e-9, 0.13, 0.5] {
            let (_, _, gampl, gammi) = temme_gammas::<f64>(mu);
            assert!(rel(gampl, 1.0 / gamma_fn(1.0 + mu)) < 1e-14);
            assert!(rel(gammi, 1.0 / gamma_fn(1.0 - mu)) < 1e-14);
        }
    }

    #[test]
    fn half_integer_closed_forms() {
        for x in [0.01, 0.1, 1.0, 2.0, 10.0, 20.0] {
            let (i, k) = bessel_ik(0.5, x).unwrap();
            assert!(rel(i, (2.0 / (PI * x)).sqrt() * x.sinh()) < 1e-12, "I at {x}");
            assert!(rel(k, (PI / (2.0 * x)).sqrt() * (-x).exp()) < 1e-12, "K at {x}");
        }
    }

    #[test]
    fn matches_high_precision_references() {
        // reference values computed to 20 digits with arbitrary precision
        let cases: [(f64, f64, f64, f64); 16] = [
            (0.0, 0.001, 1.000000250000015625, 7.0236888005623813228),
            (0.0, 1.5, 1.6467231897728908449, 0.21380556264752573672),
            (0.0, 7.0, 168.59390851028969886, 0.00042479574186923180685),
            (0.0, 30.0, 781672297823.97748972, 2.1324774964630563712e-14),
            (0.3, 0.001, 0.11393858132853914543, 14.406547529041027179),
            (0.3, 1.5, 1.5216267795390422549, 0.21893795473217301825),
            (0.3, 7.0, 167.42073258513861795, 0.00042736373082278935584),
            (0.3, 30.0, 780480421399.83352914, 2.1356270283260948772e-14),
            (0.75, 0.001, 0.003638165962459664261, 183.23463852175821642),
            (0.75, 1.5, 1.1890744703371335578, 0.24773741667982674946),
            (0.75, 7.0, 161.40396230225666458, 0.00044109269545387095313),
            (0.75, 30.0, 774253174325.53173041, 2.152237744711505179e-14),
            (1.0, 0.001, 0.00050000006250000261458, 999.99623815608555346),
            (1.0, 1.5, 0.98166642857790758565, 0.27738780045684381609),
            (1.0, 7.0, 156.03909286995545346, 0.00045418248688489697124),
            (1.0, 30.0, 768532038938.95699949, 2.1677320018915494249e-14),
        ];
        for (nu, x, i_ref, k_ref) in cases {
            let (i, k) = bessel_ik(nu, x).unwrap();
            assert!(rel(i, i_ref) < 1e-12, "I_{nu}({x}) = {i} vs {i_ref}");
            assert!(rel(k, k_ref) < 1e-12, "K_{nu}({x}) = {k} vs {k_ref}");
        }
    }

    #[test]
    fn small_argument_product_limit() {
        for nu in [0.25, 0.5] {
            let x = 1e-14;
            let (i, k) = bessel_ik(nu, x).unwrap();
            assert!(rel(i * k, 1.0 / (2.0 * nu)) < 1e-5);
            let lead = (x / 2.0).powf(nu) / gamma_fn(nu + 1.0);
            assert!(rel(i, lead) < 1e-6);
        }
    }

    #[test]
    fn overflow_is_signalled() {
        assert!(matches!(bessel_ik(0.5, 800.0), Err(Error::Overflow(_))));
        let s = bessel_ik_scaled(0.5f64, 800.0);
        assert!(s.i.is_finite() && s.k.is_finite());
    }

    #[test]
    fn constants_and_reflection_identities() {
        for d in [1.0f64, 1.25, 1.5, 1.75] {
            let c = weak_coupling_constants(d).unwrap();
            assert!((c.k_tilde * (2.0 - d) - 1.0).abs() < 1e-12);
            assert!((c.c_m * (2.0 * c.nu) + 1.0).abs() < 1e-12);
        }
        let c1 = weak_coupling_constants(1.0f64).unwrap();
        assert!((c1.k_tilde - 1.0).abs() < 1e-12);
        assert!((c1.c_nu - 1.0).abs() < 1e-12);
        let c15 = weak_coupling_constants(1.5f64).unwrap();
        assert!((c15.k_tilde - 2.0).abs() < 1e-12 && (c15.c_m + 2.0).abs() < 1e-12);
        assert!(matches!(weak_coupling_constants(2.0 - 1e-7), Err(Error::NearSingular(_))));
    }

    #[test]
    fn dirichlet_green_closed_form_and_limits() {
        let kappa = 0.7;
        for (t, tp) in [(0.3, 1.1), (2.0, 0.5), (1.0, 1.0)] {
            let (lo, hi): (f64, f64) = if t < tp { (t, tp) } else { (tp, t) };
            let exact = (-kappa * hi).exp() * (kappa * lo).sinh() / kappa;
            assert!(rel(green_dirichlet(t, tp, kappa, 0.5), exact) < 1e-12);
        }
        for d in [1.0f64, 1.5] {
            let kt = weak_coupling_constants(d).unwrap().k_tilde;
            let nu = (2.0 - d) / 2.0;
            let g = green_dirichlet(3.0, 3.0, 1e-9, nu);
            assert!(rel(g, 3.0 * kt) < 1e-4, "d={d}: {g}");
        }
        // monotone decreasing in kappa
        let mut prev = f64::INFINITY;
        for kappa in [0.01, 0.1, 0.5, 2.0] {
            let g = green_dirichlet(0.8, 1.7, kappa, 0.25);
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn robin_green_reduces_to_neumann_at_d1() {
        let kappa = 0.4;
        for (t, tp) in [(0.0, 0.0), (0.2, 3.0), (5.0, 1.0)] {
            let (lo, hi): (f64, f64) = if t < tp { (t, tp) } else { (tp, t) };
            let exact = (-kappa * hi).exp() * (kappa * lo).cosh() / kappa;
            let g = green_robin(t, tp, kappa, 1.0).unwrap();
            assert!(rel(g, exact) < 1e-12, "{g} vs {exact}");
        }
    }

    #[test]
    fn robin_boundary_condition_and_wronskian() {
        for d in [1.0f64, 1.3, 1.5, 1.9] {
            for kappa in [0.05, 0.3, 2.0] {
                let g = RobinGreen::new(kappa, d).unwrap();
                let (v, dv) = g.regular_solution_scaled(0.0);
                assert!((dv - (d - 1.0) / 2.0 * v).abs() <= 1e-9 * v.abs(), "bc d={d} kappa={kappa}");
                for tp in [0.5, 2.0, 9.0] {
                    let lhs = g.dt_below(0.0, tp);
                    let gv = g.eval(0.0, tp);
                    assert!((lhs - (d - 1.0) / 2.0 * gv).abs() <= 1e-6 * gv.abs());
                }
                // unit Wronskian: regular' * decaying - regular * decaying' (scalings cancel)
                for t in [0.0, 0.7, 4.0, 25.0] {
                    let (u, du) = g.regular_solution_scaled(t);
                    let (w, dw) = g.decaying_solution_scaled(t);
                    let wr = du * w - u * dw;
                    assert!((wr - 1.0).abs() < 1e-9, "W = {wr} at d={d} kappa={kappa} t={t}");
                }
            }
        }
    }

    #[test]
    fn single_precision_bessel() {
        let (i, k) = bessel_ik(0.5f32, 1.0f32).unwrap();
        let x = 1.0f32;
        assert!(((i - (2.0 / (std::f32::consts::PI * x)).sqrt() * x.sinh()) / i).abs() < 1e-5);
        assert!(((k - (std::f32::consts::PI / (2.0 * x)).sqrt() * (-x).exp()) / k).abs() < 1e-5);
    }
}
