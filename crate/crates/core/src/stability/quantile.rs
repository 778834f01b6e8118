//! Normal and Student-t quantiles.
//!
//! Upper-tail variants take the natural log of the tail probability so that
//! levels like `delta * exp(-eta)` with large `eta` stay representable.

use libm::erfc;
use libm::lgamma as ln_gamma;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// Acklam's rational approximation to the inverse normal CDF.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

fn acklam(p: f64) -> f64 {
    const P_LOW: f64 = 0.024_25;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF: rational approximation plus one Halley step.
///
/// Returns `-inf`/`+inf` at 0/1 and NaN outside `[0, 1]`.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    // Refine in the tail where p is represented accurately.
    if p > 0.5 {
        return -normal_lower_refined(1.0 - p);
    }
    normal_lower_refined(p)
}

fn normal_lower_refined(p: f64) -> f64 {
    let x = acklam(p);
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// `ln Q(z)` where `Q` is the standard normal upper tail.
pub fn normal_sf_ln(z: f64) -> f64 {
    if z < 5.0 {
        return (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln();
    }
    -0.5 * z * z - LN_SQRT_2PI + mills_ratio(z).ln()
}

/// `Q(z) / phi(z)` for `z >= 5` by a Lentz continued fraction.
fn mills_ratio(z: f64) -> f64 {
    // R(z) = 1 / (z + 1/(z + 2/(z + 3/(z + ...))))
    const TINY: f64 = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = z + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = z + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 4e-16 {
            break;
        }
    }
    1.0 / f
}

/// The `z > 0` with `ln Q(z) = ln_q`, for `ln_q` in `(-inf, ln 0.5]`.
pub fn normal_upper_quantile_ln(ln_q: f64) -> f64 {
    if ln_q.is_nan() || ln_q >= 0.0 {
        return f64::NAN;
    }
    if ln_q == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    if ln_q > -700.0 {
        return -normal_quantile(ln_q.exp());
    }
    // Deep tail: Newton on ln Q, d/dz ln Q(z) = -1 / R(z).
    let t = -2.0 * ln_q;
    let mut z = (t - t.ln() - (2.0 * std::f64::consts::PI).ln()).sqrt();
    for _ in 0..50 {
        let g = normal_sf_ln(z) - ln_q;
        let step = g * mills_ratio(z);
        z += step;
        if step.abs() < 1e-15 * z {
            break;
        }
    }
    z
}

/// `ln` of the Student-t upper tail `P(T_r > x)` for `x >= 0`.
pub fn t_sf_ln(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        if x == 0.0 {
            return 0.5_f64.ln();
        }
        return (1.0 - t_sf_ln(-x, dof).exp()).ln();
    }
    if x.is_infinite() {
        return f64::NEG_INFINITY;
    }
    // P(T > x) = I_w(r/2, 1/2) / 2 with w = r / (r + x^2).
    let x2 = x * x;
    let (w, one_minus_w) = (dof / (dof + x2), x2 / (dof + x2));
    0.5_f64.ln() + ln_beta_reg(0.5 * dof, 0.5, w, one_minus_w)
}

fn t_density_ln(x: f64, dof: f64) -> f64 {
    ln_gamma(0.5 * (dof + 1.0))
        - ln_gamma(0.5 * dof)
        - 0.5 * (dof * std::f64::consts::PI).ln()
        - 0.5 * (dof + 1.0) * (x * x / dof).ln_1p()
}

/// `ln I_x(a, b)`; `y = 1 - x` is passed separately to avoid cancellation.
fn ln_beta_reg(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if y <= 0.0 {
        return 0.0;
    }
    let ln_front =
        a * x.ln() + b * y.ln() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front + betacf(a, b, x).ln() - a.ln()
    } else {
        let other = (ln_front + betacf(b, a, y).ln() - b.ln()).exp();
        (-other).ln_1p()
    }
}

// Continued fraction for the incomplete beta function (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 4e-16 {
            break;
        }
    }
    h
}

/// The `x > 0` with `ln P(T_r > x) = ln_q`, found by safeguarded Newton.
pub fn t_upper_quantile_ln(ln_q: f64, dof: u64) -> f64 {
    if ln_q.is_nan() || ln_q >= 0.0 || dof == 0 {
        return f64::NAN;
    }
    if ln_q == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    let r = dof as f64;
    let half = 0.5_f64.ln();
    if ln_q >= half {
        if ln_q == half {
            return 0.0;
        }
        return -t_upper_quantile_ln((-ln_q.exp()).ln_1p(), dof);
    }
    let g = |x: f64| t_sf_ln(x, r) - ln_q;
    let mut lo = 0.0;
    let mut hi = normal_upper_quantile_ln(ln_q).max(1.0);
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..300 {
        let gx = g(x);
        if gx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // d/dx ln S = -f(x) / S(x)
        let slope = -(t_density_ln(x, r) - t_sf_ln(x, r)).exp();
        let mut next = x - gx / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        x = next;
    }
    x
}

/// Student-t quantile with `dof` degrees of freedom.
pub fn t_quantile(p: f64, dof: u64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) || dof == 0 {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    if p > 0.5 {
        t_upper_quantile_ln((-p).ln_1p(), dof)
    } else {
        -t_upper_quantile_ln(p.ln(), dof)
    }
}
