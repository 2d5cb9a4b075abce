//! Special functions used by the leakage analysis.

use std::f64::consts::{LN_2, PI};

use super::InfoError;

#[cfg(not(feature = "fault-injection"))]
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
#[cfg(feature = "fault-injection")]
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9 + 1e-6;

/// `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64, InfoError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(InfoError::Domain(format!("ln_gamma({x})")));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// Digamma for `x > 0`.
pub fn digamma(x: f64) -> Result<f64, InfoError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(InfoError::Domain(format!("digamma({x})")));
    }
    Ok(statrs::function::gamma::digamma(x))
}

/// Exponential integral `Ei(x) = -PV int_{-x}^inf e^{-t}/t dt`, `x != 0`.
pub fn exp_integral_ei(x: f64) -> Result<f64, InfoError> {
    if x == 0.0 || !x.is_finite() {
        return Err(InfoError::Domain(format!("Ei({x})")));
    }
    if x < 0.0 {
        return Ok(-e1(-x));
    }
    if x <= 40.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..500 {
            term *= x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add < 1e-17 * sum {
                break;
            }
        }
        return Ok(EULER_GAMMA + x.ln() + sum);
    }
    // asymptotic expansion, truncated at its smallest term
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..(x as usize) {
        let next = term * k as f64 / x;
        if next < 1e-17 * sum || next > term {
            break;
        }
        term = next;
        sum += term;
    }
    Ok(x.exp() / x * sum)
}

/// `E1(z)` for `z > 0`.
fn e1(z: f64) -> f64 {
    if z <= 1.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..200 {
            term *= -z / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        return -EULER_GAMMA - z.ln() - sum;
    }
    // modified Lentz on the continued fraction
    let tiny = 1e-300;
    let mut b = z + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}

/// Dawson's integral `F(x) = e^{-x^2} int_0^x e^{t^2} dt`.
pub fn dawson(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= 6.0 {
        (-ax * ax).exp() * half_sqrt_pi_erfi(ax)
    } else {
        let inv = 1.0 / (2.0 * ax * ax);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            let next = term * (2 * k - 1) as f64 * inv;
            if next > term || next < 1e-17 * sum {
                break;
            }
            term = next;
            sum += term;
        }
        sum / (2.0 * ax)
    };
    v.copysign(x)
}

/// `sum_n x^{2n+1} / (n! (2n+1))`, which equals `sqrt(pi)/2 * erfi(x)`.
fn half_sqrt_pi_erfi(x: f64) -> f64 {
    let x2 = x * x;
    let mut pow = x;
    let mut sum = x;
    for n in 1..400 {
        pow *= x2 / n as f64;
        let add = pow / (2 * n + 1) as f64;
        sum += add;
        if add.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Imaginary error function.
pub fn erfi(x: f64) -> f64 {
    if x.abs() <= 6.0 {
        2.0 / PI.sqrt() * half_sqrt_pi_erfi(x)
    } else {
        2.0 / PI.sqrt() * (x * x).exp() * dawson(x)
    }
}

const HYP_TERM_BUDGET: usize = 5_000;
const HYP_RELATIVE_TOL: f64 = 1e-9;

/// Generalized hypergeometric `2F2(a1, a2; b1, b2; z)` by its ascending
/// series with compensated summation. Fails with `PrecisionLoss` when
/// cancellation among the terms would leave less than the target relative
/// accuracy, or the series does not settle within the term budget.
pub fn hyp2f2(a1: f64, a2: f64, b1: f64, b2: f64, z: f64) -> Result<f64, InfoError> {
    for b in [b1, b2] {
        if b <= 0.0 && b.fract() == 0.0 {
            return Err(InfoError::Domain(format!("2F2 lower parameter {b} is a non-positive integer")));
        }
    }
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut comp = 0.0f64;
    let mut max_term = 1.0f64;
    for k in 0..HYP_TERM_BUDGET {
        let kf = k as f64;
        term *= (a1 + kf) * (a2 + kf) / ((b1 + kf) * (b2 + kf)) * z / (kf + 1.0);
        // Neumaier summation
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        max_term = max_term.max(term.abs());
        if term == 0.0 || (term.abs() < 1e-18 * (sum + comp).abs() && kf > z.abs()) {
            let total = sum + comp;
            if max_term * f64::EPSILON > HYP_RELATIVE_TOL * total.abs() {
                return Err(InfoError::PrecisionLoss(format!(
                    "2F2 series at z = {z}: largest term {max_term:e} against result {total:e}"
                )));
            }
            return Ok(total);
        }
    }
    Err(InfoError::PrecisionLoss(format!("2F2 series at z = {z} did not converge in {HYP_TERM_BUDGET} terms")))
}

/// `sum_k Pois(k; xi) psi(a + k)`, i.e. `E[psi(a + K)]` for `K ~ Poisson(xi)`.
pub fn poisson_digamma_mixture(a: f64, xi: f64) -> Result<f64, InfoError> {
    if !(a > 0.0) || !(xi >= 0.0) || !xi.is_finite() {
        return Err(InfoError::Domain(format!("poisson mixture a = {a}, xi = {xi}")));
    }
    if xi == 0.0 {
        return digamma(a);
    }
    let mode = xi.floor();
    let log_w_mode = -xi + mode * xi.ln() - ln_gamma(mode + 1.0)?;
    let psi_mode = digamma(a + mode)?;
    let mut total = 0.0;
    let mut mass = 0.0;

    let (mut log_w, mut psi, mut k) = (log_w_mode, psi_mode, mode);
    loop {
        let w = log_w.exp();
        total += w * psi;
        mass += w;
        if w < 1e-20 && k > xi {
            break;
        }
        psi += 1.0 / (a + k);
        k += 1.0;
        log_w += xi.ln() - k.ln();
    }
    let (mut log_w, mut psi, mut k) = (log_w_mode, psi_mode, mode);
    while k >= 1.0 {
        log_w += k.ln() - xi.ln();
        k -= 1.0;
        psi -= 1.0 / (a + k);
        let w = log_w.exp();
        total += w * psi;
        mass += w;
        if w < 1e-20 {
            break;
        }
    }
    Ok(total / mass)
}

/// `2 xi 2F2(1, 1; 3/2, 2; -xi)`, switching to the Poisson-mixture identity
/// `sum_k Pois(k; xi) psi(k + 1/2) + gamma + 2 ln 2` when the series is
/// unreliable.
pub fn two_xi_hyp(xi: f64) -> Result<f64, InfoError> {
    match hyp2f2(1.0, 1.0, 1.5, 2.0, -xi) {
        Ok(v) => Ok(2.0 * xi * v),
        Err(InfoError::PrecisionLoss(_)) => {
            Ok(poisson_digamma_mixture(0.5, xi)? + EULER_GAMMA + 2.0 * LN_2)
        }
        Err(e) => Err(e),
    }
}
