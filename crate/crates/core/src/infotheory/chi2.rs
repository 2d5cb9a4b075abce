//! Central and noncentral chi-squared quantities.
//!
//! For `X ~ ncchi2(d, tau)`, `E[ln X] = ln 2 + g_{d/2}(tau/2)` when `d` is
//! even and `ln 2 + h_d(tau/2)` when `d` is odd. Both families also equal
//! `E[psi(d/2 + K)]` with `K ~ Poisson(tau/2)`, which is what the closed
//! forms fall back to whenever their finite sums cancel badly.

use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

use super::special::{
    dawson, digamma, exp_integral_ei, ln_gamma, poisson_digamma_mixture, two_xi_hyp, EULER_GAMMA,
};
use super::InfoError;

/// Differential entropy of `chi2(d)` in nats.
pub fn chi2_entropy(d: usize) -> Result<f64, InfoError> {
    if d == 0 {
        return Err(InfoError::Domain("chi2_entropy needs d >= 1".into()));
    }
    let half = d as f64 / 2.0;
    Ok(LN_2 + ln_gamma(half)? + (1.0 - half) * digamma(half)? + half)
}

// Closed forms are accepted only when the rounding error bound of their
// largest summand stays below this absolute level.
const CLOSED_FORM_TOL: f64 = 1e-11;

fn check_xi(xi: f64) -> Result<(), InfoError> {
    if !(xi >= 0.0) || !xi.is_finite() {
        return Err(InfoError::Domain(format!("xi must be finite and >= 0, got {xi}")));
    }
    Ok(())
}

/// The even-dimension family `g_m`.
pub fn g_family(m: usize, xi: f64) -> Result<f64, InfoError> {
    if m == 0 {
        return Err(InfoError::Domain("g_m needs m >= 1".into()));
    }
    check_xi(xi)?;
    if xi == 0.0 {
        return digamma(m as f64);
    }
    if let Some(v) = g_closed(m, xi) {
        return Ok(v);
    }
    poisson_digamma_mixture(m as f64, xi)
}

fn g_closed(m: usize, xi: f64) -> Option<f64> {
    let mut value = xi.ln() - exp_integral_ei(-xi).ok()?;
    let mut largest = value.abs().max(xi.ln().abs());
    let e = (-xi).exp();
    let inv = 1.0 / xi;
    // (j-1)! and (m-1)!/(m-1-j)! built incrementally
    let mut fact = 1.0;
    let mut falling = 1.0;
    let mut pow = 1.0;
    for j in 1..m {
        if j > 1 {
            fact *= (j - 1) as f64;
        }
        falling *= (m - j) as f64;
        pow *= inv;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let a = e * fact * pow;
        let b = falling / j as f64 * pow;
        value += sign * (a - b);
        largest = largest.max(a.abs()).max(b.abs());
    }
    let ok = value.is_finite() && largest * f64::EPSILON * m as f64 <= CLOSED_FORM_TOL;
    ok.then_some(value)
}

/// The odd-dimension family `h_n`, `n` odd.
pub fn h_family(n: usize, xi: f64) -> Result<f64, InfoError> {
    if n % 2 == 0 {
        return Err(InfoError::Domain(format!("h_n needs odd n, got {n}")));
    }
    check_xi(xi)?;
    if xi == 0.0 {
        return digamma(n as f64 / 2.0);
    }
    if let Some(v) = h_closed(n, xi)? {
        return Ok(v);
    }
    poisson_digamma_mixture(n as f64 / 2.0, xi)
}

fn h_closed(n: usize, xi: f64) -> Result<Option<f64>, InfoError> {
    let head = two_xi_hyp(xi)?;
    let mut value = -EULER_GAMMA - 2.0 * LN_2 + head;
    let mut largest = head.abs().max(2.0);
    let s = xi.sqrt();
    // sqrt(xi) e^{-xi} erfi(sqrt(xi)) through Dawson's integral
    let base = 2.0 * s * dawson(s) / PI.sqrt();
    let inv = 1.0 / xi;
    for j in 1..=(n - 1) / 2 {
        let gamma_j = ln_gamma(j as f64 - 0.5)?.exp();
        let mut bracket = base;
        let mut inner_largest = base.abs();
        for i in 1..j {
            let t = xi.powi(i as i32) / ln_gamma(i as f64 + 0.5)?.exp();
            let t = if i % 2 == 0 { t } else { -t };
            bracket += t;
            inner_largest = inner_largest.max(t.abs());
        }
        let scale = gamma_j * inv.powi(j as i32);
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        value += sign * scale * bracket;
        largest = largest.max(scale * inner_largest);
    }
    let ok = value.is_finite() && largest * f64::EPSILON * n as f64 <= CLOSED_FORM_TOL;
    Ok(ok.then_some(value))
}

/// `E[ln X]` for `X ~ ncchi2(d, tau)`.
pub fn expected_log_ncx2(d: usize, tau: f64) -> Result<f64, InfoError> {
    if d == 0 {
        return Err(InfoError::Domain("degrees of freedom must be >= 1".into()));
    }
    let xi = tau / 2.0;
    let fam = if d % 2 == 0 { g_family(d / 2, xi)? } else { h_family(d, xi)? };
    Ok(LN_2 + fam)
}

/// Noncentral chi-squared density evaluator with precomputed Poisson weights.
#[derive(Debug, Clone)]
pub struct Ncx2 {
    d: usize,
    tau: f64,
    /// `(k, ln w_k - (d/2+k) ln 2 - ln Gamma(d/2+k))` over the retained window.
    terms: Vec<(f64, f64)>,
}

impl Ncx2 {
    pub fn new(d: usize, tau: f64) -> Result<Self, InfoError> {
        if d == 0 || !(tau >= 0.0) || !tau.is_finite() {
            return Err(InfoError::Domain(format!("ncchi2(d = {d}, tau = {tau})")));
        }
        let lam = tau / 2.0;
        let half = d as f64 / 2.0;
        let (lo, hi) = if lam == 0.0 {
            (0.0, 0.0)
        } else {
            let spread = 12.0 * lam.sqrt() + 12.0;
            ((lam - spread).max(0.0).floor(), (lam + spread).ceil())
        };
        let mut terms = Vec::with_capacity((hi - lo) as usize + 1);
        let mut k = lo;
        while k <= hi {
            let log_w = if lam == 0.0 { 0.0 } else { -lam + k * lam.ln() - ln_gamma(k + 1.0)? };
            let nu = half + k;
            terms.push((k, log_w - nu * LN_2 - ln_gamma(nu)?));
            k += 1.0;
        }
        Ok(Self { d, tau, terms })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `ln f(x)` for `x > 0`, given `ln x`.
    pub fn ln_pdf_at_log(&self, ln_x: f64) -> f64 {
        let x = ln_x.exp();
        let half = self.d as f64 / 2.0;
        let term = |i: usize| {
            let (k, c) = self.terms[i];
            c + (half + k - 1.0) * ln_x - x / 2.0
        };
        // The summands are log-concave in k, so the largest one is found by
        // bisection and the sum only walks outward until terms are negligible.
        let (mut lo, mut hi) = (0, self.terms.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if term(mid + 1) > term(mid) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let best = term(lo);
        if !best.is_finite() {
            return best;
        }
        let mut sum = 1.0;
        for i in (0..lo).rev() {
            let r = (term(i) - best).exp();
            sum += r;
            if r < 1e-18 {
                break;
            }
        }
        for i in lo + 1..self.terms.len() {
            let r = (term(i) - best).exp();
            sum += r;
            if r < 1e-18 {
                break;
            }
        }
        best + sum.ln()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.ln_pdf_at_log(x.ln())
    }

    /// Differential entropy in nats. Integrates over `y = ln x`, where the
    /// density is smooth, using `h(X) = h(ln X) + E[ln X]`.
    pub fn entropy(&self) -> f64 {
        let ln_fy = |y: f64| self.ln_pdf_at_log(y) + y;
        let d = self.d as f64;
        let mean = d + self.tau;
        let center = mean.ln();
        let sd = ((2.0 * d + 4.0 * self.tau).sqrt() / mean).clamp(1e-4, 3.0);
        let peak = ln_fy(center);
        let step = sd.max(0.02);
        let mut lo = center;
        while ln_fy(lo) > peak - 46.0 && lo > center - 400.0 {
            lo -= step;
        }
        let mut hi = center;
        while ln_fy(hi) > peak - 46.0 && hi < center + 50.0 {
            hi += step;
        }
        let panels = (((hi - lo) / (sd / 3.0)).ceil() as usize).clamp(24, 1200);
        let width = (hi - lo) / panels as f64;
        let (nodes, weights) = gauss_legendre_20();
        let mut h_y = 0.0;
        let mut e_y = 0.0;
        for p in 0..panels {
            let a = lo + p as f64 * width;
            for (t, w) in nodes.iter().zip(weights) {
                let y = a + (t + 1.0) * width / 2.0;
                let l = ln_fy(y);
                if l.is_finite() {
                    let f = l.exp();
                    let ww = w * width / 2.0;
                    h_y -= ww * f * l;
                    e_y += ww * f * y;
                }
            }
        }
        h_y + e_y
    }
}

/// Entropy of `ncchi2(d, tau)` in nats.
pub fn ncx2_entropy(d: usize, tau: f64) -> Result<f64, InfoError> {
    Ok(Ncx2::new(d, tau)?.entropy())
}

/// 20-point Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre_20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

/// Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Chebyshev interpolant of a smooth function on `[a, b]`.
#[derive(Debug, Clone)]
pub struct Chebyshev {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
}

impl Chebyshev {
    pub fn fit<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> Self {
        let n = n.max(2);
        let values: Vec<f64> = (0..n)
            .map(|k| {
                let t = (PI * (k as f64 + 0.5) / n as f64).cos();
                f(0.5 * (b - a) * t + 0.5 * (b + a))
            })
            .collect();
        let coeffs = (0..n)
            .map(|j| {
                let s: f64 = (0..n)
                    .map(|k| values[k] * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                    .sum();
                2.0 * s / n as f64
            })
            .collect();
        Self { a, b, coeffs }
    }

    /// Clenshaw evaluation; arguments outside `[a, b]` are clamped.
    pub fn eval(&self, x: f64) -> f64 {
        let t = if self.b > self.a {
            ((2.0 * x - self.a - self.b) / (self.b - self.a)).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0] / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_at_two_degrees() {
        assert!((chi2_entropy(2).unwrap() - (1.0 + LN_2)).abs() < 1e-12);
    }

    #[test]
    fn families_at_zero() {
        assert!((g_family(1, 0.0).unwrap() + EULER_GAMMA).abs() < 1e-12);
        assert!((g_family(2, 0.0).unwrap() - (1.0 - EULER_GAMMA)).abs() < 1e-12);
        assert!((h_family(1, 0.0).unwrap() - (-EULER_GAMMA - 2.0 * LN_2)).abs() < 1e-12);
        assert!((h_family(3, 0.0).unwrap() - (2.0 - EULER_GAMMA - 2.0 * LN_2)).abs() < 1e-12);
        assert!(h_family(4, 1.0).is_err());
        assert!(g_family(0, 1.0).is_err());
    }

    #[test]
    fn closed_forms_agree_with_mixture() {
        for &xi in &[0.05, 0.3, 1.0, 2.5, 7.0, 15.0] {
            for m in 1..6 {
                if let Some(v) = g_closed(m, xi) {
                    let mix = poisson_digamma_mixture(m as f64, xi).unwrap();
                    assert!((v - mix).abs() < 1e-9, "g_{m}({xi}): {v} vs {mix}");
                }
            }
            for n in [1, 3, 5, 7] {
                if let Some(v) = h_closed(n, xi).unwrap() {
                    let mix = poisson_digamma_mixture(n as f64 / 2.0, xi).unwrap();
                    assert!((v - mix).abs() < 1e-9, "h_{n}({xi}): {v} vs {mix}");
                }
            }
        }
    }

    #[test]
    fn quadrature_entropy_matches_central_closed_form() {
        for d in 1..=16 {
            let q = ncx2_entropy(d, 0.0).unwrap();
            let c = chi2_entropy(d).unwrap();
            assert!((q - c).abs() < 1e-8, "d = {d}: {q} vs {c}");
        }
    }

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(20);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(38)).sum();
        assert!((integral - 2.0 / 39.0).abs() < 1e-14);
    }

    #[test]
    fn chebyshev_reproduces_smooth_function() {
        let f = |x: f64| (1.0 + x).ln() * x.cos();
        let c = Chebyshev::fit(f, 0.0, 3.0, 32);
        for i in 0..=30 {
            let x = i as f64 * 0.1;
            assert!((c.eval(x) - f(x)).abs() < 1e-10);
        }
    }
}
