//! Prime-field arithmetic and the fixed-point map between reals and field
//! residues.
//!
//! Residues are stored in a `u64` and every product is formed in `u128`
//! before reduction, so moduli up to `2^63` are supported without wrapping.
//! Reals are embedded by scaling with `lambda` and flooring; negative values
//! land in the upper half of the field (`q + floor(lambda * x)`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by field arithmetic and quantization.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("modulus {0} is not an odd prime")]
    NotPrime(u64),
    #[error("modulus {0} exceeds the supported range (< 2^63)")]
    ModulusTooLarge(u64),
    #[error("attempted to invert zero")]
    DivisionByZero,
    #[error("entry {index}: scaled value {scaled} is outside [-{eta}, {eta})")]
    RangeExceeded { index: usize, scaled: f64, eta: f64 },
    #[error("quantization bound 2*eta = {two_eta} does not fit below the modulus {q}")]
    EtaTooLarge { two_eta: f64, q: u64 },
    #[error("entry {index}: residue {value} lies between the positive and negative images")]
    AmbiguousValue { index: usize, value: u64 },
    #[error("invalid quantization config: {0}")]
    BadQuantConfig(String),
}

/// A residue in `[0, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Little-endian wire encoding, 8 bytes per element.
    pub fn to_le_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }
}

impl std::fmt::Display for FieldElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Number of bytes a field element occupies on the simulated wire.
pub const ELEMENT_BYTES: usize = 8;

/// The prime field `F_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimeField {
    q: u64,
}

const MAX_MODULUS: u64 = 1 << 63;

impl PrimeField {
    /// Builds the field, rejecting composite, even or oversized moduli.
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if q >= MAX_MODULUS {
            return Err(FieldError::ModulusTooLarge(q));
        }
        if q < 3 || !is_prime(q) {
            return Err(FieldError::NotPrime(q));
        }
        Ok(Self { q })
    }

    /// Smallest prime field whose modulus is strictly above `lower`.
    pub fn above(lower: u128) -> Result<Self, FieldError> {
        if lower >= MAX_MODULUS as u128 {
            return Err(FieldError::ModulusTooLarge(lower.min(u64::MAX as u128) as u64));
        }
        Self::new(next_prime_above(lower as u64))
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.q
    }

    /// `ceil(q / 2)`: residues at or above this decode as negative.
    #[inline]
    pub fn half(&self) -> u64 {
        self.q / 2 + 1
    }

    #[inline]
    pub fn elem(&self, v: u64) -> FieldElement {
        FieldElement(v % self.q)
    }

    #[inline]
    pub fn from_i64(&self, v: i64) -> FieldElement {
        let r = (v as i128).rem_euclid(self.q as i128);
        FieldElement(r as u64)
    }

    /// Signed representative in `(-q/2, q/2]`.
    #[inline]
    pub fn centered(&self, a: FieldElement) -> i128 {
        if a.0 >= self.half() {
            a.0 as i128 - self.q as i128
        } else {
            a.0 as i128
        }
    }

    #[inline]
    pub fn zero(&self) -> FieldElement {
        FieldElement(0)
    }

    #[inline]
    pub fn one(&self) -> FieldElement {
        FieldElement(1)
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = a.0 as u128 + b.0 as u128;
        let q = self.q as u128;
        FieldElement(if s >= q { (s - q) as u64 } else { s as u64 })
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a.0 >= b.0 {
            FieldElement(a.0 - b.0)
        } else {
            FieldElement(self.q - (b.0 - a.0))
        }
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        if a.0 == 0 {
            a
        } else {
            FieldElement(self.q - a.0)
        }
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(((a.0 as u128 * b.0 as u128) % self.q as u128) as u64)
    }

    pub fn pow(&self, mut base: FieldElement, mut exp: u64) -> FieldElement {
        let mut acc = self.one();
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement, FieldError> {
        if a.is_zero() {
            return Err(FieldError::DivisionByZero);
        }
        Ok(self.pow(a, self.q - 2))
    }

    /// Inverts every element of `values` with a single exponentiation.
    pub fn batch_inv(&self, values: &[FieldElement]) -> Result<Vec<FieldElement>, FieldError> {
        let mut prefix = Vec::with_capacity(values.len());
        let mut acc = self.one();
        for &v in values {
            if v.is_zero() {
                return Err(FieldError::DivisionByZero);
            }
            prefix.push(acc);
            acc = self.mul(acc, v);
        }
        let mut inv_acc = self.inv(acc)?;
        let mut out = vec![self.zero(); values.len()];
        for i in (0..values.len()).rev() {
            out[i] = self.mul(inv_acc, prefix[i]);
            inv_acc = self.mul(inv_acc, values[i]);
        }
        Ok(out)
    }

    /// Dot product of two equal-length slices.
    pub fn dot(&self, a: &[FieldElement], b: &[FieldElement]) -> FieldElement {
        debug_assert_eq!(a.len(), b.len());
        // Accumulate in u128 and reduce only when the next product could overflow.
        let q = self.q as u128;
        let mut acc: u128 = 0;
        for (x, y) in a.iter().zip(b) {
            acc += x.0 as u128 * y.0 as u128;
            if acc >= (1u128 << 126) {
                acc %= q;
            }
        }
        FieldElement((acc % q) as u64)
    }

    /// `sum (a_k - scale * b_k)^2`, the coded squared distance kernel.
    pub fn squared_distance_scaled(
        &self,
        a: &[FieldElement],
        scale: FieldElement,
        b: &[FieldElement],
    ) -> FieldElement {
        let q = self.q as u128;
        let mut acc: u128 = 0;
        for (x, y) in a.iter().zip(b) {
            let diff = self.sub(*x, self.mul(scale, *y)).0 as u128;
            acc += diff * diff;
            if acc >= (1u128 << 126) {
                acc %= q;
            }
        }
        FieldElement((acc % q) as u64)
    }

    pub fn add_assign_vec(&self, acc: &mut [FieldElement], other: &[FieldElement]) {
        for (a, b) in acc.iter_mut().zip(other) {
            *a = self.add(*a, *b);
        }
    }

    pub fn scale_vec(&self, v: &[FieldElement], s: FieldElement) -> Vec<FieldElement> {
        v.iter().map(|&x| self.mul(x, s)).collect()
    }

    pub fn random<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement(rng.random_range(0..self.q))
    }
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut r = 1u64;
        b %= n;
        while e > 0 {
            if e & 1 == 1 {
                r = mulmod(r, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        r
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest odd prime strictly greater than `n`.
pub fn next_prime_above(n: u64) -> u64 {
    let mut c = n.max(2) + 1;
    if c % 2 == 0 {
        c += 1;
    }
    while !is_prime(c) {
        c += 2;
    }
    c
}

/// Field-size lower bound `2 * lambda^2 * D` (rounded up) that keeps every
/// degree-2 result of magnitude at most `D` (in real units) inside
/// `(-q/2, q/2)`.
pub fn min_modulus(lambda: u64, max_squared: f64) -> u128 {
    let l = lambda as f64;
    (2.0 * l * l * max_squared).ceil() as u128
}

/// Default scaling factor.
pub const DEFAULT_LAMBDA: u64 = 1_000;
/// Default floor for the modulus before the overflow bound is applied.
pub const DEFAULT_MODULUS_FLOOR: u128 = 10_000_000_000;

/// Default field: the smallest prime above `max(10^10, min_modulus)`.
pub fn default_field(lambda: u64, max_squared: f64) -> Result<PrimeField, FieldError> {
    PrimeField::above(DEFAULT_MODULUS_FLOOR.max(min_modulus(lambda, max_squared)))
}

/// Scaling factor and range bound of the real-to-field embedding.
///
/// `eta` is always derived as `lambda * max_abs`, where `max_abs` is the
/// caller's bound on the magnitude of any input entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    lambda: u64,
    eta: f64,
}

impl QuantConfig {
    pub fn new(lambda: u64, max_abs: f64) -> Result<Self, FieldError> {
        if lambda == 0 {
            return Err(FieldError::BadQuantConfig("lambda must be >= 1".into()));
        }
        if !(max_abs.is_finite() && max_abs > 0.0) {
            return Err(FieldError::BadQuantConfig(format!(
                "input bound must be positive and finite, got {max_abs}"
            )));
        }
        Ok(Self { lambda, eta: lambda as f64 * max_abs })
    }

    #[inline]
    pub fn lambda(&self) -> u64 {
        self.lambda
    }

    #[inline]
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Checks `2 * eta < q`.
    pub fn check_field(&self, field: &PrimeField) -> Result<(), FieldError> {
        if 2.0 * self.eta >= field.modulus() as f64 {
            return Err(FieldError::EtaTooLarge { two_eta: 2.0 * self.eta, q: field.modulus() });
        }
        Ok(())
    }
}

/// Element-wise `floor(lambda x)` for `x >= 0`, `floor(q + lambda x)` otherwise.
pub fn quantize(
    x: &[f64],
    cfg: &QuantConfig,
    field: &PrimeField,
) -> Result<Vec<FieldElement>, FieldError> {
    cfg.check_field(field)?;
    let lambda = cfg.lambda as f64;
    let q = field.modulus();
    x.iter()
        .enumerate()
        .map(|(index, &v)| {
            let scaled = lambda * v;
            if !scaled.is_finite() || scaled < -cfg.eta || scaled >= cfg.eta {
                return Err(FieldError::RangeExceeded { index, scaled, eta: cfg.eta });
            }
            let floored = scaled.floor() as i64;
            Ok(if v >= 0.0 {
                FieldElement(floored as u64)
            } else {
                // floor(q + lambda x) = q + floor(lambda x)
                FieldElement((q as i64 + floored) as u64 % q)
            })
        })
        .collect()
}

/// Inverse of [`quantize`] for values that accumulated `degree` factors of
/// `lambda`. The admissible magnitude is `eta^degree`, capped at the field
/// midpoint.
pub fn dequantize(
    v: &[FieldElement],
    cfg: &QuantConfig,
    field: &PrimeField,
    degree: u32,
) -> Result<Vec<f64>, FieldError> {
    let bound = cfg.eta.powi(degree as i32);
    let bound = if bound >= field.half() as f64 {
        field.half() as u128
    } else {
        bound.ceil() as u128
    };
    dequantize_bounded(v, cfg, field, degree, bound)
}

/// Like [`dequantize`] with an explicit magnitude bound on the scaled values:
/// residues in `[0, bound)` decode as positive, those in `(q - bound, q)` as
/// negative, anything in between is reported as an overflow.
pub fn dequantize_bounded(
    v: &[FieldElement],
    cfg: &QuantConfig,
    field: &PrimeField,
    degree: u32,
    bound: u128,
) -> Result<Vec<f64>, FieldError> {
    let q = field.modulus() as u128;
    let bound = bound.min(field.half() as u128);
    let scale = (cfg.lambda as f64).powi(degree as i32);
    v.iter()
        .enumerate()
        .map(|(index, &e)| {
            let val = e.value() as u128;
            if val < bound {
                Ok(val as f64 / scale)
            } else if val > q - bound {
                Ok(-((q - val) as f64) / scale)
            } else {
                Err(FieldError::AmbiguousValue { index, value: e.value() })
            }
        })
        .collect()
}
