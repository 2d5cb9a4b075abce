//! Dense univariate polynomials over a [`PrimeField`], coefficients stored
//! lowest degree first. Only what the decoders need.

use crate::field::{FieldElement, PrimeField};

pub(crate) type Poly = Vec<FieldElement>;

pub(crate) fn trim(p: &mut Poly) {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
}

/// Degree of a trimmed polynomial; the zero polynomial has degree `None`.
pub(crate) fn degree(p: &Poly) -> Option<usize> {
    p.iter().rposition(|c| !c.is_zero())
}

pub(crate) fn eval(f: &PrimeField, p: &[FieldElement], x: FieldElement) -> FieldElement {
    p.iter().rev().fold(f.zero(), |acc, &c| f.add(f.mul(acc, x), c))
}

pub(crate) fn sub(f: &PrimeField, a: &Poly, b: &Poly) -> Poly {
    let mut out = vec![f.zero(); a.len().max(b.len())];
    for (i, c) in a.iter().enumerate() {
        out[i] = *c;
    }
    for (i, c) in b.iter().enumerate() {
        out[i] = f.sub(out[i], *c);
    }
    trim(&mut out);
    out
}

pub(crate) fn mul(f: &PrimeField, a: &Poly, b: &Poly) -> Poly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![f.zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] = f.add(out[i + j], f.mul(*x, *y));
        }
    }
    trim(&mut out);
    out
}

/// Euclidean division `a = q * b + r` with `deg r < deg b`.
pub(crate) fn divrem(f: &PrimeField, a: &Poly, b: &Poly) -> (Poly, Poly) {
    let db = degree(b).expect("division by the zero polynomial");
    let mut r = a.clone();
    trim(&mut r);
    let lead_inv = f.inv(b[db]).expect("trimmed leading coefficient is non-zero");
    let mut q = vec![f.zero(); r.len().saturating_sub(db).max(1)];
    while let Some(dr) = degree(&r) {
        if dr < db {
            break;
        }
        let coef = f.mul(r[dr], lead_inv);
        let shift = dr - db;
        q[shift] = coef;
        for (i, c) in b.iter().enumerate().take(db + 1) {
            r[shift + i] = f.sub(r[shift + i], f.mul(coef, *c));
        }
        trim(&mut r);
    }
    trim(&mut q);
    (q, r)
}

/// `prod (x - r)` over the given roots.
pub(crate) fn from_roots(f: &PrimeField, roots: &[FieldElement]) -> Poly {
    let mut p = vec![f.one()];
    for &r in roots {
        let mut next = vec![f.zero(); p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            next[i + 1] = f.add(next[i + 1], *c);
            next[i] = f.sub(next[i], f.mul(r, *c));
        }
        p = next;
    }
    p
}

/// Newton-form interpolation through `(xs[i], ys[i])`, returned in monomial
/// basis. The `xs` must be pairwise distinct.
pub(crate) fn interpolate(f: &PrimeField, xs: &[FieldElement], ys: &[FieldElement]) -> Poly {
    let m = xs.len();
    let mut coef = ys.to_vec();
    for level in 1..m {
        for i in (level..m).rev() {
            let num = f.sub(coef[i], coef[i - 1]);
            let den = f.sub(xs[i], xs[i - level]);
            coef[i] = f.mul(num, f.inv(den).expect("interpolation nodes are distinct"));
        }
    }
    // Horner on the Newton basis.
    let mut p: Poly = vec![coef[m - 1]];
    for i in (0..m - 1).rev() {
        // p = p * (x - xs[i]) + coef[i]
        let mut next = vec![f.zero(); p.len() + 1];
        for (k, c) in p.iter().enumerate() {
            next[k + 1] = f.add(next[k + 1], *c);
            next[k] = f.sub(next[k], f.mul(xs[i], *c));
        }
        next[0] = f.add(next[0], coef[i]);
        p = next;
    }
    trim(&mut p);
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_recovers_polynomial() {
        let f = PrimeField::new(10_007).unwrap();
        let p: Poly = [3u64, 0, 7, 1].iter().map(|&c| f.elem(c)).collect();
        let xs: Vec<_> = (1..=4).map(|v| f.elem(v)).collect();
        let ys: Vec<_> = xs.iter().map(|&x| eval(&f, &p, x)).collect();
        assert_eq!(interpolate(&f, &xs, &ys), p);
    }

    #[test]
    fn division_identity() {
        let f = PrimeField::new(97).unwrap();
        let a: Poly = [5u64, 3, 0, 9, 2, 1].iter().map(|&c| f.elem(c)).collect();
        let b: Poly = [1u64, 4, 6].iter().map(|&c| f.elem(c)).collect();
        let (q, r) = divrem(&f, &a, &b);
        assert!(degree(&r).map_or(true, |d| d < 2));
        let mut back = mul(&f, &q, &b);
        back.resize(a.len(), f.zero());
        for (i, c) in r.iter().enumerate() {
            back[i] = f.add(back[i], *c);
        }
        assert_eq!(back, a);
    }

    #[test]
    fn roots_vanish() {
        let f = PrimeField::new(97).unwrap();
        let roots: Vec<_> = [2u64, 5, 11].iter().map(|&c| f.elem(c)).collect();
        let p = from_roots(&f, &roots);
        assert_eq!(p.len(), 4);
        for r in roots {
            assert!(eval(&f, &p, r).is_zero());
        }
    }
}
