//! Exact arithmetic over a prime field `F_p`, vectors over `F_p^L`, and
//! interpolation of vector-valued polynomials.
//!
//! Elements are stored as canonical residues in `[0, p)`. Products are
//! formed in `u128`, so every operation is exact for the supported modulus
//! range.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// A prime modulus `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FieldSpec {
    modulus: u64,
}

impl FieldSpec {
    /// Exclusive upper bound on supported moduli.
    pub const MAX_MODULUS: u64 = 1 << 40;

    pub fn new(modulus: u64) -> Result<Self> {
        if !(2..Self::MAX_MODULUS).contains(&modulus) {
            return Err(Error::ModulusOutOfRange(modulus));
        }
        if !is_prime(modulus) {
            return Err(Error::NotPrime(modulus));
        }
        Ok(Self { modulus })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Reduces `value` modulo `p`.
    pub fn element(&self, value: u64) -> FieldElement {
        FieldElement {
            value: value % self.modulus,
            spec: *self,
        }
    }

    pub fn zero(&self) -> FieldElement {
        self.element(0)
    }

    pub fn one(&self) -> FieldElement {
        self.element(1)
    }

    #[inline]
    pub(crate) fn add_raw(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.modulus {
            s - self.modulus
        } else {
            s
        }
    }

    #[inline]
    pub(crate) fn sub_raw(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.modulus - b
        }
    }

    #[inline]
    pub(crate) fn mul_raw(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.modulus as u128) as u64
    }

    pub(crate) fn pow_raw(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.modulus;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul_raw(acc, base);
            }
            base = self.mul_raw(base, base);
            exp >>= 1;
        }
        acc
    }

    pub(crate) fn inv_raw(&self, a: u64) -> Result<u64> {
        if a == 0 {
            return Err(Error::DivisionByZero);
        }
        Ok(self.pow_raw(a, self.modulus - 2))
    }

    fn check(&self, other: &FieldSpec) -> Result<()> {
        if self != other {
            return Err(Error::MixedField(self.modulus, other.modulus));
        }
        Ok(())
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}", self.modulus)
    }
}

/// Trial division up to `sqrt(n)`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n.is_multiple_of(2) || n.is_multiple_of(3) {
        return false;
    }
    let mut d = 5u64;
    while d * d <= n {
        if n.is_multiple_of(d) || n.is_multiple_of(d + 2) {
            return false;
        }
        d += 6;
    }
    true
}

/// An element of `F_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    spec: FieldSpec,
}

impl FieldElement {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    pub fn pow(&self, exp: u64) -> FieldElement {
        FieldElement {
            value: self.spec.pow_raw(self.value, exp),
            spec: self.spec,
        }
    }

    pub fn neg(&self) -> FieldElement {
        FieldElement {
            value: self.spec.sub_raw(0, self.value),
            spec: self.spec,
        }
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

pub fn field_add(a: FieldElement, b: FieldElement) -> Result<FieldElement> {
    a.spec.check(&b.spec)?;
    Ok(FieldElement {
        value: a.spec.add_raw(a.value, b.value),
        spec: a.spec,
    })
}

pub fn field_sub(a: FieldElement, b: FieldElement) -> Result<FieldElement> {
    a.spec.check(&b.spec)?;
    Ok(FieldElement {
        value: a.spec.sub_raw(a.value, b.value),
        spec: a.spec,
    })
}

pub fn field_mul(a: FieldElement, b: FieldElement) -> Result<FieldElement> {
    a.spec.check(&b.spec)?;
    Ok(FieldElement {
        value: a.spec.mul_raw(a.value, b.value),
        spec: a.spec,
    })
}

/// Multiplicative inverse; `DivisionByZero` for 0.
pub fn field_inv(a: FieldElement) -> Result<FieldElement> {
    Ok(FieldElement {
        value: a.spec.inv_raw(a.value)?,
        spec: a.spec,
    })
}

/// A vector in `F_p^L` with `L >= 1`. All entries share one modulus.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelVector {
    spec: FieldSpec,
    entries: Vec<u64>,
}

impl ModelVector {
    /// Builds a vector, reducing every entry modulo `p`.
    pub fn new(spec: FieldSpec, values: Vec<u64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        let p = spec.modulus();
        let entries = values.into_iter().map(|v| v % p).collect();
        Ok(Self { spec, entries })
    }

    pub fn from_elements(elements: &[FieldElement]) -> Result<Self> {
        let first = elements.first().ok_or(Error::EmptyVector)?;
        let spec = first.spec;
        let mut entries = Vec::with_capacity(elements.len());
        for e in elements {
            spec.check(&e.spec)?;
            entries.push(e.value);
        }
        Ok(Self { spec, entries })
    }

    pub fn zeros(spec: FieldSpec, len: usize) -> Result<Self> {
        Self::new(spec, vec![0; len])
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<FieldElement> {
        self.entries.get(i).map(|&value| FieldElement {
            value,
            spec: self.spec,
        })
    }

    pub fn values(&self) -> &[u64] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0)
    }

    fn compatible(&self, other: &ModelVector) -> Result<()> {
        self.spec.check(&other.spec)?;
        if self.len() != other.len() {
            return Err(Error::LengthMismatch(self.len(), other.len()));
        }
        Ok(())
    }

    /// `self += other`, entrywise.
    pub fn add_assign(&mut self, other: &ModelVector) -> Result<()> {
        self.compatible(other)?;
        let spec = self.spec;
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            *a = spec.add_raw(*a, b);
        }
        Ok(())
    }

    pub fn add(&self, other: &ModelVector) -> Result<ModelVector> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &ModelVector) -> Result<ModelVector> {
        self.compatible(other)?;
        let spec = self.spec;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| spec.sub_raw(a, b))
            .collect();
        Ok(ModelVector { spec, entries })
    }

    pub fn scale(&self, k: FieldElement) -> Result<ModelVector> {
        self.spec.check(&k.spec)?;
        let spec = self.spec;
        let entries = self
            .entries
            .iter()
            .map(|&a| spec.mul_raw(a, k.value))
            .collect();
        Ok(ModelVector { spec, entries })
    }

    /// `self += k * other`.
    fn add_scaled(&mut self, other: &ModelVector, k: u64) {
        let spec = self.spec;
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            *a = spec.add_raw(*a, spec.mul_raw(b, k));
        }
    }
}

impl fmt::Display for ModelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

pub fn vec_add(a: &ModelVector, b: &ModelVector) -> Result<ModelVector> {
    a.add(b)
}

/// Sums a nonempty sequence of vectors.
pub fn vec_sum<'a, I>(vectors: I) -> Result<Option<ModelVector>>
where
    I: IntoIterator<Item = &'a ModelVector>,
{
    let mut acc: Option<ModelVector> = None;
    for v in vectors {
        match acc.as_mut() {
            Some(a) => a.add_assign(v)?,
            None => acc = Some(v.clone()),
        }
    }
    Ok(acc)
}

/// A nonzero abscissa at which a share is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EvalPoint(FieldElement);

impl EvalPoint {
    pub fn new(alpha: FieldElement) -> Result<Self> {
        if alpha.is_zero() {
            return Err(Error::ZeroEvaluationPoint);
        }
        Ok(Self(alpha))
    }

    /// The canonical point `alpha_t = t` for sequence index `t`.
    pub fn for_index(spec: FieldSpec, t: usize) -> Result<Self> {
        Self::new(spec.element(t as u64))
    }

    pub fn alpha(&self) -> FieldElement {
        self.0
    }
}

/// Horner evaluation of `sum_j coeffs[j] * x^j`.
pub fn poly_eval(coeffs: &[ModelVector], x: FieldElement) -> Result<ModelVector> {
    let (last, rest) = coeffs.split_last().ok_or(Error::EmptyPolynomial)?;
    last.spec.check(&x.spec)?;
    let mut acc = last.clone();
    for c in rest.iter().rev() {
        acc.compatible(c)?;
        let spec = acc.spec;
        for (a, &b) in acc.entries.iter_mut().zip(&c.entries) {
            *a = spec.add_raw(spec.mul_raw(*a, x.value), b);
        }
    }
    Ok(acc)
}

/// Evaluates at `target` the unique polynomial of degree `< base.len()`
/// through `base`. Abscissae must be pairwise distinct.
fn interpolate_at(base: &[(EvalPoint, ModelVector)], target: u64) -> Result<ModelVector> {
    let spec = base[0].1.spec;
    let mut acc = ModelVector::zeros(spec, base[0].1.len())?;
    for (i, (xi, yi)) in base.iter().enumerate() {
        let xi = xi.0.value;
        let mut num = 1u64;
        let mut den = 1u64;
        for (j, (xj, _)) in base.iter().enumerate() {
            if i == j {
                continue;
            }
            let xj = xj.0.value;
            num = spec.mul_raw(num, spec.sub_raw(target, xj));
            den = spec.mul_raw(den, spec.sub_raw(xi, xj));
        }
        let weight = spec.mul_raw(num, spec.inv_raw(den)?);
        acc.add_scaled(yi, weight);
    }
    Ok(acc)
}

/// Recovers `P(0)` for the degree-`<= degree_bound` vector polynomial through
/// the first `degree_bound + 1` points. Any further points must lie on the
/// same polynomial, otherwise `ConsistencyError` is returned.
pub fn lagrange_interpolate_at_zero(
    points: &[(EvalPoint, ModelVector)],
    degree_bound: usize,
) -> Result<ModelVector> {
    let needed = degree_bound + 1;
    if points.len() < needed {
        return Err(Error::InsufficientPoints {
            needed,
            got: points.len(),
        });
    }
    let (x0, y0) = &points[0];
    let mut seen = HashSet::with_capacity(points.len());
    for (x, y) in points {
        x0.0.spec.check(&x.0.spec)?;
        y0.compatible(y)?;
        x0.0.spec.check(&y.spec)?;
        if !seen.insert(x.0.value) {
            return Err(Error::DuplicateAbscissa(x.0.value));
        }
    }
    let (base, surplus) = points.split_at(needed);
    for (x, y) in surplus {
        if interpolate_at(base, x.0.value)? != *y {
            return Err(Error::ConsistencyError(x.0.value, degree_bound));
        }
    }
    interpolate_at(base, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(p: u64) -> FieldSpec {
        FieldSpec::new(p).unwrap()
    }

    fn v(p: u64, xs: &[u64]) -> ModelVector {
        ModelVector::new(f(p), xs.to_vec()).unwrap()
    }

    fn pt(p: u64, x: u64, ys: &[u64]) -> (EvalPoint, ModelVector) {
        (EvalPoint::new(f(p).element(x)).unwrap(), v(p, ys))
    }

    #[test]
    fn rejects_composites_and_out_of_range() {
        assert_eq!(FieldSpec::new(9), Err(Error::NotPrime(9)));
        assert_eq!(FieldSpec::new(1), Err(Error::ModulusOutOfRange(1)));
        assert!(FieldSpec::new(FieldSpec::MAX_MODULUS + 1).is_err());
        assert!(FieldSpec::new(2).is_ok());
        assert!(FieldSpec::new((1 << 31) - 1).is_ok());
    }

    #[test]
    fn scalar_examples() {
        let p7 = f(7);
        assert_eq!(field_add(p7.element(3), p7.element(5)).unwrap().value(), 1);
        assert_eq!(field_inv(p7.element(1)).unwrap().value(), 1);
        let p11 = f(11);
        // brute force: the k with 3k = 1 mod 11
        let expected = (1..11).find(|k| (3 * k) % 11 == 1).unwrap();
        assert_eq!(expected, 4);
        assert_eq!(field_inv(p11.element(3)).unwrap().value(), expected);
        assert_eq!(field_inv(p11.zero()), Err(Error::DivisionByZero));
        assert_eq!(
            field_mul(p7.element(2), p11.element(2)),
            Err(Error::MixedField(7, 11))
        );
        assert_eq!(field_sub(p7.element(2), p7.element(5)).unwrap().value(), 4);
    }

    #[test]
    fn vector_examples() {
        assert_eq!(
            vec_add(&v(7, &[1, 2]), &v(7, &[6, 5])).unwrap(),
            v(7, &[0, 0])
        );
        assert_eq!(
            vec_add(&v(5, &[0, 0]), &v(5, &[3, 4])).unwrap(),
            v(5, &[3, 4])
        );
        assert_eq!(
            vec_add(&v(11, &[9, 9]), &v(11, &[9, 9])).unwrap(),
            v(11, &[7, 7])
        );
        assert_eq!(
            vec_add(&v(7, &[1]), &v(7, &[1, 2])),
            Err(Error::LengthMismatch(1, 2))
        );
        assert_eq!(ModelVector::new(f(7), vec![]), Err(Error::EmptyVector));
    }

    #[test]
    fn poly_eval_examples() {
        let p7 = f(7);
        let c = [v(7, &[3]), v(7, &[2])];
        assert_eq!(poly_eval(&c, p7.zero()).unwrap(), v(7, &[3]));
        assert_eq!(poly_eval(&c, p7.element(2)).unwrap(), v(7, &[0]));
        let p5 = f(5);
        let k = [v(5, &[4]), v(5, &[0]), v(5, &[0])];
        for x in 0..5 {
            assert_eq!(poly_eval(&k, p5.element(x)).unwrap(), v(5, &[4]));
        }
        assert_eq!(poly_eval(&[], p5.one()), Err(Error::EmptyPolynomial));
    }

    #[test]
    fn interpolation_examples() {
        let r = lagrange_interpolate_at_zero(&[pt(7, 1, &[4]), pt(7, 2, &[4])], 1).unwrap();
        assert_eq!(r, v(7, &[4]));
        let r = lagrange_interpolate_at_zero(&[pt(7, 1, &[1]), pt(7, 2, &[2])], 1).unwrap();
        assert_eq!(r, v(7, &[0]));
    }

    #[test]
    fn interpolation_errors() {
        assert_eq!(
            lagrange_interpolate_at_zero(&[pt(7, 1, &[1])], 1),
            Err(Error::InsufficientPoints { needed: 2, got: 1 })
        );
        assert_eq!(
            lagrange_interpolate_at_zero(&[pt(7, 1, &[1]), pt(7, 1, &[1])], 1),
            Err(Error::DuplicateAbscissa(1))
        );
        // P(x) = x through 1,2; the third point breaks it
        assert_eq!(
            lagrange_interpolate_at_zero(&[pt(7, 1, &[1]), pt(7, 2, &[2]), pt(7, 3, &[4])], 1),
            Err(Error::ConsistencyError(3, 1))
        );
        let ok = lagrange_interpolate_at_zero(&[pt(7, 1, &[1]), pt(7, 2, &[2]), pt(7, 3, &[3])], 1);
        assert_eq!(ok.unwrap(), v(7, &[0]));
        assert_eq!(EvalPoint::new(f(7).zero()), Err(Error::ZeroEvaluationPoint));
    }

    #[test]
    fn degree_two_round_trip_p101() {
        let p = f(101);
        let coeffs = [v(101, &[17, 3]), v(101, &[88, 0]), v(101, &[5, 100])];
        let points: Vec<_> = (1..=3)
            .map(|x| {
                let e = p.element(x);
                (EvalPoint::new(e).unwrap(), poly_eval(&coeffs, e).unwrap())
            })
            .collect();
        assert_eq!(lagrange_interpolate_at_zero(&points, 2).unwrap(), coeffs[0]);
    }

    const PRIMES: [u64; 5] = [5, 7, 11, 101, (1 << 31) - 1];

    proptest! {
        #[test]
        fn field_axioms(pi in 0usize..5, a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
            let p = f(PRIMES[pi]);
            let (a, b, c) = (p.element(a), p.element(b), p.element(c));
            let add = |x, y| field_add(x, y).unwrap();
            let mul = |x, y| field_mul(x, y).unwrap();
            prop_assert_eq!(add(add(a, b), c), add(a, add(b, c)));
            prop_assert_eq!(mul(mul(a, b), c), mul(a, mul(b, c)));
            prop_assert_eq!(add(a, b), add(b, a));
            prop_assert_eq!(mul(a, b), mul(b, a));
            prop_assert_eq!(mul(a, add(b, c)), add(mul(a, b), mul(a, c)));
            prop_assert_eq!(field_sub(add(a, b), b).unwrap(), a);
            if !a.is_zero() {
                prop_assert_eq!(mul(a, field_inv(a).unwrap()), p.one());
            }
        }

        #[test]
        fn eval_at_zero_is_constant_term(
            pi in 0usize..5,
            raw in prop::collection::vec(prop::collection::vec(any::<u64>(), 3), 1..6),
        ) {
            let p = f(PRIMES[pi]);
            let coeffs: Vec<_> = raw.into_iter().map(|c| ModelVector::new(p, c).unwrap()).collect();
            prop_assert_eq!(poly_eval(&coeffs, p.zero()).unwrap(), coeffs[0].clone());
        }

        #[test]
        fn interpolation_round_trip(
            pi in 0usize..5,
            degree in 0usize..4,
            seed in prop::collection::vec(any::<u64>(), 8),
            shift in 0u64..1000,
        ) {
            let p = f(PRIMES[pi]);
            // need degree+1 distinct nonzero points
            prop_assume!((degree as u64) < p.modulus() - 1);
            let coeffs: Vec<_> = (0..=degree)
                .map(|j| ModelVector::new(p, vec![seed[j], seed[j + 4]]).unwrap())
                .collect();
            let n = p.modulus() - 1;
            let points: Vec<_> = (0..=degree as u64)
                .map(|k| {
                    let x = p.element((shift + k) % n + 1);
                    (EvalPoint::new(x).unwrap(), poly_eval(&coeffs, x).unwrap())
                })
                .collect();
            prop_assert_eq!(lagrange_interpolate_at_zero(&points, degree).unwrap(), coeffs[0].clone());
        }
    }
}
