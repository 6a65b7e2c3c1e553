//! Masking polynomials and Shamir-style shares of model vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::field::{lagrange_interpolate_at_zero, poly_eval, EvalPoint, FieldSpec, ModelVector};

/// The `T` uniform masking vectors of one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseSet {
    vectors: Vec<ModelVector>,
}

impl NoiseSet {
    pub fn new(vectors: Vec<ModelVector>) -> Self {
        Self { vectors }
    }

    /// Draws `count` vectors of length `len` uniformly from `F_p^len`.
    pub fn sample<R: Rng + ?Sized>(
        spec: FieldSpec,
        count: usize,
        len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let p = spec.modulus();
        let vectors = (0..count)
            .map(|_| ModelVector::new(spec, (0..len).map(|_| rng.gen_range(0..p)).collect()))
            .collect::<Result<_>>()?;
        Ok(Self { vectors })
    }

    pub fn zeros(spec: FieldSpec, count: usize, len: usize) -> Result<Self> {
        let vectors = (0..count)
            .map(|_| ModelVector::zeros(spec, len))
            .collect::<Result<_>>()?;
        Ok(Self { vectors })
    }

    pub fn vectors(&self) -> &[ModelVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Per-user generator: stream `user` of a ChaCha20 keyed by the run seed.
pub fn user_rng(run_seed: u64, user: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(run_seed);
    rng.set_stream(user as u64);
    rng
}

/// `F_n(x) = W_n + sum_{j=1..T} Z_{n,j} x^j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharePolynomial {
    coeffs: Vec<ModelVector>,
}

impl SharePolynomial {
    pub fn coeffs(&self) -> &[ModelVector] {
        &self.coeffs
    }

    pub fn model(&self) -> &ModelVector {
        &self.coeffs[0]
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: crate::field::FieldElement) -> Result<ModelVector> {
        poly_eval(&self.coeffs, x)
    }
}

/// Builds the masking polynomial with the model as constant term.
pub fn build_polynomial(
    model: ModelVector,
    noise: &NoiseSet,
    threshold: usize,
) -> Result<SharePolynomial> {
    if noise.len() != threshold {
        return Err(Error::ArityMismatch {
            expected: threshold,
            got: noise.len(),
        });
    }
    let mut coeffs = Vec::with_capacity(threshold + 1);
    coeffs.push(model);
    for z in noise.vectors() {
        if z.spec() != coeffs[0].spec() {
            return Err(Error::MixedField(
                coeffs[0].spec().modulus(),
                z.spec().modulus(),
            ));
        }
        if z.len() != coeffs[0].len() {
            return Err(Error::LengthMismatch(coeffs[0].len(), z.len()));
        }
        coeffs.push(z.clone());
    }
    Ok(SharePolynomial { coeffs })
}

pub fn share_for(poly: &SharePolynomial, point: EvalPoint) -> Result<ModelVector> {
    poly.eval(point.alpha())
}

/// Constant term of the degree-`<= threshold` interpolant through `uploads`.
pub fn reconstruct_aggregate(
    uploads: &[(EvalPoint, ModelVector)],
    threshold: usize,
) -> Result<ModelVector> {
    lagrange_interpolate_at_zero(uploads, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::vec_sum;

    fn f(p: u64) -> FieldSpec {
        FieldSpec::new(p).unwrap()
    }

    fn v(p: u64, xs: &[u64]) -> ModelVector {
        ModelVector::new(f(p), xs.to_vec()).unwrap()
    }

    #[test]
    fn linear_share_examples() {
        let poly = build_polynomial(v(7, &[3]), &NoiseSet::new(vec![v(7, &[2])]), 1).unwrap();
        let at = |x| share_for(&poly, EvalPoint::for_index(f(7), x).unwrap()).unwrap();
        assert_eq!(at(1), v(7, &[5]));
        assert_eq!(at(2), v(7, &[0]));
        assert_eq!(poly.eval(f(7).zero()).unwrap(), v(7, &[3]));
    }

    #[test]
    fn zero_polynomial_gives_zero_shares() {
        let spec = f(7);
        let poly = build_polynomial(
            ModelVector::zeros(spec, 3).unwrap(),
            &NoiseSet::zeros(spec, 2, 3).unwrap(),
            2,
        )
        .unwrap();
        for t in 1..7 {
            assert!(share_for(&poly, EvalPoint::for_index(spec, t).unwrap())
                .unwrap()
                .is_zero());
        }
    }

    #[test]
    fn constant_term_is_model_for_any_noise() {
        let spec = f(7);
        let w = v(7, &[6, 1]);
        let mut rng = user_rng(9, 1);
        for _ in 0..20 {
            let noise = NoiseSet::sample(spec, 2, 2, &mut rng).unwrap();
            let poly = build_polynomial(w.clone(), &noise, 2).unwrap();
            assert_eq!(poly.eval(spec.zero()).unwrap(), w);
            assert_eq!(poly.degree(), 2);
        }
    }

    #[test]
    fn arity_is_checked() {
        let spec = f(7);
        let noise = NoiseSet::zeros(spec, 1, 1).unwrap();
        assert_eq!(
            build_polynomial(v(7, &[1]), &noise, 2),
            Err(Error::ArityMismatch {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn aggregate_of_shares_reconstructs_sum() {
        let spec = f(101);
        let threshold = 2;
        let models: Vec<_> = (0..5).map(|i| v(101, &[i * 13, 100 - i])).collect();
        let polys: Vec<_> = models
            .iter()
            .enumerate()
            .map(|(n, w)| {
                let noise = NoiseSet::sample(spec, threshold, 2, &mut user_rng(4, n)).unwrap();
                build_polynomial(w.clone(), &noise, threshold).unwrap()
            })
            .collect();
        let uploads: Vec<_> = (1..=5)
            .map(|t| {
                let a = EvalPoint::for_index(spec, t).unwrap();
                let shares: Vec<_> = polys.iter().map(|p| share_for(p, a).unwrap()).collect();
                (a, vec_sum(&shares).unwrap().unwrap())
            })
            .collect();
        let oracle = vec_sum(&models).unwrap().unwrap();
        // any T+1 window
        for start in 0..=2 {
            let r = reconstruct_aggregate(&uploads[start..start + 3], threshold).unwrap();
            assert_eq!(r, oracle);
        }
        assert_eq!(reconstruct_aggregate(&uploads, threshold).unwrap(), oracle);
    }

    #[test]
    fn zero_models_reconstruct_zero() {
        let spec = f(11);
        let polys: Vec<_> = (0..3)
            .map(|n| {
                let noise = NoiseSet::sample(spec, 1, 1, &mut user_rng(1, n)).unwrap();
                build_polynomial(v(11, &[0]), &noise, 1).unwrap()
            })
            .collect();
        let uploads: Vec<_> = (1..=2)
            .map(|t| {
                let a = EvalPoint::for_index(spec, t).unwrap();
                let s: Vec<_> = polys.iter().map(|p| share_for(p, a).unwrap()).collect();
                (a, vec_sum(&s).unwrap().unwrap())
            })
            .collect();
        assert!(reconstruct_aggregate(&uploads, 1).unwrap().is_zero());
    }

    #[test]
    fn user_streams_are_distinct_and_reproducible() {
        let spec = f((1 << 31) - 1);
        let a = NoiseSet::sample(spec, 2, 4, &mut user_rng(7, 1)).unwrap();
        let b = NoiseSet::sample(spec, 2, 4, &mut user_rng(7, 1)).unwrap();
        let c = NoiseSet::sample(spec, 2, 4, &mut user_rng(7, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
