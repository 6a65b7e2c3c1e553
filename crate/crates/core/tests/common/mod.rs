#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use swiftagg::field::vec_sum;
use swiftagg::{FieldSpec, ModelVector, ProtocolParams};

pub const MOTIVATING_SEED: u64 = 12;

/// N=12, T=2, D=1 over the Mersenne prime 2^31-1 with L=2.
pub fn motivating_params() -> ProtocolParams {
    ProtocolParams::new(12, 2, 1, 2, FieldSpec::new((1 << 31) - 1).unwrap()).unwrap()
}

/// W_n = [n, 1000 + n].
pub fn motivating_models(params: &ProtocolParams) -> Vec<ModelVector> {
    (1..=params.users as u64)
        .map(|n| ModelVector::new(params.field, vec![n, 1000 + n]).unwrap())
        .collect()
}

pub fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/motivating_example.log")
}

/// Plain field sum over `users`.
pub fn sum_of(models: &[ModelVector], users: &BTreeSet<usize>) -> ModelVector {
    let picked: Vec<_> = users.iter().map(|&u| models[u - 1].clone()).collect();
    vec_sum(&picked)
        .unwrap()
        .unwrap_or_else(|| ModelVector::zeros(models[0].spec(), models[0].len()).unwrap())
}
