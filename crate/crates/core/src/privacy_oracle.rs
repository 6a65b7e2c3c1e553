//! Exhaustive privacy checks on tiny instances.
//!
//! Every assignment of models and noise is run through the real protocol and
//! the adversary view is recorded with exact integer counts. Zero mutual
//! information between honest models and the view, given the honest
//! aggregate, is equivalent to the view distribution being count-for-count
//! identical across all honest assignments that share an aggregate.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{EvalPoint, FieldSpec, ModelVector};
use crate::protocol::{assign_groups, GroupLayout, GroupPosition, ProtocolParams};
use crate::sharing::{build_polynomial, share_for, NoiseSet};
use crate::simnet::{simulate_with, AdversaryConfig, DropoutPlan};

/// Upper bound on `p^(N(1+T))`.
pub const ENUMERATION_GUARD: u128 = 1_000_000_000;

/// How noise is drawn during enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// All noise symbols range over the field.
    Uniform,
    /// Every noise vector is zero (negative control).
    Zero,
}

#[derive(Debug, Clone, Serialize)]
pub struct TinyInstance {
    pub params: ProtocolParams,
    pub plan: DropoutPlan,
    pub adversary: AdversaryConfig,
    pub noise_mode: NoiseMode,
}

impl TinyInstance {
    pub fn new(
        params: ProtocolParams,
        plan: DropoutPlan,
        adversary: AdversaryConfig,
        noise_mode: NoiseMode,
    ) -> Result<Self> {
        params.validate()?;
        plan.validate(&params)?;
        adversary.validate(&params)?;
        let p = params.field.modulus();
        if params.model_len != 1 || p > 7 || params.users > 6 || params.threshold > 2 {
            return Err(Error::InvalidParams(format!(
                "tiny instances need L=1, p<=7, N<=6, T<=2 (got L={}, p={p}, N={}, T={})",
                params.model_len, params.users, params.threshold
            )));
        }
        let size = enumeration_size(&params);
        if size > ENUMERATION_GUARD {
            return Err(Error::TooLarge {
                size,
                guard: ENUMERATION_GUARD,
            });
        }
        Ok(Self {
            params,
            plan,
            adversary,
            noise_mode,
        })
    }

    fn contributes(&self, user: usize) -> bool {
        self.plan
            .victims()
            .get(&user)
            .is_none_or(|t| t.shares_distributed())
    }
}

/// `p^(N(1+T))`, saturating.
pub fn enumeration_size(params: &ProtocolParams) -> u128 {
    let p = params.field.modulus() as u128;
    let exp = (params.users * (1 + params.threshold)) as u32;
    p.checked_pow(exp).unwrap_or(u128::MAX)
}

/// Base-`p` digits of `index`, least significant first.
fn digits(mut index: u64, p: u64, len: usize) -> Vec<u64> {
    (0..len)
        .map(|_| {
            let d = index % p;
            index /= p;
            d
        })
        .collect()
}

/// View counts for one honest model assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentViews {
    /// Models of the honest users, in user-id order.
    pub honest_models: Vec<u64>,
    /// Sum of models of honest users that contribute to the aggregate.
    pub aggregate: u64,
    pub views: HashMap<Vec<u64>, u64>,
}

#[derive(Debug, Clone)]
pub struct ViewDistribution {
    pub honest_users: Vec<usize>,
    pub runs_per_assignment: u64,
    pub assignments: Vec<AssignmentViews>,
}

/// Runs the protocol for every model and noise assignment and tallies views.
pub fn enumerate_views(instance: &TinyInstance) -> Result<ViewDistribution> {
    let params = &instance.params;
    let spec = params.field;
    let p = spec.modulus();
    let n = params.users;
    let t = params.threshold;
    let layout = assign_groups(params)?;
    let honest: Vec<usize> = (1..=n)
        .filter(|u| !instance.adversary.colluders.contains(u))
        .collect();
    let colluders: Vec<usize> = instance.adversary.colluders.iter().copied().collect();
    let noise_symbols = match instance.noise_mode {
        NoiseMode::Uniform => n * t,
        NoiseMode::Zero => 0,
    };
    let inner_symbols = colluders.len() + noise_symbols;
    let inner_runs = p.pow(inner_symbols as u32);
    let honest_runs = p.pow(honest.len() as u32);

    let assignments = (0..honest_runs)
        .into_par_iter()
        .map(|hi| -> Result<AssignmentViews> {
            let hw = digits(hi, p, honest.len());
            let aggregate = honest
                .iter()
                .zip(&hw)
                .filter(|(&u, _)| instance.contributes(u))
                .fold(0, |acc, (_, &w)| (acc + w) % p);
            let mut views = HashMap::new();
            let mut models = vec![0u64; n];
            for (&u, &w) in honest.iter().zip(&hw) {
                models[u - 1] = w;
            }
            for ii in 0..inner_runs {
                let sym = digits(ii, p, inner_symbols);
                for (&u, &w) in colluders.iter().zip(&sym) {
                    models[u - 1] = w;
                }
                let noise_vals = &sym[colluders.len()..];
                let model_vecs = models
                    .iter()
                    .map(|&w| ModelVector::new(spec, vec![w]))
                    .collect::<Result<Vec<_>>>()?;
                let noise = (0..n)
                    .map(|u| {
                        let vs = (0..t)
                            .map(|j| {
                                let v = noise_vals.get(u * t + j).copied().unwrap_or(0);
                                ModelVector::new(spec, vec![v])
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Ok(NoiseSet::new(vs))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let out = simulate_with(
                    params,
                    &layout,
                    &model_vecs,
                    &noise,
                    &instance.plan,
                    &instance.adversary,
                )?;
                *views.entry(out.view.canonical()).or_insert(0) += 1;
            }
            Ok(AssignmentViews {
                honest_models: hw,
                aggregate,
                views,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ViewDistribution {
        honest_users: honest,
        runs_per_assignment: inner_runs,
        assignments,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Two honest assignments with equal aggregate whose views differ.
    View {
        aggregate: u64,
        honest_users: Vec<usize>,
        models_a: Vec<u64>,
        models_b: Vec<u64>,
        view: Vec<u64>,
        count_a: u64,
        count_b: u64,
    },
    /// Joint count of `(Z~_(γ,t), Z~_(γ+1,t))` differs from the product of
    /// marginals.
    NoiseChain {
        gamma: usize,
        t: usize,
        x: u64,
        y: u64,
        joint_times_total: u128,
        marginal_product: u128,
    },
    /// Share tuple whose count depends on the secret.
    Shares {
        points: Vec<u64>,
        secret_a: u64,
        secret_b: u64,
        shares: Vec<u64>,
        count_a: u64,
        count_b: u64,
    },
}

/// Exact outcome of an independence check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Independent,
    Dependent { witness: Witness },
}

impl Verdict {
    pub fn is_independent(&self) -> bool {
        matches!(self, Verdict::Independent)
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::Independent => None,
            Verdict::Dependent { witness } => Some(witness),
        }
    }
}

/// Compares view multisets across honest assignments with equal aggregate.
pub fn check_conditional_independence(dist: &ViewDistribution) -> Verdict {
    let mut reference: BTreeMap<u64, &AssignmentViews> = BTreeMap::new();
    for a in &dist.assignments {
        let Some(r) = reference.get(&a.aggregate) else {
            reference.insert(a.aggregate, a);
            continue;
        };
        if r.views == a.views {
            continue;
        }
        let mismatch = r
            .views
            .keys()
            .chain(a.views.keys())
            .find(|v| r.views.get(*v) != a.views.get(*v))
            .expect("unequal maps differ on some key");
        return Verdict::Dependent {
            witness: Witness::View {
                aggregate: a.aggregate,
                honest_users: dist.honest_users.clone(),
                models_a: r.honest_models.clone(),
                models_b: a.honest_models.clone(),
                view: mismatch.clone(),
                count_a: r.views.get(mismatch).copied().unwrap_or(0),
                count_b: a.views.get(mismatch).copied().unwrap_or(0),
            },
        };
    }
    Verdict::Independent
}

/// Noise layout used by [`check_noise_chain_independence`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainNoise {
    Independent,
    /// Group-2 users reuse the noise of the group-1 user at the same position
    /// (negative control).
    CopyFirstGroup,
}

/// `Z'_n(α) = sum_j Z_{n,j} α^j`.
pub fn masked_noise(noise: &[u64], alpha: u64, spec: FieldSpec) -> u64 {
    let mut acc = 0;
    let mut pow = 1;
    for &z in noise {
        pow = spec.mul_raw(pow, alpha);
        acc = spec.add_raw(acc, spec.mul_raw(z, pow));
    }
    acc
}

/// Accumulated chain noise `Z~_(γ,t)` for `γ = 1..Γ`.
fn chain_noise(
    params: &ProtocolParams,
    layout: &GroupLayout,
    noise: &[Vec<u64>],
    instance: &TinyInstance,
    t: usize,
) -> Vec<u64> {
    let spec = params.field;
    let alpha = t as u64;
    let mut acc = 0;
    (1..=params.groups())
        .map(|gamma| {
            for &u in layout.group(gamma) {
                if instance.contributes(u) {
                    acc = spec.add_raw(acc, masked_noise(&noise[u - 1], alpha, spec));
                }
            }
            acc
        })
        .collect()
}

/// Checks that `Z~_(γ,t)` and `Z~_(γ+1,t)` are independent for every chain
/// `t` and every consecutive pair of groups, by exhaustive joint counting.
pub fn check_noise_chain_independence(
    instance: &TinyInstance,
    mode: ChainNoise,
) -> Result<Verdict> {
    let params = &instance.params;
    let spec = params.field;
    let p = spec.modulus();
    let (n, thr, nu, groups) = (params.users, params.threshold, params.nu(), params.groups());
    if groups < 2 {
        return Ok(Verdict::Independent);
    }
    let layout = assign_groups(params)?;
    let symbols = n * thr;
    let total_runs = p.pow(symbols as u32);
    // joint[(γ, t)][x][y]
    let mut joint = vec![vec![0u64; (p * p) as usize]; (groups - 1) * nu];
    for idx in 0..total_runs {
        let flat = digits(idx, p, symbols);
        let mut noise: Vec<Vec<u64>> = flat.chunks(thr).map(|c| c.to_vec()).collect();
        if mode == ChainNoise::CopyFirstGroup {
            for t in 1..=nu {
                let src = layout.user_at(GroupPosition { gamma: 1, t });
                let dst = layout.user_at(GroupPosition { gamma: 2, t });
                noise[dst - 1] = noise[src - 1].clone();
            }
        }
        for t in 1..=nu {
            let chain = chain_noise(params, &layout, &noise, instance, t);
            for g in 0..groups - 1 {
                let cell = (chain[g] * p + chain[g + 1]) as usize;
                joint[g * nu + (t - 1)][cell] += 1;
            }
        }
    }
    let total = total_runs as u128;
    for g in 0..groups - 1 {
        for t in 1..=nu {
            let table = &joint[g * nu + (t - 1)];
            let px: Vec<u128> = (0..p)
                .map(|x| (0..p).map(|y| table[(x * p + y) as usize] as u128).sum())
                .collect();
            let py: Vec<u128> = (0..p)
                .map(|y| (0..p).map(|x| table[(x * p + y) as usize] as u128).sum())
                .collect();
            for x in 0..p {
                for y in 0..p {
                    let lhs = table[(x * p + y) as usize] as u128 * total;
                    let rhs = px[x as usize] * py[y as usize];
                    if lhs != rhs {
                        return Ok(Verdict::Dependent {
                            witness: Witness::NoiseChain {
                                gamma: g + 1,
                                t,
                                x,
                                y,
                                joint_times_total: lhs,
                                marginal_product: rhs,
                            },
                        });
                    }
                }
            }
        }
    }
    Ok(Verdict::Independent)
}

/// For a single length-1 secret shared with `threshold` uniform noise
/// coefficients, checks that the shares at `points` have the same exact
/// distribution for every secret value.
pub fn check_shamir_hiding(
    spec: FieldSpec,
    threshold: usize,
    points: &[EvalPoint],
) -> Result<Verdict> {
    let p = spec.modulus();
    let size = (p as u128).pow(threshold as u32 + 1);
    if size > ENUMERATION_GUARD {
        return Err(Error::TooLarge {
            size,
            guard: ENUMERATION_GUARD,
        });
    }
    let mut reference: Option<HashMap<Vec<u64>, u64>> = None;
    for secret in 0..p {
        let mut counts: HashMap<Vec<u64>, u64> = HashMap::new();
        for idx in 0..p.pow(threshold as u32) {
            let noise = NoiseSet::new(
                digits(idx, p, threshold)
                    .into_iter()
                    .map(|z| ModelVector::new(spec, vec![z]))
                    .collect::<Result<_>>()?,
            );
            let poly = build_polynomial(ModelVector::new(spec, vec![secret])?, &noise, threshold)?;
            let shares = points
                .iter()
                .map(|&a| Ok(share_for(&poly, a)?.values()[0]))
                .collect::<Result<Vec<_>>>()?;
            *counts.entry(shares).or_insert(0) += 1;
        }
        match &reference {
            None => reference = Some(counts),
            Some(r) if *r == counts => {}
            Some(r) => {
                let key = r
                    .keys()
                    .chain(counts.keys())
                    .find(|k| r.get(*k) != counts.get(*k))
                    .expect("maps differ")
                    .clone();
                return Ok(Verdict::Dependent {
                    witness: Witness::Shares {
                        points: points.iter().map(|a| a.alpha().value()).collect(),
                        secret_a: 0,
                        secret_b: secret,
                        count_a: r.get(&key).copied().unwrap_or(0),
                        count_b: counts.get(&key).copied().unwrap_or(0),
                        shares: key,
                    },
                });
            }
        }
    }
    Ok(Verdict::Independent)
}

/// Runs [`check_shamir_hiding`] on every set of `size` distinct nonzero points.
pub fn check_shamir_all_subsets(spec: FieldSpec, threshold: usize, size: usize) -> Result<Verdict> {
    let p = spec.modulus();
    let mut chosen = Vec::with_capacity(size);
    fn rec(
        spec: FieldSpec,
        threshold: usize,
        size: usize,
        next: u64,
        chosen: &mut Vec<EvalPoint>,
    ) -> Result<Verdict> {
        if chosen.len() == size {
            return check_shamir_hiding(spec, threshold, chosen);
        }
        for x in next..spec.modulus() {
            chosen.push(EvalPoint::new(spec.element(x))?);
            let v = rec(spec, threshold, size, x + 1, chosen)?;
            chosen.pop();
            if !v.is_independent() {
                return Ok(v);
            }
        }
        Ok(Verdict::Independent)
    }
    if size as u64 >= p {
        return Err(Error::InsufficientPoints {
            needed: size,
            got: p as usize - 1,
        });
    }
    rec(spec, threshold, size, 1, &mut chosen)
}
