//! Experiment and privacy-suite drivers behind the CLI subcommands.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use swiftagg::privacy_oracle::{
    check_conditional_independence, check_noise_chain_independence, check_shamir_all_subsets,
    enumerate_views, ChainNoise, NoiseMode, TinyInstance, Verdict,
};
use swiftagg::protocol::{assign_groups, assign_groups_shuffled, sample_noise};
use swiftagg::sharing::user_rng;
use swiftagg::simnet::simulate_with;
use swiftagg::{
    AdversaryConfig, DropoutPlan, DropoutTiming, Error, FieldSpec, ModelVector, ProtocolParams,
};

use crate::config::{ConfigError, DropoutSpec, OutputFormat, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub rep: usize,
    pub recovered_ok: bool,
    pub r_user: u64,
    pub r_uplink_actual: u64,
    pub r_uplink_required: u64,
    pub user_to_user_msgs: u64,
    pub server_msgs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed: Option<f64>,
}

impl RunRecord {
    fn csv_header(timing: bool) -> String {
        let mut h = "rep,recovered_ok,r_user,r_uplink_actual,r_uplink_required,user_to_user_msgs,server_msgs"
            .to_string();
        if timing {
            h.push_str(",elapsed");
        }
        h
    }

    fn csv_row(&self) -> String {
        let mut row = format!(
            "{},{},{},{},{},{},{}",
            self.rep,
            self.recovered_ok,
            self.r_user,
            self.r_uplink_actual,
            self.r_uplink_required,
            self.user_to_user_msgs,
            self.server_msgs
        );
        if let Some(e) = self.elapsed {
            row.push_str(&format!(",{e}"));
        }
        row
    }
}

/// Failures other than config errors are internal protocol faults.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("protocol failure in repetition {rep}: {source}")]
    Protocol { rep: usize, source: Error },
}

/// Per-repetition seed; users draw noise on streams `1..=N` of it, models on
/// stream 0 and dropout victims on stream `N+1`.
fn rep_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add(rep as u64)
}

fn draw_plan(cfg: &RunConfig, params: &ProtocolParams, seed: u64) -> DropoutPlan {
    match &cfg.dropout {
        DropoutSpec::None => DropoutPlan::none(),
        DropoutSpec::Ids(ids) => DropoutPlan::uniform(ids.iter().copied(), cfg.drop_timing),
        DropoutSpec::Rate(rate) => {
            let count = ((rate * params.users as f64).round() as usize).min(params.max_dropouts);
            let mut rng = user_rng(seed, params.users + 1);
            let mut ids: Vec<usize> = (1..=params.users).collect();
            ids.shuffle(&mut rng);
            DropoutPlan::uniform(ids.into_iter().take(count), cfg.drop_timing)
        }
    }
}

fn run_one(cfg: &RunConfig, params: &ProtocolParams, rep: usize) -> Result<RunRecord, Error> {
    let start = Instant::now();
    let seed = rep_seed(cfg.seed, rep);
    let p = params.field.modulus();
    let mut rng = user_rng(seed, 0);
    let models = (0..params.users)
        .map(|_| {
            let v = (0..params.model_len).map(|_| rng.gen_range(0..p)).collect();
            ModelVector::new(params.field, v)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let layout = if cfg.group_shuffle {
        assign_groups_shuffled(params, seed)?
    } else {
        assign_groups(params)?
    };
    let noise = sample_noise(params, seed)?;
    let plan = draw_plan(cfg, params, seed);
    let adversary = AdversaryConfig::new(cfg.adversary.iter().copied(), cfg.server_curious);
    let out = simulate_with(params, &layout, &models, &noise, &plan, &adversary)?;

    let expected_contributors: BTreeSet<usize> = (1..=params.users)
        .filter(|u| plan.victims().get(u).is_none_or(|t| t.shares_distributed()))
        .collect();
    let mut expected = ModelVector::zeros(params.field, params.model_len)?;
    for &u in &expected_contributors {
        expected.add_assign(&models[u - 1])?;
    }
    let recovered_ok = out.recovered == expected && out.contributors == expected_contributors;
    let m = out.metrics;
    Ok(RunRecord {
        rep,
        recovered_ok,
        r_user: m.r_user,
        r_uplink_actual: m.r_uplink_actual,
        r_uplink_required: m.r_uplink_required,
        user_to_user_msgs: m.user_to_user_msgs,
        server_msgs: m.server_msgs,
        elapsed: cfg.timing.then(|| start.elapsed().as_secs_f64()),
    })
}

/// Runs every repetition (in parallel) and returns records in repetition order.
pub fn run_experiments(cfg: &RunConfig) -> Result<Vec<RunRecord>, RunError> {
    let params = cfg.validate()?;
    (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_one(cfg, &params, rep).map_err(|source| RunError::Protocol { rep, source }))
        .collect()
}

pub fn write_records<W: Write>(
    out: &mut W,
    records: &[RunRecord],
    format: OutputFormat,
    timing: bool,
) -> std::io::Result<()> {
    match format {
        OutputFormat::Json => {
            for r in records {
                serde_json::to_writer(&mut *out, r)?;
                writeln!(out)?;
            }
        }
        OutputFormat::Csv => {
            writeln!(out, "{}", RunRecord::csv_header(timing))?;
            for r in records {
                writeln!(out, "{}", r.csv_row())?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceSummary {
    pub n: usize,
    pub t: usize,
    pub d: usize,
    pub p: u64,
    pub colluders: Vec<usize>,
    pub server_curious: bool,
    pub dropouts: Vec<usize>,
    pub noise: NoiseMode,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrivacyRecord {
    pub instance: InstanceSummary,
    pub check: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

impl PrivacyRecord {
    pub fn passed(&self) -> bool {
        self.verdict.is_independent()
    }
}

/// One tiny instance for the privacy suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivacySpec {
    pub n: usize,
    pub t: usize,
    pub d: usize,
    pub p: u64,
    pub colluders: Vec<usize>,
    pub server_curious: bool,
    pub dropouts: Vec<usize>,
}

impl PrivacySpec {
    fn summary(&self, noise: NoiseMode) -> InstanceSummary {
        InstanceSummary {
            n: self.n,
            t: self.t,
            d: self.d,
            p: self.p,
            colluders: self.colluders.clone(),
            server_curious: self.server_curious,
            dropouts: self.dropouts.clone(),
            noise,
        }
    }

    fn build(&self, noise: NoiseMode) -> Result<TinyInstance, ConfigError> {
        let field = FieldSpec::new(self.p).map_err(|e| ConfigError::new("field", e))?;
        let params = ProtocolParams::new(self.n, self.t, self.d, 1, field)
            .map_err(|e| ConfigError::new("n/t/d", e))?;
        TinyInstance::new(
            params,
            DropoutPlan::uniform(self.dropouts.iter().copied(), DropoutTiming::BeforeSharing),
            AdversaryConfig::new(self.colluders.iter().copied(), self.server_curious),
            noise,
        )
        .map_err(|e| ConfigError::new("instance", e))
    }
}

/// Default suite: every instance is small enough to enumerate in well under a
/// second.
pub fn default_privacy_suite() -> Vec<PrivacySpec> {
    let spec = |n, t, d, p, colluders: &[usize], server_curious, dropouts: &[usize]| PrivacySpec {
        n,
        t,
        d,
        p,
        colluders: colluders.to_vec(),
        server_curious,
        dropouts: dropouts.to_vec(),
    };
    vec![
        spec(2, 1, 0, 5, &[], true, &[]),
        spec(4, 1, 0, 3, &[], true, &[]),
        spec(4, 1, 0, 3, &[1], true, &[]),
        spec(4, 1, 0, 3, &[2], true, &[]),
        spec(4, 1, 0, 3, &[3], false, &[]),
        spec(3, 1, 1, 5, &[], true, &[]),
        spec(3, 1, 1, 5, &[2], true, &[1]),
        spec(3, 1, 1, 5, &[1], true, &[3]),
    ]
}

/// Runs view checks for every instance plus the chain-noise and share-hiding checks.
/// `no_noise` replaces every noise vector by zero, which must expose a
/// witness whenever a colluding user is present.
pub fn run_privacy_suite(
    suite: &[PrivacySpec],
    no_noise: bool,
) -> Result<Vec<PrivacyRecord>, ConfigError> {
    let mode = if no_noise {
        NoiseMode::Zero
    } else {
        NoiseMode::Uniform
    };
    let mut records = Vec::new();
    for spec in suite {
        let inst = spec.build(mode)?;
        let verdict = if inst.adversary.is_empty() {
            Verdict::Independent
        } else {
            let dist = enumerate_views(&inst).map_err(|e| ConfigError::new("instance", e))?;
            check_conditional_independence(&dist)
        };
        records.push(PrivacyRecord {
            instance: spec.summary(mode),
            check: "view_independence".into(),
            verdict,
        });
        if !no_noise && spec.colluders.is_empty() && spec.d == 0 && inst.params.groups() > 1 {
            let verdict = check_noise_chain_independence(&inst, ChainNoise::Independent)
                .map_err(|e| ConfigError::new("instance", e))?;
            records.push(PrivacyRecord {
                instance: spec.summary(mode),
                check: "noise_chain".into(),
                verdict,
            });
        }
    }
    if !no_noise {
        let field = FieldSpec::new(5).map_err(|e| ConfigError::new("field", e))?;
        let verdict =
            check_shamir_all_subsets(field, 2, 2).map_err(|e| ConfigError::new("instance", e))?;
        records.push(PrivacyRecord {
            instance: InstanceSummary {
                n: 4,
                t: 2,
                d: 0,
                p: 5,
                colluders: Vec::new(),
                server_curious: false,
                dropouts: Vec::new(),
                noise: NoiseMode::Uniform,
            },
            check: "shamir_hiding".into(),
            verdict,
        });
    }
    Ok(records)
}
