mod common;

use std::collections::BTreeSet;

use common::*;
use swiftagg::protocol::{run_protocol, Phase, Recipient};
use swiftagg::simnet::{simulate, AdversaryConfig, DropoutPlan};
use swiftagg::DropoutTiming;

#[test]
fn dropped_user_seven_silences_chain_three() {
    let params = motivating_params();
    let models = motivating_models(&params);
    let dropped: BTreeSet<_> = [7].into();
    let (recovered, log) = run_protocol(&params, &models, &dropped, MOTIVATING_SEED).unwrap();

    let survivors: BTreeSet<_> = (1..=12).filter(|&n| n != 7).collect();
    assert_eq!(recovered, sum_of(&models, &survivors));

    // user 7 = (2,3) sends nothing to its group
    let from7: Vec<_> = log.iter().filter(|e| e.from == 7).collect();
    assert!(from7.iter().all(|e| e.message.is_null()));
    assert_eq!(from7.len(), 3 + 1);
    // user 11 = (3,3) receives Null from 7 and uploads Null
    let to11 = log
        .iter()
        .find(|e| e.phase == Phase::Sequence && e.to == Recipient::User(11))
        .unwrap();
    assert_eq!(to11.from, 7);
    assert!(to11.message.is_null());
    let uploads: Vec<_> = log
        .iter()
        .filter(|e| e.phase == Phase::Upload && !e.message.is_null())
        .map(|e| (e.from, e.t))
        .collect();
    assert_eq!(uploads, vec![(9, 1), (10, 2), (12, 4)]);

    // user 5 = (2,1) shares to (2,2), (2,3), (2,4) at alpha_2..alpha_4
    let from5: Vec<_> = log
        .iter()
        .filter(|e| e.phase == Phase::Intra && e.from == 5)
        .map(|e| (e.to, e.t))
        .collect();
    assert_eq!(
        from5,
        vec![
            (Recipient::User(6), 2),
            (Recipient::User(7), 3),
            (Recipient::User(8), 4)
        ]
    );
}

#[test]
fn golden_transcript() {
    let params = motivating_params();
    let models = motivating_models(&params);
    let (_, log) = run_protocol(&params, &models, &[7].into(), MOTIVATING_SEED).unwrap();
    let lines = log.to_lines();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(golden_path(), &lines).unwrap();
    }
    let golden = std::fs::read_to_string(golden_path()).unwrap();
    assert_eq!(lines, golden);
}

#[test]
fn simnet_agrees_with_run_protocol() {
    let params = motivating_params();
    let models = motivating_models(&params);
    let plan = DropoutPlan::none().with(7, DropoutTiming::BeforeSharing);
    let out = simulate(
        &params,
        &models,
        &plan,
        &AdversaryConfig::none(),
        MOTIVATING_SEED,
    )
    .unwrap();
    let (_, log) = run_protocol(&params, &models, &[7].into(), MOTIVATING_SEED).unwrap();
    assert_eq!(out.log, log);
    assert_eq!(out.metrics.server_msgs, 3);
    // 44 minus 7's three shares and its chain message
    assert_eq!(out.metrics.user_to_user_msgs, 40);
}
