mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::sum_of;
use swiftagg::protocol::{Phase, Recipient};
use swiftagg::simnet::{simulate, AdversaryConfig, DropoutPlan};
use swiftagg::{DropoutTiming, FieldSpec, ModelVector, ProtocolParams};

fn timing(i: u8) -> DropoutTiming {
    match i % 3 {
        0 => DropoutTiming::BeforeSharing,
        1 => DropoutTiming::AfterSharing,
        _ => DropoutTiming::MidSequence,
    }
}

prop_compose! {
    fn instance()(t in 1usize..=3, d in 0usize..=2, groups in 1usize..=4, l in 1usize..=3, pi in 0usize..3)
        -> ProtocolParams
    {
        let p = [11u64, 101, (1 << 31) - 1][pi];
        let nu = t + d + 1;
        ProtocolParams::new(nu * groups, t, d, l, FieldSpec::new(p).unwrap()).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn recovers_sum_of_contributors(
        params in instance(),
        raw in prop::collection::vec(any::<u64>(), 24 * 3),
        victims in prop::collection::vec((any::<usize>(), any::<u8>()), 0..=2),
        seed in any::<u64>(),
    ) {
        let models: Vec<_> = (0..params.users)
            .map(|u| ModelVector::new(params.field, raw[u * 3..u * 3 + params.model_len].to_vec()).unwrap())
            .collect();
        let mut plan = DropoutPlan::none();
        for (v, tm) in victims.into_iter().take(params.max_dropouts) {
            plan = plan.with(v % params.users + 1, timing(tm));
        }
        let out = simulate(&params, &models, &plan, &AdversaryConfig::none(), seed).unwrap();
        let contributing: BTreeSet<_> = (1..=params.users)
            .filter(|u| plan.victims().get(u) != Some(&DropoutTiming::BeforeSharing))
            .collect();
        prop_assert_eq!(&out.recovered, &sum_of(&models, &contributing));

        // each dropout silences at most one chain
        let null_uploads = out.log.iter().filter(|e| e.phase == Phase::Upload && e.message.is_null()).count();
        prop_assert!(null_uploads <= plan.len());
        prop_assert!(out.metrics.server_msgs > params.threshold as u64);
        prop_assert!(out.metrics.user_to_user_msgs <= ((params.users - 1) * params.nu()) as u64);
        prop_assert!(out.metrics.max_user_outbound_elements <= (params.nu() * params.model_len) as u64);

        // no intra share crosses a group boundary
        let nu = params.nu();
        for e in out.log.iter().filter(|e| e.phase == Phase::Intra) {
            let Recipient::User(to) = e.to else { panic!("intra share to server") };
            prop_assert_eq!((e.from - 1) / nu, (to - 1) / nu);
        }

        let again = simulate(&params, &models, &plan, &AdversaryConfig::none(), seed).unwrap();
        prop_assert_eq!(out.log.to_lines(), again.log.to_lines());
    }
}
