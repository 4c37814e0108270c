use std::collections::BTreeMap;

use dendrite::analytic::{characteristic_coeffs, characteristic_roots, CharacteristicSolution};
use dendrite::measure::{count_spikes, delay, Rests, SpikeCriteria};
use dendrite::{
    simulate, stimulus_value, GateSource, Network, Polarity, RcNetwork, SegmentInstance,
    SegmentParams, SimConfig, Stimulus, Trace,
};
use proptest::prelude::*;

fn log_range(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.log10()..hi.log10()).prop_map(|e| 10f64.powf(e))
}

fn rc() -> impl Strategy<Value = RcNetwork> {
    (
        log_range(10.0, 1e6),
        log_range(10.0, 1e6),
        log_range(1e-9, 1e-4),
        log_range(1e-9, 1e-4),
    )
        .prop_map(|(ra, rl, cr, cm)| RcNetwork::new(ra, rl, cr, cm).unwrap())
}

proptest! {
    #[test]
    fn initial_conditions_and_decay(net in rc(), v0 in 0.01f64..5.0) {
        let sol = CharacteristicSolution::new(v0, &net).unwrap();
        prop_assert!((sol.reservoir_voltage(0.0) - v0).abs() <= 1e-9 * v0);
        prop_assert!(sol.membrane_voltage(0.0).abs() <= 1e-9 * v0);
        let (rp, rm) = sol.root_residuals();
        prop_assert!(rp <= 1e-9 && rm <= 1e-9);
        let t_long = 50.0 / -sol.lambda_plus;
        prop_assert!(sol.reservoir_voltage(t_long).abs() <= 1e-9 * v0);
    }

    #[test]
    fn roots_are_ordered_and_negative(net in rc()) {
        let (a, b, c) = characteristic_coeffs(&net);
        let (lp, lm) = characteristic_roots(a, b, c).unwrap();
        prop_assert!(lm <= lp && lp < 0.0);
        // Vieta
        prop_assert!(((lp * lm) - c / a).abs() <= 1e-9 * (c / a));
    }

    #[test]
    fn stimulus_is_pure(amp in 0.0f64..5.0, width in 1e-4f64..5e-3, t in 0.0f64..2e-2) {
        let s = Stimulus::pulse_train(amp, width, 2.0 * width, 3, 1e-3).unwrap();
        prop_assert_eq!(stimulus_value(&s, t).unwrap(), stimulus_value(&s, t).unwrap());
    }

    #[test]
    fn delay_is_antisymmetric(a in 0usize..50, b in 0usize..50) {
        let bump = |at: usize| (0..50).map(|i| if i == at { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let trace = Trace::new(1e-3, 0.0, [("x".to_string(), bump(a)), ("y".to_string(), bump(b))]).unwrap();
        let r = Rests::new(0.0, 0.0);
        let xy = delay(&trace, "x", "y", r, 0.1).unwrap().unwrap();
        let yx = delay(&trace, "y", "x", r, 0.1).unwrap().unwrap();
        prop_assert_eq!(xy, -yx);
    }

    #[test]
    fn spike_count_ignores_shift_and_scale(
        starts in proptest::collection::btree_set(0usize..40, 0..8),
        shift in 0usize..20,
        height in 3.0f64..5.0,
    ) {
        let build = |offset: usize, h: f64| {
            let mut v = vec![0.0; 120];
            for s in &starts {
                v[10 * s / 4 + offset + 1] = h;
            }
            Trace::new(1e-3, 0.0, [("v".to_string(), v)]).unwrap()
        };
        let crit = SpikeCriteria::new(5.0).with_refractory(0.0);
        let base = count_spikes(&build(0, height), "v", 0.0, crit).unwrap();
        prop_assert_eq!(base, count_spikes(&build(shift, 4.0), "v", 0.0, crit).unwrap());
    }
}

#[test]
fn dangling_membrane_reference_is_rejected() {
    let seg = SegmentInstance::new(
        "d1",
        SegmentParams::n_type(RcNetwork::uniform(1e3, 1e-6).unwrap()),
        vec![GateSource::Membrane("nowhere".into())],
    );
    assert!(Network::new(5.0, vec![seg]).is_err());
}

#[test]
fn traces_include_every_node_and_stimulus() {
    let rc = RcNetwork::uniform(1e3, 1e-6).unwrap();
    let net = Network::new(
        5.0,
        vec![
            SegmentInstance::new("a", SegmentParams::n_type(rc), vec![GateSource::Stimulus("s".into())]),
            SegmentInstance::new("b", SegmentParams::p_type(rc), vec![GateSource::Membrane("a".into())]),
        ],
    )
    .unwrap();
    let stimuli = BTreeMap::from([("s".to_string(), Stimulus::square_pulse(5.0, 2e-3, 1e-3).unwrap())]);
    let trace = simulate(&net, &stimuli, SimConfig::new(1e-5, 20e-3)).unwrap();
    let names: Vec<_> = trace.channel_names().collect();
    assert_eq!(names, ["s", "a.r", "a.m", "b.r", "b.m"]);
    let a = trace.channel("a.m").unwrap();
    // off-state leakage holds the resting output a hair below the rail
    assert!((a[0] - 5.0).abs() < 1e-3);
    assert!(a.iter().cloned().fold(f64::INFINITY, f64::min) < 4.0);
    let b = trace.channel("b.m").unwrap();
    assert!(b.iter().cloned().fold(0.0, f64::max) > 1.0);
    assert_eq!(Polarity::PType.leak_rail(5.0), 0.0);
}
