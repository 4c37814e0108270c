use dendrite::experiments::*;
use dendrite::netlist::{parse, serialize};
use dendrite::measure::PairedInputCircuit;
use dendrite::{Polarity, SimConfig, Stimulus};

fn round_trips(n: &dendrite::netlist::Netlist) {
    let text = serialize(n);
    let back = parse(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    assert_eq!(&back, n, "{text}");
}

#[test]
fn builders_round_trip_through_netlists() {
    let protocol = LocalisationProtocol::default();
    for v in Variant::ALL {
        let l = build_sound_localisation(v).unwrap();
        round_trips(&l.netlist(&protocol.pulse().unwrap(), 1.25e-3));
    }
    for r in RING_P8_R_LEAK {
        round_trips(&bursting_neuron_netlist(r, &BurstProtocol::default()).unwrap());
    }
    let chain = build_active_chain(CHAIN_STAGES, &Devices::chain()).unwrap();
    let stim = Stimulus::square_pulse(5.0, 8e-6, 10e-6).unwrap();
    round_trips(&dendrite::netlist::Netlist::new(chain, [("in".to_string(), stim)].into()));
}

#[test]
fn localisation_is_deterministic_and_discriminates_c() {
    let a = run_sound_localisation(Variant::A).unwrap();
    let b = run_sound_localisation(Variant::B).unwrap();
    let c = run_sound_localisation(Variant::C).unwrap();
    assert_eq!(c, run_sound_localisation(Variant::C).unwrap());
    assert_eq!(c.len(), 41);
    let values = |curve: &[(f64, f64)]| curve.iter().map(|p| p.1).collect::<Vec<_>>();
    let pc = argmax(&values(&c)).unwrap();
    assert!(c[pc].1 > a[pc].1 && c[pc].1 > b[pc].1);
}

#[test]
fn passive_baseline_shifts_and_attenuates() {
    let curves = run_passive_localisation_baseline(&[500.0, 2000.0]).unwrap();
    let top = |c: &[(f64, f64)]| {
        let v: Vec<f64> = c.iter().map(|p| p.1).collect();
        let i = argmax(&v).unwrap();
        (c[i].0, v[i])
    };
    let (t0, p0) = top(&curves[0]);
    let (t1, p1) = top(&curves[1]);
    assert!(t1 > t0);
    assert!(p1 < p0);
    assert_eq!(run_passive_localisation_baseline(&[1000.0]).unwrap().len(), 1);
}

#[test]
fn passive_circuit_sums_both_branches() {
    let circuit = PassiveCoincidence::new(1000.0, SimConfig::new(1e-5, 20e-3)).unwrap();
    let pulse = Stimulus::square_pulse(1.0, 2e-3, 1e-3).unwrap();
    let trace = circuit.run(&pulse, &pulse).unwrap();
    assert_eq!(trace.channel_names().collect::<Vec<_>>(), ["out"]);
    assert!(trace.channel("out").unwrap().iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn ring_two_spike_configuration() {
    let burst = run_bursting_neuron(231.0, &BurstProtocol::default()).unwrap();
    assert_eq!(burst.spikes, 2);
    assert!(burst.returned_to_rest);
    let table = burst_sweep(&[127.0, 251.0], &BurstProtocol::default()).unwrap();
    assert_eq!(
        table.to_csv_string(),
        "p8_r_leak_ohm,spikes,returned_to_rest\n127,1,true\n251,3,true\n"
    );
}

#[test]
fn characterisation_tables_are_deterministic() {
    for kind in [Characterisation::TemporalIntegration, Characterisation::SpatialIntegration] {
        let a = run_characterisation(kind).unwrap();
        assert_eq!(a, run_characterisation(kind).unwrap());
        assert!(!a.rows.is_empty());
    }
}

#[test]
fn spatial_integration_is_sublinear() {
    let t = run_characterisation(Characterisation::SpatialIntegration).unwrap();
    let peaks = t.numbers("peak_v").unwrap();
    let single = peaks[0].unwrap();
    let dual = peaks[1].unwrap();
    assert!(dual > single && dual < 2.0 * single);
}

#[test]
fn delay_saturates_above_two_volts() {
    let rc = dendrite::RcNetwork::uniform(5e3, 1e-6).unwrap();
    let cfg = SimConfig::new(1e-6, 60e-3);
    let d = |amp| pulse_response(Polarity::NType, rc, amp, cfg).unwrap().delay;
    let (d2, d5) = (d(2.0).unwrap(), d(5.0).unwrap());
    assert!((d2 - d5).abs() / d5 < 0.05);
    assert_eq!(d(1.5), None);
}

#[test]
fn free_response_overlay_matches_closed_form() {
    let table = rc_response_overlay(&OVERLAY_V0, 1e-6, 10e-3).unwrap();
    assert_eq!(table.columns.len(), 1 + 2 * OVERLAY_V0.len());
    for (k, v0) in OVERLAY_V0.iter().enumerate() {
        let analytic = table.numbers(&table.columns[1 + 2 * k]).unwrap();
        let numeric = table.numbers(&table.columns[2 + 2 * k]).unwrap();
        let worst = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a.unwrap() - n.unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3 * v0, "v0 {v0}: {worst}");
    }
}
