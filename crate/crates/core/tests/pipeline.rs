use std::collections::BTreeMap;

use lmeec_core::engine::{self, Action, Actor, Protocol, TraceLevel};
use lmeec_core::experiment::{run_experiment, ExperimentOptions};
use lmeec_core::topology::{assign_layers, hello_energy_accounting, NetworkTopology, NodeId, Position};
use lmeec_core::{RadioParams, RunConfig, SimConfig};
use proptest::prelude::*;

#[test]
fn hello_flood_matches_closed_form() {
    // chain along the x axis, 20 m apart, BS at the origin: layers 1, 2, 3, 4
    let positions: Vec<Position> = (1..=4).map(|k| Position::new(20.0 * k as f64, 0.0)).collect();
    let topo = NetworkTopology::new(positions, Position::new(0.0, 0.0), 25.0);
    let layers = assign_layers(&topo);
    assert_eq!(layers.as_slice(), &[Some(1), Some(2), Some(3), Some(4)]);

    let radio = RadioParams::default();
    let b = radio.control_bits as f64;
    let tx = 50e-9 * b + 100e-12 * b * 625.0;
    let rx = 50e-9 * b;
    let debits = hello_energy_accounting(&topo, &layers, &radio);
    // node 0 hears the BS and node 1; the end of the chain hears only node 2
    let expected_rx = [2, 2, 2, 1];
    for (d, k) in debits.iter().zip(expected_rx) {
        assert_eq!(d.receptions, k);
        assert!((d.tx_joules - tx).abs() < 1e-18);
        assert!((d.rx_joules - k as f64 * rx).abs() < 1e-18);
    }
}

#[test]
fn engine_charges_the_flood_it_reports() {
    let mut cfg = SimConfig::new(40, 9, Protocol::Lmeec);
    cfg.sim.duration = 20.0;
    cfg.trace = TraceLevel::Full;
    let out = engine::run(&cfg).unwrap();
    let expected = hello_energy_accounting(&out.topology, &assign_layers(&out.topology), &cfg.radio);

    let mut charged: BTreeMap<usize, f64> = BTreeMap::new();
    for e in &out.events {
        if let (Actor::Node(id), Action::HelloTx | Action::HelloRx) = (e.actor, e.action) {
            *charged.entry(id.0).or_default() += e.joules;
        }
    }
    for (i, d) in expected.iter().enumerate() {
        let got = charged.get(&i).copied().unwrap_or(0.0);
        assert!((got - d.total()).abs() < 1e-15, "node {i}: {got} vs {}", d.total());
    }
}

#[test]
fn summary_recounts_from_runs_csv() {
    let mut cfg = RunConfig::default();
    cfg.experiment.node_counts = vec![30, 60];
    cfg.experiment.seeds = vec![1, 2, 3];
    cfg.sim.duration = 100.0;
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&cfg, dir.path(), ExperimentOptions::default()).unwrap();
    assert!(report.complete());

    let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(dir.path().join("runs.csv")).unwrap();
    for row in reader.records() {
        let row = row.unwrap();
        let key = (row[0].to_string(), row[1].parse().unwrap());
        groups.entry(key).or_default().push(row[3].parse().unwrap());
    }
    assert_eq!(groups.len(), 4);

    let mut reader = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let mut seen = 0;
    for row in reader.records() {
        let row = row.unwrap();
        let vals = &groups[&(row[0].to_string(), row[1].parse().unwrap())];
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        let got_mean: f64 = row[col("avg_dissipated_j_mean")].parse().unwrap();
        let got_std: f64 = row[col("avg_dissipated_j_std")].parse().unwrap();
        // runs.csv carries nine significant digits
        assert!((got_mean - mean).abs() <= 1e-8 * mean, "{got_mean} vs {mean}");
        assert!((got_std - std).abs() <= 1e-8 * mean, "{got_std} vs {std}");
        assert_eq!(row[col("runs")].parse::<usize>().unwrap(), vals.len());
        seen += 1;
    }
    assert_eq!(seen, 4);
}

#[test]
fn caller_topology_must_match_n() {
    let topo = NetworkTopology::new(vec![Position::new(1.0, 1.0)], Position::new(0.0, 0.0), 25.0);
    assert!(engine::run_on(&SimConfig::new(2, 0, Protocol::Leach), topo).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_conserve_energy_and_keep_members_in_one_cluster(
        n in 1usize..60,
        seed in any::<u64>(),
        leach in any::<bool>(),
        energy in prop_oneof![Just(2.0), 0.001f64..0.05],
    ) {
        let protocol = if leach { Protocol::Leach } else { Protocol::Lmeec };
        let mut cfg = SimConfig::new(n, seed, protocol);
        cfg.sim.duration = 100.0;
        cfg.sim.initial_energy = energy;
        let out = engine::run(&cfg).unwrap();
        for r in &out.metrics.per_round {
            prop_assert!(r.conservation_error() <= 1e-9);
            prop_assert!(r.delivered <= r.attempted);
        }
        for round in &out.rounds {
            let mut owner: BTreeMap<NodeId, NodeId> = BTreeMap::new();
            for c in &round.clusters {
                prop_assert!(owner.insert(c.head, c.head).is_none());
                for m in &c.members {
                    prop_assert!(owner.insert(*m, c.head).is_none(), "node {} in two clusters", m);
                }
                let slots: Vec<usize> = c.members.iter().map(|m| c.tdma[m]).collect();
                prop_assert_eq!(slots, (0..c.members.len()).collect::<Vec<_>>());
            }
        }
        for b in &out.energy {
            prop_assert!(b.residual >= 0.0);
            prop_assert!(b.alive || b.residual == 0.0);
        }
    }
}
