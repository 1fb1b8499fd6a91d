//! Property tests for the data model and the traffic generators.

mod common;

use common::*;
use magnneto::baselines::default_ospf_weights;
use magnneto::net::gen::{gen_gravity_tm, gen_uniform_tm};
use magnneto::net::{parse_topology, parse_traffic, serialize_topology, serialize_traffic, TrafficMatrix};
use magnneto::routing::ecmp_loads_with;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn topology_round_trip(seed in 0u64..10_000, n in 2usize..9, extra in 0usize..6) {
        let mut rng = seeded(seed);
        let topo = random_topology(&mut rng, n, extra, 6);
        let reparsed = parse_topology(&serialize_topology(&topo)).unwrap();
        prop_assert_eq!(topo, reparsed);
    }

    #[test]
    fn traffic_round_trip(seed in 0u64..10_000, n in 2usize..9) {
        let mut rng = seeded(seed);
        let tm = random_tm(&mut rng, n, 0.5);
        let reparsed = parse_traffic(&serialize_traffic(&tm), n).unwrap();
        prop_assert_eq!(tm, reparsed);
    }

    #[test]
    fn generated_tms_are_normalized(seed in 0u64..500, gravity in proptest::bool::ANY) {
        let mut rng = seeded(seed);
        let topo = random_topology(&mut rng, 5, 3, 4);
        let target = 0.75;
        let tm = if gravity {
            gen_gravity_tm(&topo, seed, target).unwrap()
        } else {
            gen_uniform_tm(&topo, seed, target).unwrap()
        };
        for i in 0..5 {
            prop_assert_eq!(tm.demand(i, i), 0.0);
            for j in 0..5 {
                prop_assert!(tm.demand(i, j) >= 0.0);
            }
        }
        let state = ecmp_loads_with(&topo, &default_ospf_weights(&topo), &tm).unwrap();
        prop_assert!((state.max_utilization - target).abs() <= 1e-9);
    }

    #[test]
    fn generators_are_seed_deterministic(seed in 0u64..200) {
        let mut rng = seeded(seed);
        let topo = random_topology(&mut rng, 5, 2, 4);
        let a = gen_uniform_tm(&topo, seed, 0.9).unwrap();
        let b = gen_uniform_tm(&topo, seed, 0.9).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn zero_demand_matrix_cannot_be_normalized() {
    let topo = load_topology("diamond.topo");
    // gravity with all-zero masses is unreachable through the public seed
    // API; the degenerate-path guard is the from-masses entry point.
    let err = magnneto::net::gen::gravity_from_masses(&topo, &[0.0; 4], 0.75);
    assert!(err.is_err());
}

#[test]
fn normalization_uses_default_ospf_not_file_weights() {
    // A topology whose file weights differ from Default OSPF.
    let text = "NODES 3\n0 a\n1 b\n2 c\nEDGES 3 undirected\n0 0 1 10 7\n1 1 2 40 2\n2 0 2 40 5\n";
    let topo = parse_topology(text).unwrap();
    let tm = gen_uniform_tm(&topo, 3, 0.6).unwrap();
    let with_default = ecmp_loads_with(&topo, &default_ospf_weights(&topo), &tm).unwrap();
    assert!((with_default.max_utilization - 0.6).abs() <= 1e-9);
    let with_file = magnneto::routing::ecmp_loads(&topo, &tm).unwrap();
    // File weights route differently here, so the target only holds under
    // the documented Default-OSPF normalization.
    assert!((with_file.max_utilization - 0.6).abs() > 1e-6);
}

#[test]
fn tm_scaling_is_exact() {
    let mut tm = TrafficMatrix::zeros(3);
    tm.add_demand(0, 1, 1.5).unwrap();
    tm.add_demand(2, 0, 3.25).unwrap();
    let scaled = tm.scaled(2.0);
    assert_eq!(scaled.demand(0, 1), 3.0);
    assert_eq!(scaled.demand(2, 0), 6.5);
}
