use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clonesim::net_model::{deploy_network, greedy_geo_route, DeploymentConfig, Network};

fn mean_greedy_hops(net: &Network, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut hops, mut delivered) = (0usize, 0usize);
    for _ in 0..pairs {
        let a = rng.gen_range(0..net.len());
        let b = rng.gen_range(0..net.len());
        let route = greedy_geo_route(net, a, net.node(b).location).unwrap();
        if route.delivered() {
            hops += route.hops();
            delivered += 1;
        }
    }
    hops as f64 / delivered as f64
}

#[test]
fn target_degree_is_met_within_fifteen_percent() {
    let mean: f64 = (1..=20)
        .map(|seed| {
            deploy_network(&DeploymentConfig::with_degree(1000, 1000.0, 10.0, seed))
                .unwrap()
                .mean_degree()
        })
        .sum::<f64>()
        / 20.0;
    assert!((mean - 10.0).abs() <= 1.5, "mean degree {mean}");
}

#[test]
fn greedy_path_length_scales_with_sqrt_n() {
    let hops = |n: usize| -> f64 {
        (0..5)
            .map(|seed| {
                let net =
                    deploy_network(&DeploymentConfig::with_degree(n, 1000.0, 10.0, seed)).unwrap();
                mean_greedy_hops(&net, 2000, seed)
            })
            .sum::<f64>()
            / 5.0
    };
    let ratio = hops(1000) / hops(250);
    // sqrt(1000 / 250) = 2
    assert!((ratio - 2.0).abs() <= 0.6, "hop ratio {ratio}");
}

#[test]
fn deployment_is_reproducible() {
    let cfg = DeploymentConfig::with_degree(500, 1000.0, 10.0, 77);
    assert_eq!(deploy_network(&cfg).unwrap(), deploy_network(&cfg).unwrap());
    let other = DeploymentConfig { seed: 78, ..cfg };
    assert_ne!(
        deploy_network(&other).unwrap(),
        deploy_network(&DeploymentConfig::with_degree(500, 1000.0, 10.0, 77)).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adjacency_is_symmetric_and_within_range(seed in any::<u64>(), n in 2usize..200) {
        let net = deploy_network(&DeploymentConfig::with_degree(n, 500.0, 6.0, seed)).unwrap();
        for u in 0..net.len() {
            for &v in net.neighbors(u) {
                prop_assert!(net.neighbors(v).contains(&u));
                prop_assert!(v != u);
                prop_assert!(net.node(u).location.distance(&net.node(v).location) <= net.radio_range());
            }
        }
    }

    #[test]
    fn greedy_hops_strictly_approach_target(seed in any::<u64>(), a in 0usize..150, b in 0usize..150) {
        let net = deploy_network(&DeploymentConfig::with_degree(150, 500.0, 8.0, seed)).unwrap();
        let dst = net.node(b).location;
        let route = greedy_geo_route(&net, a, dst).unwrap();
        prop_assert!(route.hops() <= net.len());
        for w in route.path.windows(2) {
            prop_assert!(net.node(w[1]).location.distance(&dst) < net.node(w[0]).location.distance(&dst));
        }
        if route.delivered() {
            prop_assert_eq!(route.last(), b);
        }
    }
}
