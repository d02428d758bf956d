mod common;

use common::{connected_graph, star};
use proptest::prelude::*;
use prunesim::graph::{generate_geometric, GeometricSpec};
use prunesim::simnet::{run_simulation, LossModel, SimConfig};
use prunesim::Variant;

fn cfg(m: u16, d: u32, variant: Variant) -> SimConfig {
    SimConfig {
        m,
        max_iterations: d,
        variant,
        ..SimConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loss_free_packet_accounting(g in connected_graph(25), m in 1u16..12, d in 1u32..8) {
        let r = run_simulation(&g, &cfg(m, d, Variant::Original)).unwrap();
        prop_assert_eq!(r.app_messages_lost, 0);
        prop_assert_eq!(r.loss_fraction, 0.0);
        let total: u64 = r.nodes.iter().map(|n| n.packets_sent).sum();
        prop_assert_eq!(total, m as u64 * r.app_messages_sent);
        for n in &r.nodes {
            prop_assert_eq!(n.retransmissions, 0);
            prop_assert_eq!(n.packets_sent, m as u64 * n.app_messages_sent);
            prop_assert!(n.packets_sent <= m as u64 * n.degree as u64 * d as u64);
        }
        let received: u64 = r.nodes.iter().map(|n| n.packets_received).sum();
        prop_assert_eq!(received, total);
    }

    #[test]
    fn enhanced_never_sends_more(g in connected_graph(25), m in 1u16..6, d in 1u32..8) {
        let p = run_simulation(&g, &cfg(m, d, Variant::Original)).unwrap();
        let i = run_simulation(&g, &cfg(m, d, Variant::Enhanced)).unwrap();
        for (a, b) in p.nodes.iter().zip(&i.nodes) {
            prop_assert!(b.packets_sent <= a.packets_sent);
        }
        prop_assert!(i.avg_msgs <= p.avg_msgs);
        prop_assert_eq!(p.leader, i.leader);
    }

    #[test]
    fn seeded_runs_repeat(g in connected_graph(20), seed in any::<u64>(), loss in 0.0f64..0.5) {
        let c = SimConfig {
            m: 3,
            loss_p: loss,
            seed,
            max_retries: Some(4),
            ..SimConfig::default()
        };
        let a = run_simulation(&g, &c).unwrap();
        let b = run_simulation(&g, &c).unwrap();
        prop_assert!(a.same_outcome(&b));
    }
}

#[test]
fn unbounded_retries_lose_nothing() {
    let g = generate_geometric(&GeometricSpec { grid_side: 40, ..GeometricSpec::new(60, 7) }).unwrap();
    for model in [LossModel::PerPacket, LossModel::PerByte] {
        let loss_p = match model {
            LossModel::PerPacket => 0.3,
            LossModel::PerByte => 0.01,
        };
        let c = SimConfig {
            m: 10,
            loss_p,
            loss_model: model,
            max_retries: None,
            seed: 11,
            ..SimConfig::default()
        };
        let r = run_simulation(&g, &c).unwrap();
        assert!(r.app_messages_sent >= 1000, "only {} messages", r.app_messages_sent);
        assert_eq!(r.app_messages_lost, 0);
        assert!(r.nodes.iter().any(|n| n.retransmissions > 0));
        let lossless = run_simulation(&g, &SimConfig { loss_p: 0.0, ..c }).unwrap();
        assert_eq!(r.estimates(), lossless.estimates());
        assert!(r.ticks > lossless.ticks);
    }
}

#[test]
fn bounded_retries_can_lose_messages() {
    let g = star(6);
    let c = SimConfig {
        m: 10,
        loss_p: 0.6,
        max_retries: Some(0),
        seed: 3,
        ..SimConfig::default()
    };
    let r = run_simulation(&g, &c).unwrap();
    assert!(r.app_messages_lost > 0);
    assert!(r.loss_fraction > 0.0 && r.loss_fraction <= 1.0);
}

#[test]
fn padding_raises_memory_not_messages() {
    let g = star(4);
    let plain = run_simulation(&g, &SimConfig::default()).unwrap();
    let padded = run_simulation(
        &g,
        &SimConfig {
            payload_bytes: 1024,
            ..SimConfig::default()
        },
    )
    .unwrap();
    assert_eq!(plain.app_messages_sent, padded.app_messages_sent);
    assert!(padded.mem_proxy > plain.mem_proxy);
}
