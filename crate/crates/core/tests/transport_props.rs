mod common;

use bytes::Bytes;
use proptest::prelude::*;
use prunesim::protocol::{AppMessage, Envelope};
use prunesim::simnet::{Network, ScriptedChannel, ScriptedDrop, SimConfig};
use prunesim::transport::{
    assemble, fragment, GbnReceiver, GbnSender, MsgKey, Packet, PacketBody, SenderEvent, ACK_NONE,
};

const STANDARD_M: [u16; 5] = [1, 10, 20, 30, 50];

fn key(sender: u32, receiver: u32, iteration: u16) -> MsgKey {
    MsgKey {
        sender,
        receiver,
        iteration,
    }
}

fn m_value() -> impl Strategy<Value = u16> {
    prop_oneof![proptest::sample::select(STANDARD_M.to_vec()), 1u16..=64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fragment_assemble_round_trip(
        ids in proptest::collection::vec(any::<u32>(), 0..120),
        sender in any::<u32>(),
        iteration in any::<u16>(),
        m in m_value(),
        order_seed in any::<u64>(),
    ) {
        let msg = AppMessage::new(sender, iteration, ids);
        let bytes = msg.encode();
        let mut packets = fragment(key(sender, sender.wrapping_add(1), iteration), &bytes, m as usize).unwrap();
        prop_assert_eq!(packets.len(), m as usize);
        let sizes: Vec<usize> = packets
            .iter()
            .map(|p| match &p.body {
                PacketBody::Data(c) => c.len(),
                PacketBody::Ack(_) => unreachable!(),
            })
            .collect();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
        prop_assert_eq!(sizes.iter().sum::<usize>(), bytes.len());
        // any arrival order reassembles
        let n = packets.len();
        for i in (1..n).rev() {
            packets.swap(i, (order_seed as usize).wrapping_mul(i + 7) % (i + 1));
        }
        let wire: Vec<Packet> = packets.iter().map(|p| Packet::decode(&p.encode()).unwrap()).collect();
        prop_assert_eq!(&wire, &packets);
        prop_assert_eq!(assemble(wire).unwrap(), msg);
    }
}

#[test]
fn every_standard_m_round_trips() {
    let msg = AppMessage::new(3, 2, (0..40).map(|i| i * 7));
    for m in STANDARD_M {
        let packets = fragment(key(3, 4, 2), &msg.encode(), m as usize).unwrap();
        assert_eq!(assemble(packets).unwrap(), msg);
    }
}

/// Perfect in-memory link: every packet arrives, acks come straight back.
fn lossless_gbn(m: u16, window: usize) -> (usize, AppMessage) {
    let msg = AppMessage::new(1, 0, [2, 3, 4, 5]);
    let packets = fragment(key(1, 2, 0), &msg.encode(), m as usize).unwrap();
    let mut sender = GbnSender::new(packets, window, 4, None);
    let mut receiver = GbnReceiver::new(key(1, 2, 0), m);
    let mut sent = 0;
    let mut done = None;
    let mut queue = sender.step(SenderEvent::SendWindow).unwrap();
    while !queue.is_empty() {
        let mut next = Vec::new();
        for p in queue {
            sent += 1;
            let out = receiver.receive(&p).unwrap();
            if let Some(m) = out.completed {
                done = Some(m);
            }
            let PacketBody::Ack(a) = out.ack.body else { panic!() };
            assert_ne!(a, ACK_NONE);
            assert!(sender.step(SenderEvent::Ack(a)).unwrap().is_empty());
            next.extend(sender.step(SenderEvent::SendWindow).unwrap());
        }
        queue = next;
    }
    assert!(sender.is_complete());
    (sent, done.unwrap())
}

#[test]
fn lossless_go_back_n_sends_exactly_m() {
    for m in STANDARD_M {
        for window in [1, 2, 8, m as usize] {
            let (sent, msg) = lossless_gbn(m, window);
            assert_eq!(sent, m as usize, "m={m} window={window}");
            assert_eq!(msg.payload, vec![2, 3, 4, 5]);
        }
    }
}

#[test]
fn scripted_trace_matches_frozen_fixture() {
    let fixture = include_str!("fixtures/gbn_m4_w2_drop_seq1.txt");
    let expected: Vec<&str> = fixture.lines().filter(|l| !l.starts_with('#')).collect();
    let mut channel = ScriptedChannel::new(vec![ScriptedDrop {
        key: key(0, 1, 0),
        seq: 1,
        occurrence: 0,
    }]);
    let cfg = SimConfig {
        m: 4,
        window: Some(2),
        ..SimConfig::default()
    };
    let mut net = Network::new(2, cfg, &mut channel);
    net.enable_trace();
    let out = net
        .exchange(vec![Envelope {
            to: 1,
            message: AppMessage::new(0, 0, [1, 5, 6]),
        }])
        .unwrap();
    assert_eq!(out[&1], vec![AppMessage::new(0, 0, [1, 5, 6])]);
    assert_eq!(common::render_trace(&net.take_trace()), expected);
}

#[test]
fn packet_decode_rejects_garbage() {
    assert!(Packet::decode(&[]).is_err());
    assert!(Packet::decode(&[9; 20]).is_err());
    let p = fragment(key(0, 1, 0), &Bytes::from_static(b"abcdef"), 2).unwrap();
    let wire = p[0].encode();
    assert!(Packet::decode(&wire[..wire.len() - 1]).is_err());
}
