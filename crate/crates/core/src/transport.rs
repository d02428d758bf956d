//! Multi-packet messaging: fragmentation, reassembly and Go-Back-N endpoints.
//!
//! Endpoints are plain state machines. They never look at a clock; the
//! simulator decides when a retransmission timer has expired and feeds a
//! [`SenderEvent::Timeout`].

use bytes::{Buf, BufMut, Bytes, BytesMut};
use thiserror::Error;

use crate::graph::NodeId;
use crate::protocol::{AppMessage, DecodeError};

const KIND_DATA: u8 = 1;
const KIND_ACK: u8 = 2;

/// Bytes before the chunk / ack field.
pub const PACKET_HEADER_LEN: usize = 1 + 4 + 4 + 2 + 2 + 2;
/// Cumulative ack value meaning "nothing received in order yet".
pub const ACK_NONE: u16 = u16::MAX;
/// Largest supported `m`; `ACK_NONE` must stay out of the seq range.
pub const MAX_PACKETS: u16 = u16::MAX - 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("packets per message must be between 1 and {MAX_PACKETS}, got {0}")]
    InvalidPacketCount(usize),
    #[error("no packets to assemble")]
    NoPackets,
    #[error("incomplete message: missing seq {missing} of {total}")]
    Incomplete { missing: u16, total: u16 },
    #[error("packets belong to different messages")]
    MixedKeys,
    #[error("packet is not a data packet")]
    NotData,
    #[error("malformed packet: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Identifies one application message on one directed link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgKey {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub iteration: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PacketBody {
    Data(Bytes),
    /// Highest seq received in order, or [`ACK_NONE`].
    Ack(u16),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub key: MsgKey,
    pub seq: u16,
    pub total: u16,
    pub body: PacketBody,
}

impl Packet {
    pub fn is_data(&self) -> bool {
        matches!(self.body, PacketBody::Data(_))
    }

    pub fn wire_len(&self) -> usize {
        PACKET_HEADER_LEN
            + match &self.body {
                PacketBody::Data(chunk) => 4 + chunk.len(),
                PacketBody::Ack(_) => 2,
            }
    }

    /// Bit-exact big-endian wire form.
    pub fn encode(&self) -> Bytes {
        let mut buf = BytesMut::with_capacity(self.wire_len());
        buf.put_u8(match self.body {
            PacketBody::Data(_) => KIND_DATA,
            PacketBody::Ack(_) => KIND_ACK,
        });
        buf.put_u32(self.key.sender);
        buf.put_u32(self.key.receiver);
        buf.put_u16(self.key.iteration);
        buf.put_u16(self.seq);
        buf.put_u16(self.total);
        match &self.body {
            PacketBody::Data(chunk) => {
                buf.put_u32(chunk.len() as u32);
                buf.put_slice(chunk);
            }
            PacketBody::Ack(k) => buf.put_u16(*k),
        }
        buf.freeze()
    }

    pub fn decode(mut bytes: &[u8]) -> Result<Packet, TransportError> {
        if bytes.len() < PACKET_HEADER_LEN + 2 {
            return Err(TransportError::Malformed("short packet"));
        }
        let kind = bytes.get_u8();
        let key = MsgKey {
            sender: bytes.get_u32(),
            receiver: bytes.get_u32(),
            iteration: bytes.get_u16(),
        };
        let seq = bytes.get_u16();
        let total = bytes.get_u16();
        let body = match kind {
            KIND_DATA => {
                if bytes.len() < 4 {
                    return Err(TransportError::Malformed("short data header"));
                }
                let len = bytes.get_u32() as usize;
                if bytes.len() != len {
                    return Err(TransportError::Malformed("chunk length mismatch"));
                }
                PacketBody::Data(Bytes::copy_from_slice(bytes))
            }
            KIND_ACK => {
                let k = bytes.get_u16();
                if !bytes.is_empty() {
                    return Err(TransportError::Malformed("trailing ack bytes"));
                }
                PacketBody::Ack(k)
            }
            _ => return Err(TransportError::Malformed("unknown kind")),
        };
        if total == 0 || seq >= total {
            return Err(TransportError::Malformed("seq out of range"));
        }
        Ok(Packet {
            key,
            seq,
            total,
            body,
        })
    }

    fn ack_for(key: MsgKey, seq: u16, total: u16, cumulative: u16) -> Packet {
        Packet {
            key,
            seq,
            total,
            body: PacketBody::Ack(cumulative),
        }
    }
}

/// Splits `bytes` into `m` contiguous chunks whose sizes differ by at most
/// one; the first `len % m` chunks carry the extra byte.
pub fn fragment(key: MsgKey, bytes: &Bytes, m: usize) -> Result<Vec<Packet>, TransportError> {
    if m == 0 || m > MAX_PACKETS as usize {
        return Err(TransportError::InvalidPacketCount(m));
    }
    let base = bytes.len() / m;
    let extra = bytes.len() % m;
    let mut packets = Vec::with_capacity(m);
    let mut offset = 0;
    for seq in 0..m {
        let size = base + usize::from(seq < extra);
        packets.push(Packet {
            key,
            seq: seq as u16,
            total: m as u16,
            body: PacketBody::Data(bytes.slice(offset..offset + size)),
        });
        offset += size;
    }
    Ok(packets)
}

fn concat_chunks<'a>(chunks: impl Iterator<Item = &'a Bytes>) -> Bytes {
    let mut buf = BytesMut::new();
    for c in chunks {
        buf.put_slice(c);
    }
    buf.freeze()
}

/// Reassembles a complete packet set (any order) into the application message.
pub fn assemble(mut packets: Vec<Packet>) -> Result<AppMessage, TransportError> {
    let first = packets.first().ok_or(TransportError::NoPackets)?;
    let (key, total) = (first.key, first.total);
    if packets.iter().any(|p| p.key != key || p.total != total) {
        return Err(TransportError::MixedKeys);
    }
    if packets.iter().any(|p| !p.is_data()) {
        return Err(TransportError::NotData);
    }
    packets.sort_by_key(|p| p.seq);
    packets.dedup_by_key(|p| p.seq);
    for seq in 0..total {
        if packets.get(seq as usize).map(|p| p.seq) != Some(seq) {
            return Err(TransportError::Incomplete {
                missing: seq,
                total,
            });
        }
    }
    let bytes = concat_chunks(packets.iter().map(|p| match &p.body {
        PacketBody::Data(c) => c,
        PacketBody::Ack(_) => unreachable!(),
    }));
    Ok(AppMessage::decode(&bytes)?)
}

// ---------------------------------------------------------------------------
// Go-Back-N
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenderEvent {
    SendWindow,
    Ack(u16),
    Timeout,
}

/// Retry budget exhausted; the message is abandoned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("delivery failed after {retries} retransmission rounds")]
pub struct DeliveryFailure {
    pub retries: u32,
}

#[derive(Debug, Clone)]
pub struct GbnSender {
    key: MsgKey,
    packets: Vec<Packet>,
    window: usize,
    base: usize,
    next_seq: usize,
    timeout_ticks: u64,
    retries_used: u32,
    max_retries: Option<u32>,
    failed: bool,
}

impl GbnSender {
    /// `window` of zero is treated as one. `max_retries` of `None` never gives up.
    pub fn new(
        packets: Vec<Packet>,
        window: usize,
        timeout_ticks: u64,
        max_retries: Option<u32>,
    ) -> Self {
        let key = packets.first().map(|p| p.key).unwrap_or(MsgKey {
            sender: 0,
            receiver: 0,
            iteration: 0,
        });
        GbnSender {
            key,
            packets,
            window: window.max(1),
            base: 0,
            next_seq: 0,
            timeout_ticks,
            retries_used: 0,
            max_retries,
            failed: false,
        }
    }

    pub fn key(&self) -> MsgKey {
        self.key
    }
    pub fn base(&self) -> usize {
        self.base
    }
    pub fn next_seq(&self) -> usize {
        self.next_seq
    }
    pub fn window(&self) -> usize {
        self.window
    }
    pub fn timeout_ticks(&self) -> u64 {
        self.timeout_ticks
    }
    pub fn retries_used(&self) -> u32 {
        self.retries_used
    }
    pub fn total(&self) -> usize {
        self.packets.len()
    }
    pub fn is_complete(&self) -> bool {
        self.base == self.packets.len()
    }
    pub fn has_failed(&self) -> bool {
        self.failed
    }

    /// Packets sent but not yet acknowledged: seqs `[base, next_seq)`.
    pub fn unacked(&self) -> &[Packet] {
        &self.packets[self.base..self.next_seq]
    }

    /// Wire bytes of every packet not yet acknowledged, sent or not.
    pub fn buffered_bytes(&self) -> usize {
        if self.failed {
            return 0;
        }
        self.packets[self.base..].iter().map(Packet::wire_len).sum()
    }

    /// Advances the machine and returns the packets to put on the wire.
    ///
    /// An ack that moves the base resets the retry count, so the budget
    /// bounds consecutive timeouts without progress.
    pub fn step(&mut self, event: SenderEvent) -> Result<Vec<Packet>, DeliveryFailure> {
        if self.failed {
            return Err(DeliveryFailure {
                retries: self.retries_used,
            });
        }
        match event {
            SenderEvent::SendWindow => {
                let limit = (self.base + self.window).min(self.packets.len());
                let out = self.packets[self.next_seq.min(limit)..limit].to_vec();
                self.next_seq = self.next_seq.max(limit);
                Ok(out)
            }
            SenderEvent::Ack(k) => {
                let acked = k.wrapping_add(1) as usize;
                if acked > self.base && acked <= self.next_seq {
                    self.base = acked;
                    self.retries_used = 0;
                }
                Ok(Vec::new())
            }
            SenderEvent::Timeout => {
                if self.base == self.next_seq {
                    return Ok(Vec::new());
                }
                self.retries_used += 1;
                if self.max_retries.is_some_and(|max| self.retries_used > max) {
                    self.failed = true;
                    return Err(DeliveryFailure {
                        retries: self.retries_used,
                    });
                }
                Ok(self.unacked().to_vec())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GbnReceiver {
    key: MsgKey,
    total: u16,
    chunks: Vec<Bytes>,
    completed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiveOutcome {
    pub ack: Packet,
    /// Set exactly once, on the packet that completes the message.
    pub completed: Option<AppMessage>,
}

impl GbnReceiver {
    pub fn new(key: MsgKey, total: u16) -> Self {
        GbnReceiver {
            key,
            total,
            chunks: Vec::new(),
            completed: false,
        }
    }

    pub fn expected_seq(&self) -> u16 {
        self.chunks.len() as u16
    }

    pub fn is_complete(&self) -> bool {
        self.completed
    }

    pub fn buffered_bytes(&self) -> usize {
        if self.completed {
            0
        } else {
            self.chunks.iter().map(Bytes::len).sum()
        }
    }

    fn cumulative(&self) -> u16 {
        self.expected_seq().wrapping_sub(1)
    }

    /// Stores the packet if it is the next one expected, otherwise discards
    /// it; either way answers with the cumulative ack.
    pub fn receive(&mut self, packet: &Packet) -> Result<ReceiveOutcome, TransportError> {
        if packet.key != self.key || packet.total != self.total {
            return Err(TransportError::MixedKeys);
        }
        let PacketBody::Data(chunk) = &packet.body else {
            return Err(TransportError::NotData);
        };
        let mut completed = None;
        if !self.completed && packet.seq == self.expected_seq() {
            self.chunks.push(chunk.clone());
            if self.chunks.len() == self.total as usize {
                self.completed = true;
                let bytes = concat_chunks(self.chunks.iter());
                completed = Some(AppMessage::decode(&bytes)?);
                self.chunks = Vec::new();
            }
        }
        let cumulative = if self.completed {
            self.total - 1
        } else {
            self.cumulative()
        };
        Ok(ReceiveOutcome {
            ack: Packet::ack_for(self.key, packet.seq, self.total, cumulative),
            completed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> MsgKey {
        MsgKey {
            sender: 3,
            receiver: 8,
            iteration: 2,
        }
    }

    fn message() -> AppMessage {
        AppMessage::new(3, 2, [1, 4, 9, 16])
    }

    #[test]
    fn split_sizes() {
        let bytes = Bytes::from_static(&[0u8; 10]);
        let sizes: Vec<usize> = fragment(key(), &bytes, 3)
            .unwrap()
            .iter()
            .map(|p| p.wire_len() - PACKET_HEADER_LEN - 4)
            .collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        let one = fragment(key(), &bytes, 1).unwrap();
        assert_eq!(one[0].body, PacketBody::Data(bytes.clone()));
        let many = fragment(key(), &bytes, 50).unwrap();
        assert_eq!(many.len(), 50);
        assert_eq!(fragment(key(), &bytes, 0), Err(TransportError::InvalidPacketCount(0)));
    }

    #[test]
    fn assemble_round_trip_and_errors() {
        let bytes = message().encode();
        for m in [1, 3, 10, 50] {
            let mut packets = fragment(key(), &bytes, m).unwrap();
            packets.reverse();
            assert_eq!(assemble(packets.clone()).unwrap(), message());
            if m > 1 {
                packets.retain(|p| p.seq != 1);
                assert_eq!(
                    assemble(packets),
                    Err(TransportError::Incomplete {
                        missing: 1,
                        total: m as u16
                    })
                );
            }
        }
        let mut packets = fragment(key(), &bytes, 2).unwrap();
        packets[1].key.iteration = 9;
        assert_eq!(assemble(packets), Err(TransportError::MixedKeys));
    }

    #[test]
    fn packet_wire_format() {
        let p = Packet {
            key: key(),
            seq: 1,
            total: 4,
            body: PacketBody::Data(Bytes::from_static(&[0xAA, 0xBB])),
        };
        let bytes = p.encode();
        assert_eq!(
            bytes.as_ref(),
            &[1, 0, 0, 0, 3, 0, 0, 0, 8, 0, 2, 0, 1, 0, 4, 0, 0, 0, 2, 0xAA, 0xBB]
        );
        assert_eq!(Packet::decode(&bytes).unwrap(), p);
        let ack = Packet::ack_for(key(), 1, 4, 0);
        let bytes = ack.encode();
        assert_eq!(bytes.len(), ack.wire_len());
        assert_eq!(&bytes[15..], &[0, 0]);
        assert_eq!(Packet::decode(&bytes).unwrap(), ack);
        assert!(Packet::decode(&bytes[..10]).is_err());
    }

    #[test]
    fn loss_free_gbn_sends_m_packets() {
        let bytes = message().encode();
        let mut tx = GbnSender::new(fragment(key(), &bytes, 4).unwrap(), 8, 4, None);
        let mut rx = GbnReceiver::new(key(), 4);
        let sent = tx.step(SenderEvent::SendWindow).unwrap();
        assert_eq!(sent.len(), 4);
        let mut done = None;
        for p in &sent {
            let out = rx.receive(p).unwrap();
            if out.completed.is_some() {
                done = out.completed;
            }
            let PacketBody::Ack(k) = out.ack.body else { panic!() };
            tx.step(SenderEvent::Ack(k)).unwrap();
        }
        assert_eq!(done, Some(message()));
        assert!(tx.is_complete());
        assert!(tx.step(SenderEvent::SendWindow).unwrap().is_empty());
        assert_eq!(tx.retries_used(), 0);
    }

    #[test]
    fn window_limits_outstanding_packets() {
        let bytes = message().encode();
        let mut tx = GbnSender::new(fragment(key(), &bytes, 4).unwrap(), 2, 4, None);
        let first = tx.step(SenderEvent::SendWindow).unwrap();
        assert_eq!(first.iter().map(|p| p.seq).collect::<Vec<_>>(), vec![0, 1]);
        assert!(tx.step(SenderEvent::SendWindow).unwrap().is_empty());
        tx.step(SenderEvent::Ack(0)).unwrap();
        let next = tx.step(SenderEvent::SendWindow).unwrap();
        assert_eq!(next.iter().map(|p| p.seq).collect::<Vec<_>>(), vec![2]);
        // stale ack leaves the sender untouched
        tx.step(SenderEvent::Ack(ACK_NONE)).unwrap();
        assert_eq!(tx.base(), 1);
        let resent = tx.step(SenderEvent::Timeout).unwrap();
        assert_eq!(resent.iter().map(|p| p.seq).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(tx.retries_used(), 1);
    }

    #[test]
    fn retry_budget() {
        let bytes = message().encode();
        let mut tx = GbnSender::new(fragment(key(), &bytes, 1).unwrap(), 1, 4, Some(2));
        tx.step(SenderEvent::SendWindow).unwrap();
        assert!(tx.step(SenderEvent::Timeout).is_ok());
        assert!(tx.step(SenderEvent::Timeout).is_ok());
        assert_eq!(tx.step(SenderEvent::Timeout), Err(DeliveryFailure { retries: 3 }));
        assert!(tx.has_failed());
        assert_eq!(tx.buffered_bytes(), 0);
    }

    #[test]
    fn receiver_discards_out_of_order() {
        let bytes = message().encode();
        let packets = fragment(key(), &bytes, 3).unwrap();
        let mut rx = GbnReceiver::new(key(), 3);
        let out = rx.receive(&packets[1]).unwrap();
        assert_eq!(out.ack.body, PacketBody::Ack(ACK_NONE));
        assert_eq!(rx.expected_seq(), 0);
        rx.receive(&packets[0]).unwrap();
        let dup = rx.receive(&packets[0]).unwrap();
        assert_eq!(dup.ack.body, PacketBody::Ack(0));
        assert_eq!(rx.expected_seq(), 1);
        rx.receive(&packets[1]).unwrap();
        let last = rx.receive(&packets[2]).unwrap();
        assert_eq!(last.completed, Some(message()));
        let again = rx.receive(&packets[2]).unwrap();
        assert!(again.completed.is_none());
        assert_eq!(again.ack.body, PacketBody::Ack(2));
    }
}
