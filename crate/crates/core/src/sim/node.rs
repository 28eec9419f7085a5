//! End-node behaviour: Ethernet hosts, EoC nodes and dual-stack IoC nodes.
//!
//! A node reacts to sends, receptions and timers by returning a
//! [`NodeOutput`]; it never touches the medium or the clock itself.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::codec::eoc::EocFilter;
use crate::codec::ethernet::{ETHERTYPE_ARP, ETHERTYPE_EXPERIMENTAL, ETHERTYPE_IPV4, MTU};
use crate::codec::{
    arp_parse, arp_serialize, eoc_encapsulate, eoc_filter, ioc_decapsulate, ioc_encode, ArpMessage, ArpOp, BusFrame,
    CanXlFrame, ClassicCanFrame, EthernetFrame, IocDatagram, Ipv4Address, Ipv4Packet, MacAddress, SduType,
};
use crate::switch::PortFrame;
use crate::time::SimTime;

pub const ARP_RETRY: SimTime = SimTime::from_secs(1);
pub const DEFAULT_EOC_REFRESH: SimTime = SimTime::from_secs(60);
/// IP protocol number used for flow payloads (UDP-sized, carried opaque).
pub const FLOW_PROTOCOL: u8 = 17;
pub const DEFAULT_TTL: u8 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    EthernetHost,
    EocNode,
    IocNode,
}

impl NodeKind {
    pub fn on_can(self) -> bool {
        !matches!(self, NodeKind::EthernetHost)
    }
}

/// Identifies one application message of one flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgTag {
    pub flow: usize,
    pub seq: u32,
}

pub type Tag = Option<MsgTag>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ArpEntry {
    mac: MacAddress,
    is_static: bool,
}

#[derive(Debug, Clone)]
struct Outgoing {
    payload: Vec<u8>,
    tag: Tag,
    priority: Option<u16>,
}

#[derive(Debug, Clone, Default)]
struct Pending {
    queue: Vec<Outgoing>,
    retried: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeTimer {
    ArpRetry(Ipv4Address),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub tag: Tag,
    pub payload: Vec<u8>,
}

#[derive(Debug, Default)]
pub struct NodeOutput {
    pub frames: Vec<(PortFrame, Tag)>,
    pub timers: Vec<(SimTime, NodeTimer)>,
    pub delivered: Vec<Delivery>,
    /// Frames the node discarded, with the reason.
    pub filtered: Vec<(Tag, &'static str)>,
    /// Messages given up on.
    pub drops: Vec<(Tag, &'static str)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct NodeCounters {
    pub frames_sent: u64,
    pub eoc_sent: u64,
    pub ioc_sent: u64,
    pub eoc_refresh: u64,
    pub arp_requests: u64,
    pub arp_replies: u64,
    pub gratuitous_sent: u64,
    pub delivered: u64,
    pub hw_filtered: u64,
    pub af_false_positive: u64,
    pub not_for_us: u64,
    pub arp_unresolved: u64,
}

#[derive(Debug, Clone)]
pub struct NodeSetup {
    pub name: String,
    pub kind: NodeKind,
    pub mac: MacAddress,
    pub ip: Option<Ipv4Address>,
    pub priority: u16,
    pub vcid: u8,
    pub static_arp: Vec<(Ipv4Address, MacAddress)>,
    pub start: SimTime,
    pub gratuitous_arp: bool,
    pub eoc_refresh: Option<SimTime>,
    pub can_rx_ids: Vec<u16>,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
    pub mac: MacAddress,
    pub ip: Option<Ipv4Address>,
    pub priority: u16,
    vcid: u8,
    arp: BTreeMap<Ipv4Address, ArpEntry>,
    pending: BTreeMap<Ipv4Address, Pending>,
    pub start: SimTime,
    gratuitous_arp: bool,
    eoc_refresh: Option<SimTime>,
    last_eoc: SimTime,
    can_rx_ids: BTreeSet<u16>,
    pub counters: NodeCounters,
}

impl Node {
    pub fn new(setup: NodeSetup) -> Self {
        Node {
            arp: setup
                .static_arp
                .iter()
                .map(|&(ip, mac)| (ip, ArpEntry { mac, is_static: true }))
                .collect(),
            name: setup.name,
            kind: setup.kind,
            mac: setup.mac,
            ip: setup.ip,
            priority: setup.priority,
            vcid: setup.vcid,
            pending: BTreeMap::new(),
            start: setup.start,
            gratuitous_arp: setup.gratuitous_arp,
            eoc_refresh: setup.eoc_refresh,
            last_eoc: setup.start,
            can_rx_ids: setup.can_rx_ids.into_iter().collect(),
            counters: NodeCounters::default(),
        }
    }

    pub fn arp_lookup(&self, ip: Ipv4Address) -> Option<MacAddress> {
        self.arp.get(&ip).map(|e| e.mac)
    }

    /// Announcement at start time: a gratuitous ARP reply from every IoC
    /// node and every node with static ARP entries.
    pub fn startup(&mut self) -> NodeOutput {
        let mut out = NodeOutput::default();
        let wants = self.kind == NodeKind::IocNode || self.arp.values().any(|e| e.is_static);
        if let (true, true, Some(ip)) = (self.gratuitous_arp, wants, self.ip) {
            self.counters.gratuitous_sent += 1;
            let frame = arp_serialize(&ArpMessage::gratuitous(self.mac, ip));
            self.emit_ethernet(&mut out, frame, None, None);
        }
        out
    }

    /// Application send of an IP datagram carrying `payload`.
    pub fn send_ip(
        &mut self,
        dst: Ipv4Address,
        payload: Vec<u8>,
        tag: Tag,
        priority: Option<u16>,
        now: SimTime,
    ) -> NodeOutput {
        let mut out = NodeOutput::default();
        let Some(own_ip) = self.ip else {
            out.drops.push((tag, "no_ip"));
            return out;
        };
        let msg = Outgoing { payload, tag, priority };
        if dst.is_broadcast() {
            self.transmit_ip(&mut out, MacAddress::BROADCAST, own_ip, dst, msg, now);
            return out;
        }
        if let Some(mac) = self.arp_lookup(dst) {
            self.transmit_ip(&mut out, mac, own_ip, dst, msg, now);
            return out;
        }
        let first = !self.pending.contains_key(&dst);
        self.pending.entry(dst).or_default().queue.push(msg);
        if first {
            self.send_arp_request(&mut out, own_ip, dst);
            out.timers.push((now + ARP_RETRY, NodeTimer::ArpRetry(dst)));
        }
        out
    }

    /// Raw Ethernet payload to a MAC, local experimental EtherType.
    pub fn send_raw(&mut self, dst: MacAddress, payload: Vec<u8>, tag: Tag, priority: Option<u16>) -> NodeOutput {
        let mut out = NodeOutput::default();
        match EthernetFrame::new(dst, self.mac, ETHERTYPE_EXPERIMENTAL, payload) {
            Ok(frame) => self.emit_ethernet(&mut out, frame, tag, priority),
            Err(_) => out.drops.push((tag, "too_large")),
        }
        out
    }

    /// Classic CAN frame from the node's CAN stack.
    pub fn send_classic(&mut self, id: u16, payload: Vec<u8>, tag: Tag) -> NodeOutput {
        let mut out = NodeOutput::default();
        match ClassicCanFrame::new(id, payload) {
            Ok(frame) if self.kind.on_can() => {
                self.counters.frames_sent += 1;
                out.frames.push((PortFrame::Can(frame.into()), tag));
            }
            _ => out.drops.push((tag, "not_sendable")),
        }
        out
    }

    pub fn timer(&mut self, timer: NodeTimer, now: SimTime) -> NodeOutput {
        let mut out = NodeOutput::default();
        match timer {
            NodeTimer::ArpRetry(ip) => {
                let Some(p) = self.pending.get_mut(&ip) else {
                    return out;
                };
                if p.retried {
                    let p = self.pending.remove(&ip).expect("present");
                    self.counters.arp_unresolved += 1;
                    out.drops.extend(p.queue.into_iter().map(|m| (m.tag, "arp_unresolved")));
                } else {
                    p.retried = true;
                    let own = self.ip.expect("pending implies an address");
                    self.send_arp_request(&mut out, own, ip);
                    out.timers.push((now + ARP_RETRY, NodeTimer::ArpRetry(ip)));
                }
            }
        }
        out
    }

    pub fn receive(&mut self, frame: &PortFrame, tag: Tag, now: SimTime) -> NodeOutput {
        let mut out = NodeOutput::default();
        match frame {
            PortFrame::Ethernet(eth) => {
                if self.kind.on_can() {
                    return out;
                }
                if eth.da != self.mac && !eth.da.is_group() {
                    self.counters.hw_filtered += 1;
                    out.filtered.push((tag, "da_mismatch"));
                    return out;
                }
                self.receive_ethernet(&mut out, eth, tag, now);
            }
            PortFrame::Can(BusFrame::Classic(c)) => {
                if self.kind.on_can() && self.can_rx_ids.contains(&c.id()) {
                    self.counters.delivered += 1;
                    out.delivered.push(Delivery {
                        tag,
                        payload: c.data().to_vec(),
                    });
                } else {
                    self.counters.hw_filtered += 1;
                    out.filtered.push((tag, "can_id_filter"));
                }
            }
            PortFrame::Can(BusFrame::Xl(xl)) => self.receive_canxl(&mut out, xl, tag, now),
        }
        out
    }

    fn receive_canxl(&mut self, out: &mut NodeOutput, xl: &CanXlFrame, tag: Tag, now: SimTime) {
        match xl.sdt {
            SduType::Ethernet => match eoc_filter(xl, self.mac) {
                Ok(EocFilter::Accepted) => {
                    let eth = crate::codec::eoc_decapsulate(xl).expect("filter decapsulated it");
                    self.receive_ethernet(out, &eth, tag, now);
                }
                Ok(EocFilter::HardwareRejected) => {
                    self.counters.hw_filtered += 1;
                    out.filtered.push((tag, "af_mismatch"));
                }
                Ok(EocFilter::FalsePositive) => {
                    self.counters.af_false_positive += 1;
                    out.filtered.push((tag, "af_false_positive"));
                }
                Err(_) => out.filtered.push((tag, "malformed")),
            },
            SduType::Ipv4 if self.kind == NodeKind::IocNode => {
                let own = self.ip.map(u32::from);
                if Some(xl.af) != own && xl.af != u32::MAX {
                    self.counters.hw_filtered += 1;
                    out.filtered.push((tag, "af_mismatch"));
                    return;
                }
                match ioc_decapsulate(xl) {
                    Ok(d) => {
                        self.counters.delivered += 1;
                        out.delivered.push(Delivery {
                            tag,
                            payload: d.payload,
                        });
                    }
                    Err(_) => out.filtered.push((tag, "malformed")),
                }
            }
            _ => {
                self.counters.hw_filtered += 1;
                out.filtered.push((tag, "sdt_filter"));
            }
        }
    }

    fn receive_ethernet(&mut self, out: &mut NodeOutput, eth: &EthernetFrame, tag: Tag, now: SimTime) {
        match eth.ethertype {
            ETHERTYPE_ARP => {
                if let Ok(msg) = arp_parse(eth) {
                    self.receive_arp(out, &msg, now);
                }
            }
            ETHERTYPE_IPV4 => match Ipv4Packet::decode(&eth.payload) {
                Ok(p) if Some(p.dst) == self.ip || p.dst.is_broadcast() => {
                    self.counters.delivered += 1;
                    out.delivered.push(Delivery {
                        tag,
                        payload: p.payload,
                    });
                }
                Ok(_) => {
                    self.counters.not_for_us += 1;
                    out.filtered.push((tag, "ip_mismatch"));
                }
                Err(_) => out.filtered.push((tag, "malformed")),
            },
            ETHERTYPE_EXPERIMENTAL => {
                self.counters.delivered += 1;
                out.delivered.push(Delivery {
                    tag,
                    payload: eth.payload.clone(),
                });
            }
            // BPDUs and anything else the node has no stack for.
            _ => {}
        }
    }

    fn learn_arp(&mut self, ip: Ipv4Address, mac: MacAddress, insert: bool) {
        match self.arp.get_mut(&ip) {
            Some(e) if e.is_static => {}
            Some(e) => e.mac = mac,
            None if insert => {
                self.arp.insert(ip, ArpEntry { mac, is_static: false });
            }
            None => {}
        }
    }

    fn receive_arp(&mut self, out: &mut NodeOutput, msg: &ArpMessage, now: SimTime) {
        let Some(own) = self.ip else {
            return;
        };
        let for_us = msg.tpa == own && msg.spa != own;
        let pending = self.pending.contains_key(&msg.spa);
        // RFC 826 merge: refresh known senders, add them when addressed to us.
        self.learn_arp(msg.spa, msg.sha, for_us || pending);
        if msg.op == ArpOp::Request && for_us {
            self.counters.arp_replies += 1;
            let reply = arp_serialize(&ArpMessage::reply(self.mac, own, msg.sha, msg.spa));
            self.emit_ethernet(out, reply, None, None);
        }
        if let (Some(mac), Some(p)) = (self.arp_lookup(msg.spa), self.pending.remove(&msg.spa)) {
            for m in p.queue {
                self.transmit_ip(out, mac, own, msg.spa, m, now);
            }
        }
    }

    fn send_arp_request(&mut self, out: &mut NodeOutput, own: Ipv4Address, target: Ipv4Address) {
        self.counters.arp_requests += 1;
        let frame = arp_serialize(&ArpMessage::request(self.mac, own, target));
        self.emit_ethernet(out, frame, None, None);
    }

    fn transmit_ip(
        &mut self,
        out: &mut NodeOutput,
        mac: MacAddress,
        src: Ipv4Address,
        dst: Ipv4Address,
        msg: Outgoing,
        now: SimTime,
    ) {
        let packet = Ipv4Packet {
            ttl: DEFAULT_TTL,
            ..Ipv4Packet::simple(src, dst, FLOW_PROTOCOL, msg.payload)
        };
        if self.kind == NodeKind::IocNode {
            let refresh_due = self
                .eoc_refresh
                .is_some_and(|iv| now.saturating_sub(self.last_eoc) >= iv);
            if !refresh_due {
                let encoded = IocDatagram::try_from(&packet)
                    .and_then(|d| ioc_encode(&d, msg.priority.unwrap_or(self.priority), self.vcid));
                if let Ok(xl) = encoded {
                    self.counters.frames_sent += 1;
                    self.counters.ioc_sent += 1;
                    out.frames.push((PortFrame::Can(xl.into()), msg.tag));
                    return;
                }
            } else {
                self.counters.eoc_refresh += 1;
            }
            self.last_eoc = now;
        }
        if packet.total_len() > MTU {
            out.drops.push((msg.tag, "too_large"));
            return;
        }
        let bytes = packet.encode().expect("plain datagram encodes");
        let frame = EthernetFrame::new(mac, self.mac, ETHERTYPE_IPV4, bytes).expect("fits the MTU");
        self.emit_ethernet(out, frame, msg.tag, msg.priority);
    }

    /// Sends an Ethernet frame natively or as EoC, depending on the node.
    fn emit_ethernet(&mut self, out: &mut NodeOutput, frame: EthernetFrame, tag: Tag, priority: Option<u16>) {
        self.counters.frames_sent += 1;
        if self.kind.on_can() {
            self.counters.eoc_sent += 1;
            let xl = eoc_encapsulate(&frame, priority.unwrap_or(self.priority), self.vcid)
                .expect("Ethernet frames fit CAN XL");
            out.frames.push((PortFrame::Can(xl.into()), tag));
        } else {
            out.frames.push((PortFrame::Ethernet(frame), tag));
        }
    }
}
