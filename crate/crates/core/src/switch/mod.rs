//! The composite switch (C-switch).
//!
//! An Ethernet switching core with backward learning sits in the middle.
//! CAN XL ports reach it through an EoC tunneller that decapsulates on
//! ingress and encapsulates on egress. IoC datagrams are forwarded on the
//! IP-indexed half of the EFDB, and rebuilt into Ethernet frames from the
//! MAC addresses the EFDB learned by ARP snooping. Classic CAN frames
//! bypass the core and go through the static relay table.

pub mod efdb;
pub mod relay;
pub mod stp;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::{
    eoc_decapsulate, eoc_encapsulate, ethernet_to_ioc, ioc_decapsulate, ioc_encode, ioc_to_ethernet, BusFrame,
    CodecError, EthernetFrame, IocDatagram, Ipv4Address, MacAddress, SduType,
};
use crate::time::SimTime;

pub use efdb::{Efdb, EfdbEntry, Evidence};
pub use relay::{relay_legacy, LegacyRelayRule, RelayTarget};
pub use stp::{Bpdu, PortRole, SpanningTree};

pub type PortId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EgressMode {
    #[default]
    Eoc,
    IocPreferred,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CanPortConfig {
    pub egress_mode: EgressMode,
    /// Priority of every CAN XL frame this port sends.
    pub priority_base: u16,
    pub vcid: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortKind {
    Ethernet,
    CanXl(CanPortConfig),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortConfig {
    pub id: PortId,
    pub kind: PortKind,
    pub stp_cost: u32,
}

impl PortConfig {
    pub fn ethernet(id: PortId) -> Self {
        PortConfig {
            id,
            kind: PortKind::Ethernet,
            stp_cost: stp::DEFAULT_ETHERNET_COST,
        }
    }

    pub fn can(id: PortId, egress_mode: EgressMode, priority_base: u16) -> Self {
        PortConfig {
            id,
            kind: PortKind::CanXl(CanPortConfig {
                egress_mode,
                priority_base,
                vcid: 0,
            }),
            stp_cost: stp::DEFAULT_CAN_COST,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SwitchConfig {
    pub bridge_id: u64,
    pub ports: Vec<PortConfig>,
    pub relay_rules: Vec<LegacyRelayRule>,
    pub ageing: SimTime,
    pub stp: bool,
}

impl SwitchConfig {
    pub fn new(bridge_id: u64, ports: Vec<PortConfig>) -> Self {
        SwitchConfig {
            bridge_id,
            ports,
            relay_rules: Vec::new(),
            ageing: efdb::DEFAULT_AGEING,
            stp: true,
        }
    }
}

/// A frame as seen on one port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PortFrame {
    Ethernet(EthernetFrame),
    Can(BusFrame),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Destination sits behind the ingress port.
    NoRouteSelf,
    /// IoC datagram needs a MAC the EFDB does not have.
    ReconstructionFailure,
    StpBlocked,
    /// IoC datagram larger than the Ethernet MTU.
    TooLarge,
    /// Classic CAN frame without a relay rule.
    NoRelayRule,
    Malformed,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoRouteSelf => "no_route_self",
            DropReason::ReconstructionFailure => "reconstruction_failure",
            DropReason::StpBlocked => "stp_blocked",
            DropReason::TooLarge => "too_large",
            DropReason::NoRelayRule => "no_relay_rule",
            DropReason::Malformed => "malformed",
        }
    }
}

/// How the core disposed of one ingress frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Unicast(PortId),
    Flood,
    /// Spanning tree traffic, handled locally.
    Control,
    Relayed,
    Dropped(DropReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchOutput {
    pub decision: Decision,
    /// Data frames, already encoded for their egress port.
    pub data: Vec<(PortId, PortFrame)>,
    /// BPDUs triggered by this frame.
    pub control: Vec<(PortId, PortFrame)>,
    /// Per-egress drops; the whole-frame drop is in `decision`.
    pub drops: Vec<(PortId, DropReason)>,
}

impl SwitchOutput {
    fn decided(decision: Decision) -> Self {
        SwitchOutput {
            decision,
            data: Vec::new(),
            control: Vec::new(),
            drops: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SwitchCounters {
    pub received: u64,
    pub forwarded: u64,
    pub flooded: u64,
    pub relayed: u64,
    pub bpdu_rx: u64,
    pub bpdu_tx: u64,
    pub bpdu_malformed: u64,
    pub drops: BTreeMap<&'static str, u64>,
}

impl SwitchCounters {
    fn drop(&mut self, reason: DropReason) {
        *self.drops.entry(reason.as_str()).or_default() += 1;
    }
}

/// Ingress traffic after the tunneller.
enum Normalized {
    Ethernet(EthernetFrame),
    Ioc(IocDatagram),
}

#[derive(Debug, Clone)]
pub struct CSwitch {
    ports: BTreeMap<PortId, PortConfig>,
    mac: MacAddress,
    efdb: Efdb,
    stp: Option<SpanningTree>,
    relay_rules: Vec<LegacyRelayRule>,
    pub counters: SwitchCounters,
}

impl CSwitch {
    pub fn new(config: SwitchConfig) -> Self {
        let b = config.bridge_id.to_be_bytes();
        // Low 48 bits of the bridge id, forced individual.
        let mac = MacAddress([b[2] & 0xfe, b[3], b[4], b[5], b[6], b[7]]);
        let stp = config
            .stp
            .then(|| SpanningTree::new(config.bridge_id, config.ports.iter().map(|p| (p.id, p.stp_cost))));
        CSwitch {
            ports: config.ports.into_iter().map(|p| (p.id, p)).collect(),
            mac,
            efdb: Efdb::new(config.ageing),
            stp,
            relay_rules: config.relay_rules,
            counters: SwitchCounters::default(),
        }
    }

    pub fn efdb(&self) -> &Efdb {
        &self.efdb
    }

    pub fn spanning_tree(&self) -> Option<&SpanningTree> {
        self.stp.as_ref()
    }

    pub fn ports(&self) -> impl Iterator<Item = &PortConfig> {
        self.ports.values()
    }

    pub fn port_role(&self, port: PortId) -> PortRole {
        match &self.stp {
            Some(stp) => stp.role(port).unwrap_or(PortRole::Blocked),
            None => PortRole::Designated,
        }
    }

    fn forwarding(&self, port: PortId) -> bool {
        self.port_role(port).forwards()
    }

    pub fn age_out(&mut self, now: SimTime) {
        self.efdb.age_out(now);
    }

    /// BPDUs for every Designated port; empty with STP disabled.
    pub fn hello(&mut self) -> Vec<(PortId, PortFrame)> {
        let Some(stp) = &self.stp else {
            return Vec::new();
        };
        let out: Vec<(PortId, PortFrame)> = stp
            .hello()
            .into_iter()
            .filter_map(|(port, bpdu)| {
                let frame = bpdu.to_frame(self.mac);
                self.encode_ethernet(port, &frame).ok().map(|f| (port, f))
            })
            .collect();
        self.counters.bpdu_tx += out.len() as u64;
        out
    }

    /// Processes one frame received on `ingress`.
    pub fn forward(&mut self, ingress: PortId, frame: PortFrame, now: SimTime) -> SwitchOutput {
        self.counters.received += 1;
        let Some(port) = self.ports.get(&ingress) else {
            return self.dropped(DropReason::Malformed);
        };
        let normalized = match (port.kind, frame) {
            (PortKind::Ethernet, PortFrame::Ethernet(eth)) => Normalized::Ethernet(eth),
            (PortKind::CanXl(_), PortFrame::Can(BusFrame::Classic(classic))) => {
                let out = relay_legacy(&self.relay_rules, ingress, &classic);
                if out.is_empty() {
                    return self.dropped(DropReason::NoRelayRule);
                }
                self.counters.relayed += out.len() as u64;
                let mut res = SwitchOutput::decided(Decision::Relayed);
                res.data = out.into_iter().map(|(p, f)| (p, PortFrame::Can(f.into()))).collect();
                return res;
            }
            (PortKind::CanXl(_), PortFrame::Can(BusFrame::Xl(xl))) => {
                let decoded = match xl.sdt {
                    SduType::Ethernet => eoc_decapsulate(&xl).map(Normalized::Ethernet),
                    SduType::Ipv4 => ioc_decapsulate(&xl).map(Normalized::Ioc),
                    _ => Err(CodecError::Malformed("SDU type not handled by the switch")),
                };
                match decoded {
                    Ok(n) => n,
                    Err(_) => return self.dropped(DropReason::Malformed),
                }
            }
            _ => return self.dropped(DropReason::Malformed),
        };

        if let Normalized::Ethernet(eth) = &normalized {
            if eth.da == MacAddress::STP_GROUP {
                return self.handle_bpdu(ingress, eth);
            }
        }
        if !self.forwarding(ingress) {
            return self.dropped(DropReason::StpBlocked);
        }

        let evidence = match &normalized {
            Normalized::Ethernet(eth) => Evidence::Ethernet(eth),
            Normalized::Ioc(d) => Evidence::Ioc(d),
        };
        self.efdb.learn(ingress, evidence, now);

        let target = match &normalized {
            Normalized::Ethernet(eth) if eth.da.is_group() => None,
            Normalized::Ethernet(eth) => self.efdb.lookup_mac(eth.da, now).map(|e| e.port),
            Normalized::Ioc(d) if !is_unicast(d.dst) => None,
            Normalized::Ioc(d) => self.efdb.lookup_ip(d.dst, now).map(|e| e.port),
        };

        let (decision, egress): (Decision, Vec<PortId>) = match target {
            Some(p) if p == ingress => return self.dropped(DropReason::NoRouteSelf),
            Some(p) if !self.forwarding(p) => return self.dropped(DropReason::StpBlocked),
            Some(p) => (Decision::Unicast(p), vec![p]),
            None => (
                Decision::Flood,
                self.ports
                    .keys()
                    .copied()
                    .filter(|&p| p != ingress && self.forwarding(p))
                    .collect(),
            ),
        };
        match decision {
            Decision::Flood => self.counters.flooded += 1,
            _ => self.counters.forwarded += 1,
        }

        let mut out = SwitchOutput::decided(decision);
        for port in egress {
            let encoded = match &normalized {
                Normalized::Ethernet(eth) => self.encode_ethernet(port, eth),
                Normalized::Ioc(d) => self.encode_ioc(port, d, now),
            };
            match encoded {
                Ok(f) => out.data.push((port, f)),
                Err(reason) => {
                    self.counters.drop(reason);
                    out.drops.push((port, reason));
                }
            }
        }
        out
    }

    fn dropped(&mut self, reason: DropReason) -> SwitchOutput {
        self.counters.drop(reason);
        SwitchOutput::decided(Decision::Dropped(reason))
    }

    fn handle_bpdu(&mut self, ingress: PortId, eth: &EthernetFrame) -> SwitchOutput {
        let mut out = SwitchOutput::decided(Decision::Control);
        if self.stp.is_none() {
            return out;
        }
        self.counters.bpdu_rx += 1;
        let bpdu = match Bpdu::from_frame(eth) {
            Ok(b) => b,
            Err(_) => {
                self.counters.bpdu_malformed += 1;
                return out;
            }
        };
        let changed = self.stp.as_mut().expect("checked above").receive(ingress, bpdu);
        if changed {
            out.control = self.hello();
        }
        out
    }

    fn can_config(&self, port: PortId) -> Option<CanPortConfig> {
        match self.ports.get(&port)?.kind {
            PortKind::CanXl(c) => Some(c),
            PortKind::Ethernet => None,
        }
    }

    fn encode_ethernet(&self, port: PortId, eth: &EthernetFrame) -> Result<PortFrame, DropReason> {
        let Some(cfg) = self.can_config(port) else {
            return Ok(PortFrame::Ethernet(eth.clone()));
        };
        if cfg.egress_mode == EgressMode::IocPreferred {
            if let Ok(d) = ethernet_to_ioc(eth) {
                return ioc_encode(&d, cfg.priority_base, cfg.vcid)
                    .map(|f| PortFrame::Can(f.into()))
                    .map_err(|_| DropReason::TooLarge);
            }
        }
        eoc_encapsulate(eth, cfg.priority_base, cfg.vcid)
            .map(|f| PortFrame::Can(f.into()))
            .map_err(|_| DropReason::TooLarge)
    }

    fn encode_ioc(&self, port: PortId, d: &IocDatagram, now: SimTime) -> Result<PortFrame, DropReason> {
        if let Some(cfg) = self.can_config(port) {
            if cfg.egress_mode == EgressMode::IocPreferred {
                return ioc_encode(d, cfg.priority_base, cfg.vcid)
                    .map(|f| PortFrame::Can(f.into()))
                    .map_err(|_| DropReason::TooLarge);
            }
        }
        let eth = self.reconstruct(d, now)?;
        self.encode_ethernet(port, &eth)
    }

    /// Rebuilds the Ethernet frame of an IoC datagram from EFDB knowledge.
    fn reconstruct(&self, d: &IocDatagram, now: SimTime) -> Result<EthernetFrame, DropReason> {
        let da = if d.dst.is_broadcast() {
            MacAddress::BROADCAST
        } else {
            self.efdb
                .mac_for_ip(d.dst, now)
                .ok_or(DropReason::ReconstructionFailure)?
        };
        let sa = self
            .efdb
            .mac_for_ip(d.src, now)
            .ok_or(DropReason::ReconstructionFailure)?;
        ioc_to_ethernet(d, da, sa).map_err(|_| DropReason::TooLarge)
    }
}

fn is_unicast(ip: Ipv4Address) -> bool {
    !(ip.is_broadcast() || ip.is_multicast())
}
