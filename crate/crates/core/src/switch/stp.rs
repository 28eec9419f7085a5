//! Simplified spanning tree.
//!
//! Configuration BPDUs only, in the 802.1D layout behind an LLC header.
//! Ports are Root, Designated or Blocked; Root and Designated ports
//! forward. There is no topology-change handling and received information
//! never expires, so the topology is assumed static after start.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::codec::{CodecError, EthernetFrame, MacAddress};

use super::PortId;

pub const DEFAULT_ETHERNET_COST: u32 = 19;
pub const DEFAULT_CAN_COST: u32 = 100;

const LLC_STP: [u8; 3] = [0x42, 0x42, 0x03];
const BPDU_LEN: usize = 35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PortRole {
    Root,
    Designated,
    Blocked,
}

impl PortRole {
    pub fn forwards(self) -> bool {
        matches!(self, PortRole::Root | PortRole::Designated)
    }
}

/// Compared lexicographically; smaller is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bpdu {
    pub root_id: u64,
    pub root_cost: u32,
    pub bridge_id: u64,
    pub port_id: u16,
}

impl Bpdu {
    pub fn to_frame(&self, sa: MacAddress) -> EthernetFrame {
        let mut body = Vec::with_capacity(LLC_STP.len() + BPDU_LEN);
        body.extend_from_slice(&LLC_STP);
        body.extend_from_slice(&[0, 0, 0, 0, 0]); // protocol id, version, type, flags
        body.extend_from_slice(&self.root_id.to_be_bytes());
        body.extend_from_slice(&self.root_cost.to_be_bytes());
        body.extend_from_slice(&self.bridge_id.to_be_bytes());
        body.extend_from_slice(&self.port_id.to_be_bytes());
        // message age, max age 20 s, hello 2 s, forward delay 15 s (1/256 s units)
        for v in [0u16, 20 << 8, 2 << 8, 15 << 8] {
            body.extend_from_slice(&v.to_be_bytes());
        }
        let len = body.len() as u16;
        EthernetFrame::new(MacAddress::STP_GROUP, sa, len, body).expect("BPDU fits")
    }

    pub fn from_frame(eth: &EthernetFrame) -> Result<Self, CodecError> {
        if eth.da != MacAddress::STP_GROUP {
            return Err(CodecError::Malformed("BPDU not sent to the bridge group address"));
        }
        let len = usize::from(eth.ethertype);
        if len > 1500 || len < LLC_STP.len() + BPDU_LEN || eth.payload.len() < len {
            return Err(CodecError::Malformed("bad BPDU length"));
        }
        let b = &eth.payload;
        if b[..3] != LLC_STP || b[3..8] != [0, 0, 0, 0, 0] {
            return Err(CodecError::Malformed("not a configuration BPDU"));
        }
        let u64_at = |i: usize| u64::from_be_bytes(b[i..i + 8].try_into().expect("8 bytes"));
        Ok(Bpdu {
            root_id: u64_at(8),
            root_cost: u32::from_be_bytes(b[16..20].try_into().expect("4 bytes")),
            bridge_id: u64_at(20),
            port_id: u16::from_be_bytes([b[28], b[29]]),
        })
    }
}

#[derive(Debug, Clone)]
struct StpPort {
    cost: u32,
    received: Option<Bpdu>,
    role: PortRole,
}

#[derive(Debug, Clone)]
pub struct SpanningTree {
    bridge_id: u64,
    ports: BTreeMap<PortId, StpPort>,
    root_id: u64,
    root_cost: u32,
    root_port: Option<PortId>,
}

impl SpanningTree {
    /// All ports start Designated with the bridge claiming to be root.
    pub fn new(bridge_id: u64, ports: impl IntoIterator<Item = (PortId, u32)>) -> Self {
        SpanningTree {
            bridge_id,
            ports: ports
                .into_iter()
                .map(|(p, cost)| {
                    (
                        p,
                        StpPort {
                            cost,
                            received: None,
                            role: PortRole::Designated,
                        },
                    )
                })
                .collect(),
            root_id: bridge_id,
            root_cost: 0,
            root_port: None,
        }
    }

    pub fn bridge_id(&self) -> u64 {
        self.bridge_id
    }

    pub fn root_id(&self) -> u64 {
        self.root_id
    }

    pub fn root_cost(&self) -> u32 {
        self.root_cost
    }

    pub fn root_port(&self) -> Option<PortId> {
        self.root_port
    }

    pub fn role(&self, port: PortId) -> Option<PortRole> {
        self.ports.get(&port).map(|p| p.role)
    }

    pub fn roles(&self) -> impl Iterator<Item = (PortId, PortRole)> + '_ {
        self.ports.iter().map(|(&id, p)| (id, p.role))
    }

    pub fn is_forwarding(&self, port: PortId) -> bool {
        self.role(port).is_some_and(PortRole::forwards)
    }

    /// Vector this bridge would advertise on `port`.
    fn designated_vector(&self, port: PortId) -> Bpdu {
        Bpdu {
            root_id: self.root_id,
            root_cost: self.root_cost,
            bridge_id: self.bridge_id,
            port_id: port,
        }
    }

    /// Stores a BPDU heard on `port`. Returns true when the bridge's view
    /// (root, cost or any role) changed.
    pub fn receive(&mut self, port: PortId, bpdu: Bpdu) -> bool {
        let Some(p) = self.ports.get_mut(&port) else {
            return false;
        };
        let replace = match p.received {
            None => true,
            Some(old) => bpdu < old || (bpdu.bridge_id, bpdu.port_id) == (old.bridge_id, old.port_id),
        };
        if !replace {
            return false;
        }
        p.received = Some(bpdu);
        self.recompute()
    }

    fn recompute(&mut self) -> bool {
        let before = (
            self.root_id,
            self.root_cost,
            self.root_port,
            self.roles().collect::<Vec<_>>(),
        );

        let best = self
            .ports
            .iter()
            .filter_map(|(&id, p)| {
                let r = p.received?;
                (r.bridge_id != self.bridge_id).then_some((r.root_id, r.root_cost + p.cost, r.bridge_id, r.port_id, id))
            })
            .min();
        match best {
            Some((root, cost, _, _, port)) if root < self.bridge_id => {
                self.root_id = root;
                self.root_cost = cost;
                self.root_port = Some(port);
            }
            _ => {
                self.root_id = self.bridge_id;
                self.root_cost = 0;
                self.root_port = None;
            }
        }

        let ids: Vec<PortId> = self.ports.keys().copied().collect();
        for id in ids {
            let own = self.designated_vector(id);
            let root_port = self.root_port;
            let p = self.ports.get_mut(&id).expect("port exists");
            p.role = if root_port == Some(id) {
                PortRole::Root
            } else if p.received.is_some_and(|r| r < own) {
                PortRole::Blocked
            } else {
                PortRole::Designated
            };
        }

        before
            != (
                self.root_id,
                self.root_cost,
                self.root_port,
                self.roles().collect::<Vec<_>>(),
            )
    }

    /// BPDUs to send now: one per Designated port.
    pub fn hello(&self) -> Vec<(PortId, Bpdu)> {
        self.ports
            .iter()
            .filter(|(_, p)| p.role == PortRole::Designated)
            .map(|(&id, _)| (id, self.designated_vector(id)))
            .collect()
    }
}
