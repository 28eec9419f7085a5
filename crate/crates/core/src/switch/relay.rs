//! Static relay of classic CAN frames between legacy buses.

use serde::{Deserialize, Serialize};

use crate::codec::canxl::MAX_PRIORITY;
use crate::codec::ClassicCanFrame;

use super::PortId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelayTarget {
    pub port: PortId,
    pub id: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegacyRelayRule {
    pub ingress: PortId,
    pub match_id: u16,
    pub egress: Vec<RelayTarget>,
}

impl LegacyRelayRule {
    pub fn validate(&self) -> Result<(), String> {
        if self.match_id > MAX_PRIORITY {
            return Err(format!("match_id 0x{:x} exceeds 11 bits", self.match_id));
        }
        for t in &self.egress {
            if t.id > MAX_PRIORITY {
                return Err(format!("remapped id 0x{:x} exceeds 11 bits", t.id));
            }
            if t.port == self.ingress {
                return Err(format!("egress port {} equals ingress", t.port));
            }
        }
        Ok(())
    }
}

/// Frames to emit for a classic frame heard on `ingress`; empty when no
/// rule matches. No learning and no flooding.
pub fn relay_legacy(
    rules: &[LegacyRelayRule],
    ingress: PortId,
    frame: &ClassicCanFrame,
) -> Vec<(PortId, ClassicCanFrame)> {
    rules
        .iter()
        .filter(|r| r.ingress == ingress && r.match_id == frame.id())
        .flat_map(|r| r.egress.iter())
        .map(|t| (t.port, frame.with_id(t.id).expect("rule ids are validated")))
        .collect()
}
