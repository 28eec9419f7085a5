//! One structured record per engine event, serialized as JSON lines.

use serde::{Deserialize, Serialize};

use crate::codec::ethernet::{ETHERTYPE_ARP, ETHERTYPE_EXPERIMENTAL, ETHERTYPE_IPV4};
use crate::codec::{arp_parse, eoc_decapsulate, ArpOp, BusFrame, EthernetFrame, MacAddress, SduType};
use crate::switch::PortFrame;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSummary {
    /// `ethernet`, `canxl` or `classic`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub af: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub da: Option<MacAddress>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sa: Option<MacAddress>,
    /// What the frame carries: `arp_request`, `arp_reply`, `arp_gratuitous`,
    /// `ipv4`, `ioc`, `bpdu`, `raw`, `classic` or `other`.
    pub content: String,
    /// Data field length for CAN frames, header plus padded payload for
    /// Ethernet.
    pub len: usize,
}

impl FrameSummary {
    pub fn of(frame: &PortFrame) -> Self {
        match frame {
            PortFrame::Ethernet(eth) => Self::ethernet("ethernet", eth),
            PortFrame::Can(BusFrame::Classic(c)) => FrameSummary {
                kind: "classic".into(),
                sdt: None,
                priority: Some(c.id()),
                af: None,
                da: None,
                sa: None,
                content: "classic".into(),
                len: c.data().len(),
            },
            PortFrame::Can(BusFrame::Xl(xl)) => {
                let inner = (xl.sdt == SduType::Ethernet)
                    .then(|| eoc_decapsulate(xl).ok())
                    .flatten();
                let content = match (&inner, xl.sdt) {
                    (Some(eth), _) => content_of(eth),
                    (None, SduType::Ipv4) => "ioc",
                    _ => "other",
                };
                FrameSummary {
                    kind: "canxl".into(),
                    sdt: Some(xl.sdt.name().to_string()),
                    priority: Some(xl.priority()),
                    af: Some(format!("0x{:08x}", xl.af)),
                    da: inner.as_ref().map(|e| e.da),
                    sa: inner.as_ref().map(|e| e.sa),
                    content: content.into(),
                    len: xl.data().len(),
                }
            }
        }
    }

    fn ethernet(kind: &str, eth: &EthernetFrame) -> Self {
        FrameSummary {
            kind: kind.into(),
            sdt: None,
            priority: None,
            af: None,
            da: Some(eth.da),
            sa: Some(eth.sa),
            content: content_of(eth).into(),
            len: eth.encoded_len(),
        }
    }
}

fn content_of(eth: &EthernetFrame) -> &'static str {
    match eth.ethertype {
        ETHERTYPE_ARP => match arp_parse(eth).map(|m| m.op) {
            Ok(ArpOp::Request) => "arp_request",
            Ok(ArpOp::Reply) => "arp_reply",
            Ok(ArpOp::GratuitousReply) => "arp_gratuitous",
            Err(_) => "other",
        },
        ETHERTYPE_IPV4 => "ipv4",
        ETHERTYPE_EXPERIMENTAL => "raw",
        t if t <= 1500 && eth.da == MacAddress::STP_GROUP => "bpdu",
        _ => "other",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_ns: u64,
    pub event: String,
    pub location: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<String>,
    /// Message sequence number within the flow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Serializes records as newline-terminated JSON lines.
pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
