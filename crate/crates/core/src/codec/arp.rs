//! ARP for IPv4 over Ethernet (RFC 826 layout, 28-byte body).

use super::ethernet::ETHERTYPE_ARP;
use super::{CodecError, EthernetFrame, Ipv4Address, MacAddress};

pub const BODY_LEN: usize = 28;

const HTYPE_ETHERNET: u16 = 1;
const OP_REQUEST: u16 = 1;
const OP_REPLY: u16 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArpOp {
    Request,
    Reply,
    /// Unsolicited broadcast reply announcing the sender's own binding.
    GratuitousReply,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArpMessage {
    pub op: ArpOp,
    pub sha: MacAddress,
    pub spa: Ipv4Address,
    pub tha: MacAddress,
    pub tpa: Ipv4Address,
}

impl ArpMessage {
    pub fn request(sha: MacAddress, spa: Ipv4Address, tpa: Ipv4Address) -> Self {
        ArpMessage {
            op: ArpOp::Request,
            sha,
            spa,
            tha: MacAddress::UNSPECIFIED,
            tpa,
        }
    }

    pub fn reply(sha: MacAddress, spa: Ipv4Address, tha: MacAddress, tpa: Ipv4Address) -> Self {
        ArpMessage {
            op: ArpOp::Reply,
            sha,
            spa,
            tha,
            tpa,
        }
    }

    pub fn gratuitous(sha: MacAddress, spa: Ipv4Address) -> Self {
        ArpMessage {
            op: ArpOp::GratuitousReply,
            sha,
            spa,
            tha: MacAddress::BROADCAST,
            tpa: spa,
        }
    }

    /// Ethernet destination the message is sent to.
    pub fn destination(&self) -> MacAddress {
        match self.op {
            ArpOp::Request | ArpOp::GratuitousReply => MacAddress::BROADCAST,
            ArpOp::Reply => self.tha,
        }
    }

    pub fn body(&self) -> [u8; BODY_LEN] {
        let op = match self.op {
            ArpOp::Request => OP_REQUEST,
            ArpOp::Reply | ArpOp::GratuitousReply => OP_REPLY,
        };
        let mut b = [0u8; BODY_LEN];
        b[0..2].copy_from_slice(&HTYPE_ETHERNET.to_be_bytes());
        b[2..4].copy_from_slice(&super::ethernet::ETHERTYPE_IPV4.to_be_bytes());
        b[4] = 6;
        b[5] = 4;
        b[6..8].copy_from_slice(&op.to_be_bytes());
        b[8..14].copy_from_slice(&self.sha.0);
        b[14..18].copy_from_slice(&self.spa.octets());
        b[18..24].copy_from_slice(&self.tha.0);
        b[24..28].copy_from_slice(&self.tpa.octets());
        b
    }
}

pub fn arp_serialize(msg: &ArpMessage) -> EthernetFrame {
    EthernetFrame::new(msg.destination(), msg.sha, ETHERTYPE_ARP, msg.body().to_vec())
        .expect("ARP body fits any Ethernet frame")
}

/// Parses an ARP frame. A reply whose SPA equals its TPA is reported as
/// gratuitous.
pub fn arp_parse(eth: &EthernetFrame) -> Result<ArpMessage, CodecError> {
    if eth.ethertype != ETHERTYPE_ARP {
        return Err(CodecError::Malformed("EtherType is not ARP"));
    }
    let b = &eth.payload;
    if b.len() < BODY_LEN {
        return Err(CodecError::Malformed("ARP body shorter than 28 bytes"));
    }
    if u16::from_be_bytes([b[0], b[1]]) != HTYPE_ETHERNET
        || u16::from_be_bytes([b[2], b[3]]) != super::ethernet::ETHERTYPE_IPV4
        || b[4] != 6
        || b[5] != 4
    {
        return Err(CodecError::Malformed("ARP is not IPv4 over Ethernet"));
    }
    let sha = MacAddress::from_slice(&b[8..14]).expect("length checked");
    let spa = Ipv4Address::new(b[14], b[15], b[16], b[17]);
    let tha = MacAddress::from_slice(&b[18..24]).expect("length checked");
    let tpa = Ipv4Address::new(b[24], b[25], b[26], b[27]);
    let op = match u16::from_be_bytes([b[6], b[7]]) {
        OP_REQUEST => ArpOp::Request,
        OP_REPLY if spa == tpa => ArpOp::GratuitousReply,
        OP_REPLY => ArpOp::Reply,
        _ => return Err(CodecError::Malformed("unknown ARP opcode")),
    };
    Ok(ArpMessage { op, sha, spa, tha, tpa })
}

#[cfg(test)]
mod tests {
    use super::*;

    const M1: MacAddress = MacAddress([2, 0, 0, 0, 0, 1]);
    const M2: MacAddress = MacAddress([2, 0, 0, 0, 0, 2]);

    #[test]
    fn request_is_broadcast_with_zero_tha() {
        let m = ArpMessage::request(M1, Ipv4Address::new(10, 0, 0, 1), Ipv4Address::new(10, 0, 0, 2));
        let eth = arp_serialize(&m);
        assert_eq!(eth.da, MacAddress::BROADCAST);
        assert_eq!(eth.sa, M1);
        assert_eq!(eth.payload.len(), 46);
        assert_eq!(&eth.payload[18..24], &[0; 6]);
        assert_eq!(arp_parse(&eth).unwrap(), m);
    }

    #[test]
    fn reply_is_unicast() {
        let m = ArpMessage::reply(M2, Ipv4Address::new(10, 0, 0, 2), M1, Ipv4Address::new(10, 0, 0, 1));
        let eth = arp_serialize(&m);
        assert_eq!(eth.da, M1);
        assert_eq!(arp_parse(&eth).unwrap(), m);
    }

    #[test]
    fn gratuitous_round_trip() {
        let ip = Ipv4Address::new(10, 0, 0, 9);
        let m = ArpMessage::gratuitous(M1, ip);
        let eth = arp_serialize(&m);
        assert!(eth.da.is_broadcast());
        let p = arp_parse(&eth).unwrap();
        assert_eq!(p.op, ArpOp::GratuitousReply);
        assert_eq!(p.spa, p.tpa);
        assert_eq!(p, m);
    }

    #[test]
    fn malformed_bodies() {
        let mut eth = arp_serialize(&ArpMessage::gratuitous(M1, Ipv4Address::new(10, 0, 0, 9)));
        eth.payload.truncate(27);
        assert!(arp_parse(&eth).is_err());

        let mut eth = arp_serialize(&ArpMessage::gratuitous(M1, Ipv4Address::new(10, 0, 0, 9)));
        eth.payload[1] = 6; // IEEE 802 hardware type
        assert!(arp_parse(&eth).is_err());

        let mut eth = arp_serialize(&ArpMessage::gratuitous(M1, Ipv4Address::new(10, 0, 0, 9)));
        eth.payload[7] = 3;
        assert!(arp_parse(&eth).is_err());

        let mut eth = arp_serialize(&ArpMessage::gratuitous(M1, Ipv4Address::new(10, 0, 0, 9)));
        eth.ethertype = 0x0800;
        assert!(arp_parse(&eth).is_err());
    }
}
