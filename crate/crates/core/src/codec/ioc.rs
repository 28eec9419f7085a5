//! IP over CAN XL with a compacted header.
//!
//! Compact header, 8 octets:
//!
//! ```text
//!  0       4       8               16              24              32
//! +-------+-------+---------------+---------------+---------------+
//! |version|  pad  |   DSCP/ECN    |      TTL      |   protocol    |
//! +-------+-------+---------------+---------------+---------------+
//! |                        source address                         |
//! +---------------------------------------------------------------+
//! ```
//!
//! The destination address travels in the acceptance field. Total length
//! comes from the CAN XL data length. Checksum, identification, flags and
//! fragment offset are dropped: fragmented datagrams or datagrams with
//! options cannot be carried and must use EoC instead.

use super::ethernet::{ETHERTYPE_IPV4, MTU};
use super::ipv4::{self, Ipv4Packet};
use super::{CanXlFrame, CodecError, EthernetFrame, Ipv4Address, MacAddress, SduType};
use crate::codec::canxl::MAX_DATA_LEN;

pub const COMPACT_HEADER_LEN: usize = 8;
/// Largest IP payload an IoC frame can carry.
pub const MAX_PAYLOAD: usize = MAX_DATA_LEN - COMPACT_HEADER_LEN;

/// An IPv4 datagram as carried by IoC.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IocDatagram {
    pub dscp_ecn: u8,
    pub ttl: u8,
    pub protocol: u8,
    pub src: Ipv4Address,
    /// Carried in AF, not in the data field.
    pub dst: Ipv4Address,
    pub payload: Vec<u8>,
}

impl IocDatagram {
    pub const VERSION: u8 = 4;

    /// Total length the equivalent standard IPv4 datagram would have.
    pub fn total_len(&self) -> usize {
        ipv4::HEADER_LEN + self.payload.len()
    }

    pub fn compact_header(&self) -> [u8; COMPACT_HEADER_LEN] {
        let s = self.src.octets();
        [
            Self::VERSION << 4,
            self.dscp_ecn,
            self.ttl,
            self.protocol,
            s[0],
            s[1],
            s[2],
            s[3],
        ]
    }

    /// Expands to a standard datagram: identification 0, DF set.
    pub fn to_ipv4(&self) -> Ipv4Packet {
        Ipv4Packet {
            dscp_ecn: self.dscp_ecn,
            identification: 0,
            dont_fragment: true,
            more_fragments: false,
            fragment_offset: 0,
            ttl: self.ttl,
            protocol: self.protocol,
            src: self.src,
            dst: self.dst,
            options: Vec::new(),
            payload: self.payload.clone(),
        }
    }
}

impl TryFrom<&Ipv4Packet> for IocDatagram {
    type Error = CodecError;

    fn try_from(p: &Ipv4Packet) -> Result<Self, Self::Error> {
        if !p.options.is_empty() {
            return Err(CodecError::NotPlainIpv4("datagram carries IP options"));
        }
        if p.is_fragment() {
            return Err(CodecError::NotPlainIpv4("datagram is a fragment"));
        }
        Ok(IocDatagram {
            dscp_ecn: p.dscp_ecn,
            ttl: p.ttl,
            protocol: p.protocol,
            src: p.src,
            dst: p.dst,
            payload: p.payload.clone(),
        })
    }
}

/// Packs an IPv4 address into a 32-bit AF value.
pub fn af_from_ip(ip: Ipv4Address) -> u32 {
    u32::from(ip)
}

/// Encodes a standard datagram as IoC.
pub fn ioc_encapsulate(packet: &Ipv4Packet, priority: u16, vcid: u8) -> Result<CanXlFrame, CodecError> {
    let dgram = IocDatagram::try_from(packet)?;
    ioc_encode(&dgram, priority, vcid)
}

/// Encodes an already-compacted datagram as IoC.
pub fn ioc_encode(dgram: &IocDatagram, priority: u16, vcid: u8) -> Result<CanXlFrame, CodecError> {
    let len = COMPACT_HEADER_LEN + dgram.payload.len();
    if len > MAX_DATA_LEN {
        return Err(CodecError::TooLarge { len, max: MAX_DATA_LEN });
    }
    let mut data = Vec::with_capacity(len);
    data.extend_from_slice(&dgram.compact_header());
    data.extend_from_slice(&dgram.payload);
    CanXlFrame::new(priority, SduType::Ipv4, vcid, af_from_ip(dgram.dst), data)
}

pub fn ioc_decapsulate(frame: &CanXlFrame) -> Result<IocDatagram, CodecError> {
    if frame.sdt != SduType::Ipv4 {
        return Err(CodecError::WrongSdt {
            expected: SduType::Ipv4,
            found: frame.sdt,
        });
    }
    let data = frame.data();
    if data.len() < COMPACT_HEADER_LEN {
        return Err(CodecError::Malformed("IoC data shorter than the compact header"));
    }
    if data[0] != IocDatagram::VERSION << 4 {
        return Err(CodecError::Malformed("IoC version/pad octet is not 0x40"));
    }
    Ok(IocDatagram {
        dscp_ecn: data[1],
        ttl: data[2],
        protocol: data[3],
        src: Ipv4Address::new(data[4], data[5], data[6], data[7]),
        dst: Ipv4Address::from(frame.af),
        payload: data[COMPACT_HEADER_LEN..].to_vec(),
    })
}

/// Rebuilds a well-formed Ethernet/IPv4 frame from an IoC datagram.
///
/// Fails with `TooLarge` when the datagram exceeds the Ethernet MTU.
pub fn ioc_to_ethernet(dgram: &IocDatagram, da: MacAddress, sa: MacAddress) -> Result<EthernetFrame, CodecError> {
    if dgram.total_len() > MTU {
        return Err(CodecError::TooLarge {
            len: dgram.total_len(),
            max: MTU,
        });
    }
    let bytes = dgram.to_ipv4().encode()?;
    EthernetFrame::new(da, sa, ETHERTYPE_IPV4, bytes)
}

/// Compacts an Ethernet/IPv4 frame; anything else is `NotPlainIpv4`.
pub fn ethernet_to_ioc(eth: &EthernetFrame) -> Result<IocDatagram, CodecError> {
    if eth.ethertype != ETHERTYPE_IPV4 {
        return Err(CodecError::NotPlainIpv4("EtherType is not IPv4"));
    }
    let packet = Ipv4Packet::decode(&eth.payload)?;
    IocDatagram::try_from(&packet)
}
