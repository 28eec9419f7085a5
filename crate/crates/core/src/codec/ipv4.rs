//! Standard IPv4 header encoding, used on the Ethernet side of IoC.

use super::{CodecError, Ipv4Address};

pub const HEADER_LEN: usize = 20;

const FLAG_RESERVED: u16 = 0x8000;
const FLAG_DF: u16 = 0x4000;
const FLAG_MF: u16 = 0x2000;
const OFFSET_MASK: u16 = 0x1fff;

/// One's-complement sum of 16-bit words, complemented.
pub fn internet_checksum(bytes: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    let mut chunks = bytes.chunks_exact(2);
    for c in &mut chunks {
        sum += u32::from(u16::from_be_bytes([c[0], c[1]]));
    }
    if let [last] = chunks.remainder() {
        sum += u32::from(*last) << 8;
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// A full IPv4 datagram. Total length and header checksum are derived on
/// encode and verified on decode, so they are not stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ipv4Packet {
    pub dscp_ecn: u8,
    pub identification: u16,
    pub dont_fragment: bool,
    pub more_fragments: bool,
    /// In units of 8 octets, 13 bits.
    pub fragment_offset: u16,
    pub ttl: u8,
    pub protocol: u8,
    pub src: Ipv4Address,
    pub dst: Ipv4Address,
    /// Raw option bytes; length must be a multiple of 4, at most 40.
    pub options: Vec<u8>,
    pub payload: Vec<u8>,
}

impl Ipv4Packet {
    /// Datagram with no options and no fragmentation.
    pub fn simple(src: Ipv4Address, dst: Ipv4Address, protocol: u8, payload: Vec<u8>) -> Self {
        Ipv4Packet {
            dscp_ecn: 0,
            identification: 0,
            dont_fragment: true,
            more_fragments: false,
            fragment_offset: 0,
            ttl: 64,
            protocol,
            src,
            dst,
            options: Vec::new(),
            payload,
        }
    }

    pub fn header_len(&self) -> usize {
        HEADER_LEN + self.options.len()
    }

    pub fn total_len(&self) -> usize {
        self.header_len() + self.payload.len()
    }

    pub fn is_fragment(&self) -> bool {
        self.more_fragments || self.fragment_offset != 0
    }

    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        if !self.options.len().is_multiple_of(4) || self.options.len() > 40 {
            return Err(CodecError::InvalidField(
                "IPv4 options must be 0..=40 bytes in 4-byte words",
            ));
        }
        if self.fragment_offset > OFFSET_MASK {
            return Err(CodecError::InvalidField("fragment offset exceeds 13 bits"));
        }
        let total = self.total_len();
        if total > usize::from(u16::MAX) {
            return Err(CodecError::TooLarge {
                len: total,
                max: usize::from(u16::MAX),
            });
        }
        let ihl = (self.header_len() / 4) as u8;
        let mut flags_offset = self.fragment_offset;
        if self.dont_fragment {
            flags_offset |= FLAG_DF;
        }
        if self.more_fragments {
            flags_offset |= FLAG_MF;
        }
        let mut out = Vec::with_capacity(total);
        out.push(0x40 | ihl);
        out.push(self.dscp_ecn);
        out.extend_from_slice(&(total as u16).to_be_bytes());
        out.extend_from_slice(&self.identification.to_be_bytes());
        out.extend_from_slice(&flags_offset.to_be_bytes());
        out.push(self.ttl);
        out.push(self.protocol);
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&self.src.octets());
        out.extend_from_slice(&self.dst.octets());
        out.extend_from_slice(&self.options);
        let checksum = internet_checksum(&out);
        out[10..12].copy_from_slice(&checksum.to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Parses a datagram; bytes beyond the total length (link padding)
    /// are ignored.
    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < HEADER_LEN {
            return Err(CodecError::Malformed("IPv4 header truncated"));
        }
        if bytes[0] >> 4 != 4 {
            return Err(CodecError::Malformed("IP version is not 4"));
        }
        let header_len = usize::from(bytes[0] & 0x0f) * 4;
        if header_len < HEADER_LEN || bytes.len() < header_len {
            return Err(CodecError::Malformed("bad IPv4 header length"));
        }
        let total = usize::from(u16::from_be_bytes([bytes[2], bytes[3]]));
        if total < header_len || total > bytes.len() {
            return Err(CodecError::Malformed("bad IPv4 total length"));
        }
        if internet_checksum(&bytes[..header_len]) != 0 {
            return Err(CodecError::Malformed("IPv4 header checksum mismatch"));
        }
        let flags_offset = u16::from_be_bytes([bytes[6], bytes[7]]);
        if flags_offset & FLAG_RESERVED != 0 {
            return Err(CodecError::Malformed("IPv4 reserved flag set"));
        }
        Ok(Ipv4Packet {
            dscp_ecn: bytes[1],
            identification: u16::from_be_bytes([bytes[4], bytes[5]]),
            dont_fragment: flags_offset & FLAG_DF != 0,
            more_fragments: flags_offset & FLAG_MF != 0,
            fragment_offset: flags_offset & OFFSET_MASK,
            ttl: bytes[8],
            protocol: bytes[9],
            src: Ipv4Address::new(bytes[12], bytes[13], bytes[14], bytes[15]),
            dst: Ipv4Address::new(bytes[16], bytes[17], bytes[18], bytes[19]),
            options: bytes[HEADER_LEN..header_len].to_vec(),
            payload: bytes[header_len..total].to_vec(),
        })
    }
}
