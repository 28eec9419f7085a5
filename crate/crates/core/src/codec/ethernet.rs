use super::{CodecError, MacAddress};

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_ARP: u16 = 0x0806;
/// IEEE local experimental EtherType, used for raw Ethernet test traffic.
pub const ETHERTYPE_EXPERIMENTAL: u16 = 0x88b5;

pub const HEADER_LEN: usize = 14;
pub const MIN_PAYLOAD: usize = 46;
pub const MTU: usize = 1500;
/// Smallest serialized frame (header plus minimum payload, no FCS).
pub const MIN_FRAME_LEN: usize = HEADER_LEN + MIN_PAYLOAD;

/// An IEEE 802.3 MAC frame without preamble and FCS.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EthernetFrame {
    pub da: MacAddress,
    pub sa: MacAddress,
    pub ethertype: u16,
    pub payload: Vec<u8>,
}

impl EthernetFrame {
    /// Builds a frame, zero-padding the payload up to the 46-byte minimum.
    ///
    /// The pre-pad length is not kept; protocols that care (IPv4) carry
    /// their own length field.
    pub fn new(da: MacAddress, sa: MacAddress, ethertype: u16, mut payload: Vec<u8>) -> Result<Self, CodecError> {
        if payload.len() > MTU {
            return Err(CodecError::TooLarge {
                len: payload.len(),
                max: MTU,
            });
        }
        if payload.len() < MIN_PAYLOAD {
            payload.resize(MIN_PAYLOAD, 0);
        }
        Ok(EthernetFrame {
            da,
            sa,
            ethertype,
            payload,
        })
    }

    /// Payload length as it appears on the wire (after padding).
    pub fn wire_payload_len(&self) -> usize {
        self.payload.len().max(MIN_PAYLOAD)
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.wire_payload_len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.da.0);
        out.extend_from_slice(&self.sa.0);
        out.extend_from_slice(&self.ethertype.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.resize(self.encoded_len(), 0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < MIN_FRAME_LEN {
            return Err(CodecError::Malformed("ethernet frame shorter than 60 bytes"));
        }
        if bytes.len() > HEADER_LEN + MTU {
            return Err(CodecError::TooLarge {
                len: bytes.len() - HEADER_LEN,
                max: MTU,
            });
        }
        let da = MacAddress::from_slice(&bytes[0..6]).expect("length checked");
        let sa = MacAddress::from_slice(&bytes[6..12]).expect("length checked");
        let ethertype = u16::from_be_bytes([bytes[12], bytes[13]]);
        Ok(EthernetFrame {
            da,
            sa,
            ethertype,
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_payload_is_zero_padded() {
        let f = EthernetFrame::new(
            MacAddress::BROADCAST,
            MacAddress([2, 0, 0, 0, 0, 1]),
            ETHERTYPE_ARP,
            vec![0xab; 28],
        )
        .unwrap();
        assert_eq!(f.payload.len(), 46);
        assert!(f.payload[28..].iter().all(|&b| b == 0));
        assert_eq!(f.encode().len(), 60);
    }

    #[test]
    fn oversize_payload_rejected() {
        let err = EthernetFrame::new(
            MacAddress::BROADCAST,
            MacAddress::UNSPECIFIED,
            ETHERTYPE_IPV4,
            vec![0; 1501],
        )
        .unwrap_err();
        assert!(matches!(err, CodecError::TooLarge { len: 1501, .. }));
    }

    #[test]
    fn decode_rejects_runt() {
        assert!(matches!(
            EthernetFrame::decode(&[0u8; 59]),
            Err(CodecError::Malformed(_))
        ));
    }
}
