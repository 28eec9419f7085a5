//! Ethernet over CAN XL.
//!
//! The Ethernet frame (DA, SA, EtherType, padded payload) is carried as-is
//! in the CAN XL data field. Preamble and FCS are not embedded; the CAN XL
//! frame CRC covers the embedding.

use super::ethernet::MIN_FRAME_LEN;
use super::{CanXlFrame, CodecError, EthernetFrame, MacAddress, SduType};

/// Mask of the DA I/G bit once the first four DA octets are packed into AF.
pub const AF_GROUP_BIT: u32 = 0x0100_0000;

/// Acceptance field for a destination MAC: DA octets 0..3, big-endian.
///
/// The I/G bit sits in octet 0, so it always survives the copy.
pub fn make_af_from_da(da: MacAddress) -> u32 {
    let o = da.octets();
    u32::from_be_bytes([o[0], o[1], o[2], o[3]])
}

/// Hardware acceptance filter of an EoC node.
///
/// Passes exact AF matches and every group-addressed frame. Frames whose DA
/// only shares the first four octets with `own_da` pass as well; those are
/// weeded out by [`eoc_accept`].
pub fn af_filter_match(af: u32, own_da: MacAddress) -> bool {
    af == make_af_from_da(own_da) || af & AF_GROUP_BIT != 0
}

pub fn eoc_encapsulate(eth: &EthernetFrame, priority: u16, vcid: u8) -> Result<CanXlFrame, CodecError> {
    CanXlFrame::new(priority, SduType::Ethernet, vcid, make_af_from_da(eth.da), eth.encode())
}

pub fn eoc_decapsulate(frame: &CanXlFrame) -> Result<EthernetFrame, CodecError> {
    if frame.sdt != SduType::Ethernet {
        return Err(CodecError::WrongSdt {
            expected: SduType::Ethernet,
            found: frame.sdt,
        });
    }
    if frame.data().len() < MIN_FRAME_LEN {
        return Err(CodecError::Malformed("EoC data shorter than a minimum Ethernet frame"));
    }
    EthernetFrame::decode(frame.data())
}

/// Outcome of the two-stage EoC receive filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EocFilter {
    /// Embedded DA is ours or a group address.
    Accepted,
    /// Rejected by the hardware AF comparison.
    HardwareRejected,
    /// Passed AF but the full DA did not match (AF clash).
    FalsePositive,
}

/// Runs both filter stages and reports which one decided.
pub fn eoc_filter(frame: &CanXlFrame, own_da: MacAddress) -> Result<EocFilter, CodecError> {
    if frame.sdt != SduType::Ethernet {
        return Err(CodecError::WrongSdt {
            expected: SduType::Ethernet,
            found: frame.sdt,
        });
    }
    if !af_filter_match(frame.af, own_da) {
        return Ok(EocFilter::HardwareRejected);
    }
    let eth = eoc_decapsulate(frame)?;
    if eth.da == own_da || eth.da.is_group() {
        Ok(EocFilter::Accepted)
    } else {
        Ok(EocFilter::FalsePositive)
    }
}

/// Whether an EoC node owning `own_da` keeps this frame.
pub fn eoc_accept(frame: &CanXlFrame, own_da: MacAddress) -> Result<bool, CodecError> {
    Ok(eoc_filter(frame, own_da)? == EocFilter::Accepted)
}
