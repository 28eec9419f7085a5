//! CAN XL and classic CAN frame values.
//!
//! Frames are modeled above the bit-stuffing layer: header fields and the
//! data field are kept, CRCs are assumed valid and are not represented.

use std::fmt;

use super::CodecError;

pub const MAX_PRIORITY: u16 = 0x7ff;
pub const MAX_DATA_LEN: usize = 2048;
pub const CLASSIC_MAX_DATA_LEN: usize = 8;

/// Numeric SDT assignments.
///
/// Allowed values come from companion standards that this crate does not
/// track; this table is the one place the mapping lives.
pub mod sdt_values {
    pub const CLASSIC_CAN: u8 = 0x03;
    pub const CAN_FD: u8 = 0x04;
    pub const ETHERNET: u8 = 0x05;
    pub const IPV4: u8 = 0x10;
}

/// Service data unit type: the one-octet protocol multiplexer of CAN XL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SduType {
    Ethernet,
    Ipv4,
    ClassicCan,
    CanFd,
    /// Any value not in [`sdt_values`].
    Other(u8),
}

impl SduType {
    pub const fn to_u8(self) -> u8 {
        match self {
            SduType::Ethernet => sdt_values::ETHERNET,
            SduType::Ipv4 => sdt_values::IPV4,
            SduType::ClassicCan => sdt_values::CLASSIC_CAN,
            SduType::CanFd => sdt_values::CAN_FD,
            SduType::Other(raw) => raw,
        }
    }

    pub const fn from_u8(raw: u8) -> Self {
        match raw {
            sdt_values::ETHERNET => SduType::Ethernet,
            sdt_values::IPV4 => SduType::Ipv4,
            sdt_values::CLASSIC_CAN => SduType::ClassicCan,
            sdt_values::CAN_FD => SduType::CanFd,
            other => SduType::Other(other),
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            SduType::Ethernet => "ethernet",
            SduType::Ipv4 => "ipv4",
            SduType::ClassicCan => "classic-can",
            SduType::CanFd => "can-fd",
            SduType::Other(_) => "other",
        }
    }
}

impl fmt::Display for SduType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:02x} ({})", self.to_u8(), self.name())
    }
}

/// A CAN XL MAC frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanXlFrame {
    priority: u16,
    pub sdt: SduType,
    pub sec: bool,
    pub vcid: u8,
    pub af: u32,
    data: Vec<u8>,
}

impl CanXlFrame {
    pub fn new(priority: u16, sdt: SduType, vcid: u8, af: u32, data: Vec<u8>) -> Result<Self, CodecError> {
        if priority > MAX_PRIORITY {
            return Err(CodecError::InvalidField("priority exceeds 11 bits"));
        }
        if data.is_empty() {
            return Err(CodecError::Malformed("CAN XL data field is empty"));
        }
        if data.len() > MAX_DATA_LEN {
            return Err(CodecError::TooLarge {
                len: data.len(),
                max: MAX_DATA_LEN,
            });
        }
        Ok(CanXlFrame {
            priority,
            sdt: SduType::from_u8(sdt.to_u8()),
            sec: false,
            vcid,
            af,
            data,
        })
    }

    pub fn priority(&self) -> u16 {
        self.priority
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Same frame with another priority; used by switch egress.
    pub fn with_priority(mut self, priority: u16) -> Result<Self, CodecError> {
        if priority > MAX_PRIORITY {
            return Err(CodecError::InvalidField("priority exceeds 11 bits"));
        }
        self.priority = priority;
        Ok(self)
    }

    /// Serializes the header fields in transmission order followed by the
    /// data field: priority (2 octets, 11 bits used), SDT, SEC flag octet,
    /// DLC (2 octets, data length minus one), VCID, AF (4 octets), data.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(IMAGE_HEADER_LEN + self.data.len());
        out.extend_from_slice(&self.priority.to_be_bytes());
        out.push(self.sdt.to_u8());
        out.push(u8::from(self.sec));
        out.extend_from_slice(&((self.data.len() - 1) as u16).to_be_bytes());
        out.push(self.vcid);
        out.extend_from_slice(&self.af.to_be_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < IMAGE_HEADER_LEN + 1 {
            return Err(CodecError::Malformed("CAN XL frame image truncated"));
        }
        let priority = u16::from_be_bytes([bytes[0], bytes[1]]);
        let sdt = SduType::from_u8(bytes[2]);
        let sec = match bytes[3] {
            0 => false,
            1 => true,
            _ => return Err(CodecError::InvalidField("SEC octet must be 0 or 1")),
        };
        let dlc = u16::from_be_bytes([bytes[4], bytes[5]]);
        if dlc > 0x7ff {
            return Err(CodecError::InvalidField("DLC exceeds 11 bits"));
        }
        let vcid = bytes[6];
        let af = u32::from_be_bytes([bytes[7], bytes[8], bytes[9], bytes[10]]);
        let data = &bytes[IMAGE_HEADER_LEN..];
        if data.len() != usize::from(dlc) + 1 {
            return Err(CodecError::Malformed("DLC does not match data length"));
        }
        let mut frame = CanXlFrame::new(priority, sdt, vcid, af, data.to_vec())?;
        frame.sec = sec;
        Ok(frame)
    }
}

/// Length of the header part of [`CanXlFrame::encode`].
pub const IMAGE_HEADER_LEN: usize = 11;

/// Classic CAN data frame with an 11-bit identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassicCanFrame {
    id: u16,
    data: Vec<u8>,
}

impl ClassicCanFrame {
    pub fn new(id: u16, data: Vec<u8>) -> Result<Self, CodecError> {
        if id > MAX_PRIORITY {
            return Err(CodecError::InvalidField("identifier exceeds 11 bits"));
        }
        if data.len() > CLASSIC_MAX_DATA_LEN {
            return Err(CodecError::TooLarge {
                len: data.len(),
                max: CLASSIC_MAX_DATA_LEN,
            });
        }
        Ok(ClassicCanFrame { id, data })
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn with_id(&self, id: u16) -> Result<Self, CodecError> {
        ClassicCanFrame::new(id, self.data.clone())
    }
}

/// Anything that can occupy a CAN bus.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BusFrame {
    Xl(CanXlFrame),
    Classic(ClassicCanFrame),
}

impl BusFrame {
    /// Arbitration value; lower wins.
    pub fn priority(&self) -> u16 {
        match self {
            BusFrame::Xl(f) => f.priority(),
            BusFrame::Classic(f) => f.id(),
        }
    }
}

impl From<CanXlFrame> for BusFrame {
    fn from(f: CanXlFrame) -> Self {
        BusFrame::Xl(f)
    }
}

impl From<ClassicCanFrame> for BusFrame {
    fn from(f: ClassicCanFrame) -> Self {
        BusFrame::Classic(f)
    }
}
