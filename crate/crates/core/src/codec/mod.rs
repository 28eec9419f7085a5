//! Frame values and the EoC/IoC encapsulation rules.
//!
//! Everything here is a pure function over immutable values.

pub mod addr;
pub mod arp;
pub mod canxl;
pub mod eoc;
pub mod ethernet;
pub mod ioc;
pub mod ipv4;

pub use addr::{Ipv4Address, MacAddress};
pub use arp::{arp_parse, arp_serialize, ArpMessage, ArpOp};
pub use canxl::{BusFrame, CanXlFrame, ClassicCanFrame, SduType};
pub use eoc::{af_filter_match, eoc_accept, eoc_decapsulate, eoc_encapsulate, eoc_filter, make_af_from_da, EocFilter};
pub use ethernet::EthernetFrame;
pub use ioc::{ethernet_to_ioc, ioc_decapsulate, ioc_encapsulate, ioc_encode, ioc_to_ethernet, IocDatagram};
pub use ipv4::Ipv4Packet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("wrong SDU type: expected {expected}, found {found}")]
    WrongSdt { expected: SduType, found: SduType },
    #[error("malformed frame: {0}")]
    Malformed(&'static str),
    #[error("{len} bytes exceed the limit of {max}")]
    TooLarge { len: usize, max: usize },
    #[error("not a plain IPv4 datagram: {0}")]
    NotPlainIpv4(&'static str),
    #[error("invalid field: {0}")]
    InvalidField(&'static str),
}
