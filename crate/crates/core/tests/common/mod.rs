#![allow(dead_code)]

use canxl_net::codec::{ArpMessage, EthernetFrame, IocDatagram, Ipv4Address, Ipv4Packet, MacAddress};
use canxl_net::sim::TopologyConfig;
use proptest::prelude::*;

pub fn mac() -> impl Strategy<Value = MacAddress> {
    any::<[u8; 6]>().prop_map(MacAddress)
}

pub fn unicast_mac() -> impl Strategy<Value = MacAddress> {
    any::<[u8; 6]>().prop_map(|mut b| {
        b[0] &= 0xfe;
        MacAddress(b)
    })
}

pub fn ip() -> impl Strategy<Value = Ipv4Address> {
    any::<u32>().prop_map(Ipv4Address::from)
}

pub fn ethernet_frame() -> impl Strategy<Value = EthernetFrame> {
    (mac(), mac(), any::<u16>(), prop::collection::vec(any::<u8>(), 0..=1500))
        .prop_map(|(da, sa, ethertype, payload)| EthernetFrame::new(da, sa, ethertype, payload).unwrap())
}

/// Unfragmented, option-free datagram with total length in `total`.
pub fn plain_ipv4(total: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Ipv4Packet> {
    let payload = (total.start() - 20)..=(total.end() - 20);
    (
        any::<u8>(),
        any::<u16>(),
        any::<bool>(),
        any::<u8>(),
        any::<u8>(),
        ip(),
        ip(),
        payload,
    )
        .prop_flat_map(|(dscp_ecn, id, df, ttl, protocol, src, dst, len)| {
            prop::collection::vec(any::<u8>(), len).prop_map(move |payload| Ipv4Packet {
                dscp_ecn,
                identification: id,
                dont_fragment: df,
                more_fragments: false,
                fragment_offset: 0,
                ttl,
                protocol,
                src,
                dst,
                options: Vec::new(),
                payload,
            })
        })
}

pub fn ioc_datagram(max_payload: usize) -> impl Strategy<Value = IocDatagram> {
    (
        any::<u8>(),
        any::<u8>(),
        any::<u8>(),
        ip(),
        ip(),
        prop::collection::vec(any::<u8>(), 0..=max_payload),
    )
        .prop_map(|(dscp_ecn, ttl, protocol, src, dst, payload)| IocDatagram {
            dscp_ecn,
            ttl,
            protocol,
            src,
            dst,
            payload,
        })
}

pub fn arp_message() -> impl Strategy<Value = ArpMessage> {
    (0..3u8, unicast_mac(), ip(), unicast_mac(), ip())
        .prop_filter("a reply to itself reads as gratuitous", |(op, _, spa, _, tpa)| {
            *op != 1 || spa != tpa
        })
        .prop_map(|(op, sha, spa, tha, tpa)| match op {
            0 => ArpMessage::request(sha, spa, tpa),
            1 => ArpMessage::reply(sha, spa, tha, tpa),
            _ => ArpMessage::gratuitous(sha, spa),
        })
}

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

pub fn scenario(name: &str) -> TopologyConfig {
    TopologyConfig::from_toml(&std::fs::read_to_string(scenario_path(name)).unwrap()).unwrap()
}

pub const SCENARIOS: [&str; 7] = [
    "fig2_eoc",
    "fig4_ioc",
    "flooding",
    "stp_triangle",
    "legacy_relay",
    "clash",
    "gratuitous_arp",
];
