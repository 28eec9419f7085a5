//! Extended filtering database: the MAC-indexed FDB plus the IP-indexed
//! TARP cache, sharing entries when both addresses of a host are known.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::codec::ethernet::{ETHERTYPE_ARP, ETHERTYPE_IPV4};
use crate::codec::{arp_parse, EthernetFrame, IocDatagram, Ipv4Address, Ipv4Packet, MacAddress};
use crate::time::SimTime;

use super::PortId;

pub const DEFAULT_AGEING: SimTime = SimTime::from_secs(300);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EfdbEntry {
    pub mac: Option<MacAddress>,
    pub ip: Option<Ipv4Address>,
    pub port: PortId,
    pub last_seen: SimTime,
}

/// What a received frame tells the switch about its sender.
#[derive(Debug, Clone, Copy)]
pub enum Evidence<'a> {
    /// Native Ethernet or decapsulated EoC.
    Ethernet(&'a EthernetFrame),
    Ioc(&'a IocDatagram),
}

type EntryId = u64;

#[derive(Debug, Clone)]
pub struct Efdb {
    entries: BTreeMap<EntryId, EfdbEntry>,
    by_mac: BTreeMap<MacAddress, EntryId>,
    by_ip: BTreeMap<Ipv4Address, EntryId>,
    next_id: EntryId,
    pub ageing: SimTime,
}

impl Default for Efdb {
    fn default() -> Self {
        Efdb::new(DEFAULT_AGEING)
    }
}

impl Efdb {
    pub fn new(ageing: SimTime) -> Self {
        Efdb {
            entries: BTreeMap::new(),
            by_mac: BTreeMap::new(),
            by_ip: BTreeMap::new(),
            next_id: 0,
            ageing,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &EfdbEntry> {
        self.entries.values()
    }

    fn insert(&mut self, entry: EfdbEntry) -> EntryId {
        let id = self.next_id;
        self.next_id += 1;
        if let Some(mac) = entry.mac {
            self.by_mac.insert(mac, id);
        }
        if let Some(ip) = entry.ip {
            self.by_ip.insert(ip, id);
        }
        self.entries.insert(id, entry);
        id
    }

    fn touch(&mut self, id: EntryId, port: PortId, now: SimTime) {
        let e = self.entries.get_mut(&id).expect("index points at a live entry");
        e.port = port;
        e.last_seen = now;
    }

    /// Backward learning: `<SA, port>`.
    pub fn learn_mac(&mut self, mac: MacAddress, port: PortId, now: SimTime) {
        match self.by_mac.get(&mac) {
            Some(&id) => self.touch(id, port, now),
            None => {
                self.insert(EfdbEntry {
                    mac: Some(mac),
                    ip: None,
                    port,
                    last_seen: now,
                });
            }
        }
    }

    /// Joint learning `<MAC, IP, port>` from ARP or plain IPv4 evidence.
    pub fn learn_joint(&mut self, mac: MacAddress, ip: Ipv4Address, port: PortId, now: SimTime) {
        let mac_id = self.by_mac.get(&mac).copied();
        let ip_id = self.by_ip.get(&ip).copied();
        if let Some(id) = mac_id.filter(|_| mac_id == ip_id) {
            self.touch(id, port, now);
            return;
        }
        // The IP moves to the MAC's entry; an IP-only entry left behind is empty.
        if let Some(old) = ip_id {
            self.by_ip.remove(&ip);
            let e = self.entries.get_mut(&old).expect("live entry");
            e.ip = None;
            if e.mac.is_none() {
                self.entries.remove(&old);
            }
        }
        let id = match mac_id {
            Some(id) => id,
            None => self.insert(EfdbEntry {
                mac: Some(mac),
                ip: None,
                port,
                last_seen: now,
            }),
        };
        let e = self.entries.get_mut(&id).expect("live entry");
        if let Some(previous) = e.ip.replace(ip) {
            self.by_ip.remove(&previous);
        }
        self.by_ip.insert(ip, id);
        self.touch(id, port, now);
    }

    /// IoC learning: `<source IP, port>`, keeping any MAC already known.
    pub fn learn_ip(&mut self, ip: Ipv4Address, port: PortId, now: SimTime) {
        match self.by_ip.get(&ip) {
            Some(&id) => self.touch(id, port, now),
            None => {
                self.insert(EfdbEntry {
                    mac: None,
                    ip: Some(ip),
                    port,
                    last_seen: now,
                });
            }
        }
    }

    /// Applies every learning rule the evidence supports.
    pub fn learn(&mut self, ingress: PortId, evidence: Evidence<'_>, now: SimTime) {
        match evidence {
            Evidence::Ethernet(eth) => {
                if eth.sa.is_group() {
                    return;
                }
                self.learn_mac(eth.sa, ingress, now);
                match eth.ethertype {
                    ETHERTYPE_ARP => {
                        if let Ok(arp) = arp_parse(eth) {
                            if !arp.spa.is_unspecified() && !arp.sha.is_group() {
                                self.learn_joint(arp.sha, arp.spa, ingress, now);
                            }
                        }
                    }
                    ETHERTYPE_IPV4 => {
                        if let Ok(p) = Ipv4Packet::decode(&eth.payload) {
                            if is_host_address(p.src) {
                                self.learn_joint(eth.sa, p.src, ingress, now);
                            }
                        }
                    }
                    _ => {}
                }
            }
            Evidence::Ioc(d) => {
                if is_host_address(d.src) {
                    self.learn_ip(d.src, ingress, now);
                }
            }
        }
    }

    fn fresh(&self, id: EntryId, now: SimTime) -> Option<&EfdbEntry> {
        let e = self.entries.get(&id)?;
        (now.saturating_sub(e.last_seen) <= self.ageing).then_some(e)
    }

    pub fn lookup_mac(&self, mac: MacAddress, now: SimTime) -> Option<&EfdbEntry> {
        self.fresh(*self.by_mac.get(&mac)?, now)
    }

    pub fn lookup_ip(&self, ip: Ipv4Address, now: SimTime) -> Option<&EfdbEntry> {
        self.fresh(*self.by_ip.get(&ip)?, now)
    }

    /// TARP cache query: the MAC bound to `ip`, if any.
    pub fn mac_for_ip(&self, ip: Ipv4Address, now: SimTime) -> Option<MacAddress> {
        self.lookup_ip(ip, now)?.mac
    }

    /// Drops entries not refreshed within the ageing time.
    pub fn age_out(&mut self, now: SimTime) {
        let ageing = self.ageing;
        let stale: Vec<EntryId> = self
            .entries
            .iter()
            .filter(|(_, e)| now.saturating_sub(e.last_seen) > ageing)
            .map(|(&id, _)| id)
            .collect();
        for id in stale {
            let e = self.entries.remove(&id).expect("live entry");
            if let Some(mac) = e.mac {
                self.by_mac.remove(&mac);
            }
            if let Some(ip) = e.ip {
                self.by_ip.remove(&ip);
            }
        }
    }
}

fn is_host_address(ip: Ipv4Address) -> bool {
    !(ip.is_unspecified() || ip.is_broadcast() || ip.is_multicast())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{arp_serialize, ArpMessage};

    const M1: MacAddress = MacAddress([2, 0, 0, 0, 0, 1]);
    const M2: MacAddress = MacAddress([2, 0, 0, 0, 0, 2]);
    const IP1: Ipv4Address = Ipv4Address::new(10, 0, 0, 1);
    const IP2: Ipv4Address = Ipv4Address::new(10, 0, 0, 2);
    const IP3: Ipv4Address = Ipv4Address::new(10, 0, 0, 3);
    const T0: SimTime = SimTime::ZERO;

    #[test]
    fn arp_request_learns_joint_entry() {
        let mut db = Efdb::default();
        let req = arp_serialize(&ArpMessage::request(M1, IP1, IP2));
        db.learn(2, Evidence::Ethernet(&req), T0);
        let by_mac = db.lookup_mac(M1, T0).unwrap();
        let by_ip = db.lookup_ip(IP1, T0).unwrap();
        assert_eq!(by_mac, by_ip);
        assert_eq!(by_mac.port, 2);
        assert_eq!(by_mac.mac, Some(M1));
        assert_eq!(by_mac.ip, Some(IP1));
        assert_eq!(db.len(), 1);
    }

    #[test]
    fn ioc_learns_ip_only() {
        let mut db = Efdb::default();
        let d = IocDatagram {
            dscp_ecn: 0,
            ttl: 64,
            protocol: 17,
            src: IP3,
            dst: IP1,
            payload: vec![],
        };
        db.learn(4, Evidence::Ioc(&d), T0);
        let e = db.lookup_ip(IP3, T0).unwrap();
        assert_eq!(e.port, 4);
        assert_eq!(e.mac, None);
        assert_eq!(db.mac_for_ip(IP3, T0), None);
    }

    #[test]
    fn plain_ipv4_learns_joint_entry() {
        let mut db = Efdb::default();
        let p = Ipv4Packet::simple(IP2, IP1, 17, vec![0; 30]);
        let eth = EthernetFrame::new(M1, M2, ETHERTYPE_IPV4, p.encode().unwrap()).unwrap();
        db.learn(1, Evidence::Ethernet(&eth), T0);
        assert_eq!(db.mac_for_ip(IP2, T0), Some(M2));
        assert_eq!(db.lookup_mac(M2, T0).unwrap().port, 1);
    }

    #[test]
    fn ioc_never_erases_known_mac() {
        let mut db = Efdb::default();
        db.learn_joint(M1, IP1, 1, T0);
        db.learn_ip(IP1, 3, SimTime::from_secs(1));
        let e = db.lookup_ip(IP1, SimTime::from_secs(1)).unwrap();
        assert_eq!(e.mac, Some(M1));
        assert_eq!(e.port, 3);
    }

    #[test]
    fn joint_learning_merges_ip_only_entry() {
        let mut db = Efdb::default();
        db.learn_ip(IP1, 3, T0);
        db.learn_mac(M1, 3, T0);
        assert_eq!(db.len(), 2);
        db.learn_joint(M1, IP1, 3, T0);
        assert_eq!(db.len(), 1);
        assert_eq!(db.mac_for_ip(IP1, T0), Some(M1));
    }

    #[test]
    fn later_learning_overwrites_ip_binding() {
        let mut db = Efdb::default();
        db.learn_joint(M1, IP1, 1, T0);
        db.learn_joint(M2, IP1, 2, T0);
        assert_eq!(db.mac_for_ip(IP1, T0), Some(M2));
        assert_eq!(db.lookup_mac(M1, T0).unwrap().ip, None);
        db.learn_joint(M2, IP2, 2, T0);
        assert!(db.lookup_ip(IP1, T0).is_none());
    }

    #[test]
    fn ageing() {
        let mut db = Efdb::new(SimTime::from_secs(300));
        db.learn_mac(M1, 1, T0);
        db.learn_mac(M2, 1, T0);
        db.learn_mac(M2, 1, SimTime::from_secs(200));
        assert!(db.lookup_mac(M1, SimTime::from_secs(301)).is_none());
        db.age_out(SimTime::from_secs(301));
        assert!(db.lookup_mac(M1, SimTime::from_secs(301)).is_none());
        assert_eq!(db.len(), 1);
        db.age_out(SimTime::from_secs(400));
        assert!(db.lookup_mac(M2, SimTime::from_secs(400)).is_some());

        let mut empty = Efdb::default();
        empty.age_out(SimTime::from_secs(1000));
        assert!(empty.is_empty());
    }
}
