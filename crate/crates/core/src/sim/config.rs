//! Declarative topology document and its validation.
//!
//! Times are seconds (floats), rates bits per second. Unknown keys are
//! rejected everywhere.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::codec::canxl::{CLASSIC_MAX_DATA_LEN, MAX_PRIORITY};
use crate::codec::ethernet::{MIN_PAYLOAD, MTU};
use crate::codec::ioc::COMPACT_HEADER_LEN;
use crate::codec::{Ipv4Address, MacAddress};
use crate::switch::{EgressMode, LegacyRelayRule, PortId};
use crate::timing::CanXlTimingParams;

use crate::time::SimTime;

use super::node::{NodeKind, DEFAULT_EOC_REFRESH};

pub const DEFAULT_HELLO: f64 = 2.0;
pub const DEFAULT_ETHERNET_BITRATE: f64 = 10_000_000.0;
const IPV4_HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            location: location.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default, rename = "node")]
    pub nodes: Vec<NodeConfig>,
    #[serde(default, rename = "switch")]
    pub switches: Vec<SwitchDef>,
    #[serde(default, rename = "can_bus")]
    pub can_buses: Vec<CanBusDef>,
    #[serde(default, rename = "ethernet_link")]
    pub ethernet_links: Vec<EthernetLinkDef>,
    #[serde(default, rename = "flow")]
    pub flows: Vec<FlowDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub t_end: f64,
    /// Reserved for stochastic arrivals; current flows ignore it.
    pub seed: u64,
    pub trace: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            t_end: 1.0,
            seed: 0,
            trace: None,
            report: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticArp {
    pub ip: Ipv4Address,
    pub mac: MacAddress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub name: String,
    pub kind: NodeKind,
    pub mac: MacAddress,
    #[serde(default)]
    pub ip: Option<Ipv4Address>,
    /// CAN XL priority of the node's frames; required on CAN.
    #[serde(default)]
    pub priority: Option<u16>,
    #[serde(default)]
    pub vcid: u8,
    #[serde(default)]
    pub static_arp: Vec<StaticArp>,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "yes")]
    pub gratuitous_arp: bool,
    /// IoC nodes only: send one datagram as EoC once the interval has passed
    /// since the last one. `true` means the default interval.
    #[serde(default)]
    pub eoc_refresh: Option<EocRefresh>,
    /// Classic CAN identifiers the node listens to.
    #[serde(default)]
    pub can_rx_ids: Vec<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EocRefresh {
    Enabled(bool),
    Seconds(f64),
}

impl EocRefresh {
    pub fn interval(self) -> Option<SimTime> {
        match self {
            EocRefresh::Enabled(true) => Some(DEFAULT_EOC_REFRESH),
            EocRefresh::Enabled(false) => None,
            EocRefresh::Seconds(s) => Some(SimTime::from_secs_f64(s)),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortKindDef {
    Ethernet,
    Can,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortDef {
    pub id: PortId,
    pub kind: PortKindDef,
    #[serde(default)]
    pub egress_mode: EgressMode,
    #[serde(default)]
    pub priority_base: Option<u16>,
    #[serde(default)]
    pub vcid: u8,
    #[serde(default)]
    pub cost: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StpDef {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_hello")]
    pub hello: f64,
}

fn default_hello() -> f64 {
    DEFAULT_HELLO
}

impl Default for StpDef {
    fn default() -> Self {
        StpDef {
            enabled: true,
            hello: DEFAULT_HELLO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchDef {
    pub name: String,
    pub bridge_id: u64,
    #[serde(default)]
    pub ageing: Option<f64>,
    #[serde(default)]
    pub stp: StpDef,
    #[serde(rename = "port")]
    pub ports: Vec<PortDef>,
    #[serde(default, rename = "relay")]
    pub relay_rules: Vec<LegacyRelayRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanBusDef {
    pub name: String,
    /// Node names and `switch:port` references.
    pub stations: Vec<String>,
    #[serde(default)]
    pub timing: CanXlTimingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EthernetLinkDef {
    pub name: String,
    pub a: String,
    pub b: String,
    #[serde(default = "default_eth_rate")]
    pub bitrate: f64,
}

fn default_eth_rate() -> f64 {
    DEFAULT_ETHERNET_BITRATE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    Ipv4,
    RawEthernet,
    ClassicCan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowDef {
    pub id: String,
    pub source: String,
    pub transport: Transport,
    #[serde(default)]
    pub dst_ip: Option<Ipv4Address>,
    #[serde(default)]
    pub dst_mac: Option<MacAddress>,
    /// Classic CAN identifier for `classic_can` flows.
    #[serde(default)]
    pub can_id: Option<u16>,
    pub payload: usize,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default = "one")]
    pub count: u32,
    /// Overrides the source node's priority for this flow's frames.
    #[serde(default)]
    pub priority: Option<u16>,
}

fn one() -> u32 {
    1
}

/// A parsed `node` or `switch:port` reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StationRef {
    Node(usize),
    Port(usize, PortId),
}

fn check_time(location: &str, t: f64) -> Result<(), ConfigError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(
            location,
            format!("time {t} must be a finite non-negative number of seconds"),
        ))
    }
}

fn check_priority(location: &str, p: u16) -> Result<(), ConfigError> {
    if p > MAX_PRIORITY {
        return Err(ConfigError::new(location, format!("priority 0x{p:x} exceeds 11 bits")));
    }
    Ok(())
}

impl TopologyConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".to_string());
            ConfigError::new(location, e.message().to_string())
        })
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn resolve_station(&self, location: &str, name: &str) -> Result<StationRef, ConfigError> {
        if let Some((sw, port)) = name.split_once(':') {
            let si = self
                .switches
                .iter()
                .position(|s| s.name == sw)
                .ok_or_else(|| ConfigError::new(location, format!("unknown switch '{sw}'")))?;
            let port: PortId = port
                .parse()
                .map_err(|_| ConfigError::new(location, format!("bad port number in '{name}'")))?;
            if !self.switches[si].ports.iter().any(|p| p.id == port) {
                return Err(ConfigError::new(location, format!("switch '{sw}' has no port {port}")));
            }
            return Ok(StationRef::Port(si, port));
        }
        self.node_index(name)
            .map(StationRef::Node)
            .ok_or_else(|| ConfigError::new(location, format!("unknown node '{name}'")))
    }

    fn station_on_can(&self, s: StationRef) -> bool {
        match s {
            StationRef::Node(i) => self.nodes[i].kind.on_can(),
            StationRef::Port(si, p) => self.switches[si]
                .ports
                .iter()
                .any(|d| d.id == p && d.kind == PortKindDef::Can),
        }
    }

    /// Checks every sim-engine precondition.
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_time("run.t_end", self.run.t_end)?;

        let mut names: BTreeMap<&str, String> = BTreeMap::new();
        let mut macs: BTreeMap<MacAddress, &str> = BTreeMap::new();
        let mut ips: BTreeMap<Ipv4Address, &str> = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let loc = format!("node[{i}] '{}'", n.name);
            if n.name.is_empty() || n.name.contains(':') {
                return Err(ConfigError::new(
                    format!("{loc}.name"),
                    "names must be non-empty and free of ':'",
                ));
            }
            if let Some(prev) = names.insert(&n.name, loc.clone()) {
                return Err(ConfigError::new(
                    format!("{loc}.name"),
                    format!("duplicate name, also used by {prev}"),
                ));
            }
            if n.mac.is_group() {
                return Err(ConfigError::new(
                    format!("{loc}.mac"),
                    "station MAC must be an individual address",
                ));
            }
            if let Some(other) = macs.insert(n.mac, &n.name) {
                return Err(ConfigError::new(
                    format!("{loc}.mac"),
                    format!("MAC {} assigned to both '{other}' and '{}'", n.mac, n.name),
                ));
            }
            if let Some(ip) = n.ip {
                if ip.is_broadcast() || ip.is_unspecified() || ip.is_multicast() {
                    return Err(ConfigError::new(
                        format!("{loc}.ip"),
                        "station IP must be a unicast address",
                    ));
                }
                if let Some(other) = ips.insert(ip, &n.name) {
                    return Err(ConfigError::new(
                        format!("{loc}.ip"),
                        format!("IP {ip} assigned to both '{other}' and '{}'", n.name),
                    ));
                }
            }
            check_time(&format!("{loc}.start"), n.start)?;
            match (n.kind.on_can(), n.priority) {
                (true, None) => return Err(ConfigError::new(format!("{loc}.priority"), "CAN nodes need a priority")),
                (true, Some(p)) => check_priority(&format!("{loc}.priority"), p)?,
                (false, Some(_)) => {
                    return Err(ConfigError::new(
                        format!("{loc}.priority"),
                        "Ethernet hosts have no CAN priority",
                    ))
                }
                (false, None) => {}
            }
            if n.kind == NodeKind::IocNode && n.ip.is_none() {
                return Err(ConfigError::new(format!("{loc}.ip"), "IoC nodes need an IP address"));
            }
            if let Some(r) = n.eoc_refresh {
                if n.kind != NodeKind::IocNode {
                    return Err(ConfigError::new(format!("{loc}.eoc_refresh"), "only IoC nodes refresh"));
                }
                if matches!(r, EocRefresh::Seconds(s) if !(s.is_finite() && s > 0.0)) {
                    return Err(ConfigError::new(
                        format!("{loc}.eoc_refresh"),
                        "interval must be positive",
                    ));
                }
            }
            for id in &n.can_rx_ids {
                check_priority(&format!("{loc}.can_rx_ids"), *id)?;
            }
        }

        let mut bridge_ids = BTreeMap::new();
        for (i, s) in self.switches.iter().enumerate() {
            let loc = format!("switch[{i}] '{}'", s.name);
            if s.name.is_empty() || s.name.contains(':') {
                return Err(ConfigError::new(
                    format!("{loc}.name"),
                    "names must be non-empty and free of ':'",
                ));
            }
            if let Some(prev) = names.insert(&s.name, loc.clone()) {
                return Err(ConfigError::new(
                    format!("{loc}.name"),
                    format!("duplicate name, also used by {prev}"),
                ));
            }
            if let Some(other) = bridge_ids.insert(s.bridge_id, &s.name) {
                return Err(ConfigError::new(
                    format!("{loc}.bridge_id"),
                    format!("bridge id shared with '{other}'"),
                ));
            }
            if let Some(a) = s.ageing {
                if !(a.is_finite() && a > 0.0) {
                    return Err(ConfigError::new(
                        format!("{loc}.ageing"),
                        "ageing time must be positive",
                    ));
                }
            }
            if !(s.stp.hello.is_finite() && s.stp.hello > 0.0) {
                return Err(ConfigError::new(
                    format!("{loc}.stp.hello"),
                    "hello interval must be positive",
                ));
            }
            let mut ids = BTreeSet::new();
            for (j, p) in s.ports.iter().enumerate() {
                let ploc = format!("{loc}.port[{j}]");
                if !ids.insert(p.id) {
                    return Err(ConfigError::new(
                        format!("{ploc}.id"),
                        format!("duplicate port id {}", p.id),
                    ));
                }
                match p.kind {
                    PortKindDef::Can => {
                        let prio = p.priority_base.ok_or_else(|| {
                            ConfigError::new(format!("{ploc}.priority_base"), "CAN ports need a priority")
                        })?;
                        check_priority(&format!("{ploc}.priority_base"), prio)?;
                    }
                    PortKindDef::Ethernet => {
                        if p.priority_base.is_some() || p.egress_mode != EgressMode::Eoc {
                            return Err(ConfigError::new(
                                ploc,
                                "priority_base and egress_mode apply to CAN ports only",
                            ));
                        }
                    }
                }
                if p.cost == Some(0) {
                    return Err(ConfigError::new(format!("{ploc}.cost"), "path cost must be positive"));
                }
            }
            for (j, r) in s.relay_rules.iter().enumerate() {
                let rloc = format!("{loc}.relay[{j}]");
                r.validate().map_err(|m| ConfigError::new(rloc.clone(), m))?;
                for port in std::iter::once(r.ingress).chain(r.egress.iter().map(|t| t.port)) {
                    if !s.ports.iter().any(|p| p.id == port && p.kind == PortKindDef::Can) {
                        return Err(ConfigError::new(
                            rloc,
                            format!("port {port} is not a CAN port of this switch"),
                        ));
                    }
                }
            }
        }

        // Every station sits on exactly one medium of the right kind.
        let mut attached: BTreeMap<StationRef, String> = BTreeMap::new();
        let mut attach = |s: StationRef, loc: String| -> Result<(), ConfigError> {
            if let Some(prev) = attached.insert(s, loc.clone()) {
                return Err(ConfigError::new(loc, format!("station already attached at {prev}")));
            }
            Ok(())
        };
        let mut media = BTreeSet::new();
        for (i, b) in self.can_buses.iter().enumerate() {
            let loc = format!("can_bus[{i}] '{}'", b.name);
            if !media.insert(&b.name) {
                return Err(ConfigError::new(format!("{loc}.name"), "duplicate medium name"));
            }
            b.timing
                .validate()
                .map_err(|e| ConfigError::new(loc.clone(), e.to_string()))?;
            for st in &b.stations {
                let r = self.resolve_station(&format!("{loc}.stations"), st)?;
                if !self.station_on_can(r) {
                    return Err(ConfigError::new(
                        format!("{loc}.stations"),
                        format!("'{st}' is not a CAN station"),
                    ));
                }
                attach(r, loc.clone())?;
            }
        }
        for (i, l) in self.ethernet_links.iter().enumerate() {
            let loc = format!("ethernet_link[{i}] '{}'", l.name);
            if !media.insert(&l.name) {
                return Err(ConfigError::new(format!("{loc}.name"), "duplicate medium name"));
            }
            if !(l.bitrate.is_finite() && l.bitrate > 0.0) {
                return Err(ConfigError::new(format!("{loc}.bitrate"), "bit rate must be positive"));
            }
            for (key, st) in [("a", &l.a), ("b", &l.b)] {
                let r = self.resolve_station(&format!("{loc}.{key}"), st)?;
                if self.station_on_can(r) {
                    return Err(ConfigError::new(
                        format!("{loc}.{key}"),
                        format!("'{st}' is not an Ethernet station"),
                    ));
                }
                attach(r, format!("{loc}.{key}"))?;
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !attached.contains_key(&StationRef::Node(i)) {
                return Err(ConfigError::new(
                    format!("node[{i}] '{}'", n.name),
                    "not attached to any medium",
                ));
            }
        }
        for (i, s) in self.switches.iter().enumerate() {
            for p in &s.ports {
                if !attached.contains_key(&StationRef::Port(i, p.id)) {
                    return Err(ConfigError::new(
                        format!("switch[{i}] '{}'", s.name),
                        format!("port {} is not wired", p.id),
                    ));
                }
            }
        }

        let mut flow_ids = BTreeSet::new();
        for (i, f) in self.flows.iter().enumerate() {
            let loc = format!("flow[{i}] '{}'", f.id);
            if !flow_ids.insert(&f.id) {
                return Err(ConfigError::new(format!("{loc}.id"), "duplicate flow id"));
            }
            let src = self
                .node_index(&f.source)
                .ok_or_else(|| ConfigError::new(format!("{loc}.source"), format!("unknown node '{}'", f.source)))?;
            let node = &self.nodes[src];
            check_time(&format!("{loc}.start"), f.start)?;
            if f.count == 0 {
                return Err(ConfigError::new(format!("{loc}.count"), "count must be at least 1"));
            }
            match f.period {
                Some(p) if !(p.is_finite() && p > 0.0) => {
                    return Err(ConfigError::new(format!("{loc}.period"), "period must be positive"))
                }
                None if f.count > 1 => {
                    return Err(ConfigError::new(
                        format!("{loc}.period"),
                        "periodic flows need a period",
                    ))
                }
                _ => {}
            }
            if let Some(p) = f.priority {
                check_priority(&format!("{loc}.priority"), p)?;
                if !node.kind.on_can() {
                    return Err(ConfigError::new(
                        format!("{loc}.priority"),
                        "only CAN sources take a priority",
                    ));
                }
            }
            let (needs, max, min) = match f.transport {
                Transport::Ipv4 => {
                    if node.ip.is_none() {
                        return Err(ConfigError::new(
                            format!("{loc}.source"),
                            "IPv4 flows need a source with an IP",
                        ));
                    }
                    // IoC nodes may use the larger CAN XL budget.
                    let max = if node.kind == NodeKind::IocNode {
                        crate::codec::canxl::MAX_DATA_LEN - COMPACT_HEADER_LEN
                    } else {
                        MTU - IPV4_HEADER_LEN
                    };
                    (f.dst_ip.is_some(), max, 0)
                }
                Transport::RawEthernet => (f.dst_mac.is_some(), MTU, MIN_PAYLOAD),
                Transport::ClassicCan => {
                    if !node.kind.on_can() {
                        return Err(ConfigError::new(
                            format!("{loc}.source"),
                            "classic CAN flows need a CAN source",
                        ));
                    }
                    let id = f
                        .can_id
                        .ok_or_else(|| ConfigError::new(format!("{loc}.can_id"), "classic CAN flows need can_id"))?;
                    check_priority(&format!("{loc}.can_id"), id)?;
                    (true, CLASSIC_MAX_DATA_LEN, 0)
                }
            };
            if !needs {
                let key = if f.transport == Transport::Ipv4 {
                    "dst_ip"
                } else {
                    "dst_mac"
                };
                return Err(ConfigError::new(format!("{loc}.{key}"), "missing destination"));
            }
            if f.payload < min || f.payload > max {
                return Err(ConfigError::new(
                    format!("{loc}.payload"),
                    format!("payload {} outside [{min}, {max}] for this transport", f.payload),
                ));
            }
        }
        Ok(())
    }
}
