//! The event loop.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::codec::{Ipv4Address, MacAddress};
use crate::medium::{BusAttempt, CanBus, EthernetLink, StationId};
use crate::switch::{efdb, CSwitch, CanPortConfig, Decision, PortConfig, PortFrame, PortId, PortKind, SwitchConfig};
use crate::time::SimTime;
use crate::timing::EthernetTimingParams;

use super::config::{PortKindDef, StationRef, TopologyConfig, Transport};
use super::node::{Delivery, MsgTag, Node, NodeOutput, NodeSetup, NodeTimer, Tag};
use super::report::{FlowReport, LatencyStats, MediumReport, Report, SwitchReport};
use super::trace::{FrameSummary, TraceRecord};
use super::{SimError, SimOutput};

/// Upper bound on executed events; a run that needs more is treated as a
/// forwarding loop.
pub const MAX_EVENTS: u64 = 20_000_000;

/// Deterministic payload for message `seq` of flow `flow`.
pub fn flow_payload(flow: usize, seq: u32, len: usize) -> Vec<u8> {
    (0..len)
        .map(|i| ((flow as u64 * 131 + seq as u64 * 17 + i as u64 * 3) % 251) as u8)
        .collect()
}

#[derive(Debug)]
enum Event {
    Startup(usize),
    AppSend {
        flow: usize,
        seq: u32,
    },
    Hello(usize),
    NodeTimer(usize, NodeTimer),
    Arbitrate {
        medium: usize,
        from: Option<StationId>,
    },
    TxComplete {
        medium: usize,
        sender: StationId,
        frame: PortFrame,
        tag: Tag,
    },
    Deliver {
        station: StationId,
        frame: PortFrame,
        tag: Tag,
    },
}

#[derive(Debug)]
struct Scheduled {
    time: SimTime,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed: BinaryHeap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

enum Medium {
    Can(CanBus<Tag>),
    Eth(EthernetLink<Tag>),
}

struct MediumSlot {
    name: String,
    medium: Medium,
}

struct Station {
    owner: StationRef,
    medium: usize,
    label: String,
}

enum Intended {
    Ip(Ipv4Address),
    Mac(MacAddress),
    Classic,
}

#[derive(Default)]
struct MsgState {
    sent_at: SimTime,
    first_delivery: Option<SimTime>,
    per_node: BTreeMap<String, u64>,
    last_drop: Option<String>,
    filtered: bool,
}

struct FlowRt {
    id: String,
    source: usize,
    transport: Transport,
    intended: Intended,
    payload: usize,
    priority: Option<u16>,
    msgs: BTreeMap<u32, MsgState>,
    corrupted: u64,
    misdelivered: u64,
}

struct SwitchRt {
    name: String,
    core: CSwitch,
    hello: Option<SimTime>,
}

pub(super) struct Engine {
    now: SimTime,
    t_end: SimTime,
    seed: u64,
    next_seq: u64,
    events: u64,
    queue: BinaryHeap<Scheduled>,
    kicks: BTreeSet<(usize, Option<StationId>)>,
    nodes: Vec<Node>,
    switches: Vec<SwitchRt>,
    media: Vec<MediumSlot>,
    stations: Vec<Station>,
    station_of: BTreeMap<StationRef, StationId>,
    flows: Vec<FlowRt>,
    trace: Vec<TraceRecord>,
}

impl Engine {
    pub(super) fn new(config: &TopologyConfig) -> Result<Self, SimError> {
        config.validate()?;
        let nodes: Vec<Node> = config
            .nodes
            .iter()
            .map(|n| {
                Node::new(NodeSetup {
                    name: n.name.clone(),
                    kind: n.kind,
                    mac: n.mac,
                    ip: n.ip,
                    priority: n.priority.unwrap_or(0),
                    vcid: n.vcid,
                    static_arp: n.static_arp.iter().map(|s| (s.ip, s.mac)).collect(),
                    start: SimTime::from_secs_f64(n.start),
                    gratuitous_arp: n.gratuitous_arp,
                    eoc_refresh: n.eoc_refresh.and_then(|r| r.interval()),
                    can_rx_ids: n.can_rx_ids.clone(),
                })
            })
            .collect();
        let switches = config
            .switches
            .iter()
            .map(|s| {
                let ports = s
                    .ports
                    .iter()
                    .map(|p| {
                        let mut pc = match p.kind {
                            PortKindDef::Ethernet => PortConfig::ethernet(p.id),
                            PortKindDef::Can => PortConfig {
                                kind: PortKind::CanXl(CanPortConfig {
                                    egress_mode: p.egress_mode,
                                    priority_base: p.priority_base.expect("validated"),
                                    vcid: p.vcid,
                                }),
                                ..PortConfig::can(p.id, p.egress_mode, 0)
                            },
                        };
                        if let Some(c) = p.cost {
                            pc.stp_cost = c;
                        }
                        pc
                    })
                    .collect();
                let core = CSwitch::new(SwitchConfig {
                    bridge_id: s.bridge_id,
                    ports,
                    relay_rules: s.relay_rules.clone(),
                    ageing: s.ageing.map(SimTime::from_secs_f64).unwrap_or(efdb::DEFAULT_AGEING),
                    stp: s.stp.enabled,
                });
                SwitchRt {
                    name: s.name.clone(),
                    core,
                    hello: s.stp.enabled.then(|| SimTime::from_secs_f64(s.stp.hello)),
                }
            })
            .collect();

        let mut eng = Engine {
            now: SimTime::ZERO,
            t_end: SimTime::from_secs_f64(config.run.t_end),
            seed: config.run.seed,
            next_seq: 0,
            events: 0,
            queue: BinaryHeap::new(),
            kicks: BTreeSet::new(),
            nodes,
            switches,
            media: Vec::new(),
            stations: Vec::new(),
            station_of: BTreeMap::new(),
            flows: Vec::new(),
            trace: Vec::new(),
        };

        for b in &config.can_buses {
            let m = eng.media.len();
            let mut bus = CanBus::new(b.timing);
            for st in &b.stations {
                let r = config.resolve_station(&b.name, st)?;
                bus.attach(eng.add_station(r, m, st));
            }
            eng.media.push(MediumSlot {
                name: b.name.clone(),
                medium: Medium::Can(bus),
            });
        }
        for l in &config.ethernet_links {
            let m = eng.media.len();
            let a = config.resolve_station(&l.name, &l.a)?;
            let b = config.resolve_station(&l.name, &l.b)?;
            let (sa, sb) = (eng.add_station(a, m, &l.a), eng.add_station(b, m, &l.b));
            let timing = EthernetTimingParams::with_bitrate(l.bitrate);
            eng.media.push(MediumSlot {
                name: l.name.clone(),
                medium: Medium::Eth(EthernetLink::new(timing, sa, sb)),
            });
        }

        let mut sends = Vec::new();
        for (i, f) in config.flows.iter().enumerate() {
            let source = config.node_index(&f.source).expect("validated");
            let intended = match f.transport {
                Transport::Ipv4 => Intended::Ip(f.dst_ip.expect("validated")),
                Transport::RawEthernet => Intended::Mac(f.dst_mac.expect("validated")),
                Transport::ClassicCan => Intended::Classic,
            };
            eng.flows.push(FlowRt {
                id: f.id.clone(),
                source,
                transport: f.transport,
                intended,
                payload: f.payload,
                priority: f.priority.or(f.can_id),
                msgs: BTreeMap::new(),
                corrupted: 0,
                misdelivered: 0,
            });
            let start = SimTime::from_secs_f64(f.start);
            let period = SimTime::from_secs_f64(f.period.unwrap_or(0.0));
            for seq in 0..f.count {
                let t = start + SimTime(period.0.saturating_mul(seq as u64));
                if t > eng.t_end {
                    break;
                }
                sends.push((t, i, seq));
            }
        }

        // At equal times: hellos, then startups, then application sends.
        for s in 0..eng.switches.len() {
            if eng.switches[s].hello.is_some() {
                eng.schedule(SimTime::ZERO, Event::Hello(s));
            }
        }
        for n in 0..eng.nodes.len() {
            let start = eng.nodes[n].start;
            eng.schedule(start, Event::Startup(n));
        }
        for (t, flow, seq) in sends {
            eng.schedule(t, Event::AppSend { flow, seq });
        }
        Ok(eng)
    }

    fn add_station(&mut self, owner: StationRef, medium: usize, label: &str) -> StationId {
        let id = self.stations.len();
        self.stations.push(Station {
            owner,
            medium,
            label: label.to_string(),
        });
        self.station_of.insert(owner, id);
        id
    }

    fn schedule(&mut self, time: SimTime, event: Event) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Scheduled { time, seq, event });
    }

    fn record(&mut self, event: &str, location: &str, frame: Option<&PortFrame>, tag: Tag, reason: Option<&str>) {
        self.trace.push(TraceRecord {
            t_ns: self.now.as_nanos(),
            event: event.to_string(),
            location: location.to_string(),
            frame: frame.map(FrameSummary::of),
            flow: tag.map(|t| self.flows[t.flow].id.clone()),
            seq: tag.map(|t| t.seq),
            reason: reason.map(str::to_string),
        });
    }

    fn note_drop(&mut self, tag: Tag, reason: &str) {
        if let Some(t) = tag {
            if let Some(m) = self.flows[t.flow].msgs.get_mut(&t.seq) {
                m.last_drop = Some(reason.to_string());
            }
        }
    }

    pub(super) fn run(mut self) -> Result<SimOutput, SimError> {
        while let Some(top) = self.queue.peek() {
            if top.time > self.t_end {
                break;
            }
            let Scheduled { time, event, .. } = self.queue.pop().expect("peeked");
            if time < self.now {
                return Err(SimError::Invariant(format!(
                    "event at {time} scheduled before now {}",
                    self.now
                )));
            }
            self.now = time;
            self.events += 1;
            if self.events > MAX_EVENTS {
                return Err(SimError::Invariant(format!(
                    "more than {MAX_EVENTS} events; forwarding loop?"
                )));
            }
            self.handle(event)?;
        }
        let report = self.report();
        Ok(SimOutput {
            trace: self.trace,
            report,
        })
    }

    fn handle(&mut self, event: Event) -> Result<(), SimError> {
        match event {
            Event::Startup(n) => {
                let name = self.nodes[n].name.clone();
                self.record("startup", &name, None, None, None);
                let out = self.nodes[n].startup();
                self.node_output(n, out)
            }
            Event::AppSend { flow, seq } => {
                let f = &self.flows[flow];
                let (src, transport, len, priority) = (f.source, f.transport, f.payload, f.priority);
                let tag = Some(MsgTag { flow, seq });
                self.flows[flow].msgs.insert(
                    seq,
                    MsgState {
                        sent_at: self.now,
                        ..Default::default()
                    },
                );
                let name = self.nodes[src].name.clone();
                self.record("app_send", &name, None, tag, None);
                let payload = flow_payload(flow, seq, len);
                let now = self.now;
                let node = &mut self.nodes[src];
                let out = match (transport, &self.flows[flow].intended) {
                    (Transport::Ipv4, Intended::Ip(ip)) => node.send_ip(*ip, payload, tag, priority, now),
                    (Transport::RawEthernet, Intended::Mac(mac)) => node.send_raw(*mac, payload, tag, priority),
                    (Transport::ClassicCan, _) => node.send_classic(priority.expect("validated"), payload, tag),
                    _ => unreachable!("intended destination follows the transport"),
                };
                self.node_output(src, out)
            }
            Event::Hello(s) => {
                let now = self.now;
                let sw = &mut self.switches[s];
                sw.core.age_out(now);
                let frames = sw.core.hello();
                let name = sw.name.clone();
                let next = sw.hello.expect("hello only with STP");
                self.record("hello", &name, None, None, None);
                for (port, frame) in frames {
                    let st = self.station_of[&StationRef::Port(s, port)];
                    self.enqueue(st, frame, None)?;
                }
                self.schedule(now + next, Event::Hello(s));
                Ok(())
            }
            Event::NodeTimer(n, timer) => {
                let name = self.nodes[n].name.clone();
                self.record("timer", &name, None, None, Some("arp_retry"));
                let out = self.nodes[n].timer(timer, self.now);
                self.node_output(n, out)
            }
            Event::Arbitrate { medium, from } => self.arbitrate(medium, from),
            Event::TxComplete {
                medium,
                sender,
                frame,
                tag,
            } => {
                let loc = format!("{}/{}", self.media[medium].name, self.stations[sender].label);
                self.record("tx_end", &loc, Some(&frame), tag, None);
                let receivers: Vec<StationId> = match &mut self.media[medium].medium {
                    Medium::Can(bus) => {
                        bus.complete();
                        bus.receivers(sender).collect()
                    }
                    Medium::Eth(link) => {
                        link.complete(sender);
                        vec![link.peer(sender)]
                    }
                };
                for r in receivers {
                    self.schedule(
                        self.now,
                        Event::Deliver {
                            station: r,
                            frame: frame.clone(),
                            tag,
                        },
                    );
                }
                self.kick(medium, sender);
                Ok(())
            }
            Event::Deliver { station, frame, tag } => {
                let label = self.stations[station].label.clone();
                self.record("rx", &label, Some(&frame), tag, None);
                match self.stations[station].owner {
                    StationRef::Node(n) => {
                        let out = self.nodes[n].receive(&frame, tag, self.now);
                        self.node_output(n, out)
                    }
                    StationRef::Port(s, port) => self.switch_ingress(s, port, frame, tag),
                }
            }
        }
    }

    fn arbitrate(&mut self, medium: usize, from: Option<StationId>) -> Result<(), SimError> {
        self.kicks.remove(&(medium, from));
        let now = self.now;
        let name = self.media[medium].name.clone();
        loop {
            let (sender, frame, tag, end) = match &mut self.media[medium].medium {
                Medium::Can(bus) => {
                    if !bus.is_idle() {
                        return Err(SimError::Invariant(format!("{name}: arbitration while busy")));
                    }
                    match bus.try_start(now) {
                        None => return Ok(()),
                        Some(BusAttempt::Started(tx)) => (tx.sender, PortFrame::Can(tx.frame), tx.meta, tx.end),
                        Some(BusAttempt::Clash { clash, dropped }) => {
                            let reason = format!("priority_clash 0x{:03x}", clash.priority);
                            for (st, frame, tag) in dropped {
                                let loc = format!("{name}/{}", self.stations[st].label);
                                self.record("clash", &loc, Some(&PortFrame::Can(frame)), tag, Some(&reason));
                                self.note_drop(tag, "priority_clash");
                            }
                            // The rest of the bus contends again at once.
                            continue;
                        }
                    }
                }
                Medium::Eth(link) => {
                    let from = from.expect("links arbitrate per direction");
                    match link.try_start(from, now) {
                        None => return Ok(()),
                        Some(tx) => (from, PortFrame::Ethernet(tx.frame), tx.meta, tx.end),
                    }
                }
            };
            let loc = format!("{name}/{}", self.stations[sender].label);
            self.record("tx_start", &loc, Some(&frame), tag, None);
            self.schedule(
                end,
                Event::TxComplete {
                    medium,
                    sender,
                    frame,
                    tag,
                },
            );
            return Ok(());
        }
    }

    fn kick(&mut self, medium: usize, station: StationId) {
        let key = match &self.media[medium].medium {
            Medium::Can(bus) if bus.is_idle() && bus.has_pending() => (medium, None),
            Medium::Eth(link) if link.is_idle(station) && link.has_pending(station) => (medium, Some(station)),
            _ => return,
        };
        if self.kicks.insert(key) {
            self.schedule(self.now, Event::Arbitrate { medium, from: key.1 });
        }
    }

    fn enqueue(&mut self, station: StationId, frame: PortFrame, tag: Tag) -> Result<(), SimError> {
        let m = self.stations[station].medium;
        match (&mut self.media[m].medium, frame) {
            (Medium::Can(bus), PortFrame::Can(f)) => bus.enqueue(station, f, tag),
            (Medium::Eth(link), PortFrame::Ethernet(f)) => link.enqueue(station, f, tag),
            _ => {
                return Err(SimError::Invariant(format!(
                    "{}: frame kind does not match medium",
                    self.stations[station].label
                )))
            }
        }
        self.kick(m, station);
        Ok(())
    }

    fn node_output(&mut self, n: usize, out: NodeOutput) -> Result<(), SimError> {
        let name = self.nodes[n].name.clone();
        let station = self.station_of[&StationRef::Node(n)];
        for (tag, reason) in out.drops {
            self.record("drop", &name, None, tag, Some(reason));
            self.note_drop(tag, reason);
        }
        for (tag, reason) in out.filtered {
            self.record("filter", &name, None, tag, Some(reason));
            if let Some(t) = tag {
                if let Some(m) = self.flows[t.flow].msgs.get_mut(&t.seq) {
                    m.filtered = true;
                }
            }
        }
        for d in out.delivered {
            self.deliver(n, d);
        }
        for (at, timer) in out.timers {
            self.schedule(at, Event::NodeTimer(n, timer));
        }
        for (frame, tag) in out.frames {
            self.enqueue(station, frame, tag)?;
        }
        Ok(())
    }

    fn deliver(&mut self, n: usize, d: Delivery) {
        let name = self.nodes[n].name.clone();
        let Some(tag) = d.tag else {
            return;
        };
        self.record("deliver", &name, None, d.tag, None);
        let node = &self.nodes[n];
        let flow = &mut self.flows[tag.flow];
        let intended = n != flow.source
            && match flow.intended {
                Intended::Ip(ip) => ip.is_broadcast() || node.ip == Some(ip),
                Intended::Mac(mac) => mac.is_group() || node.mac == mac,
                Intended::Classic => true,
            };
        if !intended {
            flow.misdelivered += 1;
            return;
        }
        if d.payload != flow_payload(tag.flow, tag.seq, flow.payload) {
            flow.corrupted += 1;
            return;
        }
        let now = self.now;
        let m = flow.msgs.entry(tag.seq).or_default();
        m.first_delivery.get_or_insert(now);
        *m.per_node.entry(name).or_default() += 1;
    }

    fn switch_ingress(&mut self, s: usize, port: PortId, frame: PortFrame, tag: Tag) -> Result<(), SimError> {
        let now = self.now;
        let out = self.switches[s].core.forward(port, frame, now);
        let name = self.switches[s].name.clone();
        let loc = format!("{name}:{port}");
        match out.decision {
            Decision::Unicast(_) => self.record("forward", &loc, None, tag, None),
            Decision::Flood => self.record("flood", &loc, None, tag, None),
            Decision::Control => self.record("bpdu", &loc, None, None, None),
            Decision::Relayed => self.record("relay", &loc, None, tag, None),
            Decision::Dropped(r) => {
                self.record("drop", &loc, None, tag, Some(r.as_str()));
                self.note_drop(tag, r.as_str());
            }
        }
        for (p, r) in out.drops {
            self.record("drop", &format!("{name}:{p}"), None, tag, Some(r.as_str()));
            self.note_drop(tag, r.as_str());
        }
        for (p, frame) in out.data {
            self.record("egress", &format!("{name}:{p}"), Some(&frame), tag, None);
            let st = self.station_of[&StationRef::Port(s, p)];
            self.enqueue(st, frame, tag)?;
        }
        for (p, frame) in out.control {
            let st = self.station_of[&StationRef::Port(s, p)];
            self.enqueue(st, frame, None)?;
        }
        Ok(())
    }

    fn report(&self) -> Report {
        let t_end = self.t_end.as_nanos();
        let flows = self
            .flows
            .iter()
            .map(|f| {
                let mut r = FlowReport {
                    sent: f.msgs.len() as u64,
                    corrupted: f.corrupted,
                    misdelivered: f.misdelivered,
                    ..Default::default()
                };
                let mut samples = Vec::new();
                for m in f.msgs.values() {
                    match m.first_delivery {
                        Some(t) => {
                            r.delivered += 1;
                            samples.push((t - m.sent_at).as_nanos());
                        }
                        None => {
                            let reason = m
                                .last_drop
                                .clone()
                                .unwrap_or_else(|| if m.filtered { "filtered" } else { "in_flight" }.to_string());
                            *r.drops.entry(reason).or_default() += 1;
                        }
                    }
                    for (node, &count) in &m.per_node {
                        r.deliveries += count;
                        r.duplicates += count - 1;
                        *r.deliveries_by_node.entry(node.clone()).or_default() += count;
                    }
                }
                r.latency = LatencyStats::from_samples(&samples);
                (f.id.clone(), r)
            })
            .collect();
        let media = self
            .media
            .iter()
            .map(|m| {
                let (kind, stats) = match &m.medium {
                    Medium::Can(b) => ("can_bus", &b.stats),
                    Medium::Eth(l) => ("ethernet_link", &l.stats),
                };
                let busy = stats.busy.as_nanos();
                let utilization = if t_end == 0 { 0.0 } else { busy as f64 / t_end as f64 };
                (
                    m.name.clone(),
                    MediumReport {
                        kind,
                        frames: stats.frames,
                        busy_ns: busy,
                        utilization,
                        clashes: stats.clashes,
                    },
                )
            })
            .collect();
        let switches = self
            .switches
            .iter()
            .map(|s| {
                let port_roles = s
                    .core
                    .ports()
                    .map(|p| (p.id.to_string(), s.core.port_role(p.id)))
                    .collect();
                (
                    s.name.clone(),
                    SwitchReport {
                        counters: s.core.counters.clone(),
                        port_roles,
                        root_id: s.core.spanning_tree().map(|t| t.root_id()),
                        efdb: s.core.efdb().entries().cloned().collect(),
                    },
                )
            })
            .collect();
        let nodes = self
            .nodes
            .iter()
            .map(|n| (n.name.clone(), n.counters.clone()))
            .collect();
        Report {
            seed: self.seed,
            t_end_ns: t_end,
            events: self.events,
            flows,
            media,
            switches,
            nodes,
        }
    }
}
