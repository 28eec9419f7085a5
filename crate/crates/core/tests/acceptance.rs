//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use canxl_net::codec::ethernet::ETHERTYPE_IPV4;
use canxl_net::codec::{
    arp_parse, arp_serialize, eoc_decapsulate, eoc_encapsulate, ethernet_to_ioc, ioc_decapsulate, ioc_encapsulate,
    ioc_encode, ioc_to_ethernet, EthernetFrame, IocDatagram, Ipv4Packet, MacAddress,
};
use canxl_net::sim::config::Transport;
use canxl_net::sim::{flow_payload, run, Report, SimOutput, TopologyConfig, TraceRecord};
use canxl_net::switch::PortRole;
use canxl_net::time::SimTime;
use canxl_net::timing::{canxl_duration, ethernet_duration, EthernetTimingParams};
use common::*;
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

/// Relative tolerance on the five published frame durations.
const TIMING_TOL: f64 = 0.06;
/// Relative tolerance on classic CAN blocking.
const CLASSIC_TOL: f64 = 0.02;
/// Percentage-point tolerance on the IoC over EoC gains.
const GAIN_TOL_PP: f64 = 1.5;
const TABLE_BUDGET: Duration = Duration::from_secs(1);
const PROP_CASES: u32 = 1000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("timing reproduction", timing_reproduction),
        ("throughput gains", throughput_gains),
        ("size delta", size_delta),
        ("codec round trips", codec_round_trips),
        ("eoc node to ethernet host", eoc_to_ethernet),
        ("ioc node to ethernet host and back", ioc_to_ethernet_and_back),
        ("confinement and flooding", confinement_and_flooding),
        ("clash detection", clash_detection),
        ("stp loop safety", stp_loop_safety),
        ("determinism", determinism),
        ("gratuitous arp path", gratuitous_arp_path),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn timing_table_output() -> Result<(String, Duration), String> {
    let t0 = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_canxl-sim"))
        .args(["timing", "--table"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    ensure!(
        out.status.success(),
        "timing --table exited with {:?}",
        out.status.code()
    );
    Ok((String::from_utf8_lossy(&out.stdout).into_owned(), elapsed))
}

/// Numbers following `label` on the first line that starts with it.
fn row(table: &str, label: &str) -> Result<Vec<f64>, String> {
    let line = table
        .lines()
        .find(|l| l.starts_with(label))
        .ok_or_else(|| format!("no row {label:?}"))?;
    Ok(line[label.len()..]
        .split(|c: char| c.is_whitespace() || c == ',' || c == '%')
        .filter_map(|w| w.trim_start_matches(':').parse::<f64>().ok())
        .collect())
}

fn timing_reproduction() -> Outcome {
    let (table, elapsed) = timing_table_output()?;
    let mut parts = Vec::new();
    for (label, reference) in [
        ("EoC 500k", 118.0),
        ("EoC 1M", 84.0),
        ("IoC 500k", 104.0),
        ("IoC 1M", 70.0),
        ("CAN XL 2048B 500k", 1200.0),
    ] {
        let model = row(&table, label)?[0];
        let dev = (model - reference) / reference;
        ensure!(
            dev.abs() <= TIMING_TOL,
            "{label}: {model} µs vs {reference} µs ({:+.2}%)",
            dev * 100.0
        );
        parts.push(format!("{label} {model:.2}/{reference} ({:+.1}%)", dev * 100.0));
    }
    let eth = row(&table, "Ethernet 64B 10M")?[0];
    ensure!(eth == 72.0, "Ethernet 64 B printed as {eth} µs");
    let exact = ethernet_duration(64, &EthernetTimingParams::default()).unwrap();
    ensure!((exact - 72e-6).abs() < 1e-15, "Ethernet 64 B is {exact} s");
    parts.push("Ethernet 72 µs".into());
    let classic = row(&table, "blocking at 500k")?;
    let classic = *classic.first().ok_or("no classic blocking figure")?;
    let dev = (classic - 220.0) / 220.0;
    ensure!(
        (classic - 222.0).abs() < 1e-9 && dev.abs() <= CLASSIC_TOL,
        "classic blocking {classic} µs"
    );
    parts.push(format!("classic {classic:.0} µs ({:+.1}% of 220)", dev * 100.0));
    ensure!(elapsed < TABLE_BUDGET, "took {elapsed:?}");
    parts.push(format!("{} ms", elapsed.as_millis()));
    Ok(parts.join(", "))
}

fn throughput_gains() -> Outcome {
    let (table, _) = timing_table_output()?;
    let mut parts = Vec::new();
    for (label, reference) in [("IoC over EoC gain 500k", 14.0), ("IoC over EoC gain 1M", 20.0)] {
        let gain = row(&table, label)?[0];
        ensure!(
            (gain - reference).abs() <= GAIN_TOL_PP,
            "{label}: {gain}% vs {reference}%"
        );
        parts.push(format!("{gain:.2}% vs {reference}%"));
    }
    Ok(parts.join(", "))
}

fn prop<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases: PROP_CASES,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new(config).run(&strategy, test).map_err(|e| e.to_string())
}

fn check(cond: bool, what: &str) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(what.to_string()))
    }
}

fn size_delta() -> Outcome {
    let da: MacAddress = "02:00:00:00:00:01".parse().unwrap();
    let sa: MacAddress = "02:00:00:00:00:02".parse().unwrap();
    // Below 46 bytes Ethernet pads the datagram and the delta grows.
    prop(plain_ipv4(46..=1500), |p| {
        let eth = EthernetFrame::new(da, sa, ETHERTYPE_IPV4, p.encode().unwrap()).unwrap();
        let eoc = eoc_encapsulate(&eth, 0x100, 0).unwrap();
        let ioc = ioc_encapsulate(&p, 0x100, 0).unwrap();
        check(eoc.data().len() - ioc.data().len() == 26, "delta is not 26")
    })?;
    Ok(format!("{PROP_CASES} datagrams of 46..1500 B, delta 26 B in all"))
}

fn codec_round_trips() -> Outcome {
    prop(
        (ethernet_frame(), 0u16..=0x7ff, proptest::num::u8::ANY),
        |(eth, prio, vcid)| {
            let xl = eoc_encapsulate(&eth, prio, vcid).unwrap();
            check(eoc_decapsulate(&xl).unwrap() == eth, "eoc")
        },
    )
    .map_err(|e| format!("eoc: {e}"))?;
    prop(ioc_datagram(2040), |d| {
        let xl = ioc_encode(&d, 0x100, 0).unwrap();
        check(ioc_decapsulate(&xl).unwrap() == d, "ioc")
    })
    .map_err(|e| format!("ioc: {e}"))?;
    prop(arp_message(), |m| {
        check(arp_parse(&arp_serialize(&m)).unwrap() == m, "arp")
    })
    .map_err(|e| format!("arp: {e}"))?;
    prop((ioc_datagram(1480), unicast_mac(), unicast_mac()), |(d, da, sa)| {
        let eth = ioc_to_ethernet(&d, da, sa).unwrap();
        check(
            ethernet_to_ioc(&eth).unwrap() == d,
            "ethernet_to_ioc after ioc_to_ethernet",
        )
    })
    .map_err(|e| format!("ethernet/ioc: {e}"))?;
    Ok(format!(
        "eoc, ioc, arp, ethernet/ioc: {PROP_CASES} cases each, 0 failures"
    ))
}

fn simulate(name: &str) -> Result<(TopologyConfig, SimOutput), String> {
    let c = scenario(name);
    let out = run(&c).map_err(|e| format!("{name}: {e}"))?;
    Ok((c, out))
}

fn mac_of(c: &TopologyConfig, node: &str) -> MacAddress {
    c.nodes[c.node_index(node).unwrap()].mac
}

fn ns(secs: f64) -> u64 {
    SimTime::from_secs_f64(secs).as_nanos()
}

fn efdb_macs(r: &Report, sw: &str) -> BTreeSet<MacAddress> {
    r.switches[sw].efdb.iter().filter_map(|e| e.mac).collect()
}

fn content(rec: &TraceRecord) -> &str {
    rec.frame.as_ref().map_or("", |f| f.content.as_str())
}

fn port_of(location: &str) -> &str {
    location.rsplit_once(':').map_or("", |(_, p)| p)
}

fn eoc_to_ethernet() -> Outcome {
    let (c, out) = simulate("fig2_eoc")?;
    let tr = &out.trace;
    let sw = "sw1";
    let at_sw = |r: &&TraceRecord| r.location.starts_with("sw1:");

    let rx = tr
        .iter()
        .filter(at_sw)
        .find(|r| r.event == "rx" && content(r) == "arp_request")
        .ok_or("switch never received the ARP request")?;
    let forwarding: BTreeSet<String> = out.report.switches[sw]
        .port_roles
        .iter()
        .filter(|(p, role)| p.as_str() != port_of(&rx.location) && **role != PortRole::Blocked)
        .map(|(p, _)| p.clone())
        .collect();
    let flooded: BTreeSet<String> = tr
        .iter()
        .filter(at_sw)
        .filter(|r| r.event == "egress" && content(r) == "arp_request")
        .map(|r| port_of(&r.location).to_string())
        .collect();
    ensure!(
        flooded == forwarding,
        "ARP request egress {flooded:?}, forwarding ports {forwarding:?}"
    );

    let egress = |kind: &str| {
        tr.iter()
            .filter(at_sw)
            .filter(|r| r.event == "egress" && content(r) == kind)
            .count()
    };
    ensure!(
        egress("arp_reply") == 1,
        "ARP reply left on {} ports",
        egress("arp_reply")
    );
    ensure!(egress("ipv4") == 1, "data frame left on {} ports", egress("ipv4"));

    let efdb = efdb_macs(&out.report, sw);
    for node in ["ecu", "host_a"] {
        ensure!(efdb.contains(&mac_of(&c, node)), "EFDB lacks {node}");
    }
    let flow = &out.report.flows["ecu_to_a"];
    ensure!(
        flow.delivered == 1 && flow.deliveries == 1,
        "{} deliveries",
        flow.deliveries
    );

    // Idle media: request over CAN then Ethernet, reply back, then data.
    let xl = &c.can_buses[0].timing;
    let eth = EthernetTimingParams::with_bitrate(c.ethernet_links[0].bitrate);
    let arp_can = ns(canxl_duration(60, xl).unwrap());
    let arp_eth = ns(ethernet_duration(28, &eth).unwrap());
    let data_can = ns(canxl_duration(14 + 64, xl).unwrap());
    let data_eth = ns(ethernet_duration(64, &eth).unwrap());
    let expected = 2 * (arp_can + arp_eth) + data_can + data_eth;
    let got = flow.latency.as_ref().ok_or("no latency")?.max_ns;
    ensure!(got == expected, "latency {got} ns, analytic {expected} ns");
    Ok(format!(
        "ARP request flooded to {} port(s), reply and data unicast, latency {got} ns = analytic",
        flooded.len()
    ))
}

fn ones_complement_ok(header: &[u8]) -> bool {
    let mut sum: u32 = header
        .chunks(2)
        .map(|w| u32::from(u16::from_be_bytes([w[0], w[1]])))
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum == 0xffff
}

fn ioc_to_ethernet_and_back() -> Outcome {
    let (c, out) = simulate("fig4_ioc")?;
    let r = &out.report;
    for flow in ["ecu_to_a", "a_to_ecu"] {
        let f = &r.flows[flow];
        ensure!(
            f.delivered == 1 && f.corrupted == 0 && f.misdelivered == 0,
            "{flow}: delivered {} corrupted {} misdelivered {}",
            f.delivered,
            f.corrupted,
            f.misdelivered
        );
    }
    let ecu = mac_of(&c, "ioc_ecu");
    let host = mac_of(&c, "host_a");
    let efdb = &r.switches["sw1"].efdb;
    for n in &c.nodes {
        ensure!(
            efdb.iter().any(|e| e.mac == Some(n.mac) && e.ip == n.ip),
            "EFDB lacks {} ({}, {:?})",
            n.name,
            n.mac,
            n.ip
        );
    }
    let tag = |rec: &TraceRecord, flow: &str| rec.flow.as_deref() == Some(flow);
    let out_eth: Vec<_> = out
        .trace
        .iter()
        .filter(|x| x.event == "egress" && tag(x, "ecu_to_a"))
        .filter_map(|x| x.frame.clone())
        .collect();
    ensure!(out_eth.len() == 1, "{} egress frames for ecu_to_a", out_eth.len());
    let f = &out_eth[0];
    ensure!(
        f.kind == "ethernet" && f.content == "ipv4",
        "egress is {} {}",
        f.kind,
        f.content
    );
    ensure!(
        f.da == Some(host) && f.sa == Some(ecu),
        "egress MACs {:?} -> {:?}",
        f.sa,
        f.da
    );
    let back: Vec<_> = out
        .trace
        .iter()
        .filter(|x| x.event == "egress" && tag(x, "a_to_ecu"))
        .filter_map(|x| x.frame.clone())
        .collect();
    ensure!(
        back.len() == 1 && back[0].kind == "canxl" && back[0].content == "ioc",
        "reverse egress {back:?}"
    );

    // Rebuild the outgoing frame with the same MACs and check its header.
    let idx = c.flows.iter().position(|f| f.id == "ecu_to_a").unwrap();
    let fl = &c.flows[idx];
    let payload = flow_payload(idx, 0, fl.payload);
    let d = IocDatagram {
        dscp_ecn: 0,
        ttl: 64,
        protocol: 17,
        src: c.nodes[c.node_index("ioc_ecu").unwrap()].ip.unwrap(),
        dst: fl.dst_ip.unwrap(),
        payload: payload.clone(),
    };
    let eth = ioc_to_ethernet(&d, host, ecu).map_err(|e| e.to_string())?;
    ensure!(ones_complement_ok(&eth.payload[..20]), "IPv4 header checksum invalid");
    let p = Ipv4Packet::decode(&eth.payload).map_err(|e| e.to_string())?;
    ensure!(p.payload == payload, "payload altered by reconstruction");
    ensure!(matches!(fl.transport, Transport::Ipv4), "ecu_to_a is not an IPv4 flow");
    Ok("both directions delivered byte-identically, MACs from EFDB, header checksum valid".into())
}

fn confinement_and_flooding() -> Outcome {
    let (c, out) = simulate("flooding")?;
    let egress_of = |seq: u32| {
        out.trace
            .iter()
            .filter(|r| r.event == "egress" && r.flow.as_deref() == Some("ecu_to_h3") && r.seq == Some(seq))
            .count()
    };
    let deliveries_of = |seq: u32| {
        out.trace
            .iter()
            .filter(|r| r.event == "deliver" && r.flow.as_deref() == Some("ecu_to_h3") && r.seq == Some(seq))
            .count()
    };
    let (first, second) = (egress_of(0), egress_of(1));
    ensure!(first > 1, "first send left on {first} port(s)");
    ensure!(deliveries_of(0) == 1, "first send delivered {} times", deliveries_of(0));
    ensure!(second == 1, "second send left on {second} port(s)");
    ensure!(
        deliveries_of(1) == 1,
        "second send delivered {} times",
        deliveries_of(1)
    );
    let flow = c.flows.iter().find(|f| f.id == "ecu_to_h3").unwrap();
    ensure!(flow.dst_mac == Some(mac_of(&c, "h3")), "flow not addressed to h3");
    Ok(format!(
        "before learning {first} egress ports, after learning {second}, one delivery each"
    ))
}

fn clash_detection() -> Outcome {
    let (_, out) = simulate("clash")?;
    let clashes = out.trace.iter().filter(|r| r.event == "clash").count();
    let delivered: u64 = out.report.flows.values().map(|f| f.deliveries).sum();
    let recorded = out.report.media.values().map(|m| m.clashes).sum::<u64>();
    ensure!(
        clashes == 2 && recorded == 1,
        "{clashes} clash records, {recorded} clashes counted"
    );
    ensure!(delivered == 0, "{delivered} deliveries");
    for (id, f) in &out.report.flows {
        ensure!(f.drops.get("priority_clash") == Some(&1), "{id} drops {:?}", f.drops);
    }
    Ok("1 clash, both frames dropped, 0 deliveries".into())
}

fn stp_loop_safety() -> Outcome {
    let (c, out) = simulate("stp_triangle")?;
    let blocked: Vec<String> = out
        .report
        .switches
        .iter()
        .flat_map(|(s, sw)| {
            sw.port_roles
                .iter()
                .filter(|(_, role)| **role == PortRole::Blocked)
                .map(move |(p, _)| format!("{s}:{p}"))
        })
        .collect();
    ensure!(blocked.len() == 1, "blocked ports {blocked:?}");
    let flow = &out.report.flows["h1_broadcast"];
    let source = &c.flows[0].source;
    let by_node: &BTreeMap<String, u64> = &flow.deliveries_by_node;
    for n in c.nodes.iter().filter(|n| &n.name != source) {
        let k = by_node.get(&n.name).copied().unwrap_or(0);
        ensure!(k == 1, "{} received the broadcast {k} times", n.name);
    }
    ensure!(out.report.events < 10_000, "{} events", out.report.events);
    Ok(format!(
        "blocked {}, one copy at each of {} end nodes, {} events",
        blocked[0],
        c.nodes.len() - 1,
        out.report.events
    ))
}

fn determinism() -> Outcome {
    for name in SCENARIOS {
        let (_, a) = simulate(name)?;
        let (_, b) = simulate(name)?;
        ensure!(a.trace_jsonl() == b.trace_jsonl(), "{name}: traces differ");
        ensure!(a.report_json() == b.report_json(), "{name}: reports differ");
    }
    Ok(format!("{} scenarios, identical traces and reports", SCENARIOS.len()))
}

fn gratuitous_arp_path() -> Outcome {
    let mut c = scenario("gratuitous_arp");
    let arp_on_wire = |o: &SimOutput| {
        o.trace
            .iter()
            .filter(|r| r.event == "tx_start" && matches!(content(r), "arp_request" | "arp_reply"))
            .count()
    };
    let on = run(&c).map_err(|e| e.to_string())?;
    let f = &on.report.flows["ecu_to_a"];
    ensure!(f.delivered == 1, "enabled: delivered {}", f.delivered);
    ensure!(arp_on_wire(&on) == 0, "enabled: dynamic ARP traffic seen");
    for n in &mut c.nodes {
        n.gratuitous_arp = false;
    }
    let off = run(&c).map_err(|e| e.to_string())?;
    let f = &off.report.flows["ecu_to_a"];
    let failures = f.drops.get("reconstruction_failure").copied().unwrap_or(0);
    ensure!(
        f.delivered == 0 && failures == 1,
        "disabled: delivered {} drops {:?}",
        f.delivered,
        f.drops
    );
    ensure!(arp_on_wire(&off) == 0, "disabled: dynamic ARP traffic seen");
    Ok("enabled: delivered; disabled: reconstruction_failure".into())
}
