use super::config::{EocRefresh, StaticArp};
use super::*;
use crate::codec::MacAddress;

const FIG2: &str = include_str!("../../../../scenarios/fig2_eoc.toml");
const FIG4: &str = include_str!("../../../../scenarios/fig4_ioc.toml");
const ALL: [&str; 7] = [
    FIG2,
    FIG4,
    include_str!("../../../../scenarios/flooding.toml"),
    include_str!("../../../../scenarios/stp_triangle.toml"),
    include_str!("../../../../scenarios/legacy_relay.toml"),
    include_str!("../../../../scenarios/clash.toml"),
    include_str!("../../../../scenarios/gratuitous_arp.toml"),
];

fn cfg(text: &str) -> TopologyConfig {
    TopologyConfig::from_toml(text).unwrap()
}

fn events<'a>(out: &'a SimOutput, event: &'a str) -> impl Iterator<Item = &'a TraceRecord> + 'a {
    out.trace.iter().filter(move |r| r.event == event)
}

#[test]
fn every_scenario_is_deterministic_and_conserves() {
    for text in ALL {
        let a = run(&cfg(text)).unwrap();
        let b = run(&cfg(text)).unwrap();
        assert_eq!(a.trace_jsonl(), b.trace_jsonl());
        assert_eq!(a.report_json(), b.report_json());
        for (id, f) in &a.report.flows {
            let dropped: u64 = f.drops.values().sum();
            assert_eq!(f.sent, f.delivered + dropped, "flow {id}");
            assert_eq!((f.corrupted, f.misdelivered), (0, 0), "flow {id}");
        }
        let mut last = 0;
        for r in &a.trace {
            assert!(r.t_ns >= last);
            last = r.t_ns;
        }
    }
}

#[test]
fn warm_cache_latency_is_the_two_medium_durations() {
    let mut c = cfg(FIG2);
    c.nodes[0].static_arp.push(StaticArp {
        ip: "10.0.0.2".parse().unwrap(),
        mac: "02:00:00:00:02:01".parse().unwrap(),
    });
    let out = run(&c).unwrap();
    let f = &out.report.flows["ecu_to_a"];
    // 78-byte EoC frame at 500k/16M plus a 64-byte Ethernet payload at 10M.
    assert_eq!(f.latency.unwrap().max_ns, 122_450 + 72_000);
}

#[test]
fn empty_flow_set_only_runs_control_traffic() {
    let mut c = cfg(FIG2);
    c.flows.clear();
    let out = run(&c).unwrap();
    assert!(out.trace.iter().all(|r| r.flow.is_none()
        && matches!(
            r.event.as_str(),
            "hello" | "startup" | "tx_start" | "tx_end" | "rx" | "bpdu"
        )));
    assert!(out.report.flows.is_empty());
    assert!(out.report.switches["sw1"].efdb.is_empty());
}

#[test]
fn zero_end_time_keeps_only_instant_zero() {
    let mut c = cfg(FIG2);
    c.run.t_end = 0.0;
    let out = run(&c).unwrap();
    assert!(!out.trace.is_empty());
    assert!(out.trace.iter().all(|r| r.t_ns == 0));
    assert_eq!(out.report.flows["ecu_to_a"].sent, 0);
}

#[test]
fn unresolved_arp_is_retried_once_then_dropped() {
    let mut c = cfg(FIG2);
    c.flows[0].dst_ip = Some("10.0.0.77".parse().unwrap());
    c.run.t_end = 3.0;
    let out = run(&c).unwrap();
    assert_eq!(out.report.flows["ecu_to_a"].drops["arp_unresolved"], 1);
    let requests = events(&out, "tx_start")
        .filter(|r| r.location == "can0/ecu" && r.frame.as_ref().unwrap().content == "arp_request")
        .count();
    assert_eq!(requests, 2);
    assert_eq!(out.report.nodes["ecu"].arp_unresolved, 1);
}

#[test]
fn ioc_refresh_sends_occasional_eoc() {
    let mut c = cfg(FIG4);
    c.nodes[0].eoc_refresh = Some(EocRefresh::Seconds(0.05));
    c.flows[0].period = Some(0.01);
    c.flows[0].count = 20;
    c.run.t_end = 0.5;
    let out = run(&c).unwrap();
    let f = &out.report.flows["ecu_to_a"];
    assert_eq!((f.sent, f.delivered), (20, 20));
    let n = &out.report.nodes["ioc_ecu"];
    assert!(n.eoc_refresh >= 3, "{n:?}");
    assert_eq!(n.ioc_sent + n.eoc_refresh, 20);
}

#[test]
fn same_tick_startups_are_serialized_by_arbitration() {
    let mut c = cfg(FIG4);
    let mut second = c.nodes[0].clone();
    second.name = "ioc_ecu2".into();
    second.mac = MacAddress([2, 0, 0, 0, 1, 2]);
    second.ip = Some("10.0.0.5".parse().unwrap());
    second.priority = Some(0x0f0);
    c.nodes.push(second);
    c.can_buses[0].stations.push("ioc_ecu2".into());
    c.flows.clear();
    let out = run(&c).unwrap();
    let starts: Vec<&TraceRecord> = events(&out, "tx_start")
        .filter(|r| r.frame.as_ref().unwrap().content == "arp_gratuitous" && r.location.starts_with("can0"))
        .collect();
    assert_eq!(starts.len(), 2);
    assert_eq!(starts[0].location, "can0/ioc_ecu2");
    assert!(starts[1].t_ns > starts[0].t_ns);
    assert_eq!(out.report.switches["sw1"].efdb.len(), 2);
}

#[test]
fn invalid_config_is_a_config_error() {
    let mut c = cfg(FIG2);
    c.nodes[1].mac = c.nodes[0].mac;
    assert!(matches!(run(&c), Err(SimError::Config(_))));
}
