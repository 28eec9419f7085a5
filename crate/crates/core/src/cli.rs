//! `canxl-sim` command line: simulation runs, timing tables, codec dumps.
//!
//! Exit codes: 0 success, 2 usage, configuration or parse error, 1 internal
//! invariant violation.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::codec::{
    eoc_decapsulate, eoc_encapsulate, ioc_decapsulate, ioc_encapsulate, CanXlFrame, CodecError, EthernetFrame,
    Ipv4Packet, SduType,
};
use crate::sim::{self, SimError, TopologyConfig};
use crate::timing::{self, BusKind, CanXlTimingParams, EthernetTimingParams, TimingError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "canxl-sim", version, about = "CAN XL / Ethernet interworking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a topology file.
    Simulate(SimulateArgs),
    /// Frame durations and the reference comparison.
    Timing(TimingArgs),
    /// Encode or decode CAN XL frame images.
    Codec(CodecArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    config: PathBuf,
    /// JSON-lines trace output; overrides run.trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// JSON report output; overrides run.report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// End time in seconds; overrides run.t_end.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MediumArg {
    Canxl,
    Ethernet,
    Classic,
}

#[derive(Debug, Args)]
struct TimingArgs {
    /// Model against the published figures.
    #[arg(long, conflicts_with_all = ["payload", "arb_rate", "data_rate", "medium"])]
    table: bool,
    /// Data field (CAN) or payload (Ethernet) length in bytes.
    #[arg(long, required_unless_present = "table")]
    payload: Option<usize>,
    #[arg(long, value_enum, default_value = "canxl")]
    medium: MediumArg,
    /// Nominal bit rate; the Ethernet bit rate with --medium ethernet.
    #[arg(long = "arb-rate")]
    arb_rate: Option<f64>,
    #[arg(long = "data-rate")]
    data_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Encap {
    Eoc,
    Ioc,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["encode", "decode"]))]
struct CodecArgs {
    /// Tunnel an Ethernet frame (eoc) or an IPv4 datagram (ioc) given as hex.
    #[arg(long, value_enum, requires = "input")]
    encode: Option<Encap>,
    /// Hex file holding a CAN XL frame image.
    #[arg(long, value_name = "HEXFILE")]
    decode: Option<PathBuf>,
    /// Hex file to encode.
    #[arg(value_name = "HEXFILE")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0x100, value_parser = parse_u16)]
    priority: u16,
    #[arg(long, default_value_t = 0)]
    vcid: u8,
}

fn parse_u16(s: &str) -> Result<u16, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u16::from_str_radix(h, 16),
        None => s.parse(),
    };
    r.map_err(|e| e.to_string())
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::usage(format!("config error: {c}")),
            SimError::Invariant(m) => Failure {
                code: EXIT_INTERNAL,
                message: format!("internal error: {m}"),
            },
        }
    }
}

impl From<CodecError> for Failure {
    fn from(e: CodecError) -> Self {
        Failure::usage(format!("codec error: {e}"))
    }
}

impl From<TimingError> for Failure {
    fn from(e: TimingError) -> Self {
        Failure::usage(format!("timing error: {e}"))
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Timing(a) => timing_cmd(&a),
        Command::Codec(a) => codec_cmd(&a),
    };
    match result {
        Ok(text) => {
            let _ = write!(out, "{text}");
            EXIT_OK
        }
        Err(f) => {
            let _ = writeln!(err, "{}", f.message);
            f.code
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn simulate(a: &SimulateArgs) -> Result<String, Failure> {
    let mut config =
        TopologyConfig::from_toml(&read(&a.config)?).map_err(|e| Failure::usage(format!("config error: {e}")))?;
    if let Some(t) = a.t_end {
        config.run.t_end = t;
    }
    let output = sim::run(&config)?;
    if let Some(p) = a.trace.as_ref().or(config.run.trace.as_ref()) {
        write_file(p, &output.trace_jsonl())?;
    }
    if let Some(p) = a.report.as_ref().or(config.run.report.as_ref()) {
        write_file(p, &output.report_json())?;
    }
    let r = &output.report;
    let mut s = format!("{} events, t_end {} ns\n", r.events, r.t_end_ns);
    for (id, f) in &r.flows {
        let _ = write!(s, "flow {id}: sent {} delivered {}", f.sent, f.delivered);
        for (reason, n) in &f.drops {
            let _ = write!(s, " {reason} {n}");
        }
        if let Some(l) = f.latency {
            let _ = write!(s, " latency {}/{}/{} ns", l.min_ns, l.mean_ns, l.max_ns);
        }
        s.push('\n');
    }
    for (name, sw) in &r.switches {
        let _ = write!(
            s,
            "switch {name}: forwarded {} flooded {}",
            sw.counters.forwarded, sw.counters.flooded
        );
        for (reason, n) in &sw.counters.drops {
            let _ = write!(s, " {reason} {n}");
        }
        s.push('\n');
    }
    Ok(s)
}

fn timing_cmd(a: &TimingArgs) -> Result<String, Failure> {
    if a.table {
        return Ok(timing_table());
    }
    let payload = a.payload.expect("clap requires it");
    match a.medium {
        MediumArg::Canxl => {
            let defaults = CanXlTimingParams::default();
            let p = CanXlTimingParams {
                arb_bitrate: a.arb_rate.unwrap_or(defaults.arb_bitrate),
                data_bitrate: a.data_rate.unwrap_or(defaults.data_bitrate),
                ..defaults
            };
            p.validate()?;
            let d = timing::canxl_duration(payload, &p)?;
            Ok(format!(
                "CAN XL {payload} B at {} / {} b/s: {}\n",
                p.arb_bitrate,
                p.data_bitrate,
                human(d)
            ))
        }
        MediumArg::Ethernet => {
            let p = EthernetTimingParams::with_bitrate(a.arb_rate.unwrap_or(EthernetTimingParams::default().bitrate));
            p.validate()?;
            let d = timing::ethernet_duration(payload, &p)?;
            Ok(format!("Ethernet {payload} B at {} b/s: {}\n", p.bitrate, human(d)))
        }
        MediumArg::Classic => {
            let rate = a.arb_rate.unwrap_or(CanXlTimingParams::default().arb_bitrate);
            CanXlTimingParams::with_rates(rate, rate)?;
            if payload > crate::codec::canxl::CLASSIC_MAX_DATA_LEN {
                return Err(TimingError::InvalidPayload {
                    len: payload,
                    min: 0,
                    max: crate::codec::canxl::CLASSIC_MAX_DATA_LEN,
                }
                .into());
            }
            let d = timing::classic_can_duration_for_len(payload, rate);
            Ok(format!("classic CAN {payload} B at {rate} b/s: {}\n", human(d)))
        }
    }
}

fn human(secs: f64) -> String {
    let us = secs * 1e6;
    if us >= 1000.0 {
        format!("{us:.3} µs ({:.3} ms)", us / 1000.0)
    } else {
        format!("{us:.3} µs")
    }
}

/// The comparison printed by `timing --table`.
pub fn timing_table() -> String {
    let xl = CanXlTimingParams::default();
    let mut s = format!(
        "{:<20} {:>12} {:>12} {:>10}\n",
        "frame", "model µs", "reference µs", "deviation"
    );
    for row in timing::reference_table(&xl) {
        let _ = writeln!(
            s,
            "{:<20} {:>12.2} {:>12.2} {:>+9.2}%",
            row.label,
            row.model_us,
            row.reference_us,
            row.deviation() * 100.0
        );
    }
    let at = |arb| CanXlTimingParams::with_rates(arb, 16_000_000.0).expect("valid rates");
    for (label, arb) in [("500k", 500_000.0), ("1M", 1_000_000.0)] {
        let g = timing::throughput_gain(timing::EOC_64, timing::IOC_64, &at(arb)).expect("valid payloads");
        let _ = writeln!(s, "IoC over EoC gain {label}: {:+.2}%", g * 100.0);
    }
    let classic = timing::worst_case_blocking(&BusKind::Classic { bitrate: 500_000.0 });
    let xl_block = timing::worst_case_blocking(&BusKind::CanXl(xl));
    let _ = writeln!(
        s,
        "blocking at 500k: classic {:.2} µs, CAN XL {:.2} µs, ratio {:.2}",
        classic * 1e6,
        xl_block * 1e6,
        xl_block / classic
    );
    s
}

fn read_hex(path: &Path) -> Result<Vec<u8>, Failure> {
    let text = read(path)?;
    let digits: String = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.chars())
        .filter(|c| !c.is_whitespace() && *c != ':')
        .collect();
    hex::decode(&digits).map_err(|e| Failure::usage(format!("bad hex in {}: {e}", path.display())))
}

fn codec_cmd(a: &CodecArgs) -> Result<String, Failure> {
    if let Some(path) = &a.decode {
        let frame = CanXlFrame::decode(&read_hex(path)?)?;
        let mut s = annotate_canxl(&frame);
        match frame.sdt {
            SduType::Ethernet => {
                let eth = eoc_decapsulate(&frame)?;
                annotate_ethernet(&mut s, &eth);
                let _ = writeln!(s, "ethernet {}", hex::encode(eth.encode()));
            }
            SduType::Ipv4 => {
                let d = ioc_decapsulate(&frame)?;
                let _ = writeln!(s, "ipv4.src     {}", d.src);
                let _ = writeln!(s, "ipv4.dst     {} (from af)", d.dst);
                let _ = writeln!(s, "ipv4.ttl     {}", d.ttl);
                let _ = writeln!(s, "ipv4.proto   {}", d.protocol);
                let _ = writeln!(s, "ipv4.total   {}", d.total_len());
                let bytes = d.to_ipv4().encode()?;
                let _ = writeln!(s, "ipv4 {}", hex::encode(bytes));
            }
            other => return Err(Failure::usage(format!("no decoder for SDT {other}"))),
        }
        return Ok(s);
    }
    let encap = a.encode.expect("clap requires encode or decode");
    let input = read_hex(a.input.as_ref().expect("clap requires the input"))?;
    let (frame, prefix) = match encap {
        Encap::Eoc => {
            let eth = EthernetFrame::decode(&input)?;
            let f = eoc_encapsulate(&eth, a.priority, a.vcid)?;
            let mut s = String::new();
            annotate_ethernet(&mut s, &eth);
            (f, s)
        }
        Encap::Ioc => {
            let packet = Ipv4Packet::decode(&input)?;
            let f = ioc_encapsulate(&packet, a.priority, a.vcid)?;
            let h = &f.data()[..crate::codec::ioc::COMPACT_HEADER_LEN];
            let mut s = String::new();
            let _ = writeln!(s, "ioc.version  {}", h[0] >> 4);
            let _ = writeln!(s, "ioc.dscp_ecn 0x{:02x}", h[1]);
            let _ = writeln!(s, "ioc.ttl      {}", h[2]);
            let _ = writeln!(s, "ioc.proto    {}", h[3]);
            let _ = writeln!(s, "ioc.src      {}.{}.{}.{}", h[4], h[5], h[6], h[7]);
            let _ = writeln!(s, "ioc.payload  {} B", f.data().len() - h.len());
            (f, s)
        }
    };
    let mut s = annotate_canxl(&frame);
    s.push_str(&prefix);
    let _ = writeln!(s, "image {}", hex::encode(frame.encode()));
    Ok(s)
}

fn annotate_canxl(f: &CanXlFrame) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "canxl.priority 0x{:03x}", f.priority());
    let _ = writeln!(s, "canxl.sdt      {}", f.sdt);
    let _ = writeln!(s, "canxl.sec      {}", u8::from(f.sec));
    let _ = writeln!(s, "canxl.dlc      {} ({} B)", f.data().len() - 1, f.data().len());
    let _ = writeln!(s, "canxl.vcid     0x{:02x}", f.vcid);
    let _ = writeln!(s, "canxl.af       0x{:08x}", f.af);
    s
}

fn annotate_ethernet(s: &mut String, eth: &EthernetFrame) {
    let _ = writeln!(s, "eth.da         {}", eth.da);
    let _ = writeln!(s, "eth.sa         {}", eth.sa);
    let _ = writeln!(s, "eth.ethertype  0x{:04x}", eth.ethertype);
    let _ = writeln!(s, "eth.payload    {} B", eth.payload.len());
}
