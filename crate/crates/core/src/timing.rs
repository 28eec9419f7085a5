//! Closed-form frame durations.
//!
//! CAN XL frames are split into an arbitration part sent at the nominal bit
//! rate and a data part sent at the data bit rate. Bit stuffing is modeled
//! as a fixed fraction added to the data-phase bit count.
//!
//! The overhead constants are not per-field counts. `arb_overhead_bits = 34`
//! reproduces the 34 µs gap between EoC at 500 kb/s and at 1 Mb/s;
//! `data_overhead_bits = 168` with `stuff_ratio = 0.1` is the single set that
//! keeps all published CAN XL figures within 6%.

use serde::{Deserialize, Serialize};

use crate::codec::canxl::MAX_DATA_LEN;
use crate::codec::{BusFrame, ClassicCanFrame};

pub const MAX_ARB_BITRATE: f64 = 1_000_000.0;

/// Nominal classic CAN frame with an 11-bit identifier, excluding data.
pub const CLASSIC_OVERHEAD_BITS: u32 = 47;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TimingError {
    #[error("payload of {len} bytes outside [{min}, {max}]")]
    InvalidPayload { len: usize, min: usize, max: usize },
    #[error("invalid timing parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CanXlTimingParams {
    pub arb_bitrate: f64,
    pub data_bitrate: f64,
    pub arb_overhead_bits: u32,
    pub data_overhead_bits: u32,
    pub stuff_ratio: f64,
}

impl Default for CanXlTimingParams {
    fn default() -> Self {
        CanXlTimingParams {
            arb_bitrate: 500_000.0,
            data_bitrate: 16_000_000.0,
            arb_overhead_bits: 34,
            data_overhead_bits: 168,
            stuff_ratio: 0.1,
        }
    }
}

impl CanXlTimingParams {
    /// Default overheads at the given rates.
    pub fn with_rates(arb_bitrate: f64, data_bitrate: f64) -> Result<Self, TimingError> {
        let p = CanXlTimingParams {
            arb_bitrate,
            data_bitrate,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), TimingError> {
        if !(self.arb_bitrate > 0.0 && self.arb_bitrate.is_finite()) {
            return Err(TimingError::InvalidParams("arbitration bit rate must be positive"));
        }
        if self.arb_bitrate > MAX_ARB_BITRATE {
            return Err(TimingError::InvalidParams("arbitration bit rate exceeds 1 Mb/s"));
        }
        if !(self.data_bitrate >= self.arb_bitrate && self.data_bitrate.is_finite()) {
            return Err(TimingError::InvalidParams("data bit rate below arbitration bit rate"));
        }
        if !(self.stuff_ratio >= 0.0 && self.stuff_ratio.is_finite()) {
            return Err(TimingError::InvalidParams("stuff ratio must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EthernetTimingParams {
    pub bitrate: f64,
    pub preamble_bytes: u32,
    pub header_bytes: u32,
    pub fcs_bytes: u32,
    pub min_payload: u32,
}

impl Default for EthernetTimingParams {
    fn default() -> Self {
        EthernetTimingParams {
            bitrate: 10_000_000.0,
            preamble_bytes: 8,
            header_bytes: 14,
            fcs_bytes: 4,
            min_payload: 46,
        }
    }
}

impl EthernetTimingParams {
    pub fn with_bitrate(bitrate: f64) -> Self {
        EthernetTimingParams {
            bitrate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), TimingError> {
        if !(self.bitrate > 0.0 && self.bitrate.is_finite()) {
            return Err(TimingError::InvalidParams("Ethernet bit rate must be positive"));
        }
        Ok(())
    }
}

/// Seconds on the bus for a CAN XL frame with `payload_bytes` of data.
pub fn canxl_duration(payload_bytes: usize, p: &CanXlTimingParams) -> Result<f64, TimingError> {
    if !(1..=MAX_DATA_LEN).contains(&payload_bytes) {
        return Err(TimingError::InvalidPayload {
            len: payload_bytes,
            min: 1,
            max: MAX_DATA_LEN,
        });
    }
    let arb = f64::from(p.arb_overhead_bits) / p.arb_bitrate;
    let data_bits = f64::from(p.data_overhead_bits) + 8.0 * payload_bytes as f64;
    Ok(arb + (1.0 + p.stuff_ratio) * data_bits / p.data_bitrate)
}

/// Seconds on the wire including preamble, header, padding and FCS.
pub fn ethernet_duration(payload_bytes: usize, p: &EthernetTimingParams) -> Result<f64, TimingError> {
    if payload_bytes > crate::codec::ethernet::MTU {
        return Err(TimingError::InvalidPayload {
            len: payload_bytes,
            min: 0,
            max: crate::codec::ethernet::MTU,
        });
    }
    let bytes = p.preamble_bytes as usize
        + p.header_bytes as usize
        + payload_bytes.max(p.min_payload as usize)
        + p.fcs_bytes as usize;
    Ok((bytes * 8) as f64 / p.bitrate)
}

/// Nominal classic frame, 47 overhead bits plus data, no stuffing.
pub fn classic_can_duration(frame: &ClassicCanFrame, bitrate: f64) -> f64 {
    classic_can_duration_for_len(frame.data().len(), bitrate)
}

pub fn classic_can_duration_for_len(data_len: usize, bitrate: f64) -> f64 {
    f64::from(CLASSIC_OVERHEAD_BITS + 8 * data_len as u32) / bitrate
}

/// Duration of anything a CAN bus can carry. Classic frames run at the
/// nominal rate for their whole length.
pub fn bus_frame_duration(frame: &BusFrame, p: &CanXlTimingParams) -> Result<f64, TimingError> {
    match frame {
        BusFrame::Xl(f) => canxl_duration(f.data().len(), p),
        BusFrame::Classic(f) => Ok(classic_can_duration(f, p.arb_bitrate)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BusKind {
    Classic { bitrate: f64 },
    CanXl(CanXlTimingParams),
}

/// Longest time a ready frame can wait behind one lower-priority frame
/// already on the bus.
pub fn worst_case_blocking(bus: &BusKind) -> f64 {
    match bus {
        BusKind::Classic { bitrate } => classic_can_duration_for_len(8, *bitrate),
        BusKind::CanXl(p) => canxl_duration(MAX_DATA_LEN, p).expect("2048 is a valid payload"),
    }
}

/// Relative net throughput gain of sending `payload_ioc` instead of
/// `payload_eoc`.
pub fn throughput_gain(payload_eoc: usize, payload_ioc: usize, p: &CanXlTimingParams) -> Result<f64, TimingError> {
    Ok(canxl_duration(payload_eoc, p)? / canxl_duration(payload_ioc, p)? - 1.0)
}

/// One row of the reference comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub label: &'static str,
    pub model_us: f64,
    pub reference_us: f64,
}

impl ReferenceRow {
    pub fn deviation(&self) -> f64 {
        (self.model_us - self.reference_us) / self.reference_us
    }
}

/// EoC and IoC data lengths of a 64-byte datagram.
pub const EOC_64: usize = 14 + 64;
pub const IOC_64: usize = 8 + 44;

/// The published figures next to the model, using `xl` overheads at
/// 500 kb/s and 1 Mb/s nominal and 16 Mb/s data rate.
pub fn reference_table(xl: &CanXlTimingParams) -> Vec<ReferenceRow> {
    let at = |arb: f64| CanXlTimingParams {
        arb_bitrate: arb,
        data_bitrate: 16_000_000.0,
        ..*xl
    };
    let us = |secs: f64| secs * 1e6;
    let eth = EthernetTimingParams::default();
    let slow = at(500_000.0);
    let fast = at(1_000_000.0);
    vec![
        ReferenceRow {
            label: "Ethernet 64B 10M",
            model_us: us(ethernet_duration(64, &eth).unwrap()),
            reference_us: 72.0,
        },
        ReferenceRow {
            label: "EoC 500k",
            model_us: us(canxl_duration(EOC_64, &slow).unwrap()),
            reference_us: 118.0,
        },
        ReferenceRow {
            label: "EoC 1M",
            model_us: us(canxl_duration(EOC_64, &fast).unwrap()),
            reference_us: 84.0,
        },
        ReferenceRow {
            label: "IoC 500k",
            model_us: us(canxl_duration(IOC_64, &slow).unwrap()),
            reference_us: 104.0,
        },
        ReferenceRow {
            label: "IoC 1M",
            model_us: us(canxl_duration(IOC_64, &fast).unwrap()),
            reference_us: 70.0,
        },
        ReferenceRow {
            label: "CAN XL 2048B 500k",
            model_us: us(canxl_duration(MAX_DATA_LEN, &slow).unwrap()),
            reference_us: 1200.0,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1e-12)
    }

    fn rates(arb: f64) -> CanXlTimingParams {
        CanXlTimingParams::with_rates(arb, 16e6).unwrap()
    }

    #[test]
    fn canxl_examples() {
        // Expected values computed with exact rational arithmetic.
        assert!(close(canxl_duration(78, &rates(500e3)).unwrap(), 122.45e-6));
        assert!(close(canxl_duration(78, &rates(1e6)).unwrap(), 88.45e-6));
        assert!(close(canxl_duration(52, &rates(500e3)).unwrap(), 108.15e-6));
        assert!(close(canxl_duration(52, &rates(1e6)).unwrap(), 74.15e-6));
        assert!(close(canxl_duration(2048, &rates(500e3)).unwrap(), 1205.95e-6));
        assert!(canxl_duration(0, &rates(500e3)).is_err());
        assert!(canxl_duration(2049, &rates(500e3)).is_err());
    }

    #[test]
    fn ethernet_examples() {
        let p = EthernetTimingParams::default();
        assert!(close(ethernet_duration(64, &p).unwrap(), 72e-6));
        assert!(close(ethernet_duration(46, &p).unwrap(), 57.6e-6));
        assert_eq!(ethernet_duration(10, &p).unwrap(), ethernet_duration(46, &p).unwrap());
        assert!(ethernet_duration(1501, &p).is_err());
    }

    #[test]
    fn classic_examples() {
        let f8 = ClassicCanFrame::new(0x100, vec![0; 8]).unwrap();
        let f0 = ClassicCanFrame::new(0x100, vec![]).unwrap();
        assert!(close(classic_can_duration(&f8, 500e3), 222e-6));
        assert!(close(classic_can_duration(&f0, 500e3), 94e-6));
        assert!(close(classic_can_duration(&f8, 1e6), 111e-6));
    }

    #[test]
    fn blocking() {
        assert!(close(worst_case_blocking(&BusKind::Classic { bitrate: 500e3 }), 222e-6));
        assert!(close(worst_case_blocking(&BusKind::Classic { bitrate: 1e6 }), 111e-6));
        let xl = worst_case_blocking(&BusKind::CanXl(rates(500e3)));
        assert!(close(xl, 1205.95e-6));
        let ratio = xl / 222e-6;
        assert!((ratio - 6.0).abs() / 6.0 <= 0.15, "ratio {ratio}");
    }

    #[test]
    fn gains() {
        let g500 = throughput_gain(78, 52, &rates(500e3)).unwrap();
        let g1m = throughput_gain(78, 52, &rates(1e6)).unwrap();
        assert!((g500 - 0.132224).abs() < 1e-6);
        assert!((g1m - 0.192852).abs() < 1e-6);
        assert_eq!(throughput_gain(100, 100, &rates(1e6)).unwrap(), 0.0);
    }

    #[test]
    fn exact_without_stuffing() {
        let p = CanXlTimingParams {
            stuff_ratio: 0.0,
            ..rates(500e3)
        };
        // (34 / 500e3) + (168 + 8 * 100) / 16e6 = 68 µs + 60.5 µs
        assert!(close(canxl_duration(100, &p).unwrap(), 128.5e-6));
    }

    #[test]
    fn parameter_validation() {
        assert!(CanXlTimingParams::with_rates(2e6, 16e6).is_err());
        assert!(CanXlTimingParams::with_rates(500e3, 100e3).is_err());
        assert!(CanXlTimingParams::with_rates(0.0, 16e6).is_err());
        assert!(CanXlTimingParams::with_rates(1e6, 1e6).is_ok());
    }
}
