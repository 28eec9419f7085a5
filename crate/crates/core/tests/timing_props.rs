use canxl_net::timing::{canxl_duration, throughput_gain, CanXlTimingParams};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = CanXlTimingParams> {
    (10_000u32..=1_000_000, 1u32..=20, 0u32..64, 0u32..400, 0.0f64..0.3).prop_map(|(arb, mult, ao, dob, stuff)| {
        CanXlTimingParams {
            arb_bitrate: arb as f64,
            data_bitrate: (arb * mult) as f64,
            arb_overhead_bits: ao,
            data_overhead_bits: dob,
            stuff_ratio: stuff,
        }
    })
}

proptest! {
    #[test]
    fn strictly_increasing_and_affine(p in params(), n in 1usize..2047) {
        let d0 = canxl_duration(n, &p).unwrap();
        let d1 = canxl_duration(n + 1, &p).unwrap();
        prop_assert!(d1 > d0);
        let step = 8.0 * (1.0 + p.stuff_ratio) / p.data_bitrate;
        prop_assert!(((d1 - d0) - step).abs() <= 1e-9 * d1);
        let base = canxl_duration(1, &p).unwrap();
        let affine = base + (n - 1) as f64 * step;
        prop_assert!((d0 - affine).abs() <= 1e-9 * d0);
    }

    #[test]
    fn slower_rates_take_longer(p in params(), n in 1usize..=2048) {
        let d = canxl_duration(n, &p).unwrap();
        let slower_arb = CanXlTimingParams { arb_bitrate: p.arb_bitrate * 0.9, ..p };
        if p.arb_overhead_bits > 0 {
            prop_assert!(canxl_duration(n, &slower_arb).unwrap() > d);
        }
        let slower_data = CanXlTimingParams { data_bitrate: p.data_bitrate * 0.9, ..p };
        if slower_data.validate().is_ok() {
            prop_assert!(canxl_duration(n, &slower_data).unwrap() > d);
        }
    }

    #[test]
    fn gain_is_non_negative(p in params(), ioc in 1usize..=2048, extra in 0usize..512) {
        let eoc = (ioc + extra).min(2048);
        prop_assert!(throughput_gain(eoc, ioc, &p).unwrap() >= 0.0);
    }

    #[test]
    fn no_stuffing_is_an_exact_ratio(arb in 10_000u32..=1_000_000, mult in 1u32..=20, ao in 0u32..64, dob in 0u32..400, n in 1usize..=2048) {
        let p = CanXlTimingParams {
            arb_bitrate: arb as f64,
            data_bitrate: (arb * mult) as f64,
            arb_overhead_bits: ao,
            data_overhead_bits: dob,
            stuff_ratio: 0.0,
        };
        // Common denominator data_bitrate: (ao*mult + dob + 8n) / data_bitrate.
        let bits = ao as u64 * mult as u64 + dob as u64 + 8 * n as u64;
        let exact = bits as f64 / p.data_bitrate;
        let d = canxl_duration(n, &p).unwrap();
        prop_assert!((d - exact).abs() <= 1e-9 * exact.max(f64::MIN_POSITIVE));
    }
}
