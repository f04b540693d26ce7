use meshleak::analysis::decode::{decode_bits, DecodeParams};
use meshleak::analysis::signal::*;
use meshleak::workload::{IntervalTrace, TraceMeta};

fn synth_bits(bits: &str) -> IntervalTrace {
    let mut v = Vec::new();
    for c in bits.chars() {
        v.push(4000u64);
        if c == '1' { v.extend([2800, 2400, 2400, 2400]); } else { v.extend([2400, 2400]); }
    }
    v.extend([2400, 2400, 2400]);
    IntervalTrace {
        samples: v.into_iter().enumerate().map(|(i, x)| (i as u64, x)).collect(),
        meta: TraceMeta { path: "t".into(), ev_size: 24, sweeps_per_sample: 2, clock_hz: 0, seed: 0 },
    }
}

fn main() {
    let stream = "0110010100110100101011001";
    let trace = synth_bits(stream);
    {
        let raw = trace.intervals();
        let sm = smooth(&clip_filter(&raw, percentile(&raw, 60.0), percentile(&raw, 99.0)), 3);
        let p90 = percentile(&sm, 90.0);
        let p50 = percentile(&sm, 50.0);
        let p97 = percentile(&sm, 97.0);
        let mid = (p50 + p97) / 2.0;
        println!("p50={p50} p90={p90} p97={p97} mid={mid}");
        println!("peaks@p90={} peaks@mid={}", detect_peaks(&sm, p90).len(), detect_peaks(&sm, mid).len());
    }
    let p = DecodeParams::auto_from(&trace).unwrap();
    println!("params {}", p.snapshot());
    let raw = trace.intervals();
    let sm = smooth(&clip_filter(&raw, p.clip_lo, p.clip_hi), p.smooth_window);
    let peaks = detect_peaks(&sm, p.peak_threshold);
    println!("peaks {} (want 25): {:?}", peaks.len(), &peaks[..peaks.len().min(12)]);
    let inf = decode_bits(&trace, &p).unwrap();
    println!("got  {}", inf.bits);
    println!("want {stream}");
}

#[allow(dead_code)]
fn extra() {}
