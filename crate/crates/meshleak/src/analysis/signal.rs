//! Trace-domain signal utilities: clipping, smoothing, peak detection, a
//! small radix-2 FFT, the SNR score, and the covert-channel thresholder.

use crate::{Error, Result};

/// Replaces samples outside [lo, hi] with the band floor, preserving order
/// and length.
pub fn clip_filter(trace: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    assert!(lo < hi, "clip band must be non-empty");
    trace
        .iter()
        .map(|&v| if v < lo || v > hi { lo } else { v })
        .collect()
}

/// Centered moving average; edges truncate the window so length is
/// preserved.
pub fn smooth(trace: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1);
    if window == 1 || trace.is_empty() {
        return trace.to_vec();
    }
    let half = window / 2;
    let n = trace.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let sum: f64 = trace[lo..hi].iter().sum();
        out.push(sum / (hi - lo) as f64);
    }
    out
}

/// Local maxima strictly above `threshold`: one index per contiguous
/// super-threshold run (the run's argmax; first on ties).
pub fn detect_peaks(trace: &[f64], threshold: f64) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < trace.len() {
        if trace[i] > threshold {
            let start = i;
            let mut best = i;
            while i < trace.len() && trace[i] > threshold {
                if trace[i] > trace[best] {
                    best = i;
                }
                i += 1;
            }
            let _ = start;
            peaks.push(best);
        } else {
            i += 1;
        }
    }
    peaks
}

/// P-th percentile (0..=100) by nearest-rank on a sorted copy.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((p / 100.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

/// Iterative radix-2 FFT magnitudes of the first 2^k samples (k maximal).
/// Returns |X[0..n/2]|.
pub fn fft_magnitudes(trace: &[f64]) -> Vec<f64> {
    let n = trace.len().next_power_of_two() >> usize::from(!trace.len().is_power_of_two());
    let n = n.max(1);
    let mut re: Vec<f64> = trace[..n].to_vec();
    let mut im = vec![0.0f64; n];
    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) & (n - 1);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let (mut cr, mut ci) = (1.0f64, 0.0f64);
            for j in 0..len / 2 {
                let (ur, ui) = (re[i + j], im[i + j]);
                let (vr, vi) = (
                    re[i + j + len / 2] * cr - im[i + j + len / 2] * ci,
                    re[i + j + len / 2] * ci + im[i + j + len / 2] * cr,
                );
                re[i + j] = ur + vr;
                im[i + j] = ui + vi;
                re[i + j + len / 2] = ur - vr;
                im[i + j + len / 2] = ui - vi;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            i += len;
        }
        len <<= 1;
    }
    (0..n / 2).map(|k| (re[k] * re[k] + im[k] * im[k]).sqrt()).collect()
}

/// DFT magnitude at the signal frequency over the mean magnitude of every
/// other non-DC bin. The trace is treated as a uniformly sampled sequence at
/// `sample_rate`; a ±1-bin slack absorbs misalignment.
pub fn snr(trace: &[f64], signal_freq: f64, sample_rate: f64) -> Result<f64> {
    if signal_freq > sample_rate / 2.0 {
        return Err(Error::AboveNyquist {
            signal: signal_freq,
            nyquist: sample_rate / 2.0,
        });
    }
    let min_len = (2.0 * sample_rate / signal_freq).ceil() as usize;
    if trace.len() < min_len.max(8) {
        return Err(Error::TraceTooShort(format!(
            "need {} samples for two periods, have {}",
            min_len,
            trace.len()
        )));
    }
    let mags = fft_magnitudes(trace);
    let n_fft = mags.len() * 2;
    let bin = ((signal_freq * n_fft as f64 / sample_rate).round() as usize).clamp(1, mags.len() - 1);
    let signal = mags[bin];
    let mut noise_sum = 0.0;
    let mut noise_n = 0usize;
    for (k, &m) in mags.iter().enumerate().skip(1) {
        if k != bin {
            noise_sum += m;
            noise_n += 1;
        }
    }
    if noise_n == 0 {
        return Err(Error::TraceTooShort("no noise bins left".into()));
    }
    let noise = noise_sum / noise_n as f64;
    if noise == 0.0 {
        // A perfectly flat trace has no off-bin energy at all.
        return Ok(if signal == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(signal / noise)
}

/// Decodes an on/off-keyed interval sequence: each T/2 window's mean interval
/// is thresholded against the run's center (midpoint of the window-mean
/// range; the plain median deadlocks when half the windows sit on it).
pub fn covert_decode(samples: &[(u64, u64)], period_cycles: u64) -> Result<String> {
    if period_cycles < 2 {
        return Err(Error::MalformedConfig("period must be at least 2".into()));
    }
    let half = period_cycles / 2;
    if samples.is_empty() {
        return Err(Error::TraceTooShort("empty trace".into()));
    }
    // Re-derive sample start times from the interval stream.
    let mut t = 0u64;
    let mut stamped: Vec<(u64, u64)> = Vec::with_capacity(samples.len());
    for &(_, v) in samples {
        stamped.push((t, v));
        t += v;
    }
    let total = t;
    if total < period_cycles {
        return Err(Error::TraceTooShort(format!(
            "trace spans {total} cycles, one bit needs {period_cycles}"
        )));
    }
    let n_windows = (total / half) as usize;
    let mut means = Vec::with_capacity(n_windows);
    let mut i = 0usize;
    for wdx in 0..n_windows {
        let lo = wdx as u64 * half;
        let hi = lo + half;
        let mut sum = 0.0;
        let mut cnt = 0usize;
        while i < stamped.len() && stamped[i].0 < hi {
            if stamped[i].0 >= lo {
                sum += stamped[i].1 as f64;
                cnt += 1;
            }
            i += 1;
        }
        // Windows shorter than one sample inherit the covering sample.
        if cnt == 0 {
            let covering = stamped.partition_point(|&(s, _)| s <= lo);
            let idx = covering.saturating_sub(1);
            sum = stamped[idx].1 as f64;
            cnt = 1;
            i = covering;
        }
        means.push(sum / cnt as f64);
    }
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let center = (lo + hi) / 2.0;
    Ok(means
        .iter()
        .map(|&m| if m > center { '1' } else { '0' })
        .collect())
}
