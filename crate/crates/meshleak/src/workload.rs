//! Victim programs and the attacker probe, expressed as cycle-scheduled
//! memory-access generators over the cache/mesh model.
//!
//! The managed-runtime victims allocate fresh cache lines for every
//! arithmetic operation (object churn), which is what makes their mesh
//! traffic modulate with the key bits: a squaring emits one dense burst, a
//! multiply a smoother one, and bit-1 iterations run roughly twice as long
//! and twice as loud as bit-0 iterations.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::Rng;

use crate::cache::PhysAddr;
use crate::evset::EvictionSet;
use crate::layout::{PathSpec, TileId};
use crate::sim::{ScheduledSource, SimParams, Simulator, ACTOR_PROBE};
use crate::{Error, Result};

/// Timestamped probe samples plus capture metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalTrace {
    /// (sample index, interval cycles)
    pub samples: Vec<(u64, u64)>,
    pub meta: TraceMeta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceMeta {
    pub path: String,
    pub ev_size: usize,
    pub sweeps_per_sample: usize,
    pub clock_hz: u64,
    pub seed: u64,
}

impl IntervalTrace {
    pub fn intervals(&self) -> Vec<f64> {
        self.samples.iter().map(|&(_, v)| v as f64).collect()
    }

    /// Interchange format: '#'-prefixed metadata header then
    /// `index,interval_cycles` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# meshleak-trace v1\n");
        out.push_str(&format!("# clock_hz={}\n", self.meta.clock_hz));
        out.push_str(&format!("# n={}\n", self.meta.ev_size));
        out.push_str(&format!("# x={}\n", self.meta.sweeps_per_sample));
        out.push_str(&format!("# path={}\n", self.meta.path));
        out.push_str(&format!("# seed={}\n", self.meta.seed));
        out.push_str("index,interval_cycles\n");
        for (i, v) in &self.samples {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut meta = TraceMeta {
            path: String::new(),
            ev_size: 0,
            sweeps_per_sample: 0,
            clock_hz: 0,
            seed: 0,
        };
        let mut samples = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some((k, v)) = rest.split_once('=') {
                    match k.trim() {
                        "clock_hz" => meta.clock_hz = v.trim().parse().unwrap_or(0),
                        "n" => meta.ev_size = v.trim().parse().unwrap_or(0),
                        "x" => meta.sweeps_per_sample = v.trim().parse().unwrap_or(0),
                        "path" => meta.path = v.trim().to_string(),
                        "seed" => meta.seed = v.trim().parse().unwrap_or(0),
                        _ => {}
                    }
                }
                continue;
            }
            if line.starts_with("index") {
                continue;
            }
            let (i, v) = line
                .split_once(',')
                .ok_or_else(|| Error::TraceTooShort(format!("bad row `{line}`")))?;
            samples.push((
                i.trim()
                    .parse()
                    .map_err(|_| Error::TraceTooShort(format!("bad index `{i}`")))?,
                v.trim()
                    .parse()
                    .map_err(|_| Error::TraceTooShort(format!("bad interval `{v}`")))?,
            ));
        }
        Ok(IntervalTrace { samples, meta })
    }
}

/// Repeatedly sweeps the EV `x` times back to back and records the elapsed
/// cycles per sample, strictly sequentially (the next access issues only
/// after the previous response arrives). Runs until `duration_cycles` of
/// simulated time have elapsed.
pub fn run_probe(
    sim: &mut Simulator,
    path: &PathSpec,
    ev: &EvictionSet,
    duration_cycles: u64,
    sweeps_per_sample: usize,
) -> Result<IntervalTrace> {
    let deadline = sim.now() + duration_cycles;
    let mut samples = Vec::new();
    let mut idx = 0u64;
    while sim.now() < deadline {
        let t0 = sim.now();
        for _ in 0..sweeps_per_sample {
            for &a in &ev.addrs {
                sim.access_blocking(ACTOR_PROBE, path.src_tile, a)?;
            }
        }
        samples.push((idx, sim.now() - t0));
        idx += 1;
    }
    Ok(IntervalTrace {
        samples,
        meta: TraceMeta {
            path: path.to_string(),
            ev_size: ev.len(),
            sweeps_per_sample,
            clock_hz: sim.params.clock_hz,
            seed: sim.params.seed,
        },
    })
}

/// A multiply/squaring token stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Mul,
    Sqr,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MulSqrSeq(pub Vec<Op>);

impl MulSqrSeq {
    pub fn mul_count(&self) -> usize {
        self.0.iter().filter(|o| **o == Op::Mul).count()
    }

    pub fn sqr_count(&self) -> usize {
        self.0.iter().filter(|o| **o == Op::Sqr).count()
    }
}

impl fmt::Display for MulSqrSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in &self.0 {
            f.write_str(match op {
                Op::Mul => "M",
                Op::Sqr => "S",
            })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for MulSqrSeq {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut ops = Vec::new();
        for c in s.chars() {
            match c {
                'M' | 'm' => ops.push(Op::Mul),
                'S' | 's' => ops.push(Op::Sqr),
                c if c.is_whitespace() => {}
                c => return Err(Error::MalformedConfig(format!("bad op char `{c}`"))),
            }
        }
        Ok(MulSqrSeq(ops))
    }
}

/// An RSA private key at desk scale: exponent bits (MSB first), modulus and
/// message.
#[derive(Debug, Clone)]
pub struct RsaKey {
    pub d: BigUint,
    pub n: BigUint,
    pub m: BigUint,
}

impl RsaKey {
    pub fn new(d: BigUint, n: BigUint, m: BigUint) -> Result<Self> {
        if n < BigUint::from(2u32) {
            return Err(Error::InvalidKey("modulus must be at least 2".into()));
        }
        if m >= n {
            return Err(Error::InvalidKey("message must be below the modulus".into()));
        }
        Ok(RsaKey { d, n, m })
    }

    /// Random key with exactly `bits` exponent bits (MSB set).
    pub fn random<R: Rng>(bits: usize, rng: &mut R) -> Self {
        assert!(bits >= 1);
        let mut d = BigUint::one();
        for _ in 1..bits {
            d <<= 1u8;
            if rng.gen_bool(0.5) {
                d |= BigUint::one();
            }
        }
        let mut n = BigUint::zero();
        while n <= BigUint::from(2u32) {
            let raw: u64 = rng.gen_range(3..=u64::MAX);
            n = BigUint::from(raw | 1);
        }
        let m = BigUint::from(rng.gen_range(2u64..u64::MAX)) % &n;
        RsaKey { d, n, m }
    }

    /// Exponent bits MSB first.
    pub fn d_bits(&self) -> String {
        let s = self.d.to_str_radix(2);
        s
    }

    /// Temporal bit stream as the LSB-first loop processes it.
    pub fn key_stream(&self) -> String {
        self.d_bits().chars().rev().collect()
    }

    pub fn bit_len(&self) -> usize {
        self.d.bits() as usize
    }
}

/// Traffic-shape knobs for the managed-runtime victims. Lines per op model
/// the object churn per arithmetic step; spacings set burst density.
#[derive(Debug, Clone, Copy)]
pub struct VictimProfile {
    pub sqr_lines: u32,
    pub mul_lines: u32,
    /// Steady allocation stream between ops (pattern C pits need it).
    pub baseline_lines_per_k: u32,
    pub sqr_spacing: u64,
    pub mul_spacing: u64,
    /// Iteration time for a 0 bit / squaring-only step.
    pub bit0_cycles: u64,
    /// Iteration time for a 1 bit (squaring + multiply).
    pub bit1_cycles: u64,
    /// Per-iteration timing jitter, per million (seeded).
    pub jitter_ppm: u32,
    pub arena_base: u64,
    pub arena_lines: u64,
}

impl Default for VictimProfile {
    fn default() -> Self {
        VictimProfile {
            sqr_lines: 28,
            mul_lines: 20,
            baseline_lines_per_k: 0,
            sqr_spacing: 3,
            mul_spacing: 10,
            bit0_cycles: 7_000,
            bit1_cycles: 12_600,
            jitter_ppm: 0,
            arena_base: 0x2_0000_0000,
            arena_lines: 24_576,
        }
    }
}

/// Bump allocator cycling a bounded arena, standing in for young-gen heap
/// reuse: re-touched lines have been demoted to LLC by later allocations.
struct Arena {
    base: u64,
    lines: u64,
    next: u64,
}

impl Arena {
    fn new(p: &VictimProfile) -> Self {
        Arena {
            base: p.arena_base,
            lines: p.arena_lines,
            next: 0,
        }
    }

    fn alloc(&mut self) -> PhysAddr {
        let a = PhysAddr(self.base + (self.next % self.lines) * 64);
        self.next += 1;
        a
    }
}

/// A victim run: the arithmetic result, the access schedule to replay, and
/// ground truth for scoring the attack.
pub struct VictimRun {
    pub result: BigUint,
    pub schedule: Vec<(u64, PhysAddr)>,
    /// LSB-first processed bit stream (fast modular exponentiation) or the
    /// empty string for op-sequence victims.
    pub truth_stream: String,
    pub ops: MulSqrSeq,
    /// Cycle at which the recorded (post-warmup) region begins.
    pub start_cycle: u64,
    pub end_cycle: u64,
}

fn emit_burst(
    schedule: &mut Vec<(u64, PhysAddr)>,
    arena: &mut Arena,
    t: u64,
    lines: u32,
    spacing: u64,
) -> u64 {
    let mut at = t;
    for _ in 0..lines {
        schedule.push((at, arena.alloc()));
        at += spacing;
    }
    at
}

fn warmup(schedule: &mut Vec<(u64, PhysAddr)>, arena: &mut Arena, profile: &VictimProfile) -> u64 {
    let mut t = 1;
    for _ in 0..profile.arena_lines {
        schedule.push((t, arena.alloc()));
        t += 2;
    }
    // Quiet gap so the warmup wave drains before sampling starts.
    t + 4_000
}

/// Fast modular exponentiation (LSB-first square-and-multiply): computes
/// m^d mod n while emitting per-iteration allocation bursts. Every iteration
/// squares (the sharp rise); bit-1 iterations also multiply (the smoother
/// rise) and take longer.
pub fn victim_modexp<R: Rng>(
    key: &RsaKey,
    profile: &VictimProfile,
    rng: &mut R,
) -> Result<VictimRun> {
    if key.n < BigUint::from(2u32) {
        return Err(Error::InvalidKey("modulus must be at least 2".into()));
    }
    if key.m >= key.n {
        return Err(Error::InvalidKey("message must be below the modulus".into()));
    }
    let mut schedule = Vec::new();
    let mut arena = Arena::new(profile);
    let start_cycle = warmup(&mut schedule, &mut arena, profile);

    let mut res = BigUint::one();
    let mut m = key.m.clone();
    let mut d = key.d.clone();
    let mut truth = String::new();
    let mut ops = Vec::new();
    let mut t = start_cycle;
    while !d.is_zero() {
        let bit1 = (&d % 2u32) == BigUint::one();
        truth.push(if bit1 { '1' } else { '0' });
        if bit1 {
            res = (&res * &m) % &key.n;
        }
        d >>= 1u8;
        m = (&m * &m) % &key.n;

        // Leakage shape: the squaring burst opens the iteration, the multiply
        // burst follows for 1 bits.
        let sqr_end = emit_burst(&mut schedule, &mut arena, t, profile.sqr_lines, profile.sqr_spacing);
        ops.push(Op::Sqr);
        let period = if bit1 {
            let mul_at = t + (profile.bit0_cycles / 2);
            let mul_at = mul_at.max(sqr_end + 50);
            emit_burst(&mut schedule, &mut arena, mul_at, profile.mul_lines, profile.mul_spacing);
            ops.push(Op::Mul);
            profile.bit1_cycles
        } else {
            profile.bit0_cycles
        };
        let jitter = if profile.jitter_ppm > 0 {
            let span = period * profile.jitter_ppm as u64 / 1_000_000;
            if span > 0 {
                rng.gen_range(0..=span)
            } else {
                0
            }
        } else {
            0
        };
        t += period + jitter;
    }
    Ok(VictimRun {
        result: res,
        schedule,
        truth_stream: truth,
        ops: MulSqrSeq(ops),
        start_cycle,
        end_cycle: t,
    })
}

/// Left-to-right sliding-window exponentiation. Scan rule: a 0 bit emits one
/// squaring; a 1 bit opens the longest window of at most `w` bits ending in
/// a 1, emitting one squaring per window bit and then one multiply by the
/// precomputed odd power.
pub fn sliding_window_ops(d: &BigUint, w: usize) -> MulSqrSeq {
    assert!(w >= 1 && w <= 8);
    let bits: Vec<bool> = d
        .to_str_radix(2)
        .chars()
        .map(|c| c == '1')
        .collect();
    let mut ops = Vec::new();
    let mut i = 0;
    while i < bits.len() {
        if !bits[i] {
            ops.push(Op::Sqr);
            i += 1;
        } else {
            let mut j = i;
            for k in (i..bits.len().min(i + w)).rev() {
                if bits[k] {
                    j = k;
                    break;
                }
            }
            for _ in i..=j {
                ops.push(Op::Sqr);
            }
            ops.push(Op::Mul);
            i = j + 1;
        }
    }
    MulSqrSeq(ops)
}

/// The Appendix-style interval patterns for op-sequence victims.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpPattern {
    /// Multiplies rise above the baseline.
    MulRise,
    /// Squarings rise.
    SqrRise,
    /// Multiplies dip below a loud baseline (pits).
    MulPit,
}

/// Sliding-window victim: computes m^d mod n with the windowed algorithm and
/// emits per-op traffic shaped by `pattern`.
pub fn victim_sliding_window<R: Rng>(
    key: &RsaKey,
    w: usize,
    profile: &VictimProfile,
    pattern: OpPattern,
    rng: &mut R,
) -> Result<VictimRun> {
    if !(1..=8).contains(&w) {
        return Err(Error::InvalidKey(format!("window width {w} out of range")));
    }
    if key.n < BigUint::from(2u32) {
        return Err(Error::InvalidKey("modulus must be at least 2".into()));
    }
    if key.m >= key.n {
        return Err(Error::InvalidKey("message must be below the modulus".into()));
    }
    let ops = sliding_window_ops(&key.d, w);

    // Precompute odd powers m^1, m^3, ..., m^(2^w - 1).
    let mut table = Vec::with_capacity(1 << (w - 1));
    let m2 = (&key.m * &key.m) % &key.n;
    let mut cur = key.m.clone() % &key.n;
    table.push(cur.clone());
    for _ in 1..(1usize << (w - 1)) {
        cur = (&cur * &m2) % &key.n;
        table.push(cur.clone());
    }

    // Re-scan the bits to apply the windows arithmetically.
    let bits: Vec<bool> = key.d.to_str_radix(2).chars().map(|c| c == '1').collect();
    let mut acc = BigUint::one();
    let mut i = 0;
    while i < bits.len() {
        if !bits[i] {
            acc = (&acc * &acc) % &key.n;
            i += 1;
        } else {
            let mut j = i;
            for k in (i..bits.len().min(i + w)).rev() {
                if bits[k] {
                    j = k;
                    break;
                }
            }
            let mut value = 0usize;
            for b in &bits[i..=j] {
                value = (value << 1) | usize::from(*b);
            }
            for _ in i..=j {
                acc = (&acc * &acc) % &key.n;
            }
            acc = (&acc * &table[value >> 1]) % &key.n;
            i = j + 1;
        }
    }

    // Emit the op schedule.
    let mut schedule = Vec::new();
    let mut arena = Arena::new(profile);
    let start_cycle = warmup(&mut schedule, &mut arena, profile);
    let mut t = start_cycle;
    for op in &ops.0 {
        let (lines, spacing, dur) = match (op, pattern) {
            (Op::Sqr, OpPattern::MulRise) => (profile.baseline_lines_per_k, 16, profile.bit0_cycles),
            (Op::Mul, OpPattern::MulRise) => (profile.mul_lines, profile.mul_spacing, profile.bit0_cycles),
            (Op::Sqr, OpPattern::SqrRise) => (profile.sqr_lines, profile.sqr_spacing, profile.bit0_cycles),
            (Op::Mul, OpPattern::SqrRise) => (profile.baseline_lines_per_k, 16, profile.bit0_cycles),
            // Pattern C: every op allocates steadily except multiplies,
            // which go quiet and notch the trace.
            (Op::Sqr, OpPattern::MulPit) => (profile.sqr_lines, profile.sqr_spacing, profile.bit0_cycles),
            (Op::Mul, OpPattern::MulPit) => (0, 16, profile.bit0_cycles),
        };
        if lines > 0 {
            emit_burst(&mut schedule, &mut arena, t, lines, spacing);
        }
        let jitter = if profile.jitter_ppm > 0 {
            let span = dur * profile.jitter_ppm as u64 / 1_000_000;
            if span > 0 {
                rng.gen_range(0..=span)
            } else {
                0
            }
        } else {
            0
        };
        t += dur + jitter;
    }
    Ok(VictimRun {
        result: acc,
        schedule,
        truth_stream: String::new(),
        ops,
        start_cycle,
        end_cycle: t,
    })
}

/// Covert-channel sender: per bit, sweep the EV continuously for T/2 cycles
/// (bit 1) or idle for T/2 (bit 0).
pub fn covert_sender(
    bits: &str,
    period_cycles: u64,
    ev: &EvictionSet,
    load_spacing: u64,
) -> Result<Vec<(u64, PhysAddr)>> {
    if period_cycles < 2 {
        return Err(Error::MalformedConfig("period must be at least 2 cycles".into()));
    }
    let half = period_cycles / 2;
    let mut schedule = Vec::new();
    let mut t = 1u64;
    for c in bits.chars() {
        match c {
            '1' => {
                let end = t + half;
                let mut at = t;
                let mut k = 0usize;
                while at < end {
                    schedule.push((at, ev.addrs[k % ev.addrs.len()]));
                    k += 1;
                    at += load_spacing;
                }
                t = end;
            }
            '0' => {
                t += half;
            }
            c if c.is_whitespace() => {}
            c => return Err(Error::MalformedConfig(format!("bad bit `{c}`"))),
        }
    }
    Ok(schedule)
}

/// Square-wave traffic generator: `on_cycles` of paced accesses, then
/// `off_cycles` of silence, repeated for `total_cycles`.
pub struct PeriodicAccessor {
    pub on_cycles: u64,
    pub off_cycles: u64,
    pub src_tile: TileId,
    /// Some(tile): every access targets that tile's slice; None: the arena
    /// spreads accesses across all slices.
    pub dst_tile: Option<TileId>,
    pub spacing: u64,
    /// Working-set size; sets larger than L2 keep the traffic flowing on
    /// every pass instead of settling into private-cache hits.
    pub pool_lines: usize,
}

impl PeriodicAccessor {
    /// Builds the schedule. Slice-targeted mode picks arena addresses that
    /// hash to the destination slice; spread mode walks the arena directly.
    pub fn schedule(&self, sim: &Simulator, total_cycles: u64) -> Vec<(u64, PhysAddr)> {
        let mut out = Vec::new();
        let arena_base = 0x4_0000_0000u64;
        let want_slice = self
            .dst_tile
            .map(|t| sim.layout.cha_of_tile[&t]);
        let mut pool: Vec<PhysAddr> = Vec::new();
        let pool_target = self.pool_lines.max(1);
        let mut cand = 0u64;
        while pool.len() < pool_target {
            let a = PhysAddr(arena_base + cand * 64);
            cand += 1;
            match want_slice {
                Some(s) => {
                    if sim.cache.map(a).slice_id == s {
                        pool.push(a);
                    }
                }
                None => pool.push(a),
            }
            if cand > 4_000_000 {
                break;
            }
        }
        let mut t = 1u64;
        let mut k = 0usize;
        while t < total_cycles {
            let on_end = t + self.on_cycles;
            let mut at = t;
            while at < on_end && at < total_cycles {
                out.push((at, pool[k % pool.len()]));
                k += 1;
                at += self.spacing;
            }
            t = on_end + self.off_cycles;
        }
        out
    }
}

/// Attaches a victim run to the simulator as a scheduled source with the
/// given owner tag, offset so its first event lands at `sim.now() + 1`.
pub fn attach_schedule(
    sim: &mut Simulator,
    owner: u16,
    tile: TileId,
    schedule: Vec<(u64, PhysAddr)>,
) -> usize {
    let offset = sim.now();
    let events = schedule
        .into_iter()
        .map(|(t, a)| (t + offset, a))
        .collect();
    sim.add_source(ScheduledSource::new(owner, tile, events))
}

/// Big-integer modular exponentiation oracle (library path, independent of
/// the victims' loop structure).
pub fn modexp_oracle(m: &BigUint, d: &BigUint, n: &BigUint) -> BigUint {
    m.modpow(d, n)
}

/// Convenience wrapper: probe parameters used by attack campaigns.
#[derive(Debug, Clone, Copy)]
pub struct ProbeSpec {
    pub ev_size: usize,
    pub sweeps_per_sample: usize,
    pub l2_set: usize,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            ev_size: crate::evset::DEFAULT_EV_SIZE,
            sweeps_per_sample: 2,
            l2_set: 768,
        }
    }
}

/// Microsecond-denominated helper mirroring the published experiment knobs.
pub fn us(params: &SimParams, v: f64) -> u64 {
    params.us_to_cycles(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evset::{build_probe_ev, EvBuildMode};
    use crate::layout::{load_preset, select_best_path};
    use crate::sim::ACTOR_VICTIM;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn key(d: u64, n: u64, m: u64) -> RsaKey {
        RsaKey::new(BigUint::from(d), BigUint::from(n), BigUint::from(m)).unwrap()
    }

    #[test]
    fn modexp_computes_the_small_published_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let run = victim_modexp(&key(3, 10, 7), &VictimProfile::default(), &mut rng).unwrap();
        assert_eq!(run.result, BigUint::from(3u32));
        assert_eq!(run.truth_stream, "11");
    }

    #[test]
    fn modexp_zero_exponent_is_one_with_empty_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let run = victim_modexp(&key(0, 97, 42), &VictimProfile::default(), &mut rng).unwrap();
        assert_eq!(run.result, BigUint::one());
        assert!(run.truth_stream.is_empty());
        assert!(run.ops.0.is_empty());
        // Only the warmup remains in the schedule.
        assert!(run.schedule.iter().all(|&(t, _)| t < run.start_cycle));
    }

    #[test]
    fn modexp_agrees_with_biguint_oracle_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let profile = VictimProfile::default();
        for _ in 0..300 {
            let k = RsaKey::random(rng.gen_range(2..40), &mut rng);
            let run = victim_modexp(&k, &profile, &mut rng).unwrap();
            assert_eq!(run.result, modexp_oracle(&k.m, &k.d, &k.n));
        }
    }

    #[test]
    fn key_stream_is_lsb_first() {
        let k = key(0b1_0101_0010, 1_000_003, 99);
        assert_eq!(k.d_bits(), "101010010");
        assert_eq!(k.key_stream(), "010010101");
        assert_eq!(&k.key_stream()[..8], "01001010");
    }

    #[test]
    fn modexp_truth_stream_matches_key_stream_and_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let k = RsaKey::random(rng.gen_range(2..32), &mut rng);
            let run = victim_modexp(&k, &VictimProfile::default(), &mut rng).unwrap();
            assert_eq!(run.truth_stream, k.key_stream());
            assert_eq!(run.ops.sqr_count(), k.bit_len());
            let ones = run.truth_stream.chars().filter(|c| *c == '1').count();
            assert_eq!(run.ops.mul_count(), ones);
        }
    }

    #[test]
    fn sliding_window_w1_is_square_and_multiply() {
        // With w=1 the op stream fully determines the key: S->0, SM->1.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let k = RsaKey::random(rng.gen_range(2..32), &mut rng);
            let ops = sliding_window_ops(&k.d, 1);
            let mut bits = String::new();
            let mut it = ops.0.iter().peekable();
            while let Some(op) = it.next() {
                assert_eq!(*op, Op::Sqr);
                if it.peek() == Some(&&Op::Mul) {
                    it.next();
                    bits.push('1');
                } else {
                    bits.push('0');
                }
            }
            assert_eq!(bits, k.d_bits());
        }
    }

    #[test]
    fn sliding_window_squarings_count_the_bits() {
        let ops = sliding_window_ops(&BigUint::from(0b10110u32), 3);
        assert_eq!(ops.sqr_count(), 5);
        // Exhaustive small reference: every exponent bit costs one squaring,
        // every window one multiply.
        for d in 1u32..512 {
            for w in 1..=4usize {
                let ops = sliding_window_ops(&BigUint::from(d), w);
                assert_eq!(ops.sqr_count() as u32, 32 - d.leading_zeros());
            }
        }
    }

    #[test]
    fn sliding_window_result_equals_modexp_for_all_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let profile = VictimProfile::default();
        for _ in 0..60 {
            let k = RsaKey::random(rng.gen_range(2..36), &mut rng);
            let want = victim_modexp(&k, &profile, &mut rng).unwrap().result;
            for w in 1..=8 {
                let run =
                    victim_sliding_window(&k, w, &profile, OpPattern::MulPit, &mut rng).unwrap();
                assert_eq!(run.result, want, "w={w} d={}", k.d);
            }
        }
    }

    #[test]
    fn invalid_modulus_is_rejected() {
        assert!(RsaKey::new(BigUint::from(3u32), BigUint::one(), BigUint::zero()).is_err());
        assert!(RsaKey::new(BigUint::from(3u32), BigUint::from(10u32), BigUint::from(11u32)).is_err());
    }

    #[test]
    fn covert_sender_shapes_plateaus() {
        let mut sim = Simulator::new(load_preset("xeon-8260").unwrap(), SimParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ev = build_probe_ev(&mut sim, 0, 20, 1, 24, &mut rng, EvBuildMode::Direct).unwrap();
        let big_t = 100_000u64;
        let one = covert_sender("1", big_t, &ev, 45).unwrap();
        assert!(!one.is_empty());
        assert!(one.last().unwrap().0 < big_t / 2 + 45);

        let s101 = covert_sender("101", big_t, &ev, 45).unwrap();
        // Two busy plateaus separated by a silent half-period.
        let half = big_t / 2;
        assert!(s101.iter().any(|&(t, _)| t < half));
        assert!(!s101.iter().any(|&(t, _)| (half..2 * half).contains(&t)));
        assert!(s101.iter().any(|&(t, _)| t >= 2 * half));

        assert!(covert_sender("x", big_t, &ev, 45).is_err());
        assert!(covert_sender("1", 1, &ev, 45).is_err());
    }

    #[test]
    fn periodic_accessor_duty_cycle_and_conversion() {
        let params = SimParams::default();
        assert_eq!(params.us_to_cycles(30.0), 72_000);
        let sim = Simulator::new(load_preset("xeon-8260").unwrap(), params);
        let p = PeriodicAccessor {
            on_cycles: 600,
            off_cycles: 0,
            src_tile: 0,
            dst_tile: Some(24),
            spacing: 3,
            pool_lines: 4096,
        };
        let sched = p.schedule(&sim, 6_000);
        // Continuous flow: no gap beyond the spacing.
        for w in sched.windows(2) {
            assert!(w[1].0 - w[0].0 <= 3);
        }
        let want_slice = sim.layout.cha_of_tile[&24];
        assert!(sched.iter().all(|(_, a)| sim.cache.map(*a).slice_id == want_slice));
    }

    #[test]
    fn square_wave_victim_raises_shared_stop_counters() {
        // A probe sweeps along the top row while the victim at tile 0
        // bursts toward the east-end slice; row-0 stop counters with the
        // victim on must dominate the victim-off baseline.
        let run = |on: bool| {
            let layout = load_preset("xeon-8260").unwrap();
            let mut sim = Simulator::new(layout.clone(), SimParams::default());
            if on {
                let p = PeriodicAccessor {
                    on_cycles: 700,
                    off_cycles: 700,
                    src_tile: 0,
                    dst_tile: Some(24),
                    spacing: 1,
                    pool_lines: 32_768,
                };
                let sched = p.schedule(&sim, 60_000);
                attach_schedule(&mut sim, ACTOR_VICTIM, 0, sched);
            }
            // Probe: core at tile 9 (row 0) hammering the slice under
            // tile 19 (row 0, east), sharing the row with the victim flow.
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let slice = sim.layout.cha_of_tile[&19];
            let ev =
                build_probe_ev(&mut sim, 9, 640, slice, 24, &mut rng, EvBuildMode::Direct).unwrap();
            while sim.now() < 60_000 {
                for &a in &ev.addrs {
                    sim.access_blocking(ACTOR_PROBE, 9, a).unwrap();
                }
            }
            // The merge point: victim flow entering the probe's segment.
            let pos = crate::layout::Pos::new(0, 1);
            sim.mesh.link_counters(pos, crate::layout::Direction::East)
        };
        let off = run(false);
        let on = run(true);
        assert!(on.in_use_cycles > off.in_use_cycles);
        assert!(on.occupancy_accum > off.occupancy_accum);
        assert!(on.stall_cycles > off.stall_cycles);
        assert!(on.starved_cycles + on.nack_count > off.starved_cycles + off.nack_count);
    }

    #[test]
    fn probe_on_idle_fabric_is_deterministically_flat() {
        let layout = load_preset("xeon-8260").unwrap();
        let mut sim = Simulator::new(layout.clone(), SimParams::default());
        let path = select_best_path(&layout, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let slice = sim.layout.cha_of_tile[&path.dst_tile];
        let ev = build_probe_ev(&mut sim, path.src_tile, 700, slice, 24, &mut rng, EvBuildMode::Direct)
            .unwrap();
        // Warm the EV into steady state first.
        for _ in 0..2 {
            for &a in &ev.addrs {
                sim.access_blocking(ACTOR_PROBE, path.src_tile, a).unwrap();
            }
        }
        let trace = run_probe(&mut sim, &path, &ev, 60_000, 2).unwrap();
        assert!(trace.samples.len() > 10);
        let first = trace.samples[1].1;
        for &(_, v) in &trace.samples[1..] {
            assert_eq!(v, first, "idle fabric intervals must be flat");
        }
    }

    #[test]
    fn probe_interval_rises_with_cross_traffic_rate() {
        let mean_at_spacing = |spacing: u64| {
            let layout = load_preset("xeon-8260").unwrap();
            let mut sim = Simulator::new(layout.clone(), SimParams::default());
            let path = select_best_path(&layout, 9).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let slice = sim.layout.cha_of_tile[&path.dst_tile];
            let ev = build_probe_ev(
                &mut sim,
                path.src_tile,
                700,
                slice,
                24,
                &mut rng,
                EvBuildMode::Direct,
            )
            .unwrap();
            let p = PeriodicAccessor {
                on_cycles: 100_000,
                off_cycles: 0,
                src_tile: 9,
                dst_tile: Some(24),
                spacing,
                pool_lines: 32_768,
            };
            let sched = p.schedule(&sim, 100_000);
            attach_schedule(&mut sim, ACTOR_VICTIM, 9, sched);
            let trace = run_probe(&mut sim, &path, &ev, 80_000, 2).unwrap();
            let v = trace.intervals();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let slow = mean_at_spacing(64);
        let fast = mean_at_spacing(8);
        assert!(fast > slow, "fast {fast} <= slow {slow}");
    }

    #[test]
    fn trace_csv_roundtrip() {
        let trace = IntervalTrace {
            samples: vec![(0, 2400), (1, 2412), (2, 5000)],
            meta: TraceMeta {
                path: "14>24:E".into(),
                ev_size: 24,
                sweeps_per_sample: 20,
                clock_hz: 2_400_000_000,
                seed: 7,
            },
        };
        let text = trace.to_csv();
        let back = IntervalTrace::from_csv(&text).unwrap();
        assert_eq!(back, trace);
    }
}
