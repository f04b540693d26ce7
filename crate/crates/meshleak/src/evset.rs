//! Eviction-set machinery: timing-threshold calibration, conflict testing,
//! minimal-set construction, EV0/EV1 assembly and slice co-location search.
//!
//! The probe's eviction set lives entirely in the attacker's own L2 set; its
//! purpose is traffic generation toward one LLC slice, not evicting anything
//! of the victim's.

use std::io::Write;

use rand::Rng;

use crate::cache::{map_address, PhysAddr, SliceHash};
use crate::layout::TileId;
use crate::sim::{Simulator, ACTOR_PROBE};
use crate::{Error, Result};

pub const L2_WAYS: usize = 16;
pub const LLC_WAYS: usize = 11;
pub const DEFAULT_EV_SIZE: usize = 24;
pub const MAX_EV_SIZE: usize = 2 * LLC_WAYS + L2_WAYS; // 38

/// Addresses sharing one L2 set and one LLC slice, split into halves by
/// bit 16 (so the union still maps to a single L2 set while covering both
/// LLC sets the L2 set shadows).
#[derive(Debug, Clone)]
pub struct EvictionSet {
    /// EV0 first, then EV1; sweep order.
    pub addrs: Vec<PhysAddr>,
    pub l2_set: usize,
    pub slice_id: usize,
    pub ev0: Vec<PhysAddr>,
    pub ev1: Vec<PhysAddr>,
}

impl EvictionSet {
    pub fn from_halves(
        ev0: Vec<PhysAddr>,
        ev1: Vec<PhysAddr>,
        n_slices: usize,
        hash: &SliceHash,
    ) -> Result<Self> {
        if ev0.len() != ev1.len() || ev0.is_empty() {
            return Err(Error::MalformedConfig(
                "eviction-set halves must be equal and non-empty".into(),
            ));
        }
        let first = map_address(ev0[0], n_slices, hash);
        for &a in ev0.iter().chain(ev1.iter()) {
            let m = map_address(a, n_slices, hash);
            if m.l2_set != first.l2_set {
                return Err(Error::MalformedConfig(format!(
                    "address {:#x} leaves L2 set {}",
                    a.0, first.l2_set
                )));
            }
            if m.slice_id != first.slice_id {
                return Err(Error::MalformedConfig(format!(
                    "address {:#x} leaves slice {}",
                    a.0, first.slice_id
                )));
            }
        }
        for &a in &ev0 {
            if a.0 & (1 << 16) != 0 {
                return Err(Error::MalformedConfig("EV0 member has bit 16 set".into()));
            }
        }
        for &a in &ev1 {
            if a.0 & (1 << 16) == 0 {
                return Err(Error::MalformedConfig("EV1 member has bit 16 clear".into()));
            }
        }
        let mut addrs = ev0.clone();
        addrs.extend_from_slice(&ev1);
        Ok(EvictionSet {
            addrs,
            l2_set: first.l2_set as usize,
            slice_id: first.slice_id,
            ev0,
            ev1,
        })
    }

    pub fn len(&self) -> usize {
        self.addrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addrs.is_empty()
    }

    /// Text dump: `# l2_set=<s> slice=<id> n=<n>` then one hex address per
    /// line, EV0 before EV1.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "# l2_set={} slice={} n={}\n",
            self.l2_set,
            self.slice_id,
            self.addrs.len()
        );
        for a in &self.addrs {
            out.push_str(&format!("{:#x}\n", a.0));
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(self.dump().as_bytes())?;
        Ok(())
    }

    pub fn parse(text: &str, n_slices: usize, hash: &SliceHash) -> Result<Self> {
        let mut addrs = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v = u64::from_str_radix(line.trim_start_matches("0x"), 16)
                .map_err(|e| Error::MalformedConfig(format!("bad address `{line}`: {e}")))?;
            addrs.push(PhysAddr(v));
        }
        let (ev0, ev1): (Vec<_>, Vec<_>) = addrs.iter().partition(|a| a.0 & (1 << 16) == 0);
        Self::from_halves(ev0, ev1, n_slices, hash)
    }
}

/// Hit/miss boundary calibrated from known-hit and known-miss timings
/// (midpoint rule).
#[derive(Debug, Clone, Copy)]
pub struct LatencyThreshold {
    pub llc_hit: u64,
    pub memory: u64,
    pub threshold: u64,
}

/// Times a known LLC hit and a known memory miss from `tile` and returns the
/// midpoint threshold.
pub fn calibrate_threshold(sim: &mut Simulator, tile: TileId) -> Result<LatencyThreshold> {
    // Far corner of the address space, away from workload arenas.
    let hit_addr = PhysAddr(0x6_0000_0000);
    let miss_addr = PhysAddr(0x6_1000_0000);
    sim.cache.flush_line(hit_addr);
    sim.cache.preload_llc(hit_addr, ACTOR_PROBE);
    let llc_hit = sim.access_blocking(ACTOR_PROBE, tile, hit_addr)?;
    sim.cache.flush_line(hit_addr);
    sim.cache.flush_line(miss_addr);
    let memory = sim.access_blocking(ACTOR_PROBE, tile, miss_addr)?;
    sim.cache.flush_line(miss_addr);
    if memory <= llc_hit {
        return Err(Error::AmbiguousSlice {
            a: tile,
            b: tile,
            latency: llc_hit,
        });
    }
    Ok(LatencyThreshold {
        llc_hit,
        memory,
        threshold: (llc_hit + memory) / 2,
    })
}

/// Tests whether traversing `group` evicts `x` (same LLC set and slice with
/// at least the associativity): access x, traverse the group, demote the L2
/// set (the non-inclusive adaptation, so an L2 residence cannot mask the
/// verdict), then re-time x against the calibrated threshold.
pub fn check_conflict(
    sim: &mut Simulator,
    tile: TileId,
    x: PhysAddr,
    group: &[PhysAddr],
    th: &LatencyThreshold,
) -> Result<bool> {
    debug_assert!(!group.contains(&x));
    // Hermetic trial: residue from earlier trials in x's bucket would feed
    // phantom pressure into the verdict. Real attackers drown this in pool
    // size and repetition; the simulator can simply start clean.
    let xmap = sim.cache.map(x);
    sim.cache.flush_llc_set(xmap.slice_id, xmap.llc_set as usize);
    sim.cache.flush_line(x);
    for &a in group {
        sim.cache.flush_line(a);
    }
    sim.access_blocking(ACTOR_PROBE, tile, x)?;
    for &a in group {
        sim.access_blocking(ACTOR_PROBE, tile, a)?;
    }
    let l2_set = xmap.l2_set as usize;
    sim.push_l2_set(tile, l2_set);
    let t = sim.access_blocking(ACTOR_PROBE, tile, x)?;
    Ok(t > th.threshold)
}

/// Extracts a minimal conflicting core from `candidates` (pivot = first
/// element), then extends it with every remaining candidate that still
/// conflicts. Deletion proceeds in chunks first (removals that keep the
/// conflict alive are committed wholesale), then per address inside the
/// chunks that proved load-bearing.
pub fn find_ev(
    sim: &mut Simulator,
    tile: TileId,
    candidates: &[PhysAddr],
    th: &LatencyThreshold,
) -> Result<Vec<PhysAddr>> {
    if candidates.len() < 2 {
        return Err(Error::InsufficientCandidates);
    }
    let x = candidates[0];
    let mut pool: Vec<PhysAddr> = candidates[1..].to_vec();
    if !check_conflict(sim, tile, x, &pool, th)? {
        return Err(Error::InsufficientCandidates);
    }
    // Chunked deletion pass.
    let chunk = (pool.len() / (LLC_WAYS + 1)).max(1);
    if chunk > 1 {
        let mut at = 0;
        while at < pool.len() {
            let hi = (at + chunk).min(pool.len());
            let mut trial = pool.clone();
            trial.drain(at..hi);
            if check_conflict(sim, tile, x, &trial, th)? {
                pool = trial;
            } else {
                at = hi;
            }
        }
    }
    // Per-address deletion pass.
    let mut i = 0;
    while i < pool.len() {
        let mut trial = pool.clone();
        trial.remove(i);
        if check_conflict(sim, tile, x, &trial, th)? {
            pool = trial;
        } else {
            i += 1;
        }
    }
    let mut ev = vec![x];
    ev.extend_from_slice(&pool);
    // Extend with the leftover candidates that conflict with the minimal set.
    for &c in &candidates[1..] {
        if ev.contains(&c) {
            continue;
        }
        if check_conflict(sim, tile, c, &ev, th)? {
            ev.push(c);
        }
    }
    Ok(ev)
}

/// Picks the unique latency argmin; equal minima are ambiguity, not a guess.
pub fn unique_argmin(timings: &[(u64, TileId)]) -> Result<TileId> {
    assert!(!timings.is_empty());
    let (mut bt, mut btile) = timings[0];
    let mut tie: Option<TileId> = None;
    for &(t, tile) in &timings[1..] {
        if t < bt {
            bt = t;
            btile = tile;
            tie = None;
        } else if t == bt {
            tie = Some(tile);
        }
    }
    if let Some(ttile) = tie {
        return Err(Error::AmbiguousSlice {
            a: btile,
            b: ttile,
            latency: bt,
        });
    }
    Ok(btile)
}

/// Identifies the tile hosting an EV's slice: installs the set from each
/// enabled core, demotes it to LLC, and times the first address; the
/// co-located core observes the lowest latency.
pub fn locate_slice(sim: &mut Simulator, ev: &EvictionSet) -> Result<TileId> {
    let tiles: Vec<TileId> = sim.layout.enabled_tiles().collect();
    let amap = sim.cache.map(ev.addrs[0]);
    let l2_set = amap.l2_set as usize;
    // Warm at most one associativity's worth of lines: more would overflow
    // the timed address right out of its own bucket when the set is pushed.
    let warm = &ev.addrs[..ev.addrs.len().min(LLC_WAYS)];
    // Start from a clean bucket; search residue would spill the timed line.
    sim.cache.flush_llc_set(amap.slice_id, amap.llc_set as usize);
    for &a in warm {
        sim.cache.flush_line(a);
    }
    let mut timings = Vec::with_capacity(tiles.len());
    for &tile in &tiles {
        for _ in 0..2 {
            for &a in warm {
                sim.access_blocking(ACTOR_PROBE, tile, a)?;
            }
        }
        // Small sets fit in L2 outright; the demotion guarantees the timed
        // access is served by the slice, not the local L2.
        sim.push_l2_set(tile, l2_set);
        let t = sim.access_blocking(ACTOR_PROBE, tile, warm[0])?;
        timings.push((t, tile));
    }
    unique_argmin(&timings)
}

/// How `build_probe_ev` locates addresses for the target slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvBuildMode {
    /// Consult the model's own address map (fast; campaigns default).
    Direct,
    /// Attacker-realistic: candidate groups, conflict pruning and timed
    /// co-location, no knowledge of the hash.
    Search,
}

/// Assembles a probe EV of `n` addresses (n/2 per bit-16 half) on one L2 set
/// and one LLC slice. Sizes must exceed the L2 associativity to force misses
/// and stay within 2*LLC+L2 ways to avoid unconditional writebacks.
pub fn build_probe_ev<R: Rng>(
    sim: &mut Simulator,
    probe_tile: TileId,
    l2_set_index: usize,
    target_slice: usize,
    n: usize,
    rng: &mut R,
    mode: EvBuildMode,
) -> Result<EvictionSet> {
    if n <= L2_WAYS {
        return Err(Error::EvSizeTooSmall(n));
    }
    if n > MAX_EV_SIZE {
        return Err(Error::MalformedConfig(format!(
            "ev size {n} exceeds the combined L2+LLC capacity {MAX_EV_SIZE}"
        )));
    }
    let half = n / 2;
    if half * 2 != n {
        return Err(Error::MalformedConfig("ev size must be even".into()));
    }
    match mode {
        EvBuildMode::Direct => {
            let n_slices = sim.cache.n_slices();
            let hash = sim.cache.hash_config().clone();
            let mut halves: [Vec<PhysAddr>; 2] = [Vec::new(), Vec::new()];
            for (hi, want_bit) in [(0usize, 0u64), (1, 1)] {
                let mut attempts = 0u64;
                while halves[hi].len() < half {
                    attempts += 1;
                    if attempts > 200_000 {
                        return Err(Error::SliceUnreachable {
                            slice: target_slice,
                            l2_set: l2_set_index,
                        });
                    }
                    let tag: u64 = rng.gen_range(0..1 << 20);
                    let addr =
                        PhysAddr((tag << 17) | (want_bit << 16) | ((l2_set_index as u64) << 6));
                    if halves[hi].contains(&addr) {
                        continue;
                    }
                    if map_address(addr, n_slices, &hash).slice_id == target_slice {
                        halves[hi].push(addr);
                    }
                }
            }
            let [ev0, ev1] = halves;
            EvictionSet::from_halves(ev0, ev1, n_slices, &hash)
        }
        EvBuildMode::Search => {
            build_probe_ev_by_search(sim, probe_tile, l2_set_index, target_slice, half, rng)
        }
    }
}

/// The search pipeline: per bit-16 half, draw candidate pools on the L2 set,
/// extract conflicting sets, and keep those whose timed co-location matches
/// the target slice.
fn build_probe_ev_by_search<R: Rng>(
    sim: &mut Simulator,
    probe_tile: TileId,
    l2_set_index: usize,
    target_slice: usize,
    half: usize,
    rng: &mut R,
) -> Result<EvictionSet> {
    let th = calibrate_threshold(sim, probe_tile)?;
    let n_slices = sim.cache.n_slices();
    let hash = sim.cache.hash_config().clone();
    let target_tile = sim.layout.tile_of_slice(target_slice).unwrap();
    // Candidates sharing one L2 set spread over every slice, so a pool needs
    // slice-count times the associativity before one bucket can conflict.
    let pool_size = 2 * (LLC_WAYS + 1) * n_slices;
    let mut halves: [Vec<PhysAddr>; 2] = [Vec::new(), Vec::new()];
    for (hi, want_bit) in [(0usize, 0u64), (1, 1)] {
        let mut found = false;
        // Candidate groups, three times the slice count.
        for _ in 0..3 * n_slices {
            let pool: Vec<PhysAddr> = (0..pool_size)
                .map(|_| {
                    let tag: u64 = rng.gen_range(0..1 << 20);
                    PhysAddr((tag << 17) | (want_bit << 16) | ((l2_set_index as u64) << 6))
                })
                .collect();
            let Ok(core) = find_ev(sim, probe_tile, &pool, &th) else {
                continue;
            };
            if core.len() < LLC_WAYS {
                continue;
            }
            let probe_half = EvictionSet {
                addrs: core.clone(),
                l2_set: l2_set_index,
                slice_id: 0,
                ev0: Vec::new(),
                ev1: Vec::new(),
            };
            let tile = locate_slice(sim, &probe_half)?;
            if tile == target_tile {
                // Top the half up to size with more same-slice conflicts.
                let mut members = core;
                while members.len() < half {
                    let tag: u64 = rng.gen_range(0..1 << 20);
                    let cand =
                        PhysAddr((tag << 17) | (want_bit << 16) | ((l2_set_index as u64) << 6));
                    if members.contains(&cand) {
                        continue;
                    }
                    if check_conflict(sim, probe_tile, cand, &members, &th)? {
                        members.push(cand);
                    }
                }
                members.truncate(half);
                halves[hi] = members;
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::SliceUnreachable {
                slice: target_slice,
                l2_set: l2_set_index,
            });
        }
    }
    let [ev0, ev1] = halves;
    EvictionSet::from_halves(ev0, ev1, n_slices, &hash)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::load_preset;
    use crate::sim::SimParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sim_xorfold() -> Simulator {
        let layout = load_preset("xeon-8260").unwrap();
        Simulator::new(layout, SimParams::default())
    }

    /// Slices reachable from one L2 set depend on the hash; tests pick a
    /// slice actually observed on that set rather than assuming one.
    fn slice_on_set(sim: &Simulator, l2_set: u64, skip: Option<usize>) -> usize {
        for k in 0u64.. {
            let m = sim.cache.map(PhysAddr((k * 2048 + l2_set) << 6));
            if Some(m.slice_id) != skip {
                return m.slice_id;
            }
        }
        unreachable!()
    }

    /// Addresses in one L2 set and (set,slice): striding the tag by 2048
    /// lines keeps both set indices fixed while the hash varies.
    fn same_set_slice_addrs(
        sim: &Simulator,
        l2_set: u64,
        slice: usize,
        count: usize,
    ) -> Vec<PhysAddr> {
        let mut out = Vec::new();
        let mut k = 0u64;
        while out.len() < count {
            let addr = PhysAddr((k * 2048 + l2_set) << 6);
            k += 1;
            let m = sim.cache.map(addr);
            if m.slice_id == slice && m.l2_set == l2_set as u32 {
                out.push(addr);
            }
            assert!(k < 1_000_000, "slice {slice} unreachable from set {l2_set}");
        }
        out
    }

    #[test]
    fn calibration_separates_llc_from_memory() {
        let mut sim = sim_xorfold();
        let th = calibrate_threshold(&mut sim, 0).unwrap();
        assert!(th.llc_hit < th.threshold);
        assert!(th.threshold < th.memory);
    }

    #[test]
    fn conflict_detected_for_full_set_same_slice() {
        let mut sim = sim_xorfold();
        let th = calibrate_threshold(&mut sim, 5).unwrap();
        let slice = slice_on_set(&sim, 7, None);
        let mut addrs = same_set_slice_addrs(&sim, 7, slice, LLC_WAYS + 1);
        let x = addrs.remove(0);
        assert!(check_conflict(&mut sim, 5, x, &addrs, &th).unwrap());
        // Direct-inspection oracle: replay the same steps and look at the
        // model right where the timing verdict is taken.
        let xmap = sim.cache.map(x);
        sim.cache.flush_llc_set(xmap.slice_id, xmap.llc_set as usize);
        sim.cache.flush_line(x);
        for a in &addrs {
            sim.cache.flush_line(*a);
        }
        sim.access_blocking(ACTOR_PROBE, 5, x).unwrap();
        for &a in &addrs {
            sim.access_blocking(ACTOR_PROBE, 5, a).unwrap();
        }
        sim.push_l2_set(5, xmap.l2_set as usize);
        assert!(sim.cache.where_is(x).is_none(), "x must be fully evicted");
    }

    #[test]
    fn no_conflict_for_different_llc_set() {
        let mut sim = sim_xorfold();
        let th = calibrate_threshold(&mut sim, 5).unwrap();
        let xs = slice_on_set(&sim, 9, None);
        let x = same_set_slice_addrs(&sim, 9, xs, 1)[0];
        let os = slice_on_set(&sim, 200, None);
        let others = same_set_slice_addrs(&sim, 200, os, LLC_WAYS + 1);
        assert!(!check_conflict(&mut sim, 5, x, &others, &th).unwrap());
        assert!(!check_conflict(&mut sim, 5, x, &[], &th).unwrap());
    }

    #[test]
    fn conflict_agrees_with_model_inspection_on_random_groups() {
        let mut sim = sim_xorfold();
        let th = calibrate_threshold(&mut sim, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..40 {
            let l2_set = rng.gen_range(0..1024u64);
            let slice = slice_on_set(&sim, l2_set, None);
            let same = rng.gen_bool(0.5);
            let group_slice = if same { slice } else { slice_on_set(&sim, l2_set, Some(slice)) };
            let size = if rng.gen_bool(0.5) {
                LLC_WAYS + rng.gen_range(1..4)
            } else {
                rng.gen_range(1..LLC_WAYS - 1)
            };
            let x = same_set_slice_addrs(&sim, l2_set, slice, 1)[0];
            let group: Vec<PhysAddr> = same_set_slice_addrs(&sim, l2_set, group_slice, size + 1)
                .into_iter()
                .filter(|a| *a != x)
                .take(size)
                .collect();
            let got = check_conflict(&mut sim, 4, x, &group, &th).unwrap();
            let expect = same && size >= LLC_WAYS;
            assert_eq!(
                got, expect,
                "trial {trial} set {l2_set} slice {slice} size {size} same {same}"
            );
            sim.cache.flush_line(x);
            for a in &group {
                sim.cache.flush_line(*a);
            }
        }
    }

    #[test]
    fn find_ev_returns_single_slice_minimal_core() {
        let mut sim = sim_xorfold();
        let th = calibrate_threshold(&mut sim, 0).unwrap();
        // Pool spanning two slices on one L2 set.
        let sa = slice_on_set(&sim, 42, None);
        let sb = slice_on_set(&sim, 42, Some(sa));
        let mut pool = same_set_slice_addrs(&sim, 42, sa, 2 * LLC_WAYS);
        pool.extend(same_set_slice_addrs(&sim, 42, sb, LLC_WAYS));
        let ev = find_ev(&mut sim, 0, &pool, &th).unwrap();
        let slice_of = |a: &PhysAddr| sim.cache.map(*a).slice_id;
        assert!(
            ev.iter().all(|a| slice_of(a) == sa),
            "members stay on the pivot's slice"
        );
        assert!(ev.len() >= LLC_WAYS + 1);
    }

    #[test]
    fn find_ev_keeps_an_already_minimal_input() {
        let mut sim = sim_xorfold();
        let th = calibrate_threshold(&mut sim, 0).unwrap();
        let s17 = slice_on_set(&sim, 17, None);
        let pool = same_set_slice_addrs(&sim, 17, s17, LLC_WAYS + 1);
        let ev = find_ev(&mut sim, 0, &pool, &th).unwrap();
        let mut want = pool.clone();
        let mut got = ev.clone();
        want.sort();
        got.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn find_ev_without_conflict_errors() {
        let mut sim = sim_xorfold();
        let th = calibrate_threshold(&mut sim, 0).unwrap();
        let s6 = slice_on_set(&sim, 6, None);
        let pool = same_set_slice_addrs(&sim, 6, s6, 4);
        assert!(matches!(
            find_ev(&mut sim, 0, &pool, &th),
            Err(Error::InsufficientCandidates)
        ));
    }

    #[test]
    fn probe_ev_direct_mode_is_valid_by_construction() {
        let mut sim = sim_xorfold();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ev =
            build_probe_ev(&mut sim, 0, 100, 7, DEFAULT_EV_SIZE, &mut rng, EvBuildMode::Direct)
                .unwrap();
        assert_eq!(ev.len(), 24);
        assert_eq!(ev.ev0.len(), 12);
        assert_eq!(ev.ev1.len(), 12);
        assert_eq!(ev.l2_set, 100);
        assert_eq!(ev.slice_id, 7);
        for a in &ev.addrs {
            let m = sim.cache.map(*a);
            assert_eq!(m.l2_set, 100);
            assert_eq!(m.slice_id, 7);
        }
    }

    #[test]
    fn probe_ev_rejects_sizes_that_cannot_miss() {
        let mut sim = sim_xorfold();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            build_probe_ev(&mut sim, 0, 5, 0, 16, &mut rng, EvBuildMode::Direct),
            Err(Error::EvSizeTooSmall(16))
        ));
        assert!(build_probe_ev(&mut sim, 0, 5, 0, 40, &mut rng, EvBuildMode::Direct).is_err());
    }

    #[test]
    fn sweeping_ev38_forces_llc_writebacks() {
        let mut sim = sim_xorfold();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ev = build_probe_ev(&mut sim, 0, 50, 2, MAX_EV_SIZE, &mut rng, EvBuildMode::Direct)
            .unwrap();
        for _ in 0..4 {
            for &a in &ev.addrs {
                sim.access_blocking(ACTOR_PROBE, 0, a).unwrap();
            }
        }
        assert!(
            sim.cache.counters.llc_writebacks > 0,
            "38 lines exactly fill 16 L2 + 2x11 LLC ways; pseudo-LRU \
             imbalance must spill at least once"
        );
    }

    #[test]
    fn sweeping_ev24_stays_within_capacity() {
        let mut sim = sim_xorfold();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ev = build_probe_ev(&mut sim, 0, 51, 2, 24, &mut rng, EvBuildMode::Direct).unwrap();
        for _ in 0..6 {
            for &a in &ev.addrs {
                sim.access_blocking(ACTOR_PROBE, 0, a).unwrap();
            }
        }
        assert_eq!(sim.cache.counters.llc_writebacks, 0);
    }

    #[test]
    fn locate_slice_finds_home_tile() {
        let mut sim = sim_xorfold();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target_tile = 14;
        let slice = sim.layout.cha_of_tile[&target_tile];
        let ev = build_probe_ev(&mut sim, 0, 77, slice, 24, &mut rng, EvBuildMode::Direct).unwrap();
        assert_eq!(locate_slice(&mut sim, &ev).unwrap(), target_tile);
    }

    #[test]
    fn locate_slice_single_tile_layout() {
        let layout = crate::layout::parse_layout("core:0:0\n").unwrap();
        let mut sim = Simulator::new(layout, SimParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ev = build_probe_ev(&mut sim, 0, 10, 0, 24, &mut rng, EvBuildMode::Direct).unwrap();
        assert_eq!(locate_slice(&mut sim, &ev).unwrap(), 0);
    }

    #[test]
    fn equidistant_tie_is_reported_not_guessed() {
        // Symmetric layouts time two cores identically; the argmin refuses
        // to pick one.
        assert!(matches!(
            unique_argmin(&[(41, 3), (39, 8), (39, 14)]),
            Err(Error::AmbiguousSlice { a: 8, b: 14, latency: 39 })
        ));
        assert_eq!(unique_argmin(&[(41, 3), (39, 8), (40, 14)]).unwrap(), 8);
    }

    #[test]
    fn search_mode_builds_ev_without_hash_knowledge() {
        // Desk-scale die (4 slices) keeps the timing search quick.
        let layout = crate::layout::parse_layout(
            "core:0:0, core:2:2\ncore:1:1, core:3:3\n",
        )
        .unwrap();
        let mut sim = Simulator::new(layout, SimParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let target_slice = 2;
        let ev = build_probe_ev(
            &mut sim,
            0,
            300,
            target_slice,
            24,
            &mut rng,
            EvBuildMode::Search,
        )
        .unwrap();
        assert_eq!(ev.len(), 24);
        for a in &ev.addrs {
            let m = sim.cache.map(*a);
            assert_eq!(m.slice_id, target_slice, "search must land on the target slice");
            assert_eq!(m.l2_set, 300);
        }
    }

    #[test]
    fn candidate_groups_cover_every_slice_on_a_small_die() {
        // Three-times-the-slice-count random groups reach each slice with
        // high probability; pinned by seed here.
        let layout = crate::layout::parse_layout(
            "core:0:0, core:2:2\ncore:1:1, core:3:3\n",
        )
        .unwrap();
        let mut sim = Simulator::new(layout, SimParams::default());
        let th = calibrate_threshold(&mut sim, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n_slices = sim.cache.n_slices();
        let pool_size = 2 * (LLC_WAYS + 1) * n_slices;
        let mut covered = std::collections::BTreeSet::new();
        for _ in 0..3 * n_slices {
            let pool: Vec<PhysAddr> = (0..pool_size)
                .map(|_| {
                    let tag: u64 = rng.gen_range(0..1 << 20);
                    PhysAddr((tag << 17) | (77u64 << 6))
                })
                .collect();
            if let Ok(ev) = find_ev(&mut sim, 0, &pool, &th) {
                if ev.len() > LLC_WAYS {
                    covered.insert(sim.cache.map(ev[0]).slice_id);
                }
            }
        }
        assert!(covered.len() >= n_slices - 1, "covered {covered:?}");
    }

    #[test]
    fn ev_dump_and_parse_roundtrip() {
        let mut sim = sim_xorfold();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ev = build_probe_ev(&mut sim, 0, 123, 5, 24, &mut rng, EvBuildMode::Direct).unwrap();
        let text = ev.dump();
        let back =
            EvictionSet::parse(&text, sim.cache.n_slices(), sim.cache.hash_config()).unwrap();
        assert_eq!(back.addrs, ev.addrs);
        assert_eq!(back.l2_set, ev.l2_set);
        assert_eq!(back.slice_id, ev.slice_id);
    }

    #[test]
    fn probe_sweeps_leave_foreign_sets_untouched() {
        // The stateless property at the cache level: sweeping the probe EV
        // never evicts lines outside its own L2 set / LLC sets.
        let mut sim = sim_xorfold();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let victim_addr = PhysAddr(0x2_0000_0000 | (500 << 6));
        sim.access_async(crate::sim::ACTOR_VICTIM, 9, victim_addr).unwrap();
        let before = sim.cache.occupancy_of(crate::sim::ACTOR_VICTIM);
        let ev = build_probe_ev(&mut sim, 14, 200, 4, 24, &mut rng, EvBuildMode::Direct).unwrap();
        for _ in 0..20 {
            for &a in &ev.addrs {
                sim.access_blocking(ACTOR_PROBE, 14, a).unwrap();
            }
        }
        let after = sim.cache.occupancy_of(crate::sim::ACTOR_VICTIM);
        assert_eq!(before, after);
    }
}
