//! The interconnect: YX routing, per-direction FIFO link queues with
//! credit-based backpressure, retry-on-full injection, and per-stop counters
//! mirroring the busy/occupancy/stall/starvation/NACK taxonomy.
//!
//! One flit advances per link per cycle when the downstream buffer has a free
//! slot; otherwise the link stalls. NACKed injections retry after a penalty.

use std::collections::VecDeque;

use crate::cache::TrafficType;
use crate::layout::{Direction, Pos};

/// Mesh tuning knobs. Real link widths and buffer depths are undocumented,
/// so every quantity is a config value; claims about contention are ordinal.
#[derive(Debug, Clone, Copy)]
pub struct MeshConfig {
    pub rows: usize,
    pub cols: usize,
    /// Flit slots per directional link queue; credits granted upstream.
    pub buffer_depth: usize,
    /// Cycles before a NACKed injection is retried.
    pub retry_penalty: u64,
}

impl MeshConfig {
    pub fn new(rows: usize, cols: usize) -> Self {
        MeshConfig {
            rows,
            cols,
            buffer_depth: 8,
            retry_penalty: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshPacket {
    pub id: u64,
    pub src: Pos,
    pub dst: Pos,
    pub traffic_type: TrafficType,
    pub flits: u32,
    pub inject_cycle: u64,
    /// Set when the tail flit reaches the destination stop.
    pub deliver_cycle: u64,
}

/// Monotone per-link counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StopCounters {
    /// Cycles this link forwarded a flit.
    pub in_use_cycles: u64,
    /// Sum of queue length over cycles.
    pub occupancy_accum: u64,
    /// Cycles the head flit could not move for lack of downstream credit.
    pub stall_cycles: u64,
    /// Cycles the queue sat full, refusing new arrivals.
    pub starved_cycles: u64,
    /// Rejected injections (egress full at the source stop).
    pub nack_count: u64,
}

/// Snapshot of one directional link.
#[derive(Debug, Clone)]
pub struct LinkState {
    pub direction: Direction,
    pub queue_len: usize,
    pub credits: usize,
    pub capacity: usize,
    pub counters: StopCounters,
}

#[derive(Debug, Clone, Copy)]
struct Flit {
    packet: u32,
    /// Index into the packet route of the link this flit currently occupies.
    hop: u16,
    is_tail: bool,
    /// Cycle of the flit's last move; enforces one hop per cycle.
    last_move: u64,
}

#[derive(Debug, Clone)]
struct PacketState {
    meta: MeshPacket,
    route: Vec<Direction>,
    flits_pending: u32,
}

#[derive(Debug, Clone)]
struct PendingInjection {
    packet: u32,
    next_attempt: u64,
}

/// Outcome of an `inject` call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectOutcome {
    Accepted,
    Queued,
}

/// YX route: vertical hops to the destination row first, then horizontal.
/// Returns the visited positions excluding `src`, including `dst`.
pub fn route(src: Pos, dst: Pos) -> Vec<Pos> {
    let mut hops = Vec::new();
    let mut cur = src;
    while cur.row != dst.row {
        cur.row = if dst.row < cur.row { cur.row - 1 } else { cur.row + 1 };
        hops.push(cur);
    }
    while cur.col != dst.col {
        cur.col = if dst.col < cur.col { cur.col - 1 } else { cur.col + 1 };
        hops.push(cur);
    }
    hops
}

/// Direction sequence of the YX route from `src` to `dst`.
pub fn route_directions(src: Pos, dst: Pos) -> Vec<Direction> {
    let mut dirs = Vec::with_capacity(src.row.abs_diff(dst.row) + src.col.abs_diff(dst.col));
    let vertical = if dst.row < src.row {
        Direction::North
    } else {
        Direction::South
    };
    for _ in 0..src.row.abs_diff(dst.row) {
        dirs.push(vertical);
    }
    let horizontal = if dst.col < src.col {
        Direction::West
    } else {
        Direction::East
    };
    for _ in 0..src.col.abs_diff(dst.col) {
        dirs.push(horizontal);
    }
    dirs
}

/// The fabric: a grid of stops, each with four directional egress links.
pub struct MeshFabric {
    config: MeshConfig,
    /// links[stop_index * 4 + dir]
    links: Vec<VecDeque<Flit>>,
    counters: Vec<StopCounters>,
    packets: Vec<PacketState>,
    pending: Vec<PendingInjection>,
    /// Sorted superset of links with queued flits.
    active: Vec<u32>,
    live_packets: usize,
    next_packet_id: u64,
    pub total_injected: u64,
    pub total_delivered: u64,
    pub total_flit_hops: u64,
}

impl MeshFabric {
    pub fn new(config: MeshConfig) -> Self {
        let n = config.rows * config.cols * 4;
        MeshFabric {
            config,
            links: (0..n).map(|_| VecDeque::new()).collect(),
            counters: vec![StopCounters::default(); n],
            packets: Vec::new(),
            pending: Vec::new(),
            active: Vec::new(),
            live_packets: 0,
            next_packet_id: 0,
            total_injected: 0,
            total_delivered: 0,
            total_flit_hops: 0,
        }
    }

    pub fn config(&self) -> &MeshConfig {
        &self.config
    }

    #[inline]
    fn link_index(&self, pos: Pos, dir: Direction) -> usize {
        (pos.row * self.config.cols + pos.col) * 4 + dir.index()
    }

    #[inline]
    fn pos_of_stop(&self, stop: usize) -> Pos {
        Pos::new(stop / self.config.cols, stop % self.config.cols)
    }

    #[inline]
    fn neighbor(&self, pos: Pos, dir: Direction) -> Pos {
        match dir {
            Direction::North => Pos::new(pos.row - 1, pos.col),
            Direction::South => Pos::new(pos.row + 1, pos.col),
            Direction::East => Pos::new(pos.row, pos.col + 1),
            Direction::West => Pos::new(pos.row, pos.col - 1),
        }
    }

    fn mark_active(&mut self, li: usize) {
        match self.active.binary_search(&(li as u32)) {
            Ok(_) => {}
            Err(at) => self.active.insert(at, li as u32),
        }
    }

    /// Queues a packet for injection at its source stop. Zero-hop packets
    /// (src == dst) never touch the mesh and deliver in place.
    pub fn inject(
        &mut self,
        src: Pos,
        dst: Pos,
        traffic_type: TrafficType,
        flits: u32,
        cycle: u64,
    ) -> (u64, InjectOutcome) {
        debug_assert!(flits >= 1);
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        self.total_injected += 1;
        let meta = MeshPacket {
            id,
            src,
            dst,
            traffic_type,
            flits,
            inject_cycle: cycle,
            deliver_cycle: cycle,
        };
        if src == dst {
            self.total_delivered += 1;
            return (id, InjectOutcome::Accepted);
        }
        let idx = self.packets.len() as u32;
        self.packets.push(PacketState {
            meta,
            route: route_directions(src, dst),
            flits_pending: flits,
        });
        self.live_packets += 1;
        let first = self.link_index(src, self.packets[idx as usize].route[0]);
        if self.links[first].len() + flits as usize <= self.config.buffer_depth {
            self.feed_packet(idx, cycle);
            (id, InjectOutcome::Accepted)
        } else {
            self.counters[first].nack_count += 1;
            self.pending.push(PendingInjection {
                packet: idx,
                next_attempt: cycle + self.config.retry_penalty,
            });
            (id, InjectOutcome::Queued)
        }
    }

    fn feed_packet(&mut self, idx: u32, cycle: u64) {
        let (src, dir0, flits) = {
            let ps = &self.packets[idx as usize];
            (ps.meta.src, ps.route[0], ps.flits_pending)
        };
        let first = self.link_index(src, dir0);
        for i in 0..flits {
            self.links[first].push_back(Flit {
                packet: idx,
                hop: 0,
                is_tail: i == flits - 1,
                last_move: cycle,
            });
        }
        self.packets[idx as usize].flits_pending = 0;
        self.mark_active(first);
    }

    /// Advances every link one cycle; returns packets whose tail flit
    /// arrived this cycle.
    pub fn step(&mut self, cycle: u64) -> Vec<MeshPacket> {
        let mut arrivals = Vec::new();
        if !self.pending.is_empty() {
            let pending = std::mem::take(&mut self.pending);
            for p in pending {
                if cycle >= p.next_attempt {
                    let (src, dir0, flits) = {
                        let ps = &self.packets[p.packet as usize];
                        (ps.meta.src, ps.route[0], ps.flits_pending as usize)
                    };
                    let first = self.link_index(src, dir0);
                    if self.links[first].len() + flits <= self.config.buffer_depth {
                        self.feed_packet(p.packet, cycle);
                    } else {
                        self.counters[first].nack_count += 1;
                        self.pending.push(PendingInjection {
                            packet: p.packet,
                            next_attempt: cycle + self.config.retry_penalty,
                        });
                    }
                } else {
                    self.pending.push(p);
                }
            }
        }
        if self.active.is_empty() {
            return arrivals;
        }

        // Deterministic service order: ascending link index (stops row-major,
        // directions N,S,E,W within a stop).
        let snapshot: Vec<u32> = self.active.clone();
        let mut next_active: Vec<u32> = Vec::with_capacity(snapshot.len() + 4);
        for &li32 in &snapshot {
            let li = li32 as usize;
            let qlen = self.links[li].len();
            if qlen == 0 {
                continue;
            }
            self.counters[li].occupancy_accum += qlen as u64;
            if qlen == self.config.buffer_depth {
                self.counters[li].starved_cycles += 1;
            }
            let head = *self.links[li].front().unwrap();
            if head.last_move == cycle {
                // Arrived this very cycle; pipelines one hop per cycle.
                next_active.push(li32);
                continue;
            }
            let stop = li / 4;
            let dir = Direction::ALL[li % 4];
            let pos = self.pos_of_stop(stop);
            let next_pos = self.neighbor(pos, dir);
            let route_len = self.packets[head.packet as usize].route.len() as u16;

            if head.hop + 1 == route_len {
                // Crossing this link lands the flit on the destination stop.
                let flit = self.links[li].pop_front().unwrap();
                self.counters[li].in_use_cycles += 1;
                self.total_flit_hops += 1;
                if flit.is_tail {
                    let ps = &mut self.packets[head.packet as usize];
                    ps.meta.deliver_cycle = cycle;
                    self.total_delivered += 1;
                    self.live_packets -= 1;
                    arrivals.push(ps.meta);
                }
            } else {
                let next_dir = self.packets[head.packet as usize].route[(head.hop + 1) as usize];
                let ni = self.link_index(next_pos, next_dir);
                if self.links[ni].len() < self.config.buffer_depth {
                    let mut flit = self.links[li].pop_front().unwrap();
                    flit.hop += 1;
                    flit.last_move = cycle;
                    self.links[ni].push_back(flit);
                    self.counters[li].in_use_cycles += 1;
                    self.total_flit_hops += 1;
                    next_active.push(ni as u32);
                } else {
                    self.counters[li].stall_cycles += 1;
                }
            }
            if !self.links[li].is_empty() {
                next_active.push(li32);
            }
        }
        next_active.sort_unstable();
        next_active.dedup();
        self.active = next_active;
        arrivals
    }

    /// Copy of the counters for one directional link.
    pub fn link_counters(&self, pos: Pos, dir: Direction) -> StopCounters {
        self.counters[self.link_index(pos, dir)]
    }

    pub fn link_state(&self, pos: Pos, dir: Direction) -> LinkState {
        let li = self.link_index(pos, dir);
        LinkState {
            direction: dir,
            queue_len: self.links[li].len(),
            credits: self.config.buffer_depth - self.links[li].len(),
            capacity: self.config.buffer_depth,
            counters: self.counters[li],
        }
    }

    /// True when no flits are queued and no injections are pending.
    pub fn quiescent(&self) -> bool {
        self.pending.is_empty() && self.live_packets == 0
    }

    /// Drops per-packet bookkeeping once the fabric is empty; long campaigns
    /// call this between samples. Packet IDs stay monotone.
    pub fn compact(&mut self) {
        if self.quiescent() {
            self.packets.clear();
        }
    }

    /// CSV rows `cycle,row,col,direction,counter,value` for every non-zero
    /// counter.
    pub fn counters_csv(&self, cycle: u64) -> String {
        let mut out = String::from("cycle,row,col,direction,counter,value\n");
        for row in 0..self.config.rows {
            for col in 0..self.config.cols {
                for dir in Direction::ALL {
                    let c = self.link_counters(Pos::new(row, col), dir);
                    for (name, v) in [
                        ("in_use_cycles", c.in_use_cycles),
                        ("occupancy_accum", c.occupancy_accum),
                        ("stall_cycles", c.stall_cycles),
                        ("starved_cycles", c.starved_cycles),
                        ("nack_count", c.nack_count),
                    ] {
                        if v != 0 {
                            out.push_str(&format!(
                                "{cycle},{row},{col},{},{name},{v}\n",
                                dir.short()
                            ));
                        }
                    }
                }
            }
        }
        out
    }
}
