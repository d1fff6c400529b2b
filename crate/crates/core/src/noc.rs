//! Inter-tile dynamic network: a 2D mesh of wormhole-switched routers with
//! X-Y routing and round-robin virtual-channel arbitration, plus the
//! systolic broadcast engine.
//!
//! The mesh is pure transport: packets carry an opaque payload token the
//! simulator resolves on delivery. Each cycle is a two-phase update
//! (compute all moves against the start-of-cycle state, then apply them in
//! router order), which makes the outcome independent of traversal order
//! and of the worker count used to compute moves.

use crate::config::ChipConfig;
use crate::isa::TileId;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

pub const HEAD_OVERHEAD_BITS: u64 = 64;

/// Where a packet terminates: a tile's local port or a top-row memory port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dest {
    Tile(TileId),
    Mem { col: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Port {
    Local,
    North,
    South,
    East,
    West,
    Mem,
}

pub const PORTS: [Port; 6] = [
    Port::Local,
    Port::North,
    Port::South,
    Port::East,
    Port::West,
    Port::Mem,
];

impl Port {
    fn index(self) -> usize {
        PORTS.iter().position(|&p| p == self).unwrap()
    }

    fn opposite(self) -> Port {
        match self {
            Port::North => Port::South,
            Port::South => Port::North,
            Port::East => Port::West,
            Port::West => Port::East,
            p => p,
        }
    }
}

/// X-Y routing: resolve the x offset fully, then y, then deliver.
pub fn route_xy(cur: (usize, usize), dst: (usize, usize)) -> Port {
    if cur.0 < dst.0 {
        Port::East
    } else if cur.0 > dst.0 {
        Port::West
    } else if cur.1 < dst.1 {
        Port::South
    } else if cur.1 > dst.1 {
        Port::North
    } else {
        Port::Local
    }
}

/// Number of payload bits a message of `bits` needs in flits, given the
/// 64-bit head overhead.
pub fn flits_for_bits(bits: u64, link_bits: usize) -> u32 {
    ((bits + HEAD_OVERHEAD_BITS).div_ceil(link_bits as u64)).max(1) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flit {
    pub packet: u32,
    pub idx: u32,
    pub is_head: bool,
    pub is_tail: bool,
    pub dest: Dest,
    pub vc: usize,
}

/// One directed link: the `port` output of router `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Link {
    pub x: u16,
    pub y: u16,
    pub port: Port,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlitTrace {
    pub cycle: u64,
    pub link: Link,
    pub packet: u32,
    pub flit: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub at: Dest,
    pub packet: u32,
    pub flit: u32,
    pub is_tail: bool,
}

#[derive(Debug, Clone)]
struct Router {
    x: usize,
    y: usize,
    /// input queues: [port][vc]
    inputs: Vec<Vec<std::collections::VecDeque<Flit>>>,
    /// wormhole hold per output port: a granted (in_port, vc) keeps the
    /// output until its tail passes
    holds: [Option<(usize, usize)>; 6],
    /// round-robin arbiter position per output port
    rr: [usize; 6],
}

impl Router {
    fn new(x: usize, y: usize, vc_count: usize) -> Self {
        Router {
            x,
            y,
            inputs: (0..6)
                .map(|_| (0..vc_count).map(|_| Default::default()).collect())
                .collect(),
            holds: [None; 6],
            rr: [0; 6],
        }
    }

    fn occupancy(&self) -> Vec<usize> {
        self.inputs
            .iter()
            .flat_map(|p| p.iter().map(|q| q.len()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Move {
    router: usize,
    in_port: usize,
    vc: usize,
    out: Port,
}

pub struct Mesh {
    cols: usize,
    rows: usize,
    vc_count: usize,
    queue_depth: usize,
    routers: Vec<Router>,
    pub link_util: BTreeMap<Link, u64>,
    in_flight: u64,
    pub injected_flits: u64,
    pub delivered_flits: u64,
}

impl Mesh {
    pub fn new(cfg: &ChipConfig) -> Self {
        let mut routers = Vec::new();
        for y in 0..cfg.mesh_rows {
            for x in 0..cfg.mesh_cols {
                routers.push(Router::new(x, y, cfg.vc_count));
            }
        }
        Mesh {
            cols: cfg.mesh_cols,
            rows: cfg.mesh_rows,
            vc_count: cfg.vc_count,
            queue_depth: cfg.queue_depth,
            routers,
            link_util: BTreeMap::new(),
            in_flight: 0,
            injected_flits: 0,
            delivered_flits: 0,
        }
    }

    fn idx(&self, x: usize, y: usize) -> usize {
        y * self.cols + x
    }

    pub fn idle(&self) -> bool {
        self.in_flight == 0
    }

    fn dest_coords(&self, dest: Dest) -> (usize, usize) {
        match dest {
            Dest::Tile(t) => (t.0 as usize % self.cols, t.0 as usize / self.cols),
            Dest::Mem { col } => (col as usize, 0),
        }
    }

    fn terminal_port(&self, dest: Dest) -> Port {
        match dest {
            Dest::Tile(_) => Port::Local,
            Dest::Mem { .. } => Port::Mem,
        }
    }

    /// Space check + enqueue of a new flit at an injection point.
    fn try_put(&mut self, router: usize, port: Port, flit: Flit) -> bool {
        let q = &mut self.routers[router].inputs[port.index()][flit.vc];
        if q.len() >= self.queue_depth {
            return false;
        }
        q.push_back(flit);
        true
    }

    /// A tile offering a flit to its router's local input. Returns false
    /// (and leaves the flit with the caller) when backpressured.
    pub fn try_inject_local(&mut self, tile: TileId, flit: Flit) -> bool {
        let (x, y) = (tile.0 as usize % self.cols, tile.0 as usize / self.cols);
        let r = self.idx(x, y);
        let ok = self.try_put(r, Port::Local, flit);
        if ok {
            self.in_flight += 1;
            self.injected_flits += 1;
        }
        ok
    }

    /// A memory controller streaming a flit into its top-row router.
    pub fn try_inject_mem(&mut self, col: usize, flit: Flit) -> bool {
        let r = self.idx(col, 0);
        let ok = self.try_put(r, Port::Mem, flit);
        if ok {
            self.in_flight += 1;
            self.injected_flits += 1;
        }
        ok
    }

    /// Output port a queue head wants at router `r`.
    fn desired_output(&self, r: &Router, flit: &Flit) -> Port {
        let (dx, dy) = self.dest_coords(flit.dest);
        let p = route_xy((r.x, r.y), (dx, dy));
        if p == Port::Local {
            self.terminal_port(flit.dest)
        } else {
            p
        }
    }

    /// One cycle: VC allocation, switch arbitration and flit forwarding,
    /// at most one flit per output link. `parallel` only changes how the
    /// move set is computed, never what it is.
    pub fn step(
        &mut self,
        cycle: u64,
        parallel: bool,
        mut trace: Option<&mut Vec<FlitTrace>>,
    ) -> Vec<Delivery> {
        // snapshot of queue occupancy for space checks
        let occ: Vec<Vec<usize>> = self.routers.iter().map(Router::occupancy).collect();
        let compute = |r: &Router| self.moves_for(r, &occ);
        let moves: Vec<Move> = if parallel {
            self.routers
                .par_iter()
                .map(compute)
                .reduce(Vec::new, |mut a, mut b| {
                    a.append(&mut b);
                    a
                })
        } else {
            let mut all = Vec::new();
            for r in &self.routers {
                all.extend(compute(r));
            }
            all
        };

        let mut deliveries = Vec::new();
        for m in &moves {
            let flit = {
                let router = &mut self.routers[m.router];
                let flit = router.inputs[m.in_port][m.vc]
                    .pop_front()
                    .expect("move source non-empty");
                // maintain hold + arbiter state
                let o = m.out.index();
                if flit.is_head && !flit.is_tail {
                    router.holds[o] = Some((m.in_port, m.vc));
                } else if flit.is_tail {
                    router.holds[o] = None;
                }
                router.rr[o] = m.in_port * self.vc_count + m.vc;
                flit
            };
            let (x, y) = (self.routers[m.router].x, self.routers[m.router].y);
            let link = Link {
                x: x as u16,
                y: y as u16,
                port: m.out,
            };
            *self.link_util.entry(link).or_insert(0) += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(FlitTrace {
                    cycle,
                    link,
                    packet: flit.packet,
                    flit: flit.idx,
                });
            }
            match m.out {
                Port::Local | Port::Mem => {
                    self.in_flight -= 1;
                    self.delivered_flits += 1;
                    deliveries.push(Delivery {
                        at: flit.dest,
                        packet: flit.packet,
                        flit: flit.idx,
                        is_tail: flit.is_tail,
                    });
                }
                dir => {
                    let (nx, ny) = match dir {
                        Port::North => (x, y - 1),
                        Port::South => (x, y + 1),
                        Port::East => (x + 1, y),
                        Port::West => (x - 1, y),
                        _ => unreachable!(),
                    };
                    let n = self.idx(nx, ny);
                    self.routers[n].inputs[dir.opposite().index()][flit.vc].push_back(flit);
                }
            }
        }
        deliveries
    }

    /// Moves router `r` performs this cycle, judged against the
    /// start-of-cycle occupancy snapshot. Pure function of shared state.
    fn moves_for(&self, r: &Router, occ: &[Vec<usize>]) -> Vec<Move> {
        let rid = self.idx(r.x, r.y);
        let mut out = Vec::new();
        let mut sources_used = [false; 6 * 8]; // in_port * vc, vc_count <= 8
        for &port in &PORTS {
            let o = port.index();
            // continuing packet holds the output
            if let Some((ip, vc)) = r.holds[o] {
                if let Some(flit) = r.inputs[ip][vc].front() {
                    if !sources_used[ip * self.vc_count + vc]
                        && self.space_downstream(r, port, flit.vc, occ)
                    {
                        sources_used[ip * self.vc_count + vc] = true;
                        out.push(Move {
                            router: rid,
                            in_port: ip,
                            vc,
                            out: port,
                        });
                    }
                }
                continue;
            }
            // otherwise round-robin over head flits requesting this output
            let total = 6 * self.vc_count;
            let start = r.rr[o];
            for k in 1..=total {
                let slot = (start + k) % total;
                let (ip, vc) = (slot / self.vc_count, slot % self.vc_count);
                if sources_used[slot] {
                    continue;
                }
                let Some(flit) = r.inputs[ip][vc].front() else {
                    continue;
                };
                if !flit.is_head || self.desired_output(r, flit) != port {
                    continue;
                }
                if !self.space_downstream(r, port, flit.vc, occ) {
                    continue;
                }
                sources_used[slot] = true;
                out.push(Move {
                    router: rid,
                    in_port: ip,
                    vc,
                    out: port,
                });
                break;
            }
        }
        out
    }

    fn space_downstream(&self, r: &Router, port: Port, vc: usize, occ: &[Vec<usize>]) -> bool {
        match port {
            Port::Local | Port::Mem => true, // unbounded receive buffers
            Port::North | Port::South | Port::East | Port::West => {
                let (nx, ny) = match port {
                    Port::North => (r.x, r.y.wrapping_sub(1)),
                    Port::South => (r.x, r.y + 1),
                    Port::East => (r.x + 1, r.y),
                    Port::West => (r.x.wrapping_sub(1), r.y),
                    _ => unreachable!(),
                };
                if nx >= self.cols || ny >= self.rows {
                    return false;
                }
                let n = self.idx(nx, ny);
                let slot = port.opposite().index() * self.vc_count + vc;
                occ[n][slot] < self.queue_depth
            }
        }
    }
}

/// Builds the flit train for a message of `bits` payload bits.
pub fn make_flits(packet: u32, bits: u64, link_bits: usize, dest: Dest, vc: usize) -> Vec<Flit> {
    let n = flits_for_bits(bits, link_bits);
    (0..n)
        .map(|idx| Flit {
            packet,
            idx,
            is_head: idx == 0,
            is_tail: idx == n - 1,
            dest,
            vc,
        })
        .collect()
}

// ------------------------------------------------------- systolic engine

/// Near-neighbor pipelined broadcast. The payload enters the mesh at one
/// point and each tile forwards the stream to its next neighbor one hop
/// behind: flit `f` reaches a tile at hop distance `d` exactly `f + d`
/// cycles after launch (the entry link counts as hop 1). Broadcast flits
/// ride a reserved lane, so they appear in link utilization but do not
/// contend with wormhole traffic.
#[derive(Debug, Clone)]
pub struct SystolicBroadcast {
    pub id: u32,
    pub launch_cycle: u64,
    pub flits: u32,
    /// hop distance per destination tile (>= 1)
    pub dists: BTreeMap<TileId, u32>,
    /// directed links at each hop depth, for utilization accounting
    pub links_at_depth: Vec<Vec<Link>>,
    pub payload_token: u32,
}

/// Row-then-column propagation order from an entry point. For a DRAM
/// broadcast the entry is the top-row router below the controller; for a
/// tile broadcast it is the source tile's router. Returns (dists, links).
pub fn systolic_schedule(
    cfg: &ChipConfig,
    entry: (usize, usize),
    targets: &[TileId],
    from_mem: bool,
) -> (BTreeMap<TileId, u32>, Vec<Vec<Link>>) {
    let mut dists = BTreeMap::new();
    for &t in targets {
        let (x, y) = t.coords(cfg);
        // row-wise to the target's column, then column-wise
        let dx = x.abs_diff(entry.0) as u32;
        let dy = y.abs_diff(entry.1) as u32;
        let d = dx + dy + 1; // the entry link is hop 1
        dists.insert(t, d);
    }
    let max_d = dists.values().copied().max().unwrap_or(1);
    let mut links_at_depth: Vec<Vec<Link>> = vec![Vec::new(); max_d as usize + 1];
    // entry link
    let entry_link = Link {
        x: entry.0 as u16,
        y: entry.1 as u16,
        port: if from_mem { Port::Mem } else { Port::Local },
    };
    links_at_depth[1].push(entry_link);
    // horizontal spread along the entry row, then vertical drops: a link
    // at depth k carries the stream k cycles behind the source
    let mut seen = std::collections::BTreeSet::new();
    for &t in targets {
        let (x, y) = t.coords(cfg);
        let mut cx = entry.0;
        let mut cy = entry.1;
        let mut depth = 1u32;
        while cx != x {
            let port = if cx < x { Port::East } else { Port::West };
            let l = Link {
                x: cx as u16,
                y: cy as u16,
                port,
            };
            depth += 1;
            if seen.insert(l) {
                links_at_depth[depth as usize].push(l);
            }
            cx = if cx < x { cx + 1 } else { cx - 1 };
        }
        while cy != y {
            let port = if cy < y { Port::South } else { Port::North };
            let l = Link {
                x: cx as u16,
                y: cy as u16,
                port,
            };
            depth += 1;
            if seen.insert(l) {
                links_at_depth[depth as usize].push(l);
            }
            cy = if cy < y { cy + 1 } else { cy - 1 };
        }
    }
    (dists, links_at_depth)
}

impl SystolicBroadcast {
    /// Tiles whose final flit arrives exactly at `cycle`.
    pub fn completions_at(&self, cycle: u64) -> Vec<TileId> {
        self.dists
            .iter()
            .filter(|&(_, &d)| self.launch_cycle + (self.flits as u64 - 1) + d as u64 == cycle)
            .map(|(&t, _)| t)
            .collect()
    }

    pub fn done_at(&self, cycle: u64) -> bool {
        let max_d = self.dists.values().copied().max().unwrap_or(1) as u64;
        cycle >= self.launch_cycle + self.flits as u64 - 1 + max_d
    }

    /// Accounts the links this broadcast drives during `cycle`.
    pub fn account_links(&self, cycle: u64, util: &mut BTreeMap<Link, u64>) {
        if cycle <= self.launch_cycle {
            return;
        }
        let elapsed = cycle - self.launch_cycle; // >= 1
        for (depth, links) in self.links_at_depth.iter().enumerate().skip(1) {
            // link at depth k carries flit f at launch + f + k
            if elapsed >= depth as u64 && elapsed - (depth as u64) < self.flits as u64 {
                for l in links {
                    *util.entry(*l).or_insert(0) += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn route_xy_is_x_then_y() {
        // (0,0) -> (3,2): three E moves then two S moves
        let mut cur = (0, 0);
        let dst = (3, 2);
        let mut path = Vec::new();
        while cur != dst {
            let p = route_xy(cur, dst);
            path.push(p);
            cur = match p {
                Port::East => (cur.0 + 1, cur.1),
                Port::West => (cur.0 - 1, cur.1),
                Port::South => (cur.0, cur.1 + 1),
                Port::North => (cur.0, cur.1 - 1),
                _ => unreachable!(),
            };
        }
        assert_eq!(
            path,
            vec![Port::East, Port::East, Port::East, Port::South, Port::South]
        );
        assert_eq!(route_xy((5, 5), (5, 5)), Port::Local);
    }

    #[test]
    fn all_pairs_paths_are_minimal() {
        // brute force over every pair on the full 12x10 mesh
        let (cols, rows) = (12, 10);
        for sx in 0..cols {
            for sy in 0..rows {
                for dx in 0..cols {
                    for dy in 0..rows {
                        let mut cur = (sx, sy);
                        let mut hops = 0usize;
                        while cur != (dx, dy) {
                            match route_xy(cur, (dx, dy)) {
                                Port::East => cur.0 += 1,
                                Port::West => cur.0 -= 1,
                                Port::South => cur.1 += 1,
                                Port::North => cur.1 -= 1,
                                _ => unreachable!(),
                            }
                            hops += 1;
                            assert!(hops <= cols + rows, "non-minimal path");
                        }
                        let manhattan = sx.abs_diff(dx) + sy.abs_diff(dy);
                        assert_eq!(hops, manhattan, "({sx},{sy})->({dx},{dy})");
                    }
                }
            }
        }
    }

    #[test]
    fn single_packet_latency_is_hops_plus_flits_minus_one() {
        let cfg = ChipConfig::default();
        let mut mesh = Mesh::new(&cfg);
        let src = TileId(0); // (0,0)
        let dst = TileId(3 + 2 * 12); // (3,2), 5 hops
        let flits = make_flits(7, 4000, cfg.tile_link_bits, Dest::Tile(dst), 0);
        assert_eq!(flits.len(), 4);
        let mut pending: std::collections::VecDeque<_> = flits.into_iter().collect();
        let mut tail_at = None;
        for cycle in 1..100 {
            if let Some(f) = pending.front().copied() {
                if mesh.try_inject_local(src, f) {
                    pending.pop_front();
                }
            }
            for d in mesh.step(cycle, false, None) {
                if d.is_tail {
                    tail_at = Some(cycle);
                }
            }
            if tail_at.is_some() {
                break;
            }
        }
        // injection starts at cycle 1; latency = hops + flits - 1
        assert_eq!(tail_at.unwrap() - 1, 5 + 4 - 1);
    }

    #[test]
    fn head_overhead_changes_flit_count() {
        assert_eq!(flits_for_bits(0, 1024), 1);
        assert_eq!(flits_for_bits(960, 1024), 1);
        assert_eq!(flits_for_bits(961, 1024), 2);
        assert_eq!(flits_for_bits(1024, 1024), 2);
    }

    #[test]
    fn systolic_row_completion_formula() {
        // entry above tile (0,0), row of 4 tiles, 6 flits
        let cfg = ChipConfig::mini();
        let targets: Vec<TileId> = vec![TileId(0), TileId(1)];
        let (dists, _) = systolic_schedule(&cfg, (0, 0), &targets, true);
        assert_eq!(dists[&TileId(0)], 1);
        assert_eq!(dists[&TileId(1)], 2);
        let bc = SystolicBroadcast {
            id: 0,
            launch_cycle: 10,
            flits: 6,
            dists,
            links_at_depth: Vec::new(),
            payload_token: 0,
        };
        // last tile done at launch + F - 1 + N = 10 + 5 + 2
        assert!(bc.completions_at(17).contains(&TileId(1)));
        assert!(bc.done_at(17));
        assert!(!bc.done_at(16));
    }
}
