//! Chip orchestrator: advances every tile, router, DRAM controller and
//! broadcast under one global cycle barrier, implements the blocking
//! semantics of transfers and synchronization, and accounts cycles and
//! energy into the compute / dram / network categories.
//!
//! Every cycle runs fixed phases: tiles step (parallelizable, tile-local),
//! their emitted actions apply in tile order, outboxes inject, controllers
//! move one flit each, the mesh moves flits two-phase, broadcasts deliver.
//! All cross-component effects land in deterministic order, so identical
//! inputs give identical stats and traces for any worker count.

use crate::config::ChipConfig;
use crate::isa::{
    validate_program, Instruction, IsaError, Precision, Program, TileAddr, TileId,
};
use crate::memory::{
    encode_elements, DramImage, MemoryError,
};
use crate::noc::{
    flits_for_bits, make_flits, systolic_schedule, Dest, Flit, FlitTrace, Mesh,
    SystolicBroadcast,
};
use crate::tile::{Tile, TileError};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error(transparent)]
    Tile(#[from] TileError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("deadlock at cycle {cycle}: no progress for {window} cycles; blocked: {waits:?}")]
    Deadlock {
        cycle: u64,
        window: u64,
        waits: Vec<String>,
    },
}

/// Cycle category of a stalled or busy tile. Overlaps resolve by the
/// precedence dram > network > compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Cat {
    Compute,
    Dram,
    Network,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TileCatStats {
    pub compute: u64,
    pub dram: u64,
    pub network: u64,
    pub busy: u64,
    pub halted_at: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EventTotals {
    pub microops: u64,
    pub cram_reads: u64,
    pub cram_writes: u64,
    pub htree_hops: u64,
    pub noc_flit_hops: u64,
    pub dram_bits: u64,
    pub rf_accesses: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Energy {
    pub compute_pj: f64,
    pub dram_pj: f64,
    pub network_pj: f64,
    pub total_pj: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub total_cycles: u64,
    pub tiles: Vec<TileCatStats>,
    pub events: EventTotals,
    pub energy: Energy,
    pub instr_histogram: BTreeMap<String, u64>,
    pub link_util: BTreeMap<String, u64>,
}

impl RunStats {
    pub fn chip_busy(&self) -> u64 {
        self.tiles.iter().map(|t| t.busy).sum()
    }

    pub fn chip_category(&self, cat: Cat) -> u64 {
        self.tiles
            .iter()
            .map(|t| match cat {
                Cat::Compute => t.compute,
                Cat::Dram => t.dram,
                Cat::Network => t.network,
            })
            .sum()
    }
}

/// Per-cycle event deltas recorded under `--trace`; energy recomputes from
/// these alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyTraceRecord {
    pub cycle: u64,
    pub deltas: EventTotals,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// 0 or 1 = single-threaded reference mode; >1 steps tiles and routers
    /// with a worker pool (same results by contract).
    pub workers: usize,
    pub flit_trace: bool,
    pub energy_trace: bool,
}

#[derive(Debug)]
pub struct RunOutput {
    pub stats: RunStats,
    pub image: DramImage,
    pub flit_trace: Option<Vec<FlitTrace>>,
    pub energy_trace: Option<Vec<EnergyTraceRecord>>,
}

// ----------------------------------------------------------------- tiles

#[derive(Debug, Clone)]
enum Payload {
    Elems(Arc<Vec<i64>>, Precision),
    Raw(Arc<Vec<u8>>),
    /// packed element bits for shuffle distribution
    Bits(Arc<Vec<u8>>, u64),
}

#[derive(Debug, Clone)]
enum PacketMeta {
    Data {
        src: TileId,
        payload: Payload,
    },
    Signal {
        src: TileId,
        tag: u16,
    },
    LoadReply {
        job: u32,
    },
    Store {
        job: u32,
    },
}

#[derive(Debug, Clone)]
enum TState {
    Ready,
    Busy { left: u64, cat: Cat },
    WaitDram { job: u32 },
    WaitBcast { job: u32 },
    WaitOutbox { cat: Cat },
    WaitRecv { src: TileId },
    WaitSignal { src: TileId, tag: u16 },
    Halted,
}

#[derive(Debug)]
enum Action {
    SubmitLoad {
        tile: TileId,
        kind: LoadKind,
        dram: u64,
    },
    SubmitStore {
        tile: TileId,
        addr: u64,
        bytes: Arc<Vec<u8>>,
    },
    SubmitLoadBcast {
        tile: TileId,
        seq: u64,
        dst: TileAddr,
        dram: u64,
        size: u64,
        p: Precision,
        tr: bool,
        shf: u32,
    },
    LaunchTileBcast {
        tile: TileId,
        dst: TileAddr,
        p: Precision,
        shf: u32,
        payload: Payload,
        bits: u64,
    },
    SendData {
        tile: TileId,
        dst_tile: TileId,
        payload: Payload,
        bits: u64,
    },
    SendSignal {
        tile: TileId,
        dst_tile: TileId,
        tag: u16,
    },
}

#[derive(Debug, Clone)]
enum LoadKind {
    Cram {
        dst: TileAddr,
        size: u64,
        p: Precision,
        tr: bool,
    },
    Rf {
        addr: u64,
    },
}

struct TileRt {
    id: TileId,
    tile: Tile,
    stream: Arc<Vec<Instruction>>,
    pc: usize,
    state: TState,
    outbox: VecDeque<Flit>,
    recv_data: BTreeMap<TileId, VecDeque<(Payload, u64)>>,
    recv_signals: BTreeMap<(TileId, u16), u64>,
    bcast_seq: u64,
    /// broadcast jobs whose payload already landed here
    bcast_delivered: std::collections::BTreeSet<u32>,
    stats: TileCatStats,
    histogram: BTreeMap<&'static str, u64>,
}

impl TileRt {
    fn next_instr(&self) -> Option<&Instruction> {
        self.stream.get(self.pc)
    }

    fn wait_description(&self) -> Option<String> {
        match &self.state {
            TState::WaitRecv { src } => Some(format!("tile {} waits rx from {src}", self.id)),
            TState::WaitSignal { src, tag } => {
                Some(format!("tile {} waits signal {tag} from {src}", self.id))
            }
            TState::WaitDram { job } => Some(format!("tile {} waits dram job {job}", self.id)),
            TState::WaitBcast { job } => Some(format!("tile {} waits broadcast {job}", self.id)),
            TState::WaitOutbox { .. } => Some(format!("tile {} waits injection", self.id)),
            _ => None,
        }
    }
}

// ------------------------------------------------------------ controllers

#[derive(Debug)]
struct ActiveRelease {
    flits: Vec<Flit>,
    next: usize,
    /// DRAM-side payload bits still to grant
    bits_left: u64,
    /// a broadcast job streams into the systolic engine instead
    bcast: bool,
}

#[derive(Debug, Default)]
struct RxStore {
    flits_seen: u32,
}

struct Controller {
    queue: VecDeque<u32>,
    credit: u64,
    rx: VecDeque<Flit>,
    rx_progress: HashMap<u32, RxStore>,
    active: Option<ActiveRelease>,
    granted_bits: u64,
    granted_this_cycle: u64,
}

#[derive(Debug, Clone)]
enum JobKind {
    Load {
        tile: TileId,
        kind: LoadKind,
        dram: u64,
    },
    Bcast {
        dst: TileAddr,
        dram: u64,
        size: u64,
        p: Precision,
        tr: bool,
        shf: u32,
    },
    Store {
        addr: u64,
        bytes: Arc<Vec<u8>>,
    },
}

#[derive(Debug, Clone)]
struct JobRecord {
    ready_at: u64,
    kind: JobKind,
    /// filled once a broadcast launches
    bcast_launch: Option<(u64, u32)>, // (launch cycle, flits)
}

// ------------------------------------------------------------------- sim

pub struct Sim {
    cfg: ChipConfig,
    tiles: Vec<TileRt>,
    mesh: Mesh,
    controllers: Vec<Controller>,
    packets: HashMap<u32, PacketMeta>,
    payloads: HashMap<u32, Payload>,
    jobs: HashMap<u32, JobRecord>,
    bcast_registry: BTreeMap<u64, u32>, // load_bcast issue index -> job
    engine: Vec<SystolicBroadcast>,
    image: DramImage,
    next_packet: u32,
    next_job: u32,
    cycle: u64,
    last_progress: u64,
    opts: RunOptions,
    instr_histogram: BTreeMap<String, u64>,
    flit_trace: Vec<FlitTrace>,
    energy_trace: Vec<EnergyTraceRecord>,
    prev_events: EventTotals,
}

pub fn run(
    program: &Program,
    cfg: &ChipConfig,
    image: DramImage,
    opts: RunOptions,
) -> Result<RunOutput, SimError> {
    validate_program(program, cfg)?;
    let mut sim = Sim::new(program, cfg, image, opts);
    sim.run_to_completion()?;
    Ok(sim.finish())
}

impl Sim {
    fn new(program: &Program, cfg: &ChipConfig, image: DramImage, opts: RunOptions) -> Self {
        let tiles = (0..cfg.num_tiles())
            .map(|t| {
                let id = TileId(t as u16);
                let stream: Arc<Vec<Instruction>> = Arc::new(
                    program
                        .streams
                        .get(&id)
                        .cloned()
                        .unwrap_or_default(),
                );
                let state = if stream.is_empty() {
                    TState::Halted
                } else {
                    TState::Ready
                };
                TileRt {
                    id,
                    tile: Tile::new(cfg),
                    stream,
                    pc: 0,
                    state,
                    outbox: VecDeque::new(),
                    recv_data: BTreeMap::new(),
                    recv_signals: BTreeMap::new(),
                    bcast_seq: 0,
                    bcast_delivered: Default::default(),
                    stats: TileCatStats::default(),
                    histogram: BTreeMap::new(),
                }
            })
            .collect();
        let controllers = (0..cfg.mesh_cols)
            .map(|_col| Controller {
                queue: VecDeque::new(),
                credit: 0,
                rx: VecDeque::new(),
                rx_progress: HashMap::new(),
                active: None,
                granted_bits: 0,
                granted_this_cycle: 0,
            })
            .collect();
        Sim {
            cfg: cfg.clone(),
            tiles,
            mesh: Mesh::new(cfg),
            controllers,
            packets: HashMap::new(),
            payloads: HashMap::new(),
            jobs: HashMap::new(),
            bcast_registry: BTreeMap::new(),
            engine: Vec::new(),
            image,
            next_packet: 0,
            next_job: 0,
            cycle: 0,
            last_progress: 0,
            opts,
            instr_histogram: BTreeMap::new(),
            flit_trace: Vec::new(),
            energy_trace: Vec::new(),
            prev_events: EventTotals::default(),
        }
    }

    fn done(&self) -> bool {
        self.tiles
            .iter()
            .all(|t| matches!(t.state, TState::Halted) && t.outbox.is_empty())
            && self.mesh.idle()
            && self
                .controllers
                .iter()
                .all(|c| c.queue.is_empty() && c.active.is_none() && c.rx.is_empty())
            && self.engine.is_empty()
    }

    fn run_to_completion(&mut self) -> Result<(), SimError> {
        while !self.done() {
            self.cycle += 1;
            self.step_cycle()?;
            if self.cycle - self.last_progress > self.cfg.deadlock_window {
                let waits = self
                    .tiles
                    .iter()
                    .filter_map(TileRt::wait_description)
                    .collect();
                return Err(SimError::Deadlock {
                    cycle: self.cycle,
                    window: self.cfg.deadlock_window,
                    waits,
                });
            }
        }
        Ok(())
    }

    fn step_cycle(&mut self) -> Result<(), SimError> {
        // phase 1: tiles
        let cfg = self.cfg.clone();
        let cycle = self.cycle;
        let step_one = |t: &mut TileRt| -> Result<TileStepOut, TileError> {
            tile_step(t, &cfg, cycle)
        };
        let results: Vec<TileStepOut> = if self.opts.workers > 1 {
            self.tiles
                .par_iter_mut()
                .map(step_one)
                .collect::<Result<Vec<_>, _>>()?
        } else {
            self.tiles
                .iter_mut()
                .map(step_one)
                .collect::<Result<Vec<_>, _>>()?
        };
        let mut actions = Vec::new();
        for (i, (cat, action, progressed)) in results.into_iter().enumerate() {
            if let Some(cat) = cat {
                let s = &mut self.tiles[i].stats;
                s.busy += 1;
                match cat {
                    Cat::Compute => s.compute += 1,
                    Cat::Dram => s.dram += 1,
                    Cat::Network => s.network += 1,
                }
            }
            if progressed {
                self.progress();
            }
            if let Some(a) = action {
                actions.push(a);
            }
        }
        for a in actions {
            self.apply_action(a);
        }

        // phase 2: outbox injection, one flit per tile per cycle
        for t in 0..self.tiles.len() {
            if let Some(&flit) = self.tiles[t].outbox.front() {
                if self.mesh.try_inject_local(TileId(t as u16), flit) {
                    self.tiles[t].outbox.pop_front();
                    self.progress();
                }
            }
        }

        // phase 3: controllers move at most one flit each
        self.step_controllers();

        // phase 4: mesh
        let trace = self.opts.flit_trace.then_some(&mut self.flit_trace);
        let deliveries = self
            .mesh
            .step(self.cycle, self.opts.workers > 1, trace);
        if !deliveries.is_empty() {
            self.progress();
        }
        for d in deliveries {
            self.deliver(d)?;
        }

        // phase 5: systolic broadcasts
        self.step_engine()?;

        // bookkeeping
        if self.opts.energy_trace {
            let now = self.event_totals();
            let deltas = EventTotals {
                microops: now.microops - self.prev_events.microops,
                cram_reads: now.cram_reads - self.prev_events.cram_reads,
                cram_writes: now.cram_writes - self.prev_events.cram_writes,
                htree_hops: now.htree_hops - self.prev_events.htree_hops,
                noc_flit_hops: now.noc_flit_hops - self.prev_events.noc_flit_hops,
                dram_bits: now.dram_bits - self.prev_events.dram_bits,
                rf_accesses: now.rf_accesses - self.prev_events.rf_accesses,
            };
            if deltas != EventTotals::default() {
                self.energy_trace.push(EnergyTraceRecord {
                    cycle: self.cycle,
                    deltas,
                });
            }
            self.prev_events = now;
        }
        Ok(())
    }

    fn progress(&mut self) {
        self.last_progress = self.cycle;
    }

    fn new_packet(&mut self, meta: PacketMeta) -> u32 {
        let id = self.next_packet;
        self.next_packet += 1;
        self.packets.insert(id, meta);
        id
    }

    fn apply_action(&mut self, action: Action) {
        match action {
            Action::SubmitLoad { tile, kind, dram } => {
                let col = tile.coords(&self.cfg).0;
                let id = self.next_job;
                self.next_job += 1;
                self.jobs.insert(
                    id,
                    JobRecord {
                        ready_at: self.cycle + self.cfg.dram_latency,
                        kind: JobKind::Load { tile, kind, dram },
                        bcast_launch: None,
                    },
                );
                self.controllers[col].queue.push_back(id);
                self.tiles[tile.0 as usize].state = TState::WaitDram { job: id };
            }
            Action::SubmitStore { tile, addr, bytes } => {
                let col = tile.coords(&self.cfg).0;
                let id = self.next_job;
                self.next_job += 1;
                let _ = col;
                self.jobs.insert(
                    id,
                    JobRecord {
                        ready_at: self.cycle,
                        kind: JobKind::Store {
                            addr,
                            bytes: bytes.clone(),
                        },
                        bcast_launch: None,
                    },
                );
                let bits = bytes.len() as u64 * 8;
                let pkt = self.new_packet(PacketMeta::Store { job: id });
                let flits = make_flits(
                    pkt,
                    bits,
                    self.cfg.tile_link_bits,
                    Dest::Mem { col: col as u16 },
                    pkt as usize % self.cfg.vc_count,
                );
                self.tiles[tile.0 as usize].outbox.extend(flits);
                self.tiles[tile.0 as usize].state = TState::WaitOutbox { cat: Cat::Dram };
            }
            Action::SubmitLoadBcast {
                tile,
                seq,
                dst,
                dram,
                size,
                p,
                tr,
                shf,
            } => {
                let job = match self.bcast_registry.get(&seq) {
                    Some(&job) => job,
                    None => {
                        let col = tile.coords(&self.cfg).0;
                        let id = self.next_job;
                        self.next_job += 1;
                        self.jobs.insert(
                            id,
                            JobRecord {
                                ready_at: self.cycle + self.cfg.dram_latency,
                                kind: JobKind::Bcast {
                                    dst,
                                    dram,
                                    size,
                                    p,
                                    tr,
                                    shf,
                                },
                                bcast_launch: None,
                            },
                        );
                        self.controllers[col].queue.push_back(id);
                        self.bcast_registry.insert(seq, id);
                        id
                    }
                };
                let rt = &mut self.tiles[tile.0 as usize];
                if rt.bcast_delivered.contains(&job) {
                    rt.state = TState::Ready;
                } else {
                    rt.state = TState::WaitBcast { job };
                }
            }
            Action::LaunchTileBcast {
                tile,
                dst,
                p,
                shf,
                payload,
                bits,
            } => {
                let flits = flits_for_bits(bits, self.cfg.tile_link_bits);
                let targets: Vec<TileId> = (0..self.cfg.num_tiles() as u16)
                    .map(TileId)
                    .filter(|&t| t != tile)
                    .collect();
                let (dists, links) =
                    systolic_schedule(&self.cfg, tile.coords(&self.cfg), &targets, false);
                let token = self.next_packet;
                self.next_packet += 1;
                self.payloads.insert(token, payload);
                let id = self.next_job;
                self.next_job += 1;
                self.engine.push(SystolicBroadcast {
                    id,
                    launch_cycle: self.cycle,
                    flits,
                    dists,
                    links_at_depth: links,
                    payload_token: token,
                });
                self.jobs.insert(
                    id,
                    JobRecord {
                        ready_at: self.cycle,
                        kind: JobKind::Bcast {
                            dst,
                            dram: 0,
                            size: 0,
                            p,
                            tr: true,
                            shf,
                        },
                        bcast_launch: Some((self.cycle, flits)),
                    },
                );
                // the source streams one flit per cycle
                self.tiles[tile.0 as usize].state = TState::Busy {
                    left: flits as u64 - 1,
                    cat: Cat::Network,
                };
            }
            Action::SendData {
                tile,
                dst_tile,
                payload,
                bits,
            } => {
                let pkt = self.new_packet(PacketMeta::Data {
                    src: tile,
                    payload,
                });
                let flits = make_flits(
                    pkt,
                    bits,
                    self.cfg.tile_link_bits,
                    Dest::Tile(dst_tile),
                    pkt as usize % self.cfg.vc_count,
                );
                self.tiles[tile.0 as usize].outbox.extend(flits);
                self.tiles[tile.0 as usize].state = TState::WaitOutbox { cat: Cat::Network };
            }
            Action::SendSignal {
                tile,
                dst_tile,
                tag,
            } => {
                let pkt = self.new_packet(PacketMeta::Signal { src: tile, tag });
                let flits = make_flits(
                    pkt,
                    0,
                    self.cfg.tile_link_bits,
                    Dest::Tile(dst_tile),
                    pkt as usize % self.cfg.vc_count,
                );
                self.tiles[tile.0 as usize].outbox.extend(flits);
                // non-blocking: the tile already moved on
            }
        }
    }

    fn step_controllers(&mut self) {
        for c in 0..self.controllers.len() {
            self.controllers[c].granted_this_cycle = 0;
            let link_bits = self.cfg.tile_link_bits as u64;
            let grant = self.cfg.controller_grant();
            {
                let ctl = &mut self.controllers[c];
                ctl.credit = (ctl.credit + grant).min(2 * link_bits.max(grant));
            }
            if self.controllers[c].credit < link_bits {
                continue;
            }
            // absorb one store flit if any are waiting
            if let Some(flit) = self.controllers[c].rx.pop_front() {
                self.absorb_store_flit(c, flit);
                continue;
            }
            // otherwise advance the active load/broadcast release
            if self.controllers[c].active.is_none() {
                self.try_start_release(c);
            }
            self.advance_release(c);
        }
    }

    fn try_start_release(&mut self, c: usize) {
        let Some(&job_id) = self.controllers[c].queue.front() else {
            return;
        };
        let job = self.jobs.get(&job_id).expect("job exists").clone();
        if self.cycle < job.ready_at {
            return;
        }
        self.controllers[c].queue.pop_front();
        match &job.kind {
            JobKind::Load { tile, kind, dram } => {
                let (payload, dram_bits, stream_bits) = self.read_load_payload(kind, *dram);
                let token_pkt = self.new_packet(PacketMeta::LoadReply { job: job_id });
                self.payloads.insert(token_pkt, payload);
                let flits = make_flits(
                    token_pkt,
                    stream_bits,
                    self.cfg.tile_link_bits,
                    Dest::Tile(*tile),
                    token_pkt as usize % self.cfg.vc_count,
                );
                self.controllers[c].active = Some(ActiveRelease {
                    flits,
                    next: 0,
                    bits_left: dram_bits,
                    bcast: false,
                });
            }
            JobKind::Bcast {
                dst: _,
                dram,
                size,
                p,
                tr,
                shf,
            } => {
                let (payload, dram_bits, stream_bits) = self.read_bcast_payload(*dram, *size, *p, *tr, *shf);
                let token = self.next_packet;
                self.next_packet += 1;
                self.payloads.insert(token, payload);
                let flits = flits_for_bits(stream_bits, self.cfg.tile_link_bits);
                let targets: Vec<TileId> =
                    (0..self.cfg.num_tiles() as u16).map(TileId).collect();
                let (dists, links) = systolic_schedule(&self.cfg, (c, 0), &targets, true);
                // flit 0 crosses the entry link next cycle
                let launch = self.cycle;
                self.engine.push(SystolicBroadcast {
                    id: job_id,
                    launch_cycle: launch,
                    flits,
                    dists,
                    links_at_depth: links,
                    payload_token: token,
                });
                self.jobs.get_mut(&job_id).unwrap().bcast_launch = Some((launch, flits));
                self.controllers[c].active = Some(ActiveRelease {
                    flits: Vec::new(),
                    next: flits as usize,
                    bits_left: dram_bits,
                    bcast: true,
                });
            }
            JobKind::Store { .. } => unreachable!("stores do not queue on the load side"),
        }
    }

    fn advance_release(&mut self, c: usize) {
        let link_bits = self.cfg.tile_link_bits as u64;
        let Some(active) = self.controllers[c].active.take() else {
            return;
        };
        let mut active = active;
        let mut moved = false;
        if active.bcast {
            // streaming into the systolic engine: one flit-time per cycle
            if active.bits_left > 0 || active.next > 0 {
                let granted = active.bits_left.min(link_bits);
                active.bits_left -= granted;
                active.next = active.next.saturating_sub(1);
                self.grant(c, granted);
                moved = true;
            }
            if active.bits_left > 0 || active.next > 0 {
                self.controllers[c].active = Some(active);
            }
            if moved {
                self.progress();
            }
            return;
        }
        if active.next < active.flits.len() {
            let flit = active.flits[active.next];
            if self.mesh.try_inject_mem(c, flit) {
                let granted = active.bits_left.min(link_bits);
                active.bits_left -= granted;
                self.grant(c, granted);
                active.next += 1;
                moved = true;
            }
        }
        if active.next < active.flits.len() {
            self.controllers[c].active = Some(active);
        }
        if moved {
            self.progress();
        }
    }

    fn grant(&mut self, c: usize, bits: u64) {
        let link_bits = self.cfg.tile_link_bits as u64;
        let ctl = &mut self.controllers[c];
        ctl.credit = ctl.credit.saturating_sub(link_bits.min(ctl.credit));
        ctl.granted_bits += bits;
        ctl.granted_this_cycle += bits;
    }

    fn absorb_store_flit(&mut self, c: usize, flit: Flit) {
        let link_bits = self.cfg.tile_link_bits as u64;
        let entry = self.controllers[c]
            .rx_progress
            .entry(flit.packet)
            .or_default();
        entry.flits_seen += 1;
        let done = flit.is_tail;
        let job_id = match self.packets.get(&flit.packet) {
            Some(PacketMeta::Store { job }) => *job,
            _ => unreachable!("mem port only receives stores"),
        };
        let bytes_len = match &self.jobs[&job_id].kind {
            JobKind::Store { bytes, .. } => bytes.len() as u64 * 8,
            _ => unreachable!(),
        };
        let total_flits = flits_for_bits(bytes_len, self.cfg.tile_link_bits);
        let seen = self.controllers[c].rx_progress[&flit.packet].flits_seen;
        let already = (seen as u64 - 1) * link_bits;
        let granted = (bytes_len.saturating_sub(already)).min(link_bits);
        self.grant(c, granted);
        self.progress();
        if done {
            debug_assert_eq!(seen, total_flits);
            let job = self.jobs.remove(&job_id).expect("store job");
            if let JobKind::Store { addr, bytes } = job.kind {
                self.image.write(addr, &bytes);
            }
            self.controllers[c].rx_progress.remove(&flit.packet);
            self.packets.remove(&flit.packet);
        }
    }

    /// Reads a load's payload from the image. Returns (payload, DRAM-side
    /// bits, streamed bits for flit framing).
    fn read_load_payload(&mut self, kind: &LoadKind, dram: u64) -> (Payload, u64, u64) {
        match kind {
            LoadKind::Cram { size, p, tr, .. } => {
                if *tr {
                    let values = self.image.read_elements(dram, *p, *size as usize);
                    let dram_bits = *size * p.container_bits() as u64;
                    let chunks = (*size).div_ceil(self.cfg.bitlines as u64);
                    let stream_bits = chunks * p.bits as u64 * self.cfg.bitlines as u64;
                    (Payload::Elems(Arc::new(values), *p), dram_bits, stream_bits)
                } else {
                    let chunks = (*size).div_ceil(self.cfg.bitlines as u64);
                    let bytes_len = chunks as usize * p.bits as usize * self.cfg.bitlines / 8;
                    let bytes = self.image.read(dram, bytes_len);
                    let bits = bytes_len as u64 * 8;
                    (Payload::Raw(Arc::new(bytes)), bits, bits)
                }
            }
            LoadKind::Rf { addr } => {
                let len = self.cfg.rf_regs * self.cfg.rf_width / 8;
                let bytes = self.image.read(*addr, len);
                let bits = len as u64 * 8;
                (Payload::Raw(Arc::new(bytes)), bits, bits)
            }
        }
    }

    fn read_bcast_payload(
        &mut self,
        dram: u64,
        size: u64,
        p: Precision,
        tr: bool,
        shf: u32,
    ) -> (Payload, u64, u64) {
        if shf > 0 {
            let values = self.image.read_elements(dram, p, size as usize);
            let dram_bits = size * p.container_bits() as u64;
            let w = size * p.bits as u64;
            let packed = pack_bits(&values, p);
            (Payload::Bits(Arc::new(packed), w), dram_bits, w)
        } else if tr {
            let values = self.image.read_elements(dram, p, size as usize);
            let dram_bits = size * p.container_bits() as u64;
            let chunks = size.div_ceil(self.cfg.bitlines as u64);
            let stream_bits = chunks * p.bits as u64 * self.cfg.bitlines as u64;
            (Payload::Elems(Arc::new(values), p), dram_bits, stream_bits)
        } else {
            let chunks = size.div_ceil(self.cfg.bitlines as u64);
            let bytes_len = chunks as usize * p.bits as usize * self.cfg.bitlines / 8;
            let bytes = self.image.read(dram, bytes_len);
            let bits = bytes_len as u64 * 8;
            (Payload::Raw(Arc::new(bytes)), bits, bits)
        }
    }

    fn deliver(&mut self, d: crate::noc::Delivery) -> Result<(), SimError> {
        match d.at {
            Dest::Mem { col } => {
                // flits queue for grant-paced absorption
                let meta = self.packets.get(&d.packet).cloned();
                if let Some(PacketMeta::Store { .. }) = meta {
                    let flit = Flit {
                        packet: d.packet,
                        idx: d.flit,
                        is_head: d.flit == 0,
                        is_tail: d.is_tail,
                        dest: d.at,
                        vc: 0,
                    };
                    self.controllers[col as usize].rx.push_back(flit);
                }
                Ok(())
            }
            Dest::Tile(tid) => {
                if !d.is_tail {
                    return Ok(());
                }
                let meta = self.packets.remove(&d.packet).expect("packet meta");
                match meta {
                    PacketMeta::Signal { src, tag } => {
                        *self.tiles[tid.0 as usize]
                            .recv_signals
                            .entry((src, tag))
                            .or_insert(0) += 1;
                    }
                    PacketMeta::Data { src, payload } => {
                        let size = match &payload {
                            Payload::Elems(v, _) => v.len() as u64,
                            Payload::Raw(b) => b.len() as u64,
                            Payload::Bits(_, w) => *w,
                        };
                        self.tiles[tid.0 as usize]
                            .recv_data
                            .entry(src)
                            .or_default()
                            .push_back((payload, size));
                    }
                    PacketMeta::LoadReply { job } => {
                        let rec = self.jobs.remove(&job).expect("load job");
                        let payload = self.payloads.remove(&d.packet).expect("payload");
                        if let JobKind::Load { tile, kind, .. } = rec.kind {
                            debug_assert_eq!(tile, tid);
                            let rt = &mut self.tiles[tid.0 as usize];
                            land_load(rt, &kind, &payload, &self.cfg)?;
                            rt.state = TState::Ready;
                        }
                    }
                    PacketMeta::Store { .. } => unreachable!("stores terminate at mem ports"),
                }
                Ok(())
            }
        }
    }

    fn step_engine(&mut self) -> Result<(), SimError> {
        let cycle = self.cycle;
        let mut retired = Vec::new();
        for i in 0..self.engine.len() {
            let (completions, done) = {
                let bc = &self.engine[i];
                bc.account_links(cycle, &mut self.mesh.link_util);
                (bc.completions_at(cycle), bc.done_at(cycle))
            };
            if !completions.is_empty() {
                self.progress();
            }
            let bc_id = self.engine[i].id;
            let token = self.engine[i].payload_token;
            for t in completions {
                let job = self.jobs.get(&bc_id).expect("bcast job").clone();
                if let JobKind::Bcast { dst, size, p, tr, shf, .. } = job.kind {
                    let payload = self.payloads.get(&token).expect("payload").clone();
                    let rt = &mut self.tiles[t.0 as usize];
                    land_bcast(rt, dst, size, p, tr, shf, &payload, &self.cfg)?;
                    rt.bcast_delivered.insert(bc_id);
                    // release any issuer waiting on this broadcast
                    if let TState::WaitBcast { job: wj } = rt.state {
                        if wj == bc_id {
                            rt.state = TState::Ready;
                        }
                    }
                }
            }
            if done {
                retired.push(i);
            }
        }
        for &i in retired.iter().rev() {
            let bc = self.engine.remove(i);
            self.payloads.remove(&bc.payload_token);
            self.jobs.remove(&bc.id);
            self.progress();
        }
        Ok(())
    }

    fn event_totals(&self) -> EventTotals {
        let mut t = EventTotals::default();
        for rt in &self.tiles {
            t.microops += rt.tile.events.cram.microops;
            t.cram_reads += rt.tile.events.cram.reads;
            t.cram_writes += rt.tile.events.cram.writes;
            t.htree_hops += rt.tile.events.htree_hops;
            t.rf_accesses += rt.tile.events.rf_accesses;
        }
        t.noc_flit_hops = self.mesh.link_util.values().sum();
        t.dram_bits = self.controllers.iter().map(|c| c.granted_bits).sum();
        t
    }

    fn finish(mut self) -> RunOutput {
        for rt in &self.tiles {
            for (&m, &n) in &rt.histogram {
                *self.instr_histogram.entry(m.to_string()).or_insert(0) += n;
            }
        }
        let events = self.event_totals();
        let e = &self.cfg.energy;
        let compute_pj = events.microops as f64 * e.microop_pj
            + events.cram_reads as f64 * e.cram_read_pj
            + events.cram_writes as f64 * e.cram_write_pj
            + events.rf_accesses as f64 * e.rf_access_pj;
        let network_pj =
            events.htree_hops as f64 * e.htree_hop_pj + events.noc_flit_hops as f64 * e.noc_hop_pj;
        let dram_pj = events.dram_bits as f64 * e.dram_bit_pj;
        let stats = RunStats {
            total_cycles: self.cycle,
            tiles: self.tiles.iter().map(|t| t.stats).collect(),
            events,
            energy: Energy {
                compute_pj,
                dram_pj,
                network_pj,
                total_pj: compute_pj + dram_pj + network_pj,
            },
            instr_histogram: self.instr_histogram,
            link_util: self
                .mesh
                .link_util
                .iter()
                .map(|(l, &n)| (format!("{},{},{:?}", l.x, l.y, l.port), n))
                .collect(),
        };
        RunOutput {
            stats,
            image: self.image,
            flit_trace: self.opts.flit_trace.then_some(self.flit_trace),
            energy_trace: self.opts.energy_trace.then_some(self.energy_trace),
        }
    }
}

/// Packs element values into a dense little-endian bit stream, `p.bits`
/// per element (shuffle payloads).
fn pack_bits(values: &[i64], p: Precision) -> Vec<u8> {
    let total_bits = values.len() * p.bits as usize;
    let mut out = vec![0u8; total_bits.div_ceil(8)];
    let mut pos = 0usize;
    for &v in values {
        let u = (p.wrap(v) as u64) & if p.bits == 64 { u64::MAX } else { (1u64 << p.bits) - 1 };
        for b in 0..p.bits as usize {
            if u >> b & 1 == 1 {
                out[pos / 8] |= 1 << (pos % 8);
            }
            pos += 1;
        }
    }
    out
}

fn land_load(
    rt: &mut TileRt,
    kind: &LoadKind,
    payload: &Payload,
    cfg: &ChipConfig,
) -> Result<(), TileError> {
    match (kind, payload) {
        (LoadKind::Cram { dst, p, .. }, Payload::Elems(values, _)) => {
            rt.tile.land_elements(*dst, *p, values, cfg)
        }
        (LoadKind::Cram { dst, size, p, .. }, Payload::Raw(bytes)) => {
            rt.tile.land_raw(*dst, *p, *size, bytes, cfg)
        }
        (LoadKind::Rf { .. }, Payload::Raw(bytes)) => {
            rt.tile.rf_write_all(bytes);
            Ok(())
        }
        _ => unreachable!("payload kind matches load kind"),
    }
}

fn land_bcast(
    rt: &mut TileRt,
    dst: TileAddr,
    size: u64,
    p: Precision,
    _tr: bool,
    shf: u32,
    payload: &Payload,
    cfg: &ChipConfig,
) -> Result<(), TileError> {
    match payload {
        Payload::Bits(bytes, w) => {
            debug_assert!(shf > 0);
            rt.tile
                .shuffle_write(dst.wordline(cfg) as u32, bytes, *w, shf)
        }
        Payload::Elems(values, vp) => rt.tile.land_elements(dst, *vp, values, cfg),
        Payload::Raw(bytes) => rt.tile.land_raw(dst, p, size, bytes, cfg),
    }
}

/// (category charged, global action, whether real state advanced). Pure
/// waiting is not progress, so the deadlock detector can see through it.
type TileStepOut = (Option<Cat>, Option<Action>, bool);

/// One tile's cycle.
fn tile_step(
    rt: &mut TileRt,
    cfg: &ChipConfig,
    _cycle: u64,
) -> Result<TileStepOut, TileError> {
    match rt.state.clone() {
        TState::Halted => Ok((None, None, false)),
        TState::Busy { left, cat } => {
            if left == 0 {
                rt.state = TState::Ready;
                return tile_step(rt, cfg, _cycle);
            }
            rt.state = TState::Busy {
                left: left - 1,
                cat,
            };
            Ok((Some(cat), None, true))
        }
        TState::WaitDram { .. } | TState::WaitBcast { .. } => Ok((Some(Cat::Dram), None, false)),
        TState::WaitOutbox { cat } => {
            if rt.outbox.is_empty() {
                rt.state = TState::Ready;
                return tile_step(rt, cfg, _cycle);
            }
            Ok((Some(cat), None, false))
        }
        TState::WaitRecv { src } => {
            let took = try_take_rx(rt, src, cfg)?;
            Ok((Some(Cat::Network), None, took))
        }
        TState::WaitSignal { src, tag } => {
            let mut took = false;
            if let Some(n) = rt.recv_signals.get_mut(&(src, tag)) {
                if *n > 0 {
                    *n -= 1;
                    rt.state = TState::Ready;
                    took = true;
                }
            }
            Ok((Some(Cat::Network), None, took))
        }
        TState::Ready => issue(rt, cfg),
    }
}

/// Completes a pending tile_rx if its message arrived. The rx parameters
/// live in the instruction just before the current pc.
fn try_take_rx(rt: &mut TileRt, src: TileId, cfg: &ChipConfig) -> Result<bool, TileError> {
    let instr = rt.stream[rt.pc - 1].clone();
    let Instruction::TileRx { dst, size, p, .. } = instr else {
        unreachable!("WaitRecv only set by tile_rx");
    };
    let Some(queue) = rt.recv_data.get_mut(&src) else {
        return Ok(false);
    };
    let Some((payload, _)) = queue.pop_front() else {
        return Ok(false);
    };
    match payload {
        Payload::Elems(values, _) => {
            let n = (size as usize).min(values.len());
            rt.tile.land_elements(dst, p, &values[..n], cfg)?;
        }
        Payload::Raw(bytes) => rt.tile.land_raw(dst, p, size, &bytes, cfg)?,
        Payload::Bits(..) => unreachable!("point-to-point payloads are elements or raw"),
    }
    rt.state = TState::Ready;
    Ok(true)
}

fn issue(rt: &mut TileRt, cfg: &ChipConfig) -> Result<TileStepOut, TileError> {
    let Some(instr) = rt.next_instr().cloned() else {
        rt.state = TState::Halted;
        return Ok((None, None, true));
    };
    rt.pc += 1;
    *rt.histogram.entry(instr.mnemonic()).or_insert(0) += 1;
    match instr {
        Instruction::Halt => {
            rt.state = TState::Halted;
            Ok((None, None, true))
        }
        Instruction::Add { .. }
        | Instruction::Mult { .. }
        | Instruction::Logic { .. }
        | Instruction::Shift { .. }
        | Instruction::ReduceCram { .. }
        | Instruction::ReduceTile { .. }
        | Instruction::MulConst { .. }
        | Instruction::AddConst { .. }
        | Instruction::SetMask { .. }
        | Instruction::CramTxRx { .. }
        | Instruction::CramBcast { .. } => {
            let cycles = rt.tile.dispatch(&instr, cfg)?.max(1);
            if cycles > 1 {
                rt.state = TState::Busy {
                    left: cycles - 1,
                    cat: Cat::Compute,
                };
            }
            Ok((Some(Cat::Compute), None, true))
        }
        Instruction::Load { dst, dram, size, p, tr } => Ok((
            Some(Cat::Dram),
            Some(Action::SubmitLoad {
                tile: rt.id,
                kind: LoadKind::Cram { dst, size, p, tr },
                dram,
            }),
            true,
        )),
        Instruction::LoadRf { dram } => Ok((
            Some(Cat::Dram),
            Some(Action::SubmitLoad {
                tile: rt.id,
                kind: LoadKind::Rf { addr: dram },
                dram,
            }),
            true,
        )),
        Instruction::Store { dram, src, size, p, tr } => {
            let bytes = if tr {
                let values = rt.tile.extract_elements(src, p, size, cfg)?;
                encode_elements(&values, p)
            } else {
                rt.tile.extract_raw(src, p, size, cfg)?
            };
            Ok((
                Some(Cat::Dram),
                Some(Action::SubmitStore {
                    tile: rt.id,
                    addr: dram,
                    bytes: Arc::new(bytes),
                }),
                true,
            ))
        }
        Instruction::StoreRf { dram } => {
            let bytes = rt.tile.rf_image();
            Ok((
                Some(Cat::Dram),
                Some(Action::SubmitStore {
                    tile: rt.id,
                    addr: dram,
                    bytes: Arc::new(bytes),
                }),
                true,
            ))
        }
        Instruction::LoadBcast { dst, dram, size, p, tr, shf } => {
            let seq = rt.bcast_seq;
            rt.bcast_seq += 1;
            Ok((
                Some(Cat::Dram),
                Some(Action::SubmitLoadBcast {
                    tile: rt.id,
                    seq,
                    dst,
                    dram,
                    size,
                    p,
                    tr,
                    shf,
                }),
                true,
            ))
        }
        Instruction::TileTx { dst_tile, src, size, p } => {
            let values = rt.tile.extract_elements(src, p, size, cfg)?;
            let bits = size * p.bits as u64;
            Ok((
                Some(Cat::Network),
                Some(Action::SendData {
                    tile: rt.id,
                    dst_tile,
                    payload: Payload::Elems(Arc::new(values), p),
                    bits,
                }),
                true,
            ))
        }
        Instruction::TileRx { src_tile, .. } => {
            rt.state = TState::WaitRecv { src: src_tile };
            try_take_rx(rt, src_tile, cfg)?;
            Ok((Some(Cat::Network), None, true))
        }
        Instruction::TileBcast { dst, src, size, p, shf } => {
            let values = rt.tile.extract_elements(src, p, size, cfg)?;
            let bits = size * p.bits as u64;
            let payload = if shf > 0 {
                Payload::Bits(Arc::new(pack_bits(&values, p)), bits)
            } else {
                Payload::Elems(Arc::new(values), p)
            };
            Ok((
                Some(Cat::Network),
                Some(Action::LaunchTileBcast {
                    tile: rt.id,
                    dst,
                    p,
                    shf,
                    payload,
                    bits,
                }),
                true,
            ))
        }
        Instruction::Signal { dst_tile, tag } => Ok((
            Some(Cat::Network),
            Some(Action::SendSignal {
                tile: rt.id,
                dst_tile,
                tag,
            }),
            true,
        )),
        Instruction::Wait { src_tile, tag } => {
            if let Some(n) = rt.recv_signals.get_mut(&(src_tile, tag)) {
                if *n > 0 {
                    *n -= 1;
                    return Ok((Some(Cat::Network), None, true));
                }
            }
            rt.state = TState::WaitSignal {
                src: src_tile,
                tag,
            };
            Ok((Some(Cat::Network), None, true))
        }
    }
}
