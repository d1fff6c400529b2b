//! One tile: 256-way SIMD over its CRAMs, the static H-tree between them,
//! the cross-CRAM shift ring, the shuffle units, and the register file.
//!
//! The tile is a pure datapath: every operation applies its effects
//! eagerly and returns the cycle count it would occupy; the simulator
//! owns program counters and stalls.

use crate::config::ChipConfig;
use crate::cram::{
    exec_microop, seq_add, seq_add_const, seq_copy, seq_logic, seq_mul_const, seq_mult,
    seq_reduce_cram, seq_set_mask, seq_shift, CramArray, CramError, CramEvents, MicroOp, PeState,
};
use crate::isa::{Instruction, Precision, ShiftDir, TileAddr};
use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TileError {
    #[error(transparent)]
    Cram(#[from] CramError),
    #[error("rf index {0} out of range")]
    RfRange(usize),
    #[error("instruction {0} is not tile-scope")]
    NotTileScope(&'static str),
}

/// Event counts a tile accumulates; turned into energy by the accounting
/// layer.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TileEvents {
    pub cram: CramEvents,
    pub htree_hops: u64,
    pub rf_accesses: u64,
}

/// Static 4-ary circuit-switched tree over the tile's CRAMs. A route is a
/// list of directed links; configured routes are contention-free and the
/// configuration is only charged when the pattern changes.
#[derive(Debug, Clone)]
pub struct HTree {
    leaves: usize,
    last_pattern: Option<u64>,
}

/// One directed H-tree link: the edge between `child` at `level` and its
/// parent switch, in the given direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HLink {
    pub level: u8,
    pub child: u32,
    pub up: bool,
}

impl HTree {
    pub fn new(leaves: usize) -> Self {
        HTree {
            leaves,
            last_pattern: None,
        }
    }

    pub fn depth(&self) -> u32 {
        let mut d = 0;
        let mut n = self.leaves;
        while n > 1 {
            n = n.div_ceil(4);
            d += 1;
        }
        d
    }

    /// Directed links from leaf `src` up to the common ancestor and down
    /// to leaf `dst`.
    pub fn route(&self, src: usize, dst: usize) -> Vec<HLink> {
        if src == dst {
            return Vec::new();
        }
        let mut links = Vec::new();
        let (mut a, mut b) = (src as u32, dst as u32);
        let mut level = 0u8;
        while a != b {
            links.push(HLink {
                level,
                child: a,
                up: true,
            });
            links.push(HLink {
                level,
                child: b,
                up: false,
            });
            a /= 4;
            b /= 4;
            level += 1;
        }
        links
    }

    /// Links of a one-to-all broadcast from `src`.
    pub fn broadcast_links(&self, src: usize) -> Vec<HLink> {
        let mut links = Vec::new();
        let mut a = src as u32;
        let mut level = 0u8;
        let mut width = self.leaves as u32;
        while width > 1 {
            links.push(HLink {
                level,
                child: a,
                up: true,
            });
            for child in 0..width {
                if child != a {
                    links.push(HLink {
                        level,
                        child,
                        up: false,
                    });
                }
            }
            a /= 4;
            width = width.div_ceil(4);
            level += 1;
        }
        links
    }

    /// Registers a communication pattern; returns the 1-cycle
    /// configuration charge when it differs from the previous one, and
    /// asserts the pattern is contention-free.
    fn configure(&mut self, kind: &str, routes: &[Vec<HLink>]) -> u64 {
        let mut seen = HashSet::new();
        for r in routes {
            for l in r {
                assert!(seen.insert(*l), "H-tree link {l:?} driven by two sources");
            }
        }
        let mut h = DefaultHasher::new();
        kind.hash(&mut h);
        for r in routes {
            for l in r {
                (l.level, l.child, l.up).hash(&mut h);
            }
        }
        let pat = h.finish();
        if self.last_pattern == Some(pat) {
            0
        } else {
            self.last_pattern = Some(pat);
            1
        }
    }
}

pub struct Tile {
    pub crams: Vec<CramArray>,
    pub pes: Vec<PeState>,
    pub rf: Vec<u64>,
    pub htree: HTree,
    pub events: TileEvents,
    bitlines: usize,
    wordlines: usize,
    rf_width: usize,
}

impl Tile {
    pub fn new(cfg: &ChipConfig) -> Self {
        Tile {
            crams: (0..cfg.crams_per_tile)
                .map(|_| CramArray::new(cfg.wordlines, cfg.bitlines))
                .collect(),
            pes: (0..cfg.crams_per_tile)
                .map(|_| PeState::new(cfg.bitlines))
                .collect(),
            rf: vec![0; cfg.rf_regs],
            htree: HTree::new(cfg.crams_per_tile),
            events: TileEvents::default(),
            bitlines: cfg.bitlines,
            wordlines: cfg.wordlines,
            rf_width: cfg.rf_width,
        }
    }

    fn active_lanes(&self, size: u64, cram: usize) -> (u32, u32) {
        let start = (cram * self.bitlines) as u64;
        let end = ((cram + 1) * self.bitlines) as u64;
        let hi = size.clamp(start, end) - start;
        (0, hi as u32)
    }

    /// Lock-step execution of one schedule on every CRAM. Shift hops
    /// exchange edge bits over the ring (CRAM `c` feeds `c+1` upward).
    fn exec_simd(&mut self, sched: &[MicroOp], size: u64) -> Result<u64, TileError> {
        let n = self.crams.len();
        for op in sched {
            match op {
                MicroOp::ShiftHop { src, dir, .. } => {
                    let mut leaving = Vec::with_capacity(n);
                    for cram in &self.crams {
                        let row = cram.row_read(*src as u32)?;
                        let bit = match dir {
                            ShiftDir::Up => {
                                row[(self.bitlines - 1) / 64] >> ((self.bitlines - 1) % 64) & 1
                                    == 1
                            }
                            ShiftDir::Down => row[0] & 1 == 1,
                        };
                        leaving.push(bit);
                    }
                    for c in 0..n {
                        let ring_in = match dir {
                            ShiftDir::Up => leaving[(c + n - 1) % n],
                            ShiftDir::Down => leaving[(c + 1) % n],
                        };
                        exec_microop(
                            &mut self.crams[c],
                            &mut self.pes[c],
                            op,
                            (0, self.bitlines as u32),
                            ring_in,
                            &mut self.events.cram,
                        )?;
                    }
                }
                _ => {
                    for c in 0..n {
                        let active = self.active_lanes(size, c);
                        exec_microop(
                            &mut self.crams[c],
                            &mut self.pes[c],
                            op,
                            active,
                            false,
                            &mut self.events.cram,
                        )?;
                    }
                }
            }
        }
        Ok(sched.len() as u64)
    }

    /// Executes one compute- or intra-tile-scope instruction and returns
    /// its cycle cost. Transfer and synchronization instructions that leave
    /// the tile are the simulator's business.
    pub fn dispatch(&mut self, instr: &Instruction, cfg: &ChipConfig) -> Result<u64, TileError> {
        match instr {
            Instruction::Add {
                dst,
                pr,
                src1,
                p1,
                src2,
                p2,
                size,
                cen,
                cst,
                pred,
            } => self.exec_simd(
                &seq_add(*dst, *pr, *src1, *p1, *src2, *p2, *cen, *cst, *pred),
                *size,
            ),
            Instruction::Mult {
                dst,
                pr,
                src1,
                p1,
                src2,
                p2,
                size,
            } => self.exec_simd(&seq_mult(*dst, *pr, *src1, *p1, *src2, *p2), *size),
            Instruction::Logic {
                kind,
                dst,
                src1,
                src2,
                p,
                size,
                pred,
            } => self.exec_simd(&seq_logic(*kind, *dst, *src1, *src2, *p, *pred), *size),
            Instruction::Shift {
                dst,
                src,
                shamt,
                dir,
                p,
            } => {
                let sched = seq_shift(*dst, *src, *shamt, *dir, *p);
                self.exec_simd(&sched, u64::MAX)?;
                // the 1-wire ring serializes each boundary crossing
                Ok(sched.len() as u64 * self.crams.len() as u64)
            }
            Instruction::ReduceCram {
                dst,
                pr_dst,
                src,
                pr_src,
                levels,
                size,
            } => self.exec_simd(&seq_reduce_cram(*dst, *pr_dst, *src, *pr_src, *levels), *size),
            Instruction::ReduceTile {
                dst,
                pr_dst,
                src,
                pr_src,
                levels,
            } => self.reduce_tile(*dst, *pr_dst, *src, *pr_src, *levels),
            Instruction::MulConst {
                dst,
                pr,
                src,
                p_src,
                rf,
                p_const,
                size,
                pred,
            } => {
                let image = self.rf_read(*rf as usize)?;
                self.events.rf_accesses += 1;
                self.exec_simd(
                    &seq_mul_const(*dst, *pr, *src, *p_src, image, *p_const, *pred),
                    *size,
                )
            }
            Instruction::AddConst {
                dst,
                pr,
                src,
                p_src,
                rf,
                p_const,
                size,
                pred,
            } => {
                let image = self.rf_read(*rf as usize)?;
                self.events.rf_accesses += 1;
                self.exec_simd(
                    &seq_add_const(*dst, *pr, *src, *p_src, image, *p_const, *pred),
                    *size,
                )
            }
            Instruction::SetMask { src, size } => self.exec_simd(&seq_set_mask(*src), *size),
            Instruction::CramTxRx { dst, src, p } => self.cram_tx_rx(*dst, *src, *p, cfg),
            Instruction::CramBcast { dst, src, p } => self.cram_bcast(*dst, *src, *p, cfg),
            other => Err(TileError::NotTileScope(other.mnemonic())),
        }
    }

    /// Log-depth cross-CRAM reduction over the H-tree. Round `r` pairs
    /// CRAMs whose ids differ in bit `r-1`; the receiver adds. All CRAMs
    /// stay in lock-step: non-receivers run the same add on scratch.
    pub fn reduce_tile(
        &mut self,
        dst: u32,
        pr_dst: Precision,
        src: u32,
        pr_src: Precision,
        levels: u32,
    ) -> Result<u64, TileError> {
        if levels == 0 {
            return self.exec_simd(&seq_copy(dst, src, pr_src.bits as u32, crate::isa::Pred::None), u64::MAX);
        }
        let n = self.crams.len();
        let wmax = pr_dst.bits as u32;
        let strip = |i: u32| dst + i * wmax;
        let mut cycles = 0u64;
        let mut cur = src;
        for r in 1..=levels {
            let w = pr_src.bits as u32 + r - 1;
            // senders have bit r-1 set within a live group
            let pairs: Vec<(usize, usize)> = (0..n)
                .step_by(1 << r)
                .filter_map(|recv| {
                    let send = recv + (1 << (r - 1));
                    (send < n).then_some((send, recv))
                })
                .collect();
            let routes: Vec<_> = pairs
                .iter()
                .map(|&(s, d)| self.htree.route(s, d))
                .collect();
            cycles += self.htree.configure("reduce", &routes);
            for (&(send, recv), route) in pairs.iter().zip(&routes) {
                for t in 0..w {
                    let row = self.crams[send].row_read(cur + t)?;
                    self.crams[recv].row_write(strip(2) as u32 + t, &row)?;
                    self.events.cram.reads += 1;
                    self.events.cram.writes += 1;
                    self.events.htree_hops += route.len() as u64;
                }
            }
            cycles += w as u64; // 1 wordline per cycle, pipelined
            let np = strip((levels - 1 - (r - 1)) % 2);
            cycles += self.exec_simd(
                &seq_add(
                    np,
                    Precision::new((w + 1) as u8, pr_src.signed),
                    cur,
                    Precision::new(w as u8, pr_src.signed),
                    strip(2),
                    Precision::new(w as u8, pr_src.signed),
                    false,
                    false,
                    crate::isa::Pred::None,
                ),
                u64::MAX,
            )?;
            cur = np;
        }
        debug_assert_eq!(cur, dst);
        Ok(cycles)
    }

    /// Point-to-point CRAM transfer over the H-tree: `p.bits` wordlines at
    /// one per cycle plus a configuration cycle on a new pattern.
    pub fn cram_tx_rx(
        &mut self,
        dst: TileAddr,
        src: TileAddr,
        p: Precision,
        cfg: &ChipConfig,
    ) -> Result<u64, TileError> {
        let (sc, sw) = (src.cram(cfg), src.wordline(cfg) as u32);
        let (dc, dw) = (dst.cram(cfg), dst.wordline(cfg) as u32);
        let route = self.htree.route(sc, dc);
        let mut cycles = self.htree.configure("txrx", &[route.clone()]);
        for t in 0..p.bits as u32 {
            let row = self.crams[sc].row_read(sw + t)?;
            self.crams[dc].row_write(dw + t, &row)?;
            self.events.cram.reads += 1;
            self.events.cram.writes += 1;
            self.events.htree_hops += route.len() as u64;
        }
        cycles += p.bits as u64;
        Ok(cycles)
    }

    /// One CRAM drives every other CRAM's `dst` rows through the tree.
    pub fn cram_bcast(
        &mut self,
        dst: u32,
        src: TileAddr,
        p: Precision,
        cfg: &ChipConfig,
    ) -> Result<u64, TileError> {
        let (sc, sw) = (src.cram(cfg), src.wordline(cfg) as u32);
        let links = self.htree.broadcast_links(sc);
        let mut cycles = self.htree.configure("bcast", &[links.clone()]);
        for t in 0..p.bits as u32 {
            let row = self.crams[sc].row_read(sw + t)?;
            self.events.cram.reads += 1;
            for c in 0..self.crams.len() {
                if c != sc {
                    self.crams[c].row_write(dst + t, &row)?;
                    self.events.cram.writes += 1;
                }
            }
            self.events.htree_hops += links.len() as u64;
        }
        cycles += p.bits as u64;
        Ok(cycles)
    }

    // ------------------------------------------------------------- DMA

    /// Lands `values` column-wise (transposed layout): element `e` goes to
    /// bitline `e % bitlines` of CRAM `base + e / bitlines`.
    pub fn land_elements(
        &mut self,
        dst: TileAddr,
        p: Precision,
        values: &[i64],
        cfg: &ChipConfig,
    ) -> Result<(), TileError> {
        let base = dst.cram(cfg);
        let wl = dst.wordline(cfg) as u32;
        for (chunk_idx, chunk) in values.chunks(self.bitlines).enumerate() {
            let rows = crate::memory::transpose_batch(chunk, p, self.bitlines);
            let cram = &mut self.crams[base + chunk_idx];
            for (t, row) in rows.iter().enumerate() {
                let old = cram.row_read(wl + t as u32)?;
                let mut merged = old;
                merge_lanes(&mut merged, row, chunk.len());
                cram.row_write(wl + t as u32, &merged)?;
                self.events.cram.writes += 1;
            }
        }
        Ok(())
    }

    /// Reads `size` elements back out of the transposed layout.
    pub fn extract_elements(
        &self,
        src: TileAddr,
        p: Precision,
        size: u64,
        cfg: &ChipConfig,
    ) -> Result<Vec<i64>, TileError> {
        let base = src.cram(cfg);
        let wl = src.wordline(cfg) as u32;
        let mut out = Vec::with_capacity(size as usize);
        for e in 0..size as usize {
            let cram = &self.crams[base + e / self.bitlines];
            out.push(cram.column_read((e % self.bitlines) as u32, wl, p)?);
        }
        Ok(out)
    }

    /// Raw (pre-transposed) landing: each destination CRAM receives
    /// `p.bits` rows of `bitlines` bits straight from the byte stream.
    pub fn land_raw(
        &mut self,
        dst: TileAddr,
        p: Precision,
        size: u64,
        bytes: &[u8],
        cfg: &ChipConfig,
    ) -> Result<(), TileError> {
        let base = dst.cram(cfg);
        let wl = dst.wordline(cfg) as u32;
        let chunks = (size as usize).div_ceil(self.bitlines);
        let row_bytes = self.bitlines / 8;
        let mut off = 0usize;
        for c in 0..chunks {
            for t in 0..p.bits as u32 {
                let mut row = vec![0u64; self.bitlines.div_ceil(64)];
                for i in 0..row_bytes {
                    let byte = bytes.get(off + i).copied().unwrap_or(0) as u64;
                    row[i / 8] |= byte << (8 * (i % 8));
                }
                off += row_bytes;
                self.crams[base + c].row_write(wl + t, &row)?;
                self.events.cram.writes += 1;
            }
        }
        Ok(())
    }

    pub fn extract_raw(
        &self,
        src: TileAddr,
        p: Precision,
        size: u64,
        cfg: &ChipConfig,
    ) -> Result<Vec<u8>, TileError> {
        let base = src.cram(cfg);
        let wl = src.wordline(cfg) as u32;
        let chunks = (size as usize).div_ceil(self.bitlines);
        let row_bytes = self.bitlines / 8;
        let mut out = Vec::new();
        for c in 0..chunks {
            for t in 0..p.bits as u32 {
                let row = self.crams[base + c].row_read(wl + t)?;
                for i in 0..row_bytes {
                    out.push((row[i / 8] >> (8 * (i % 8))) as u8);
                }
            }
        }
        Ok(out)
    }

    /// Shuffle distribution: consecutive `shf`-bit chunks of the payload
    /// land one per CRAM, each chunk written transposed and replicated
    /// across all bitlines.
    pub fn shuffle_write(
        &mut self,
        dst_wl: u32,
        payload: &[u8],
        w_bits: u64,
        shf: u32,
    ) -> Result<(), TileError> {
        assert!(w_bits % shf as u64 == 0, "validated upstream");
        let chunks = (w_bits / shf as u64) as usize;
        let words = self.bitlines.div_ceil(64);
        for k in 0..chunks {
            for t in 0..shf {
                let bit_idx = k as u64 * shf as u64 + t as u64;
                let bit = payload[(bit_idx / 8) as usize] >> (bit_idx % 8) & 1 == 1;
                let mut row = vec![if bit { u64::MAX } else { 0 }; words];
                for (w, m) in row.iter_mut().enumerate() {
                    let used = self.bitlines - (w * 64).min(self.bitlines);
                    if used < 64 {
                        *m &= (1u64 << used) - 1;
                    }
                }
                self.crams[k].row_write(dst_wl + t, &row)?;
                self.events.cram.writes += 1;
            }
        }
        Ok(())
    }

    // -------------------------------------------------------------- RF

    pub fn rf_read(&self, idx: usize) -> Result<u64, TileError> {
        self.rf.get(idx).copied().ok_or(TileError::RfRange(idx))
    }

    /// Parallel write of the whole register file from a byte image
    /// (flip-flop RF, no port limit).
    pub fn rf_write_all(&mut self, bytes: &[u8]) {
        let reg_bytes = self.rf_width / 8;
        for (i, reg) in self.rf.iter_mut().enumerate() {
            let mut v = 0u64;
            for b in 0..reg_bytes {
                v |= (bytes.get(i * reg_bytes + b).copied().unwrap_or(0) as u64) << (8 * b);
            }
            *reg = v;
            self.events.rf_accesses += 1;
        }
    }

    pub fn rf_image(&mut self) -> Vec<u8> {
        let reg_bytes = self.rf_width / 8;
        let mut out = Vec::with_capacity(self.rf.len() * reg_bytes);
        for &reg in &self.rf {
            self.events.rf_accesses += 1;
            for b in 0..reg_bytes {
                out.push((reg >> (8 * b)) as u8);
            }
        }
        out
    }

    pub fn wordlines(&self) -> usize {
        self.wordlines
    }

    pub fn bitlines(&self) -> usize {
        self.bitlines
    }
}

fn merge_lanes(old: &mut [u64], new: &[u64], lanes: usize) {
    for (w, slot) in old.iter_mut().enumerate() {
        let lo = w * 64;
        let m = if lanes >= lo + 64 {
            u64::MAX
        } else if lanes <= lo {
            0
        } else {
            (1u64 << (lanes - lo)) - 1
        };
        *slot = (*slot & !m) | (new.get(w).copied().unwrap_or(0) & m);
    }
}
