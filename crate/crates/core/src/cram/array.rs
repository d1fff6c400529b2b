//! One compute-enabled SRAM: a transposed bit matrix plus the per-bitline
//! PE latches, and the single-cycle micro-op executor.
//!
//! Element values live column-wise: bit `w` of the element in bitline `b`
//! is stored at row `base + w`, column `b`. Rows are packed 64 bitlines to
//! a word so one micro-op is a handful of word-wide logic ops.

use crate::isa::{Pred, Precision, ShiftDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CramMode {
    Compute,
    Memory,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CramError {
    #[error("wordline {wl} out of range ({limit} wordlines)")]
    WordlineRange { wl: u32, limit: usize },
    #[error("bitline {bl} out of range ({limit} bitlines)")]
    BitlineRange { bl: u32, limit: usize },
    #[error("micro-op issued while CRAM is in memory mode")]
    MemoryMode,
}

/// Counts of the events one CRAM generates; the accounting layer turns
/// these into energy.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CramEvents {
    pub microops: u64,
    pub reads: u64,
    pub writes: u64,
}

impl CramEvents {
    pub fn add(&mut self, other: &CramEvents) {
        self.microops += other.microops;
        self.reads += other.reads;
        self.writes += other.writes;
    }
}

/// A 3-input lookup table over (bit_a, bit_b, carry) producing the result
/// bit and the next carry. Minterm `i` uses bit 0 of `i` for a, bit 1 for
/// b, bit 2 for carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeFunc {
    pub res: u8,
    pub carry: u8,
}

/// Build a PE function from its per-bit semantics.
pub fn pe_func(f: impl Fn(bool, bool, bool) -> (bool, bool)) -> PeFunc {
    let mut res = 0u8;
    let mut carry = 0u8;
    for i in 0..8u8 {
        let (a, b, c) = (i & 1 != 0, i & 2 != 0, i & 4 != 0);
        let (r, k) = f(a, b, c);
        if r {
            res |= 1 << i;
        }
        if k {
            carry |= 1 << i;
        }
    }
    PeFunc { res, carry }
}

fn lut3(tt: u8, a: u64, b: u64, c: u64) -> u64 {
    let mut out = 0u64;
    for i in 0..8 {
        if tt >> i & 1 == 1 {
            out |= (if i & 1 != 0 { a } else { !a })
                & (if i & 2 != 0 { b } else { !b })
                & (if i & 4 != 0 { c } else { !c });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatchUpdate {
    None,
    SetMask,
    SetCarry,
}

/// One single-cycle CRAM command.
#[derive(Debug, Clone, PartialEq)]
pub enum MicroOp {
    Pe {
        read_a: Option<u16>,
        read_b: Option<u16>,
        write: Option<u16>,
        func: PeFunc,
        latch: LatchUpdate,
        pred: Pred,
    },
    /// Move row `src` one bitline step into row `dst`; the bit leaving the
    /// edge is handed to the ring and the ring bit enters the far edge.
    ShiftHop { src: u16, dst: u16, dir: ShiftDir },
    /// Controller bulk clear of a row range (zero-constant multiply).
    ClearRows { start: u16, rows: u16 },
}

/// Per-bitline carry (C) and mask (M) latches. They persist across
/// micro-ops until overwritten.
#[derive(Debug, Clone, PartialEq)]
pub struct PeState {
    pub carry: Vec<u64>,
    pub mask: Vec<u64>,
}

impl PeState {
    pub fn new(bitlines: usize) -> Self {
        let words = bitlines.div_ceil(64);
        PeState {
            carry: vec![0; words],
            mask: vec![0; words],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CramArray {
    wordlines: usize,
    bitlines: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    pub mode: CramMode,
}

impl CramArray {
    pub fn new(wordlines: usize, bitlines: usize) -> Self {
        let words_per_row = bitlines.div_ceil(64);
        CramArray {
            wordlines,
            bitlines,
            words_per_row,
            bits: vec![0; wordlines * words_per_row],
            mode: CramMode::Compute,
        }
    }

    pub fn wordlines(&self) -> usize {
        self.wordlines
    }

    pub fn bitlines(&self) -> usize {
        self.bitlines
    }

    fn row(&self, wl: usize) -> &[u64] {
        &self.bits[wl * self.words_per_row..(wl + 1) * self.words_per_row]
    }

    fn row_mut(&mut self, wl: usize) -> &mut [u64] {
        &mut self.bits[wl * self.words_per_row..(wl + 1) * self.words_per_row]
    }

    fn check_wl(&self, wl: u32) -> Result<usize, CramError> {
        if (wl as usize) < self.wordlines {
            Ok(wl as usize)
        } else {
            Err(CramError::WordlineRange {
                wl,
                limit: self.wordlines,
            })
        }
    }

    /// Mask of bitlines that exist (for the partial last word of a row).
    fn tail_mask(&self, word: usize) -> u64 {
        let used = self.bitlines - word * 64;
        if used >= 64 {
            u64::MAX
        } else {
            (1u64 << used) - 1
        }
    }

    pub fn get_bit(&self, wl: u32, bl: u32) -> Result<bool, CramError> {
        let wl = self.check_wl(wl)?;
        if bl as usize >= self.bitlines {
            return Err(CramError::BitlineRange {
                bl,
                limit: self.bitlines,
            });
        }
        Ok(self.row(wl)[bl as usize / 64] >> (bl % 64) & 1 == 1)
    }

    pub fn set_bit(&mut self, wl: u32, bl: u32, v: bool) -> Result<(), CramError> {
        let wl = self.check_wl(wl)?;
        if bl as usize >= self.bitlines {
            return Err(CramError::BitlineRange {
                bl,
                limit: self.bitlines,
            });
        }
        let w = &mut self.row_mut(wl)[bl as usize / 64];
        if v {
            *w |= 1 << (bl % 64);
        } else {
            *w &= !(1 << (bl % 64));
        }
        Ok(())
    }

    /// Memory-mode style whole-row read (also used by the debug dump and
    /// the DMA paths).
    pub fn row_read(&self, wl: u32) -> Result<Vec<u64>, CramError> {
        let wl = self.check_wl(wl)?;
        Ok(self.row(wl).to_vec())
    }

    pub fn row_write(&mut self, wl: u32, data: &[u64]) -> Result<(), CramError> {
        let wl = self.check_wl(wl)?;
        let words = self.words_per_row;
        for w in 0..words {
            let m = self.tail_mask(w);
            self.row_mut(wl)[w] = data.get(w).copied().unwrap_or(0) & m;
        }
        Ok(())
    }

    /// Transposed element read: the value whose bits sit at rows
    /// `base..base+p.bits` of column `bl`, sign-extended per `p`.
    pub fn column_read(&self, bl: u32, base: u32, p: Precision) -> Result<i64, CramError> {
        let mut v: i64 = 0;
        for t in 0..p.bits as u32 {
            if self.get_bit(base + t, bl)? {
                v |= 1i64 << t;
            }
        }
        Ok(p.wrap(v))
    }

    /// Transposed element write; the value is wrapped to `p` first.
    pub fn column_write(&mut self, bl: u32, base: u32, p: Precision, v: i64) -> Result<(), CramError> {
        let v = p.wrap(v);
        for t in 0..p.bits as u32 {
            self.set_bit(base + t, bl, v >> t & 1 == 1)?;
        }
        Ok(())
    }

    /// Text grid of the bit matrix, row 0 first, for fixtures.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for wl in 0..self.wordlines {
            for bl in 0..self.bitlines {
                s.push(if self.get_bit(wl as u32, bl as u32).unwrap() {
                    '1'
                } else {
                    '0'
                });
            }
            s.push('\n');
        }
        s
    }
}

/// Lane range `[start, end)` a micro-op is allowed to touch. Lanes outside
/// it neither compute nor write.
pub type ActiveLanes = (u32, u32);

fn lane_mask(words: usize, tail: impl Fn(usize) -> u64, active: ActiveLanes) -> Vec<u64> {
    let (start, end) = active;
    (0..words)
        .map(|w| {
            let lo = (w as u64) * 64;
            let hi = lo + 64;
            let s = (start as u64).clamp(lo, hi) - lo;
            let e = (end as u64).clamp(lo, hi) - lo;
            let m = if e <= s {
                0
            } else if e - s == 64 {
                u64::MAX
            } else {
                ((1u64 << (e - s)) - 1) << s
            };
            m & tail(w)
        })
        .collect()
}

/// Executes one micro-op against one CRAM. Exactly one cycle is charged.
/// Shift hops exchange edge bits through `ring_in`; the departing edge bit
/// is returned so the caller can complete the ring.
pub fn exec_microop(
    cram: &mut CramArray,
    pe: &mut PeState,
    op: &MicroOp,
    active: ActiveLanes,
    ring_in: bool,
    events: &mut CramEvents,
) -> Result<Option<bool>, CramError> {
    if cram.mode != CramMode::Compute {
        return Err(CramError::MemoryMode);
    }
    events.microops += 1;
    let words = cram.words_per_row;
    match op {
        MicroOp::Pe {
            read_a,
            read_b,
            write,
            func,
            latch,
            pred,
        } => {
            let zero = vec![0u64; words];
            let a = match read_a {
                Some(wl) => cram.row_read(*wl as u32)?,
                None => zero.clone(),
            };
            let b = match read_b {
                Some(wl) => cram.row_read(*wl as u32)?,
                None => zero,
            };
            events.reads += read_a.is_some() as u64 + read_b.is_some() as u64;
            if let Some(wl) = write {
                cram.check_wl(*wl as u32)?;
                events.writes += 1;
            }
            let mut gate = lane_mask(words, |w| cram.tail_mask(w), active);
            match pred {
                Pred::None => {}
                Pred::Mask => {
                    for (g, m) in gate.iter_mut().zip(&pe.mask) {
                        *g &= m;
                    }
                }
                Pred::Carry => {
                    for (g, m) in gate.iter_mut().zip(&pe.carry) {
                        *g &= m;
                    }
                }
            }
            let mut res = vec![0u64; words];
            let mut car = vec![0u64; words];
            for w in 0..words {
                res[w] = lut3(func.res, a[w], b[w], pe.carry[w]);
                car[w] = lut3(func.carry, a[w], b[w], pe.carry[w]);
            }
            if let Some(wl) = write {
                let wl = *wl as usize;
                for w in 0..words {
                    let old = cram.row(wl)[w];
                    cram.row_mut(wl)[w] = (old & !gate[w]) | (res[w] & gate[w]);
                }
            }
            match latch {
                LatchUpdate::None => {}
                LatchUpdate::SetMask => {
                    for w in 0..words {
                        pe.mask[w] = (pe.mask[w] & !gate[w]) | (res[w] & gate[w]);
                    }
                }
                LatchUpdate::SetCarry => {
                    for w in 0..words {
                        pe.carry[w] = (pe.carry[w] & !gate[w]) | (car[w] & gate[w]);
                    }
                }
            }
            Ok(None)
        }
        MicroOp::ShiftHop { src, dst, dir } => {
            let row = cram.row_read(*src as u32)?;
            cram.check_wl(*dst as u32)?;
            events.reads += 1;
            events.writes += 1;
            let n = cram.bitlines;
            let mut out = vec![0u64; words];
            let leaving;
            match dir {
                ShiftDir::Up => {
                    // toward higher bitline index: new[i] = old[i-1]
                    leaving = row[(n - 1) / 64] >> ((n - 1) % 64) & 1 == 1;
                    let mut carry_bit = ring_in as u64;
                    for w in 0..words {
                        out[w] = (row[w] << 1) | carry_bit;
                        carry_bit = row[w] >> 63 & 1;
                    }
                }
                ShiftDir::Down => {
                    // toward lower bitline index: new[i] = old[i+1]
                    leaving = row[0] & 1 == 1;
                    for w in 0..words {
                        let incoming = if w + 1 < words {
                            row[w + 1] & 1
                        } else {
                            ring_in as u64
                        };
                        out[w] = (row[w] >> 1) | (incoming << 63);
                    }
                    if n % 64 != 0 {
                        // ring bit actually enters at bitline n-1
                        let top_word = (n - 1) / 64;
                        out[top_word] &= !(1u64 << ((n - 1) % 64));
                        out[top_word] |= (ring_in as u64) << ((n - 1) % 64);
                    }
                }
            }
            for w in 0..words {
                out[w] &= cram.tail_mask(w);
            }
            let dst = *dst as usize;
            cram.row_mut(dst).copy_from_slice(&out);
            Ok(Some(leaving))
        }
        MicroOp::ClearRows { start, rows } => {
            for r in 0..*rows {
                cram.check_wl((*start + r) as u32)?;
                events.writes += 1;
            }
            for r in 0..*rows {
                cram.row_mut((*start + r) as usize).fill(0);
            }
            Ok(None)
        }
    }
}

/// Runs a whole schedule against a single CRAM, closing the shift ring on
/// itself. This is the standalone harness the tile module generalizes.
pub fn exec_schedule_self_ring(
    cram: &mut CramArray,
    pe: &mut PeState,
    schedule: &[MicroOp],
    active: ActiveLanes,
    events: &mut CramEvents,
) -> Result<u64, CramError> {
    for op in schedule {
        // self-ring: the departing bit re-enters this CRAM
        let ring_in = match op {
            MicroOp::ShiftHop { src, dir, .. } => {
                let row = cram.row_read(*src as u32)?;
                match dir {
                    ShiftDir::Up => row[(cram.bitlines - 1) / 64] >> ((cram.bitlines - 1) % 64) & 1 == 1,
                    ShiftDir::Down => row[0] & 1 == 1,
                }
            }
            _ => false,
        };
        exec_microop(cram, pe, op, active, ring_in, events)?;
    }
    Ok(schedule.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_adder() -> PeFunc {
        pe_func(|a, b, c| (a ^ b ^ c, (a & b) | (a & c) | (b & c)))
    }

    #[test]
    fn one_bit_full_adder_truth_table() {
        let mut cram = CramArray::new(8, 64);
        let mut pe = PeState::new(64);
        let mut ev = CramEvents::default();
        // operand bits (1,1), carry 0 -> sum 0, carry 1
        cram.set_bit(0, 5, true).unwrap();
        cram.set_bit(1, 5, true).unwrap();
        let op = MicroOp::Pe {
            read_a: Some(0),
            read_b: Some(1),
            write: Some(2),
            func: full_adder(),
            latch: LatchUpdate::SetCarry,
            pred: Pred::None,
        };
        exec_microop(&mut cram, &mut pe, &op, (0, 64), false, &mut ev).unwrap();
        assert!(!cram.get_bit(2, 5).unwrap());
        assert_eq!(pe.carry[0] >> 5 & 1, 1);
        assert_eq!(ev.microops, 1);
        assert_eq!(ev.reads, 2);
        assert_eq!(ev.writes, 1);
    }

    #[test]
    fn and_microop_repeated_over_columns() {
        // AND of 4-bit columns built from 4 micro-ops with incrementing rows
        let mut cram = CramArray::new(16, 64);
        let mut pe = PeState::new(64);
        let mut ev = CramEvents::default();
        let p = Precision::unsigned(4);
        for bl in 0..64 {
            cram.column_write(bl, 0, p, (bl as i64) % 16).unwrap();
            cram.column_write(bl, 4, p, (bl as i64 * 7) % 16).unwrap();
        }
        let and = pe_func(|a, b, _| (a & b, false));
        for t in 0..4 {
            let op = MicroOp::Pe {
                read_a: Some(t),
                read_b: Some(4 + t),
                write: Some(8 + t),
                func: and,
                latch: LatchUpdate::None,
                pred: Pred::None,
            };
            exec_microop(&mut cram, &mut pe, &op, (0, 64), false, &mut ev).unwrap();
        }
        for bl in 0..64 {
            let expect = ((bl as i64) % 16) & ((bl as i64 * 7) % 16);
            assert_eq!(cram.column_read(bl, 8, p).unwrap(), expect);
        }
    }

    #[test]
    fn predicated_off_bitline_is_untouched() {
        let mut cram = CramArray::new(8, 64);
        let mut pe = PeState::new(64);
        let mut ev = CramEvents::default();
        cram.set_bit(0, 7, true).unwrap();
        cram.set_bit(0, 8, true).unwrap();
        // mask on for bitline 8 only
        pe.mask[0] = 1 << 8;
        let copy = pe_func(|a, _, _| (a, false));
        let op = MicroOp::Pe {
            read_a: Some(0),
            read_b: None,
            write: Some(1),
            func: copy,
            latch: LatchUpdate::None,
            pred: Pred::Mask,
        };
        exec_microop(&mut cram, &mut pe, &op, (0, 64), false, &mut ev).unwrap();
        assert!(!cram.get_bit(1, 7).unwrap(), "masked-off lane must not write");
        assert!(cram.get_bit(1, 8).unwrap());
    }

    #[test]
    fn column_roundtrip_and_bounds() {
        let mut cram = CramArray::new(16, 64);
        let p = Precision::signed(7);
        cram.column_write(3, 2, p, -45).unwrap();
        assert_eq!(cram.column_read(3, 2, p).unwrap(), -45);
        assert!(cram.column_read(3, 10, Precision::signed(8)).is_err());
        assert!(cram.column_write(64, 0, p, 1).is_err());
    }

    #[test]
    fn memory_mode_rejects_microops() {
        let mut cram = CramArray::new(8, 64);
        let mut pe = PeState::new(64);
        let mut ev = CramEvents::default();
        cram.mode = CramMode::Memory;
        let op = MicroOp::ClearRows { start: 0, rows: 1 };
        assert_eq!(
            exec_microop(&mut cram, &mut pe, &op, (0, 64), false, &mut ev),
            Err(CramError::MemoryMode)
        );
    }

    #[test]
    fn shift_hop_moves_rows_with_ring() {
        let mut cram = CramArray::new(4, 64);
        let mut pe = PeState::new(64);
        let mut ev = CramEvents::default();
        let p = Precision::unsigned(4);
        for bl in 0..64 {
            cram.column_write(bl, 0, p, bl as i64 % 16).unwrap();
        }
        // one hop up of all 4 rows, self-ring
        let mut sched = Vec::new();
        for t in 0..4 {
            sched.push(MicroOp::ShiftHop {
                src: t,
                dst: t,
                dir: ShiftDir::Up,
            });
        }
        exec_schedule_self_ring(&mut cram, &mut pe, &sched, (0, 64), &mut ev).unwrap();
        for bl in 0..64u32 {
            let from = (bl + 64 - 1) % 64;
            assert_eq!(
                cram.column_read(bl, 0, p).unwrap(),
                from as i64 % 16,
                "bitline {bl}"
            );
        }
    }
}
