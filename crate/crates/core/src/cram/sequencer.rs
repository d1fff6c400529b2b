//! Multi-cycle bit-serial sequencers: each expands one compute instruction
//! into the exact micro-op schedule the instruction controller would feed
//! a CRAM, one micro-op per cycle.
//!
//! Schedules depend only on addresses, precisions, flags and (for constant
//! operations) the register value, never on CRAM data, so cycle counts are
//! data-independent by construction: `cycles = schedule.len()`.
//!
//! Cycle model:
//! * `add`: `pr.bits` (+1 with `cst`)
//! * `mult`: `p1.bits * (p2.bits + 2)`, plus a `p1.bits + 2` correction
//!   pass when the multiplicand is signed
//! * `mul_const`: `popcount * (p_src.bits + 2) + 1`, plus zero-fill cycles
//!   for positions no partial product covers, plus a `p_const.bits + 2`
//!   correction pass when the source is signed
//! * `logic`: `p.bits`; `shift`: `p.bits * shamt`
//! * `reduce_cram`: sum over rounds of shift + add at the growing width

use super::array::{pe_func, LatchUpdate, MicroOp, PeFunc};
use crate::isa::{LogicKind, Pred, Precision, ShiftDir};

fn copy_a() -> PeFunc {
    pe_func(|a, _, _| (a, false))
}

fn zero_func() -> PeFunc {
    pe_func(|_, _, _| (false, false))
}

/// A cycle that reads and writes nothing; charged like any micro-op.
fn charged_nop() -> MicroOp {
    MicroOp::Pe {
        read_a: None,
        read_b: None,
        write: None,
        func: zero_func(),
        latch: LatchUpdate::None,
        pred: Pred::None,
    }
}

fn zero_write(dst: u32, pred: Pred) -> MicroOp {
    MicroOp::Pe {
        read_a: None,
        read_b: None,
        write: Some(dst as u16),
        func: zero_func(),
        latch: LatchUpdate::None,
        pred,
    }
}

/// Where one operand bit comes from at a given significance.
#[derive(Debug, Clone, Copy, PartialEq)]
enum BitSrc {
    Row(u32),
    Const(bool),
}

/// Bit `t` of the operand at `base` with precision `p`: a stored row below
/// `p.bits`, the re-read sign row above it when signed, constant 0 when
/// unsigned.
fn operand_bit(base: u32, p: Precision, t: u32) -> BitSrc {
    if t < p.bits as u32 {
        BitSrc::Row(base + t)
    } else if p.signed {
        BitSrc::Row(base + p.bits as u32 - 1)
    } else {
        BitSrc::Const(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CarryIn {
    Zero,
    One,
    Latch,
}

/// One full-adder step `dst_bit = ea + eb + carry`, where either input may
/// be a stored row or a constant and `eb` may be inverted (subtraction).
fn adder_op(
    a: BitSrc,
    b: BitSrc,
    invert_b: bool,
    carry: CarryIn,
    write: Option<u32>,
    pred: Pred,
) -> MicroOp {
    let (read_a, ca) = match a {
        BitSrc::Row(r) => (Some(r as u16), None),
        BitSrc::Const(v) => (None, Some(v)),
    };
    let (read_b, cb) = match b {
        BitSrc::Row(r) => (Some(r as u16), None),
        BitSrc::Const(v) => (None, Some(v)),
    };
    let func = pe_func(move |abit, bbit, cbit| {
        let ea = ca.unwrap_or(abit);
        let eb = cb.unwrap_or(bbit) ^ invert_b;
        let ec = match carry {
            CarryIn::Zero => false,
            CarryIn::One => true,
            CarryIn::Latch => cbit,
        };
        (ea ^ eb ^ ec, (ea & eb) | (ea & ec) | (eb & ec))
    });
    MicroOp::Pe {
        read_a,
        read_b,
        write: write.map(|w| w as u16),
        func,
        latch: LatchUpdate::SetCarry,
        pred,
    }
}

pub fn seq_set_mask(src: u32) -> Vec<MicroOp> {
    vec![MicroOp::Pe {
        read_a: Some(src as u16),
        read_b: None,
        write: None,
        func: copy_a(),
        latch: LatchUpdate::SetMask,
        pred: Pred::None,
    }]
}

/// Plain row-by-row copy, `rows` cycles.
pub fn seq_copy(dst: u32, src: u32, rows: u32, pred: Pred) -> Vec<MicroOp> {
    (0..rows)
        .map(|t| MicroOp::Pe {
            read_a: Some((src + t) as u16),
            read_b: None,
            write: Some((dst + t) as u16),
            func: copy_a(),
            latch: LatchUpdate::None,
            pred,
        })
        .collect()
}

/// Column-wise `dst = src1 + src2` under two's complement, truncated or
/// extended to `pr`. With `cen` the first step consumes the stored carry;
/// with `cst` the final carry is written to the wordline above the result.
pub fn seq_add(
    dst: u32,
    pr: Precision,
    src1: u32,
    p1: Precision,
    src2: u32,
    p2: Precision,
    cen: bool,
    cst: bool,
    pred: Pred,
) -> Vec<MicroOp> {
    let mut sched = Vec::with_capacity(pr.bits as usize + 1);
    for t in 0..pr.bits as u32 {
        let carry = if t == 0 {
            if cen {
                CarryIn::Latch
            } else {
                CarryIn::Zero
            }
        } else {
            CarryIn::Latch
        };
        sched.push(adder_op(
            operand_bit(src1, p1, t),
            operand_bit(src2, p2, t),
            false,
            carry,
            Some(dst + t),
            pred,
        ));
    }
    if cst {
        sched.push(MicroOp::Pe {
            read_a: None,
            read_b: None,
            write: Some((dst + pr.bits as u32) as u16),
            func: pe_func(|_, _, c| (c, c)),
            latch: LatchUpdate::None,
            pred,
        });
    }
    sched
}

pub fn add_cycles(pr: Precision, cst: bool) -> u64 {
    pr.bits as u64 + cst as u64
}

pub fn seq_logic(
    kind: LogicKind,
    dst: u32,
    src1: u32,
    src2: u32,
    p: Precision,
    pred: Pred,
) -> Vec<MicroOp> {
    let func = match kind {
        LogicKind::And => pe_func(|a, b, _| (a & b, false)),
        LogicKind::Or => pe_func(|a, b, _| (a | b, false)),
        LogicKind::Xor => pe_func(|a, b, _| (a ^ b, false)),
    };
    (0..p.bits as u32)
        .map(|t| MicroOp::Pe {
            read_a: Some((src1 + t) as u16),
            read_b: Some((src2 + t) as u16),
            write: Some((dst + t) as u16),
            func,
            latch: LatchUpdate::None,
            pred,
        })
        .collect()
}

/// Moves every element `shamt` bitline hops; one wordline traverses one
/// hop per cycle. Bits leaving the edge surface to the caller's ring.
pub fn seq_shift(dst: u32, src: u32, shamt: u32, dir: ShiftDir, p: Precision) -> Vec<MicroOp> {
    let mut sched = Vec::new();
    for hop in 0..shamt {
        for t in 0..p.bits as u32 {
            sched.push(MicroOp::ShiftHop {
                src: (if hop == 0 { src + t } else { dst + t }) as u16,
                dst: (dst + t) as u16,
                dir,
            });
        }
    }
    sched
}

pub fn shift_cycles(p: Precision, shamt: u32) -> u64 {
    p.bits as u64 * shamt as u64
}

/// Shift-add multiply: `dst = src1 * src2 mod 2^pr.bits`. `src1` is the
/// multiplier (one predicated add per bit), `src2` the multiplicand.
///
/// Signed multipliers fold their weight correction into the last round as
/// a subtraction; a signed multiplicand costs one extra correction pass
/// (`p1.bits + 2` cycles) that subtracts the multiplier at offset
/// `p2.bits`, predicated on the multiplicand's sign bits.
pub fn seq_mult(
    dst: u32,
    pr: Precision,
    src1: u32,
    p1: Precision,
    src2: u32,
    p2: Precision,
) -> Vec<MicroOp> {
    assert!(
        pr.bits as u32 <= p1.bits as u32 + p2.bits as u32,
        "mult result wider than product"
    );
    let mut sched = Vec::new();
    let nb1 = p1.bits as u32;
    let nb2 = p2.bits as u32;
    let prb = pr.bits as u32;
    for j in 0..nb1 {
        sched.extend(seq_set_mask(src1 + j));
        let sub = p1.signed && j == nb1 - 1;
        for t in 0..=nb2 {
            let abs = j + t;
            if abs >= prb {
                sched.push(charged_nop());
                continue;
            }
            if j == 0 {
                sched.push(init_round_op(dst + abs, src2, src1, t, nb2, sub));
            } else if t == nb2 {
                // the round's new top position must be written on every
                // lane: masked-off lanes extend their partial with zero
                let func = pe_func(move |_, m, c| {
                    if m {
                        if sub {
                            (!c, c)
                        } else {
                            (c, false)
                        }
                    } else {
                        (false, false)
                    }
                });
                sched.push(MicroOp::Pe {
                    read_a: None,
                    read_b: Some((src1 + j) as u16),
                    write: Some((dst + abs) as u16),
                    func,
                    latch: LatchUpdate::SetCarry,
                    pred: Pred::None,
                });
            } else {
                // accumulator bit is valid below the previous round's top
                let ea = BitSrc::Row(dst + abs);
                let eb = BitSrc::Row(src2 + t);
                let carry = match (t, sub) {
                    (0, false) => CarryIn::Zero,
                    (0, true) => CarryIn::One,
                    _ => CarryIn::Latch,
                };
                sched.push(adder_op(ea, eb, sub, carry, Some(dst + abs), Pred::Mask));
            }
        }
    }
    if p2.signed {
        // correct the unsigned-image rounds: subtract src1 << p2.bits on
        // lanes whose multiplicand is negative
        sched.extend(seq_set_mask(src2 + nb2 - 1));
        for t in 0..=nb1 {
            let abs = nb2 + t;
            if abs >= prb {
                sched.push(charged_nop());
                continue;
            }
            let eb = if t < nb1 {
                BitSrc::Row(src1 + t)
            } else if p1.signed {
                BitSrc::Row(src1 + nb1 - 1)
            } else {
                BitSrc::Const(false)
            };
            let carry = if t == 0 { CarryIn::One } else { CarryIn::Latch };
            sched.push(adder_op(
                BitSrc::Row(dst + abs),
                eb,
                true,
                carry,
                Some(dst + abs),
                Pred::Mask,
            ));
        }
    }
    sched
}

/// Round 0 writes the first partial product straight from the operand rows
/// (there is no accumulator to add to yet); `sub` handles the one-bit
/// signed multiplier where round 0 is already the weighted last round.
fn init_round_op(write: u32, src2: u32, src1: u32, t: u32, nb2: u32, sub: bool) -> MicroOp {
    let read_a = if t < nb2 { Some((src2 + t) as u16) } else { None };
    let func = if !sub {
        // partial = d & m; top position is the zero carry slot
        pe_func(move |d, m, _| if t < nb2 { (d & m, false) } else { (false, false) })
    } else {
        // partial = (0 - d) & lane mask m, via ~d + 1 carry chain
        pe_func(move |d, m, c| {
            if !m {
                return (false, false);
            }
            let eb = !(t < nb2 && d);
            let ec = if t == 0 { true } else { c };
            (eb ^ ec, eb & ec)
        })
    };
    MicroOp::Pe {
        read_a,
        read_b: Some(src1 as u16),
        write: Some(write as u16),
        func,
        latch: if sub {
            LatchUpdate::SetCarry
        } else {
            LatchUpdate::None
        },
        pred: Pred::None,
    }
}

pub fn mult_cycles(p1: Precision, p2: Precision) -> u64 {
    let base = p1.bits as u64 * (p2.bits as u64 + 2);
    if p2.signed {
        base + p1.bits as u64 + 2
    } else {
        base
    }
}

/// Multiply by a register-file constant, skipping zero bits of the
/// constant. `c_image` is the raw register value; only its low
/// `p_const.bits` matter.
///
/// Cycle shape: one staging cycle plus a `p_src.bits + 1` window per set
/// bit, a terminal cycle, zero-fill cycles for result positions no window
/// covers, and the signed-source correction pass when applicable. A zero
/// constant collapses to a single bulk-clear cycle.
pub fn seq_mul_const(
    dst: u32,
    pr: Precision,
    src: u32,
    p_src: Precision,
    c_image: u64,
    p_const: Precision,
    pred: Pred,
) -> Vec<MicroOp> {
    let nbs = p_src.bits as u32;
    let nbc = p_const.bits as u32;
    let prb = pr.bits as u32;
    assert!(prb <= nbs + nbc, "mul_const result wider than product");
    let cu = if nbc == 64 {
        c_image
    } else {
        c_image & ((1u64 << nbc) - 1)
    };
    if cu == 0 {
        return match pred {
            Pred::None => vec![MicroOp::ClearRows {
                start: dst as u16,
                rows: pr.bits as u16,
            }],
            _ => (0..prb).map(|t| zero_write(dst + t, pred)).collect(),
        };
    }
    let mut sched = Vec::new();
    let mut valid_top = 0u32; // result positions below this are written
    for k in 0..nbc {
        if cu >> k & 1 == 0 {
            continue;
        }
        // positions no window will cover hold zero in the true product
        while valid_top < k.min(prb) {
            sched.push(zero_write(dst + valid_top, pred));
            valid_top += 1;
        }
        sched.push(charged_nop()); // RF staging cycle
        let sub = p_const.signed && k == nbc - 1;
        for t in 0..=nbs {
            let abs = k + t;
            if abs >= prb {
                sched.push(charged_nop());
                continue;
            }
            let ea = if abs < valid_top {
                BitSrc::Row(dst + abs)
            } else {
                BitSrc::Const(false)
            };
            let eb = if t < nbs {
                BitSrc::Row(src + t)
            } else {
                BitSrc::Const(false)
            };
            let carry = match (t, sub) {
                (0, false) => CarryIn::Zero,
                (0, true) => CarryIn::One,
                _ => CarryIn::Latch,
            };
            sched.push(adder_op(ea, eb, sub, carry, Some(dst + abs), pred));
        }
        valid_top = (k + nbs + 1).min(prb);
    }
    // the partial is non-negative unless the (top-bit) subtract round ran,
    // and in that case the windows already reached pr
    while valid_top < prb {
        sched.push(zero_write(dst + valid_top, pred));
        valid_top += 1;
    }
    if p_src.signed {
        // subtract the constant's unsigned image at offset p_src.bits on
        // lanes whose source is negative
        sched.extend(seq_set_mask(src + nbs - 1));
        for t in 0..=nbc {
            let abs = nbs + t;
            if abs >= prb {
                sched.push(charged_nop());
                continue;
            }
            let eb = BitSrc::Const(t < nbc && cu >> t & 1 == 1);
            let carry = if t == 0 { CarryIn::One } else { CarryIn::Latch };
            sched.push(adder_op(
                BitSrc::Row(dst + abs),
                eb,
                true,
                carry,
                Some(dst + abs),
                Pred::Mask,
            ));
        }
    }
    sched.push(charged_nop()); // terminal commit cycle
    sched
}

/// `dst = src + constant`. The carry ripple visits every result position,
/// so unlike `mul_const` there is nothing to skip: `pr.bits` cycles.
pub fn seq_add_const(
    dst: u32,
    pr: Precision,
    src: u32,
    p_src: Precision,
    c_image: u64,
    p_const: Precision,
    pred: Pred,
) -> Vec<MicroOp> {
    let nbc = p_const.bits as u32;
    let cu = if nbc == 64 {
        c_image
    } else {
        c_image & ((1u64 << nbc) - 1)
    };
    let csign = p_const.signed && cu >> (nbc - 1) & 1 == 1;
    (0..pr.bits as u32)
        .map(|t| {
            let cbit = if t < nbc { cu >> t & 1 == 1 } else { csign };
            let carry = if t == 0 { CarryIn::Zero } else { CarryIn::Latch };
            adder_op(
                operand_bit(src, p_src, t),
                BitSrc::Const(cbit),
                false,
                carry,
                Some(dst + t),
                pred,
            )
        })
        .collect()
}

/// Log-depth in-CRAM reduction: `levels` rounds of (shift by `2^l`, add),
/// leaving the group sum in bitline 0 of each `2^levels`-wide group at
/// width `pr_src.bits + levels`. Uses three working strips at `dst` so no
/// add ever aliases its inputs; rotation lands the final sum at `dst`.
pub fn seq_reduce_cram(
    dst: u32,
    pr_dst: Precision,
    src: u32,
    pr_src: Precision,
    levels: u32,
) -> Vec<MicroOp> {
    if levels == 0 {
        return seq_copy(dst, src, pr_src.bits as u32, Pred::None);
    }
    let wmax = pr_dst.bits as u32;
    let strip = |i: u32| dst + i * wmax;
    let mut sched = Vec::new();
    let mut cur = src;
    for l in 0..levels {
        let w = pr_src.bits as u32 + l;
        let wp = Precision::new(w as u8, pr_src.signed);
        sched.extend(seq_shift(strip(2), cur, 1 << l, ShiftDir::Down, wp));
        let np = strip((levels - 1 - l) % 2);
        sched.extend(seq_add(
            np,
            Precision::new((w + 1) as u8, pr_src.signed),
            cur,
            wp,
            strip(2),
            wp,
            false,
            false,
            Pred::None,
        ));
        cur = np;
    }
    debug_assert_eq!(cur, dst);
    sched
}

pub fn reduce_cram_cycles(pr_src: Precision, levels: u32) -> u64 {
    if levels == 0 {
        return pr_src.bits as u64;
    }
    (0..levels)
        .map(|l| {
            let w = pr_src.bits as u64 + l as u64;
            w * (1u64 << l) + w + 1
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cram::array::{exec_schedule_self_ring, CramArray, CramEvents, PeState};

    fn run_lanes(
        cram: &mut CramArray,
        sched: &[MicroOp],
        active: (u32, u32),
    ) -> (PeState, u64) {
        let mut pe = PeState::new(cram.bitlines());
        let mut ev = CramEvents::default();
        let cycles =
            exec_schedule_self_ring(cram, &mut pe, sched, active, &mut ev).expect("schedule runs");
        (pe, cycles)
    }

    #[test]
    fn four_bit_add_all_lanes() {
        let mut cram = CramArray::new(32, 64);
        let p = Precision::unsigned(4);
        for bl in 0..64 {
            cram.column_write(bl, 0, p, 9).unwrap();
            cram.column_write(bl, 4, p, 3).unwrap();
        }
        let sched = seq_add(8, p, 0, p, 4, p, false, false, Pred::None);
        let (_, cycles) = run_lanes(&mut cram, &sched, (0, 64));
        assert_eq!(cycles, add_cycles(p, false));
        for bl in 0..64 {
            assert_eq!(cram.column_read(bl, 8, p).unwrap(), 12);
        }
    }

    #[test]
    fn add_identity_random() {
        let p = Precision::signed(9);
        let mut cram = CramArray::new(40, 64);
        for bl in 0..64 {
            let x = ((bl as i64 * 97 + 13) % 512) - 256;
            cram.column_write(bl, 0, p, x).unwrap();
            cram.column_write(bl, 9, p, 0).unwrap();
        }
        let sched = seq_add(20, p, 0, p, 9, p, false, false, Pred::None);
        run_lanes(&mut cram, &sched, (0, 64));
        for bl in 0..64 {
            let x = ((bl as i64 * 97 + 13) % 512) - 256;
            assert_eq!(cram.column_read(bl, 20, p).unwrap(), p.wrap(x));
        }
    }

    #[test]
    fn mult_absorbs_zero_and_timing_is_value_independent() {
        let p = Precision::signed(8);
        let pr = Precision::signed(16);
        let mut cram = CramArray::new(64, 64);
        for bl in 0..64 {
            cram.column_write(bl, 0, p, (bl as i64) - 32).unwrap();
            cram.column_write(bl, 8, p, 0).unwrap();
        }
        let sched = seq_mult(16, pr, 0, p, 8, p);
        let (_, cycles) = run_lanes(&mut cram, &sched, (0, 64));
        assert_eq!(cycles, mult_cycles(p, p));
        for bl in 0..64 {
            assert_eq!(cram.column_read(bl, 16, pr).unwrap(), 0);
        }
        // schedule depends only on shapes, not on data
        let again = seq_mult(16, pr, 0, p, 8, p);
        assert_eq!(sched.len(), again.len());
    }

    #[test]
    fn logic_self_identities() {
        let p = Precision::unsigned(6);
        let mut cram = CramArray::new(32, 64);
        for bl in 0..64 {
            cram.column_write(bl, 0, p, (bl as i64 * 5) % 64).unwrap();
        }
        let sched = seq_logic(LogicKind::And, 8, 0, 0, p, Pred::None);
        run_lanes(&mut cram, &sched, (0, 64));
        let sched = seq_logic(LogicKind::Xor, 16, 0, 0, p, Pred::None);
        run_lanes(&mut cram, &sched, (0, 64));
        for bl in 0..64 {
            let x = (bl as i64 * 5) % 64;
            assert_eq!(cram.column_read(bl, 8, p).unwrap(), x, "x AND x");
            assert_eq!(cram.column_read(bl, 16, p).unwrap(), 0, "x XOR x");
        }
    }

    #[test]
    fn shift_ramp_and_multiset() {
        let p = Precision::unsigned(8);
        let mut cram = CramArray::new(16, 64);
        for bl in 0..64 {
            cram.column_write(bl, 0, p, bl as i64).unwrap();
        }
        let sched = seq_shift(0, 0, 1, ShiftDir::Up, p);
        let (_, cycles) = run_lanes(&mut cram, &sched, (0, 64));
        assert_eq!(cycles, shift_cycles(p, 1));
        let mut seen: Vec<i64> = Vec::new();
        for bl in 0..64u32 {
            let v = cram.column_read(bl, 0, p).unwrap();
            let from = (bl + 64 - 1) % 64;
            assert_eq!(v, from as i64, "bitline {bl} holds old value of {from}");
            seen.push(v);
        }
        seen.sort();
        assert_eq!(seen, (0..64).collect::<Vec<_>>(), "ring preserves multiset");
        // shamt = 0 is the identity
        assert!(seq_shift(0, 0, 0, ShiftDir::Up, p).is_empty());
    }

    #[test]
    fn reduce_cram_all_ones() {
        // 64 lanes of u8 value 1, 6 levels -> 64 in bitline 0 at width 14
        let p = Precision::unsigned(8);
        let pd = Precision::unsigned(14);
        let mut cram = CramArray::new(64, 64);
        for bl in 0..64 {
            cram.column_write(bl, 0, p, 1).unwrap();
        }
        let sched = seq_reduce_cram(16, pd, 0, p, 6);
        let (_, cycles) = run_lanes(&mut cram, &sched, (0, 64));
        assert_eq!(cycles, reduce_cram_cycles(p, 6));
        assert_eq!(cram.column_read(0, 16, pd).unwrap(), 64);
    }

    #[test]
    fn reduce_zero_levels_is_copy() {
        let p = Precision::signed(5);
        let mut cram = CramArray::new(32, 64);
        for bl in 0..64 {
            cram.column_write(bl, 0, p, (bl as i64 % 31) - 15).unwrap();
        }
        let sched = seq_reduce_cram(10, p, 0, p, 0);
        let (_, cycles) = run_lanes(&mut cram, &sched, (0, 64));
        assert_eq!(cycles, p.bits as u64);
        for bl in 0..64 {
            assert_eq!(
                cram.column_read(bl, 10, p).unwrap(),
                cram.column_read(bl, 0, p).unwrap()
            );
        }
    }

    #[test]
    fn mul_const_zero_collapses_to_one_cycle() {
        let p = Precision::unsigned(8);
        let pr = Precision::unsigned(16);
        let mut cram = CramArray::new(64, 64);
        for bl in 0..64 {
            cram.column_write(bl, 0, p, bl as i64).unwrap();
            cram.column_write(bl, 16, pr, -1).unwrap(); // garbage to clear
        }
        let sched = seq_mul_const(16, pr, 0, p, 0, p, Pred::None);
        let (_, cycles) = run_lanes(&mut cram, &sched, (0, 64));
        assert_eq!(cycles, 1);
        for bl in 0..64 {
            assert_eq!(cram.column_read(bl, 16, pr).unwrap(), 0);
        }
    }

    #[test]
    fn mul_const_matches_formula_without_fills() {
        let p = Precision::unsigned(8);
        // constants with contiguous low set bits: popcount k, no fills at
        // pr = p_src + k
        for k in 1..=8u32 {
            let c = (1u64 << k) - 1;
            let pr = Precision::unsigned((8 + k) as u8);
            let sched = seq_mul_const(16, pr, 0, p, c, p, Pred::None);
            assert_eq!(
                sched.len() as u64,
                k as u64 * (p.bits as u64 + 2) + 1,
                "popcount {k}"
            );
        }
    }
}

