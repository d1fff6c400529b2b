//! Sequencer value-correctness against an independent scalar oracle, the
//! bit-slicing contract, and the constant-multiply cycle properties.

use cramsim::cram::*;
use cramsim::isa::{LogicKind, Pred, Precision, ShiftDir};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const LANES: usize = 64;

/// Scalar two's-complement oracle, independent of the bit-level machinery.
fn wrap(p: Precision, v: i128) -> i64 {
    let m = (1i128 << p.bits) - 1;
    let u = v & m;
    let u = if p.signed && (u >> (p.bits - 1)) & 1 == 1 {
        u - (1i128 << p.bits)
    } else {
        u
    };
    u as i64
}

fn rand_val(rng: &mut StdRng, p: Precision) -> i64 {
    let lo = if p.signed { -(1i64 << (p.bits - 1)) } else { 0 };
    let hi = if p.signed {
        (1i64 << (p.bits - 1)) - 1
    } else {
        (1i64 << p.bits) - 1
    };
    rng.gen_range(lo..=hi)
}

fn rand_prec(rng: &mut StdRng, max_bits: u8) -> Precision {
    Precision::new(rng.gen_range(1..=max_bits), rng.gen_bool(0.5))
}

struct Bench {
    cram: CramArray,
    pe: PeState,
    events: CramEvents,
}

impl Bench {
    fn new() -> Self {
        Bench {
            cram: CramArray::new(64, LANES),
            pe: PeState::new(LANES),
            events: CramEvents::default(),
        }
    }

    fn run(&mut self, sched: &[MicroOp]) -> u64 {
        exec_schedule_self_ring(
            &mut self.cram,
            &mut self.pe,
            sched,
            (0, LANES as u32),
            &mut self.events,
        )
        .expect("schedule executes")
    }
}

#[test]
fn add_random_cases_match_oracle() {
    let mut rng = StdRng::seed_from_u64(11);
    for case in 0..2500 {
        let p1 = rand_prec(&mut rng, 18);
        let p2 = rand_prec(&mut rng, 18);
        let pr = rand_prec(&mut rng, 18);
        let cen = rng.gen_bool(0.3);
        let cst = rng.gen_bool(0.3);
        let pred = if rng.gen_bool(0.3) { Pred::Mask } else { Pred::None };
        let mut b = Bench::new();
        let mut vals = Vec::new();
        for bl in 0..LANES as u32 {
            let x = rand_val(&mut rng, p1);
            let y = rand_val(&mut rng, p2);
            let old = rand_val(&mut rng, pr);
            b.cram.column_write(bl, 0, p1, x).unwrap();
            b.cram.column_write(bl, 20, p2, y).unwrap();
            b.cram.column_write(bl, 40, pr, old).unwrap();
            let cin = rng.gen_bool(0.5);
            let mbit = rng.gen_bool(0.5);
            if cin {
                b.pe.carry[bl as usize / 64] |= 1 << (bl % 64);
            }
            if mbit {
                b.pe.mask[bl as usize / 64] |= 1 << (bl % 64);
            }
            vals.push((x, y, old, cin, mbit));
        }
        let sched = seq_add(40, pr, 0, p1, 20, p2, cen, cst, pred);
        let cycles = b.run(&sched);
        assert_eq!(cycles, add_cycles(pr, cst), "case {case}: cycle formula");
        for (bl, &(x, y, old, cin, mbit)) in vals.iter().enumerate() {
            let got = b.cram.column_read(bl as u32, 40, pr).unwrap();
            let active = pred == Pred::None || mbit;
            let want = if active {
                let c = (cen && cin) as i128;
                wrap(pr, x as i128 + y as i128 + c)
            } else {
                old
            };
            assert_eq!(
                got, want,
                "case {case} lane {bl}: {x} + {y} (cen={cen} cin={cin} pred={pred:?} m={mbit}) at {pr}"
            );
        }
    }
}

#[test]
fn mult_random_cases_match_oracle() {
    let mut rng = StdRng::seed_from_u64(13);
    for case in 0..1500 {
        let p1 = rand_prec(&mut rng, 9);
        let p2 = rand_prec(&mut rng, 9);
        let prb = rng.gen_range(1..=(p1.bits as u32 + p2.bits as u32).min(18)) as u8;
        let pr = Precision::new(prb, rng.gen_bool(0.5));
        let mut b = Bench::new();
        let mut vals = Vec::new();
        for bl in 0..LANES as u32 {
            let x = rand_val(&mut rng, p1);
            let y = rand_val(&mut rng, p2);
            b.cram.column_write(bl, 0, p1, x).unwrap();
            b.cram.column_write(bl, 10, p2, y).unwrap();
            vals.push((x, y));
        }
        let sched = seq_mult(20, pr, 0, p1, 10, p2);
        let cycles = b.run(&sched);
        assert_eq!(cycles, mult_cycles(p1, p2), "case {case}: cycle formula");
        for (bl, &(x, y)) in vals.iter().enumerate() {
            let got = b.cram.column_read(bl as u32, 20, pr).unwrap();
            let want = wrap(pr, x as i128 * y as i128);
            assert_eq!(got, want, "case {case} lane {bl}: {x} * {y} ({p1} x {p2} -> {pr})");
        }
    }
}

#[test]
fn mult_i8_exhaustive_one_bitline() {
    let p = Precision::signed(8);
    let pr = Precision::signed(16);
    let sched = seq_mult(20, pr, 0, p, 10, p);
    let mut b = Bench::new();
    for x in -128i64..=127 {
        for y in -128i64..=127 {
            b.cram.column_write(0, 0, p, x).unwrap();
            b.cram.column_write(0, 10, p, y).unwrap();
            b.run(&sched);
            let got = b.cram.column_read(0, 20, pr).unwrap();
            assert_eq!(got, x * y, "{x} * {y}");
        }
    }
}

#[test]
fn mult_never_overflows_at_published_width() {
    // i8 x i10 into an i18 result never wraps
    let mut rng = StdRng::seed_from_u64(17);
    let p1 = Precision::signed(8);
    let p2 = Precision::signed(10);
    let pr = Precision::signed(18);
    let mut b = Bench::new();
    let mut vals = Vec::new();
    for bl in 0..LANES as u32 {
        let x = rand_val(&mut rng, p1);
        let y = rand_val(&mut rng, p2);
        b.cram.column_write(bl, 0, p1, x).unwrap();
        b.cram.column_write(bl, 10, p2, y).unwrap();
        vals.push((x, y));
    }
    let sched = seq_mult(22, pr, 0, p1, 10, p2);
    b.run(&sched);
    for (bl, &(x, y)) in vals.iter().enumerate() {
        assert_eq!(b.cram.column_read(bl as u32, 22, pr).unwrap(), x * y);
    }
}

#[test]
fn bit_slicing_all_split_points_exhaustive_n8() {
    // every 2-way split of an 8-bit add, all 65536 operand pairs,
    // carry-chained with cst on the low slice and cen on the high slice
    let n = 8u8;
    for split in 1..n {
        let lo = Precision::unsigned(split);
        let hi = Precision::unsigned(n - split);
        let lo_sched = seq_add(40, lo, 0, lo, 20, lo, false, true, Pred::None);
        let hi_sched = seq_add(
            40 + split as u32,
            hi,
            split as u32,
            hi,
            20 + split as u32,
            hi,
            true,
            false,
            Pred::None,
        );
        let full = Precision::unsigned(n);
        let mono = seq_add(50, full, 0, full, 20, full, false, false, Pred::None);
        let mut b = Bench::new();
        for x in 0..256i64 {
            for y in 0..256i64 {
                b.cram.column_write(0, 0, full, x).unwrap();
                b.cram.column_write(0, 20, full, y).unwrap();
                b.run(&lo_sched);
                b.run(&hi_sched);
                b.run(&mono);
                let sliced = b.cram.column_read(0, 40, full).unwrap();
                let whole = b.cram.column_read(0, 50, full).unwrap();
                assert_eq!(sliced, whole, "split {split}: {x}+{y}");
                assert_eq!(whole, wrap(full, x as i128 + y as i128));
            }
        }
    }
}

#[test]
fn bit_slicing_every_composition_up_to_n12() {
    // all 2^(N-1) ways to cut an N-bit add into carry-chained slices
    let mut rng = StdRng::seed_from_u64(23);
    for n in 2..=12u8 {
        for cuts in 0..(1u32 << (n - 1)) {
            let full = Precision::unsigned(n);
            let x = rand_val(&mut rng, full);
            let y = rand_val(&mut rng, full);
            let mut b = Bench::new();
            b.cram.column_write(0, 0, full, x).unwrap();
            b.cram.column_write(0, 20, full, y).unwrap();
            let mut off = 0u8;
            let mut first = true;
            for pos in 0..n {
                let boundary = pos + 1 == n || cuts >> pos & 1 == 1;
                if !boundary {
                    continue;
                }
                let w = Precision::unsigned(pos + 1 - off);
                let sched = seq_add(
                    (40 + off) as u32,
                    w,
                    off as u32,
                    w,
                    (20 + off) as u32,
                    w,
                    !first,
                    true,
                    Pred::None,
                );
                b.run(&sched);
                first = false;
                off = pos + 1;
            }
            let got = b.cram.column_read(0, 40, full).unwrap();
            assert_eq!(got, wrap(full, x as i128 + y as i128), "n={n} cuts={cuts:b}");
        }
    }
}

#[test]
fn logic_random_cases_match_oracle() {
    let mut rng = StdRng::seed_from_u64(29);
    for _ in 0..1500 {
        let p = Precision::unsigned(rng.gen_range(1..=18));
        let kind = match rng.gen_range(0..3) {
            0 => LogicKind::And,
            1 => LogicKind::Or,
            _ => LogicKind::Xor,
        };
        let pred = match rng.gen_range(0..3) {
            0 => Pred::None,
            1 => Pred::Mask,
            _ => Pred::Carry,
        };
        let mut b = Bench::new();
        let mut vals = Vec::new();
        for bl in 0..LANES as u32 {
            let x = rand_val(&mut rng, p);
            let y = rand_val(&mut rng, p);
            let old = rand_val(&mut rng, p);
            b.cram.column_write(bl, 0, p, x).unwrap();
            b.cram.column_write(bl, 20, p, y).unwrap();
            b.cram.column_write(bl, 40, p, old).unwrap();
            let on = rng.gen_bool(0.5);
            if on {
                match pred {
                    Pred::Mask => b.pe.mask[bl as usize / 64] |= 1 << (bl % 64),
                    Pred::Carry => b.pe.carry[bl as usize / 64] |= 1 << (bl % 64),
                    Pred::None => {}
                }
            }
            vals.push((x, y, old, on));
        }
        let sched = seq_logic(kind, 40, 0, 20, p, pred);
        let cycles = b.run(&sched);
        assert_eq!(cycles, p.bits as u64);
        for (bl, &(x, y, old, on)) in vals.iter().enumerate() {
            let got = b.cram.column_read(bl as u32, 40, p).unwrap();
            let want = if pred == Pred::None || on {
                match kind {
                    LogicKind::And => x & y,
                    LogicKind::Or => x | y,
                    LogicKind::Xor => x ^ y,
                }
            } else {
                old
            };
            assert_eq!(got, want, "lane {bl} {kind:?}");
        }
    }
}

#[test]
fn shift_random_cases_match_permutation_oracle() {
    let mut rng = StdRng::seed_from_u64(31);
    for _ in 0..300 {
        let p = Precision::unsigned(rng.gen_range(1..=10));
        let shamt = rng.gen_range(0..=5u32);
        let dir = if rng.gen_bool(0.5) { ShiftDir::Up } else { ShiftDir::Down };
        let mut b = Bench::new();
        let mut vals = Vec::new();
        for bl in 0..LANES as u32 {
            let x = rand_val(&mut rng, p);
            b.cram.column_write(bl, 0, p, x).unwrap();
            vals.push(x);
        }
        let sched = seq_shift(0, 0, shamt, dir, p);
        let cycles = b.run(&sched);
        assert_eq!(cycles, shift_cycles(p, shamt));
        for bl in 0..LANES {
            let from = match dir {
                ShiftDir::Up => (bl + LANES - shamt as usize % LANES) % LANES,
                ShiftDir::Down => (bl + shamt as usize) % LANES,
            };
            assert_eq!(
                b.cram.column_read(bl as u32, 0, p).unwrap(),
                vals[from],
                "lane {bl} shamt {shamt} {dir:?}"
            );
        }
    }
}

#[test]
fn reduce_random_cases_match_sum_oracle() {
    let mut rng = StdRng::seed_from_u64(37);
    for _ in 0..200 {
        let p = Precision::new(rng.gen_range(1..=6), rng.gen_bool(0.5));
        let levels = rng.gen_range(0..=6u32);
        let pd = Precision::new(p.bits + levels as u8, p.signed);
        let mut b = Bench::new();
        let mut vals = Vec::new();
        for bl in 0..LANES as u32 {
            let x = rand_val(&mut rng, p);
            b.cram.column_write(bl, 0, p, x).unwrap();
            vals.push(x);
        }
        let sched = seq_reduce_cram(8, pd, 0, p, levels);
        let cycles = b.run(&sched);
        assert_eq!(cycles, reduce_cram_cycles(p, levels));
        let group = 1usize << levels;
        for g in 0..LANES / group {
            let want: i128 = vals[g * group..(g + 1) * group]
                .iter()
                .map(|&v| v as i128)
                .sum();
            let got = b.cram.column_read((g * group) as u32, 8, pd).unwrap();
            assert_eq!(got, wrap(pd, want), "group {g} levels {levels} {p}");
        }
    }
}

#[test]
fn mul_const_random_cases_match_oracle() {
    let mut rng = StdRng::seed_from_u64(41);
    for case in 0..1500 {
        let p_src = rand_prec(&mut rng, 9);
        let p_const = rand_prec(&mut rng, 9);
        let prb = rng.gen_range(1..=(p_src.bits as u32 + p_const.bits as u32).min(18)) as u8;
        let pr = Precision::new(prb, rng.gen_bool(0.5));
        let c = rand_val(&mut rng, p_const);
        let image = (c as u64) & if p_const.bits == 64 { u64::MAX } else { (1u64 << p_const.bits) - 1 };
        let mut b = Bench::new();
        let mut vals = Vec::new();
        for bl in 0..LANES as u32 {
            let x = rand_val(&mut rng, p_src);
            b.cram.column_write(bl, 0, p_src, x).unwrap();
            vals.push(x);
        }
        let sched = seq_mul_const(20, pr, 0, p_src, image, p_const, Pred::None);
        b.run(&sched);
        for (bl, &x) in vals.iter().enumerate() {
            let got = b.cram.column_read(bl as u32, 20, pr).unwrap();
            let want = wrap(pr, x as i128 * c as i128);
            assert_eq!(got, want, "case {case} lane {bl}: {x} * const {c} ({p_src} x {p_const} -> {pr})");
        }
    }
}

#[test]
fn add_const_random_cases_match_oracle() {
    let mut rng = StdRng::seed_from_u64(43);
    for _ in 0..1500 {
        let p_src = rand_prec(&mut rng, 18);
        let p_const = rand_prec(&mut rng, 18);
        let pr = rand_prec(&mut rng, 18);
        let c = rand_val(&mut rng, p_const);
        let image = (c as u64) & ((1u64 << p_const.bits) - 1);
        let mut b = Bench::new();
        let mut vals = Vec::new();
        for bl in 0..LANES as u32 {
            let x = rand_val(&mut rng, p_src);
            b.cram.column_write(bl, 0, p_src, x).unwrap();
            vals.push(x);
        }
        let sched = seq_add_const(20, pr, 0, p_src, image, p_const, Pred::None);
        let cycles = b.run(&sched);
        assert_eq!(cycles, pr.bits as u64);
        for (bl, &x) in vals.iter().enumerate() {
            let got = b.cram.column_read(bl as u32, 20, pr).unwrap();
            assert_eq!(got, wrap(pr, x as i128 + c as i128), "{x} + const {c} -> {pr}");
        }
    }
}

#[test]
fn mul_const_cycles_affine_in_popcount_and_zero_skip() {
    let p = Precision::unsigned(8);
    // contiguous-low-bit constants: cycles = popcount*(p+2) + 1 exactly
    let mut pts = Vec::new();
    for k in 1..=8u32 {
        let c = (1u64 << k) - 1;
        let pr = Precision::unsigned((8 + k) as u8);
        let len = seq_mul_const(20, pr, 0, p, c, p, Pred::None).len() as u64;
        pts.push((k as u64, len));
    }
    let slope = pts[1].1 - pts[0].1;
    for w in pts.windows(2) {
        assert_eq!(w[1].1 - w[0].1, slope, "affine in popcount");
    }
    assert_eq!(slope, p.bits as u64 + 2);
    assert_eq!(pts[0].1, 1 * (p.bits as u64 + 2) + 1);

    // 4-of-8 vs 8-of-8 set bits at the same result width
    let pr = Precision::unsigned(16);
    let c4 = seq_mul_const(20, pr, 0, p, 0x55, p, Pred::None).len() as f64;
    let c8 = seq_mul_const(20, pr, 0, p, 0xff, p, Pred::None).len() as f64;
    let ratio = c4 / c8;
    assert!((0.45..=0.55).contains(&ratio), "ratio {ratio}");
}

#[test]
fn mul_const_all_ones_cheaper_than_replicate_and_mult() {
    // replicating the constant into CRAM rows costs one memory-mode write
    // per wordline before seq_mult can run
    let p = Precision::unsigned(8);
    let pr = Precision::unsigned(16);
    let mc = seq_mul_const(20, pr, 0, p, 0xff, p, Pred::None).len() as u64;
    let replicate = p.bits as u64;
    let sm = mult_cycles(p, p);
    assert!(mc <= replicate + sm, "{mc} > {replicate} + {sm}");
    // and the values agree
    let mut b = Bench::new();
    for bl in 0..LANES as u32 {
        b.cram.column_write(bl, 0, p, bl as i64 * 3 % 256).unwrap();
        b.cram.column_write(bl, 10, p, 0xff).unwrap();
    }
    let s1 = seq_mul_const(20, pr, 0, p, 0xff, p, Pred::None);
    let s2 = seq_mult(40, pr, 10, p, 0, p);
    b.run(&s1);
    b.run(&s2);
    for bl in 0..LANES as u32 {
        assert_eq!(
            b.cram.column_read(bl, 20, pr).unwrap(),
            b.cram.column_read(bl, 40, pr).unwrap()
        );
    }
}

#[test]
fn fully_masked_off_sequencers_leave_state_untouched() {
    let mut rng = StdRng::seed_from_u64(47);
    let p = Precision::signed(8);
    let pr = Precision::signed(9);
    let mut b = Bench::new();
    for bl in 0..LANES as u32 {
        b.cram.column_write(bl, 0, p, rand_val(&mut rng, p)).unwrap();
        b.cram.column_write(bl, 20, p, rand_val(&mut rng, p)).unwrap();
    }
    // mask all zero via set_mask from a zero row
    b.run(&seq_set_mask(60));
    let before = b.cram.dump();
    b.run(&seq_add(40, pr, 0, p, 20, p, false, false, Pred::Mask));
    b.run(&seq_logic(LogicKind::Xor, 40, 0, 20, p, Pred::Mask));
    let image = 0x5au64;
    b.run(&seq_mul_const(
        40,
        Precision::unsigned(16),
        0,
        Precision::unsigned(8),
        image,
        Precision::unsigned(8),
        Pred::Mask,
    ));
    assert_eq!(before, b.cram.dump());
}

#[test]
fn set_mask_predication_parity() {
    // alternating mask: only even bitlines take the add
    let p = Precision::unsigned(6);
    let mut b = Bench::new();
    for bl in 0..LANES as u32 {
        b.cram.set_bit(60, bl, bl % 2 == 0).unwrap();
        b.cram.column_write(bl, 0, p, 7).unwrap();
        b.cram.column_write(bl, 20, p, 5).unwrap();
        b.cram.column_write(bl, 40, p, 1).unwrap();
    }
    b.run(&seq_set_mask(60));
    b.run(&seq_add(40, p, 0, p, 20, p, false, false, Pred::Mask));
    for bl in 0..LANES as u32 {
        let want = if bl % 2 == 0 { 12 } else { 1 };
        assert_eq!(b.cram.column_read(bl, 40, p).unwrap(), want);
    }
}
