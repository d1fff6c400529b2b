//! Mesh transport properties: conservation with intact payloads under
//! random traffic, drain after injection stops (deadlock freedom), and
//! deterministic replay.

use cramsim::config::ChipConfig;
use cramsim::isa::TileId;
use cramsim::noc::{make_flits, Dest, Flit, FlitTrace, Mesh};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::{HashMap, VecDeque};

struct Harness {
    mesh: Mesh,
    outboxes: Vec<VecDeque<Flit>>,
    aggregate_trace: Vec<FlitTrace>,
    trace_on: bool,
}

impl Harness {
    fn new(cfg: &ChipConfig, trace_on: bool) -> Self {
        Harness {
            mesh: Mesh::new(cfg),
            outboxes: vec![VecDeque::new(); cfg.num_tiles()],
            aggregate_trace: Vec::new(),
            trace_on,
        }
    }

    fn queue_packet(&mut self, src: usize, id: u32, bits: u64, dst: TileId, cfg: &ChipConfig) {
        let vc = id as usize % cfg.vc_count;
        self.outboxes[src].extend(make_flits(id, bits, cfg.tile_link_bits, Dest::Tile(dst), vc));
    }

    /// Runs until everything drains; returns delivered (packet -> flit count).
    fn drain(&mut self, parallel: bool, max_cycles: u64) -> HashMap<u32, u32> {
        let mut delivered: HashMap<u32, u32> = HashMap::new();
        for cycle in 1..=max_cycles {
            for (t, ob) in self.outboxes.iter_mut().enumerate() {
                if let Some(&f) = ob.front() {
                    if self.mesh.try_inject_local(TileId(t as u16), f) {
                        ob.pop_front();
                    }
                }
            }
            let trace = self.trace_on.then_some(&mut self.aggregate_trace);
            for d in self.mesh.step(cycle, parallel, trace) {
                *delivered.entry(d.packet).or_insert(0) += 1;
            }
            if self.mesh.idle() && self.outboxes.iter().all(VecDeque::is_empty) {
                return delivered;
            }
        }
        panic!("network failed to drain within {max_cycles} cycles");
    }
}

#[test]
fn thousand_random_packets_drain_with_all_flits() {
    let cfg = ChipConfig::default(); // full 12x10 mesh
    let mut rng = StdRng::seed_from_u64(2024);
    let mut h = Harness::new(&cfg, false);
    let mut want: HashMap<u32, u32> = HashMap::new();
    for id in 0..1000u32 {
        let src = rng.gen_range(0..cfg.num_tiles());
        let dst = TileId(rng.gen_range(0..cfg.num_tiles()) as u16);
        let bits = rng.gen_range(1..=6000u64);
        h.queue_packet(src, id, bits, dst, &cfg);
        want.insert(
            id,
            cramsim::noc::flits_for_bits(bits, cfg.tile_link_bits),
        );
    }
    let delivered = h.drain(false, 2_000_000);
    assert_eq!(delivered.len(), 1000);
    for (id, flits) in want {
        assert_eq!(delivered[&id], flits, "packet {id}");
    }
    assert_eq!(h.mesh.injected_flits, h.mesh.delivered_flits);
}

#[test]
fn replay_is_identical_across_runs_and_parallelism() {
    let cfg = ChipConfig::default();
    let build = |h: &mut Harness| {
        let mut rng = StdRng::seed_from_u64(5);
        for id in 0..300u32 {
            let src = rng.gen_range(0..cfg.num_tiles());
            let dst = TileId(rng.gen_range(0..cfg.num_tiles()) as u16);
            let bits = rng.gen_range(1..=4000u64);
            h.queue_packet(src, id, bits, dst, &cfg);
        }
    };
    let mut a = Harness::new(&cfg, true);
    build(&mut a);
    a.drain(false, 1_000_000);
    let mut b = Harness::new(&cfg, true);
    build(&mut b);
    b.drain(false, 1_000_000);
    let mut c = Harness::new(&cfg, true);
    build(&mut c);
    c.drain(true, 1_000_000);
    assert_eq!(a.aggregate_trace, b.aggregate_trace, "two serial runs differ");
    assert_eq!(a.aggregate_trace, c.aggregate_trace, "parallel run differs");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Deadlock freedom: any batch of random traffic on a small mesh
    /// always drains once injection stops.
    #[test]
    fn heavy_traffic_always_drains(seed in 0u64..1000) {
        let cfg = ChipConfig::mini(); // 2x2 mesh, tight queues
        let mut rng = StdRng::seed_from_u64(seed);
        let mut h = Harness::new(&cfg, false);
        let n = rng.gen_range(50..250u32);
        for id in 0..n {
            let src = rng.gen_range(0..cfg.num_tiles());
            let dst = TileId(rng.gen_range(0..cfg.num_tiles()) as u16);
            let bits = rng.gen_range(1..=8000u64);
            h.queue_packet(src, id, bits, dst, &cfg);
        }
        let delivered = h.drain(false, 2_000_000);
        prop_assert_eq!(delivered.len(), n as usize);
    }
}
