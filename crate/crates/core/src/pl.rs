//! Programmable-logic side: the shift-buffer producer that delivers a full
//! stencil's worth of operands each PL cycle, the stream packers that feed
//! the PLIO ports, the explicit ping-pong chunk buffer for the
//! multiplication streams, and the result consumers.

use std::collections::VecDeque;

use crate::fabric::channel::{PlioInPort, PlioOutPort};
use crate::grid::{extract_bundle, Field, Grid3D, OperandBundle};

/// Host-side reduction of the four streamed-back lanes, in the fixed
/// association the tile kernels use (lane 3 carries the zero pad
/// difference).
pub fn pl_reduce(p: [f32; 4]) -> f32 {
    ((p[0] + p[1]) + p[2]) + p[3]
}

/// Which operand lane a packed word carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordSel {
    Lhs(u8),
    Rhs(u8),
    Mul(u8),
}

impl WordSel {
    pub fn pick(self, b: &OperandBundle) -> f32 {
        match self {
            WordSel::Lhs(l) => b.lhs[l as usize],
            WordSel::Rhs(l) => b.rhs[l as usize],
            WordSel::Mul(l) => b.mul[l as usize],
        }
    }
}

/// One beat of up to four words on one PLIO input port.
#[derive(Debug, Clone)]
pub struct PackedBeat {
    pub port: usize,
    pub words: Vec<WordSel>,
    pub mul_path: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsumerMode {
    /// One 32-bit result word per cell.
    Direct1,
    /// Four floats per cell streamed back; the PL performs the three adds.
    HostReduce4,
}

/// Walks interior cells in emission order (k outer, j middle, i inner).
#[derive(Debug, Clone)]
pub struct InteriorCursor {
    nx: usize,
    ny: usize,
    nz: usize,
    i: usize,
    j: usize,
    k: usize,
}

impl InteriorCursor {
    pub fn new(g: &Grid3D) -> InteriorCursor {
        InteriorCursor { nx: g.nx, ny: g.ny, nz: g.nz, i: 1, j: 1, k: 1 }
    }

    pub fn current(&self) -> (usize, usize, usize) {
        (self.i, self.j, self.k)
    }

    pub fn advance(&mut self) {
        self.i += 1;
        if self.i == self.nx - 1 {
            self.i = 1;
            self.j += 1;
            if self.j == self.ny - 1 {
                self.j = 1;
                self.k += 1;
                debug_assert!(self.k <= self.nz - 1);
            }
        }
    }
}

/// Per-field producer: shift-buffer fill latency, then the packer schedule.
/// In-order and cell-atomic: all beats of one schedule cycle issue together
/// or the whole producer stalls.
#[derive(Debug)]
pub struct FieldProducer {
    pub field: Field,
    pub n_cells: u64,
    pub fill_left: u64,
    /// Header beats still to issue (stream-fed variants).
    pub headers: Vec<(usize, u64)>,
    /// Packer schedule, indexed by `[cell % copies][cycle][beat]`.
    pub schedule: Vec<Vec<Vec<PackedBeat>>>,
    pub cell_index: u64,
    cycle_in_cell: usize,
    cursor: InteriorCursor,
    bundle: Option<OperandBundle>,
    pub active_cycles: u64,
    pub stall_cycles: u64,
    /// Stalls attributable to a multiplication-path beat.
    pub mul_blocked_cycles: u64,
}

impl FieldProducer {
    pub fn new(
        field: Field,
        grid: &Grid3D,
        schedule: Vec<Vec<Vec<PackedBeat>>>,
        headers: Vec<(usize, u64)>,
    ) -> FieldProducer {
        FieldProducer {
            field,
            n_cells: grid.interior_cells() as u64,
            // Two buffered planes before the first full stencil is available.
            fill_left: 2 * (grid.nx * grid.ny) as u64,
            headers,
            schedule,
            cell_index: 0,
            cycle_in_cell: 0,
            cursor: InteriorCursor::new(grid),
            bundle: None,
            active_cycles: 0,
            stall_cycles: 0,
            mul_blocked_cycles: 0,
        }
    }

    pub fn done(&self) -> bool {
        self.cell_index == self.n_cells && self.headers.is_empty()
    }

    /// One PL cycle. Returns true on any progress.
    pub fn step(
        &mut self,
        grid: &Grid3D,
        plio_in: &mut [PlioInPort],
        pingpong_of: &[Option<usize>],
        pingpongs: &mut [PingPongBuf],
    ) -> bool {
        if !self.headers.is_empty() {
            // All header beats go out in one cycle; ports are idle at start.
            let ok = self.headers.iter().all(|&(p, _)| plio_in[p].can_accept_beat());
            if !ok {
                self.stall_cycles += 1;
                return false;
            }
            for &(p, count) in &self.headers {
                plio_in[p].accept_beat(&[(count as f32).to_bits(), 0, 0, 0], false);
            }
            self.headers.clear();
            self.active_cycles += 1;
            return true;
        }
        if self.fill_left > 0 {
            self.fill_left -= 1;
            return true;
        }
        if self.cell_index >= self.n_cells {
            return false;
        }
        let copy = (self.cell_index % self.schedule.len() as u64) as usize;
        let group = &self.schedule[copy][self.cycle_in_cell];
        // Atomic issue: every beat of this cycle must be acceptable.
        let mut blocked_mul = false;
        let ok = group.iter().all(|beat| {
            let acceptable = match pingpong_of[beat.port] {
                Some(pp) if beat.mul_path => pingpongs[pp].can_accept(),
                _ => plio_in[beat.port].can_accept_beat(),
            };
            if !acceptable && beat.mul_path {
                blocked_mul = true;
            }
            acceptable
        });
        if !ok {
            self.stall_cycles += 1;
            if blocked_mul {
                self.mul_blocked_cycles += 1;
            }
            return false;
        }
        let (i, j, k) = self.cursor.current();
        let bundle = *self
            .bundle
            .get_or_insert_with(|| extract_bundle(grid, self.field, i, j, k).expect("interior"));
        for beat in group {
            let words: Vec<u32> =
                beat.words.iter().map(|sel| sel.pick(&bundle).to_bits()).collect();
            match pingpong_of[beat.port] {
                Some(pp) if beat.mul_path => pingpongs[pp].accept(words),
                _ => plio_in[beat.port].accept_beat(&words, true),
            }
        }
        self.active_cycles += 1;
        self.cycle_in_cell += 1;
        if self.cycle_in_cell == self.schedule[copy].len() {
            self.cycle_in_cell = 0;
            self.cell_index += 1;
            self.bundle = None;
            if self.cell_index < self.n_cells {
                self.cursor.advance();
            }
        }
        true
    }

    pub fn blocked_reason(&self, plio_in: &[PlioInPort]) -> Option<String> {
        if self.done() || self.fill_left > 0 || self.cell_index >= self.n_cells {
            return None;
        }
        let copy = (self.cell_index % self.schedule.len() as u64) as usize;
        let group = &self.schedule[copy][self.cycle_in_cell];
        let ports: Vec<&str> = group.iter().map(|b| plio_in[b.port].label.as_str()).collect();
        let muls: Vec<&str> = group
            .iter()
            .filter(|b| b.mul_path)
            .map(|b| plio_in[b.port].label.as_str())
            .collect();
        Some(format!(
            "producer.{}: cell {} write blocked on {} (cell-atomic group also holds back {})",
            self.field.short(),
            self.cell_index,
            if muls.is_empty() { ports.join(", ") } else { muls.join(", ") },
            ports.join(", "),
        ))
    }
}

/// Explicit PL-side ping-pong buffer on one multiplication stream: one bank
/// fills with the current chunk while the other streams the previous chunk
/// out, so the in-order producer never waits on the lagging consumer.
#[derive(Debug)]
pub struct PingPongBuf {
    pub label: String,
    pub port: usize,
    pub chunk_beats: u64,
    pub total_beats: u64,
    banks: [PpBank; 2],
    fill_chunk: u64,
    drain_chunk: u64,
    pub accepted: u64,
    pub drained: u64,
}

#[derive(Debug, Default)]
struct PpBank {
    chunk: u64,
    beats: VecDeque<Vec<u32>>,
    sealed: bool,
    occupied: bool,
}

impl PingPongBuf {
    pub fn new(label: String, port: usize, chunk_beats: u64, total_beats: u64) -> PingPongBuf {
        PingPongBuf {
            label,
            port,
            chunk_beats,
            total_beats,
            banks: [PpBank::default(), PpBank::default()],
            fill_chunk: 0,
            drain_chunk: 0,
            accepted: 0,
            drained: 0,
        }
    }

    fn beats_in_chunk(&self, chunk: u64) -> u64 {
        (self.total_beats - chunk * self.chunk_beats).min(self.chunk_beats)
    }

    fn filling_bank(&mut self) -> Option<usize> {
        let chunk = self.fill_chunk;
        if let Some(i) = self.banks.iter().position(|b| b.occupied && !b.sealed && b.chunk == chunk)
        {
            return Some(i);
        }
        self.banks.iter().position(|b| !b.occupied)
    }

    pub fn can_accept(&mut self) -> bool {
        self.accepted < self.total_beats && self.filling_bank().is_some()
    }

    pub fn accept(&mut self, beat: Vec<u32>) {
        let chunk = self.fill_chunk;
        let idx = self.filling_bank().expect("can_accept checked");
        let full = self.beats_in_chunk(chunk);
        let bank = &mut self.banks[idx];
        if !bank.occupied {
            bank.occupied = true;
            bank.sealed = false;
            bank.chunk = chunk;
            bank.beats.clear();
        }
        bank.beats.push_back(beat);
        self.accepted += 1;
        if bank.beats.len() as u64 == full {
            bank.sealed = true;
            self.fill_chunk += 1;
        }
    }

    /// One PL cycle on the drain side: forward one beat of the oldest sealed
    /// chunk to the PLIO port.
    pub fn step(&mut self, plio_in: &mut [PlioInPort]) -> bool {
        let Some(idx) =
            self.banks.iter().position(|b| b.occupied && b.sealed && b.chunk == self.drain_chunk)
        else {
            return false;
        };
        if !plio_in[self.port].can_accept_beat() {
            return false;
        }
        let bank = &mut self.banks[idx];
        let beat = bank.beats.pop_front().expect("sealed bank non-empty");
        plio_in[self.port].accept_beat(&beat, true);
        self.drained += 1;
        if bank.beats.is_empty() {
            bank.occupied = false;
            self.drain_chunk += 1;
        }
        true
    }

    pub fn idle(&self) -> bool {
        self.drained == self.total_beats
    }
}

/// Per-field result capture in emission order.
#[derive(Debug)]
pub struct FieldConsumer {
    pub field: Field,
    pub mode: ConsumerMode,
    /// Result ports in cell round-robin order (one per multiplex copy).
    pub ports: Vec<usize>,
    pub n_cells: u64,
    pub results: Vec<f32>,
}

impl FieldConsumer {
    pub fn new(field: Field, mode: ConsumerMode, ports: Vec<usize>, n_cells: u64) -> FieldConsumer {
        FieldConsumer { field, mode, ports, n_cells, results: Vec::with_capacity(n_cells as usize) }
    }

    pub fn done(&self) -> bool {
        self.results.len() as u64 == self.n_cells
    }

    /// One PL cycle: capture at most one cell.
    pub fn step(&mut self, plio_out: &mut [PlioOutPort]) -> bool {
        if self.done() {
            return false;
        }
        let port = self.ports[(self.results.len() as u64 % self.ports.len() as u64) as usize];
        match self.mode {
            ConsumerMode::Direct1 => {
                if plio_out[port].available() >= 1 {
                    let w = plio_out[port].drain_beat(1)[0];
                    self.results.push(f32::from_bits(w));
                    return true;
                }
            }
            ConsumerMode::HostReduce4 => {
                if plio_out[port].available() >= 4 {
                    let ws = plio_out[port].drain_beat(4);
                    let p: [f32; 4] = std::array::from_fn(|l| f32::from_bits(ws[l]));
                    self.results.push(pl_reduce(p));
                    return true;
                }
            }
        }
        false
    }
}

/// The no-tiles baseline: after the shift-buffer fill, one interior cell's
/// source terms for all three fields are produced per PL cycle.
#[derive(Debug)]
pub struct PlOnlyPipeline {
    pub fill_left: u64,
    pub n_cells: u64,
    pub cells_done: u64,
    cursor: InteriorCursor,
    pub active_cycles: u64,
    pub results: [Vec<f32>; 3],
}

impl PlOnlyPipeline {
    pub fn new(grid: &Grid3D) -> PlOnlyPipeline {
        let n = grid.interior_cells() as u64;
        PlOnlyPipeline {
            fill_left: 2 * (grid.nx * grid.ny) as u64,
            n_cells: n,
            cells_done: 0,
            cursor: InteriorCursor::new(grid),
            active_cycles: 0,
            results: [
                Vec::with_capacity(n as usize),
                Vec::with_capacity(n as usize),
                Vec::with_capacity(n as usize),
            ],
        }
    }

    pub fn done(&self) -> bool {
        self.cells_done == self.n_cells
    }

    pub fn step(&mut self, grid: &Grid3D) -> bool {
        if self.fill_left > 0 {
            self.fill_left -= 1;
            return true;
        }
        if self.done() {
            return false;
        }
        let (i, j, k) = self.cursor.current();
        for (fi, field) in Field::ALL.iter().enumerate() {
            let b = extract_bundle(grid, *field, i, j, k).expect("interior");
            self.results[fi].push(crate::oracle::evaluate_bundle(&b));
        }
        self.active_cycles += 1;
        self.cells_done += 1;
        if self.cells_done < self.n_cells {
            self.cursor.advance();
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pl_reduce_examples() {
        assert_eq!(pl_reduce([1.0, 2.0, 3.0, 0.0]), 6.0);
        assert_eq!(pl_reduce([0.0, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn interior_cursor_matches_interior_indices() {
        let g = Grid3D::new(5, 4, 6, (1.0, 1.0, 1.0), crate::grid::InitSpec::Zero).unwrap();
        let mut cur = InteriorCursor::new(&g);
        let all: Vec<_> = g.interior_indices().collect();
        for (n, want) in all.iter().enumerate() {
            assert_eq!(cur.current(), *want);
            if n + 1 < all.len() {
                cur.advance();
            }
        }
    }

    #[test]
    fn pingpong_fill_overlaps_drain() {
        let mut port = [PlioInPort::new("p".into(), 128, 32)];
        let mut pp = PingPongBuf::new("pp".into(), 0, 2, 6);
        // Fill chunk 0 fully, then chunk 1 may fill while 0 drains.
        assert!(pp.can_accept());
        pp.accept(vec![0, 0, 0, 0]);
        pp.accept(vec![1, 0, 0, 0]);
        assert!(pp.can_accept(), "second bank free while first sealed");
        pp.accept(vec![2, 0, 0, 0]);
        assert!(pp.step(&mut port), "drains sealed chunk 0");
        pp.accept(vec![3, 0, 0, 0]);
        // Both banks held (chunk 0 draining, chunk 1 sealed): chunk 2 waits.
        assert!(!pp.can_accept());
        // Unpack the pending beat so the port can take the next one; the
        // last beat of chunk 0 then frees its bank for chunk 2.
        for _ in 0..4 {
            assert!(port[0].step_unpack());
        }
        assert!(pp.step(&mut port));
        assert!(pp.can_accept());
    }
}
