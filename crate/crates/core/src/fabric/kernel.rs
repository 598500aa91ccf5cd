//! Tile kernel execution: per-iteration resource recipes scheduled against
//! the tile issue budget, not instruction-level VLIW.
//!
//! Issue budget per tick: at most one 32-bit word per input stream, one word
//! per output stream, one cascade beat each way, two 256-bit loads, one
//! store, one vector op. A kernel iteration runs its read phase (distinct
//! ports progress in parallel), then its compute phase, then its write
//! phase; phases do not overlap across iterations. Window kernels run in
//! invocations of one chunk, paying a restart overhead before compute.
//!
//! Tick accounting: stream/cascade I/O ticks and restart overhead count as
//! stall, vector ops and window loads/stores as active, everything outside
//! an invocation as idle.

use crate::grid::Field;
use crate::oracle::{lane_differences, lane_products, lane_sums, reduce4};

use super::channel::{CascadeChannel, PlioInPort, PlioOutPort, StreamChannel};
use super::window::WindowBuffer;

/// What a kernel does with its operands. The `Win*` roles are the
/// window-interfaced versions of the same arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelRole {
    /// The whole per-cell calculation in one kernel (two 12-word streams in).
    FullAdvect,
    /// 4-lane pair addition for lanes [4h, 4h+4).
    AddHalf(u8),
    /// 4-lane multiply of sums (internal stream) by multiplier operands.
    MulHalf(u8),
    /// 4-lane subtraction plus reduction, one result word out.
    SubReduce,
    /// 8-lane addition feeding the cascade.
    CascadeAdd,
    /// Multiply + subtract + reduce on the cascade payload.
    CascadeMulSubReduce,
    WinAddHalf(u8),
    WinMulHalf(u8),
    WinSubReduce,
    /// Subtraction only; the PL adds the four lanes (reduction on host).
    WinSubOnly,
}

impl KernelRole {
    pub fn is_window(self) -> bool {
        matches!(
            self,
            KernelRole::WinAddHalf(_)
                | KernelRole::WinMulHalf(_)
                | KernelRole::WinSubReduce
                | KernelRole::WinSubOnly
        )
    }

    /// Words consumed per iteration on each stream input, in slot order.
    pub fn stream_in_words(self) -> &'static [usize] {
        match self {
            KernelRole::FullAdvect => &[12, 12],
            KernelRole::AddHalf(_) | KernelRole::MulHalf(_) | KernelRole::SubReduce => &[4, 4],
            KernelRole::CascadeAdd => &[8, 8],
            KernelRole::CascadeMulSubReduce => &[4, 4],
            _ => &[],
        }
    }

    /// Vector-op issue slots per iteration.
    pub fn vec_ops(self) -> u32 {
        match self {
            KernelRole::FullAdvect => 4, // add, mul, sub, reduce
            KernelRole::AddHalf(_) | KernelRole::WinAddHalf(_) => 1,
            KernelRole::MulHalf(_) | KernelRole::WinMulHalf(_) => 1,
            KernelRole::SubReduce | KernelRole::WinSubReduce => 2, // sub, reduce
            KernelRole::CascadeAdd => 1,
            KernelRole::CascadeMulSubReduce => 3, // mul, sub, reduce
            KernelRole::WinSubOnly => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum InRef {
    Plio(usize),
    Stream(usize),
}

#[derive(Debug, Clone, Copy)]
pub enum OutRef {
    Plio(usize),
    Stream(usize),
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct KernelCounters {
    pub active: u64,
    pub stall: u64,
    pub idle: u64,
    pub invocations: u64,
}

#[derive(Debug)]
enum KState {
    /// Stream kernels: read the 4-word cell-count header from every stream
    /// input, then forward it on internal outputs.
    Header { got: Vec<Vec<u32>>, forwarded: Vec<usize>, count: Option<u64> },
    Read { got: Vec<Vec<u32>>, cascade: Option<[u32; 8]> },
    Compute { left: u32 },
    Write { sent: Vec<usize>, cascade_sent: bool },
    /// Window kernels: waiting for input banks sealed and output banks free.
    WaitBanks,
    Restart { left: u64 },
    WinCell { cell: u64, micro: Micro },
    Done,
}

#[derive(Debug)]
enum Micro {
    Load { left: u32 },
    Vec { left: u32 },
    Store { left: u32 },
}

#[derive(Debug)]
pub struct KernelExec {
    pub label: String,
    pub field: Field,
    pub role: KernelRole,
    pub lanes: u8,
    pub cells_per_iter: usize,
    pub restart_ticks: u64,

    pub stream_in: Vec<InRef>,
    pub cascade_in: Option<usize>,
    pub stream_out: Vec<OutRef>,
    pub cascade_out: Option<usize>,
    pub win_in: Vec<usize>,
    pub win_out: Vec<usize>,

    /// Window kernels: total cells and chunk size for invocation math.
    pub total_cells: u64,
    pub chunk_cells: u64,

    state: KState,
    /// Iterations completed (stream) or next chunk index (window).
    pub progress_index: u64,
    pub iters_total: Option<u64>,
    out_words: Vec<Vec<u32>>,
    out_cascade: Option<([u32; 8], u8)>,
    acquired_in: Vec<usize>,
    acquired_out: Vec<u64>,
    pub counters: KernelCounters,
}

/// Borrowed transport arenas a kernel can touch during its tick.
pub struct TileIo<'a> {
    pub tick: u64,
    pub plio_in: &'a mut [PlioInPort],
    pub plio_out: &'a mut [PlioOutPort],
    pub streams: &'a mut [StreamChannel],
    pub cascades: &'a mut [CascadeChannel],
    pub windows: &'a mut [WindowBuffer],
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KernelError {
    #[error("kernel {kernel}: header cell counts disagree across inputs: {counts:?}")]
    HeaderMismatch { kernel: String, counts: Vec<u64> },
}

impl KernelExec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label: String,
        field: Field,
        role: KernelRole,
        lanes: u8,
        cells_per_iter: usize,
        restart_ticks: u64,
        total_cells: u64,
        chunk_cells: u64,
    ) -> KernelExec {
        let state = if role.is_window() {
            KState::WaitBanks
        } else {
            KState::Header { got: Vec::new(), forwarded: Vec::new(), count: None }
        };
        KernelExec {
            label,
            field,
            role,
            lanes,
            cells_per_iter,
            restart_ticks,
            stream_in: Vec::new(),
            cascade_in: None,
            stream_out: Vec::new(),
            cascade_out: None,
            win_in: Vec::new(),
            win_out: Vec::new(),
            total_cells,
            chunk_cells,
            state,
            progress_index: 0,
            iters_total: None,
            out_words: Vec::new(),
            out_cascade: None,
            acquired_in: Vec::new(),
            acquired_out: Vec::new(),
            counters: KernelCounters::default(),
        }
    }

    pub fn done(&self) -> bool {
        matches!(self.state, KState::Done)
    }

    /// The chunk currently being processed, if inside an invocation.
    /// Strict-phase window admission keys off this.
    pub fn active_chunk(&self) -> Option<u64> {
        match self.state {
            KState::Restart { .. } | KState::WinCell { .. } => Some(self.progress_index),
            _ => None,
        }
    }

    /// Human-readable description of what the kernel is waiting on, for
    /// deadlock diagnostics. None when running or done.
    pub fn blocked_reason(
        &self,
        windows: &[WindowBuffer],
        plio_in: &[PlioInPort],
        streams: &[StreamChannel],
    ) -> Option<String> {
        let src_label = |r: &InRef| match *r {
            InRef::Plio(p) => plio_in[p].label.clone(),
            InRef::Stream(s) => streams[s].label.clone(),
        };
        match &self.state {
            KState::Done => None,
            KState::WaitBanks => {
                if self.progress_index >= chunks_of(self.total_cells, self.chunk_cells) {
                    return None;
                }
                let mut waits = Vec::new();
                for &w in &self.win_in {
                    if windows[w].sealed_bank(self.progress_index).is_none() {
                        waits.push(format!(
                            "input window {} chunk {}",
                            windows[w].label, self.progress_index
                        ));
                    }
                }
                for &w in &self.win_out {
                    let win = &windows[w];
                    if !win.banks.iter().any(|b| b.state == super::window::BankState::Free) {
                        waits.push(format!("output window {} bank", win.label));
                    }
                }
                if waits.is_empty() {
                    None
                } else {
                    Some(format!("kernel {} waiting for {}", self.label, waits.join(", ")))
                }
            }
            KState::Header { got, .. } | KState::Read { got, .. } => {
                let needs: Vec<String> = self
                    .stream_in
                    .iter()
                    .enumerate()
                    .filter(|(slot, _)| {
                        let need = match &self.state {
                            KState::Header { .. } => 4,
                            _ => self.role.stream_in_words()[*slot],
                        };
                        got.get(*slot).map_or(true, |g| g.len() < need)
                    })
                    .map(|(_, r)| src_label(r))
                    .collect();
                if needs.is_empty() {
                    None
                } else {
                    Some(format!(
                        "kernel {} starved on stream read from {}",
                        self.label,
                        needs.join(", ")
                    ))
                }
            }
            KState::Write { .. } => Some(format!("kernel {} blocked on stream write", self.label)),
            _ => None,
        }
    }

    /// One tile tick. Returns true when any state advanced.
    pub fn step(&mut self, io: &mut TileIo) -> Result<bool, KernelError> {
        match std::mem::replace(&mut self.state, KState::Done) {
            KState::Done => {
                self.counters.idle += 1;
                self.state = KState::Done;
                Ok(false)
            }
            KState::Header { got, forwarded, count } => self.step_header(io, got, forwarded, count),
            KState::Read { got, cascade } => Ok(self.step_read(io, got, cascade)),
            KState::Compute { left } => Ok(self.step_compute(left)),
            KState::Write { sent, cascade_sent } => Ok(self.step_write(io, sent, cascade_sent)),
            KState::WaitBanks => Ok(self.step_wait_banks(io)),
            KState::Restart { left } => Ok(self.step_restart(left)),
            KState::WinCell { cell, micro } => Ok(self.step_win_cell(io, cell, micro)),
        }
    }

    fn step_header(
        &mut self,
        io: &mut TileIo,
        mut got: Vec<Vec<u32>>,
        mut forwarded: Vec<usize>,
        mut count: Option<u64>,
    ) -> Result<bool, KernelError> {
        got.resize(self.stream_in.len(), Vec::new());
        forwarded.resize(self.stream_out.len(), 0);
        let mut moved = false;
        if count.is_none() {
            for (slot, src) in self.stream_in.iter().enumerate() {
                if got[slot].len() < 4 {
                    if let Some(w) = pop_in(src, io) {
                        got[slot].push(w);
                        moved = true;
                    }
                }
            }
            if got.iter().all(|g| g.len() == 4) {
                let counts: Vec<u64> =
                    got.iter().map(|g| f32::from_bits(g[0]) as u64).collect();
                if counts.windows(2).any(|p| p[0] != p[1]) {
                    return Err(KernelError::HeaderMismatch {
                        kernel: self.label.clone(),
                        counts,
                    });
                }
                count = Some(counts[0]);
                self.iters_total = Some(counts[0]);
            }
        }
        if let Some(n) = count {
            // Forward the header on internal outputs so downstream kernels
            // learn their iteration count the same way.
            let mut all = true;
            for (slot, out) in self.stream_out.iter().enumerate() {
                if let OutRef::Stream(_) = out {
                    while forwarded[slot] < 4 {
                        let word = if forwarded[slot] == 0 { (n as f32).to_bits() } else { 0 };
                        if push_out(out, io, word) {
                            forwarded[slot] += 1;
                            moved = true;
                            break; // one word per tick per port
                        } else {
                            break;
                        }
                    }
                    if forwarded[slot] < 4 {
                        all = false;
                    }
                }
            }
            if all {
                self.counters.stall += 1;
                self.state = if n == 0 {
                    KState::Done
                } else {
                    KState::Read { got: Vec::new(), cascade: None }
                };
                return Ok(true);
            }
        }
        self.counters.stall += 1;
        self.state = KState::Header { got, forwarded, count };
        Ok(moved)
    }

    fn step_read(&mut self, io: &mut TileIo, mut got: Vec<Vec<u32>>, mut cascade: Option<[u32; 8]>) -> bool {
        got.resize(self.stream_in.len(), Vec::new());
        let needs = self.role.stream_in_words();
        let mut moved = false;
        for (slot, src) in self.stream_in.iter().enumerate() {
            if got[slot].len() < needs[slot] {
                if let Some(w) = pop_in(src, io) {
                    got[slot].push(w);
                    moved = true;
                }
            }
        }
        if cascade.is_none() {
            if let Some(c) = self.cascade_in {
                if io.cascades[c].can_pop() {
                    let (words, _) = io.cascades[c].pop();
                    cascade = Some(words);
                    moved = true;
                }
            }
        }
        let streams_done = got.iter().zip(needs).all(|(g, &n)| g.len() == n);
        let cascade_done = self.cascade_in.is_none() || cascade.is_some();
        self.counters.stall += 1;
        if streams_done && cascade_done {
            let (outs, casc) = compute_stream_outputs(self.role, &got, cascade.as_ref());
            self.out_words = outs;
            self.out_cascade = casc;
            self.state = KState::Compute { left: self.role.vec_ops() };
        } else {
            self.state = KState::Read { got, cascade };
        }
        moved
    }

    fn step_compute(&mut self, left: u32) -> bool {
        self.counters.active += 1;
        if left > 1 {
            self.state = KState::Compute { left: left - 1 };
        } else {
            self.state = KState::Write { sent: vec![0; self.stream_out.len()], cascade_sent: false };
        }
        true
    }

    fn step_write(&mut self, io: &mut TileIo, mut sent: Vec<usize>, mut cascade_sent: bool) -> bool {
        let mut moved = false;
        for (slot, out) in self.stream_out.iter().enumerate() {
            if sent[slot] < self.out_words[slot].len() {
                let word = self.out_words[slot][sent[slot]];
                if push_out(out, io, word) {
                    sent[slot] += 1;
                    moved = true;
                }
            }
        }
        if !cascade_sent {
            if let (Some(c), Some((words, n))) = (self.cascade_out, self.out_cascade) {
                if io.cascades[c].can_push(io.tick) {
                    io.cascades[c].push(io.tick, words, n);
                    cascade_sent = true;
                    moved = true;
                }
            } else {
                cascade_sent = true;
            }
        }
        self.counters.stall += 1;
        let all_sent = sent
            .iter()
            .enumerate()
            .all(|(slot, &s)| s == self.out_words[slot].len())
            && cascade_sent;
        if all_sent {
            self.progress_index += 1;
            if self.counters.invocations == 0 {
                self.counters.invocations = 1;
            }
            self.state = if Some(self.progress_index) == self.iters_total {
                KState::Done
            } else {
                KState::Read { got: Vec::new(), cascade: None }
            };
        } else {
            self.state = KState::Write { sent, cascade_sent };
        }
        moved
    }

    fn step_wait_banks(&mut self, io: &mut TileIo) -> bool {
        let chunk = self.progress_index;
        let chunks = chunks_of(self.total_cells, self.chunk_cells);
        if chunk >= chunks {
            self.state = KState::Done;
            return false;
        }
        let inputs_ready = self.win_in.iter().all(|&w| io.windows[w].sealed_bank(chunk).is_some());
        let outputs_free = self.win_out.iter().all(|&w| {
            io.windows[w].banks.iter().any(|b| b.state == super::window::BankState::Free)
        });
        if inputs_ready && outputs_free {
            self.acquired_in = self.win_in.iter().map(|&w| io.windows[w].acquire(chunk)).collect();
            for &w in &self.win_out {
                let ok = io.windows[w].begin_kernel_fill(chunk);
                debug_assert!(ok);
                self.acquired_out.push(chunk);
            }
            self.counters.invocations += 1;
            self.state = KState::Restart { left: self.restart_ticks };
            if self.restart_ticks == 0 {
                self.state = KState::WinCell { cell: 0, micro: Micro::Load { left: 1 } };
            }
            true
        } else {
            self.counters.idle += 1;
            self.state = KState::WaitBanks;
            false
        }
    }

    fn step_restart(&mut self, left: u64) -> bool {
        self.counters.stall += 1;
        self.state = if left > 1 {
            KState::Restart { left: left - 1 }
        } else {
            KState::WinCell { cell: 0, micro: Micro::Load { left: 1 } }
        };
        true
    }

    fn step_win_cell(&mut self, io: &mut TileIo, cell: u64, micro: Micro) -> bool {
        let chunk = self.progress_index;
        let cells = io.windows[self.win_in[0]].cells_in_chunk(chunk);
        self.counters.active += 1;
        match micro {
            Micro::Load { left } => {
                if left > 1 {
                    self.state = KState::WinCell { cell, micro: Micro::Load { left: left - 1 } };
                } else {
                    self.state =
                        KState::WinCell { cell, micro: Micro::Vec { left: self.role.vec_ops() } };
                }
            }
            Micro::Vec { left } => {
                if left > 1 {
                    self.state = KState::WinCell { cell, micro: Micro::Vec { left: left - 1 } };
                } else {
                    self.state = KState::WinCell { cell, micro: Micro::Store { left: 1 } };
                }
            }
            Micro::Store { left } => {
                if left > 1 {
                    self.state = KState::WinCell { cell, micro: Micro::Store { left: left - 1 } };
                    return true;
                }
                // Store completes this iteration: compute and bank the outputs.
                let step_cells = (self.cells_per_iter as u64).min(cells - cell);
                let ins: Vec<Vec<u32>> = self
                    .win_in
                    .iter()
                    .zip(&self.acquired_in)
                    .map(|(&w, &bank)| {
                        let win = &io.windows[w];
                        let wpc = win.words_per_cell;
                        let from = cell as usize * wpc;
                        win.bank_data(bank)[from..from + wpc * step_cells as usize].to_vec()
                    })
                    .collect();
                let outs = compute_window_outputs(self.role, step_cells as usize, &ins);
                for (&w, words) in self.win_out.iter().zip(&outs) {
                    io.windows[w].kernel_fill_words(chunk, words);
                }
                let next = cell + step_cells;
                if next < cells {
                    self.state = KState::WinCell { cell: next, micro: Micro::Load { left: 1 } };
                } else {
                    for (&w, &bank) in self.win_in.iter().zip(&self.acquired_in) {
                        io.windows[w].release(bank);
                    }
                    for &w in &self.win_out {
                        io.windows[w].seal_kernel_fill(chunk);
                    }
                    self.acquired_in.clear();
                    self.acquired_out.clear();
                    self.progress_index += 1;
                    self.state = KState::WaitBanks;
                }
            }
        }
        true
    }
}

fn chunks_of(total: u64, chunk: u64) -> u64 {
    (total + chunk - 1) / chunk
}

fn pop_in(src: &InRef, io: &mut TileIo) -> Option<u32> {
    match *src {
        InRef::Plio(p) => {
            if io.plio_in[p].can_pop(io.tick) {
                Some(io.plio_in[p].pop(io.tick))
            } else {
                None
            }
        }
        InRef::Stream(s) => {
            if io.streams[s].can_pop(io.tick) {
                Some(io.streams[s].pop(io.tick))
            } else {
                None
            }
        }
    }
}

fn push_out(out: &OutRef, io: &mut TileIo, word: u32) -> bool {
    match *out {
        OutRef::Plio(p) => {
            if io.plio_out[p].can_push(io.tick) {
                io.plio_out[p].push(io.tick, word);
                true
            } else {
                false
            }
        }
        OutRef::Stream(s) => {
            if io.streams[s].can_push(io.tick) {
                io.streams[s].push(io.tick, word);
                true
            } else {
                false
            }
        }
    }
}

fn f(bits: u32) -> f32 {
    f32::from_bits(bits)
}

fn arr8(words: &[u32]) -> [f32; 8] {
    std::array::from_fn(|l| f(words[l]))
}

/// Stream-kernel arithmetic: consumed words to output words, using the
/// shared exact lane functions so every variant matches the oracle bitwise.
fn compute_stream_outputs(
    role: KernelRole,
    ins: &[Vec<u32>],
    cascade: Option<&[u32; 8]>,
) -> (Vec<Vec<u32>>, Option<([u32; 8], u8)>) {
    match role {
        KernelRole::FullAdvect => {
            // Port A: lhs lanes 0..8 then mul 0..4; port B: rhs then mul 4..8.
            let lhs = arr8(&ins[0][0..8]);
            let rhs = arr8(&ins[1][0..8]);
            let mut mul = [0f32; 8];
            for l in 0..4 {
                mul[l] = f(ins[0][8 + l]);
                mul[4 + l] = f(ins[1][8 + l]);
            }
            let p = lane_products(&lane_sums(&lhs, &rhs), &mul);
            let r = reduce4(&lane_differences(&p));
            (vec![vec![r.to_bits()]], None)
        }
        KernelRole::AddHalf(_) | KernelRole::CascadeAdd => {
            let n = ins[0].len();
            let sums: Vec<u32> =
                (0..n).map(|l| (f(ins[0][l]) + f(ins[1][l])).to_bits()).collect();
            if role == KernelRole::CascadeAdd {
                let mut words = [0u32; 8];
                words[..n].copy_from_slice(&sums);
                (vec![], Some((words, n as u8)))
            } else {
                (vec![sums], None)
            }
        }
        KernelRole::MulHalf(_) => {
            // Slot 0 carries the multiplier operands, slot 1 the sums.
            let prods: Vec<u32> =
                (0..4).map(|l| (f(ins[1][l]) * f(ins[0][l])).to_bits()).collect();
            (vec![prods], None)
        }
        KernelRole::SubReduce => {
            let mut p = [0f32; 8];
            for l in 0..4 {
                p[l] = f(ins[0][l]);
                p[4 + l] = f(ins[1][l]);
            }
            let r = reduce4(&lane_differences(&p));
            (vec![vec![r.to_bits()]], None)
        }
        KernelRole::CascadeMulSubReduce => {
            let sums = arr8(&cascade.expect("cascade payload")[..]);
            let mut mul = [0f32; 8];
            for l in 0..4 {
                mul[l] = f(ins[0][l]);
                mul[4 + l] = f(ins[1][l]);
            }
            let p = lane_products(&sums, &mul);
            let r = reduce4(&lane_differences(&p));
            (vec![vec![r.to_bits()]], None)
        }
        _ => unreachable!("window roles use compute_window_outputs"),
    }
}

/// Window-kernel arithmetic for `cells` packed cells (1, or 2 when
/// double-vectorized).
fn compute_window_outputs(role: KernelRole, cells: usize, ins: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut outs: Vec<Vec<u32>> = vec![Vec::new(); 1];
    for c in 0..cells {
        let at = |input: usize, l: usize| f(ins[input][c * 4 + l]);
        match role {
            KernelRole::WinAddHalf(_) => {
                for l in 0..4 {
                    outs[0].push((at(0, l) + at(1, l)).to_bits());
                }
            }
            KernelRole::WinMulHalf(_) => {
                // Input 0: multiplier operands; input 1: sums.
                for l in 0..4 {
                    outs[0].push((at(1, l) * at(0, l)).to_bits());
                }
            }
            KernelRole::WinSubReduce | KernelRole::WinSubOnly => {
                let mut p = [0f32; 8];
                for l in 0..4 {
                    p[l] = at(0, l);
                    p[4 + l] = at(1, l);
                }
                let d = lane_differences(&p);
                if role == KernelRole::WinSubReduce {
                    outs[0].push(reduce4(&d).to_bits());
                } else {
                    outs[0].extend(d.iter().map(|x| x.to_bits()));
                }
            }
            _ => unreachable!("stream roles use compute_stream_outputs"),
        }
    }
    outs
}
