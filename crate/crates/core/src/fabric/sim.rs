//! World assembly and the deterministic tick loop.
//!
//! Evaluation order within a tick is fixed: PL stages (on ticks divisible by
//! the clock ratio), then tiles in placement order, then channel transfers.
//! Identical configurations produce identical tick-by-tick traces.

use thiserror::Error;

use crate::grid::{Field, Grid3D};
use crate::pl::{FieldConsumer, FieldProducer, PingPongBuf, PlOnlyPipeline};
use crate::variants::{
    cells_for_copy, KernelGraph, PlanKind, PlioInTarget, PlioOutSource, PlPlan, WinDrain, WinFill,
};

use super::channel::{CascadeChannel, PlioInPort, PlioOutPort, StreamChannel};
use super::clock::ClockConfig;
use super::kernel::{InRef, KernelCounters, KernelError, KernelExec, OutRef, TileIo};
use super::window::WindowBuffer;

#[derive(Debug, Clone)]
pub struct FabricConfig {
    pub clock: ClockConfig,
    /// Stream and PLIO FIFO depth in 32-bit words.
    pub fifo_depth: usize,
    /// Window-kernel restart overhead per invocation, tile ticks.
    pub restart_ticks: u64,
    /// PL-side ping-pong buffering on the multiplication streams.
    pub pl_pingpong: bool,
    /// Quiescence threshold for deadlock detection, ticks.
    pub quiescence_ticks: u64,
    /// Hard safety limit; exceeding it is an internal error.
    pub tick_limit: u64,
    pub trace: bool,
    /// Test hook: replace the cell-count header on the named port.
    pub header_override: Option<(String, u64)>,
}

impl Default for FabricConfig {
    fn default() -> FabricConfig {
        FabricConfig {
            clock: ClockConfig::default(),
            fifo_depth: 32,
            restart_ticks: 48,
            pl_pingpong: true,
            quiescence_ticks: 10_000,
            tick_limit: 500_000_000,
            trace: false,
            header_override: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("deadlock at tick {tick}: no entity progressed for {quiescence} ticks\n{}", blocked.join("\n"))]
    Deadlock { tick: u64, quiescence: u64, blocked: Vec<String> },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("tick limit {0} exceeded; simulation did not converge")]
    TickLimit(u64),
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PortBeats {
    pub label: String,
    pub data_beats: u64,
}

/// Raw counters out of one compute unit's run.
#[derive(Debug)]
pub struct RunStats {
    pub ticks: u64,
    pub pl_cycles: u64,
    pub cells: u64,
    pub kernels: Vec<(String, KernelCounters)>,
    pub in_ports: Vec<PortBeats>,
    pub producer_active_cycles: u64,
    pub producer_stall_cycles: u64,
    pub mul_blocked_cycles: u64,
    /// Captured source terms per field, in emission order.
    pub results: [Vec<f32>; 3],
    pub trace: Vec<String>,
}

struct InDma {
    port: usize,
    window: usize,
}

struct OutDma {
    window: usize,
    port: usize,
    chunk: u64,
    pos: usize,
    bank: Option<usize>,
}

pub struct World<'g> {
    grid: &'g Grid3D,
    cfg: FabricConfig,
    kind: PlanKind,
    ratio: u64,
    plio_in: Vec<PlioInPort>,
    plio_out: Vec<PlioOutPort>,
    streams: Vec<StreamChannel>,
    cascades: Vec<CascadeChannel>,
    windows: Vec<WindowBuffer>,
    kernels: Vec<KernelExec>,
    producers: Vec<FieldProducer>,
    pingpongs: Vec<PingPongBuf>,
    pingpong_of: Vec<Option<usize>>,
    consumers: Vec<FieldConsumer>,
    pl_only: Option<PlOnlyPipeline>,
    in_dmas: Vec<InDma>,
    out_dmas: Vec<OutDma>,
    /// Consuming kernel per window, for strict-phase admission.
    win_consumer: Vec<Option<usize>>,
    tick: u64,
    last_progress: u64,
    trace: Vec<String>,
}

impl<'g> World<'g> {
    /// Builds the per-CU world. The graph must describe a single compute
    /// unit; multi-CU runs simulate each slab in its own world.
    pub fn build(grid: &'g Grid3D, graph: &KernelGraph, plan: &PlPlan, cfg: FabricConfig) -> World<'g> {
        assert_eq!(graph.spec.cus, 1, "worlds are per compute unit");
        let n_cells = grid.interior_cells() as u64;
        let chunk = graph.spec.effective_chunk() as u64;
        let strict_windows =
            graph.spec.name.chunked() && !cfg.pl_pingpong;

        let plio_in: Vec<PlioInPort> = graph
            .plio_inputs
            .iter()
            .map(|d| PlioInPort::new(d.label.clone(), d.width_bits, cfg.fifo_depth))
            .collect();
        let plio_out: Vec<PlioOutPort> = graph
            .plio_outputs
            .iter()
            .map(|d| PlioOutPort::new(d.label.clone(), d.width_bits, cfg.fifo_depth))
            .collect();
        let streams: Vec<StreamChannel> = graph
            .stream_edges
            .iter()
            .map(|e| StreamChannel::new(e.label.clone(), cfg.fifo_depth))
            .collect();
        let cascades: Vec<CascadeChannel> =
            graph.cascade_edges.iter().map(|e| CascadeChannel::new(e.label.clone())).collect();
        let windows: Vec<WindowBuffer> = graph
            .windows
            .iter()
            .map(|d| {
                let strict = strict_windows && d.mul_path && matches!(d.fill, WinFill::Plio(_));
                WindowBuffer::new(d.label.clone(), d.words_per_cell, chunk as usize, n_cells, strict)
            })
            .collect();
        let win_consumer: Vec<Option<usize>> = graph
            .windows
            .iter()
            .map(|d| match d.drain {
                WinDrain::Kernel(k) => Some(k),
                WinDrain::Plio(_) => None,
            })
            .collect();

        let mut kernels: Vec<KernelExec> = graph
            .kernels
            .iter()
            .map(|n| {
                let mut k = KernelExec::new(
                    n.label.clone(),
                    n.field,
                    n.role,
                    n.lanes,
                    n.cells_per_iter,
                    cfg.restart_ticks,
                    n_cells,
                    chunk,
                );
                k.win_in = n.win_in.clone();
                k.win_out = n.win_out.clone();
                k
            })
            .collect();
        // Wire stream inputs/outputs in slot order.
        for (ki, k) in kernels.iter_mut().enumerate() {
            let mut ins: Vec<(u8, InRef)> = Vec::new();
            for (pi, d) in graph.plio_inputs.iter().enumerate() {
                if let PlioInTarget::KernelStream { kernel, slot } = d.target {
                    if kernel == ki {
                        ins.push((slot, InRef::Plio(pi)));
                    }
                }
            }
            for (si, e) in graph.stream_edges.iter().enumerate() {
                if e.to.0 == ki {
                    ins.push((e.to.1, InRef::Stream(si)));
                }
            }
            ins.sort_by_key(|(slot, _)| *slot);
            k.stream_in = ins.into_iter().map(|(_, r)| r).collect();

            let mut outs: Vec<(u8, OutRef)> = Vec::new();
            for (po, d) in graph.plio_outputs.iter().enumerate() {
                if let PlioOutSource::KernelStream { kernel, slot } = d.source {
                    if kernel == ki {
                        outs.push((slot, OutRef::Plio(po)));
                    }
                }
            }
            for (si, e) in graph.stream_edges.iter().enumerate() {
                if e.from.0 == ki {
                    outs.push((e.from.1, OutRef::Stream(si)));
                }
            }
            outs.sort_by_key(|(slot, _)| *slot);
            k.stream_out = outs.into_iter().map(|(_, r)| r).collect();

            for (ci, e) in graph.cascade_edges.iter().enumerate() {
                if e.to == ki {
                    k.cascade_in = Some(ci);
                }
                if e.from == ki {
                    k.cascade_out = Some(ci);
                }
            }
        }

        let mut pingpong_of: Vec<Option<usize>> = vec![None; plio_in.len()];
        let mut pingpongs = Vec::new();
        if graph.spec.name.chunked() && cfg.pl_pingpong {
            for (pi, d) in graph.plio_inputs.iter().enumerate() {
                if d.mul_path {
                    // One beat per cell on the multiplication path.
                    pingpong_of[pi] = Some(pingpongs.len());
                    pingpongs.push(PingPongBuf::new(
                        format!("pingpong.{}", d.label),
                        pi,
                        chunk,
                        n_cells,
                    ));
                }
            }
        }

        let mut producers = Vec::new();
        let mut consumers = Vec::new();
        for fp in &plan.fields {
            if plan.kind != PlanKind::PlOnly {
                let headers = fp
                    .headers
                    .iter()
                    .map(|h| {
                        let mut count = cells_for_copy(n_cells, fp.copies, h.copy);
                        if let Some((label, n)) = &cfg.header_override {
                            if plio_in[h.port].label == *label {
                                count = *n;
                            }
                        }
                        (h.port, count)
                    })
                    .collect();
                producers.push(FieldProducer::new(fp.field, grid, fp.schedule.clone(), headers));
                consumers.push(FieldConsumer::new(fp.field, fp.consumer, fp.out_ports.clone(), n_cells));
            }
        }
        let pl_only =
            if plan.kind == PlanKind::PlOnly { Some(PlOnlyPipeline::new(grid)) } else { None };

        let in_dmas = graph
            .plio_inputs
            .iter()
            .enumerate()
            .filter_map(|(pi, d)| match d.target {
                PlioInTarget::Window { window } => Some(InDma { port: pi, window }),
                _ => None,
            })
            .collect();
        let out_dmas = graph
            .plio_outputs
            .iter()
            .enumerate()
            .filter_map(|(po, d)| match d.source {
                PlioOutSource::Window { window } => {
                    Some(OutDma { window, port: po, chunk: 0, pos: 0, bank: None })
                }
                _ => None,
            })
            .collect();

        World {
            grid,
            ratio: cfg.clock.ratio(),
            kind: plan.kind,
            cfg,
            plio_in,
            plio_out,
            streams,
            cascades,
            windows,
            kernels,
            producers,
            pingpongs,
            pingpong_of,
            consumers,
            pl_only,
            in_dmas,
            out_dmas,
            win_consumer,
            tick: 0,
            last_progress: 0,
            trace: Vec::new(),
        }
    }

    fn complete(&self) -> bool {
        match self.kind {
            PlanKind::PlOnly => self.pl_only.as_ref().is_some_and(|p| p.done()),
            _ => self.consumers.iter().all(|c| c.done()),
        }
    }

    /// Runs to completion and harvests the counters.
    pub fn run_to_completion(mut self) -> Result<RunStats, SimError> {
        loop {
            let mut progressed = false;

            // PL stages act on PL-cycle boundaries.
            if self.tick % self.ratio == 0 {
                if let Some(pipe) = self.pl_only.as_mut() {
                    progressed |= pipe.step(self.grid);
                }
                for p in &mut self.producers {
                    progressed |= p.step(self.grid, &mut self.plio_in, &self.pingpong_of, &mut self.pingpongs);
                }
                for pp in &mut self.pingpongs {
                    progressed |= pp.step(&mut self.plio_in);
                }
                for c in &mut self.consumers {
                    progressed |= c.step(&mut self.plio_out);
                }
            }

            // Tiles in placement order.
            {
                let World { kernels, plio_in, plio_out, streams, cascades, windows, tick, .. } =
                    &mut self;
                let mut io = TileIo {
                    tick: *tick,
                    plio_in: &mut plio_in[..],
                    plio_out: &mut plio_out[..],
                    streams: &mut streams[..],
                    cascades: &mut cascades[..],
                    windows: &mut windows[..],
                };
                for k in kernels.iter_mut() {
                    progressed |= k.step(&mut io)?;
                }
            }

            // Channel transfers: PLIO beat unpacking and window DMAs.
            for p in &mut self.plio_in {
                progressed |= p.step_unpack();
            }
            for d in &self.in_dmas {
                progressed |= step_in_dma(
                    d,
                    &mut self.plio_in,
                    &mut self.windows,
                    &self.kernels,
                    &self.win_consumer,
                    self.tick,
                );
            }
            for d in &mut self.out_dmas {
                progressed |= step_out_dma(d, &mut self.windows, &mut self.plio_out, self.tick);
            }

            if progressed {
                self.last_progress = self.tick;
            }
            if self.complete() {
                return Ok(self.finish());
            }
            if self.tick - self.last_progress >= self.cfg.quiescence_ticks {
                let q = self.cfg.quiescence_ticks;
                let t = self.tick;
                return Err(SimError::Deadlock { tick: t, quiescence: q, blocked: self.blocked_report() });
            }
            if self.tick >= self.cfg.tick_limit {
                return Err(SimError::TickLimit(self.cfg.tick_limit));
            }
            self.tick += 1;
        }
    }

    fn blocked_report(&self) -> Vec<String> {
        let mut out = Vec::new();
        for p in &self.producers {
            if let Some(r) = p.blocked_reason(&self.plio_in) {
                out.push(r);
            }
        }
        for (wi, w) in self.windows.iter().enumerate() {
            if w.strict_phase && w.fill_chunk > 0 && w.fill_chunk < w.chunks() {
                let active = self.win_consumer[wi].and_then(|k| self.kernels[k].active_chunk());
                if active != Some(w.fill_chunk - 1) {
                    out.push(format!(
                        "window {}: waiting to become free for chunk {} (consumer invocation {} not active)",
                        w.label,
                        w.fill_chunk,
                        w.fill_chunk - 1
                    ));
                }
            }
        }
        for k in &self.kernels {
            if let Some(r) = k.blocked_reason(&self.windows, &self.plio_in, &self.streams) {
                out.push(r);
            }
        }
        for c in &self.consumers {
            if !c.done() {
                out.push(format!(
                    "consumer.{}: captured {} of {} results",
                    c.field.short(),
                    c.results.len(),
                    c.n_cells
                ));
            }
        }
        out
    }

    fn finish(self) -> RunStats {
        let ticks = self.tick + 1;
        let producer_active_cycles = self
            .pl_only
            .as_ref()
            .map(|p| p.active_cycles)
            .unwrap_or_else(|| self.producers.iter().map(|p| p.active_cycles).max().unwrap_or(0));
        let producer_stall_cycles = self.producers.iter().map(|p| p.stall_cycles).sum();
        let mul_blocked_cycles = self.producers.iter().map(|p| p.mul_blocked_cycles).sum();
        let mut results: [Vec<f32>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        if let Some(pipe) = self.pl_only {
            results = pipe.results;
        } else {
            for c in self.consumers {
                let slot = Field::ALL.iter().position(|f| *f == c.field).expect("known field");
                results[slot] = c.results;
            }
        }
        RunStats {
            ticks,
            pl_cycles: ticks.div_ceil(self.ratio),
            cells: self.grid.interior_cells() as u64,
            kernels: self.kernels.iter().map(|k| (k.label.clone(), k.counters)).collect(),
            in_ports: self
                .plio_in
                .iter()
                .map(|p| PortBeats { label: p.label.clone(), data_beats: p.data_beats })
                .collect(),
            producer_active_cycles,
            producer_stall_cycles,
            mul_blocked_cycles,
            results,
            trace: self.trace,
        }
    }
}

fn step_in_dma(
    dma: &InDma,
    plio_in: &mut [PlioInPort],
    windows: &mut [WindowBuffer],
    kernels: &[KernelExec],
    win_consumer: &[Option<usize>],
    tick: u64,
) -> bool {
    let win = &mut windows[dma.window];
    if !win.fill_bank_ready() {
        return false;
    }
    if win.strict_phase && win.fill_chunk > 0 {
        let active = win_consumer[dma.window].and_then(|k| kernels[k].active_chunk());
        if active != Some(win.fill_chunk - 1) {
            return false;
        }
    }
    let port = &mut plio_in[dma.port];
    if !port.can_pop(tick) {
        return false;
    }
    let w = port.pop(tick);
    win.fill_word(w);
    true
}

fn step_out_dma(
    dma: &mut OutDma,
    windows: &mut [WindowBuffer],
    plio_out: &mut [PlioOutPort],
    tick: u64,
) -> bool {
    let win = &mut windows[dma.window];
    if dma.bank.is_none() {
        if dma.chunk >= win.chunks() {
            return false;
        }
        if win.sealed_bank(dma.chunk).is_none() {
            return false;
        }
        dma.bank = Some(win.acquire(dma.chunk));
        dma.pos = 0;
    }
    let bank = dma.bank.expect("acquired");
    let port = &mut plio_out[dma.port];
    if !port.can_push(tick) {
        return false;
    }
    let word = win.bank_data(bank)[dma.pos];
    port.push(tick, word);
    dma.pos += 1;
    if dma.pos == win.bank_data(bank).len() {
        win.release(bank);
        dma.bank = None;
        dma.chunk += 1;
    }
    true
}
