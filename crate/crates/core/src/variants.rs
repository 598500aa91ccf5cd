//! Graph builders for the PL-only baseline and the eight tile-array designs,
//! all with identical numerical semantics. A build yields the kernel graph
//! (for validation and channel accounting) plus the PL plan (packer
//! schedules, header rules, consumer modes) the simulator executes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabric::kernel::KernelRole;
use crate::grid::Field;
use crate::pl::{ConsumerMode, PackedBeat, WordSel};

pub const DEFAULT_CHUNK_CELLS: usize = 256;
pub const DEFAULT_MULTIPLEX_WAYS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantName {
    #[serde(rename = "pl-only")]
    PlOnly,
    #[serde(rename = "initial")]
    Initial,
    #[serde(rename = "multi-kernel")]
    MultiKernel,
    #[serde(rename = "cascade")]
    Cascade,
    #[serde(rename = "cascade-multiplex")]
    CascadeMultiplex,
    #[serde(rename = "multi-kernel-windows")]
    MultiKernelWindows,
    #[serde(rename = "chunking-windows")]
    ChunkingWindows,
    #[serde(rename = "reduction-on-host")]
    ReductionOnHost,
    #[serde(rename = "double-vectorization")]
    DoubleVectorization,
}

impl VariantName {
    pub const ALL: [VariantName; 9] = [
        VariantName::PlOnly,
        VariantName::Initial,
        VariantName::MultiKernel,
        VariantName::Cascade,
        VariantName::CascadeMultiplex,
        VariantName::MultiKernelWindows,
        VariantName::ChunkingWindows,
        VariantName::ReductionOnHost,
        VariantName::DoubleVectorization,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantName::PlOnly => "pl-only",
            VariantName::Initial => "initial",
            VariantName::MultiKernel => "multi-kernel",
            VariantName::Cascade => "cascade",
            VariantName::CascadeMultiplex => "cascade-multiplex",
            VariantName::MultiKernelWindows => "multi-kernel-windows",
            VariantName::ChunkingWindows => "chunking-windows",
            VariantName::ReductionOnHost => "reduction-on-host",
            VariantName::DoubleVectorization => "double-vectorization",
        }
    }

    pub fn parse(s: &str) -> Option<VariantName> {
        VariantName::ALL.iter().copied().find(|v| v.as_str() == s)
    }

    pub fn uses_windows(self) -> bool {
        matches!(
            self,
            VariantName::MultiKernelWindows
                | VariantName::ChunkingWindows
                | VariantName::ReductionOnHost
                | VariantName::DoubleVectorization
        )
    }

    /// The chunked family: windows plus the PL-side ping-pong machinery.
    pub fn chunked(self) -> bool {
        matches!(
            self,
            VariantName::ChunkingWindows
                | VariantName::ReductionOnHost
                | VariantName::DoubleVectorization
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: VariantName,
    pub chunk_cells: usize,
    pub multiplex_ways: usize,
    pub cus: usize,
}

impl VariantSpec {
    pub fn new(name: VariantName) -> VariantSpec {
        VariantSpec {
            name,
            chunk_cells: DEFAULT_CHUNK_CELLS,
            multiplex_ways: DEFAULT_MULTIPLEX_WAYS,
            cus: 1,
        }
    }

    pub fn with_cus(name: VariantName, cus: usize) -> VariantSpec {
        VariantSpec { cus, ..VariantSpec::new(name) }
    }

    /// Window chunk size actually used: per-cell windows are the whole point
    /// of the multi-kernel-windows design.
    pub fn effective_chunk(&self) -> usize {
        if self.name == VariantName::MultiKernelWindows {
            1
        } else {
            self.chunk_cells
        }
    }

    pub fn check(&self) -> Result<(), VariantError> {
        if self.cus < 1 {
            return Err(VariantError::InvalidParams("cus must be >= 1".into()));
        }
        if self.chunk_cells < 1 {
            return Err(VariantError::InvalidParams("chunk_cells must be >= 1".into()));
        }
        if self.multiplex_ways != DEFAULT_MULTIPLEX_WAYS
            && self.name != VariantName::CascadeMultiplex
        {
            return Err(VariantError::InvalidParams(format!(
                "multiplex_ways applies only to cascade-multiplex, not {}",
                self.name.as_str()
            )));
        }
        if !(2..=8).contains(&self.multiplex_ways) {
            return Err(VariantError::InvalidParams(format!(
                "multiplex_ways {} out of range 2..=8",
                self.multiplex_ways
            )));
        }
        if self.chunk_cells != DEFAULT_CHUNK_CELLS && !self.name.chunked() {
            return Err(VariantError::InvalidParams(format!(
                "chunk_cells applies only to chunked window variants, not {}",
                self.name.as_str()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VariantError {
    #[error("invalid variant parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone)]
pub struct NodeInfo {
    pub label: String,
    pub field: Field,
    pub cu: usize,
    pub role: KernelRole,
    pub lanes: u8,
    pub cells_per_iter: usize,
    pub chain_pos: u32,
    /// Window indices this kernel reads (operand order) and writes.
    pub win_in: Vec<usize>,
    pub win_out: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct StreamEdge {
    pub label: String,
    pub from: (usize, u8),
    pub to: (usize, u8),
}

#[derive(Debug, Clone)]
pub struct CascadeEdge {
    pub label: String,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WinFill {
    Plio(usize),
    Kernel(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WinDrain {
    Kernel(usize),
    Plio(usize),
}

#[derive(Debug, Clone)]
pub struct WindowDecl {
    pub label: String,
    pub words_per_cell: usize,
    /// Kernel whose tile data memory holds the banks.
    pub owner: usize,
    pub fill: WinFill,
    pub drain: WinDrain,
    /// Carries multiplier operands; subject to the PL ping-pong machinery.
    pub mul_path: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlioInTarget {
    KernelStream { kernel: usize, slot: u8 },
    Window { window: usize },
}

#[derive(Debug, Clone)]
pub struct PlioInDecl {
    pub label: String,
    pub field: Field,
    pub width_bits: u16,
    pub target: PlioInTarget,
    pub mul_path: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlioOutSource {
    KernelStream { kernel: usize, slot: u8 },
    Window { window: usize },
}

#[derive(Debug, Clone)]
pub struct PlioOutDecl {
    pub label: String,
    pub field: Field,
    pub width_bits: u16,
    pub source: PlioOutSource,
}

/// Kernels, their connectivity, placement and PLIO bindings. Immutable once
/// built; the validator and the simulator both work from this.
#[derive(Debug, Clone)]
pub struct KernelGraph {
    pub spec: VariantSpec,
    pub kernels: Vec<NodeInfo>,
    pub stream_edges: Vec<StreamEdge>,
    pub cascade_edges: Vec<CascadeEdge>,
    pub windows: Vec<WindowDecl>,
    pub plio_inputs: Vec<PlioInDecl>,
    pub plio_outputs: Vec<PlioOutDecl>,
}

impl KernelGraph {
    fn empty(spec: VariantSpec) -> KernelGraph {
        KernelGraph {
            spec,
            kernels: Vec::new(),
            stream_edges: Vec::new(),
            cascade_edges: Vec::new(),
            windows: Vec::new(),
            plio_inputs: Vec::new(),
            plio_outputs: Vec::new(),
        }
    }

    pub fn tiles_used(&self) -> usize {
        self.kernels.len()
    }
}

/// Which copy a header port belongs to, for per-copy cell counts.
#[derive(Debug, Clone, Copy)]
pub struct HeaderRule {
    pub port: usize,
    pub copy: usize,
}

#[derive(Debug, Clone)]
pub struct FieldPlan {
    pub field: Field,
    pub copies: usize,
    /// `[copy][cycle][beat]`; a cell takes `schedule[copy].len()` PL cycles.
    pub schedule: Vec<Vec<Vec<PackedBeat>>>,
    pub out_ports: Vec<usize>,
    pub consumer: ConsumerMode,
    pub headers: Vec<HeaderRule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    PlOnly,
    Streams,
    Windows,
}

/// Everything the PL side needs to drive one compute unit.
#[derive(Debug, Clone)]
pub struct PlPlan {
    pub kind: PlanKind,
    pub fields: Vec<FieldPlan>,
}

/// Cells assigned to `copy` when `total` cells rotate over `ways` copies.
pub fn cells_for_copy(total: u64, ways: usize, copy: usize) -> u64 {
    let ways = ways as u64;
    let copy = copy as u64;
    total / ways + u64::from(total % ways > copy)
}

fn lane_run(sel: fn(u8) -> WordSel, from: u8) -> Vec<WordSel> {
    (from..from + 4).map(sel).collect()
}

struct FieldBuilder<'g> {
    g: &'g mut KernelGraph,
    field: Field,
    cu: usize,
    prefix: String,
}

impl<'g> FieldBuilder<'g> {
    fn kernel(&mut self, name: &str, role: KernelRole, lanes: u8, cells_per_iter: usize) -> usize {
        let id = self.g.kernels.len();
        self.g.kernels.push(NodeInfo {
            label: format!("{}{}.{}", self.prefix, self.field.short(), name),
            field: self.field,
            cu: self.cu,
            role,
            lanes,
            cells_per_iter,
            chain_pos: id as u32,
            win_in: Vec::new(),
            win_out: Vec::new(),
        });
        id
    }

    fn plio_in(&mut self, name: &str, target: PlioInTarget, mul_path: bool) -> usize {
        let id = self.g.plio_inputs.len();
        self.g.plio_inputs.push(PlioInDecl {
            label: format!("{}{}.{}", self.prefix, self.field.short(), name),
            field: self.field,
            width_bits: 128,
            target,
            mul_path,
        });
        id
    }

    fn plio_out(&mut self, name: &str, width_bits: u16, source: PlioOutSource) -> usize {
        let id = self.g.plio_outputs.len();
        self.g.plio_outputs.push(PlioOutDecl {
            label: format!("{}{}.{}", self.prefix, self.field.short(), name),
            field: self.field,
            width_bits,
            source,
        });
        id
    }

    fn stream(&mut self, name: &str, from: (usize, u8), to: (usize, u8)) -> usize {
        let id = self.g.stream_edges.len();
        self.g.stream_edges.push(StreamEdge {
            label: format!("{}{}.{}", self.prefix, self.field.short(), name),
            from,
            to,
        });
        id
    }

    fn cascade(&mut self, name: &str, from: usize, to: usize) {
        self.g.cascade_edges.push(CascadeEdge {
            label: format!("{}{}.{}", self.prefix, self.field.short(), name),
            from,
            to,
        });
    }

    fn window(
        &mut self,
        name: &str,
        words_per_cell: usize,
        owner: usize,
        fill: WinFill,
        drain: WinDrain,
        mul_path: bool,
    ) -> usize {
        let id = self.g.windows.len();
        self.g.windows.push(WindowDecl {
            label: format!("{}{}.{}", self.prefix, self.field.short(), name),
            words_per_cell,
            owner,
            fill,
            drain,
            mul_path,
        });
        id
    }
}

/// Builds the kernel graph and PL plan for a variant. The graph covers all
/// requested compute units (for validation and channel accounting); the plan
/// describes one CU, since CUs are independent replicas each simulated on
/// its own grid slab.
pub fn build_variant(spec: &VariantSpec) -> Result<(KernelGraph, PlPlan), VariantError> {
    spec.check()?;
    let mut g = KernelGraph::empty(*spec);
    let mut plan = PlPlan {
        kind: match spec.name {
            VariantName::PlOnly => PlanKind::PlOnly,
            n if n.uses_windows() => PlanKind::Windows,
            _ => PlanKind::Streams,
        },
        fields: Vec::new(),
    };
    for cu in 0..spec.cus {
        let prefix = if spec.cus > 1 { format!("cu{cu}.") } else { String::new() };
        for field in Field::ALL {
            let mut fb = FieldBuilder { g: &mut g, field, cu, prefix: prefix.clone() };
            let fp = build_field(&mut fb, spec);
            if cu == 0 {
                plan.fields.push(fp);
            }
        }
    }
    Ok((g, plan))
}

fn build_field(fb: &mut FieldBuilder, spec: &VariantSpec) -> FieldPlan {
    let field = fb.field;
    match spec.name {
        VariantName::PlOnly => FieldPlan {
            field,
            copies: 1,
            schedule: Vec::new(),
            out_ports: Vec::new(),
            consumer: ConsumerMode::Direct1,
            headers: Vec::new(),
        },
        VariantName::Initial => {
            let k = fb.kernel("advect", KernelRole::FullAdvect, 8, 1);
            let a = fb.plio_in("inA", PlioInTarget::KernelStream { kernel: k, slot: 0 }, false);
            let b = fb.plio_in("inB", PlioInTarget::KernelStream { kernel: k, slot: 1 }, false);
            let out = fb.plio_out("out", 32, PlioOutSource::KernelStream { kernel: k, slot: 0 });
            let beat = |port, words| PackedBeat { port, words, mul_path: false };
            // Three writes per stream per cell: the PL initiation interval of
            // three comes straight from this packing.
            let schedule = vec![vec![
                vec![beat(a, lane_run(WordSel::Lhs, 0)), beat(b, lane_run(WordSel::Rhs, 0))],
                vec![beat(a, lane_run(WordSel::Lhs, 4)), beat(b, lane_run(WordSel::Rhs, 4))],
                vec![beat(a, lane_run(WordSel::Mul, 0)), beat(b, lane_run(WordSel::Mul, 4))],
            ]];
            FieldPlan {
                field,
                copies: 1,
                schedule,
                out_ports: vec![out],
                consumer: ConsumerMode::Direct1,
                headers: vec![HeaderRule { port: a, copy: 0 }, HeaderRule { port: b, copy: 0 }],
            }
        }
        VariantName::MultiKernel => {
            let add0 = fb.kernel("add0", KernelRole::AddHalf(0), 4, 1);
            let add1 = fb.kernel("add1", KernelRole::AddHalf(1), 4, 1);
            let mul0 = fb.kernel("mul0", KernelRole::MulHalf(0), 4, 1);
            let mul1 = fb.kernel("mul1", KernelRole::MulHalf(1), 4, 1);
            let sub = fb.kernel("subred", KernelRole::SubReduce, 4, 1);
            let ports = [
                fb.plio_in("add0.lhs", PlioInTarget::KernelStream { kernel: add0, slot: 0 }, false),
                fb.plio_in("add0.rhs", PlioInTarget::KernelStream { kernel: add0, slot: 1 }, false),
                fb.plio_in("add1.lhs", PlioInTarget::KernelStream { kernel: add1, slot: 0 }, false),
                fb.plio_in("add1.rhs", PlioInTarget::KernelStream { kernel: add1, slot: 1 }, false),
                fb.plio_in("mul0.ops", PlioInTarget::KernelStream { kernel: mul0, slot: 0 }, true),
                fb.plio_in("mul1.ops", PlioInTarget::KernelStream { kernel: mul1, slot: 0 }, true),
            ];
            fb.stream("sums0", (add0, 0), (mul0, 1));
            fb.stream("sums1", (add1, 0), (mul1, 1));
            fb.stream("prods0", (mul0, 0), (sub, 0));
            fb.stream("prods1", (mul1, 0), (sub, 1));
            let out = fb.plio_out("out", 32, PlioOutSource::KernelStream { kernel: sub, slot: 0 });
            let sels = [
                lane_run(WordSel::Lhs, 0),
                lane_run(WordSel::Rhs, 0),
                lane_run(WordSel::Lhs, 4),
                lane_run(WordSel::Rhs, 4),
                lane_run(WordSel::Mul, 0),
                lane_run(WordSel::Mul, 4),
            ];
            // The whole cell streams in one PL cycle over six ports.
            let cycle: Vec<PackedBeat> = ports
                .iter()
                .zip(sels)
                .enumerate()
                .map(|(i, (&port, words))| PackedBeat { port, words, mul_path: i >= 4 })
                .collect();
            FieldPlan {
                field,
                copies: 1,
                schedule: vec![vec![cycle]],
                out_ports: vec![out],
                consumer: ConsumerMode::Direct1,
                headers: ports.iter().map(|&port| HeaderRule { port, copy: 0 }).collect(),
            }
        }
        VariantName::Cascade | VariantName::CascadeMultiplex => {
            let copies =
                if spec.name == VariantName::Cascade { 1 } else { spec.multiplex_ways };
            let mut schedule = Vec::new();
            let mut out_ports = Vec::new();
            let mut headers = Vec::new();
            for copy in 0..copies {
                let tag = |n: &str| {
                    if copies == 1 {
                        n.to_string()
                    } else {
                        format!("c{copy}.{n}")
                    }
                };
                let add = fb.kernel(&tag("add"), KernelRole::CascadeAdd, 8, 1);
                let msr = fb.kernel(&tag("msr"), KernelRole::CascadeMulSubReduce, 8, 1);
                fb.cascade(&tag("casc"), add, msr);
                let pa = fb.plio_in(
                    &tag("add.lhs"),
                    PlioInTarget::KernelStream { kernel: add, slot: 0 },
                    false,
                );
                let pb = fb.plio_in(
                    &tag("add.rhs"),
                    PlioInTarget::KernelStream { kernel: add, slot: 1 },
                    false,
                );
                let m0 = fb.plio_in(
                    &tag("msr.ops0"),
                    PlioInTarget::KernelStream { kernel: msr, slot: 0 },
                    true,
                );
                let m1 = fb.plio_in(
                    &tag("msr.ops1"),
                    PlioInTarget::KernelStream { kernel: msr, slot: 1 },
                    true,
                );
                let out = fb.plio_out(
                    &tag("out"),
                    32,
                    PlioOutSource::KernelStream { kernel: msr, slot: 0 },
                );
                out_ports.push(out);
                for port in [pa, pb, m0, m1] {
                    headers.push(HeaderRule { port, copy });
                }
                let beat = |port, words, mul_path| PackedBeat { port, words, mul_path };
                // Both addition ports need two writes per cell; the
                // multiplier ports ride along in the first cycle.
                schedule.push(vec![
                    vec![
                        beat(pa, lane_run(WordSel::Lhs, 0), false),
                        beat(pb, lane_run(WordSel::Rhs, 0), false),
                        beat(m0, lane_run(WordSel::Mul, 0), true),
                        beat(m1, lane_run(WordSel::Mul, 4), true),
                    ],
                    vec![
                        beat(pa, lane_run(WordSel::Lhs, 4), false),
                        beat(pb, lane_run(WordSel::Rhs, 4), false),
                    ],
                ]);
            }
            FieldPlan {
                field,
                copies,
                schedule,
                out_ports,
                consumer: ConsumerMode::Direct1,
                headers,
            }
        }
        name => {
            // The window family shares the multi-kernel topology.
            debug_assert!(name.uses_windows());
            let dv = name == VariantName::DoubleVectorization;
            let host_reduce = matches!(
                name,
                VariantName::ReductionOnHost | VariantName::DoubleVectorization
            );
            let (lanes, cpi) = if dv { (8, 2) } else { (4, 1) };
            let add0 = fb.kernel("add0", KernelRole::WinAddHalf(0), lanes, cpi);
            let add1 = fb.kernel("add1", KernelRole::WinAddHalf(1), lanes, cpi);
            let mul0 = fb.kernel("mul0", KernelRole::WinMulHalf(0), lanes, cpi);
            let mul1 = fb.kernel("mul1", KernelRole::WinMulHalf(1), lanes, cpi);
            let subr = if host_reduce { KernelRole::WinSubOnly } else { KernelRole::WinSubReduce };
            let sub = fb.kernel("sub", subr, lanes, cpi);

            // PLIO-fed operand windows; fill port indices patched in below.
            let in_window = |fbb: &mut FieldBuilder, name: &str, owner, mul_path| {
                let w = fbb.window(name, 4, owner, WinFill::Plio(usize::MAX), WinDrain::Kernel(owner), mul_path);
                let p = fbb.plio_in(&format!("{name}.in"), PlioInTarget::Window { window: w }, mul_path);
                fbb.g.windows[w].fill = WinFill::Plio(p);
                (w, p)
            };
            let (w_lhs0, p_lhs0) = in_window(fb, "lhs0", add0, false);
            let (w_rhs0, p_rhs0) = in_window(fb, "rhs0", add0, false);
            let (w_lhs1, p_lhs1) = in_window(fb, "lhs1", add1, false);
            let (w_rhs1, p_rhs1) = in_window(fb, "rhs1", add1, false);
            let (w_ops0, p_ops0) = in_window(fb, "ops0", mul0, true);
            let (w_ops1, p_ops1) = in_window(fb, "ops1", mul1, true);
            let w_sums0 =
                fb.window("sums0", 4, mul0, WinFill::Kernel(add0), WinDrain::Kernel(mul0), false);
            let w_sums1 =
                fb.window("sums1", 4, mul1, WinFill::Kernel(add1), WinDrain::Kernel(mul1), false);
            let w_prods0 =
                fb.window("prods0", 4, sub, WinFill::Kernel(mul0), WinDrain::Kernel(sub), false);
            let w_prods1 =
                fb.window("prods1", 4, sub, WinFill::Kernel(mul1), WinDrain::Kernel(sub), false);
            let out_wpc = if host_reduce { 4 } else { 1 };
            let out_width = if host_reduce { 128 } else { 32 };
            let w_out =
                fb.window("result", out_wpc, sub, WinFill::Kernel(sub), WinDrain::Plio(usize::MAX), false);
            let out = fb.plio_out("out", out_width, PlioOutSource::Window { window: w_out });
            fb.g.windows[w_out].drain = WinDrain::Plio(out);

            let wire = |g: &mut KernelGraph, k: usize, wins_in: &[usize], wins_out: &[usize]| {
                g.kernels[k].win_in = wins_in.to_vec();
                g.kernels[k].win_out = wins_out.to_vec();
            };
            wire(fb.g, add0, &[w_lhs0, w_rhs0], &[w_sums0]);
            wire(fb.g, add1, &[w_lhs1, w_rhs1], &[w_sums1]);
            wire(fb.g, mul0, &[w_ops0, w_sums0], &[w_prods0]);
            wire(fb.g, mul1, &[w_ops1, w_sums1], &[w_prods1]);
            wire(fb.g, sub, &[w_prods0, w_prods1], &[w_out]);

            let ports = [p_lhs0, p_rhs0, p_lhs1, p_rhs1, p_ops0, p_ops1];
            let sels = [
                lane_run(WordSel::Lhs, 0),
                lane_run(WordSel::Rhs, 0),
                lane_run(WordSel::Lhs, 4),
                lane_run(WordSel::Rhs, 4),
                lane_run(WordSel::Mul, 0),
                lane_run(WordSel::Mul, 4),
            ];
            let cycle: Vec<PackedBeat> = ports
                .iter()
                .zip(sels)
                .enumerate()
                .map(|(i, (&port, words))| PackedBeat { port, words, mul_path: i >= 4 })
                .collect();
            FieldPlan {
                field,
                copies: 1,
                schedule: vec![vec![cycle]],
                out_ports: vec![out],
                consumer: if host_reduce { ConsumerMode::HostReduce4 } else { ConsumerMode::Direct1 },
                headers: Vec::new(),
            }
        }
    }
}
