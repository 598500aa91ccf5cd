//! Platform constraint checks for kernel graphs, channel accounting, and the
//! maximum compute-unit replication each design admits.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::fabric::window::{NEIGHBOR_ADDRESSABLE, TILE_DATA_MEMORY};
use crate::variants::{build_variant, KernelGraph, VariantName, VariantSpec, WinFill};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlatformLimits {
    /// 32-bit channels between the tile array and the PL.
    pub total_32bit_channels: u64,
    /// 128-bit input streaming interfaces (four 32-bit links each).
    pub max_128bit_plio_in: u64,
    pub stream_in_per_kernel: u64,
    pub stream_out_per_kernel: u64,
    pub tile_data_memory: u64,
    pub neighbor_addressable: u64,
    pub tiles_available: u64,
    /// Shell capacity for PL-only compute units.
    pub pl_only_max_cus: u64,
}

impl Default for PlatformLimits {
    fn default() -> PlatformLimits {
        let l = PlatformLimits {
            total_32bit_channels: 312,
            max_128bit_plio_in: 78,
            stream_in_per_kernel: 2,
            stream_out_per_kernel: 2,
            tile_data_memory: TILE_DATA_MEMORY as u64,
            neighbor_addressable: NEIGHBOR_ADDRESSABLE as u64,
            tiles_available: 400,
            pl_only_max_cus: 8,
        };
        debug_assert_eq!(l.max_128bit_plio_in * 4, l.total_32bit_channels);
        l
    }
}

/// Single-precision vector lane widths the tooling accepts.
pub const ALLOWED_F32_LANES: [u8; 4] = [4, 8, 16, 32];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub entity: String,
    pub limit: String,
    pub observed: u64,
    pub allowed: u64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {} {} > {}", self.entity, self.limit, self.observed, self.allowed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelUsage {
    pub plio_128_in: u64,
    /// Output ports by width in bits.
    pub plio_out_by_width: BTreeMap<u16, u64>,
    pub internal_streams: u64,
    pub cascades: u64,
    pub tiles_used: u64,
}

impl ChannelUsage {
    /// 32-bit physical links consumed on the input (PL to tiles) direction.
    pub fn links_32bit_in(&self) -> u64 {
        self.plio_128_in * 4
    }

    /// 32-bit physical links consumed on the output direction. Outputs draw
    /// from their own directional pool; the input side is what binds the
    /// designs here.
    pub fn links_32bit_out(&self) -> u64 {
        self.plio_out_by_width.iter().map(|(w, n)| (*w as u64 / 32) * n).sum()
    }
}

pub fn channel_usage(graph: &KernelGraph) -> ChannelUsage {
    let mut plio_out_by_width = BTreeMap::new();
    for o in &graph.plio_outputs {
        *plio_out_by_width.entry(o.width_bits).or_insert(0) += 1;
    }
    ChannelUsage {
        plio_128_in: graph.plio_inputs.iter().filter(|p| p.width_bits == 128).count() as u64,
        plio_out_by_width,
        internal_streams: graph.stream_edges.len() as u64,
        cascades: graph.cascade_edges.len() as u64,
        tiles_used: graph.tiles_used() as u64,
    }
}

/// Checks every platform constraint; violations name the entity, the limit,
/// and the observed value.
pub fn validate(graph: &KernelGraph, limits: &PlatformLimits) -> Vec<Violation> {
    let mut v = Vec::new();

    for (ki, k) in graph.kernels.iter().enumerate() {
        let stream_in = graph
            .plio_inputs
            .iter()
            .filter(|p| matches!(p.target, crate::variants::PlioInTarget::KernelStream { kernel, .. } if kernel == ki))
            .count()
            + graph.stream_edges.iter().filter(|e| e.to.0 == ki).count();
        let stream_out = graph
            .plio_outputs
            .iter()
            .filter(|p| matches!(p.source, crate::variants::PlioOutSource::KernelStream { kernel, .. } if kernel == ki))
            .count()
            + graph.stream_edges.iter().filter(|e| e.from.0 == ki).count();
        if stream_in as u64 > limits.stream_in_per_kernel {
            v.push(Violation {
                entity: k.label.clone(),
                limit: "stream_inputs".into(),
                observed: stream_in as u64,
                allowed: limits.stream_in_per_kernel,
            });
        }
        if stream_out as u64 > limits.stream_out_per_kernel {
            v.push(Violation {
                entity: k.label.clone(),
                limit: "stream_outputs".into(),
                observed: stream_out as u64,
                allowed: limits.stream_out_per_kernel,
            });
        }
        let casc_in = graph.cascade_edges.iter().filter(|e| e.to == ki).count();
        let casc_out = graph.cascade_edges.iter().filter(|e| e.from == ki).count();
        if casc_in > 1 {
            v.push(Violation {
                entity: k.label.clone(),
                limit: "cascade_inputs".into(),
                observed: casc_in as u64,
                allowed: 1,
            });
        }
        if casc_out > 1 {
            v.push(Violation {
                entity: k.label.clone(),
                limit: "cascade_outputs".into(),
                observed: casc_out as u64,
                allowed: 1,
            });
        }
        if !ALLOWED_F32_LANES.contains(&k.lanes) {
            v.push(Violation {
                entity: k.label.clone(),
                limit: "f32_vector_lanes".into(),
                observed: k.lanes as u64,
                allowed: 8,
            });
        }
    }

    // Cascade connections are fixed by the physical chain: only the next
    // tile in placement order can receive a kernel's cascade output.
    for e in &graph.cascade_edges {
        let (from, to) = (&graph.kernels[e.from], &graph.kernels[e.to]);
        if to.chain_pos != from.chain_pos + 1 {
            v.push(Violation {
                entity: e.label.clone(),
                limit: "cascade_chain_distance".into(),
                observed: to.chain_pos.abs_diff(from.chain_pos) as u64,
                allowed: 1,
            });
        }
    }

    // Window memory: banks live on the owner tile; kernels may also address
    // their neighbours' windows up to the shared limit.
    let chunk = graph.spec.effective_chunk() as u64;
    let mut tile_bytes: BTreeMap<usize, u64> = BTreeMap::new();
    for w in &graph.windows {
        *tile_bytes.entry(w.owner).or_insert(0) += 2 * chunk * w.words_per_cell as u64 * 4;
    }
    for (ki, bytes) in &tile_bytes {
        if *bytes > limits.tile_data_memory {
            v.push(Violation {
                entity: graph.kernels[*ki].label.clone(),
                limit: "tile_data_memory_bytes".into(),
                observed: *bytes,
                allowed: limits.tile_data_memory,
            });
        }
    }
    for (ki, k) in graph.kernels.iter().enumerate() {
        let mut reachable: u64 = tile_bytes.get(&ki).copied().unwrap_or(0);
        for w in k.win_in.iter().chain(&k.win_out) {
            let decl = &graph.windows[*w];
            if decl.owner != ki {
                reachable += 2 * chunk * decl.words_per_cell as u64 * 4;
            }
        }
        if reachable > limits.neighbor_addressable {
            v.push(Violation {
                entity: k.label.clone(),
                limit: "neighbor_addressable_bytes".into(),
                observed: reachable,
                allowed: limits.neighbor_addressable,
            });
        }
    }

    let usage = channel_usage(graph);
    if usage.plio_128_in > limits.max_128bit_plio_in {
        v.push(Violation {
            entity: "platform".into(),
            limit: "plio_128_in".into(),
            observed: usage.plio_128_in,
            allowed: limits.max_128bit_plio_in,
        });
    }
    if usage.links_32bit_in() > limits.total_32bit_channels {
        v.push(Violation {
            entity: "platform".into(),
            limit: "links_32bit_in".into(),
            observed: usage.links_32bit_in(),
            allowed: limits.total_32bit_channels,
        });
    }
    if usage.links_32bit_out() > limits.total_32bit_channels {
        v.push(Violation {
            entity: "platform".into(),
            limit: "links_32bit_out".into(),
            observed: usage.links_32bit_out(),
            allowed: limits.total_32bit_channels,
        });
    }
    if usage.tiles_used > limits.tiles_available {
        v.push(Violation {
            entity: "platform".into(),
            limit: "tiles_used".into(),
            observed: usage.tiles_used,
            allowed: limits.tiles_available,
        });
    }
    if graph.spec.name == VariantName::PlOnly && graph.spec.cus as u64 > limits.pl_only_max_cus {
        v.push(Violation {
            entity: "platform".into(),
            limit: "pl_only_cus".into(),
            observed: graph.spec.cus as u64,
            allowed: limits.pl_only_max_cus,
        });
    }
    // Every PLIO-fed window must have a fill port; builder bugs surface here.
    for w in &graph.windows {
        if matches!(w.fill, WinFill::Plio(usize::MAX)) {
            v.push(Violation {
                entity: w.label.clone(),
                limit: "window_fill_port".into(),
                observed: 0,
                allowed: 1,
            });
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxCus {
    pub cus: u64,
    /// The constraint that forbids one more compute unit.
    pub binding: String,
}

/// Largest compute-unit count for which the variant validates, with the
/// binding constraint.
pub fn max_cus(spec: &VariantSpec, limits: &PlatformLimits) -> MaxCus {
    if spec.name == VariantName::PlOnly {
        return MaxCus { cus: limits.pl_only_max_cus, binding: "pl_only_cus".into() };
    }
    let one = VariantSpec { cus: 1, ..*spec };
    let (graph, _) = build_variant(&one).expect("variant buildable at 1 CU");
    let u = channel_usage(&graph);
    let mut n = 1u64;
    let binding;
    loop {
        let next = n + 1;
        if u.plio_128_in * next > limits.max_128bit_plio_in {
            binding = "plio_128_in".to_string();
            break;
        }
        if u.links_32bit_out() * next > limits.total_32bit_channels {
            binding = "links_32bit_out".to_string();
            break;
        }
        if u.tiles_used * next > limits.tiles_available {
            binding = "tiles_used".to_string();
            break;
        }
        n = next;
    }
    MaxCus { cus: n, binding }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::kernel::KernelRole;
    use crate::grid::Field;
    use crate::variants::{CascadeEdge, NodeInfo, VariantName, VariantSpec};

    fn limits() -> PlatformLimits {
        PlatformLimits::default()
    }

    #[test]
    fn all_shipped_variants_validate_at_one_cu() {
        for name in VariantName::ALL {
            let (g, _) = build_variant(&VariantSpec::new(name)).unwrap();
            let v = validate(&g, &limits());
            assert!(v.is_empty(), "{name:?}: {v:?}");
        }
    }

    #[test]
    fn usage_numbers() {
        let (g, _) = build_variant(&VariantSpec::new(VariantName::MultiKernel)).unwrap();
        let u = channel_usage(&g);
        assert_eq!(u.plio_128_in, 18);
        assert_eq!(u.tiles_used, 15);
        assert_eq!(u.internal_streams, 12);

        let (g, _) = build_variant(&VariantSpec::new(VariantName::Initial)).unwrap();
        let u = channel_usage(&g);
        assert_eq!(u.plio_128_in, 6);
        assert_eq!(u.tiles_used, 3);

        let (g, _) = build_variant(&VariantSpec::new(VariantName::PlOnly)).unwrap();
        let u = channel_usage(&g);
        assert_eq!(u.plio_128_in, 0);
        assert_eq!(u.tiles_used, 0);
        assert_eq!(u.links_32bit_in() + u.links_32bit_out(), 0);
    }

    #[test]
    fn usage_scales_linearly_in_cus() {
        for name in [VariantName::MultiKernel, VariantName::Cascade, VariantName::ChunkingWindows] {
            let (g1, _) = build_variant(&VariantSpec::new(name)).unwrap();
            let (g3, _) = build_variant(&VariantSpec::with_cus(name, 3)).unwrap();
            let (u1, u3) = (channel_usage(&g1), channel_usage(&g3));
            assert_eq!(u3.plio_128_in, 3 * u1.plio_128_in);
            assert_eq!(u3.tiles_used, 3 * u1.tiles_used);
            assert_eq!(u3.internal_streams, 3 * u1.internal_streams);
            assert_eq!(u3.links_32bit_in(), 3 * u1.links_32bit_in());
            assert_eq!(u3.links_32bit_out(), 3 * u1.links_32bit_out());
        }
    }

    #[test]
    fn multi_kernel_four_cus_ok_five_rejected() {
        let (g4, _) = build_variant(&VariantSpec::with_cus(VariantName::MultiKernel, 4)).unwrap();
        assert!(validate(&g4, &limits()).is_empty());
        let (g5, _) = build_variant(&VariantSpec::with_cus(VariantName::MultiKernel, 5)).unwrap();
        let v = validate(&g5, &limits());
        assert!(
            v.iter().any(|x| x.limit == "plio_128_in" && x.observed == 90 && x.allowed == 78),
            "{v:?}"
        );
    }

    #[test]
    fn max_cus_table() {
        for name in [
            VariantName::MultiKernel,
            VariantName::ChunkingWindows,
            VariantName::ReductionOnHost,
            VariantName::DoubleVectorization,
        ] {
            let m = max_cus(&VariantSpec::new(name), &limits());
            assert_eq!((m.cus, m.binding.as_str()), (4, "plio_128_in"), "{name:?}");
        }
        let m = max_cus(&VariantSpec::new(VariantName::CascadeMultiplex), &limits());
        assert_eq!(m.cus, 3);
        let m = max_cus(&VariantSpec::new(VariantName::PlOnly), &limits());
        assert_eq!((m.cus, m.binding.as_str()), (8, "pl_only_cus"));
    }

    #[test]
    fn max_cus_is_monotone() {
        let m = max_cus(&VariantSpec::new(VariantName::MultiKernel), &limits());
        for n in 1..=m.cus {
            let (g, _) =
                build_variant(&VariantSpec::with_cus(VariantName::MultiKernel, n as usize))
                    .unwrap();
            assert!(validate(&g, &limits()).is_empty(), "cus={n} must validate");
        }
    }

    /// A six-lane f32 vector is not supported by the platform.
    #[test]
    fn rejects_six_lane_vector() {
        let (mut g, _) = build_variant(&VariantSpec::new(VariantName::Initial)).unwrap();
        g.kernels[0].lanes = 6;
        let v = validate(&g, &limits());
        assert!(v.iter().any(|x| x.limit == "f32_vector_lanes" && x.observed == 6), "{v:?}");
    }

    /// A kernel cannot consume two cascade streams.
    #[test]
    fn rejects_dual_cascade_inputs() {
        let (mut g, _) = build_variant(&VariantSpec::new(VariantName::Cascade)).unwrap();
        // Reroute the second field's cascade into the first field's msr.
        let msr0 = g.cascade_edges[0].to;
        g.cascade_edges[1].to = msr0;
        let v = validate(&g, &limits());
        assert!(v.iter().any(|x| x.limit == "cascade_inputs" && x.observed == 2), "{v:?}");
    }

    /// Cascades only connect chain-adjacent tiles.
    #[test]
    fn rejects_non_adjacent_cascade() {
        let mut g = {
            let (g, _) = build_variant(&VariantSpec::new(VariantName::Initial)).unwrap();
            g
        };
        g.kernels.push(NodeInfo {
            label: "x.a".into(),
            field: Field::U,
            cu: 0,
            role: KernelRole::CascadeAdd,
            lanes: 8,
            cells_per_iter: 1,
            chain_pos: 10,
            win_in: vec![],
            win_out: vec![],
        });
        g.kernels.push(NodeInfo {
            label: "x.b".into(),
            field: Field::U,
            cu: 0,
            role: KernelRole::CascadeAdd,
            lanes: 8,
            cells_per_iter: 1,
            chain_pos: 12,
            win_in: vec![],
            win_out: vec![],
        });
        let a = g.kernels.len() - 2;
        g.cascade_edges.push(CascadeEdge { label: "x.c".into(), from: a, to: a + 1 });
        let v = validate(&g, &limits());
        assert!(v.iter().any(|x| x.limit == "cascade_chain_distance"), "{v:?}");
    }

    #[test]
    fn chunk_memory_fits_default_but_not_oversized() {
        let (g, _) = build_variant(&VariantSpec::new(VariantName::ChunkingWindows)).unwrap();
        assert!(validate(&g, &limits()).is_empty());
        let mut spec = VariantSpec::new(VariantName::ChunkingWindows);
        spec.chunk_cells = 1024;
        let (g, _) = build_variant(&spec).unwrap();
        let v = validate(&g, &limits());
        assert!(v.iter().any(|x| x.limit == "tile_data_memory_bytes"), "{v:?}");
    }
}
