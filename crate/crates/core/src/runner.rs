//! Orchestration: build a variant, validate it against the platform, run one
//! simulation per compute unit on its grid slab, stitch and verify the
//! results, and assemble the performance report.

use thiserror::Error;

use crate::fabric::sim::{RunStats, SimError, World};
use crate::fabric::FabricConfig;
use crate::grid::{decompose, Field, Grid3D, GridError, SourceTerms};
use crate::oracle::{count_flops, reference_source_terms};
use crate::profiler::{build_report, GridDims, PerfReport, ValidationOutcome};
use crate::validator::{validate, PlatformLimits, Violation};
use crate::variants::{build_variant, VariantError, VariantSpec};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Variant(#[from] VariantError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("graph validation failed:\n{}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<Violation>),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: PerfReport,
    pub source_terms: SourceTerms,
    pub cu_stats: Vec<RunStats>,
}

/// Bitwise comparison of simulated source terms against the oracle.
pub fn compare_terms(got: &SourceTerms, want: &SourceTerms) -> ValidationOutcome {
    let mut bitwise = true;
    let mut max_abs = 0f32;
    for field in Field::ALL {
        for (a, b) in got.field(field).iter().zip(want.field(field)) {
            if a.to_bits() != b.to_bits() {
                bitwise = false;
            }
            max_abs = max_abs.max((a - b).abs());
        }
    }
    ValidationOutcome { bitwise_match: bitwise, max_abs_diff: max_abs }
}

/// Builds, validates and simulates `spec` on `grid`; verifies against the
/// scalar oracle. CUs run on pre-haloed slabs, independently; the report
/// charges the slowest CU's tick count.
pub fn run_variant(
    grid: &Grid3D,
    spec: &VariantSpec,
    cfg: &FabricConfig,
    limits: &PlatformLimits,
) -> Result<RunOutcome, RunError> {
    let (graph, _) = build_variant(spec)?;
    let violations = validate(&graph, limits);
    if !violations.is_empty() {
        return Err(RunError::Validation(violations));
    }

    let slabs = decompose(grid, spec.cus)?;
    let single = VariantSpec { cus: 1, ..*spec };
    let (cu_graph, cu_plan) = build_variant(&single)?;

    let mut cu_stats = Vec::with_capacity(slabs.len());
    for slab in &slabs {
        let world = World::build(&slab.grid, &cu_graph, &cu_plan, cfg.clone());
        cu_stats.push(world.run_to_completion()?);
    }

    // Stitch per-slab results (emission order) into the full-grid terms.
    let mut terms = SourceTerms::zeros(grid.nx, grid.ny, grid.nz);
    for (slab, stats) in slabs.iter().zip(&cu_stats) {
        for (fi, field) in Field::ALL.iter().enumerate() {
            let mut it = stats.results[fi].iter();
            for kk in 1..slab.grid.nz - 1 {
                let k = slab.k_interior_start + (kk - 1);
                for j in 1..grid.ny - 1 {
                    for i in 1..grid.nx - 1 {
                        let at = terms.idx(i, j, k);
                        terms.field_mut(*field)[at] = *it.next().expect("full result set");
                    }
                }
            }
            assert!(it.next().is_none(), "no surplus results");
        }
    }

    let validation = compare_terms(&terms, &reference_source_terms(grid));
    let ticks = cu_stats.iter().map(|s| s.ticks).max().expect("at least one CU");
    let pl_cycles = cu_stats.iter().map(|s| s.pl_cycles).max().expect("at least one CU");
    let flops = count_flops(grid.nx, grid.ny, grid.nz)?;
    let report = build_report(
        spec,
        GridDims { nx: grid.nx, ny: grid.ny, nz: grid.nz },
        &cfg.clock,
        flops,
        ticks,
        pl_cycles,
        &cu_stats,
        validation,
    );
    Ok(RunOutcome { report, source_terms: terms, cu_stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::InitSpec;
    use crate::variants::VariantName;

    fn seeded(n: usize) -> Grid3D {
        Grid3D::new(n, n, n, (1.0, 1.0, 1.0), InitSpec::Seeded { seed: 42, lo: -1.0, hi: 1.0 })
            .unwrap()
    }

    #[test]
    fn pl_only_matches_oracle_bitwise() {
        let grid = seeded(16);
        let out = run_variant(
            &grid,
            &VariantSpec::new(VariantName::PlOnly),
            &FabricConfig::default(),
            &PlatformLimits::default(),
        )
        .unwrap();
        assert!(out.report.validation.bitwise_match);
        assert_eq!(out.report.validation.max_abs_diff, 0.0);
        assert_eq!(out.report.pl_ii, 1.0);
        assert!(out.report.kernels.is_empty(), "no tile activity in pl-only");
    }

    #[test]
    fn multi_cu_results_match_single_cu_bitwise() {
        let grid = seeded(16);
        let one = run_variant(
            &grid,
            &VariantSpec::new(VariantName::PlOnly),
            &FabricConfig::default(),
            &PlatformLimits::default(),
        )
        .unwrap();
        let four = run_variant(
            &grid,
            &VariantSpec::with_cus(VariantName::PlOnly, 4),
            &FabricConfig::default(),
            &PlatformLimits::default(),
        )
        .unwrap();
        for f in Field::ALL {
            let a: Vec<u32> = one.source_terms.field(f).iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = four.source_terms.field(f).iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
    }
}
