//! End-to-end runs of every variant against the scalar oracle, plus the
//! simulator-level behaviors the designs exist to exhibit.

use acapsim::fabric::{FabricConfig, SimError};
use acapsim::grid::{Grid3D, InitSpec};
use acapsim::oracle::reference_source_terms;
use acapsim::runner::{run_variant, RunError};
use acapsim::validator::PlatformLimits;
use acapsim::variants::{VariantName, VariantSpec};
use acapsim::Field;

fn seeded(n: usize) -> Grid3D {
    Grid3D::new(n, n, n, (1.0, 1.0, 1.0), InitSpec::Seeded { seed: 42, lo: -1.0, hi: 1.0 })
        .unwrap()
}

fn run(grid: &Grid3D, spec: &VariantSpec) -> acapsim::runner::RunOutcome {
    run_variant(grid, spec, &FabricConfig::default(), &PlatformLimits::default()).unwrap()
}

#[test]
fn every_variant_is_bitwise_exact_on_a_seeded_grid() {
    let grid = seeded(12);
    let want = reference_source_terms(&grid);
    for name in VariantName::ALL {
        let out = run(&grid, &VariantSpec::new(name));
        assert!(
            out.report.validation.bitwise_match,
            "{name:?} diverged: max_abs_diff = {}",
            out.report.validation.max_abs_diff
        );
        for f in Field::ALL {
            let got: Vec<u32> = out.source_terms.field(f).iter().map(|x| x.to_bits()).collect();
            let exp: Vec<u32> = want.field(f).iter().map(|x| x.to_bits()).collect();
            assert_eq!(got, exp, "{name:?} field {f:?}");
        }
    }
}

#[test]
fn variants_agree_across_decomposition() {
    // decompose-then-solve equals solve-then-slice, bitwise.
    let grid = seeded(14);
    let one = run(&grid, &VariantSpec::new(VariantName::MultiKernel));
    let three = run(&grid, &VariantSpec::with_cus(VariantName::MultiKernel, 3));
    for f in Field::ALL {
        let a: Vec<u32> = one.source_terms.field(f).iter().map(|x| x.to_bits()).collect();
        let b: Vec<u32> = three.source_terms.field(f).iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn initiation_intervals_are_structural() {
    let grid = seeded(12);
    let cases = [
        (VariantName::Initial, 3.0),
        (VariantName::MultiKernel, 1.0),
        (VariantName::Cascade, 2.0),
        (VariantName::CascadeMultiplex, 1.0),
        (VariantName::PlOnly, 1.0),
        (VariantName::ChunkingWindows, 1.0),
    ];
    for (name, want) in cases {
        let out = run(&grid, &VariantSpec::new(name));
        assert_eq!(out.report.pl_ii, want, "{name:?}");
    }
}

#[test]
fn determinism_reports_are_identical() {
    let grid = seeded(12);
    let a = run(&grid, &VariantSpec::new(VariantName::ChunkingWindows));
    let b = run(&grid, &VariantSpec::new(VariantName::ChunkingWindows));
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.report.total_aie_ticks, b.report.total_aie_ticks);
}

#[test]
fn header_mismatch_starves_a_kernel() {
    let grid = seeded(6);
    let mut cfg = FabricConfig::default();
    cfg.quiescence_ticks = 2_000;
    // One extra claimed cell on one input: the kernel loops once too often
    // and blocks forever on the empty stream.
    cfg.header_override = Some(("u.inA".into(), grid.interior_cells() as u64 + 1));
    let err = run_variant(
        &grid,
        &VariantSpec::new(VariantName::Initial),
        &cfg,
        &PlatformLimits::default(),
    )
    .unwrap_err();
    match err {
        RunError::Sim(SimError::Deadlock { blocked, .. }) => {
            let text = blocked.join("\n");
            assert!(text.contains("u.advect"), "diagnostic names the starved kernel: {text}");
            assert!(text.contains("starved on stream read"), "{text}");
        }
        other => panic!("expected deadlock, got {other:?}"),
    }
}

#[test]
fn mismatched_headers_on_one_kernel_error_out() {
    let grid = seeded(6);
    let mut cfg = FabricConfig::default();
    // Different count on in_B: the kernel sees disagreeing headers.
    cfg.header_override = Some(("u.inB".into(), 3));
    let err = run_variant(
        &grid,
        &VariantSpec::new(VariantName::Initial),
        &cfg,
        &PlatformLimits::default(),
    )
    .unwrap_err();
    assert!(matches!(err, RunError::Sim(SimError::Kernel(_))), "{err:?}");
}

#[test]
fn pingpong_off_deadlocks_and_names_the_actors() {
    let grid = seeded(16);
    let mut cfg = FabricConfig::default();
    cfg.pl_pingpong = false;
    cfg.chunk_override(64);
    let err = run_variant(
        &grid,
        &spec_chunk(64),
        &cfg,
        &PlatformLimits::default(),
    )
    .unwrap_err();
    match err {
        RunError::Sim(SimError::Deadlock { blocked, .. }) => {
            let text = blocked.join("\n");
            assert!(text.contains("ops"), "names the blocked multiplication stream: {text}");
            assert!(text.contains("add"), "names the starved addition path: {text}");
            assert!(text.contains("window") && text.contains("waiting"), "{text}");
        }
        other => panic!("expected deadlock, got {other:?}"),
    }

    // Same configuration with the PL ping-pong enabled completes and
    // validates.
    let mut cfg = FabricConfig::default();
    cfg.pl_pingpong = true;
    let out =
        run_variant(&grid, &spec_chunk(64), &cfg, &PlatformLimits::default()).unwrap();
    assert!(out.report.validation.bitwise_match);
}

fn spec_chunk(c: usize) -> VariantSpec {
    let mut s = VariantSpec::new(VariantName::ChunkingWindows);
    s.chunk_cells = c;
    s
}

#[test]
fn multiplex_ways_all_correct() {
    let grid = seeded(12);
    for ways in [2usize, 4, 8] {
        let mut spec = VariantSpec::new(VariantName::CascadeMultiplex);
        spec.multiplex_ways = ways;
        let out = run(&grid, &spec);
        assert!(out.report.validation.bitwise_match, "ways={ways}");
    }
}

#[test]
fn window_overhead_amortizes_with_chunk_size() {
    // Per-cell windows pay the restart overhead on every cell; chunked
    // windows amortize it away.
    let grid = seeded(12);
    let per_cell = run(&grid, &VariantSpec::new(VariantName::MultiKernelWindows));
    let chunked = run(&grid, &VariantSpec::new(VariantName::ChunkingWindows));
    assert!(chunked.report.gflops > 5.0 * per_cell.report.gflops);

    // Zero restart overhead: invocation cost is pure per-cell work.
    let mut cfg = FabricConfig::default();
    cfg.restart_ticks = 0;
    let r0 = run_variant(
        &grid,
        &VariantSpec::new(VariantName::ChunkingWindows),
        &cfg,
        &PlatformLimits::default(),
    )
    .unwrap();
    assert!(r0.report.gflops >= chunked.report.gflops);
}
