//! Turns raw run counters into the reported metrics: initiation intervals,
//! stall fractions, useful GFLOPS, and comparison tables.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::fabric::kernel::KernelCounters;
use crate::fabric::sim::RunStats;
use crate::fabric::ClockConfig;
use crate::oracle::FlopCount;
use crate::variants::VariantSpec;

#[derive(Debug, Clone, Serialize)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationOutcome {
    pub bitwise_match: bool,
    pub max_abs_diff: f32,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub active: u64,
    pub stall: u64,
    pub idle: u64,
    pub invocations: u64,
    pub stall_fraction: f64,
}

/// One simulated run, in the report schema written to disk.
#[derive(Debug, Clone, Serialize)]
pub struct PerfReport {
    pub variant: String,
    pub grid: GridDims,
    pub cus: usize,
    pub total_aie_ticks: u64,
    pub total_pl_cycles: u64,
    pub simulated_seconds: f64,
    pub useful_flops: u64,
    pub padded_flops: u64,
    pub gflops: f64,
    /// PL cycles of port pressure per cell on the busiest input port;
    /// structural, so backpressure does not distort it.
    pub pl_ii: f64,
    /// Too few cells for a steady-state measurement.
    pub pl_ii_flagged: bool,
    pub kernels: BTreeMap<String, KernelReport>,
    pub validation: ValidationOutcome,
}

/// Stall fraction as reported per kernel: stall / (active + stall).
pub fn stall_fraction(c: &KernelCounters) -> f64 {
    if c.active + c.stall == 0 {
        0.0
    } else {
        c.stall as f64 / (c.active + c.stall) as f64
    }
}

/// Measured PL initiation interval: data beats on the busiest input port per
/// cell fed (header beats excluded). For the PL-only pipeline it is the
/// compute stage's active cycles per cell.
pub fn measure_pl_ii(stats: &RunStats) -> (f64, bool) {
    let flagged = stats.cells < 100;
    let ii = if stats.in_ports.is_empty() {
        stats.producer_active_cycles as f64 / stats.cells as f64
    } else {
        let max_beats = stats.in_ports.iter().map(|p| p.data_beats).max().unwrap_or(0);
        max_beats as f64 / stats.cells as f64
    };
    (ii, flagged)
}

/// Assembles the report for one (variant, cus) run. Multi-CU runs pass the
/// slowest CU's tick count and the per-CU stats of every CU.
pub fn build_report(
    spec: &VariantSpec,
    dims: GridDims,
    clock: &ClockConfig,
    flops: FlopCount,
    ticks: u64,
    pl_cycles: u64,
    cu_stats: &[RunStats],
    validation: ValidationOutcome,
) -> PerfReport {
    let simulated_seconds = ticks as f64 / clock.aie_hz;
    let gflops = flops.useful as f64 / simulated_seconds / 1e9;
    let (pl_ii, pl_ii_flagged) = measure_pl_ii(&cu_stats[0]);
    let mut kernels = BTreeMap::new();
    for stats in cu_stats {
        for (label, c) in &stats.kernels {
            kernels.insert(
                label.clone(),
                KernelReport {
                    active: c.active,
                    stall: c.stall,
                    idle: c.idle,
                    invocations: c.invocations,
                    stall_fraction: stall_fraction(c),
                },
            );
        }
    }
    PerfReport {
        variant: spec.name.as_str().to_string(),
        grid: dims,
        cus: spec.cus,
        total_aie_ticks: ticks,
        total_pl_cycles: pl_cycles,
        simulated_seconds,
        useful_flops: flops.useful,
        padded_flops: flops.padded,
        gflops,
        pl_ii,
        pl_ii_flagged,
        kernels,
        validation,
    }
}

impl PerfReport {
    pub fn max_stall_fraction(&self) -> f64 {
        self.kernels.values().map(|k| k.stall_fraction).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("baseline variant '{0}' not among the reports")]
    MissingBaseline(String),
}

pub const COMPARISON_CSV_HEADER: &str =
    "variant,cus,gflops,pct_vs_baseline,pl_ii,max_stall_frac,bitwise_match";

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub variant: String,
    pub cus: usize,
    pub gflops: f64,
    pub pct_vs_baseline: f64,
    pub pl_ii: f64,
    pub max_stall_frac: f64,
    pub bitwise_match: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

/// Rows in the given report order, with GFLOPS as a percentage of the
/// baseline variant (its first occurrence).
pub fn emit_comparison(reports: &[PerfReport], baseline: &str) -> Result<Comparison, CompareError> {
    let base = reports
        .iter()
        .find(|r| r.variant == baseline)
        .ok_or_else(|| CompareError::MissingBaseline(baseline.to_string()))?;
    let base_gflops = base.gflops;
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            variant: r.variant.clone(),
            cus: r.cus,
            gflops: r.gflops,
            pct_vs_baseline: 100.0 * r.gflops / base_gflops,
            pl_ii: r.pl_ii,
            max_stall_frac: r.max_stall_fraction(),
            bitwise_match: r.validation.bitwise_match,
        })
        .collect();
    Ok(Comparison { baseline: baseline.to_string(), rows })
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(COMPARISON_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.variant, r.cus, r.gflops, r.pct_vs_baseline, r.pl_ii, r.max_stall_frac, r.bitwise_match
            ));
        }
        out
    }

    /// Aligned text table; percentages rounded to whole percent.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>4} {:>10} {:>8} {:>6} {:>10} {:>8}\n",
            "variant", "cus", "gflops", "vs-base", "pl_ii", "max_stall", "bitwise"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<24} {:>4} {:>10.3} {:>7}% {:>6.2} {:>10.3} {:>8}\n",
                r.variant,
                r.cus,
                r.gflops,
                r.pct_vs_baseline.round() as i64,
                r.pl_ii,
                r.max_stall_frac,
                r.bitwise_match
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(variant: &str, gflops: f64) -> PerfReport {
        PerfReport {
            variant: variant.into(),
            grid: GridDims { nx: 16, ny: 16, nz: 16 },
            cus: 1,
            total_aie_ticks: 100,
            total_pl_cycles: 25,
            simulated_seconds: 1.0,
            useful_flops: 0,
            padded_flops: 0,
            gflops,
            pl_ii: 1.0,
            pl_ii_flagged: false,
            kernels: BTreeMap::new(),
            validation: ValidationOutcome { bitwise_match: true, max_abs_diff: 0.0 },
        }
    }

    #[test]
    fn comparison_percentages() {
        let reports = vec![report("pl-only", 10.0), report("initial", 5.0)];
        let c = emit_comparison(&reports, "pl-only").unwrap();
        assert_eq!(c.rows[1].pct_vs_baseline, 50.0);
        assert_eq!(c.rows[0].pct_vs_baseline, 100.0);
        assert!(c.to_csv().starts_with(COMPARISON_CSV_HEADER));
        assert!(c.to_text().contains("50%"));
    }

    #[test]
    fn self_baseline_is_hundred_percent() {
        let reports = vec![report("initial", 3.21)];
        let c = emit_comparison(&reports, "initial").unwrap();
        assert_eq!(c.rows[0].pct_vs_baseline, 100.0);
    }

    #[test]
    fn missing_baseline_is_an_error() {
        let reports = vec![report("initial", 3.21)];
        assert_eq!(
            emit_comparison(&reports, "pl-only").unwrap_err(),
            CompareError::MissingBaseline("pl-only".into())
        );
    }

    #[test]
    fn stall_fraction_bounds() {
        let c = KernelCounters { active: 1, stall: 3, idle: 10, invocations: 1 };
        assert_eq!(stall_fraction(&c), 0.75);
        let z = KernelCounters::default();
        assert_eq!(stall_fraction(&z), 0.0);
    }
}
