//! Clock domains. The tile array tick is the base unit of simulated time;
//! PL entities act only on ticks divisible by the clock ratio.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClockConfig {
    pub aie_hz: f64,
    pub pl_hz: f64,
}

impl ClockConfig {
    pub fn new(aie_hz: f64, pl_hz: f64) -> ClockConfig {
        let c = ClockConfig { aie_hz, pl_hz };
        assert!(c.aie_hz > 0.0 && c.pl_hz > 0.0, "clock rates must be positive");
        assert_eq!(
            c.aie_hz % c.pl_hz,
            0.0,
            "tile/PL clock ratio must be integral, got {} / {}",
            aie_hz,
            pl_hz
        );
        c
    }

    /// Tile ticks per PL cycle.
    pub fn ratio(&self) -> u64 {
        (self.aie_hz / self.pl_hz) as u64
    }
}

impl Default for ClockConfig {
    fn default() -> ClockConfig {
        ClockConfig::new(1.2e9, 300e6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ratio_is_four() {
        assert_eq!(ClockConfig::default().ratio(), 4);
    }

    #[test]
    #[should_panic(expected = "integral")]
    fn rejects_fractional_ratio() {
        ClockConfig::new(1.0e9, 300e6);
    }
}
