//! Word-level transport: 32-bit stream channels, the wide cascade channel,
//! and PLIO ports crossing between the PL and the tile array.
//!
//! All payloads travel as raw `u32` bit patterns of the single-precision
//! values, so captured results can be compared bitwise against the oracle.

use std::collections::VecDeque;

/// Words per 128-bit PLIO beat.
pub const BEAT_WORDS: usize = 4;
/// Cascade channel width in bits; carries up to eight packed f32 per beat.
pub const CASCADE_WIDTH_BITS: usize = 384;

/// A 32-bit FIFO channel between two tile kernels.
///
/// Invariants: exactly one producer and one consumer, at most one word
/// pushed and one popped per tick.
#[derive(Debug)]
pub struct StreamChannel {
    pub label: String,
    fifo: VecDeque<u32>,
    cap: usize,
    pub pushed: u64,
    pub popped: u64,
    last_push_tick: u64,
    last_pop_tick: u64,
}

impl StreamChannel {
    pub fn new(label: String, cap: usize) -> StreamChannel {
        assert!(cap > 0);
        StreamChannel {
            label,
            fifo: VecDeque::with_capacity(cap),
            cap,
            pushed: 0,
            popped: 0,
            last_push_tick: u64::MAX,
            last_pop_tick: u64::MAX,
        }
    }

    pub fn can_push(&self, tick: u64) -> bool {
        self.fifo.len() < self.cap && self.last_push_tick != tick
    }

    pub fn push(&mut self, tick: u64, word: u32) {
        debug_assert!(self.can_push(tick), "push into full stream {}", self.label);
        self.fifo.push_back(word);
        self.pushed += 1;
        self.last_push_tick = tick;
    }

    pub fn can_pop(&self, tick: u64) -> bool {
        !self.fifo.is_empty() && self.last_pop_tick != tick
    }

    pub fn pop(&mut self, tick: u64) -> u32 {
        debug_assert!(self.can_pop(tick), "pop from empty stream {}", self.label);
        self.popped += 1;
        self.last_pop_tick = tick;
        self.fifo.pop_front().expect("non-empty")
    }

    pub fn occupancy(&self) -> usize {
        self.fifo.len()
    }

    /// Conservation: words in equal words out plus occupancy.
    pub fn conserved(&self) -> bool {
        self.pushed == self.popped + self.fifo.len() as u64
    }
}

/// The wide one-way channel chaining adjacent tiles; a single register, at
/// most one beat in flight per tick.
#[derive(Debug)]
pub struct CascadeChannel {
    pub label: String,
    slot: Option<([u32; 8], u8)>,
    pub beats: u64,
    last_push_tick: u64,
}

impl CascadeChannel {
    pub fn new(label: String) -> CascadeChannel {
        CascadeChannel { label, slot: None, beats: 0, last_push_tick: u64::MAX }
    }

    pub fn can_push(&self, tick: u64) -> bool {
        self.slot.is_none() && self.last_push_tick != tick
    }

    pub fn push(&mut self, tick: u64, words: [u32; 8], n: u8) {
        debug_assert!(self.can_push(tick), "cascade {} occupied", self.label);
        debug_assert!(n as usize * 32 <= CASCADE_WIDTH_BITS);
        self.slot = Some((words, n));
        self.beats += 1;
        self.last_push_tick = tick;
    }

    pub fn can_pop(&self) -> bool {
        self.slot.is_some()
    }

    pub fn pop(&mut self) -> ([u32; 8], u8) {
        self.slot.take().expect("cascade empty")
    }
}

/// PL-to-tile port: the PL side accepts one beat (up to four words) per PL
/// cycle; the beat unpacks toward the consuming tile at one 32-bit word per
/// tile tick through an internal FIFO.
#[derive(Debug)]
pub struct PlioInPort {
    pub label: String,
    pub width_bits: u16,
    /// Beat accepted on the PL side, not yet fully unpacked.
    pending: VecDeque<u32>,
    fifo: VecDeque<u32>,
    cap: usize,
    pub beats_accepted: u64,
    /// Beats carrying operand data (header beats excluded).
    pub data_beats: u64,
    pub words_delivered: u64,
    last_pop_tick: u64,
}

impl PlioInPort {
    pub fn new(label: String, width_bits: u16, cap: usize) -> PlioInPort {
        assert!(matches!(width_bits, 32 | 64 | 128));
        PlioInPort {
            label,
            width_bits,
            pending: VecDeque::new(),
            fifo: VecDeque::with_capacity(cap),
            cap,
            beats_accepted: 0,
            data_beats: 0,
            words_delivered: 0,
            last_pop_tick: u64::MAX,
        }
    }

    pub fn beat_words(&self) -> usize {
        self.width_bits as usize / 32
    }

    /// PL side: can a beat be accepted this PL cycle? Requires the previous
    /// beat to be fully handed to the unpack FIFO.
    pub fn can_accept_beat(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn accept_beat(&mut self, words: &[u32], is_data: bool) {
        debug_assert!(self.can_accept_beat());
        debug_assert!(words.len() <= self.beat_words());
        self.pending.extend(words.iter().copied());
        self.beats_accepted += 1;
        if is_data {
            self.data_beats += 1;
        }
    }

    /// Tile tick: move at most one word from the accepted beat into the
    /// consumer-visible FIFO. A beat accepted at PL tick t becomes visible
    /// word by word over ticks t..t+3.
    pub fn step_unpack(&mut self) -> bool {
        if !self.pending.is_empty() && self.fifo.len() < self.cap {
            let w = self.pending.pop_front().expect("non-empty");
            self.fifo.push_back(w);
            true
        } else {
            false
        }
    }

    pub fn can_pop(&self, tick: u64) -> bool {
        !self.fifo.is_empty() && self.last_pop_tick != tick
    }

    pub fn pop(&mut self, tick: u64) -> u32 {
        debug_assert!(self.can_pop(tick));
        self.words_delivered += 1;
        self.last_pop_tick = tick;
        self.fifo.pop_front().expect("non-empty")
    }
}

/// Tile-to-PL port: tile side pushes one word per tick; the PL side drains
/// one beat per PL cycle.
#[derive(Debug)]
pub struct PlioOutPort {
    pub label: String,
    pub width_bits: u16,
    fifo: VecDeque<u32>,
    cap: usize,
    pub words_in: u64,
    pub beats_out: u64,
    last_push_tick: u64,
}

impl PlioOutPort {
    pub fn new(label: String, width_bits: u16, cap: usize) -> PlioOutPort {
        assert!(matches!(width_bits, 32 | 64 | 128));
        PlioOutPort {
            label,
            width_bits,
            fifo: VecDeque::with_capacity(cap),
            cap,
            words_in: 0,
            beats_out: 0,
            last_push_tick: u64::MAX,
        }
    }

    pub fn beat_words(&self) -> usize {
        self.width_bits as usize / 32
    }

    pub fn can_push(&self, tick: u64) -> bool {
        self.fifo.len() < self.cap && self.last_push_tick != tick
    }

    pub fn push(&mut self, tick: u64, word: u32) {
        debug_assert!(self.can_push(tick));
        self.fifo.push_back(word);
        self.words_in += 1;
        self.last_push_tick = tick;
    }

    /// PL side: words available for this cycle's beat.
    pub fn available(&self) -> usize {
        self.fifo.len()
    }

    pub fn drain_beat(&mut self, n: usize) -> Vec<u32> {
        debug_assert!(n <= self.beat_words() && n <= self.fifo.len());
        self.beats_out += 1;
        (0..n).map(|_| self.fifo.pop_front().expect("non-empty")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_backpressure_and_conservation() {
        let mut s = StreamChannel::new("t".into(), 2);
        assert!(s.can_push(0));
        s.push(0, 1);
        assert!(!s.can_push(0), "one push per tick");
        s.push(1, 2);
        assert!(!s.can_push(2), "full");
        assert_eq!(s.pop(2), 1);
        assert!(!s.can_pop(2), "one pop per tick");
        assert!(s.conserved());
        assert_eq!(s.occupancy(), 1);
    }

    #[test]
    fn cascade_single_beat_in_flight() {
        let mut c = CascadeChannel::new("c".into());
        c.push(0, [0; 8], 8);
        assert!(!c.can_push(1), "occupied until popped");
        let (_, n) = c.pop();
        assert_eq!(n, 8);
        assert!(c.can_push(1));
    }

    #[test]
    fn plio_beat_unpacks_one_word_per_tick() {
        let mut p = PlioInPort::new("p".into(), 128, 32);
        p.accept_beat(&[10, 11, 12, 13], true);
        assert!(!p.can_accept_beat(), "pending beat blocks the next");
        // Words become visible over four consecutive ticks.
        for (t, expect) in [(0u64, 10u32), (1, 11), (2, 12), (3, 13)] {
            assert!(p.step_unpack());
            assert!(p.can_pop(t));
            assert_eq!(p.pop(t), expect);
        }
        assert!(p.can_accept_beat());
        assert_eq!(p.data_beats, 1);
    }

    #[test]
    fn plio_out_beats() {
        let mut p = PlioOutPort::new("o".into(), 128, 32);
        for (t, w) in [(0, 1u32), (1, 2), (2, 3), (3, 4)] {
            p.push(t, w);
        }
        assert_eq!(p.available(), 4);
        assert_eq!(p.drain_beat(4), vec![1, 2, 3, 4]);
    }
}
