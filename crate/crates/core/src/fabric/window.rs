//! Double-banked window buffers. Data progresses only at invocation
//! boundaries: a bank fills (from a PLIO DMA or a producing kernel), is
//! sealed, gets consumed by exactly one invocation, then frees.

/// Tile data memory per engine, bytes.
pub const TILE_DATA_MEMORY: usize = 32 * 1024;
/// Contiguous addressable memory including the three shared neighbours.
pub const NEIGHBOR_ADDRESSABLE: usize = 128 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankState {
    Free,
    /// Being filled with the given chunk.
    Filling(u64),
    /// Complete and waiting for its consumer.
    Sealed(u64),
    /// Acquired by the consumer's invocation.
    InUse(u64),
}

#[derive(Debug)]
pub struct Bank {
    pub state: BankState,
    pub data: Vec<u32>,
}

/// One window: two banks, a words-per-cell shape, and chunk bookkeeping.
#[derive(Debug)]
pub struct WindowBuffer {
    pub label: String,
    pub words_per_cell: usize,
    pub chunk_cells: usize,
    pub total_cells: u64,
    /// Next chunk index to fill.
    pub fill_chunk: u64,
    /// Strict-phase admission: external fill for chunk k is admitted only
    /// while the consumer runs invocation k-1 (chunk 0 admitted at start).
    /// Models the un-buffered multiplication-stream path.
    pub strict_phase: bool,
    pub banks: [Bank; 2],
    pub words_filled: u64,
}

impl WindowBuffer {
    pub fn new(
        label: String,
        words_per_cell: usize,
        chunk_cells: usize,
        total_cells: u64,
        strict_phase: bool,
    ) -> WindowBuffer {
        WindowBuffer {
            label,
            words_per_cell,
            chunk_cells,
            total_cells,
            fill_chunk: 0,
            strict_phase,
            banks: [
                Bank { state: BankState::Free, data: Vec::new() },
                Bank { state: BankState::Free, data: Vec::new() },
            ],
            words_filled: 0,
        }
    }

    pub fn chunks(&self) -> u64 {
        (self.total_cells + self.chunk_cells as u64 - 1) / self.chunk_cells as u64
    }

    pub fn cells_in_chunk(&self, chunk: u64) -> u64 {
        let start = chunk * self.chunk_cells as u64;
        (self.total_cells - start).min(self.chunk_cells as u64)
    }

    pub fn bank_bytes(&self) -> usize {
        self.chunk_cells * self.words_per_cell * 4
    }

    fn bank_in_state(&self, want: BankState) -> Option<usize> {
        self.banks.iter().position(|b| b.state == want)
    }

    /// Is there room to write the next fill word (bank Free or already
    /// Filling the current chunk)? Strict-phase admission is checked by the
    /// caller, which knows the consumer's invocation state.
    pub fn fill_bank_ready(&self) -> bool {
        if self.fill_chunk >= self.chunks() {
            return false;
        }
        self.bank_in_state(BankState::Filling(self.fill_chunk)).is_some()
            || self.bank_in_state(BankState::Free).is_some()
    }

    /// Append one word to the filling bank; seals it when the chunk is
    /// complete.
    pub fn fill_word(&mut self, word: u32) {
        let chunk = self.fill_chunk;
        let idx = self
            .bank_in_state(BankState::Filling(chunk))
            .or_else(|| self.bank_in_state(BankState::Free))
            .expect("fill_bank_ready must be checked first");
        let full = self.cells_in_chunk(chunk) * self.words_per_cell as u64;
        let bank = &mut self.banks[idx];
        if bank.state == BankState::Free {
            bank.state = BankState::Filling(chunk);
            bank.data.clear();
        }
        bank.data.push(word);
        self.words_filled += 1;
        if bank.data.len() as u64 == full {
            bank.state = BankState::Sealed(chunk);
            self.fill_chunk += 1;
        }
    }

    /// Producer-kernel path: grab a free bank for a whole chunk at once.
    pub fn begin_kernel_fill(&mut self, chunk: u64) -> bool {
        debug_assert_eq!(chunk, self.fill_chunk, "kernel fills are in chunk order");
        if let Some(idx) = self.bank_in_state(BankState::Free) {
            let bank = &mut self.banks[idx];
            bank.state = BankState::Filling(chunk);
            bank.data.clear();
            true
        } else {
            false
        }
    }

    pub fn kernel_fill_words(&mut self, chunk: u64, words: &[u32]) {
        let idx = self.bank_in_state(BankState::Filling(chunk)).expect("bank being filled");
        self.banks[idx].data.extend_from_slice(words);
        self.words_filled += words.len() as u64;
    }

    pub fn seal_kernel_fill(&mut self, chunk: u64) {
        let idx = self.bank_in_state(BankState::Filling(chunk)).expect("bank being filled");
        debug_assert_eq!(
            self.banks[idx].data.len() as u64,
            self.cells_in_chunk(chunk) * self.words_per_cell as u64
        );
        self.banks[idx].state = BankState::Sealed(chunk);
        self.fill_chunk += 1;
    }

    pub fn sealed_bank(&self, chunk: u64) -> Option<usize> {
        self.bank_in_state(BankState::Sealed(chunk))
    }

    pub fn acquire(&mut self, chunk: u64) -> usize {
        let idx = self.sealed_bank(chunk).expect("sealed bank for chunk");
        self.banks[idx].state = BankState::InUse(chunk);
        idx
    }

    pub fn release(&mut self, bank: usize) {
        debug_assert!(matches!(self.banks[bank].state, BankState::InUse(_)));
        self.banks[bank].state = BankState::Free;
        self.banks[bank].data.clear();
    }

    pub fn bank_data(&self, bank: usize) -> &[u32] {
        &self.banks[bank].data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_seal_consume_cycle() {
        // 2 cells/chunk, 2 words/cell, 5 cells total -> chunks of 2,2,1.
        let mut w = WindowBuffer::new("w".into(), 2, 2, 5, false);
        assert_eq!(w.chunks(), 3);
        assert_eq!(w.cells_in_chunk(2), 1);

        for word in 0..4u32 {
            assert!(w.fill_bank_ready());
            w.fill_word(word);
        }
        assert_eq!(w.sealed_bank(0), Some(0));
        // Second chunk goes to the other bank while chunk 0 is unconsumed.
        for word in 4..8u32 {
            assert!(w.fill_bank_ready());
            w.fill_word(word);
        }
        assert_eq!(w.sealed_bank(1), Some(1));
        // Both banks occupied: chunk 2 cannot fill yet.
        assert!(!w.fill_bank_ready());

        let b = w.acquire(0);
        assert_eq!(w.bank_data(b), &[0, 1, 2, 3]);
        w.release(b);
        assert!(w.fill_bank_ready());
        w.fill_word(8);
        w.fill_word(9); // partial last chunk: 1 cell * 2 words
        assert_eq!(w.sealed_bank(2), Some(0));
    }

    #[test]
    fn kernel_fill_path() {
        let mut w = WindowBuffer::new("k".into(), 4, 2, 4, false);
        assert!(w.begin_kernel_fill(0));
        w.kernel_fill_words(0, &[1, 2, 3, 4]);
        w.kernel_fill_words(0, &[5, 6, 7, 8]);
        w.seal_kernel_fill(0);
        assert_eq!(w.sealed_bank(0), Some(0));
    }
}
