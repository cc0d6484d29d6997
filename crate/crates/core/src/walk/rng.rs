//! Per-path pulse index streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The stream of path `path_id`: one ChaCha8 key from the master seed, one stream per path.
pub fn path_rng(master_seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_id);
    rng
}

/// Uniform indices in `0..radix`, drawn from raw bits when `radix` is a power of two.
pub struct IndexSource {
    rng: ChaCha8Rng,
    radix: usize,
    bits: Option<u32>,
    buf: u64,
    avail: u32,
}

impl IndexSource {
    pub fn new(rng: ChaCha8Rng, radix: usize) -> Self {
        assert!(radix >= 1);
        let bits = radix.is_power_of_two().then(|| radix.trailing_zeros());
        IndexSource { rng, radix, bits, buf: 0, avail: 0 }
    }

    fn take_bits(&mut self, n: u32) -> u64 {
        if n == 0 {
            return 0;
        }
        let mask = (1u64 << n) - 1;
        if self.avail >= n {
            let v = self.buf & mask;
            self.buf >>= n;
            self.avail -= n;
            return v;
        }
        // leftover bits come first, so a block of draws equals the draws one by one
        let fresh = self.rng.next_u64();
        let v = (self.buf | (fresh << self.avail)) & mask;
        let used = n - self.avail;
        self.buf = fresh >> used;
        self.avail = 64 - used;
        v
    }

    pub fn next_index(&mut self) -> usize {
        match self.bits {
            Some(b) => self.take_bits(b) as usize,
            None => self.rng.gen_range(0..self.radix),
        }
    }

    /// `k` indices packed little-endian in base `radix`; the first draw is the lowest digit.
    pub fn next_block(&mut self, k: u32) -> usize {
        match self.bits {
            Some(b) => self.take_bits(b * k) as usize,
            None => {
                let mut idx = 0;
                let mut place = 1;
                for _ in 0..k {
                    idx += self.rng.gen_range(0..self.radix) * place;
                    place *= self.radix;
                }
                idx
            }
        }
    }
}
