//! Counter-based splittable random streams.
//!
//! A [`SeedStream`] is a 64-bit key. Splitting hashes the parent key together
//! with a tag, so any (master seed, path of tags) names one independent
//! stream regardless of the order in which streams are created or consumed.
//! Draw `n` of a stream is a pure function of `(key, n)`: the SplitMix64
//! finalizer applied to `key + (n + 1) * GAMMA`. Nothing depends on the
//! platform or on thread scheduling.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags used when splitting streams. Keeping them in one place
/// guarantees two call sites never share a stream by accident.
pub mod tag {
    pub const SPEC: u64 = 0x5350_4543;
    pub const LENGTH: u64 = 0x4C45_4E47;
    pub const MATRIX: u64 = 0x4D41_5452;
    pub const MODEL: u64 = 0x4D4F_4445;
    pub const CORPUS: u64 = 0x434F_5250;
    pub const MIX: u64 = 0x4D49_5846;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const SUBSAMPLE: u64 = 0x5355_4253;
    pub const DIMS: u64 = 0x4449_4D53;
}

/// A named position in the stream tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedStream {
    key: u64,
}

impl SeedStream {
    pub fn new(master_seed: u64) -> Self {
        Self {
            key: mix64(master_seed ^ 0x6A09_E667_F3BC_C908),
        }
    }

    /// Child stream for `tag`. Children of distinct tags are independent.
    pub fn split(&self, tag: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(tag.wrapping_add(GAMMA))),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn rng(&self) -> CounterRng {
        CounterRng {
            key: self.key,
            counter: 0,
            spare: None,
        }
    }
}

/// `seeded_generator(master_seed, stream_id)`.
pub fn seeded_generator(master_seed: u64, stream_id: u64) -> CounterRng {
    SeedStream::new(master_seed).split(stream_id).rng()
}

#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    spare: Option<f64>,
}

impl CounterRng {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform on [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi]; returns `lo` exactly when `lo == hi`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Uniform integer in `lo..=hi`.
    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        lo + self.below((hi - lo) as u64 + 1) as usize
    }

    /// Standard normal deviate by the polar (Marsaglia) transform. Deviates
    /// come in pairs; the second of each pair is cached for the next call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
