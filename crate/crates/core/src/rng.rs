//! Keyed counter-based pseudorandom function.
//!
//! A key is derived from a tuple of integers by repeated mixing; draw `i`
//! under key `k` is the SplitMix64 output at counter `i`. Nothing is stored,
//! so any draw of any stream can be recomputed in O(1).

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLIT_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 finalizer.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a stream key from a seed and a tuple of coordinates.
#[inline]
pub fn derive_key(seed: u64, parts: &[u64]) -> u64 {
    let mut h = mix64(seed ^ GOLDEN);
    for &p in parts {
        h = mix64(h.rotate_left(23) ^ mix64(p.wrapping_add(SPLIT_SALT)));
    }
    h
}

/// Draw number `index` of the stream keyed by `key`.
#[inline(always)]
pub fn draw(key: u64, index: u64) -> u64 {
    mix64(key.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Uniform on (0, 1] from the top 53 bits.
#[inline(always)]
pub fn unit_open0(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Rate-one exponential by inversion.
#[inline(always)]
pub fn exponential(bits: u64) -> f64 {
    -unit_open0(bits).ln()
}

/// Fair ±1 from the top bit.
#[inline(always)]
pub fn sign(bits: u64) -> i8 {
    if bits >> 63 == 0 {
        1
    } else {
        -1
    }
}

/// Seed of replicate `index` under `root`: `root ⊕ mix(index)`.
///
/// This rule is part of the reproducibility contract; changing it changes
/// every published estimate.
#[inline]
pub fn replicate_seed(root: u64, index: u64) -> u64 {
    root ^ mix64(index.wrapping_mul(GOLDEN) ^ SPLIT_SALT)
}

/// Sequential view of one keyed stream.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        let v = draw(self.key, self.counter);
        self.counter += 1;
        v
    }

    pub fn next_f64(&mut self) -> f64 {
        unit_open0(self.next_u64())
    }
}
