//! Exact accumulation of `f64` sums and products.
//!
//! [`ExactSum`] is a fixed-point superaccumulator covering the whole finite
//! `f64` range: every finite double is an integer multiple of 2^-1074, so a
//! wide enough two's-complement integer holds any sum of doubles without
//! rounding. Products are added through an FMA split (`a*b = hi + lo`
//! exactly), which is exact unless the low part underflows below the
//! subnormal range.
//!
//! All reductions that cross sample or party boundaries go through this type,
//! so that the rounded result depends only on the mathematical sum and never
//! on the grouping of the terms. This is what makes a federated run with any
//! number of hospitals bit-identical to the centralized one.

const CHUNK_BITS: u32 = 32;
const CHUNKS: usize = 70;
const LOW_MASK: i64 = (1i64 << CHUNK_BITS) - 1;
// Each add moves less than 2^32 into a chunk; i64 overflows after 2^31 adds.
const NORMALIZE_EVERY: u32 = 1 << 29;

/// Exact accumulator for sums of doubles and of products of doubles.
#[derive(Clone)]
pub struct ExactSum {
    chunks: [i64; CHUNKS],
    pending: u32,
    special: f64,
}

impl Default for ExactSum {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for ExactSum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactSum")
            .field("value", &self.round())
            .field("expansion", &self.to_expansion())
            .finish()
    }
}

impl ExactSum {
    pub fn new() -> Self {
        Self { chunks: [0; CHUNKS], pending: 0, special: 0.0 }
    }

    pub fn from_value(x: f64) -> Self {
        let mut acc = Self::new();
        acc.add(x);
        acc
    }

    /// Adds `x` exactly. Infinities and NaN poison the accumulator with IEEE
    /// semantics.
    pub fn add(&mut self, x: f64) {
        if x == 0.0 {
            return;
        }
        if !x.is_finite() {
            self.special += x;
            return;
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as u32;
        let frac = bits & ((1u64 << 52) - 1);
        // value = mant * 2^(pos - 1074)
        let (mant, pos) = if biased == 0 { (frac, 0) } else { (frac | (1u64 << 52), biased - 1) };
        let idx = (pos / CHUNK_BITS) as usize;
        let shifted = (mant as u128) << (pos % CHUNK_BITS);
        let parts = [
            (shifted & 0xffff_ffff) as i64,
            ((shifted >> 32) & 0xffff_ffff) as i64,
            (shifted >> 64) as i64,
        ];
        for (k, part) in parts.into_iter().enumerate() {
            if negative {
                self.chunks[idx + k] -= part;
            } else {
                self.chunks[idx + k] += part;
            }
        }
        self.bump();
    }

    /// Adds the exact product `a * b`.
    pub fn add_product(&mut self, a: f64, b: f64) {
        let hi = a * b;
        if hi == 0.0 && (a == 0.0 || b == 0.0) {
            return;
        }
        if !hi.is_finite() {
            self.special += hi;
            return;
        }
        let lo = a.mul_add(b, -hi);
        self.add(hi);
        self.add(lo);
    }

    /// Adds the exact product `a * b * c`.
    pub fn add_triple_product(&mut self, a: f64, b: f64, c: f64) {
        let hi = a * b;
        if !hi.is_finite() {
            self.special += hi * c;
            return;
        }
        let lo = a.mul_add(b, -hi);
        self.add_product(hi, c);
        self.add_product(lo, c);
    }

    /// Adds `scale * value(other)` exactly, where `other` is given as an
    /// expansion (a list of doubles whose exact sum is the value).
    pub fn add_scaled_expansion(&mut self, scale: f64, expansion: &[f64]) {
        for &c in expansion {
            self.add_product(scale, c);
        }
    }

    pub fn add_expansion(&mut self, expansion: &[f64]) {
        for &c in expansion {
            self.add(c);
        }
    }

    pub fn sub_expansion(&mut self, expansion: &[f64]) {
        for &c in expansion {
            self.add(-c);
        }
    }

    /// Adds another accumulator exactly.
    pub fn merge(&mut self, other: &ExactSum) {
        let mut rhs = other.clone();
        rhs.carry_propagate();
        self.carry_propagate();
        for (dst, src) in self.chunks.iter_mut().zip(rhs.chunks.iter()) {
            *dst += *src;
        }
        self.special += other.special;
        self.bump();
    }

    pub fn negate(&mut self) {
        for c in self.chunks.iter_mut() {
            *c = -*c;
        }
        self.special = -self.special;
    }

    pub fn is_zero(&self) -> bool {
        self.special == 0.0 && self.round() == 0.0
    }

    /// The exact value rounded to the nearest double (ties to even).
    pub fn round(&self) -> f64 {
        if self.special != 0.0 || self.special.is_nan() {
            return self.special;
        }
        let mut limbs = self.chunks;
        propagate(&mut limbs);
        let negative = limbs[CHUNKS - 1] < 0;
        if negative {
            for c in limbs.iter_mut() {
                *c = -*c;
            }
            propagate(&mut limbs);
        }
        let sign = if negative { 1u64 << 63 } else { 0 };
        let Some(top) = limbs.iter().rposition(|&c| c != 0) else {
            return 0.0;
        };
        let len = top as u32 * CHUNK_BITS + (64 - (limbs[top] as u64).leading_zeros());
        if len <= 53 {
            // Fits the significand; subnormal and lowest-binade bit patterns
            // coincide with the integer itself.
            let m = extract_bits(&limbs, 0, len);
            return f64::from_bits(sign | m);
        }
        let mut shift = len - 53;
        let mut q = extract_bits(&limbs, shift, 53);
        let half = bit_at(&limbs, shift - 1);
        let sticky = shift >= 2 && any_bits_below(&limbs, shift - 1);
        if half && (sticky || q & 1 == 1) {
            q += 1;
            if q == 1u64 << 53 {
                q >>= 1;
                shift += 1;
            }
        }
        let biased = shift as u64 + 1;
        if biased >= 0x7ff {
            return f64::from_bits(sign | (0x7ffu64 << 52));
        }
        f64::from_bits(sign | (biased << 52) | (q & ((1u64 << 52) - 1)))
    }

    /// Non-overlapping expansion of the exact value, largest magnitude first.
    /// Empty for zero. Summing the components exactly gives back the value.
    pub fn to_expansion(&self) -> Vec<f64> {
        let mut rest = self.clone();
        let mut out = Vec::new();
        loop {
            let x = rest.round();
            if x == 0.0 {
                break;
            }
            out.push(x);
            if !x.is_finite() {
                break;
            }
            rest.add(-x);
        }
        out
    }

    fn bump(&mut self) {
        self.pending += 1;
        if self.pending >= NORMALIZE_EVERY {
            self.carry_propagate();
        }
    }

    fn carry_propagate(&mut self) {
        propagate(&mut self.chunks);
        self.pending = 0;
    }
}

fn propagate(limbs: &mut [i64; CHUNKS]) {
    for i in 0..CHUNKS - 1 {
        let carry = limbs[i] >> CHUNK_BITS;
        limbs[i] &= LOW_MASK;
        limbs[i + 1] += carry;
    }
}

fn bit_at(limbs: &[i64; CHUNKS], pos: u32) -> bool {
    let idx = (pos / CHUNK_BITS) as usize;
    (limbs[idx] >> (pos % CHUNK_BITS)) & 1 == 1
}

fn extract_bits(limbs: &[i64; CHUNKS], lo: u32, count: u32) -> u64 {
    debug_assert!(count <= 64);
    let idx = (lo / CHUNK_BITS) as usize;
    let off = lo % CHUNK_BITS;
    let mut window: u128 = 0;
    for k in (0..4).rev() {
        let limb = limbs.get(idx + k).copied().unwrap_or(0) as u128;
        window = (window << CHUNK_BITS) | limb;
    }
    let v = window >> off;
    let mask = if count == 64 { u64::MAX as u128 } else { (1u128 << count) - 1 };
    (v & mask) as u64
}

fn any_bits_below(limbs: &[i64; CHUNKS], pos: u32) -> bool {
    let idx = (pos / CHUNK_BITS) as usize;
    let off = pos % CHUNK_BITS;
    if limbs[..idx].iter().any(|&c| c != 0) {
        return true;
    }
    off > 0 && (limbs[idx] & ((1i64 << off) - 1)) != 0
}

/// Correctly rounded dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    let mut acc = ExactSum::new();
    for (&x, &y) in a.iter().zip(b) {
        acc.add_product(x, y);
    }
    acc.round()
}

/// Correctly rounded sum.
pub fn sum(xs: &[f64]) -> f64 {
    let mut acc = ExactSum::new();
    for &x in xs {
        acc.add(x);
    }
    acc.round()
}

/// Rounds every accumulator to its nearest double.
pub fn round_all(accs: &[ExactSum]) -> Vec<f64> {
    accs.iter().map(ExactSum::round).collect()
}
