use super::Tensor;

/// Deterministic PRNG: xoshiro256++ seeded through SplitMix64.
///
/// The algorithm is fixed so that runs are reproducible across platforms
/// and across re-implementations: the 256-bit state is filled with four
/// successive SplitMix64 outputs of the seed, and normal variates come
/// from the Box–Muller transform applied to 53-bit uniforms. Identical
/// seeds yield identical sample streams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let state = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { state }
    }

    /// Independent stream derived from `(seed, stream)`.
    ///
    /// Training code gives every consumer (parameter init, batch draws,
    /// estimator noise, ...) its own stream so that adding or removing one
    /// consumer does not shift the others.
    pub fn from_seed_stream(seed: u64, stream: u64) -> Self {
        let mut sm = seed;
        let a = splitmix64(&mut sm);
        Rng::from_seed(a ^ stream.wrapping_mul(0xA076_1D64_78BD_642F))
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// One standard normal variate (Box–Muller, cosine branch; the sine
    /// partner is discarded).
    pub fn normal(&mut self) -> f64 {
        let (z0, _z1) = self.normal_pair();
        z0
    }

    fn normal_pair(&mut self) -> (f64, f64) {
        // 1 - u keeps the argument of ln strictly positive.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        (r * t.cos(), r * t.sin())
    }

    /// Tensor of i.i.d. standard normal values.
    pub fn standard_normal(&mut self, shape: impl Into<Vec<usize>>) -> Tensor {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let (z0, z1) = self.normal_pair();
            data.push(z0);
            if data.len() < n {
                data.push(z1);
            }
        }
        Tensor::from_vec(shape, data).expect("shape/data length consistent by construction")
    }

    /// Index into `weights` drawn proportionally to the (normalized)
    /// weights.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.next_f64() * total;
        for (i, &w) in weights.iter().enumerate() {
            u -= w;
            if u < 0.0 {
                return i;
            }
        }
        weights.len() - 1
    }
}
