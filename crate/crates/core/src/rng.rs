//! Deterministic splitmix64 generator and Gaussian sampling.

use crate::error::Result;
use crate::tensor::FpTensor;

/// splitmix64 state. Identical seeds give identical streams on every platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn range_i64(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi, "empty range");
        let span = (hi as i128 - lo as i128 + 1) as u128;
        let v = (self.next_u64() as u128 * span) >> 64;
        (lo as i128 + v as i128) as i64
    }

    /// Derives an independent generator, e.g. one per trial of a sweep.
    pub fn fork(&self, stream: u64) -> Rng {
        let mut r = Rng::new(self.state ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
        r.next_u64();
        r
    }
}

/// Box–Muller over pairs of 53-bit uniforms. The first uniform enters as
/// `1 - u` so the logarithm never sees zero.
pub fn gen_gaussian(rng: &mut Rng, dims: &[usize], mean: f64, std: f64) -> Result<FpTensor> {
    if std < 0.0 || !std.is_finite() || !mean.is_finite() {
        return Err(crate::Error::Argument(format!(
            "gaussian needs finite mean and std >= 0, got mean={mean} std={std}"
        )));
    }
    let n = crate::tensor::checked_numel(dims)?;
    let mut data = Vec::with_capacity(n + 1);
    while data.len() < n {
        let u1 = 1.0 - rng.next_f64();
        let u2 = rng.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        data.push(mean + std * radius * theta.cos());
        data.push(mean + std * radius * theta.sin());
    }
    data.truncate(n);
    FpTensor::new(dims.to_vec(), data)
}
