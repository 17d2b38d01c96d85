//! Seeded random stream and the distribution samplers.
//!
//! A run uses one SplitMix64 stream. Every sampler consumes a fixed or
//! data-determined number of raw words, so a run is a pure function of its
//! seed and the evaluation order.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct SampleError(pub String);

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid generator state `{0}`: expected 16 hex digits")]
pub struct ParseStateError(String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngState(pub u64);

impl RngState {
    pub fn seeded(seed: u64) -> RngState {
        RngState(seed)
    }

    pub fn next_raw(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_unit(&mut self) -> f64 {
        unit_from_word(self.next_raw())
    }

    /// Number of raw draws that lead from `earlier` to `self`.
    pub fn draws_since(self, earlier: RngState) -> u64 {
        // GOLDEN_GAMMA is odd, so it has an inverse modulo 2^64.
        let inverse = {
            let mut x: u64 = 1;
            for _ in 0..6 {
                x = x.wrapping_mul(2u64.wrapping_sub(GOLDEN_GAMMA.wrapping_mul(x)));
            }
            x
        };
        self.0.wrapping_sub(earlier.0).wrapping_mul(inverse)
    }

    pub fn uniform(&mut self, low: f64, high: f64) -> Result<f64, SampleError> {
        finite("uniform", &[low, high])?;
        if low > high {
            return Err(SampleError(format!(
                "uniform needs low <= high, got {low} and {high}"
            )));
        }
        let u = self.next_unit();
        Ok(low + u * (high - low))
    }

    /// Box-Muller: the first draw gives the radius, the second the angle.
    pub fn normal(&mut self, mean: f64, sigma: f64) -> Result<f64, SampleError> {
        finite("normal", &[mean, sigma])?;
        if sigma < 0.0 {
            return Err(SampleError(format!("normal needs sigma >= 0, got {sigma}")));
        }
        Ok(mean + sigma * self.standard_normal())
    }

    fn standard_normal(&mut self) -> f64 {
        let u1 = self.next_unit();
        let u2 = self.next_unit();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        r * (2.0 * PI * u2).cos()
    }

    /// Marsaglia and Tsang's method.
    pub fn gamma(&mut self, shape: f64, scale: f64) -> Result<f64, SampleError> {
        finite("gamma", &[shape, scale])?;
        if shape <= 0.0 || scale <= 0.0 {
            return Err(SampleError(format!(
                "gamma needs positive shape and scale, got {shape} and {scale}"
            )));
        }
        Ok(self.standard_gamma(shape) * scale)
    }

    fn standard_gamma(&mut self, shape: f64) -> f64 {
        if shape < 1.0 {
            let boosted = self.standard_gamma(shape + 1.0);
            let u = self.next_unit();
            return boosted * u.powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.standard_normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.next_unit();
            if u < 1.0 - 0.0331 * x * x * x * x
                || u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln())
            {
                return d * v;
            }
        }
    }

    /// Inverse CDF of the log-logistic distribution with median `scale`.
    pub fn log_logistic(&mut self, scale: f64, shape: f64) -> Result<f64, SampleError> {
        finite("loglogistic", &[scale, shape])?;
        if scale <= 0.0 || shape <= 0.0 {
            return Err(SampleError(format!(
                "loglogistic needs positive scale and shape, got {scale} and {shape}"
            )));
        }
        let u = self.next_unit();
        Ok(scale * (u / (1.0 - u)).powf(1.0 / shape))
    }
}

pub fn unit_from_word(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn finite(name: &str, params: &[f64]) -> Result<(), SampleError> {
    if params.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(SampleError(format!("{name} parameters must be finite")))
    }
}

impl fmt::Display for RngState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for RngState {
    type Err = ParseStateError;

    fn from_str(s: &str) -> Result<RngState, ParseStateError> {
        if s.len() != 16 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(ParseStateError(s.to_string()));
        }
        u64::from_str_radix(s, 16)
            .map(RngState)
            .map_err(|_| ParseStateError(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Outputs of the reference SplitMix64 (Vigna), computed independently.
    #[test]
    fn reference_words() {
        let cases: [(u64, [u64; 3]); 4] = [
            (0, [0xe220a8397b1dcdaf, 0x6e789e6aa1b965f4, 0x06c45d188009454f]),
            (1, [0x910a2dec89025cc1, 0xbeeb8da1658eec67, 0xf893a2eefb32555e]),
            (2, [0x975835de1c9756ce, 0xbfc846100bfc1e42, 0x987bbcbfdd7e532f]),
            (42, [0xbdd732262feb6e95, 0x28efe333b266f103, 0x47526757130f9f52]),
        ];
        for (seed, words) in cases {
            let mut s = RngState::seeded(seed);
            for w in words {
                assert_eq!(s.next_raw(), w, "seed {seed}");
            }
        }
        let mut s = RngState::seeded(0);
        for _ in 0..3 {
            s.next_raw();
        }
        assert_eq!(s.0, 0xdaa66d2c7ddf743f);
    }

    #[test]
    fn unit_construction() {
        assert_eq!(unit_from_word(0), 0.0);
        assert_eq!(unit_from_word(u64::MAX), 0.9999999999999999);
        assert!(unit_from_word(u64::MAX) < 1.0);
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = RngState::seeded(7);
        let mut b = RngState::seeded(7);
        for _ in 0..10_000 {
            assert_eq!(a.next_raw(), b.next_raw());
        }
        assert_ne!(RngState::seeded(1).next_raw(), RngState::seeded(2).next_raw());
    }

    #[test]
    fn draw_counting() {
        let start = RngState::seeded(99);
        let mut s = start;
        for n in 0..50u64 {
            assert_eq!(s.draws_since(start), n);
            s.next_raw();
        }
    }

    #[test]
    fn draw_consumption() {
        let start = RngState::seeded(3);
        let mut s = start;
        assert_eq!(s.uniform(2.5, 2.5).unwrap(), 2.5);
        assert_eq!(s.draws_since(start), 1);

        let mut s = start;
        let mut t = start;
        assert_eq!(s.uniform(0.0, 1.0).unwrap(), t.next_unit());

        let mut s = start;
        assert_eq!(s.normal(4.0, 0.0).unwrap(), 4.0);
        assert_eq!(s.draws_since(start), 2);

        let mut s = start;
        s.log_logistic(2.0, 3.0).unwrap();
        assert_eq!(s.draws_since(start), 1);
    }

    #[test]
    fn bad_parameters_are_errors() {
        let mut s = RngState::seeded(0);
        assert!(s.uniform(1.0, 0.0).is_err());
        assert!(s.normal(0.0, -1.0).is_err());
        assert!(s.gamma(0.0, 1.0).is_err());
        assert!(s.gamma(1.0, -1.0).is_err());
        assert!(s.log_logistic(0.0, 1.0).is_err());
        assert!(s.log_logistic(1.0, 0.0).is_err());
        assert!(s.uniform(0.0, f64::INFINITY).is_err());
        assert!(s.normal(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn log_logistic_median_point() {
        // u = 0.5 maps to the scale exactly.
        let u: f64 = 0.5;
        assert_eq!(2.0 * (u / (1.0 - u)).powf(1.0 / 3.0), 2.0);
    }

    #[test]
    fn gamma_small_shape_is_positive() {
        let mut s = RngState::seeded(11);
        for _ in 0..10_000 {
            assert!(s.gamma(0.3, 2.0).unwrap() >= 0.0);
        }
    }

    proptest! {
        #[test]
        fn hex_round_trip(word: u64) {
            let s = RngState(word);
            let text = s.to_string();
            prop_assert_eq!(text.len(), 16);
            prop_assert_eq!(text.parse::<RngState>().unwrap(), s);
        }

        #[test]
        fn unit_in_range(word: u64) {
            let u = unit_from_word(word);
            prop_assert!((0.0..1.0).contains(&u));
        }
    }
}
