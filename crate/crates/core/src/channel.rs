// SPDX-License-Identifier: MIT OR Apache-2.0

//! Distance-parameterized bit-error channel.
//!
//! Normalized distance `d` maps to a bit error probability `erfc(1/d)`.
//! Every reader command carries `H = 51` bits of overhead on top of its
//! payload.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Command overhead in bits.
pub const OVERHEAD_BITS: u32 = 51;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("command length must be positive")]
    NonPositiveLength,
}

pub fn bit_error_rate(d: f64) -> Result<f64, ChannelError> {
    if !(d > 0.0) {
        return Err(ChannelError::NonPositiveDistance(d));
    }
    Ok(libm::erfc(1.0 / d))
}

/// Normalized throughput of a BlockWrite carrying `bits` payload bits.
pub fn blockwrite_throughput(bits: u32, d: f64) -> Result<f64, ChannelError> {
    if bits == 0 {
        return Err(ChannelError::NonPositiveLength);
    }
    let p = bit_error_rate(d)?;
    let total = (bits + OVERHEAD_BITS) as f64;
    Ok(bits as f64 / total * (1.0 - p).powf(total))
}

/// Probability that a command of `bits` payload bits arrives unflipped.
pub fn command_success_probability(bits: u32, d: f64) -> Result<f64, ChannelError> {
    let p = bit_error_rate(d)?;
    Ok((1.0 - p).powi((bits + OVERHEAD_BITS) as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Delivered,
    /// At least one bit flipped. `bit` is the flipped position: below the
    /// payload length it lands in the data, otherwise in the framing.
    Corrupted {
        bit: u32,
    },
    Lost,
}

/// Channel calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Centimetres per unit of normalized distance.
    pub d_ref_cm: f64,
    /// Scale of the command-miss probability.
    pub k_miss: f64,
    /// Distance scale of the miss process: a command is missed with
    /// probability `k_miss * erfc(d_miss_cm / d_cm)`.
    pub d_miss_cm: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            d_ref_cm: 250.0,
            k_miss: 4.0,
            d_miss_cm: 95.0,
        }
    }
}

impl ChannelParams {
    pub fn normalize(&self, d_cm: f64) -> f64 {
        d_cm / self.d_ref_cm
    }

    /// Probability the tag does not pick up a command at all, at normalized
    /// distance `d`.
    pub fn miss_probability(&self, d: f64) -> Result<f64, ChannelError> {
        let d_miss = d * self.d_ref_cm / self.d_miss_cm;
        Ok((self.k_miss * bit_error_rate(d_miss)?).clamp(0.0, 1.0 - 1e-9))
    }
}

/// Draw the fate of one command of `bits` payload bits.
pub fn delivery_outcome(
    rng: &mut ChaCha8Rng,
    params: &ChannelParams,
    bits: u32,
    d: f64,
    tag_powered: bool,
) -> Result<Delivery, ChannelError> {
    if bits == 0 {
        return Err(ChannelError::NonPositiveLength);
    }
    let p_miss = params.miss_probability(d)?;
    let p_ok = command_success_probability(bits, d)?;
    if !tag_powered {
        return Ok(Delivery::Lost);
    }
    if rng.random::<f64>() < p_miss {
        return Ok(Delivery::Lost);
    }
    if rng.random::<f64>() < p_ok {
        Ok(Delivery::Delivered)
    } else {
        let bit = rng.random_range(0..bits + OVERHEAD_BITS);
        Ok(Delivery::Corrupted { bit })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Independent erfc: Taylor series for small x, Lentz continued fraction
    /// for large x.
    fn erfc_oracle(x: f64) -> f64 {
        if x < 1.0 {
            let mut term = x;
            let mut sum = x;
            let mut n = 0.0;
            loop {
                n += 1.0;
                term *= -x * x / n;
                let add = term / (2.0 * n + 1.0);
                sum += add;
                if add.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
            1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
        } else {
            // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...))))
            let mut f = 0.0;
            for k in (1..5000).rev() {
                f = (k as f64 / 2.0) / (x + f);
            }
            (-x * x).exp() / std::f64::consts::PI.sqrt() / (x + f)
        }
    }

    #[test]
    fn erfc_against_oracle() {
        for &d in &[0.15, 0.2, 0.3, 0.45, 0.5, 0.7, 1.0, 2.0, 5.0] {
            let got = bit_error_rate(d).unwrap();
            let want = erfc_oracle(1.0 / d);
            assert!(((got - want) / want).abs() < 1e-12, "d={d}: {got} vs {want}");
        }
        assert!((bit_error_rate(0.5).unwrap() - 4.677_734_981_047_266e-3).abs() < 1e-15);
        assert!((bit_error_rate(0.2).unwrap() - 1.537_459_794_428_035e-12).abs() < 1e-24);
        assert!(bit_error_rate(0.01).unwrap() < 1e-300);
        assert!(matches!(bit_error_rate(0.0), Err(ChannelError::NonPositiveDistance(_))));
        assert!(bit_error_rate(-1.0).is_err());
        assert!(bit_error_rate(f64::NAN).is_err());
    }

    #[test]
    fn throughput_examples() {
        let t = |l, d| blockwrite_throughput(l, d).unwrap();
        assert!((t(128, 0.2) - 0.715_083_798).abs() < 1e-6);
        assert!((t(256, 0.2) - 0.833_876_221).abs() < 1e-6);
        assert!(t(128, 0.2) < t(256, 0.2));
        assert!(t(128, 0.5) > t(256, 0.5));
        assert!((t(128, 0.5) - 0.309).abs() < 1e-3);
        assert!((t(256, 0.5) - 0.198).abs() < 1e-3);
        assert_eq!(blockwrite_throughput(0, 0.5), Err(ChannelError::NonPositiveLength));
        assert!(blockwrite_throughput(16, 0.0).is_err());
    }

    #[test]
    fn throughput_product_identity() {
        for &d in &[0.1, 0.3, 0.6, 0.9] {
            for l in [16u32, 64, 200, 512] {
                let p = bit_error_rate(d).unwrap();
                let h = OVERHEAD_BITS as f64;
                let l_f = l as f64;
                let expect = (l_f / (l_f + h)) * (1.0 - p).powf(l_f + h);
                assert!((blockwrite_throughput(l, d).unwrap() - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn throughput_argmax_shrinks_with_distance() {
        let grid: Vec<u32> = (1..=32).map(|k| 16 * k).collect();
        let mut last = u32::MAX;
        for k in 1..=10 {
            let d = k as f64 / 10.0;
            let values: Vec<f64> = grid.iter().map(|&l| blockwrite_throughput(l, d).unwrap()).collect();
            let best = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            // unimodal on the grid: rises to the peak, then falls
            assert!(values[..=best].windows(2).all(|w| w[0] <= w[1]));
            assert!(values[best..].windows(2).all(|w| w[0] >= w[1]));
            assert!(grid[best] <= last, "argmax grew at d={d}");
            last = grid[best];
        }
    }

    #[test]
    fn miss_probability_shape() {
        let p = ChannelParams::default();
        let at = |cm: f64| p.miss_probability(p.normalize(cm)).unwrap();
        assert!((at(90.0) - 4.0 * erfc_oracle(95.0 / 90.0)).abs() < 1e-12);
        assert!(at(20.0) < 1e-10);
        let grid: Vec<f64> = (1..=40).map(|k| at(5.0 * k as f64)).collect();
        assert!(grid.windows(2).all(|w| w[0] <= w[1]));
        let far = ChannelParams { k_miss: 50.0, ..p };
        assert!(far.miss_probability(10.0).unwrap() < 1.0);
    }

    #[test]
    fn unpowered_tag_always_loses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ChannelParams::default();
        for _ in 0..100 {
            assert_eq!(delivery_outcome(&mut rng, &p, 16, 0.2, false).unwrap(), Delivery::Lost);
        }
    }

    #[test]
    fn close_range_is_clean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ChannelParams::default();
        // 1 - (1 - 1.5e-12)^563 < 1e-8
        assert!(1.0 - command_success_probability(512, 0.2).unwrap() < 1e-8);
        let p = ChannelParams {
            d_miss_cm: p.d_ref_cm,
            ..p
        };
        assert!(p.miss_probability(0.2).unwrap() < 1e-10);
        for _ in 0..10_000 {
            assert_eq!(
                delivery_outcome(&mut rng, &p, 512, 0.2, true).unwrap(),
                Delivery::Delivered
            );
        }
    }

    fn corrupted_fraction(seed: u64, d: f64, bits: u32, draws: usize) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ChannelParams {
            k_miss: 0.0,
            ..Default::default()
        };
        let mut corrupted = 0usize;
        let mut arrived = 0usize;
        for _ in 0..draws {
            match delivery_outcome(&mut rng, &p, bits, d, true).unwrap() {
                Delivery::Lost => {}
                Delivery::Delivered => arrived += 1,
                Delivery::Corrupted { bit } => {
                    assert!(bit < bits + OVERHEAD_BITS);
                    arrived += 1;
                    corrupted += 1;
                }
            }
        }
        let closed = 1.0 - (1.0 - bit_error_rate(d).unwrap()).powi((bits + OVERHEAD_BITS) as i32);
        (corrupted as f64 / arrived as f64, closed)
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let (mc, closed) = corrupted_fraction(42, 0.8, 512, 10_000);
        assert!((mc - closed).abs() < 0.02, "{mc} vs {closed}");
        let (mc, closed) = corrupted_fraction(42, 0.4, 512, 10_000);
        assert!((mc - closed).abs() < 0.02, "{mc} vs {closed}");
    }

    #[test]
    fn outcomes_are_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = ChannelParams::default();
            (0..500)
                .map(|_| delivery_outcome(&mut rng, &p, 64, 0.5, true).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }
}
