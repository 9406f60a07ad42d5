//! Seeded Anderson potentials.
//!
//! Every site value is a pure function of `(seed, index, site)`: the ChaCha
//! key is derived from the seed, the stream is the sample index and the word
//! position is derived from the site, so a potential never depends on the
//! order in which samples or sites are generated.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::operator::Interval;
use crate::scalar::Real;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DisorderError {
    #[error("invalid distribution: {0}")]
    Invalid(String),
}

/// Law of a single site value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SingleSiteDist<T> {
    /// Uniform on `[0, hi]`.
    Uniform { hi: T },
    /// `value` with probability `p`, zero otherwise.
    Bernoulli { p: T, value: T },
    /// `U^{1/kappa}`, so `P([0, eps)) = eps^kappa` on `[0, 1]`.
    PowerLaw { kappa: T },
    PointMass { value: T },
}

impl<T: Real> SingleSiteDist<T> {
    pub fn validate(&self) -> Result<(), DisorderError> {
        let bad = |m: String| Err(DisorderError::Invalid(m));
        match *self {
            SingleSiteDist::Uniform { hi } if !(hi > T::zero() && hi.is_finite()) => bad(format!("uniform upper end must be positive, got {hi}")),
            SingleSiteDist::Bernoulli { p, .. } if !(p >= T::zero() && p <= T::one()) => bad(format!("probability must lie in [0, 1], got {p}")),
            SingleSiteDist::Bernoulli { value, .. } if !(value > T::zero() && value.is_finite()) => {
                bad(format!("Bernoulli value must be positive, got {value}"))
            }
            SingleSiteDist::PowerLaw { kappa } if !(kappa > T::zero() && kappa.is_finite()) => bad(format!("kappa must be positive, got {kappa}")),
            SingleSiteDist::PointMass { value } if !(value >= T::zero() && value.is_finite()) => {
                bad(format!("point mass must be nonnegative, got {value}"))
            }
            _ => Ok(()),
        }
    }

    /// Inverse distribution function on `[0, 1)`.
    pub fn quantile(&self, u: T) -> T {
        match *self {
            SingleSiteDist::Uniform { hi } => hi * u,
            SingleSiteDist::Bernoulli { p, value } => {
                if u < T::one() - p {
                    T::zero()
                } else {
                    value
                }
            }
            SingleSiteDist::PowerLaw { kappa } => u.powf(T::one() / kappa),
            SingleSiteDist::PointMass { value } => value,
        }
    }

    /// `P([0, eps))`.
    pub fn small_ball(&self, eps: T) -> T {
        if eps <= T::zero() {
            return T::zero();
        }
        match *self {
            SingleSiteDist::Uniform { hi } => (eps / hi).min(T::one()),
            SingleSiteDist::Bernoulli { p, value } => {
                if value < eps {
                    T::one()
                } else {
                    T::one() - p
                }
            }
            SingleSiteDist::PowerLaw { kappa } => eps.powf(kappa).min(T::one()),
            SingleSiteDist::PointMass { value } => {
                if value < eps {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn mean(&self) -> T {
        match *self {
            SingleSiteDist::Uniform { hi } => hi / T::lit(2.0),
            SingleSiteDist::Bernoulli { p, value } => p * value,
            SingleSiteDist::PowerLaw { kappa } => kappa / (kappa + T::one()),
            SingleSiteDist::PointMass { value } => value,
        }
    }

    /// Supremum of the support.
    pub fn sup(&self) -> T {
        match *self {
            SingleSiteDist::Uniform { hi } => hi,
            SingleSiteDist::Bernoulli { p, value } => {
                if p > T::zero() {
                    value
                } else {
                    T::zero()
                }
            }
            SingleSiteDist::PowerLaw { .. } => T::one(),
            SingleSiteDist::PointMass { value } => value,
        }
    }

    /// Exponent `kappa` with `P([0, eps)) >= C eps^kappa`, when one is known.
    pub fn small_ball_exponent(&self) -> Option<T> {
        match *self {
            SingleSiteDist::Uniform { .. } => Some(T::one()),
            SingleSiteDist::PowerLaw { kappa } => Some(kappa),
            SingleSiteDist::Bernoulli { p, .. } if p < T::one() => Some(T::zero()),
            SingleSiteDist::PointMass { value } if value == T::zero() => Some(T::zero()),
            _ => None,
        }
    }
}

/// Diagonal potential on an interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Potential<T> {
    pub interval: Interval,
    pub values: Vec<T>,
    pub dist: SingleSiteDist<T>,
    pub seed: u64,
    pub index: u64,
}

impl<T: Real> Potential<T> {
    pub fn zeros(interval: Interval) -> Self {
        Self { interval, values: vec![T::zero(); interval.len()], dist: SingleSiteDist::PointMass { value: T::zero() }, seed: 0, index: 0 }
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    /// `(site, value)` rows.
    pub fn csv_rows(&self) -> Vec<(i64, T)> {
        self.interval.sites().zip(self.values.iter().copied()).collect()
    }

    /// Pointwise `min(threshold, V)`.
    pub fn truncated_at(&self, threshold: T) -> Self {
        Self { values: self.values.iter().map(|&v| v.min(threshold)).collect(), ..self.clone() }
    }
}

/// Uniform variates in `[0, 1)` for the sites of an interval, keyed by `(seed, index, site)`.
pub fn site_uniforms(seed: u64, index: u64, interval: Interval) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    // two 32-bit words per site; sites are offset so that negative ones map to valid positions
    let offset = (interval.a as i128 + (1i128 << 63)) as u128;
    rng.set_word_pos(offset * 2);
    (0..interval.len()).map(|_| (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)).collect()
}

pub fn sample_potential<T: Real>(d: &SingleSiteDist<T>, interval: Interval, seed: u64, index: u64) -> Potential<T> {
    let values = site_uniforms(seed, index, interval).into_iter().map(|u| d.quantile(T::lit(u))).collect();
    Potential { interval, values, dist: *d, seed, index }
}

/// Potential drawn from an exponentially tilted law, with its likelihood ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltedPotential<T> {
    pub potential: Potential<T>,
    /// `ln` of the ratio of the target density to the sampling density.
    pub log_weight: T,
}

/// Samples with quantile levels tilted towards zero: each level has density
/// `theta e^{-theta u} / (1 - e^{-theta})` on `[0, 1]`. Averaging
/// `exp(log_weight) * 1{event}` gives an unbiased estimate under the
/// untilted law, with far smaller variance for events driven by small values.
pub fn sample_tilted<T: Real>(d: &SingleSiteDist<T>, interval: Interval, seed: u64, index: u64, theta: T) -> TiltedPotential<T> {
    assert!(theta > T::zero(), "tilt must be positive");
    let em1 = (-theta).exp_m1();
    let log_norm = (-em1).ln() - theta.ln();
    let mut log_weight = T::zero();
    let values = site_uniforms(seed, index, interval)
        .into_iter()
        .map(|v| {
            let u = (-(T::lit(v) * em1).ln_1p() / theta).min(T::one() - T::epsilon());
            log_weight += theta * u + log_norm;
            d.quantile(u)
        })
        .collect();
    TiltedPotential { potential: Potential { interval, values, dist: *d, seed, index }, log_weight }
}

/// `min(c_tilde C_0 / L^b, V)`.
pub fn truncate_potential<T: Real>(v: &Potential<T>, c_tilde: T, c0: T, l: usize, b: T) -> Potential<T> {
    v.truncated_at(truncation_threshold(c_tilde, c0, l, b))
}

pub fn truncation_threshold<T: Real>(c_tilde: T, c0: T, l: usize, b: T) -> T {
    c_tilde * c0 / T::from_usize_lossy(l).powf(b)
}
