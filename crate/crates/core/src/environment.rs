//! The i.i.d. energy law of the exponential-type family.
//!
//! For `alpha >= 1` and system size `N` the energies have density
//! `C * exp(-|x|^alpha / (alpha * N^(alpha - 1)))`. `alpha = 1` is the double
//! exponential law (independent of `N`), `alpha = 2` is Gaussian(0, N).

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature;

const CDF_TOLERANCE: f64 = 1e-10;
// Beyond this many units of the exponent the density is below e^-60 of its
// value at the integration start.
const TAIL_EXPONENT_SPAN: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    DoubleExponential,
    Gaussian,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Environment {
    alpha: f64,
    n: u32,
}

/// An open interval `(lo, hi)`; either endpoint may be infinite.
///
/// Serialized as a two-element array where `null` stands for an unbounded side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Option<f64>; 2]", into = "[Option<f64>; 2]")]
pub struct OpenInterval {
    lo: f64,
    hi: f64,
}

impl OpenInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::EmptyInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn whole_line() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    /// Infimum of `|x|` over the interval.
    pub fn inf_abs(&self) -> f64 {
        if self.lo < 0.0 && self.hi > 0.0 {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    /// Supremum of `|x|` over the interval.
    pub fn sup_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    fn scaled(&self, factor: f64) -> (f64, f64) {
        (self.lo * factor, self.hi * factor)
    }
}

impl TryFrom<[Option<f64>; 2]> for OpenInterval {
    type Error = Error;

    fn try_from(v: [Option<f64>; 2]) -> Result<Self> {
        Self::new(v[0].unwrap_or(f64::NEG_INFINITY), v[1].unwrap_or(f64::INFINITY))
    }
}

impl From<OpenInterval> for [Option<f64>; 2] {
    fn from(i: OpenInterval) -> Self {
        [
            i.lo.is_finite().then_some(i.lo),
            i.hi.is_finite().then_some(i.hi),
        ]
    }
}

impl Environment {
    pub fn new(alpha: f64, n: u32) -> Result<Self> {
        if !(alpha >= 1.0) || !alpha.is_finite() {
            return Err(Error::InvalidAlpha(alpha));
        }
        if n == 0 {
            return Err(Error::InvalidSize);
        }
        Ok(Self { alpha, n })
    }

    pub fn double_exponential(n: u32) -> Result<Self> {
        Self::new(1.0, n)
    }

    pub fn gaussian(n: u32) -> Result<Self> {
        Self::new(2.0, n)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    fn family(&self) -> Family {
        if self.alpha == 1.0 {
            Family::DoubleExponential
        } else if self.alpha == 2.0 {
            Family::Gaussian
        } else {
            Family::General
        }
    }

    /// `alpha * N^(alpha - 1)`, the divisor inside the exponent.
    fn exponent_scale(&self) -> f64 {
        self.alpha * f64::from(self.n).powf(self.alpha - 1.0)
    }

    /// The normalizer `C_{alpha,N} = (alpha / N)^((alpha - 1) / alpha) / (2 Gamma(1 / alpha))`.
    pub fn normalizing_constant(&self) -> f64 {
        match self.family() {
            Family::DoubleExponential => 0.5,
            Family::Gaussian => 1.0 / (2.0 * std::f64::consts::PI * f64::from(self.n)).sqrt(),
            Family::General => {
                let a = self.alpha;
                (a / f64::from(self.n)).powf((a - 1.0) / a) / (2.0 * gamma(1.0 / a))
            }
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        let c = self.normalizing_constant();
        match self.family() {
            Family::DoubleExponential => c * (-x.abs()).exp(),
            Family::Gaussian => c * (-x * x / (2.0 * f64::from(self.n))).exp(),
            Family::General => c * (-x.abs().powf(self.alpha) / self.exponent_scale()).exp(),
        }
    }

    /// Upper tail mass `P(H > t)` for `t >= 0`.
    fn upper_tail(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        if t == f64::INFINITY {
            return 0.0;
        }
        match self.family() {
            Family::DoubleExponential => 0.5 * (-t).exp(),
            Family::Gaussian => 0.5 * erfc(t / (2.0 * f64::from(self.n)).sqrt()),
            Family::General => {
                let upper = self.tail_cutoff(t);
                quadrature::integrate(|x| self.density(x), t, upper, CDF_TOLERANCE * 1e-2)
            }
        }
    }

    /// Point beyond which the density is negligible relative to its value at `t`.
    fn tail_cutoff(&self, t: f64) -> f64 {
        let s = self.exponent_scale();
        let g = t.powf(self.alpha) / s + TAIL_EXPONENT_SPAN;
        (s * g).powf(1.0 / self.alpha)
    }

    /// Mass of `(a, b)` with `0 <= a < b`; `width` is `b - a` computed
    /// before scaling, which keeps narrow intervals accurate.
    fn positive_mass(&self, a: f64, b: f64, width: f64) -> f64 {
        match self.family() {
            Family::DoubleExponential => {
                if b == f64::INFINITY {
                    0.5 * (-a).exp()
                } else {
                    0.5 * (-a).exp() * -(-width).exp_m1()
                }
            }
            Family::Gaussian => {
                let s = (2.0 * f64::from(self.n)).sqrt();
                0.5 * (erfc(a / s) - erfc(b / s))
            }
            Family::General => {
                let upper = if b == f64::INFINITY {
                    self.tail_cutoff(a)
                } else {
                    b.min(self.tail_cutoff(a))
                };
                if upper <= a {
                    return 0.0;
                }
                let scale = self.density(a).max(f64::MIN_POSITIVE);
                quadrature::integrate(|x| self.density(x), a, upper, CDF_TOLERANCE * 1e-2 * scale.min(1.0))
            }
        }
    }

    /// Exact closed forms at `alpha` in {1, 2}; adaptive quadrature otherwise.
    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x < 0.0 {
            self.upper_tail(-x)
        } else {
            1.0 - self.upper_tail(x)
        }
    }

    /// `P(H / N in interval)`, i.e. the mass of `(N * lo, N * hi)`.
    pub fn interval_probability(&self, interval: OpenInterval) -> f64 {
        let n = f64::from(self.n);
        let (a, b) = interval.scaled(n);
        let width = n * (interval.hi() - interval.lo());
        if a >= 0.0 {
            self.positive_mass(a, b, width)
        } else if b <= 0.0 {
            self.positive_mass(-b, -a, width)
        } else {
            // straddles zero
            (0.5 - self.upper_tail(-a)) + (0.5 - self.upper_tail(b))
        }
    }

    /// Draws one energy.
    ///
    /// `alpha = 1` inverts the double exponential CDF, `alpha = 2` scales a
    /// standard normal, and other `alpha` use `|H| = (alpha N^(alpha-1) G)^(1/alpha)`
    /// with `G ~ Gamma(1/alpha, 1)` and an independent fair sign.
    #[inline]
    pub fn sample_energy<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family() {
            Family::DoubleExponential => {
                let u = open_unit(rng);
                if u < 0.5 {
                    (2.0 * u).ln()
                } else {
                    -(2.0 * (1.0 - u)).ln()
                }
            }
            Family::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                z * f64::from(self.n).sqrt()
            }
            Family::General => {
                let shape = 1.0 / self.alpha;
                let g = Gamma::new(shape, 1.0)
                    .expect("shape is positive and finite")
                    .sample(rng);
                let magnitude = (self.exponent_scale() * g).powf(shape);
                if rng.next_u64() >> 63 == 0 {
                    -magnitude
                } else {
                    magnitude
                }
            }
        }
    }
}

#[inline]
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
