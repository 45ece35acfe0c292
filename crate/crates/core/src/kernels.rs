//! Attractive interaction kernels.
//!
//! Every kernel is even, nonnegative and normalized to unit L¹ norm. The
//! Gaussian and Bessel kernels are strictly decreasing in `|x|`; the hat
//! kernel is compactly supported and only nonincreasing, so equilibria built
//! on it need not be unique.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::LabError;

/// Pointwise data of an even attraction kernel `G(x) = g(|x|)`.
pub trait AttractionKernel: Send + Sync {
    fn eval(&self, x: f64) -> f64;
    /// `G'(x)`, odd, with `G'(0) = 0`.
    fn eval_derivative(&self, x: f64) -> f64;
    fn l1_norm(&self) -> f64;
    /// False when `g` is only nonincreasing (flat pieces allow disjoint equilibria).
    fn strictly_decreasing(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    /// `e^{-x²/2} / √(2π)`
    Gaussian,
    /// `e^{-|x|} / 2`, the Green's function of `Id - ∂ₓₓ`.
    Bessel,
    /// `max(1 - |x|, 0)`
    Hat,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::Gaussian, Kernel::Bessel, Kernel::Hat];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Bessel => "bessel",
            Kernel::Hat => "hat",
        }
    }

    /// Points where the derivative jumps.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            Kernel::Gaussian => &[],
            Kernel::Bessel => &[0.0],
            Kernel::Hat => &[-1.0, 0.0, 1.0],
        }
    }
}

impl AttractionKernel for Kernel {
    fn eval(&self, x: f64) -> f64 {
        let r = x.abs();
        match self {
            Kernel::Gaussian => (-0.5 * r * r).exp() / (2.0 * PI).sqrt(),
            Kernel::Bessel => 0.5 * (-r).exp(),
            Kernel::Hat => (1.0 - r).max(0.0),
        }
    }

    fn eval_derivative(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let r = x.abs();
        let s = x.signum();
        match self {
            Kernel::Gaussian => -x * (-0.5 * r * r).exp() / (2.0 * PI).sqrt(),
            Kernel::Bessel => -s * 0.5 * (-r).exp(),
            Kernel::Hat => {
                if r < 1.0 {
                    -s
                } else {
                    0.0
                }
            }
        }
    }

    fn l1_norm(&self) -> f64 {
        1.0
    }

    fn strictly_decreasing(&self) -> bool {
        !matches!(self, Kernel::Hat)
    }
}

/// The zero kernel; turns the model into the porous medium equation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoAttraction;

impl AttractionKernel for NoAttraction {
    fn eval(&self, _x: f64) -> f64 {
        0.0
    }
    fn eval_derivative(&self, _x: f64) -> f64 {
        0.0
    }
    fn l1_norm(&self) -> f64 {
        0.0
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Kernel::Gaussian),
            "bessel" => Ok(Kernel::Bessel),
            "hat" => Ok(Kernel::Hat),
            other => Err(LabError::InvalidParameter(format!(
                "unknown kernel '{other}' (expected gaussian, bessel or hat)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn values_at_reference_points() {
        assert!((Kernel::Gaussian.eval(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(Kernel::Bessel.eval(0.0), 0.5);
        assert_eq!(Kernel::Hat.eval(2.0), 0.0);
        assert_eq!(Kernel::Gaussian.eval_derivative(0.0), 0.0);
        assert!((Kernel::Bessel.eval_derivative(1.0) + (-1.0f64).exp() / 2.0).abs() < 1e-15);
        assert!((Kernel::Bessel.eval_derivative(1.0) + 0.18394).abs() < 1e-5);
        assert!((Kernel::Gaussian.eval_derivative(1.0) + 0.24197).abs() < 1e-5);
        for k in Kernel::ALL {
            assert_eq!(k.l1_norm(), 1.0);
        }
    }

    #[test]
    fn symmetry_and_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in Kernel::ALL {
            for _ in 0..200 {
                let x: f64 = rng.gen_range(-6.0..6.0);
                assert!(k.eval(x) >= 0.0);
                assert_eq!(k.eval(x), k.eval(-x));
                assert_eq!(k.eval_derivative(-x), -k.eval_derivative(x));
            }
        }
    }

    #[test]
    fn strict_monotonicity_flags() {
        for k in [Kernel::Gaussian, Kernel::Bessel] {
            assert!(k.strictly_decreasing());
            let mut prev = k.eval(0.0);
            for i in 1..200 {
                let v = k.eval(i as f64 * 0.05);
                assert!(v < prev);
                prev = v;
            }
        }
        assert!(!Kernel::Hat.strictly_decreasing());
    }

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in Kernel::ALL {
            let mut n = 0;
            while n < 20 {
                let x: f64 = rng.gen_range(-4.0..4.0);
                if k.kinks().iter().any(|c| (x - c).abs() < 0.05) {
                    continue;
                }
                n += 1;
                let mut errs = Vec::new();
                for h in [1e-3, 1e-4] {
                    let fd = (k.eval(x + h) - k.eval(x - h)) / (2.0 * h);
                    errs.push((k.eval_derivative(x) - fd).abs());
                }
                // O(h²) with a modest constant, limited by roundoff ~1e-12
                assert!(errs[0] < 1e-6, "{k} at {x}: {errs:?}");
                assert!(errs[1] < 1e-8, "{k} at {x}: {errs:?}");
            }
        }
    }

    #[test]
    fn trapezoid_integral_matches_l1_norm() {
        for k in [Kernel::Gaussian, Kernel::Bessel] {
            let dx = 1e-3;
            let n = 80_000;
            let mut s = 0.5 * (k.eval(-40.0) + k.eval(40.0));
            for i in 1..n {
                s += k.eval(-40.0 + i as f64 * dx);
            }
            assert!((s * dx - k.l1_norm()).abs() < 1e-6, "{k}: {}", s * dx);
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("Gaussian".parse::<Kernel>().unwrap(), Kernel::Gaussian);
        assert_eq!("bessel".parse::<Kernel>().unwrap(), Kernel::Bessel);
        assert!("morse".parse::<Kernel>().is_err());
    }
}
