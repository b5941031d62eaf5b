//! Laser pulse envelopes.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Window half-width of a Gaussian pulse, in units of its FWHM.
pub const DEFAULT_GAUSSIAN_HALF_WINDOW: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Square,
    Gaussian,
}

impl std::str::FromStr for PulseShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Self::Square),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::Config(format!("unknown pulse shape '{other}'"))),
        }
    }
}

/// A resonant laser pulse: `Ω f(t)` with real envelope `0 ≤ f ≤ 1`.
///
/// Square pulses are on for `t ∈ [0, τ)`. Gaussian pulses have FWHM `τ`,
/// peak at `center` and are integrated over `center ± half_window·τ`.
/// `frame_detuning` multiplies the envelope by `exp(iΔt)`, which is how a
/// constant detuning looks after moving to the rotating frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PulseSpec<T: Real> {
    pub shape: PulseShape,
    pub rabi: T,
    pub duration: T,
    pub center: T,
    pub half_window: T,
    pub frame_detuning: T,
}

impl<T: Real> PulseSpec<T> {
    pub fn square(rabi: T, duration: T) -> Self {
        Self {
            shape: PulseShape::Square,
            rabi,
            duration,
            center: duration / lit(2.0),
            half_window: T::zero(),
            frame_detuning: T::zero(),
        }
    }

    /// Gaussian of FWHM `duration` centred so that its window starts at zero.
    pub fn gaussian(rabi: T, duration: T) -> Self {
        let half_window = lit(DEFAULT_GAUSSIAN_HALF_WINDOW);
        Self {
            shape: PulseShape::Gaussian,
            rabi,
            duration,
            center: half_window * duration,
            half_window,
            frame_detuning: T::zero(),
        }
    }

    pub fn new(shape: PulseShape, rabi: T, duration: T) -> Self {
        match shape {
            PulseShape::Square => Self::square(rabi, duration),
            PulseShape::Gaussian => Self::gaussian(rabi, duration),
        }
    }

    pub fn with_frame_detuning(mut self, detuning: T) -> Self {
        self.frame_detuning = detuning;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > T::zero()) || !self.rabi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "pulse needs positive duration and finite Rabi frequency, got tau = {}, rabi = {}",
                self.duration, self.rabi
            )));
        }
        Ok(())
    }

    /// Start and end of the integration window.
    pub fn window(&self) -> (T, T) {
        match self.shape {
            PulseShape::Square => (T::zero(), self.duration),
            PulseShape::Gaussian => {
                let w = self.half_window * self.duration;
                (self.center - w, self.center + w)
            }
        }
    }

    /// Real envelope `f(t)`.
    pub fn envelope(&self, t: T) -> T {
        match self.shape {
            PulseShape::Square => {
                if t >= T::zero() && t < self.duration {
                    T::one()
                } else {
                    T::zero()
                }
            }
            PulseShape::Gaussian => {
                let x = (t - self.center) / self.duration;
                (-lit::<T>(4.0) * T::LN_2() * x * x).exp()
            }
        }
    }

    /// Envelope including the rotating-frame phase.
    pub fn field(&self, t: T) -> Complex<T> {
        let f = self.envelope(t);
        if self.frame_detuning == T::zero() {
            Complex::new(f, T::zero())
        } else {
            Complex::from_polar(f, self.frame_detuning * t)
        }
    }

    /// Times where the envelope is not smooth.
    pub fn breakpoints(&self) -> Vec<T> {
        match self.shape {
            PulseShape::Square => vec![T::zero(), self.duration],
            PulseShape::Gaussian => Vec::new(),
        }
    }

    /// Value of the field if it is constant on `[a, b)`.
    pub fn constant_on(&self, a: T, b: T) -> Option<Complex<T>> {
        let zero = Complex::new(T::zero(), T::zero());
        match self.shape {
            PulseShape::Square => {
                if b <= T::zero() || a >= self.duration {
                    Some(zero)
                } else if a >= T::zero() && b <= self.duration && self.frame_detuning == T::zero() {
                    Some(Complex::new(T::one(), T::zero()))
                } else {
                    None
                }
            }
            PulseShape::Gaussian => None,
        }
    }

    /// Largest `|f|` on `[a, b]`.
    pub fn max_envelope_on(&self, a: T, b: T) -> T {
        match self.shape {
            PulseShape::Square => {
                if b <= T::zero() || a >= self.duration {
                    T::zero()
                } else {
                    T::one()
                }
            }
            PulseShape::Gaussian => {
                let t = self.center.max(a).min(b);
                self.envelope(t)
            }
        }
    }

    /// Nominal area `Ωτ`, the scan coordinate.
    pub fn nominal_area(&self) -> T {
        self.rabi * self.duration
    }
}

/// Accumulated area `Ω ∫ f dt` from the start of the envelope (zero for a
/// square pulse, the far tail for a Gaussian) up to `t`.
pub fn pulse_area<T: Real>(pulse: &PulseSpec<T>, t: T) -> T {
    match pulse.shape {
        PulseShape::Square => pulse.rabi * t.max(T::zero()).min(pulse.duration),
        PulseShape::Gaussian => {
            // ∫ exp(−a x²) = √(π/a)/2 · (1 + erf(√a x)), a = 4 ln2 / τ².
            let a = lit::<T>(4.0) * T::LN_2() / (pulse.duration * pulse.duration);
            let sa = a.sqrt();
            let x = (t - pulse.center) * sa;
            let erf = lit::<T>(libm::erf(x.to_f64().unwrap_or(0.0)));
            pulse.rabi * (T::PI() / a).sqrt() / lit(2.0) * (T::one() + erf)
        }
    }
}

/// Area `Ωτ·√(π / 4 ln 2)` of a complete Gaussian pulse.
pub fn gaussian_full_area<T: Real>(rabi: T, duration: T) -> T {
    rabi * duration * (T::PI() / (lit::<T>(4.0) * T::LN_2())).sqrt()
}
