//! PI-form complementary filter fusing a noisy absolute angle with a
//! drifting angular rate, plus its analytic transfer-function decomposition.
//!
//! Continuous dynamics per joint:
//! `theta_hat' = b_hat + k_p (theta_meas - theta_hat) + theta_dot_meas`,
//! `b_hat' = k_i (theta_meas - theta_hat)`,
//! discretized by forward Euler at the sample period. The angle channel is
//! shaped by the second-order low-pass `G(s) = (k_p s + k_i)/(s^2 + k_p s + k_i)`
//! and the integrated-rate channel by its complement `1 - G(s)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{wrap_angle, Real};

/// Proportional/integral gains of the filter. Both must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterGains<T = f64> {
    pub k_p: T,
    pub k_i: T,
}

impl<T: Real> FilterGains<T> {
    pub fn new(k_p: T, k_i: T) -> Result<Self> {
        if !(k_p > T::zero()) || !(k_i > T::zero()) || !k_p.is_finite() || !k_i.is_finite() {
            return Err(Error::InvalidArgument(
                "filter gains must be positive and finite".into(),
            ));
        }
        Ok(Self { k_p, k_i })
    }

    /// The crate's shipped tuned gains.
    pub fn shipped() -> Self {
        Self {
            k_p: T::of(7.0407),
            k_i: T::of(0.1984),
        }
    }

    /// Low-pass `G` and high-pass `1 - G` as rational functions of `s`.
    pub fn transfer_functions(&self) -> TransferFunctions<T> {
        let den = vec![T::one(), self.k_p, self.k_i];
        TransferFunctions {
            low_pass: RationalTf {
                numerator: vec![T::zero(), self.k_p, self.k_i],
                denominator: den.clone(),
            },
            high_pass: RationalTf {
                numerator: vec![T::one(), T::zero(), T::zero()],
                denominator: den,
            },
        }
    }

    /// -3 dB crossover of the low-pass branch, in rad/s (closed form of
    /// `|G(jw)|^2 = 1/2`).
    pub fn cutoff_rad_s(&self) -> T {
        let a = T::of(2.0) * self.k_i + self.k_p * self.k_p;
        let w2 = (a + (a * a + T::of(4.0) * self.k_i * self.k_i).sqrt()) / T::of(2.0);
        w2.sqrt()
    }
}

impl<T: Real> Default for FilterGains<T> {
    fn default() -> Self {
        Self::shipped()
    }
}

/// Rational transfer function with coefficients in descending powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTf<T = f64> {
    pub numerator: Vec<T>,
    pub denominator: Vec<T>,
}

fn eval_poly_at_jw<T: Real>(coeffs: &[T], omega: T) -> (T, T) {
    let mut re = T::zero();
    let mut im = T::zero();
    for &c in coeffs {
        let next_re = -im * omega + c;
        let next_im = re * omega;
        re = next_re;
        im = next_im;
    }
    (re, im)
}

impl<T: Real> RationalTf<T> {
    /// `|H(j omega)|`.
    pub fn magnitude(&self, omega: T) -> T {
        let (nr, ni) = eval_poly_at_jw(&self.numerator, omega);
        let (dr, di) = eval_poly_at_jw(&self.denominator, omega);
        nr.hypot(ni) / dr.hypot(di)
    }
}

/// The complementary pair `(G, 1 - G)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunctions<T = f64> {
    pub low_pass: RationalTf<T>,
    pub high_pass: RationalTf<T>,
}

/// Filter state for one joint: the fused angle and the rate-correction
/// estimate (converges to the negated constant rate bias).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState<T = f64> {
    pub theta_hat: T,
    pub b_hat: T,
}

impl<T: Real> FilterState<T> {
    /// Reset: the fused angle starts at the first measurement, the bias
    /// estimate at zero.
    pub fn init(theta_meas: T) -> Self {
        Self {
            theta_hat: theta_meas,
            b_hat: T::zero(),
        }
    }

    fn advance(self, gains: &FilterGains<T>, theta_meas: T, theta_dot_meas: T, dt: T, wrap: bool)
        -> Result<Self>
    {
        if !theta_meas.is_finite() {
            return Err(Error::NonFinite {
                what: "theta_meas".into(),
            });
        }
        if !theta_dot_meas.is_finite() {
            return Err(Error::NonFinite {
                what: "theta_dot_meas".into(),
            });
        }
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        let raw = theta_meas - self.theta_hat;
        let innovation = if wrap { wrap_angle(raw) } else { raw };
        Ok(Self {
            theta_hat: self.theta_hat
                + dt * (self.b_hat + gains.k_p * innovation + theta_dot_meas),
            b_hat: self.b_hat + dt * gains.k_i * innovation,
        })
    }

    /// One forward-Euler step with the innovation wrapped to `(-pi, pi]`.
    ///
    /// Advances the state across one interval using the measurements taken
    /// at the interval's start; feeding it the endpoint measurements instead
    /// injects a one-sample lead into the loop.
    pub fn step(self, gains: &FilterGains<T>, theta_meas: T, theta_dot_meas: T, dt: T)
        -> Result<Self>
    {
        self.advance(gains, theta_meas, theta_dot_meas, dt, true)
    }

    /// One step without innovation wrapping; the filter is exactly linear in
    /// its inputs in this form. Intended for analysis (frequency sweeps,
    /// linearity checks) on small angles.
    pub fn step_unwrapped(self, gains: &FilterGains<T>, theta_meas: T, theta_dot_meas: T, dt: T)
        -> Result<Self>
    {
        self.advance(gains, theta_meas, theta_dot_meas, dt, false)
    }
}

/// Filters an aligned pair of angle/rate traces; the first sample
/// initializes the state.
pub fn filter_trace<T: Real>(
    gains: &FilterGains<T>,
    theta_meas: &[T],
    theta_dot_meas: &[T],
    dt: T,
) -> Result<Vec<T>> {
    if theta_dot_meas.len() != theta_meas.len() {
        return Err(Error::LengthMismatch {
            what: "rate trace",
            expected: theta_meas.len(),
            got: theta_dot_meas.len(),
        });
    }
    let Some(&first) = theta_meas.first() else {
        return Ok(Vec::new());
    };
    let mut state = FilterState::init(first);
    let mut out = Vec::with_capacity(theta_meas.len());
    out.push(state.theta_hat);
    for k in 1..theta_meas.len() {
        state = state.step(gains, theta_meas[k - 1], theta_dot_meas[k - 1], dt)?;
        out.push(state.theta_hat);
    }
    Ok(out)
}

/// Which filter input a frequency probe excites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeChannel {
    /// Sinusoid on the angle input; the measured gain estimates `|G|`.
    Angle,
    /// Sinusoid on the rate input; the measured gain (scaled by omega)
    /// estimates `|1 - G|`.
    Rate,
}

/// Measures the discrete filter's magnitude response at (approximately)
/// `freq_hz` by driving one channel with a sinusoid and extracting the
/// output amplitude with a single-bin DFT over an integer number of cycles.
///
/// The probe frequency is snapped so the measurement window holds an exact
/// cycle count; returns `(actual_freq_hz, magnitude)` where magnitude is
/// directly comparable to `|G(jw)|` (`Angle`) or `|1 - G(jw)|` (`Rate`).
pub fn empirical_magnitude<T: Real>(
    gains: &FilterGains<T>,
    sample_period: T,
    freq_hz: T,
    settle_seconds: T,
    channel: ProbeChannel,
) -> Result<(T, T)> {
    if !(freq_hz > T::zero()) || !(sample_period > T::zero()) {
        return Err(Error::InvalidArgument(
            "probe frequency and sample period must be positive".into(),
        ));
    }
    let cycles = (freq_hz * T::of(2.0)).ceil().as_f64().max(2.0) as usize;
    let n_meas = ((T::from_usize(cycles).expect("cycles") / (freq_hz * sample_period))
        .round()
        .as_f64()) as usize;
    let f_actual = T::from_usize(cycles).expect("cycles")
        / (T::from_usize(n_meas).expect("window") * sample_period);
    let omega = T::of(core::f64::consts::TAU) * f_actual;
    let n_settle = (settle_seconds / sample_period).round().as_f64() as usize;

    let amplitude = T::of(0.05);
    let mut state = FilterState::init(T::zero());
    let mut acc_re = T::zero();
    let mut acc_im = T::zero();
    for k in 0..n_settle + n_meas {
        let t = T::from_usize(k).expect("step") * sample_period;
        let drive = amplitude * (omega * t).sin();
        let (theta_in, rate_in) = match channel {
            ProbeChannel::Angle => (drive, T::zero()),
            ProbeChannel::Rate => (T::zero(), drive),
        };
        state = state.step_unwrapped(gains, theta_in, rate_in, sample_period)?;
        if k >= n_settle {
            let phase = omega * t;
            acc_re += state.theta_hat * phase.cos();
            acc_im -= state.theta_hat * phase.sin();
        }
    }
    let n = T::from_usize(n_meas).expect("window");
    let out_amp = T::of(2.0) * acc_re.hypot(acc_im) / n;
    let magnitude = match channel {
        ProbeChannel::Angle => out_amp / amplitude,
        ProbeChannel::Rate => out_amp * omega / amplitude,
    };
    Ok((f_actual, magnitude))
}
