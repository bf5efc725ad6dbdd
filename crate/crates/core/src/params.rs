//! Model parameters and unit conversions.
//!
//! Internally everything is expressed in natural units: hbar = k_B = 1 and
//! all energies are angular frequencies measured in units of a caller-chosen
//! reference scale (by convention the tunneling amplitude `delta`, so the
//! dimensionless default is `delta = 1`). The [`units`] module converts
//! laboratory quantities (GHz line frequencies, mK temperatures, drive power
//! in dB) into that system at the boundary.

pub use crate::bath::CorrelationMethod;
use crate::error::{Error, Result};

/// Two-level system: tunneling amplitude and static bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitParams {
    /// Tunneling (level splitting at zero bias), angular frequency units.
    pub delta: f64,
    /// Static bias between the two wells; positive bias favors the well
    /// whose population difference `P` relaxes toward positive values.
    pub eps0: f64,
}

/// Ohmic environment: spectral density `G(omega) = 2 alpha omega e^(-omega/omega_c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathParams {
    /// Dimensionless Ohmic coupling strength.
    pub alpha: f64,
    /// Temperature as an angular frequency (`k_B T / hbar`).
    pub theta: f64,
    /// Exponential cutoff of the spectral density.
    pub omega_c: f64,
    /// Which approximation of the twice-integrated bath correlation to use.
    pub method: CorrelationMethod,
}

/// Harmonic drives applied to the bias:
/// `eps(t) = eps0 + eps_p cos(omega_p t) + eps_d cos(omega_d t)`.
///
/// The `p` tone is the weak probe used for linear response; the `d` tone is
/// the strong pump/drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveParams {
    pub eps_p: f64,
    pub omega_p: f64,
    pub eps_d: f64,
    pub omega_d: f64,
}

impl Default for DriveParams {
    fn default() -> Self {
        DriveParams {
            eps_p: 0.0,
            omega_p: 1.0,
            eps_d: 0.0,
            omega_d: 1.0,
        }
    }
}

/// Full model: qubit + bath + drives + measurement prefactor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub qubit: QubitParams,
    pub bath: BathParams,
    pub drive: DriveParams,
    /// Dimensionless prefactor of the transmission formula
    /// `T = 1 - i n_factor omega_p chi(omega_p)`.
    pub n_factor: f64,
}

impl ModelParams {
    /// Symmetric, undriven model with unit tunneling: the common baseline.
    pub fn bare(alpha: f64, theta: f64, omega_c: f64) -> Self {
        ModelParams {
            qubit: QubitParams { delta: 1.0, eps0: 0.0 },
            bath: BathParams {
                alpha,
                theta,
                omega_c,
                method: CorrelationMethod::ScalingLimit,
            },
            drive: DriveParams::default(),
            n_factor: 1.0,
        }
    }

    pub fn with_eps0(mut self, eps0: f64) -> Self {
        self.qubit.eps0 = eps0;
        self
    }

    pub fn with_method(mut self, method: CorrelationMethod) -> Self {
        self.bath.method = method;
        self
    }

    pub fn with_drive(mut self, eps_d: f64, omega_d: f64) -> Self {
        self.drive.eps_d = eps_d;
        self.drive.omega_d = omega_d;
        self
    }

    /// Memory time of the blip-blip interaction envelope,
    /// `tau_env = 1 / (2 pi alpha theta)`.
    pub fn tau_env(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.bath.alpha * self.bath.theta)
    }

    /// Validate all parameters; returns a user error naming the first
    /// offending field.
    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool, &str); 4] = [
            ("delta", self.qubit.delta, self.qubit.delta > 0.0, "must be > 0"),
            (
                "alpha",
                self.bath.alpha,
                self.bath.alpha > 0.0 && self.bath.alpha < 1.0,
                "must lie in (0, 1); alpha = 0 gives an infinite-memory kernel",
            ),
            ("theta", self.bath.theta, self.bath.theta > 0.0, "must be > 0"),
            ("omega_c", self.bath.omega_c, self.bath.omega_c > 0.0, "must be > 0"),
        ];
        for (name, value, ok, reason) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::InvalidParam {
                    name,
                    value,
                    reason: reason.to_string(),
                });
            }
        }
        if !self.qubit.eps0.is_finite() {
            return Err(Error::InvalidParam {
                name: "eps0",
                value: self.qubit.eps0,
                reason: "must be finite".to_string(),
            });
        }
        if self.drive.eps_p != 0.0 && self.drive.omega_p <= 0.0 {
            return Err(Error::InvalidParam {
                name: "omega_p",
                value: self.drive.omega_p,
                reason: "probe frequency must be > 0 when eps_p != 0".to_string(),
            });
        }
        if self.drive.eps_d != 0.0 && self.drive.omega_d <= 0.0 {
            return Err(Error::InvalidParam {
                name: "omega_d",
                value: self.drive.omega_d,
                reason: "drive frequency must be > 0 when eps_d != 0".to_string(),
            });
        }
        if self.n_factor < 0.0 || !self.n_factor.is_finite() {
            return Err(Error::InvalidParam {
                name: "n_factor",
                value: self.n_factor,
                reason: "must be finite and >= 0".to_string(),
            });
        }
        self.bath.method.validate(&self.bath)?;
        Ok(())
    }

    /// Advisory, not an error: the blip approximation assumes the bath
    /// cutoff sits well above every other energy scale. Returns a warning
    /// message when `omega_c < 5 * max(theta, delta)`. Emitted by
    /// applications at the user-input boundary; internal parameter scans
    /// (e.g. the crossover bisection, which probes extreme temperatures on
    /// purpose) stay silent.
    pub fn cutoff_advisory(&self) -> Option<String> {
        let scale = self.bath.theta.max(self.qubit.delta);
        if self.bath.omega_c < 5.0 * scale {
            Some(format!(
                "omega_c = {} is below 5 * max(theta, delta) = {}; the blip \
                 approximation for an Ohmic bath is uncontrolled this close \
                 to the cutoff",
                self.bath.omega_c,
                5.0 * scale
            ))
        } else {
            None
        }
    }
}

/// Laboratory-unit conversions.
///
/// The model measures energies as angular frequencies. Spectroscopy hardware
/// reports ordinary frequencies `f` (GHz) and temperatures `T` (mK); since
/// every internal quantity is a *ratio* of energies to the reference scale,
/// ordinary-frequency ratios are used directly (the 2 pi cancels).
pub mod units {
    /// k_B / h in GHz per kelvin: converts temperature to ordinary frequency.
    pub const KB_OVER_H_GHZ_PER_K: f64 = 20.836619;

    /// Ordinary line frequency (GHz) -> internal units of the reference
    /// scale, itself given as an ordinary frequency in GHz.
    pub fn freq_ghz(f_ghz: f64, ref_ghz: f64) -> f64 {
        f_ghz / ref_ghz
    }

    /// Temperature (mK) -> internal units of the reference scale (GHz).
    pub fn temp_mk(t_mk: f64, ref_ghz: f64) -> f64 {
        KB_OVER_H_GHZ_PER_K * t_mk * 1e-3 / ref_ghz
    }

    /// Drive amplitude -> power in dB relative to the reference scale,
    /// `20 log10(eps_d / reference)`. Zero amplitude maps to -infinity.
    pub fn power_db(eps_d: f64, reference: f64) -> f64 {
        if eps_d == 0.0 {
            f64::NEG_INFINITY
        } else {
            20.0 * (eps_d.abs() / reference).log10()
        }
    }

    /// Inverse of [`power_db`].
    pub fn amp_from_db(db: f64, reference: f64) -> f64 {
        reference * 10f64.powf(db / 20.0)
    }
}
