//! The three dynamical models: Hamiltonians, vector fields, Jacobians, and
//! time-dependent geometry (perturber angle, true anomaly, primary positions).
//!
//! All models share the planar rotating-frame canonical coordinates
//! (x, y, px, py) with
//!   H = (px^2 + py^2)/2 - x*py + y*px - sum_i m_i/r_i + gx*x + gy*y,
//! where (gx, gy) is the linear indirect term (BCP only).

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Earth-Moon mass parameter used throughout (unrounded; prints as 0.01215).
pub const MU_EARTH_MOON: f64 = 0.012150582;
/// Sun mass in Earth-Moon units.
pub const BCP_MU0: f64 = 328900.54;
/// Sun distance in Earth-Moon units.
pub const BCP_A0: f64 = 388.81114;
/// Sun angular rate in the Earth-Moon rotating frame.
pub const BCP_OMEGA_M0: f64 = 0.925195985520347;
/// Earth-Moon orbital eccentricity.
pub const ER3BP_E: f64 = 0.0549006;

pub const DEFAULT_COLLISION_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: f64,
    pub y: f64,
    pub px: f64,
    pub py: f64,
}

impl PhaseState {
    pub fn new(x: f64, y: f64, px: f64, py: f64) -> Self {
        Self { x, y, px, py }
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.px, self.py)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.px.is_finite() && self.py.is_finite()
    }

    /// Max-norm distance to another state.
    pub fn dist_max(&self, other: &PhaseState) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.px - other.px).abs())
            .max((self.py - other.py).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cr3bpParams {
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcpParams {
    pub mu: f64,
    pub mu0: f64,
    pub a0: f64,
    pub omega_m0: f64,
    pub theta_m0_0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Er3bpParams {
    pub mu: f64,
    pub e: f64,
    pub phi0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Model {
    Cr3bp(Cr3bpParams),
    Bcp(BcpParams),
    Er3bp(Er3bpParams),
}

/// Point mass acting on the third body: (mass, x-position, y-position).
type Primary = (f64, f64, f64);

impl Model {
    pub fn cr3bp(mu: f64) -> Self {
        Model::Cr3bp(Cr3bpParams { mu })
    }

    /// Paper's Earth-Moon-Sun parameters.
    pub fn bcp_default() -> Self {
        Model::Bcp(BcpParams {
            mu: MU_EARTH_MOON,
            mu0: BCP_MU0,
            a0: BCP_A0,
            omega_m0: BCP_OMEGA_M0,
            theta_m0_0: 0.0,
        })
    }

    /// Paper's Earth-Moon elliptic parameters.
    pub fn er3bp_default() -> Self {
        Model::Er3bp(Er3bpParams {
            mu: MU_EARTH_MOON,
            e: ER3BP_E,
            phi0: 0.0,
        })
    }

    pub fn mu(&self) -> f64 {
        match self {
            Model::Cr3bp(p) => p.mu,
            Model::Bcp(p) => p.mu,
            Model::Er3bp(p) => p.mu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mu = self.mu();
        if !(mu > 0.0 && mu < 0.5) {
            return Err(Error::Validation(format!("mu must lie in (0, 0.5), got {mu}")));
        }
        match self {
            Model::Cr3bp(_) => {}
            Model::Bcp(p) => {
                if p.mu0 < 0.0 {
                    return Err(Error::Validation("mu0 must be >= 0".into()));
                }
                if p.a0 <= 1.0 {
                    return Err(Error::Validation("a0 must be > 1".into()));
                }
                if p.omega_m0 == 0.0 {
                    return Err(Error::Validation("omega_m0 must be nonzero".into()));
                }
            }
            Model::Er3bp(p) => {
                if !(0.0..1.0).contains(&p.e) {
                    return Err(Error::Validation(format!("e must lie in [0, 1), got {}", p.e)));
                }
            }
        }
        Ok(())
    }

    /// Angular rate of the perturbation phase theta = omega * t.
    pub fn omega(&self) -> Option<f64> {
        match self {
            Model::Cr3bp(_) => None,
            Model::Bcp(p) => Some(p.omega_m0.abs()),
            Model::Er3bp(_) => Some(1.0), // mean anomaly advances at unit rate
        }
    }

    /// Minimal period of the perturbation; None for the autonomous CR3BP.
    pub fn period(&self) -> Option<f64> {
        self.omega().map(|w| std::f64::consts::TAU / w)
    }

    /// Positions of the gravitating bodies at time t.
    fn primaries(&self, t: f64) -> [Option<Primary>; 3] {
        match self {
            Model::Cr3bp(p) => [
                Some((1.0 - p.mu, -p.mu, 0.0)),
                Some((p.mu, 1.0 - p.mu, 0.0)),
                None,
            ],
            Model::Bcp(p) => {
                let th = perturber_angle(p, t);
                [
                    Some((1.0 - p.mu, -p.mu, 0.0)),
                    Some((p.mu, 1.0 - p.mu, 0.0)),
                    Some((p.mu0, p.a0 * th.cos(), p.a0 * th.sin())),
                ]
            }
            Model::Er3bp(p) => {
                let phi = true_anomaly(p, t);
                let rho = 1.0 / (1.0 + p.e * phi.cos());
                // Pulsating separation along the line at angle (phi - t) in the
                // uniformly rotating frame; m1 and m2 on opposite sides.
                let (s, c) = (phi - t).sin_cos();
                [
                    Some((1.0 - p.mu, -p.mu * rho * c, -p.mu * rho * s)),
                    Some((p.mu, (1.0 - p.mu) * rho * c, (1.0 - p.mu) * rho * s)),
                    None,
                ]
            }
        }
    }

    /// Gradient of the linear indirect potential term (BCP only).
    fn indirect(&self, t: f64) -> (f64, f64) {
        match self {
            Model::Bcp(p) => {
                let th = perturber_angle(p, t);
                let k = p.mu0 / (p.a0 * p.a0);
                (k * th.cos(), k * th.sin())
            }
            _ => (0.0, 0.0),
        }
    }

    fn check_distances(&self, s: &PhaseState, t: f64, radius: f64) -> Result<()> {
        for pr in self.primaries(t).iter().flatten() {
            let r = ((s.x - pr.1).powi(2) + (s.y - pr.2).powi(2)).sqrt();
            if r < radius {
                return Err(Error::Collision { distance: r, radius, t });
            }
        }
        Ok(())
    }

    pub fn hamiltonian(&self, s: &PhaseState, t: f64) -> Result<f64> {
        self.hamiltonian_r(s, t, DEFAULT_COLLISION_RADIUS)
    }

    pub fn hamiltonian_r(&self, s: &PhaseState, t: f64, radius: f64) -> Result<f64> {
        self.check_distances(s, t, radius)?;
        let mut h = 0.5 * (s.px * s.px + s.py * s.py) - s.x * s.py + s.y * s.px;
        for pr in self.primaries(t).iter().flatten() {
            let r = ((s.x - pr.1).powi(2) + (s.y - pr.2).powi(2)).sqrt();
            h -= pr.0 / r;
        }
        let (gx, gy) = self.indirect(t);
        h += gx * s.x + gy * s.y;
        Ok(h)
    }

    pub fn vector_field(&self, s: &PhaseState, t: f64) -> Result<Vector4<f64>> {
        self.vector_field_r(s, t, DEFAULT_COLLISION_RADIUS)
    }

    pub fn vector_field_r(&self, s: &PhaseState, t: f64, radius: f64) -> Result<Vector4<f64>> {
        self.check_distances(s, t, radius)?;
        let (mut ux, mut uy) = self.indirect(t);
        for pr in self.primaries(t).iter().flatten() {
            let (dx, dy) = (s.x - pr.1, s.y - pr.2);
            let r3 = (dx * dx + dy * dy).sqrt().powi(3);
            ux += pr.0 * dx / r3;
            uy += pr.0 * dy / r3;
        }
        Ok(Vector4::new(
            s.px + s.y,
            s.py - s.x,
            s.py - ux,
            -s.px - uy,
        ))
    }

    pub fn jacobian(&self, s: &PhaseState, t: f64) -> Result<Matrix4<f64>> {
        self.jacobian_r(s, t, DEFAULT_COLLISION_RADIUS)
    }

    pub fn jacobian_r(&self, s: &PhaseState, t: f64, radius: f64) -> Result<Matrix4<f64>> {
        self.check_distances(s, t, radius)?;
        let (mut uxx, mut uxy, mut uyy) = (0.0, 0.0, 0.0);
        for pr in self.primaries(t).iter().flatten() {
            let (dx, dy) = (s.x - pr.1, s.y - pr.2);
            let r2 = dx * dx + dy * dy;
            let r3 = r2.sqrt().powi(3);
            let r5 = r3 * r2;
            uxx += pr.0 * (1.0 / r3 - 3.0 * dx * dx / r5);
            uyy += pr.0 * (1.0 / r3 - 3.0 * dy * dy / r5);
            uxy += pr.0 * (-3.0 * dx * dy / r5);
        }
        Ok(Matrix4::new(
            0.0, 1.0, 1.0, 0.0, //
            -1.0, 0.0, 0.0, 1.0, //
            -uxx, -uxy, 0.0, 1.0, //
            -uxy, -uyy, -1.0, 0.0,
        ))
    }
}

/// Sun angle theta_m0(t) = -omega_m0 * t + theta_m0_0.
pub fn perturber_angle(p: &BcpParams, t: f64) -> f64 {
    -p.omega_m0 * t + p.theta_m0_0
}

/// True anomaly phi(t) with phi(0) = phi0, via Kepler's equation
/// (mean -> eccentric anomaly by Newton, then the half-angle formula),
/// tracking full revolutions so phi is monotone in t.
pub fn true_anomaly(p: &Er3bpParams, t: f64) -> f64 {
    let e = p.e;
    if e == 0.0 {
        return t + p.phi0;
    }
    let tau = std::f64::consts::TAU;
    // Mean anomaly offset of phi0.
    let e0 = ecc_from_true(p.phi0, e);
    let m0 = e0 - e * e0.sin();
    let m = t + m0;
    let k = (m / tau).floor();
    let mr = m - k * tau; // in [0, tau)
    let mut ea = if mr > std::f64::consts::PI { mr - e } else { mr + e };
    for _ in 0..60 {
        let f = ea - e * ea.sin() - mr;
        let d = 1.0 - e * ea.cos();
        let step = f / d;
        ea -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    // phi in [0, tau) matching ea in [0, tau).
    let phi = 2.0 * ((1.0 + e).sqrt() * (ea / 2.0).sin()).atan2((1.0 - e).sqrt() * (ea / 2.0).cos());
    let phi = if phi < 0.0 { phi + tau } else { phi };
    phi + k * tau
}

fn ecc_from_true(phi: f64, e: f64) -> f64 {
    2.0 * ((1.0 - e).sqrt() * (phi / 2.0).sin()).atan2((1.0 + e).sqrt() * (phi / 2.0).cos())
}

/// Right-hand side of the true-anomaly ODE, Eq. (21); kept as a cross-check
/// oracle against the Kepler solve.
pub fn true_anomaly_rate(e: f64, phi: f64) -> f64 {
    (1.0 + e * phi.cos()).powi(2) / (1.0 - e * e).powf(1.5)
}

/// Solves F(x, t) = 0 at fixed t by Newton from `guess` — the instantaneous
/// zero of the vector field (not a trajectory).
pub fn instantaneous_zero(model: &Model, t: f64, guess: &PhaseState) -> Result<PhaseState> {
    let mut x = guess.to_vector();
    for _ in 0..50 {
        let s = PhaseState::from_vector(&x);
        let f = model.vector_field(&s, t)?;
        if f.amax() < 1e-13 {
            return Ok(s);
        }
        let j = model.jacobian(&s, t)?;
        let dx = j
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::Singular("jacobian in instantaneous-zero Newton".into()))?;
        x -= dx;
    }
    Err(Error::NonConvergence {
        iterations: 50,
        residual: model
            .vector_field(&PhaseState::from_vector(&x), t)?
            .amax(),
    })
}

/// Flat JSON config record; unknown keys rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model: String,
    pub mu: Option<f64>,
    pub mu0: Option<f64>,
    pub a0: Option<f64>,
    pub omega_m0: Option<f64>,
    pub theta_m0_0: Option<f64>,
    pub e: Option<f64>,
    pub phi0: Option<f64>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<Model> {
        let mu = self.mu.unwrap_or(MU_EARTH_MOON);
        let reject = |keys: &[(&str, bool)]| -> Result<()> {
            for (name, set) in keys {
                if *set {
                    return Err(Error::Validation(format!(
                        "key '{name}' does not apply to model '{}'",
                        self.model
                    )));
                }
            }
            Ok(())
        };
        let model = match self.model.as_str() {
            "cr3bp" => {
                reject(&[
                    ("mu0", self.mu0.is_some()),
                    ("a0", self.a0.is_some()),
                    ("omega_m0", self.omega_m0.is_some()),
                    ("theta_m0_0", self.theta_m0_0.is_some()),
                    ("e", self.e.is_some()),
                    ("phi0", self.phi0.is_some()),
                ])?;
                Model::cr3bp(mu)
            }
            "bcp" => {
                reject(&[("e", self.e.is_some()), ("phi0", self.phi0.is_some())])?;
                Model::Bcp(BcpParams {
                    mu,
                    mu0: self.mu0.unwrap_or(BCP_MU0),
                    a0: self.a0.unwrap_or(BCP_A0),
                    omega_m0: self.omega_m0.unwrap_or(BCP_OMEGA_M0),
                    theta_m0_0: self.theta_m0_0.unwrap_or(0.0),
                })
            }
            "er3bp" => {
                reject(&[
                    ("mu0", self.mu0.is_some()),
                    ("a0", self.a0.is_some()),
                    ("omega_m0", self.omega_m0.is_some()),
                    ("theta_m0_0", self.theta_m0_0.is_some()),
                ])?;
                Model::Er3bp(Er3bpParams {
                    mu,
                    e: self.e.unwrap_or(ER3BP_E),
                    phi0: self.phi0.unwrap_or(0.0),
                })
            }
            other => {
                return Err(Error::Validation(format!(
                    "unknown model '{other}' (expected cr3bp|bcp|er3bp)"
                )))
            }
        };
        model.validate()?;
        Ok(model)
    }
}
