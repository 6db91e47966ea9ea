//! CR3BP equilibrium geometry: collinear and triangular points, Hill-region
//! energy thresholds, and the continuous-time saddle-center linearization at
//! L1/L2 with its symplectic eigenbasis.

use nalgebra::{Matrix4, Vector4};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{Model, PhaseState};
use crate::symmap::j_phys;
#[cfg(test)]
use crate::symmap::j_canon;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LagrangePointSet {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: (f64, f64),
    pub l5: (f64, f64),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyThresholds {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
}

#[derive(Debug, Clone)]
pub struct LinearizedSaddleCenter {
    pub lambda: f64,
    pub nu: f64,
    /// Columns: (unstable, stable, center-q, center-p); basis^T J_phys basis = J_canon.
    pub basis: Matrix4<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollinearPoint {
    L1,
    L2,
}

/// d U_eff / dx along the x-axis; its roots are the collinear points.
fn axis_gradient(mu: f64, x: f64) -> f64 {
    let d1 = x + mu;
    let d2 = x - 1.0 + mu;
    x - (1.0 - mu) * d1 / d1.abs().powi(3) - mu * d2 / d2.abs().powi(3)
}

fn bisect(mu: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let (flo, fhi) = (axis_gradient(mu, lo), axis_gradient(mu, hi));
    if flo.signum() == fhi.signum() {
        return Err(Error::Singular(format!("no sign change in bracket [{lo}, {hi}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = axis_gradient(mu, mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn collinear_points(mu: f64) -> Result<LagrangePointSet> {
    Model::cr3bp(mu).validate()?;
    let eps = 1e-9;
    let l1 = bisect(mu, -mu + eps, 1.0 - mu - eps)?;
    let l2 = bisect(mu, 1.0 - mu + eps, 3.0)?;
    let l3 = bisect(mu, -3.0, -mu - eps)?;
    let (xt, yt) = (0.5 - mu, 3.0_f64.sqrt() / 2.0);
    Ok(LagrangePointSet { l1, l2, l3, l4: (xt, yt), l5: (xt, -yt) })
}

/// Momentum-coordinate equilibrium state at a position-space rest point:
/// px = -y, py = x.
pub fn equilibrium_state(x: f64, y: f64) -> PhaseState {
    PhaseState::new(x, y, -y, x)
}

pub fn energy_thresholds(mu: f64) -> Result<EnergyThresholds> {
    let pts = collinear_points(mu)?;
    let m = Model::cr3bp(mu);
    let h = |x: f64, y: f64| m.hamiltonian(&equilibrium_state(x, y), 0.0);
    Ok(EnergyThresholds {
        e1: h(pts.l1, 0.0)?,
        e2: h(pts.l2, 0.0)?,
        e3: h(pts.l3, 0.0)?,
        e4: h(pts.l4.0, pts.l4.1)?,
    })
}

/// Hill's-region case 1..5 for energy E; ties resolve toward the lower case.
pub fn hill_region_case(mu: f64, energy: f64) -> Result<u8> {
    let th = energy_thresholds(mu)?;
    Ok(if energy <= th.e1 {
        1
    } else if energy <= th.e2 {
        2
    } else if energy <= th.e3 {
        3
    } else if energy <= th.e4 {
        4
    } else {
        5
    })
}

/// Right singular vector for the smallest singular value.
fn null_vector(a: &Matrix4<f64>) -> Result<Vector4<f64>> {
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let mut idx = 0;
    for i in 1..4 {
        if sv[i] < sv[idx] {
            idx = i;
        }
    }
    let vt = svd.v_t.ok_or_else(|| Error::Singular("SVD failed".into()))?;
    Ok(vt.row(idx).transpose())
}

/// Two right singular vectors for the two smallest singular values.
fn null_plane(a: &Matrix4<f64>) -> Result<(Vector4<f64>, Vector4<f64>)> {
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap());
    let vt = svd.v_t.ok_or_else(|| Error::Singular("SVD failed".into()))?;
    Ok((vt.row(order[0]).transpose(), vt.row(order[1]).transpose()))
}

pub fn linearize_collinear(mu: f64, which: CollinearPoint) -> Result<LinearizedSaddleCenter> {
    let pts = collinear_points(mu)?;
    let x = match which {
        CollinearPoint::L1 => pts.l1,
        CollinearPoint::L2 => pts.l2,
    };
    let model = Model::cr3bp(mu);
    let df = model.jacobian(&equilibrium_state(x, 0.0), 0.0)?;
    // Eigenvalues {+-lambda, +-i nu} from the even quadratic in z = eig^2:
    // z^2 - (tr DF^2 / 2) z + det DF = 0, roots lambda^2 and -nu^2.
    let s_half = (df * df).trace() / 2.0;
    let det = df.determinant();
    let disc = s_half * s_half - 4.0 * det;
    if disc <= 0.0 {
        return Err(Error::Classification("collinear spectrum is not saddle-center".into()));
    }
    let zp = 0.5 * (s_half + disc.sqrt());
    let zm = 0.5 * (s_half - disc.sqrt());
    if zp <= 0.0 || zm >= 0.0 {
        return Err(Error::Classification("collinear spectrum is not saddle-center".into()));
    }
    let lambda = zp.sqrt();
    let nu = (-zm).sqrt();

    let j = j_phys();
    let mut u = null_vector(&(df - Matrix4::identity() * lambda))?;
    if u.x < 0.0 {
        u = -u;
    }
    let mut s = null_vector(&(df + Matrix4::identity() * lambda))?;
    let mut gamma = u.dot(&(j * s));
    if gamma < 0.0 {
        s = -s;
        gamma = -gamma;
    }
    if gamma < 1e-12 {
        return Err(Error::Degenerate("vanishing symplectic pairing of the saddle pair".into()));
    }
    let u = u / gamma.sqrt();
    let s = s / gamma.sqrt();

    // Center plane: kernel of DF^2 + nu^2 I; with DF a = -nu b the pair
    // (a, b) represents the restriction as [[0, nu], [-nu, 0]].
    let (a0, _) = null_plane(&(df * df + Matrix4::identity() * (nu * nu)))?;
    let a = a0.normalize();
    let b = -(df * a) / nu;
    let p = a.dot(&(j * b));
    if p <= 1e-12 {
        return Err(Error::Degenerate("center pair has non-positive symplectic pairing".into()));
    }
    let (a, b) = (a / p.sqrt(), b / p.sqrt());
    // Deterministic phase: rotate within the center plane to maximize the
    // x-component of the q-column.
    let alpha = b.x.atan2(a.x);
    let (sn, cs) = alpha.sin_cos();
    let aq = a * cs + b * sn;
    let bp = -a * sn + b * cs;

    let basis = Matrix4::from_columns(&[u, s, aq, bp]);
    Ok(LinearizedSaddleCenter { lambda, nu, basis })
}

/// Routh critical mass ratio: triangular points are linearly stable below it.
pub fn routh_critical_mu() -> f64 {
    0.5 * (1.0 - (23.0_f64 / 27.0).sqrt())
}
