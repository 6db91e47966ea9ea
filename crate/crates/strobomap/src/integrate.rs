//! Adaptive Dormand-Prince 5(4) propagation of states, trajectories, and
//! state transition matrices; stroboscopic map evaluation and monodromy
//! computation.

use nalgebra::{Matrix4, SVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{Model, PhaseState};
use crate::porbit::PeriodicOrbit;

#[derive(Debug, Clone, Copy)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_time: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-12,
            max_step: 0.5,
            max_time: 1e4,
        }
    }
}

impl IntegratorSettings {
    pub fn with_tols(rel_tol: f64, abs_tol: f64) -> Self {
        Self { rel_tol, abs_tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rel_tol <= 0.0 || self.abs_tol <= 0.0 || self.max_step <= 0.0 || self.max_time <= 0.0 {
            return Err(Error::Validation("integrator tolerances and limits must be positive".into()));
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau (FSAL).
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights equal the last row of A (FSAL); 4th-order embedded weights:
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates dy/dt = f(t, y) from t0 to t1 (either direction). The observer
/// is invoked at every accepted step (including t0 and the clamped final
/// step); returning `true` stops integration early. Returns the final
/// (t, y, stopped_early).
pub fn dp54<const N: usize, F>(
    f: F,
    t0: f64,
    t1: f64,
    y0: SVector<f64, N>,
    cfg: &IntegratorSettings,
    mut observer: impl FnMut(f64, &SVector<f64, N>) -> bool,
) -> Result<(f64, SVector<f64, N>, bool)>
where
    F: Fn(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    cfg.validate()?;
    let span = t1 - t0;
    if span.abs() > cfg.max_time {
        return Err(Error::MaxTimeExceeded(cfg.max_time));
    }
    let mut t = t0;
    let mut y = y0;
    if observer(t, &y) {
        return Ok((t, y, true));
    }
    if span == 0.0 {
        return Ok((t, y, false));
    }
    let dir = span.signum();
    let mut k1 = f(t, &y)?;
    // Crude initial step from the field magnitude; the controller corrects it.
    let scale = y.amax().max(1.0);
    let mut h = (0.01 * scale / k1.amax().max(1e-8))
        .min(cfg.max_step)
        .min(span.abs())
        .max(1e-10)
        * dir;
    let mut err_prev: f64 = 1.0;
    let mut k = [SVector::<f64, N>::zeros(); 7];
    loop {
        if (t1 - t) * dir <= 0.0 {
            return Ok((t, y, false));
        }
        if h.abs() > (t1 - t).abs() {
            h = t1 - t;
        }
        k[0] = k1;
        for i in 0..6 {
            let mut yi = y;
            for (j, aij) in A[i].iter().enumerate().take(i + 1) {
                yi += k[j] * (*aij * h);
            }
            k[i + 1] = f(t + C[i + 1] * h, &yi)?;
        }
        // 5th-order weights are A's last row with zero weight on k7 (FSAL).
        let mut y5 = y;
        for j in 0..6 {
            y5 += k[j] * (A[5][j] * h);
        }
        let mut y4 = y;
        for j in 0..7 {
            y4 += k[j] * (B4[j] * h);
        }
        let diff = y5 - y4;
        let mut err2 = 0.0;
        for i in 0..N {
            let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y5[i].abs());
            let e = diff[i] / sc;
            err2 += e * e;
        }
        let err = (err2 / N as f64).sqrt().max(1e-30);
        if err <= 1.0 {
            // k7 = f(t+h, y5) is stage 7, already computed.
            k1 = k[6];
            t += h;
            y = y5;
            let stop = observer(t, &y);
            // PI controller.
            let fac = (0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0)).clamp(0.2, 5.0);
            err_prev = err;
            h = (h * fac).clamp(-cfg.max_step, cfg.max_step);
            if h == 0.0 {
                h = 1e-16 * dir;
            }
            if stop {
                return Ok((t, y, true));
            }
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
        }
        if h.abs() < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub samples: Vec<(f64, PhaseState)>,
}

impl Trajectory {
    pub fn initial(&self) -> &PhaseState {
        &self.samples.first().expect("non-empty trajectory").1
    }

    pub fn last(&self) -> &PhaseState {
        &self.samples.last().expect("non-empty trajectory").1
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,y,px,py")?;
        for (t, s) in &self.samples {
            writeln!(w, "{t:.15e},{:.15e},{:.15e},{:.15e},{:.15e}", s.x, s.y, s.px, s.py)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StmResult {
    pub final_state: PhaseState,
    pub stm: Matrix4<f64>,
}

impl StmResult {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "final_state": [self.final_state.x, self.final_state.y, self.final_state.px, self.final_state.py],
            "stm_row_major": self.stm.transpose().as_slice(),
        })
    }
}

fn state_rhs(model: &Model) -> impl Fn(f64, &SVector<f64, 4>) -> Result<SVector<f64, 4>> + '_ {
    move |t, y| model.vector_field(&PhaseState::from_vector(y), t)
}

/// Propagates the state from t0 to t1 without recording samples.
pub fn flow_to(model: &Model, s0: &PhaseState, t0: f64, t1: f64, cfg: &IntegratorSettings) -> Result<PhaseState> {
    let (_, y, _) = dp54(state_rhs(model), t0, t1, s0.to_vector(), cfg, |_, _| false)?;
    Ok(PhaseState::from_vector(&y))
}

/// Propagates and records every accepted step; the final sample lands
/// exactly at t1.
pub fn flow(model: &Model, s0: &PhaseState, t0: f64, t1: f64, cfg: &IntegratorSettings) -> Result<Trajectory> {
    let mut samples = Vec::new();
    dp54(state_rhs(model), t0, t1, s0.to_vector(), cfg, |t, y| {
        samples.push((t, PhaseState::from_vector(y)));
        false
    })?;
    Ok(Trajectory { samples })
}

/// Propagates until `stop(t, state)` is first true at an accepted step, or
/// until t1. Returns (t, state, stopped).
pub fn flow_until(
    model: &Model,
    s0: &PhaseState,
    t0: f64,
    t1: f64,
    cfg: &IntegratorSettings,
    stop: impl Fn(f64, &PhaseState) -> bool,
) -> Result<(f64, PhaseState, bool)> {
    let (t, y, stopped) = dp54(state_rhs(model), t0, t1, s0.to_vector(), cfg, |t, y| {
        stop(t, &PhaseState::from_vector(y))
    })?;
    Ok((t, PhaseState::from_vector(&y), stopped))
}

/// Joint 20-dimensional integration of the state and the variational
/// equations dPhi/dt = DF(x(t), t) Phi, Phi(t0, t0) = I.
pub fn flow_with_stm(
    model: &Model,
    s0: &PhaseState,
    t0: f64,
    t1: f64,
    cfg: &IntegratorSettings,
) -> Result<StmResult> {
    let rhs = |t: f64, y: &SVector<f64, 20>| -> Result<SVector<f64, 20>> {
        let s = PhaseState::new(y[0], y[1], y[2], y[3]);
        let f = model.vector_field(&s, t)?;
        let df = model.jacobian(&s, t)?;
        let mut out = SVector::<f64, 20>::zeros();
        out.fixed_rows_mut::<4>(0).copy_from(&f);
        for col in 0..4 {
            let phi_col = SVector::<f64, 4>::from_fn(|r, _| y[4 + 4 * col + r]);
            let d = df * phi_col;
            for r in 0..4 {
                out[4 + 4 * col + r] = d[r];
            }
        }
        Ok(out)
    };
    let mut y0 = SVector::<f64, 20>::zeros();
    y0.fixed_rows_mut::<4>(0).copy_from(&s0.to_vector());
    for i in 0..4 {
        y0[4 + 5 * i] = 1.0;
    }
    let (_, y, _) = dp54(rhs, t0, t1, y0, cfg, |_, _| false)?;
    let final_state = PhaseState::new(y[0], y[1], y[2], y[3]);
    let stm = Matrix4::from_fn(|r, c| y[4 + 4 * c + r]);
    Ok(StmResult { final_state, stm })
}

/// n-fold stroboscopic map P_{theta0}^n: the flow over n perturbation
/// periods starting at t0 = theta0/omega. Negative n integrates backward.
pub fn stroboscopic_map(
    model: &Model,
    s0: &PhaseState,
    theta0: f64,
    n: i64,
    cfg: &IntegratorSettings,
) -> Result<PhaseState> {
    let omega = model
        .omega()
        .ok_or_else(|| Error::Validation("stroboscopic map requires a periodic model".into()))?;
    if n == 0 {
        return Ok(*s0);
    }
    let t0 = theta0 / omega;
    let t_per = std::f64::consts::TAU / omega;
    flow_to(model, s0, t0, t0 + n as f64 * t_per, cfg)
}

/// Monodromy matrix M = Phi(t0 + T, t0) at the orbit's phase. When the orbit
/// carries multiple-shooting nodes, M is the ordered product of the segment
/// STMs, which avoids tracking the diverged trajectory across the full
/// period in one pass.
pub fn monodromy(orbit: &PeriodicOrbit, cfg: &IntegratorSettings) -> Result<Matrix4<f64>> {
    let t_per = orbit.period;
    let t0 = orbit.t0();
    let m = orbit.nodes.len();
    if m >= 2 {
        let dt = t_per / m as f64;
        let mut acc = Matrix4::identity();
        for (i, node) in orbit.nodes.iter().enumerate() {
            let ti = t0 + i as f64 * dt;
            let seg = flow_with_stm(&orbit.model, node, ti, ti + dt, cfg)?;
            acc = seg.stm * acc;
        }
        Ok(acc)
    } else {
        Ok(flow_with_stm(&orbit.model, &orbit.x_bar, t0, t0 + t_per, cfg)?.stm)
    }
}
