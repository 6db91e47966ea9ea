//! Lagrange periodic orbits as fixed points of the stroboscopic map.
//!
//! The corrector is a multiple-shooting Newton iteration. Single shooting is
//! hopeless here: the multiplier sigma ~ 4e8 per period amplifies even the
//! print rounding of a 15-digit reference state to O(0.1) over one period,
//! and amplifies per-step roundoff to ~1e-5, so |P(x) - x| can never be
//! driven below that floor in f64. Splitting the period into m segments
//! caps the growth at sigma^(1/m) per segment; the converged shooting defect
//! (which equals the map residual in exact arithmetic) reaches < 1e-12.

use nalgebra::{DMatrix, DVector, Matrix4};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::{flow_to, flow_with_stm, IntegratorSettings, Trajectory};
use crate::models::{Model, PhaseState};

/// Reference L1 fixed point of the default BCP at theta0 = 0 (15 digits).
pub const BCP_L1_FIXED_POINT: [f64; 4] = [0.837595408485656, 0.0, 0.0, 0.827678389393936];
/// Reference L1 fixed point of the default ER3BP at theta0 = 0. The small
/// px component is a numerical artifact of the source and is matched only
/// loosely.
pub const ER3BP_L1_FIXED_POINT: [f64; 4] =
    [0.792718947200736, 0.0, 0.000001145970495, 0.886145419995798];

pub const DEFAULT_SEGMENTS: usize = 8;
pub const DEFAULT_CORRECTOR_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicOrbit {
    pub model: Model,
    /// Phase of the fixed-point section; t0 = theta0 / omega.
    pub theta0: f64,
    pub x_bar: PhaseState,
    pub period: f64,
    /// Converged multiple-shooting defect (max segment mismatch).
    pub residual: f64,
    /// Shooting nodes at times t0 + i T/m, i = 0..m; nodes[0] = x_bar.
    pub nodes: Vec<PhaseState>,
    /// Defect after each Newton iteration (diagnostic).
    pub residual_history: Vec<f64>,
}

impl PeriodicOrbit {
    pub fn t0(&self) -> f64 {
        self.theta0 / (std::f64::consts::TAU / self.period)
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "x_bar": [self.x_bar.x, self.x_bar.y, self.x_bar.px, self.x_bar.py],
            "theta0": self.theta0,
            "period": self.period,
            "residual": self.residual,
        })
    }
}

pub fn refine_fixed_point(
    model: &Model,
    guess: &PhaseState,
    theta0: f64,
    tol: f64,
    max_iter: usize,
    cfg: &IntegratorSettings,
) -> Result<PeriodicOrbit> {
    refine_fixed_point_segments(model, guess, theta0, tol, max_iter, DEFAULT_SEGMENTS, cfg)
}

pub fn refine_fixed_point_segments(
    model: &Model,
    guess: &PhaseState,
    theta0: f64,
    tol: f64,
    max_iter: usize,
    segments: usize,
    cfg: &IntegratorSettings,
) -> Result<PeriodicOrbit> {
    if tol <= 0.0 || segments == 0 || max_iter == 0 {
        return Err(Error::Validation("tol, segments, and max_iter must be positive".into()));
    }
    let period = model
        .period()
        .ok_or_else(|| Error::Validation("fixed-point refinement requires a periodic model".into()))?;
    let omega = std::f64::consts::TAU / period;
    let t0 = theta0 / omega;
    let m = segments;
    let dt = period / m as f64;
    let t_of = |i: usize| t0 + i as f64 * dt;

    // Seed nodes forward from the guess over the first half of the period and
    // backward (from the guess shifted by one period) over the second half,
    // so no seeding integration exceeds half a period on the expanding side.
    // If the guess is inexact that amplification (~e^{lambda T/2}) can still
    // blow the seed up; in that case fall back to constant nodes, whose
    // defect is bounded by the single-segment growth.
    let mut nodes: Vec<PhaseState> = vec![*guess; m];
    for i in 1..=m / 2 {
        nodes[i] = flow_to(model, &nodes[i - 1], t_of(i - 1), t_of(i), cfg)?;
    }
    for i in (m / 2 + 1..m).rev() {
        let (src, t_src) = if i == m - 1 { (*guess, t0 + period) } else { (nodes[i + 1], t_of(i + 1)) };
        nodes[i] = flow_to(model, &src, t_src, t_of(i), cfg)?;
    }
    // The orbits of interest stay within ~0.2 of their fixed point; a seeded
    // node further out than that signals amplification, not orbit shape.
    if nodes.iter().any(|nd| nd.dist_max(guess) > 0.3) {
        nodes = vec![*guess; m];
    }
    refine_from_nodes(model, nodes, theta0, tol, max_iter, cfg)
}

/// Newton on a multiple-shooting node polygon supplied directly (e.g. the
/// converged nodes of a neighboring orbit during continuation, which seed
/// without any expanding-direction amplification).
pub fn refine_from_nodes(
    model: &Model,
    mut nodes: Vec<PhaseState>,
    theta0: f64,
    tol: f64,
    max_iter: usize,
    cfg: &IntegratorSettings,
) -> Result<PeriodicOrbit> {
    let m = nodes.len();
    if tol <= 0.0 || m == 0 || max_iter == 0 {
        return Err(Error::Validation("tol, nodes, and max_iter must be non-empty/positive".into()));
    }
    let period = model
        .period()
        .ok_or_else(|| Error::Validation("fixed-point refinement requires a periodic model".into()))?;
    let omega = std::f64::consts::TAU / period;
    let t0 = theta0 / omega;
    let dt = period / m as f64;
    let t_of = |i: usize| t0 + i as f64 * dt;

    let n = 4 * m;
    // Segment flows + STMs for a node set, with the shooting defect and the
    // negated defect stacked as the Newton right-hand side.
    let evaluate = |nodes: &[PhaseState]| -> Result<(Vec<crate::integrate::StmResult>, f64, DVector<f64>)> {
        let mut ends = Vec::with_capacity(m);
        for (i, node) in nodes.iter().enumerate() {
            ends.push(flow_with_stm(model, node, t_of(i), t_of(i) + dt, cfg)?);
        }
        let mut residual: f64 = 0.0;
        let mut rhs = DVector::<f64>::zeros(n);
        for i in 0..m {
            let next = nodes[(i + 1) % m].to_vector();
            let f = ends[i].final_state.to_vector() - next;
            residual = residual.max(f.amax());
            rhs.rows_mut(4 * i, 4).copy_from(&(-f));
        }
        Ok((ends, residual, rhs))
    };
    let apply = |nodes: &[PhaseState], delta: &DVector<f64>, alpha: f64| -> Vec<PhaseState> {
        nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let mut v = node.to_vector();
                for r in 0..4 {
                    v[r] += alpha * delta[4 * i + r];
                }
                PhaseState::from_vector(&v)
            })
            .collect()
    };

    let (mut ends, mut residual, mut rhs) = evaluate(&nodes)?;
    let mut history = Vec::new();
    for _iter in 0..max_iter {
        history.push(residual);
        if residual < tol {
            return Ok(PeriodicOrbit {
                model: *model,
                theta0,
                x_bar: nodes[0],
                period,
                residual,
                nodes,
                residual_history: history,
            });
        }
        // Divergence guards. The node-magnitude bound matters: far from the
        // primaries the stroboscopic map is close to the identity, so an
        // overshooting iteration can settle onto a spurious small-residual
        // "fixed point" at huge radius.
        if !residual.is_finite() || residual > 1e3 {
            return Err(Error::NonConvergence { iterations: history.len(), residual });
        }
        if nodes.iter().any(|nd| nd.to_vector().amax() > 10.0) {
            return Err(Error::NonConvergence { iterations: history.len(), residual });
        }
        // Cyclic block system: Phi_i d_i - d_{i+1 mod m} = -F_i. Solved
        // dense rather than condensed to (M - I), whose condition number
        // sigma^2 ~ 1e17 would destroy the correction.
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for i in 0..m {
            let j = (i + 1) % m;
            jac.view_mut((4 * i, 4 * i), (4, 4)).copy_from(&ends[i].stm);
            for r in 0..4 {
                jac[(4 * i + r, 4 * j + r)] -= 1.0;
            }
        }
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("(M - I) block system; guess may sit at a resonance".into()))?;
        // Backtracking on the defect: a full step taken far from the orbit
        // can overshoot into the near-identity far field, where the defect
        // looks deceptively small.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let trial = apply(&nodes, &delta, alpha);
            match evaluate(&trial) {
                Ok((te, tr, trhs)) if tr < residual * (1.0 - 0.25 * alpha) || tr < tol => {
                    nodes = trial;
                    ends = te;
                    residual = tr;
                    rhs = trhs;
                    accepted = true;
                    break;
                }
                // Insufficient decrease, or the trial stepped into a
                // collision/underflow: shorten the step.
                Ok(_) | Err(Error::Collision { .. }) | Err(Error::StepUnderflow { .. }) => alpha *= 0.5,
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            return Err(Error::NonConvergence { iterations: history.len(), residual });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: *history.last().unwrap_or(&f64::NAN),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationFamily {
    pub parameter_name: String,
    pub samples: Vec<(f64, PeriodicOrbit)>,
    pub failure: Option<String>,
}

/// Natural-parameter continuation: each converged fixed point seeds the next
/// parameter value; on failure the step is bisected (up to 6 halvings).
pub fn continue_family(
    model_factory: impl Fn(f64) -> Model,
    guess0: &PhaseState,
    eps_schedule: &[f64],
    theta0: f64,
    tol: f64,
    cfg: &IntegratorSettings,
) -> Result<ContinuationFamily> {
    if eps_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("eps schedule must be strictly increasing".into()));
    }
    let mut samples: Vec<(f64, PeriodicOrbit)> = Vec::new();
    let mut failure = None;
    // Seed with the previous orbit's full node polygon where available: the
    // per-node offset stays at the parameter-step scale, whereas re-seeding
    // from x_bar alone amplifies the offset by e^{lambda T/2} ~ 1e3 along
    // the expanding direction and throws Newton into the wrong basin.
    let mut seed_nodes = None::<Vec<PhaseState>>;
    let mut guess = *guess0;
    let mut eps_prev = None::<f64>;
    'schedule: for &eps in eps_schedule {
        // Before the first success the lower bound is the unperturbed
        // problem (eps = 0), for which the guess itself is the fixed point.
        let mut lo = eps_prev.unwrap_or(0.0);
        let mut seed = seed_nodes.clone();
        let mut halvings = 0i32;
        loop {
            // Try to reach `eps` from the current seed, inserting midpoints
            // on failure.
            let target = if halvings == 0 {
                eps
            } else {
                lo + (eps - lo) / 2f64.powi(halvings)
            };
            let model = model_factory(target);
            let attempt = match &seed {
                Some(nodes) => refine_from_nodes(&model, nodes.clone(), theta0, tol, 25, cfg),
                None => refine_fixed_point(&model, &guess, theta0, tol, 25, cfg),
            };
            match attempt {
                Ok(orbit) => {
                    if target == eps {
                        guess = orbit.x_bar;
                        seed_nodes = Some(orbit.nodes.clone());
                        samples.push((eps, orbit));
                        eps_prev = Some(eps);
                        continue 'schedule;
                    }
                    lo = target;
                    guess = orbit.x_bar;
                    seed = Some(orbit.nodes.clone());
                    halvings = 0; // progress made; retry the full remaining step
                }
                Err(e) => {
                    halvings += 1;
                    if halvings > 6 {
                        failure = Some(format!("continuation stalled at eps = {eps}: {e}"));
                        break 'schedule;
                    }
                }
            }
        }
    }
    Ok(ContinuationFamily { parameter_name: "eps".into(), samples, failure })
}

/// One full period sampled uniformly in time. Each sample is integrated from
/// the nearest preceding shooting node so the expanding direction never
/// accumulates more than one segment of growth.
pub fn orbit_path(orbit: &PeriodicOrbit, n_samples: usize, cfg: &IntegratorSettings) -> Result<Trajectory> {
    let n = n_samples.max(2);
    let m = orbit.nodes.len();
    let t0 = orbit.t0();
    let dt_seg = orbit.period / m as f64;
    let mut samples = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let tj = t0 + orbit.period * j as f64 / n as f64;
        let k = (((tj - t0) / dt_seg) as usize).min(m - 1);
        let s = flow_to(&orbit.model, &orbit.nodes[k], t0 + k as f64 * dt_seg, tj, cfg)?;
        samples.push((tj, s));
    }
    Ok(Trajectory { samples })
}

/// Max distance of the orbit path from a reference position over one period.
pub fn orbit_amplitude(
    orbit: &PeriodicOrbit,
    center: (f64, f64),
    n_samples: usize,
    cfg: &IntegratorSettings,
) -> Result<f64> {
    let path = orbit_path(orbit, n_samples, cfg)?;
    Ok(path
        .samples
        .iter()
        .map(|(_, s)| ((s.x - center.0).powi(2) + (s.y - center.1).powi(2)).sqrt())
        .fold(0.0, f64::max))
}

/// Winding diagnostic: number of sign changes of x(t) - mean(x) over the
/// closed path. 4 crossings = doubly-looping, 2 = singly-looping.
pub fn loop_crossings(orbit: &PeriodicOrbit, n_samples: usize, cfg: &IntegratorSettings) -> Result<usize> {
    let path = orbit_path(orbit, n_samples, cfg)?;
    let xs: Vec<f64> = path.samples.iter().take(n_samples).map(|(_, s)| s.x).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let mut crossings = 0;
    for i in 0..xs.len() {
        let a = xs[i] - mean;
        let b = xs[(i + 1) % xs.len()] - mean;
        if a.signum() != b.signum() {
            crossings += 1;
        }
    }
    Ok(crossings)
}

/// State and STM Phi(t0 + dt, t0) along the orbit, chained across the stored
/// shooting nodes (full segments, then a partial one).
pub fn stm_along(orbit: &PeriodicOrbit, dt: f64, cfg: &IntegratorSettings) -> Result<(PhaseState, Matrix4<f64>)> {
    if !(0.0..=orbit.period).contains(&dt) {
        return Err(Error::Validation(format!(
            "dt must lie in [0, T], got {dt} (T = {})",
            orbit.period
        )));
    }
    let m = orbit.nodes.len();
    let t0 = orbit.t0();
    let dt_seg = orbit.period / m as f64;
    let full = ((dt / dt_seg) as usize).min(m - 1);
    let mut acc = Matrix4::identity();
    for i in 0..full {
        let r = flow_with_stm(&orbit.model, &orbit.nodes[i], t0 + i as f64 * dt_seg, t0 + (i + 1) as f64 * dt_seg, cfg)?;
        acc = r.stm * acc;
    }
    let r = flow_with_stm(
        &orbit.model,
        &orbit.nodes[full],
        t0 + full as f64 * dt_seg,
        t0 + dt,
        cfg,
    )?;
    Ok((r.final_state, r.stm * acc))
}
