//! Box-constrained quadratic program for one Cartesian axis of the tracker.
//!
//! The regulation problem decouples exactly across axes because the state and
//! input weights are scalar multiples of identity, so each axis reduces to a
//! double integrator driven by `T` acceleration inputs with
//!
//! * objective `½ Σ_{k<T} v_Q (p_k² + v_k²) + ½ Σ u_k² + ½ v_S (p_T² + v_T²)`
//! * dynamics `p⁺ = p + Δt·v + ½Δt²·u`, `v⁺ = v + Δt·u`
//! * boxes `|u_k| ≤ b_u`, `|v_k| ≤ b_v`
//! * terminal rest `p_T = 0`, `v_T = 0`.
//!
//! The states are condensed into the inputs and the resulting dense QP is
//! solved by an operator-splitting (alternating projection) iteration with a
//! fixed tolerance and iteration cap, followed by an active-set polish that
//! recovers the exact solution of the identified face. The splitting iterate
//! is firmly non-expansive, so its fixed-point residual decreases
//! monotonically; that residual is recorded per iteration.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// One-axis problem data.
#[derive(Clone, Copy, Debug)]
pub struct AxisProblem {
    /// Number of input steps; the trajectory has `t_steps + 1` states.
    pub t_steps: usize,
    /// Step interval, seconds.
    pub dt: f64,
    /// Run-time state weight.
    pub v_q: f64,
    /// Terminal state weight (inert under the hard terminal constraint but
    /// kept in the objective).
    pub v_s: f64,
    /// Acceleration bound, m/s²; may be infinite.
    pub b_u: f64,
    /// Velocity bound, m/s; may be infinite.
    pub b_v: f64,
    /// Initial position error, meters.
    pub p0: f64,
    /// Initial velocity, m/s.
    pub v0: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iters: usize,
    /// Splitting penalty for inequality rows.
    pub rho: f64,
    /// Penalty multiplier for equality rows.
    pub rho_eq_scale: f64,
    /// Primal residual above which a capped run is declared infeasible.
    pub infeasible_residual: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tol: 1e-9,
            max_iters: 10_000,
            rho: 3.0,
            rho_eq_scale: 1e3,
            infeasible_residual: 1e-6,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("terminal constraint unreachable (primal residual {residual:.3e} after {iterations} iterations)")]
    Infeasible { residual: f64, iterations: usize },
}

/// Solution for one axis.
#[derive(Clone, Debug)]
pub struct AxisSolution {
    /// Optimal inputs, length `t_steps`.
    pub u: DVector<f64>,
    /// Positions `p_0..p_T` from an exact rollout of `u`.
    pub pos: DVector<f64>,
    /// Velocities `v_0..v_T` from the same rollout.
    pub vel: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Whether the active-set polish succeeded.
    pub polished: bool,
    /// Max-norm KKT residual of the returned solution.
    pub kkt_residual: f64,
    /// Fixed-point residual of the splitting iteration, one entry per
    /// iteration; non-increasing.
    pub fpr_history: Vec<f64>,
}

struct Condensed {
    /// Hessian of the condensed objective.
    p: DMatrix<f64>,
    /// Linear term.
    q: DVector<f64>,
    /// Constant term, so the objective matches the uncondensed cost.
    c0: f64,
    /// Constraint matrix rows: `t` input rows, `t` velocity rows, 2 terminal.
    /// Rows are equilibrated to unit norm.
    g: DMatrix<f64>,
    /// Constraint offsets (in equilibrated units).
    offset: DVector<f64>,
    lo: DVector<f64>,
    hi: DVector<f64>,
    /// Per-row penalty.
    rho: DVector<f64>,
}

fn condense(prob: &AxisProblem, settings: &QpSettings) -> Condensed {
    let t = prob.t_steps;
    let dt = prob.dt;
    // v_k = v0 + dt * sum_{j<k} u_j
    // p_k = p0 + k*dt*v0 + sum_{j<k} dt^2 (k - j - 1/2) u_j
    let mut f_v = DMatrix::zeros(t + 1, t);
    let mut f_p = DMatrix::zeros(t + 1, t);
    let mut g_v = DVector::zeros(t + 1);
    let mut g_p = DVector::zeros(t + 1);
    for k in 0..=t {
        g_v[k] = prob.v0;
        g_p[k] = prob.p0 + k as f64 * dt * prob.v0;
        for j in 0..k.min(t) {
            f_v[(k, j)] = dt;
            f_p[(k, j)] = dt * dt * (k as f64 - j as f64 - 0.5);
        }
    }

    let mut p = DMatrix::identity(t, t); // from R = I on the inputs
    let mut q = DVector::zeros(t);
    let mut c0 = 0.0;
    let mut add_quadratic = |row_f: nalgebra::DVectorView<f64>, g: f64, w: f64| {
        // contributes w/2 * (fᵀu + g)²
        c0 += 0.5 * w * g * g;
        for i in 0..t {
            q[i] += w * g * row_f[i];
        }
        for i in 0..t {
            for j in 0..t {
                p[(i, j)] += w * row_f[i] * row_f[j];
            }
        }
    };
    for k in 0..t {
        add_quadratic(f_p.row(k).transpose().column(0), g_p[k], prob.v_q);
        add_quadratic(f_v.row(k).transpose().column(0), g_v[k], prob.v_q);
    }
    add_quadratic(f_p.row(t).transpose().column(0), g_p[t], prob.v_s);
    add_quadratic(f_v.row(t).transpose().column(0), g_v[t], prob.v_s);

    let rows = t + t + 2;
    let mut g_mat = DMatrix::zeros(rows, t);
    let mut offset = DVector::zeros(rows);
    let mut lo = DVector::zeros(rows);
    let mut hi = DVector::zeros(rows);
    let mut rho = DVector::zeros(rows);
    for i in 0..t {
        g_mat[(i, i)] = 1.0;
        lo[i] = -prob.b_u;
        hi[i] = prob.b_u;
        rho[i] = settings.rho;
    }
    for k in 1..=t {
        let r = t + k - 1;
        for j in 0..t {
            g_mat[(r, j)] = f_v[(k, j)];
        }
        offset[r] = g_v[k];
        lo[r] = -prob.b_v;
        hi[r] = prob.b_v;
        rho[r] = settings.rho;
    }
    for (idx, f) in [(2 * t, &f_p), (2 * t + 1, &f_v)] {
        for j in 0..t {
            g_mat[(idx, j)] = f[(t, j)];
        }
        offset[idx] = if idx == 2 * t { g_p[t] } else { g_v[t] };
        lo[idx] = 0.0;
        hi[idx] = 0.0;
        rho[idx] = settings.rho * settings.rho_eq_scale;
    }

    // Row equilibration keeps the splitting penalty meaningful across the
    // heterogeneous row scales (unit input rows vs. dt²-sized terminal rows).
    for r in 0..rows {
        let norm = g_mat.row(r).norm();
        if norm > 0.0 {
            for j in 0..t {
                g_mat[(r, j)] /= norm;
            }
            offset[r] /= norm;
            lo[r] /= norm;
            hi[r] /= norm;
        }
    }

    Condensed { p, q, c0, g: g_mat, offset, lo, hi, rho }
}

fn clamp_vec(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i].clamp(lo[i], hi[i]))
}

fn objective(c: &Condensed, u: &DVector<f64>) -> f64 {
    0.5 * (u.transpose() * &c.p * u)[(0, 0)] + c.q.dot(u) + c.c0
}

/// Rolls the double-integrator dynamics exactly.
fn rollout(prob: &AxisProblem, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let t = prob.t_steps;
    let mut pos = DVector::zeros(t + 1);
    let mut vel = DVector::zeros(t + 1);
    pos[0] = prob.p0;
    vel[0] = prob.v0;
    for k in 0..t {
        pos[k + 1] = pos[k] + prob.dt * vel[k] + 0.5 * prob.dt * prob.dt * u[k];
        vel[k + 1] = vel[k] + prob.dt * u[k];
    }
    (pos, vel)
}

fn kkt_residual(c: &Condensed, u: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let stationarity = (&c.p * u + &c.q + c.g.transpose() * y).amax();
    let gu = &c.g * u + &c.offset;
    let mut primal: f64 = 0.0;
    for i in 0..gu.len() {
        primal = primal.max((gu[i] - c.hi[i]).max(0.0));
        primal = primal.max((c.lo[i] - gu[i]).max(0.0));
    }
    stationarity.max(primal)
}

/// Active-set polish: re-solve the equality system on the face identified by
/// the splitting iteration. Returns `None` when the face is inconsistent with
/// optimality (wrong active set).
fn polish(
    c: &Condensed,
    z: &DVector<f64>,
    y: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let rows = c.g.nrows();
    let n = c.g.ncols();
    let act_tol = 1e-7;
    let mut active: Vec<(usize, f64)> = Vec::new(); // (row, bound value)
    for i in 0..rows {
        if c.lo[i] == c.hi[i] {
            active.push((i, c.lo[i]));
        } else if c.hi[i] - z[i] < act_tol && y[i] > 0.0 {
            active.push((i, c.hi[i]));
        } else if z[i] - c.lo[i] < act_tol && y[i] < 0.0 {
            active.push((i, c.lo[i]));
        }
    }
    let m = active.len();
    let dim = n + m;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&c.p);
    for (j, &(row, _)) in active.iter().enumerate() {
        for k in 0..n {
            kkt[(k, n + j)] = c.g[(row, k)];
            kkt[(n + j, k)] = c.g[(row, k)];
        }
    }
    let mut rhs = DVector::zeros(dim);
    for k in 0..n {
        rhs[k] = -c.q[k];
    }
    for (j, &(row, bound)) in active.iter().enumerate() {
        rhs[n + j] = bound - c.offset[row];
    }
    let sol = kkt.lu().solve(&rhs)?;
    let u = DVector::from_fn(n, |i, _| sol[i]);
    let mut y_full = DVector::zeros(rows);
    for (j, &(row, bound)) in active.iter().enumerate() {
        let nu = sol[n + j];
        // Multiplier sign must match the side of the box.
        if c.lo[row] != c.hi[row] {
            if bound == c.hi[row] && nu < -1e-9 {
                return None;
            }
            if bound == c.lo[row] && nu > 1e-9 {
                return None;
            }
        }
        y_full[row] = nu;
    }
    // Inactive rows must be strictly feasible.
    let gu = &c.g * &u + &c.offset;
    for i in 0..rows {
        if gu[i] > c.hi[i] + 1e-10 || gu[i] < c.lo[i] - 1e-10 {
            return None;
        }
    }
    Some((u, y_full))
}

/// Solves one axis. Infeasibility of the terminal constraint is reported as
/// [`QpError::Infeasible`] after the iteration cap.
pub fn solve_axis(prob: &AxisProblem, settings: &QpSettings) -> Result<AxisSolution, QpError> {
    assert!(prob.t_steps >= 2, "need at least two steps");
    assert!(prob.dt > 0.0);
    let c = condense(prob, settings);
    let t = prob.t_steps;
    let rows = c.g.nrows();

    // The inputs enter the objective through R = I, so P is strictly positive
    // definite and the factorization below always exists.
    let m = &c.p + c.g.transpose() * DMatrix::from_diagonal(&c.rho) * &c.g;
    let chol = m.cholesky().expect("P + GᵀρG is positive definite");

    let mut z = clamp_vec(&c.offset, &c.lo, &c.hi);
    let mut y = DVector::zeros(rows);
    let mut u = DVector::zeros(t);
    let mut w_prev: Option<DVector<f64>> = None;
    let mut fpr_history = Vec::new();
    let mut iterations = 0;
    let mut primal_residual = f64::INFINITY;
    let mut converged = false;

    for it in 0..settings.max_iters {
        iterations = it + 1;
        // u-update: prox of the quadratic.
        let rhs = DVector::from_fn(t, |i, _| {
            let mut s = -c.q[i];
            for r in 0..rows {
                s += c.g[(r, i)] * (c.rho[r] * (z[r] - c.offset[r]) - y[r]);
            }
            s
        });
        u = chol.solve(&rhs);
        let gu = &c.g * &u + &c.offset;
        // z-update: projection onto the boxes.
        let z_arg = DVector::from_fn(rows, |r, _| gu[r] + y[r] / c.rho[r]);
        z = clamp_vec(&z_arg, &c.lo, &c.hi);
        // dual update
        for r in 0..rows {
            y[r] += c.rho[r] * (gu[r] - z[r]);
        }
        // Fixed-point residual in the penalty-scaled norm.
        let w = DVector::from_fn(rows, |r, _| z[r] + y[r] / c.rho[r]);
        if let Some(prev) = &w_prev {
            let mut s: f64 = 0.0;
            for r in 0..rows {
                let d = w[r] - prev[r];
                s += c.rho[r] * d * d;
            }
            fpr_history.push(s.sqrt());
        }
        w_prev = Some(w);

        primal_residual = (0..rows).map(|r| (gu[r] - z[r]).abs()).fold(0.0, f64::max);
        let dual = (&c.p * &u + &c.q + c.g.transpose() * &y).amax();
        if primal_residual <= settings.tol && dual <= settings.tol {
            converged = true;
            break;
        }
    }

    if !converged && primal_residual > settings.infeasible_residual {
        return Err(QpError::Infeasible { residual: primal_residual, iterations });
    }

    let mut polished = false;
    let mut y_best = y.clone();
    if let Some((u_pol, y_pol)) = polish(&c, &z, &y) {
        if objective(&c, &u_pol) <= objective(&c, &u) + settings.tol {
            u = u_pol;
            y_best = y_pol;
            polished = true;
        }
    }

    let (pos, vel) = rollout(prob, &u);
    Ok(AxisSolution {
        objective: objective(&c, &u),
        kkt_residual: kkt_residual(&c, &u, &y_best),
        iterations,
        polished,
        fpr_history,
        u,
        pos,
        vel,
    })
}

/// Largest rest-to-rest distance coverable in `t_steps` of length `dt` under
/// the acceleration and velocity boxes, from the discrete bang-bang profile.
/// Any smaller distance is feasible by scaling that profile.
pub fn max_reach(t_steps: usize, dt: f64, b_u: f64, b_v: f64) -> f64 {
    let mut d = 0.0;
    let mut v_prev = 0.0;
    for k in 1..=t_steps {
        let v = (b_u * dt * k as f64)
            .min(b_v)
            .min(b_u * dt * (t_steps - k) as f64);
        d += dt * (v_prev + v) / 2.0;
        v_prev = v;
    }
    d
}
