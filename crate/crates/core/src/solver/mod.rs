//! Concave QP solver: operator splitting with over-relaxation, Ruiz
//! equilibration and an active-set polish step for tight duals.
//!
//! The public problem form is the maximization [`QuadraticProgram`]; the
//! solver negates into the internal minimization form
//!
//! ```text
//!     minimize   1/2 x' P x + q' x      (P diagonal, >= 0)
//!     subject to l <= [A; I] x <= u
//! ```
//!
//! where variable bounds are stacked under the constraint rows. Reported
//! duals follow the maximization convention: a positive dual on a row means
//! its upper bound is binding, a positive bound dual in `bound_duals` is
//! reported as the raw stacked-row dual (negative when the variable sits on
//! its lower bound). Deterministic and seed-free: identical inputs produce
//! identical outputs.

pub mod ldl;
mod polish;

use crate::qp::{QpInvariantError, QuadraticProgram, SparseRows};
use ldl::{LdlFactor, SymCsc};
use serde::{Deserialize, Serialize};

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_ACTIVE_FACTOR: f64 = 1e2;
const RHO_MIN: f64 = 1e-4;
const RHO_MAX: f64 = 1e6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Absolute residual tolerance.
    pub abs_tol: f64,
    /// Relative residual tolerance.
    pub rel_tol: f64,
    /// Run the active-set polish after first-order convergence.
    pub polish: bool,
    /// Relative threshold for infeasibility certificates.
    pub eps_infeasible: f64,
    /// ADMM over-relaxation parameter.
    pub alpha: f64,
    /// ADMM primal regularization.
    pub sigma: f64,
    /// Initial penalty; equality rows use `RHO_EQ_FACTOR` times this.
    pub rho: f64,
    /// Ruiz equilibration sweeps (0 disables scaling).
    pub scaling_iters: usize,
    /// Termination / infeasibility checks happen every this many iterations.
    pub check_every: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 100_000,
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            polish: true,
            eps_infeasible: 1e-7,
            alpha: 1.6,
            sigma: 1e-6,
            rho: 0.1,
            scaling_iters: 10,
            check_every: 25,
        }
    }
}

impl SolverSettings {
    fn validate(&self) -> Result<(), SolverError> {
        if self.max_iterations == 0 {
            return Err(SolverError::BadSettings("max_iterations must be >= 1"));
        }
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(SolverError::BadSettings("tolerances must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    /// Dual infeasible, i.e. the maximization is unbounded.
    DualInfeasible,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

struct Residuals {
    primal: f64,
    dual: f64,
    ratio_primal: f64,
    ratio_dual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpSolution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    /// Duals of the constraint rows (maximization convention).
    pub row_duals: Vec<f64>,
    /// Duals of the variable bounds; negative entries mean the lower bound
    /// binds, positive the upper.
    pub bound_duals: Vec<f64>,
    /// Objective in the maximize sense, including the constant term.
    pub objective: f64,
    pub residuals: ResidualSummary,
    pub iterations: usize,
    pub polished: bool,
    /// Infeasibility certificate: for `PrimalInfeasible` a ray in row-dual
    /// space (constraint rows then bounds); for `DualInfeasible` a primal
    /// ray.
    pub certificate: Option<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(#[from] QpInvariantError),
    #[error("invalid settings: {0}")]
    BadSettings(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Solves a QP cold. For repeated solves over the same structure, build a
/// [`Workspace`] and reuse it.
pub fn solve_qp(qp: &QuadraticProgram, settings: &SolverSettings) -> Result<QpSolution, SolverError> {
    let mut ws = Workspace::new(qp, settings.clone())?;
    Ok(ws.solve(None))
}

/// Reusable solver state: scaling, KKT factorization and iterates. Row
/// bounds may be updated between solves without refactoring.
pub struct Workspace {
    settings: SolverSettings,
    n: usize,
    m_rows: usize,
    m_total: usize,
    // original (unscaled) data, minimization form
    p_diag: Vec<f64>,
    q_lin: Vec<f64>,
    a: SparseRows, // stacked rows + identity bounds
    l: Vec<f64>,
    u: Vec<f64>,
    constant: f64,
    // scaling
    d_scale: Vec<f64>,
    e_scale: Vec<f64>,
    c_scale: f64,
    // scaled data
    ps_diag: Vec<f64>,
    qs: Vec<f64>,
    as_mat: SparseRows,
    ls: Vec<f64>,
    us: Vec<f64>,
    // penalties
    rho: Vec<f64>,
    rho_bar: f64,
    base_rho_bar: f64,
    // KKT
    kkt: SymCsc,
    kkt_slots_pdiag: Vec<usize>,
    kkt_slots_rho: Vec<usize>,
    factor: LdlFactor,
    // iterates (scaled)
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    warm: bool,
}

impl Workspace {
    pub fn new(qp: &QuadraticProgram, settings: SolverSettings) -> Result<Workspace, SolverError> {
        settings.validate()?;
        qp.check_invariants()?;
        let n = qp.num_vars;
        let m_rows = qp.num_rows();
        let m_total = m_rows + n;

        // negate into minimization form and stack identity bound rows
        let p_diag: Vec<f64> = qp.quadratic_diag.iter().map(|&v| -v).collect();
        let q_lin: Vec<f64> = qp.linear.iter().map(|&v| -v).collect();
        let mut a = qp.rows.clone();
        for i in 0..n {
            a.push_row(&[(i, 1.0)]);
        }
        let mut l = qp.row_lower.clone();
        let mut u = qp.row_upper.clone();
        l.extend_from_slice(&qp.var_lower);
        u.extend_from_slice(&qp.var_upper);

        let mut ws = Workspace {
            settings,
            n,
            m_rows,
            m_total,
            p_diag: p_diag.clone(),
            q_lin: q_lin.clone(),
            a: a.clone(),
            l: l.clone(),
            u: u.clone(),
            constant: qp.constant,
            d_scale: vec![1.0; n],
            e_scale: vec![1.0; m_total],
            c_scale: 1.0,
            ps_diag: p_diag,
            qs: q_lin,
            as_mat: a,
            ls: l,
            us: u,
            rho: Vec::new(),
            rho_bar: 0.0,
            base_rho_bar: 0.0,
            kkt: SymCsc {
                n: 0,
                colptr: Vec::new(),
                rowidx: Vec::new(),
                values: Vec::new(),
            },
            kkt_slots_pdiag: Vec::new(),
            kkt_slots_rho: Vec::new(),
            factor: LdlFactor::new(
                &SymCsc {
                    n: 0,
                    colptr: vec![0],
                    rowidx: Vec::new(),
                    values: Vec::new(),
                },
                &[],
            ),
            x: vec![0.0; n],
            z: vec![0.0; m_total],
            y: vec![0.0; m_total],
            warm: false,
        };
        ws.equilibrate();
        ws.rho_bar = ws.settings.rho;
        ws.base_rho_bar = ws.settings.rho;
        ws.rho = ws.rho_vector(ws.rho_bar);
        ws.build_kkt();
        Ok(ws)
    }

    /// Resets the adaptive penalty to its construction-time value so that a
    /// sequence of solves is independent of what ran before. Used by the
    /// enumeration driver for worker-count-independent determinism.
    pub fn reset_penalty(&mut self) {
        let base = self.rho_vector(self.base_rho_bar);
        if self.rho_bar != self.base_rho_bar || base != self.rho {
            self.rho_bar = self.base_rho_bar;
            self.rho = base;
            self.refresh_kkt_values();
        }
    }

    /// Replaces the constraint-row bounds (variable bounds are unchanged).
    pub fn set_row_bounds(&mut self, lower: &[f64], upper: &[f64]) -> Result<(), SolverError> {
        if lower.len() != self.m_rows || upper.len() != self.m_rows {
            return Err(SolverError::Dimension(format!(
                "expected {} row bounds, got {}/{}",
                self.m_rows,
                lower.len(),
                upper.len()
            )));
        }
        for r in 0..self.m_rows {
            self.l[r] = lower[r];
            self.u[r] = upper[r];
            self.ls[r] = self.e_scale[r] * lower[r];
            self.us[r] = self.e_scale[r] * upper[r];
        }
        Ok(())
    }

    fn rho_vector(&self, rho_bar: f64) -> Vec<f64> {
        (0..self.m_total)
            .map(|r| {
                if self.l[r] == self.u[r] {
                    (rho_bar * RHO_EQ_FACTOR).clamp(RHO_MIN, RHO_MAX)
                } else {
                    rho_bar.clamp(RHO_MIN, RHO_MAX)
                }
            })
            .collect()
    }

    /// Per-row penalties: equality rows stiff, rows whose dual is active
    /// (the projection clipped them) boosted, loose rows at the base value.
    /// Near-binding inequalities behave like equalities close to the
    /// optimum; stiffening them is what makes their duals form quickly.
    fn rho_vector_by_activity(&self, rho_bar: f64) -> Vec<f64> {
        (0..self.m_total)
            .map(|r| {
                let factor = if self.l[r] == self.u[r] {
                    RHO_EQ_FACTOR
                } else if self.y[r] != 0.0 {
                    RHO_ACTIVE_FACTOR
                } else {
                    1.0
                };
                (rho_bar * factor).clamp(RHO_MIN, RHO_MAX)
            })
            .collect()
    }

    /// Ruiz equilibration of the [[P, A'], [A, 0]] block matrix plus cost
    /// scaling; residuals are always reported unscaled.
    fn equilibrate(&mut self) {
        let n = self.n;
        let m = self.m_total;
        for _ in 0..self.settings.scaling_iters {
            let mut col_norm = vec![0.0f64; n];
            let mut row_norm = vec![0.0f64; m];
            for i in 0..n {
                col_norm[i] = self.ps_diag[i].abs();
            }
            for r in 0..m {
                let (cols, vals) = self.as_mat.row(r);
                for (c, v) in cols.iter().zip(vals) {
                    let av = v.abs();
                    if av > col_norm[*c] {
                        col_norm[*c] = av;
                    }
                    if av > row_norm[r] {
                        row_norm[r] = av;
                    }
                }
            }
            let dx: Vec<f64> = col_norm
                .iter()
                .map(|&v| {
                    if v > 0.0 {
                        (1.0 / v.sqrt()).clamp(MIN_SCALING, MAX_SCALING)
                    } else {
                        1.0
                    }
                })
                .collect();
            let dy: Vec<f64> = row_norm
                .iter()
                .map(|&v| {
                    if v > 0.0 {
                        (1.0 / v.sqrt()).clamp(MIN_SCALING, MAX_SCALING)
                    } else {
                        1.0
                    }
                })
                .collect();
            for i in 0..n {
                self.ps_diag[i] *= dx[i] * dx[i];
                self.qs[i] *= dx[i];
                self.d_scale[i] *= dx[i];
            }
            for r in 0..m {
                let start = self.as_mat.starts[r];
                let end = self.as_mat.starts[r + 1];
                for p in start..end {
                    let c = self.as_mat.cols[p];
                    self.as_mat.values[p] *= dy[r] * dx[c];
                }
                self.ls[r] *= dy[r];
                self.us[r] *= dy[r];
                self.e_scale[r] *= dy[r];
            }
        }
        // cost scaling
        if self.settings.scaling_iters > 0 {
            let mean_p = if n > 0 {
                self.ps_diag.iter().map(|v| v.abs()).sum::<f64>() / n as f64
            } else {
                0.0
            };
            let q_norm = self.qs.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            let denom = mean_p.max(q_norm);
            let c = if denom > 1e-12 { 1.0 / denom } else { 1.0 };
            for i in 0..n {
                self.ps_diag[i] *= c;
                self.qs[i] *= c;
            }
            self.c_scale = c;
        }
    }

    fn build_kkt(&mut self) {
        let n = self.n;
        let m = self.m_total;
        let dim = n + m;
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut pdiag_idx = Vec::with_capacity(n);
        for i in 0..n {
            pdiag_idx.push(triplets.len());
            triplets.push((i, i, self.ps_diag[i] + self.settings.sigma));
        }
        let mut a_entry_idx = Vec::with_capacity(self.as_mat.nnz());
        for r in 0..m {
            let (cols, vals) = self.as_mat.row(r);
            for (c, v) in cols.iter().zip(vals) {
                a_entry_idx.push(triplets.len());
                triplets.push((*c, n + r, *v));
            }
        }
        let mut rho_idx = Vec::with_capacity(m);
        for r in 0..m {
            rho_idx.push(triplets.len());
            triplets.push((n + r, n + r, -1.0 / self.rho[r]));
        }
        let (kkt, slots) = SymCsc::from_triplets(dim, &triplets);
        self.kkt_slots_pdiag = pdiag_idx.iter().map(|&k| slots[k]).collect();
        // A entries never change after scaling; only the rho diagonal does.
        let _ = a_entry_idx;
        self.kkt_slots_rho = rho_idx.iter().map(|&k| slots[k]).collect();
        let mut signs = vec![1i8; n];
        signs.extend(vec![-1i8; m]);
        self.factor = LdlFactor::new(&kkt, &signs);
        self.kkt = kkt;
        self.factor.refactor(&self.kkt, 1e-13);
    }

    fn refresh_kkt_values(&mut self) {
        for r in 0..self.m_total {
            self.kkt.values[self.kkt_slots_rho[r]] = -1.0 / self.rho[r];
        }
        self.factor.refactor(&self.kkt, 1e-13);
    }

    /// Runs the splitting iteration (optionally warm-started), polishes and
    /// returns the solution with unscaled residuals.
    pub fn solve(&mut self, warm: Option<&QpSolution>) -> QpSolution {
        let n = self.n;
        let m = self.m_total;
        if let Some(sol) = warm {
            for i in 0..n {
                self.x[i] = sol.primal[i] / self.d_scale[i];
            }
            let mut y_full: Vec<f64> = Vec::with_capacity(m);
            y_full.extend_from_slice(&sol.row_duals);
            y_full.extend_from_slice(&sol.bound_duals);
            for r in 0..m {
                self.y[r] = y_full[r] * self.c_scale / self.e_scale[r];
            }
            // z = clamp(Ax) in scaled space
            let mut ax = vec![0.0; m];
            self.as_mat.mul(&self.x, &mut ax);
            for r in 0..m {
                self.z[r] = ax[r].clamp(self.ls[r], self.us[r]);
            }
            self.warm = true;
        } else if !self.warm {
            self.x.iter_mut().for_each(|v| *v = 0.0);
            self.y.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..m {
                self.z[r] = 0.0f64.clamp(self.ls[r], self.us[r]);
            }
        }

        let mut rhs = vec![0.0; n + m];
        let mut xt = vec![0.0; n];
        let mut zt = vec![0.0; m];
        let mut dy = vec![0.0; m];
        let mut dx = vec![0.0; n];
        let iterations;
        let mut status = SolveStatus::IterationLimit;
        let mut certificate = None;

        let max_iter = self.settings.max_iterations;
        let check_every = self.settings.check_every.max(1);
        let mut k = 0;
        loop {
            if k % check_every == 0 {
                let res = self.residuals();
                if std::env::var("GRIDPLAN_SOLVER_TRACE").is_ok() && k % 5000 == 0 {
                    eprintln!(
                        "iter {k}: rp {:.3e} rd {:.3e} ratios ({:.3e}, {:.3e}) rho {:.3e}",
                        res.primal, res.dual, res.ratio_primal, res.ratio_dual, self.rho_bar
                    );
                }
                if res.ratio_primal <= 1.0 && res.ratio_dual <= 1.0 {
                    status = SolveStatus::Optimal;
                    iterations = k;
                    break;
                }
                if k > 0 {
                    if let Some(cert) = self.primal_infeasibility(&dy) {
                        status = SolveStatus::PrimalInfeasible;
                        certificate = Some(cert);
                        iterations = k;
                        break;
                    }
                    if let Some(cert) = self.dual_infeasibility(&dx) {
                        status = SolveStatus::DualInfeasible;
                        certificate = Some(cert);
                        iterations = k;
                        break;
                    }
                }
                // penalty adaptation every fourth check
                if k > 0 && k % (4 * check_every) == 0 {
                    self.maybe_update_rho(res.ratio_primal, res.ratio_dual);
                }
                // degenerate duals can stall the splitting iteration far
                // from the per-row tolerances; once the primal is roughly
                // feasible, see whether the polish already reaches them
                if self.settings.polish
                    && k > 0
                    && k % (10 * check_every) == 0
                    && res.ratio_primal <= 1e3
                {
                    let mut early = self.extract_solution(SolveStatus::Optimal, k, None);
                    polish::polish(self, &mut early, true);
                    if early.polished {
                        self.warm = true;
                        return early;
                    }
                }
            }
            if k >= max_iter {
                iterations = k;
                break;
            }
            k += 1;

            // KKT solve
            for i in 0..n {
                rhs[i] = self.settings.sigma * self.x[i] - self.qs[i];
            }
            for r in 0..m {
                rhs[n + r] = self.z[r] - self.y[r] / self.rho[r];
            }
            self.factor.solve(&mut rhs);
            xt.copy_from_slice(&rhs[..n]);
            for r in 0..m {
                zt[r] = self.z[r] + (rhs[n + r] - self.y[r]) / self.rho[r];
            }
            let alpha = self.settings.alpha;
            for i in 0..n {
                let next = alpha * xt[i] + (1.0 - alpha) * self.x[i];
                dx[i] = next - self.x[i];
                self.x[i] = next;
            }
            for r in 0..m {
                let z_tmp = alpha * zt[r] + (1.0 - alpha) * self.z[r] + self.y[r] / self.rho[r];
                let z_next = z_tmp.clamp(self.ls[r], self.us[r]);
                let y_next = self.rho[r] * (z_tmp - z_next);
                dy[r] = y_next - self.y[r];
                self.z[r] = z_next;
                self.y[r] = y_next;
            }
        }

        self.warm = true;
        let mut solution = self.extract_solution(status, iterations, certificate);
        if self.settings.polish
            && matches!(
                solution.status,
                SolveStatus::Optimal | SolveStatus::IterationLimit
            )
        {
            polish::polish(self, &mut solution, false);
            if solution.polished && solution.status == SolveStatus::IterationLimit {
                // the polished point may satisfy the per-row tolerances even
                // though the splitting iteration ran out of budget
                let res = self.residuals();
                if res.ratio_primal <= 1.0 && res.ratio_dual <= 1.0 {
                    solution.status = SolveStatus::Optimal;
                }
            }
        }
        solution
    }

    /// Unscaled residuals. `ratio_*` are the worst per-row (per-coordinate)
    /// residuals divided by their own tolerance `abs_tol + rel_tol * scale`,
    /// so rows of very different magnitudes (energy balances vs budget sums)
    /// each converge relative to their own scale; <= 1 means converged.
    fn residuals(&self) -> Residuals {
        let n = self.n;
        let m = self.m_total;
        let mut ax_s = vec![0.0; m];
        self.as_mat.mul(&self.x, &mut ax_s);
        let mut rp: f64 = 0.0;
        let mut ratio_p: f64 = 0.0;
        for r in 0..m {
            let ax_u = ax_s[r] / self.e_scale[r];
            let z_u = self.z[r] / self.e_scale[r];
            let res = (ax_u - z_u).abs();
            rp = rp.max(res);
            let tol = self.settings.abs_tol
                + self.settings.rel_tol * ax_u.abs().max(z_u.abs());
            ratio_p = ratio_p.max(res / tol);
        }
        let mut aty_s = vec![0.0; n];
        self.as_mat.mul_transpose_add(&self.y, &mut aty_s);
        let mut rd: f64 = 0.0;
        let mut ratio_d: f64 = 0.0;
        for i in 0..n {
            let scale = 1.0 / (self.c_scale * self.d_scale[i]);
            let px_u = self.ps_diag[i] * self.x[i] * scale;
            let aty_u = aty_s[i] * scale;
            let q_u = self.qs[i] * scale;
            let res = (px_u + q_u + aty_u).abs();
            rd = rd.max(res);
            let tol = self.settings.abs_tol
                + self.settings.rel_tol * px_u.abs().max(aty_u.abs()).max(q_u.abs());
            ratio_d = ratio_d.max(res / tol);
        }
        Residuals {
            primal: rp,
            dual: rd,
            ratio_primal: ratio_p,
            ratio_dual: ratio_d,
        }
    }

    fn maybe_update_rho(&mut self, np: f64, nd: f64) {
        if nd <= 0.0 {
            return;
        }
        let ratio = (np / nd).sqrt();
        let new_bar = if ratio > 5.0 || ratio < 0.2 {
            (self.rho_bar * ratio).clamp(RHO_MIN, RHO_MAX)
        } else {
            self.rho_bar
        };
        let new_rho = self.rho_vector_by_activity(new_bar);
        if new_rho
            .iter()
            .zip(&self.rho)
            .any(|(a, b)| (a / b - 1.0).abs() > 1e-9)
        {
            self.rho_bar = new_bar;
            self.rho = new_rho;
            self.refresh_kkt_values();
        }
    }

    fn primal_infeasibility(&self, dy_scaled: &[f64]) -> Option<Vec<f64>> {
        let m = self.m_total;
        let n = self.n;
        let mut dy = vec![0.0; m];
        let mut norm: f64 = 0.0;
        for r in 0..m {
            dy[r] = dy_scaled[r] * self.e_scale[r] / self.c_scale;
            norm = norm.max(dy[r].abs());
        }
        if norm <= 0.0 {
            return None;
        }
        for v in dy.iter_mut() {
            if v.abs() < 1e-14 * norm {
                *v = 0.0;
            }
        }
        let eps = self.settings.eps_infeasible * norm;
        let mut aty = vec![0.0; n];
        self.a.mul_transpose_add(&dy, &mut aty);
        if aty.iter().any(|v| v.abs() > eps) {
            return None;
        }
        let mut support = 0.0;
        for r in 0..m {
            if dy[r] > 0.0 {
                if self.u[r].is_infinite() {
                    return None;
                }
                support += self.u[r] * dy[r];
            } else if dy[r] < 0.0 {
                if self.l[r].is_infinite() {
                    return None;
                }
                support += self.l[r] * dy[r];
            }
        }
        if support <= -eps {
            Some(dy)
        } else {
            None
        }
    }

    fn dual_infeasibility(&self, dx_scaled: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        let m = self.m_total;
        let mut dxu = vec![0.0; n];
        let mut norm: f64 = 0.0;
        for i in 0..n {
            dxu[i] = dx_scaled[i] * self.d_scale[i];
            norm = norm.max(dxu[i].abs());
        }
        if norm <= 0.0 {
            return None;
        }
        let eps = self.settings.eps_infeasible * norm;
        for i in 0..n {
            if (self.p_diag[i] * dxu[i]).abs() > eps {
                return None;
            }
        }
        let qd: f64 = self.q_lin.iter().zip(&dxu).map(|(q, d)| q * d).sum();
        if qd > -eps {
            return None;
        }
        let mut adx = vec![0.0; m];
        self.a.mul(&dxu, &mut adx);
        for r in 0..m {
            if self.u[r].is_finite() && adx[r] > eps {
                return None;
            }
            if self.l[r].is_finite() && adx[r] < -eps {
                return None;
            }
        }
        Some(dxu)
    }

    fn extract_solution(
        &self,
        status: SolveStatus,
        iterations: usize,
        certificate: Option<Vec<f64>>,
    ) -> QpSolution {
        let n = self.n;
        let primal: Vec<f64> = (0..n).map(|i| self.x[i] * self.d_scale[i]).collect();
        let y_unscaled: Vec<f64> = (0..self.m_total)
            .map(|r| self.y[r] * self.e_scale[r] / self.c_scale)
            .collect();
        let res = self.residuals();
        let (rp, rd) = (res.primal, res.dual);
        let gap = self.duality_gap(&primal, &y_unscaled);
        let obj_min = self.objective_min(&primal);
        QpSolution {
            status,
            row_duals: y_unscaled[..self.m_rows].to_vec(),
            bound_duals: y_unscaled[self.m_rows..].to_vec(),
            objective: -obj_min + self.constant,
            residuals: ResidualSummary {
                primal: rp,
                dual: rd,
                gap,
            },
            iterations,
            polished: false,
            certificate,
            primal,
        }
    }

    fn objective_min(&self, x: &[f64]) -> f64 {
        let mut v = 0.0;
        for i in 0..self.n {
            v += 0.5 * self.p_diag[i] * x[i] * x[i] + self.q_lin[i] * x[i];
        }
        v
    }

    /// |primal - dual| objective gap of the minimization form.
    fn duality_gap(&self, x: &[f64], y: &[f64]) -> f64 {
        let m = self.m_total;
        let mut ax = vec![0.0; m];
        self.a.mul(x, &mut ax);
        let mut dual_obj = self.objective_min(x);
        // + y'Ax - sup_z y'z over the box
        for r in 0..m {
            dual_obj += y[r] * ax[r];
            if y[r] > 0.0 {
                if self.u[r].is_finite() {
                    dual_obj -= y[r] * self.u[r];
                } else if y[r] > 1e-12 {
                    return f64::INFINITY;
                }
            } else if y[r] < 0.0 {
                if self.l[r].is_finite() {
                    dual_obj -= y[r] * self.l[r];
                } else if y[r] < -1e-12 {
                    return f64::INFINITY;
                }
            }
        }
        (self.objective_min(x) - dual_obj).abs()
    }

    // accessors for the polish step
    pub(crate) fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.m_rows, self.m_total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::Sense;

    fn bounded_single_var() -> QuadraticProgram {
        // maximize 260 x - 1/2 * 0.04 x^2, 0 <= x <= 1000
        QuadraticProgram {
            sense: Sense::Maximize,
            num_vars: 1,
            quadratic_diag: vec![-0.04],
            linear: vec![260.0],
            constant: 0.0,
            rows: SparseRows::new(),
            row_lower: vec![],
            row_upper: vec![],
            var_lower: vec![0.0],
            var_upper: vec![1000.0],
        }
    }

    #[test]
    fn single_variable_analytic_optimum() {
        let qp = bounded_single_var();
        let sol = solve_qp(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal[0] - 1000.0).abs() < 1e-6, "{:?}", sol.primal);
        // dual of the upper bound: 260 - 0.04 * 1000 = 220
        assert!(
            (sol.bound_duals[0] - 220.0).abs() < 1e-6,
            "{:?}",
            sol.bound_duals
        );
        let expect_obj = 260.0 * 1000.0 - 0.5 * 0.04 * 1000.0 * 1000.0;
        assert!((sol.objective - expect_obj).abs() < 1e-6 * expect_obj.abs());
    }

    #[test]
    fn infeasible_problem_certified() {
        // maximize 0 s.t. x >= 1 and x <= 0 (as two rows)
        let mut rows = SparseRows::new();
        rows.push_row(&[(0, 1.0)]);
        rows.push_row(&[(0, 1.0)]);
        let qp = QuadraticProgram {
            sense: Sense::Maximize,
            num_vars: 1,
            quadratic_diag: vec![0.0],
            linear: vec![0.0],
            constant: 0.0,
            rows,
            row_lower: vec![1.0, f64::NEG_INFINITY],
            row_upper: vec![f64::INFINITY, 0.0],
            var_lower: vec![f64::NEG_INFINITY],
            var_upper: vec![f64::INFINITY],
        };
        let sol = solve_qp(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
        let cert = sol.certificate.expect("certificate");
        // Farkas ray: pushes down on the x >= 1 row, up on the x <= 0 row
        let norm = cert.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(norm > 0.0);
        assert!((cert[0] + cert[1] + cert[2]).abs() <= 1e-6 * norm);
        assert!(cert[0] < 0.0 && cert[1] > 0.0);
        // support function value: l1 * min(dy1, 0) + u2 * max(dy2, 0) < 0
        assert!(1.0 * cert[0] + 0.0 * cert[1] < 0.0);
    }

    #[test]
    fn unbounded_problem_detected() {
        // maximize x, x >= 0 only
        let qp = QuadraticProgram {
            sense: Sense::Maximize,
            num_vars: 1,
            quadratic_diag: vec![0.0],
            linear: vec![1.0],
            constant: 0.0,
            rows: SparseRows::new(),
            row_lower: vec![],
            row_upper: vec![],
            var_lower: vec![0.0],
            var_upper: vec![f64::INFINITY],
        };
        let sol = solve_qp(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::DualInfeasible);
        let cert = sol.certificate.expect("ray");
        assert!(cert[0] > 0.0);
    }

    #[test]
    fn equality_and_inequality_mix() {
        // maximize -1/2 (x^2 + y^2) + 3x + y s.t. x + y = 2, x <= 1.5
        let mut rows = SparseRows::new();
        rows.push_row(&[(0, 1.0), (1, 1.0)]);
        rows.push_row(&[(0, 1.0)]);
        let qp = QuadraticProgram {
            sense: Sense::Maximize,
            num_vars: 2,
            quadratic_diag: vec![-1.0, -1.0],
            linear: vec![3.0, 1.0],
            constant: 0.0,
            rows,
            row_lower: vec![2.0, f64::NEG_INFINITY],
            row_upper: vec![2.0, 1.5],
            var_lower: vec![f64::NEG_INFINITY, f64::NEG_INFINITY],
            var_upper: vec![f64::INFINITY, f64::INFINITY],
        };
        let sol = solve_qp(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        // unconstrained-in-subspace optimum on x+y=2 is (2, 0); x<=1.5 binds,
        // so x=1.5, y=0.5.
        assert!((sol.primal[0] - 1.5).abs() < 1e-6, "{:?}", sol.primal);
        assert!((sol.primal[1] - 0.5).abs() < 1e-6);
        // stationarity: -x + 3 - theta - mu = 0 and -y + 1 - theta = 0
        // => theta = 0.5, mu = 1.0
        assert!((sol.row_duals[0] - 0.5).abs() < 1e-6, "{:?}", sol.row_duals);
        assert!((sol.row_duals[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn warm_start_terminates_immediately() {
        let qp = bounded_single_var();
        let mut ws = Workspace::new(&qp, SolverSettings::default()).unwrap();
        let cold = ws.solve(None);
        assert_eq!(cold.status, SolveStatus::Optimal);
        let mut ws2 = Workspace::new(&qp, SolverSettings::default()).unwrap();
        let warm = ws2.solve(Some(&cold));
        assert_eq!(warm.status, SolveStatus::Optimal);
        assert!(warm.iterations <= cold.iterations);
        assert_eq!(warm.iterations, 0);
    }
}
