//! Active-set polish: after first-order convergence, re-solves the
//! equality-reduced KKT system on the rows the duals mark as binding, with
//! static regularization and iterative refinement against the unregularized
//! system. The polished point replaces the iterate only if it improves the
//! worst unscaled residual.

use super::ldl::{LdlFactor, SymCsc};
use super::{QpSolution, Workspace};

/// Regularization ladder: retry with a stiffer delta when the reduced
/// system breaks down numerically.
const POLISH_DELTAS: [f64; 3] = [1e-9, 1e-7, 1e-5];
const REFINE_STEPS: usize = 20;

#[derive(Clone, Copy)]
enum Side {
    Lower,
    Upper,
    Equality,
}

/// Attempts the polish. With `require_converged` the candidate is adopted
/// only if it meets the solver's per-row tolerances outright (used for
/// early exits mid-iteration); otherwise any improvement on the worst
/// unscaled residual is kept.
pub(super) fn polish(ws: &mut Workspace, solution: &mut QpSolution, require_converged: bool) {
    let (n, m_rows, m_total) = ws.dims();

    // stacked duals in the solver's convention
    let mut y_full = Vec::with_capacity(m_total);
    y_full.extend_from_slice(&solution.row_duals);
    y_full.extend_from_slice(&solution.bound_duals);

    // Active-set guess: dual sign, or primal proximity to a bound at the
    // row's own convergence tolerance. The proximity criterion catches
    // degenerate rows whose multiplier converged to zero while the
    // constraint binds (weak complementarity); over-inclusion is corrected
    // by the sign-drop loop below.
    let row_tol = |bound: f64, z: f64| {
        10.0 * (ws.settings.abs_tol + ws.settings.rel_tol * bound.abs().max(z.abs()).max(1.0))
    };
    let mut active: Vec<(usize, Side)> = Vec::new();
    for r in 0..m_total {
        let z_u = ws.z[r] / ws.e_scale[r];
        let near_lower = ws.l[r].is_finite() && (z_u - ws.l[r]).abs() <= row_tol(ws.l[r], z_u);
        let near_upper = ws.u[r].is_finite() && (ws.u[r] - z_u).abs() <= row_tol(ws.u[r], z_u);
        if ws.l[r] == ws.u[r] && ws.l[r].is_finite() {
            active.push((r, Side::Equality));
        } else if y_full[r] < 0.0 && ws.l[r].is_finite() {
            active.push((r, Side::Lower));
        } else if y_full[r] > 0.0 && ws.u[r].is_finite() {
            active.push((r, Side::Upper));
        } else if near_lower && !near_upper {
            active.push((r, Side::Lower));
        } else if near_upper && !near_lower {
            active.push((r, Side::Upper));
        }
    }

    // Solve the reduced KKT on the guessed active set, then repair the set:
    // re-add the worst-violated row (the guess missed a binding row, or a
    // drop below overshot), else drop the worst sign-violating multiplier
    // (degenerate corners such as a binding budget row together with an
    // expansion at its bound). One change per round, worst-first.
    let debug = std::env::var("GRIDPLAN_POLISH_DEBUG").is_ok();
    let mut rounds = 0usize;
    let mut candidate = None;
    let mut ax = vec![0.0; m_total];
    let mut dropped_once = vec![false; m_total];
    for _round in 0..60 {
        rounds = _round;
        let mut solved = None;
        for &delta in &POLISH_DELTAS {
            match solve_active_kkt(ws, &active, delta) {
                Some(t) if t.1.iter().all(|v| v.abs() <= 1e14) => {
                    solved = Some(t);
                    break;
                }
                _ => continue,
            }
        }
        let Some((x_pol, x_hat, nu)) = solved else {
            if debug {
                eprintln!("  round {rounds}: reduced system broke down at every delta");
            }
            return;
        };
        ws.as_mat.mul(&x_hat, &mut ax);
        let mut adds: Vec<(usize, Side)> = Vec::new();
        for r in 0..m_total {
            let scale = 1.0 + ax[r].abs().max(ws.ls[r].abs().min(ws.us[r].abs()));
            let (viol, side) = if ax[r] < ws.ls[r] {
                ((ws.ls[r] - ax[r]) / scale, Side::Lower)
            } else if ax[r] > ws.us[r] {
                ((ax[r] - ws.us[r]) / scale, Side::Upper)
            } else {
                continue;
            };
            // a row already forced on that side cannot be repaired by
            // re-adding it; what remains there is refinement noise. A row
            // that was dropped for its multiplier sign and violates again
            // marks an add/drop cycle on a degenerate corner: leave it out.
            let already = active.iter().any(|&(ar, aside)| {
                ar == r
                    && matches!(
                        (aside, side),
                        (Side::Equality, _) | (Side::Lower, Side::Lower) | (Side::Upper, Side::Upper)
                    )
            });
            if viol > 1e-8 && !already && !dropped_once[r] {
                adds.push((r, side));
            }
        }
        if !adds.is_empty() {
            if debug {
                let detail: Vec<String> = adds
                    .iter()
                    .take(4)
                    .map(|&(r, side)| {
                        format!(
                            "r{r}{} ax {:.6e} l {:.3e} u {:.3e} already {}",
                            match side {
                                Side::Lower => "lo",
                                Side::Upper => "up",
                                Side::Equality => "eq",
                            },
                            ax[r],
                            ws.ls[r],
                            ws.us[r],
                            active.iter().any(|&(ar, _)| ar == r)
                        )
                    })
                    .collect();
                eprintln!(
                    "  round {rounds}: add {} violated rows [{}]",
                    adds.len(),
                    detail.join("; ")
                );
            }
            for (r, side) in adds {
                if let Some(pos) = active.iter().position(|&(ar, _)| ar == r) {
                    active[pos] = (r, side);
                } else {
                    active.push((r, side));
                }
            }
            active.sort_by_key(|&(ar, _)| ar);
            continue;
        }
        let sign_tol = 1e-9 * nu.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut worst_drop: Option<(f64, usize)> = None;
        for (k, &(_, side)) in active.iter().enumerate() {
            let excess = match side {
                Side::Equality => 0.0,
                Side::Lower => nu[k],
                Side::Upper => -nu[k],
            };
            if excess > sign_tol && worst_drop.map_or(true, |(w, _)| excess > w) {
                worst_drop = Some((excess, k));
            }
        }
        match worst_drop {
            Some((excess, k)) => {
                if debug {
                    eprintln!(
                        "  round {rounds}: drop row {} excess {excess:.3e}",
                        active[k].0
                    );
                }
                dropped_once[active[k].0] = true;
                active.remove(k);
            }
            None => {
                candidate = Some((x_pol, nu));
                break;
            }
        }
    }
    let Some((x_pol, nu)) = candidate else {
        if debug {
            eprintln!("polish: no candidate after {rounds} repair rounds");
        }
        return;
    };
    let mut y_pol = vec![0.0; m_total];
    for (k, &(r, _)) in active.iter().enumerate() {
        y_pol[r] = nu[k] * ws.e_scale[r] / ws.c_scale;
    }

    let (rp_new, rd_new) = unscaled_residuals(ws, &x_pol, &y_pol);
    if require_converged {
        let (ratio_p, ratio_d) = candidate_ratios(ws, &x_pol, &y_pol);
        if debug {
            eprintln!(
                "polish: {} active after {rounds} rounds, ratios p {ratio_p:.3e} d {ratio_d:.3e}, raw rp {rp_new:.3e} rd {rd_new:.3e}",
                active.len()
            );
        }
        if ratio_p > 1.0 || ratio_d > 1.0 {
            return;
        }
    } else {
        let old_worst = solution.residuals.primal.max(solution.residuals.dual);
        if rp_new.max(rd_new) >= old_worst {
            return;
        }
    }

    // adopt the polished point; also feed it back into the iterates so later
    // warm starts resume from the refined solution
    for i in 0..n {
        ws.x[i] = x_pol[i] / ws.d_scale[i];
    }
    let mut ax = vec![0.0; m_total];
    ws.a.mul(&x_pol, &mut ax);
    for r in 0..m_total {
        ws.y[r] = y_pol[r] * ws.c_scale / ws.e_scale[r];
        ws.z[r] = (ax[r].clamp(ws.l[r], ws.u[r])) * ws.e_scale[r];
    }

    solution.primal = x_pol;
    solution.row_duals = y_pol[..m_rows].to_vec();
    solution.bound_duals = y_pol[m_rows..].to_vec();
    solution.objective = -ws.objective_min(&solution.primal) + ws.constant;
    let gap = ws.duality_gap(&solution.primal, &y_pol);
    solution.residuals.primal = rp_new;
    solution.residuals.dual = rd_new;
    solution.residuals.gap = gap;
    solution.polished = true;
}

/// Solves the equality-reduced KKT system for the given active set on the
/// scaled data, with static regularization and iterative refinement against
/// the unregularized system. Returns the unscaled primal point, the scaled
/// primal point and the scaled active-row multipliers, or None on numerical
/// breakdown.
fn solve_active_kkt(
    ws: &Workspace,
    active: &[(usize, Side)],
    delta: f64,
) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (n, _, _) = ws.dims();
    let n_act = active.len();
    let dim = n + n_act;

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        triplets.push((i, i, ws.ps_diag[i] + delta));
    }
    for (k, &(r, _)) in active.iter().enumerate() {
        let (cols, vals) = ws.as_mat.row(r);
        for (c, v) in cols.iter().zip(vals) {
            triplets.push((*c, n + k, *v));
        }
        triplets.push((n + k, n + k, -delta));
    }
    let (kkt, _) = SymCsc::from_triplets(dim, &triplets);
    let mut signs = vec![1i8; n];
    signs.extend(vec![-1i8; n_act]);
    let mut factor = LdlFactor::new(&kkt, &signs);
    factor.refactor(&kkt, delta.max(1e-12));

    let mut rhs = vec![0.0; dim];
    for i in 0..n {
        rhs[i] = -ws.qs[i];
    }
    for (k, &(r, side)) in active.iter().enumerate() {
        rhs[n + k] = match side {
            Side::Lower | Side::Equality => ws.ls[r],
            Side::Upper => ws.us[r],
        };
    }

    let apply_unregularized = |t: &[f64], out: &mut [f64]| {
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for i in 0..n {
            out[i] += ws.ps_diag[i] * t[i];
        }
        for (k, &(r, _)) in active.iter().enumerate() {
            let (cols, vals) = ws.as_mat.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * t[*c];
                out[*c] += v * t[n + k];
            }
            out[n + k] += acc;
        }
    };

    let rhs_norm = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut t = rhs.clone();
    factor.solve(&mut t);
    let mut residual = vec![0.0; dim];
    let mut last_norm = f64::INFINITY;
    for _ in 0..REFINE_STEPS {
        apply_unregularized(&t, &mut residual);
        for i in 0..dim {
            residual[i] = rhs[i] - residual[i];
        }
        let norm = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm <= 1e-14 * (1.0 + rhs_norm) || norm >= last_norm {
            break;
        }
        last_norm = norm;
        let mut corr = residual.clone();
        factor.solve(&mut corr);
        for i in 0..dim {
            t[i] += corr[i];
        }
    }
    if t.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x_pol: Vec<f64> = (0..n).map(|i| t[i] * ws.d_scale[i]).collect();
    let x_hat: Vec<f64> = t[..n].to_vec();
    let nu: Vec<f64> = t[n..].to_vec();
    Some((x_pol, x_hat, nu))
}

/// Worst per-row primal and per-coordinate dual residuals of an (x, y)
/// candidate, each relative to its own tolerance; <= 1 means converged.
fn candidate_ratios(ws: &Workspace, x: &[f64], y_full: &[f64]) -> (f64, f64) {
    let (n, _, m_total) = ws.dims();
    let abs_tol = ws.settings.abs_tol;
    let rel_tol = ws.settings.rel_tol;
    let mut ax = vec![0.0; m_total];
    ws.a.mul(x, &mut ax);
    let mut ratio_p: f64 = 0.0;
    for r in 0..m_total {
        let z = ax[r].clamp(ws.l[r], ws.u[r]);
        let res = (ax[r] - z).abs();
        let tol = abs_tol + rel_tol * ax[r].abs().max(z.abs());
        ratio_p = ratio_p.max(res / tol);
    }
    let mut aty = vec![0.0; n];
    ws.a.mul_transpose_add(y_full, &mut aty);
    let mut ratio_d: f64 = 0.0;
    for i in 0..n {
        let px = ws.p_diag[i] * x[i];
        let res = (px + ws.q_lin[i] + aty[i]).abs();
        let tol = abs_tol + rel_tol * px.abs().max(aty[i].abs()).max(ws.q_lin[i].abs());
        ratio_d = ratio_d.max(res / tol);
    }
    (ratio_p, ratio_d)
}

/// Residuals of an (x, y) pair on the original, unscaled data.
fn unscaled_residuals(ws: &Workspace, x: &[f64], y_full: &[f64]) -> (f64, f64) {
    let (n, _, m_total) = ws.dims();
    let mut ax = vec![0.0; m_total];
    ws.a.mul(x, &mut ax);
    let mut rp: f64 = 0.0;
    for r in 0..m_total {
        let viol = (ws.l[r] - ax[r]).max(ax[r] - ws.u[r]).max(0.0);
        rp = rp.max(viol);
    }
    let mut aty = vec![0.0; n];
    ws.a.mul_transpose_add(y_full, &mut aty);
    let mut rd: f64 = 0.0;
    for i in 0..n {
        rd = rd.max((ws.p_diag[i] * x[i] + ws.q_lin[i] + aty[i]).abs());
    }
    (rp, rd)
}
