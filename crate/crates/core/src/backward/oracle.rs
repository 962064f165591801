use super::spec::{BackwardSpec, Side, StepOrder};
use crate::error::{Error, Result};
use crate::forward::FieldPath;
use crate::spatial::{apply_a, apply_a_star, BoundaryKind, Field};

const OMEGA: f64 = 1.5;
const TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 200_000;

/// Projected SOR solution of the per-step discrete variational inequality
/// `min((I - θ dt B) Y_k - rhs_k, Y_k - L_k) = 0` (lower side; upper side by
/// symmetry). Assembled from the field-level operator routines rather than
/// the stepping matrices, and solved by plain relaxation sweeps.
///
/// Supports the standard step order with a driverless, singular-free spec.
pub fn psor_oracle(spec: &BackwardSpec) -> Result<FieldPath> {
    spec.validate()?;
    if spec.order != StepOrder::Standard || spec.singular.is_some() || spec.driver.lipschitz() != 0.0 || spec.driver.constant.iter().any(|c| *c != 0.0) {
        return Err(Error::InvalidProblem("the PSOR oracle handles driverless standard-order problems only".into()));
    }
    let sign = if spec.side == Side::Lower { 1.0 } else { -1.0 };
    let g = spec.grid;
    let n = g.n_nodes();
    let dt = spec.time.dt();
    let theta = spec.scheme.theta();
    let op = |f: &Field| if spec.adjoint { apply_a_star(f, &spec.op) } else { apply_a(f, &spec.op) };
    // Row `i` of B restricted to the three stencil nodes, read off by probing.
    let mut stencil = vec![[0.0; 3]; n];
    for (off, col) in [(-1i64, 0usize), (0, 1), (1, 2)] {
        for i in g.interior() {
            let j = i as i64 + off;
            if j < 1 || j as usize > g.n_cells {
                continue;
            }
            let mut e = Field::zeros(g);
            e.values[j as usize] = 1.0;
            stencil[i][col] = op(&e).values[i];
        }
    }
    let bnd = [spec.terminal.values[0], spec.terminal.values[n - 1]];
    // coupling of the outermost interior rows to boundary data (none for adjoint problems)
    let (cl, cr) = if spec.adjoint { (0.0, 0.0) } else { spec.op.boundary_coupling(&g) };
    let couple = |i: usize| -> f64 {
        if i == 1 {
            cl * bnd[0]
        } else if i == g.n_cells {
            cr * bnd[1]
        } else {
            0.0
        }
    };

    let steps = spec.time.n_steps;
    let mut ys = vec![Vec::new(); steps + 1];
    ys[steps] = spec.terminal.values.iter().map(|v| sign * v).collect::<Vec<_>>();
    for k in (0..steps).rev() {
        let next = Field { grid: g, values: ys[k + 1].clone(), boundary: BoundaryKind::DirichletData };
        let mut inner = next.clone();
        inner.values[0] = 0.0;
        inner.values[n - 1] = 0.0;
        let bnext = op(&inner);
        let l: Option<Vec<f64>> = spec.obstacle.at(k).map(|l| l.iter().map(|v| sign * v).collect());
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                if g.is_boundary(i) {
                    return 0.0;
                }
                let b = bnext.values[i] + sign * couple(i);
                next.values[i] + (1.0 - theta) * dt * b + theta * dt * sign * couple(i)
            })
            .collect();
        let mut y = next.values.clone();
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            let mut change: f64 = 0.0;
            for i in g.interior() {
                let [lo, di, up] = stencil[i];
                let diag = 1.0 - theta * dt * di;
                let mut off = 0.0;
                if i > 1 {
                    off -= theta * dt * lo * y[i - 1];
                }
                if i < g.n_cells {
                    off -= theta * dt * up * y[i + 1];
                }
                let gs = (rhs[i] - off) / diag;
                let mut v = y[i] + OMEGA * (gs - y[i]);
                if let Some(l) = &l {
                    v = v.max(l[i]);
                }
                change = change.max((v - y[i]).abs());
                y[i] = v;
            }
            if change <= TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence { step: k, iters: MAX_SWEEPS });
        }
        ys[k] = y;
    }
    let fields = ys
        .into_iter()
        .map(|v| Field { grid: g, values: v.into_iter().map(|x| sign * x).collect(), boundary: BoundaryKind::DirichletData })
        .collect();
    Ok(FieldPath::new(spec.time.times(), fields))
}
