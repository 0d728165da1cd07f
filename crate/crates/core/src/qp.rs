//! Primal active-set solver for small strictly convex quadratic programs
//! `min ½x'Qx − c'x  s.t.  Gx ≤ r`, started from the feasible point `x = 0`.

use nalgebra::{DMatrix, DVector};

/// Solves the QP; requires `r ≥ 0` up to rounding so that `x = 0` is feasible.
pub(crate) fn solve(q: &DMatrix<f64>, c: &DVector<f64>, g: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let p = q.nrows();
    let k = g.nrows();
    let mut x = DVector::zeros(p);
    let mut work: Vec<usize> = Vec::new();
    let scale = 1.0 + c.amax();
    for _ in 0..(20 * (p + k) + 20) {
        let (step, mult) = eqp(q, c, g, &x, &work);
        if step.amax() <= 1e-14 * (1.0 + x.amax()) * scale.max(1.0) {
            // Stationary on the working set: drop the most negative multiplier.
            let worst = mult
                .iter()
                .enumerate()
                .filter(|(_, m)| **m < -1e-12 * scale)
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap());
            match worst {
                Some((j, _)) => {
                    work.remove(j);
                }
                None => return x,
            }
            continue;
        }
        let mut t = 1.0;
        let mut blocking = None;
        for i in 0..k {
            if work.contains(&i) {
                continue;
            }
            let gp: f64 = (0..p).map(|j| g[(i, j)] * step[j]).sum();
            if gp > 1e-15 * step.amax() * g.row(i).amax() {
                let slack = (r[i] - (0..p).map(|j| g[(i, j)] * x[j]).sum::<f64>()).max(0.0);
                let ti = slack / gp;
                if ti < t {
                    t = ti;
                    blocking = Some(i);
                }
            }
        }
        x += t * &step;
        if let Some(i) = blocking {
            work.push(i);
        }
    }
    x
}

/// Equality-constrained step from `x` on the working set, with multipliers.
fn eqp(q: &DMatrix<f64>, c: &DVector<f64>, g: &DMatrix<f64>, x: &DVector<f64>, work: &[usize]) -> (DVector<f64>, Vec<f64>) {
    let p = q.nrows();
    let w = work.len();
    let rhs_top = c - q * x;
    if w == 0 {
        let step = q
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&rhs_top))
            .unwrap_or_else(|| pinv_solve(q.clone(), &rhs_top));
        return (step, Vec::new());
    }
    let mut kkt = DMatrix::zeros(p + w, p + w);
    kkt.view_mut((0, 0), (p, p)).copy_from(q);
    for (j, &i) in work.iter().enumerate() {
        for col in 0..p {
            kkt[(p + j, col)] = g[(i, col)];
            kkt[(col, p + j)] = g[(i, col)];
        }
    }
    let mut rhs = DVector::zeros(p + w);
    rhs.rows_mut(0, p).copy_from(&rhs_top);
    let sol = kkt.clone().lu().solve(&rhs).filter(|s| s.iter().all(|v| v.is_finite())).unwrap_or_else(|| pinv_solve(kkt, &rhs));
    let step = sol.rows(0, p).into_owned();
    let mult = sol.rows(p, w).iter().copied().collect();
    (step, mult)
}

fn pinv_solve(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max();
    svd.solve(b, tol).unwrap_or_else(|_| DVector::zeros(b.len()))
}
