//! Brute-force reference implementations for tests and self-checks.
//!
//! Nothing here calls into the solver modules; everything is written
//! directly against nalgebra so that agreement is meaningful.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    pub fd_step: f64,
    pub grid_resolution: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            fd_step: 1e-6,
            grid_resolution: 1e-3,
            trials: 50,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fd_step > 0.0) {
            return Err(Error::InvalidArgument("fd_step must be positive".into()));
        }
        if !(self.grid_resolution > 0.0) {
            return Err(Error::InvalidArgument("grid_resolution must be positive".into()));
        }
        Ok(())
    }
}

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, q: &DVector<f64>, step: f64) -> Result<DVector<f64>> {
    let mut x = q.clone();
    let mut g = DVector::zeros(q.len());
    for i in 0..q.len() {
        x[i] = q[i] + step;
        let fp = f(&x);
        x[i] = q[i] - step;
        let fm = f(&x);
        x[i] = q[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("function value near component {i}")));
        }
        g[i] = (fp - fm) / (2.0 * step);
    }
    Ok(g)
}

/// Central-difference Jacobian of a vector function.
pub fn fd_jacobian(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    step: f64,
) -> Result<DMatrix<f64>> {
    let m = f(x).len();
    let mut xp = x.clone();
    let mut jac = DMatrix::zeros(m, x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + step;
        let fp = f(&xp);
        xp[i] = x[i] - step;
        let fm = f(&xp);
        xp[i] = x[i];
        let col = (fp - fm) / (2.0 * step);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("function value near component {i}")));
        }
        jac.set_column(i, &col);
    }
    Ok(jac)
}

/// Time-varying LQ tracking problem
/// `Σ_{t=0..N} (x_t − d_t)ᵀQ_t(x_t − d_t) + Σ_{t<N} u_tᵀR_t u_t`
/// with `x_{t+1} = A_t x_t + B_t u_t` and `x_0` fixed.
#[derive(Clone, Debug)]
pub struct LqProblem {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub x_d: Vec<DVector<f64>>,
    pub x0: DVector<f64>,
}

impl LqProblem {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }
}

/// Backward Riccati recursion with an affine term, then a forward pass.
pub fn dp_lqr(p: &LqProblem) -> Result<Vec<DVector<f64>>> {
    let n = p.horizon();
    if p.b.len() != n || p.r.len() != n || p.q.len() != n + 1 || p.x_d.len() != n + 1 {
        return Err(Error::InvalidArgument("inconsistent LQ horizon lengths".into()));
    }
    let mut big_p = p.q[n].clone();
    let mut s = &p.q[n] * &p.x_d[n];
    let mut gains = Vec::with_capacity(n);
    for t in (0..n).rev() {
        let (a, b) = (&p.a[t], &p.b[t]);
        let g = &p.r[t] + b.transpose() * &big_p * b;
        let chol = g
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotSpd("R + BᵀPB in Riccati recursion".into()))?;
        let bpa = b.transpose() * &big_p * a;
        let k = chol.solve(&bpa);
        let kff = chol.solve(&(b.transpose() * &s));
        let new_p = &p.q[t] + a.transpose() * &big_p * a - bpa.transpose() * &k;
        let new_s = &p.q[t] * &p.x_d[t] + a.transpose() * &s - bpa.transpose() * &kff;
        big_p = (&new_p + new_p.transpose()) * 0.5;
        s = new_s;
        gains.push((k, kff));
    }
    gains.reverse();
    let mut x = p.x0.clone();
    let mut u_out = Vec::with_capacity(n);
    for (t, (k, kff)) in gains.iter().enumerate() {
        let u = kff - k * &x;
        x = &p.a[t] * &x + &p.b[t] * &u;
        u_out.push(u);
    }
    Ok(u_out)
}

/// Nearest feasible point of a regular grid over `bounds`, by Euclidean
/// distance. Ties keep the lexicographically first grid point.
pub fn grid_project(
    point: &[f64],
    feasible: impl Fn(&[f64]) -> bool,
    bounds: &[(f64, f64)],
    resolution: f64,
) -> Result<DVector<f64>> {
    if bounds.len() != point.len() {
        return Err(Error::DimensionMismatch {
            what: "grid bounds",
            expected: point.len(),
            got: bounds.len(),
        });
    }
    if !(resolution > 0.0) || bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::InvalidArgument("invalid grid".into()));
    }
    let counts: Vec<usize> = bounds
        .iter()
        .map(|(lo, hi)| ((hi - lo) / resolution).floor() as usize + 1)
        .collect();
    let d = point.len();
    let mut idx = vec![0usize; d];
    let mut cand = vec![0.0; d];
    let mut best: Option<(f64, Vec<f64>)> = None;
    loop {
        for i in 0..d {
            cand[i] = bounds[i].0 + idx[i] as f64 * resolution;
        }
        if feasible(&cand) {
            let dist: f64 = cand.iter().zip(point).map(|(c, p)| (c - p) * (c - p)).sum();
            if best.as_ref().is_none_or(|(b, _)| dist < *b) {
                best = Some((dist, cand.clone()));
            }
        }
        // odometer with the last index fastest keeps lexicographic order
        let mut i = d;
        loop {
            if i == 0 {
                return best
                    .map(|(_, p)| DVector::from_vec(p))
                    .ok_or_else(|| Error::InvalidArgument("no feasible grid point".into()));
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < counts[i] {
                break;
            }
            idx[i] = 0;
        }
    }
}
