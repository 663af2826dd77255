//! Closure-backed evaluators with optional analytic derivatives.
//!
//! Every derivative accessor falls back to central finite differences when the
//! caller did not supply the analytic version, so a game can be prototyped with
//! values only and tightened later.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// Central-difference step used for first derivatives.
pub const FD_STEP: f64 = 1e-6;
/// Step used when a second derivative has to be built from function values only.
const FD_STEP_SECOND: f64 = 1e-4;

type ScalarMap = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorMap = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
type MatrixMap = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type WeightedMatrixMap = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;

/// A scalar function `f: R^n -> R` (a player's cost).
#[derive(Clone)]
pub struct ScalarFn {
    value: ScalarMap,
    gradient: Option<VectorMap>,
    hessian: Option<MatrixMap>,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn")
            .field("gradient", &self.gradient.is_some())
            .field("hessian", &self.hessian.is_some())
            .finish()
    }
}

impl ScalarFn {
    pub fn new(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_hessian(
        mut self,
        hessian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(hessian));
        self
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    /// Full gradient, analytic when available.
    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        match &self.gradient {
            Some(g) => g(x),
            None => self.fd_gradient(x, 0..x.len()),
        }
    }

    /// Gradient entries for the coordinates in `rows` only.
    pub fn partial_gradient(&self, x: &[f64], rows: Range<usize>) -> DVector<f64> {
        match &self.gradient {
            Some(g) => g(x).rows(rows.start, rows.len()).into_owned(),
            None => self.fd_gradient(x, rows),
        }
    }

    /// Central-difference gradient over `rows`, ignoring any analytic gradient.
    pub fn fd_gradient(&self, x: &[f64], rows: Range<usize>) -> DVector<f64> {
        let mut xp = x.to_vec();
        let mut out = DVector::zeros(rows.len());
        for (r, j) in rows.enumerate() {
            let orig = xp[j];
            xp[j] = orig + FD_STEP;
            let fp = self.value(&xp);
            xp[j] = orig - FD_STEP;
            let fm = self.value(&xp);
            xp[j] = orig;
            out[r] = (fp - fm) / (2.0 * FD_STEP);
        }
        out
    }

    /// Rows `rows` of the Hessian (all columns).
    pub fn partial_hessian(&self, x: &[f64], rows: Range<usize>) -> DMatrix<f64> {
        if let Some(h) = &self.hessian {
            return h(x).rows(rows.start, rows.len()).into_owned();
        }
        let n = x.len();
        let mut out = DMatrix::zeros(rows.len(), n);
        let mut xp = x.to_vec();
        if self.gradient.is_some() {
            for j in 0..n {
                let orig = xp[j];
                xp[j] = orig + FD_STEP;
                let gp = self.partial_gradient(&xp, rows.clone());
                xp[j] = orig - FD_STEP;
                let gm = self.partial_gradient(&xp, rows.clone());
                xp[j] = orig;
                out.set_column(j, &((gp - gm) / (2.0 * FD_STEP)));
            }
        } else {
            let h = FD_STEP_SECOND;
            let f0 = self.value(x);
            for (r, i) in rows.enumerate() {
                for j in 0..n {
                    let v = if i == j {
                        let orig = xp[i];
                        xp[i] = orig + h;
                        let fp = self.value(&xp);
                        xp[i] = orig - h;
                        let fm = self.value(&xp);
                        xp[i] = orig;
                        (fp - 2.0 * f0 + fm) / (h * h)
                    } else {
                        let (oi, oj) = (xp[i], xp[j]);
                        let mut eval = |di: f64, dj: f64| {
                            xp[i] = oi + di;
                            xp[j] = oj + dj;
                            let v = self.value(&xp);
                            xp[i] = oi;
                            xp[j] = oj;
                            v
                        };
                        let fpp = eval(h, h);
                        let fpm = eval(h, -h);
                        let fmp = eval(-h, h);
                        let fmm = eval(-h, -h);
                        (fpp - fpm - fmp + fmm) / (4.0 * h * h)
                    };
                    out[(r, j)] = v;
                }
            }
        }
        out
    }
}

/// A vector function `c: R^n -> R^m` (constraint block).
#[derive(Clone)]
pub struct VectorFn {
    len: usize,
    value: VectorMap,
    jacobian: Option<MatrixMap>,
    weighted_hessian: Option<WeightedMatrixMap>,
}

impl fmt::Debug for VectorFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFn")
            .field("len", &self.len)
            .field("jacobian", &self.jacobian.is_some())
            .field("weighted_hessian", &self.weighted_hessian.is_some())
            .finish()
    }
}

impl VectorFn {
    /// `len` is the declared output length; evaluators are checked against it.
    pub fn new(len: usize, value: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Self {
            len,
            value: Arc::new(value),
            jacobian: None,
            weighted_hessian: None,
        }
    }

    /// The empty constraint block (`m = 0`).
    pub fn empty() -> Self {
        Self::new(0, |_| DVector::zeros(0))
            .with_jacobian(|x| DMatrix::zeros(0, x.len()))
            .with_weighted_hessian(|x, _| DMatrix::zeros(x.len(), x.len()))
    }

    /// Affine map `x -> A x + b` with exact derivatives.
    pub fn affine(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        assert_eq!(a.nrows(), b.len(), "affine map: A rows must match b");
        let len = b.len();
        let a_val = a.clone();
        Self::new(len, move |x| &a_val * DVector::from_column_slice(x) + &b)
            .with_jacobian(move |_| a.clone())
            .with_weighted_hessian(|x, _| DMatrix::zeros(x.len(), x.len()))
    }

    pub fn with_jacobian(
        mut self,
        jacobian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    /// Supplies `x, w -> sum_j w_j * Hess c_j(x)`.
    pub fn with_weighted_hessian(
        mut self,
        hessian: impl Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.weighted_hessian = Some(Arc::new(hessian));
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn has_weighted_hessian(&self) -> bool {
        self.weighted_hessian.is_some()
    }

    pub fn value(&self, x: &[f64]) -> DVector<f64> {
        (self.value)(x)
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(x),
            None => self.fd_jacobian(x),
        }
    }

    /// Central-difference Jacobian, ignoring any analytic Jacobian.
    pub fn fd_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let mut out = DMatrix::zeros(self.len, n);
        if self.len == 0 {
            return out;
        }
        let mut xp = x.to_vec();
        for j in 0..n {
            let orig = xp[j];
            xp[j] = orig + FD_STEP;
            let cp = self.value(&xp);
            xp[j] = orig - FD_STEP;
            let cm = self.value(&xp);
            xp[j] = orig;
            out.set_column(j, &((cp - cm) / (2.0 * FD_STEP)));
        }
        out
    }

    /// `sum_j w_j * Hess c_j(x)` as an `n x n` matrix.
    pub fn weighted_hessian(&self, x: &[f64], w: &[f64]) -> DMatrix<f64> {
        if let Some(h) = &self.weighted_hessian {
            return h(x, w);
        }
        let n = x.len();
        let mut out = DMatrix::zeros(n, n);
        if self.len == 0 || w.iter().all(|&wj| wj == 0.0) {
            return out;
        }
        let wv = DVector::from_column_slice(w);
        let step = if self.jacobian.is_some() {
            FD_STEP
        } else {
            FD_STEP_SECOND
        };
        let mut xp = x.to_vec();
        for j in 0..n {
            let orig = xp[j];
            xp[j] = orig + step;
            let gp = self.jacobian(&xp).tr_mul(&wv);
            xp[j] = orig - step;
            let gm = self.jacobian(&xp).tr_mul(&wv);
            xp[j] = orig;
            out.set_column(j, &((gp - gm) / (2.0 * step)));
        }
        // FD noise breaks symmetry slightly.
        (&out + out.transpose()) * 0.5
    }
}

/// Largest entrywise `|analytic - reference| / max(1, |reference|)`.
pub fn max_relative_deviation<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::Storage<f64, R, C>>(
    analytic: &nalgebra::Matrix<f64, R, C, S>,
    reference: &nalgebra::Matrix<f64, R, C, S>,
) -> f64 {
    analytic
        .iter()
        .zip(reference.iter())
        .map(|(a, r)| (a - r).abs() / r.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock() -> ScalarFn {
        ScalarFn::new(|x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
    }

    #[test]
    fn fd_gradient_matches_closed_form() {
        let f = rosenbrock();
        let x = [0.3, -0.2];
        let g = f.gradient(&x);
        let exact = [
            -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
            200.0 * (x[1] - x[0] * x[0]),
        ];
        assert!((g[0] - exact[0]).abs() < 1e-6);
        assert!((g[1] - exact[1]).abs() < 1e-6);
    }

    #[test]
    fn value_only_hessian_is_accurate() {
        let f = rosenbrock();
        let x = [0.3, -0.2];
        let h = f.partial_hessian(&x, 0..2);
        let exact = DMatrix::from_row_slice(
            2,
            2,
            &[
                2.0 - 400.0 * (x[1] - 3.0 * x[0] * x[0]),
                -400.0 * x[0],
                -400.0 * x[0],
                200.0,
            ],
        );
        assert!(max_relative_deviation(&h, &exact) < 1e-5);
    }

    #[test]
    fn weighted_hessian_from_fd_jacobian() {
        let c = VectorFn::new(2, |x| DVector::from_vec(vec![x[0] * x[1], x[0].powi(2)]));
        let h = c.weighted_hessian(&[1.0, 2.0], &[2.0, 3.0]);
        let exact = DMatrix::from_row_slice(2, 2, &[6.0, 2.0, 2.0, 0.0]);
        assert!(max_relative_deviation(&h, &exact) < 1e-5);
    }

    #[test]
    fn affine_map_has_exact_derivatives() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let c = VectorFn::affine(a.clone(), DVector::from_element(1, 0.5));
        assert_eq!(c.value(&[2.0, 1.0])[0], 1.5);
        assert_eq!(c.jacobian(&[0.0, 0.0]), a);
        assert_eq!(c.weighted_hessian(&[0.0, 0.0], &[1.0]), DMatrix::zeros(2, 2));
    }
}
