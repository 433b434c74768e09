//! Augmented permanental kernels on LIL grids and their M-matrix algebra.
//!
//! For a symmetric Gram matrix `G` on the grid `t'_0 < … < t'_m` and
//! excessive functions `f`, `g` the augmented kernel is
//!
//! ```text
//! K = [ 1   fᵀ      ]        A = K⁻¹ = [ 1+ρ   −vᵀ ]
//!     [ g   G + gfᵀ ]                  [ −r    G⁻¹ ]
//! ```
//!
//! with `r = G⁻¹g`, `v = G⁻¹f`, `ρ = vᵀg`. Symmetrizing the off-diagonal
//! pairs of `A` replaces `r`, `v` by `h = √(v∘r)`; its determinant ratio is
//! `ν = 1 + ρ − hᵀGh`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excessive::Excessive;
use crate::linalg::{dot, inverse_with_condition, max_condition, Lu, Matrix};
use crate::potential::SymmetricPotential;
use crate::quadrature::adaptive;
use crate::scalar::{from_usize, lit, to_f64, Scalar};

/// Largest grid size accepted.
pub const MAX_GRID: usize = 200;
/// Sign tolerance for the M-matrix checks, after diagonal scaling.
pub const SIGN_TOL: f64 = 1e-10;

/// Geometric LIL grid `t'_j = d + θ^{n+1−j}`, `j = 1..m(n)`, plus `t'_0 = d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d: f64,
    pub theta: f64,
    pub n: usize,
    pub q: f64,
}

impl GridSpec {
    pub fn new(d: f64, theta: f64, n: usize, q: f64) -> Self {
        GridSpec { d, theta, n, q }
    }

    /// `m(n) = n + 1 − ⌊n^q⌋`.
    pub fn m(&self) -> usize {
        let fl = ((self.n as f64).powf(self.q) + 1e-9).floor() as usize;
        self.n + 1 - fl.min(self.n)
    }

    /// Offsets `t_j = θ^{n+1−j}` for `j = 1..m`.
    pub fn offsets<T: Scalar>(&self) -> Vec<T> {
        let theta = lit::<T>(self.theta);
        (1..=self.m()).map(|j| theta.powi((self.n + 1 - j) as i32)).collect()
    }

    /// `[t'_0, …, t'_m]`, strictly increasing.
    pub fn build_grid<T: Scalar>(&self) -> Result<Vec<T>> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::domain("grid needs θ in (0, 1)"));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::domain("grid needs q in (0, 1)"));
        }
        if self.n == 0 {
            return Err(Error::domain("grid needs n ≥ 1"));
        }
        let m = self.m();
        if m + 1 > MAX_GRID {
            return Err(Error::domain(format!("grid has {} points, more than {}", m + 1, MAX_GRID)));
        }
        let offsets = self.offsets::<T>();
        let t_m = *offsets.last().unwrap();
        let cap = lit::<T>((-std::f64::consts::E).exp());
        if t_m > cap {
            return Err(Error::domain(format!("t_m(n) = {} exceeds e^(-e) ≈ 0.06599", t_m)));
        }
        let d = lit::<T>(self.d);
        let mut pts = vec![d];
        for t in offsets {
            let p = d + t;
            if !(p > *pts.last().unwrap()) {
                return Err(Error::domain(format!(
                    "grid point d + {} is not distinct from its predecessor at this precision",
                    t
                )));
            }
            pts.push(p);
        }
        Ok(pts)
    }
}

/// Tridiagonal inverse of `min(t_j, t_k)` for strictly increasing positive `t`.
///
/// With `a_0 = 1/t_0` and `a_j = 1/(t_j − t_{j−1})` the diagonal is
/// `a_j + a_{j+1}` (`a_m` in the last row) and the off-diagonal is `−a_{j+1}`.
pub fn min_kernel_inverse<T: Scalar>(t: &[T]) -> Result<Matrix<T>> {
    if t.is_empty() {
        return Err(Error::domain("empty point list"));
    }
    if !(t[0] > T::zero()) {
        return Err(Error::domain("min kernel inverse needs t_0 > 0"));
    }
    let mut inc = vec![t[0]];
    for w in t.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::domain("points must be strictly increasing"));
        }
        inc.push(w[1] - w[0]);
    }
    Ok(tridiagonal_from_increments(&inc))
}

fn tridiagonal_from_increments<T: Scalar>(inc: &[T]) -> Matrix<T> {
    let n = inc.len();
    let a: Vec<T> = inc.iter().map(|&d| T::one() / d).collect();
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        let next = if j + 1 < n { a[j + 1] } else { T::zero() };
        m[(j, j)] = a[j] + next;
        if j + 1 < n {
            m[(j, j + 1)] = -a[j + 1];
            m[(j + 1, j)] = -a[j + 1];
        }
    }
    m
}

/// How `G⁻¹` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseMethod {
    /// Full-pivot LU with refined solves.
    Dense,
    /// Exact tridiagonal form for product kernels `P(x∧y)Q(x∨y)`, with
    /// increments of `P/Q` and `f/Q` integrated from their derivatives.
    Structured,
}

/// The augmented kernel and the Gram-matrix solves it depends on.
#[derive(Debug, Clone)]
pub struct AugmentedKernel<T: Scalar> {
    pub points: Vec<T>,
    pub g_mat: Matrix<T>,
    pub g_inv: Matrix<T>,
    pub fvec: Vec<T>,
    pub gvec: Vec<T>,
    pub k: Matrix<T>,
    /// `G⁻¹g`.
    pub r: Vec<T>,
    /// `G⁻¹f`.
    pub v: Vec<T>,
    pub condition: T,
    pub method: InverseMethod,
    /// Set when `f(d)` or `g(d)` vanishes; only meaningful as a test mode.
    pub degenerate: bool,
}

/// Structured data for product-form Gram matrices.
struct ProductForm<T> {
    q: Vec<T>,
    /// `ρ_0` followed by increments `ρ_k − ρ_{k−1}` of `ρ = P/Q`.
    rho_inc: Vec<T>,
}

fn integrate_small<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T, breaks: &[T]) -> Result<T> {
    let mut cuts = vec![a];
    for &c in breaks {
        if c > a && c < b {
            cuts.push(c);
        }
    }
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut total = T::zero();
    for w in cuts.windows(2) {
        let abs_tol = lit::<T>(1e-15) * (w[1] - w[0]);
        total = total + adaptive(f, w[0], w[1], abs_tol, lit(1e-12), 2000)?.value;
    }
    Ok(total)
}

impl<T: Scalar> ProductForm<T> {
    fn new(u: &SymmetricPotential<T>, pts: &[T]) -> Result<Option<Self>> {
        if u.pq_factors(pts[0]).is_none() {
            return Ok(None);
        }
        let fac = |x: T| u.pq_factors(x).unwrap();
        let q: Vec<T> = pts.iter().map(|&x| fac(x).1.v).collect();
        let (p0, q0) = fac(pts[0]);
        let mut rho_inc = vec![p0.v / q0.v];
        let rho_prime = |x: T| {
            let (p, q) = fac(x);
            (p.d1 * q.v - p.v * q.d1) / (q.v * q.v)
        };
        for w in pts.windows(2) {
            rho_inc.push(integrate_small(&rho_prime, w[0], w[1], &[])?);
        }
        if rho_inc.iter().any(|&d| !(d > T::zero())) {
            return Err(Error::Singular("P/Q is not strictly increasing on the grid".into()));
        }
        Ok(Some(ProductForm { q, rho_inc }))
    }

    fn inverse(&self) -> Matrix<T> {
        let t = tridiagonal_from_increments(&self.rho_inc);
        let n = self.q.len();
        Matrix::from_fn(n, n, |i, j| t[(i, j)] / (self.q[i] * self.q[j]))
    }

    /// `G⁻¹ f` from `w_0 = f(t_0)/Q(t_0)` and increments of `w = f/Q`.
    fn solve(&self, w0: T, w_inc: &[T]) -> Vec<T> {
        let n = self.q.len();
        let a: Vec<T> = self.rho_inc.iter().map(|&d| T::one() / d).collect();
        let mut dw = vec![w0];
        dw.extend_from_slice(w_inc);
        (0..n)
            .map(|k| {
                let next = if k + 1 < n { a[k + 1] * dw[k + 1] } else { T::zero() };
                (a[k] * dw[k] - next) / self.q[k]
            })
            .collect()
    }

    fn excessive_increments(&self, e: &Excessive<T>, pts: &[T]) -> Result<(T, Vec<T>)> {
        let u = &e.base;
        let w0 = e.eval(pts[0])? / self.q[0];
        let breaks = e.breakpoints();
        let integrand = |x: T| {
            let (_, q) = u.pq_factors(x).unwrap();
            let f = e.eval(x).unwrap_or(T::nan());
            let f1 = e.eval_deriv(x).unwrap_or(T::nan());
            (f1 * q.v - f * q.d1) / (q.v * q.v)
        };
        let mut inc = Vec::with_capacity(pts.len() - 1);
        for w in pts.windows(2) {
            let d = integrate_small(&integrand, w[0], w[1], &breaks)?;
            if !d.is_finite() {
                return Err(Error::invalid("excessive function has no derivative on the grid"));
            }
            inc.push(d);
        }
        Ok((w0, inc))
    }
}

fn assemble_k<T: Scalar>(g_mat: &Matrix<T>, fvec: &[T], gvec: &[T]) -> Matrix<T> {
    let n = fvec.len();
    Matrix::from_fn(n + 1, n + 1, |i, j| match (i, j) {
        (0, 0) => T::one(),
        (0, j) => fvec[j - 1],
        (i, 0) => gvec[i - 1],
        (i, j) => g_mat[(i - 1, j - 1)] + gvec[i - 1] * fvec[j - 1],
    })
}

impl<T: Scalar> AugmentedKernel<T> {
    /// Assembles `K` for base `u`, excessive `f` (first row) and `g` (first column).
    pub fn assemble(u: &SymmetricPotential<T>, f: &Excessive<T>, g: &Excessive<T>, points: &[T]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("empty grid"));
        }
        let g_mat = u.gram(points)?;
        for i in 0..points.len() {
            for j in 0..points.len() {
                if !(g_mat[(i, j)] > T::zero()) {
                    return Err(Error::domain(format!("u is not strictly positive at grid pair ({}, {})", i, j)));
                }
            }
        }
        let fvec = points.iter().map(|&x| f.eval(x)).collect::<Result<Vec<T>>>()?;
        let gvec = points.iter().map(|&x| g.eval(x)).collect::<Result<Vec<T>>>()?;
        if let Some(pf) = ProductForm::new(u, points)? {
            let g_inv = pf.inverse();
            let condition = g_mat.norm1() * g_inv.norm1();
            if condition > max_condition::<T>() {
                return Err(Error::Singular(format!("Gram matrix condition {:.3e} beyond threshold", to_f64(condition))));
            }
            let (fw0, finc) = pf.excessive_increments(f, points)?;
            let (gw0, ginc) = pf.excessive_increments(g, points)?;
            let v = pf.solve(fw0, &finc);
            let r = pf.solve(gw0, &ginc);
            return Self::finish(points, g_mat, g_inv, fvec, gvec, r, v, condition, InverseMethod::Structured);
        }
        Self::from_values(points, g_mat, fvec, gvec)
    }

    /// Assembles `K` from a Gram matrix and function values with dense solves.
    pub fn from_values(points: &[T], g_mat: Matrix<T>, fvec: Vec<T>, gvec: Vec<T>) -> Result<Self> {
        let n = g_mat.rows();
        if !g_mat.is_square() || fvec.len() != n || gvec.len() != n || points.len() != n {
            return Err(Error::invalid("dimension mismatch between G, f and g"));
        }
        let (g_inv, condition) = inverse_with_condition(&g_mat)?;
        if condition > max_condition::<T>() {
            return Err(Error::Singular(format!("Gram matrix condition {:.3e} beyond threshold", to_f64(condition))));
        }
        let lu = Lu::new(&g_mat)?;
        let r = lu.solve_refined(&g_mat, &gvec, 2)?;
        let v = lu.solve_refined(&g_mat, &fvec, 2)?;
        Self::finish(points, g_mat, g_inv, fvec, gvec, r, v, condition, InverseMethod::Dense)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        points: &[T],
        g_mat: Matrix<T>,
        g_inv: Matrix<T>,
        fvec: Vec<T>,
        gvec: Vec<T>,
        r: Vec<T>,
        v: Vec<T>,
        condition: T,
        method: InverseMethod,
    ) -> Result<Self> {
        if fvec.iter().chain(gvec.iter()).any(|&x| x < T::zero()) {
            return Err(Error::NotExcessive("f or g is negative on the grid".into()));
        }
        let degenerate = !(fvec[0] > T::zero() && gvec[0] > T::zero());
        let k = assemble_k(&g_mat, &fvec, &gvec);
        Ok(AugmentedKernel { points: points.to_vec(), g_mat, g_inv, fvec, gvec, k, r, v, condition, method, degenerate })
    }

    /// `det K / det G` by independent LU factorizations.
    pub fn det_ratio(&self) -> Result<T> {
        let lk = Lu::new(&self.k)?;
        let lg = Lu::new(&self.g_mat)?;
        let sign = lk.det().signum() * lg.det().signum();
        Ok(sign * (lk.log_abs_det() - lg.log_abs_det()).exp())
    }

    /// `A = K⁻¹` from the block formula.
    pub fn a_matrix(&self) -> Matrix<T> {
        let n = self.fvec.len();
        let rho = dot(&self.v, &self.gvec);
        Matrix::from_fn(n + 1, n + 1, |i, j| match (i, j) {
            (0, 0) => T::one() + rho,
            (0, j) => -self.v[j - 1],
            (i, 0) => -self.r[i - 1],
            (i, j) => self.g_inv[(i - 1, j - 1)],
        })
    }

    /// Computes `r`, `v`, `ρ`, `h`, `ν`, `a`, `A_sym` and `K_isymi`.
    pub fn decompose(&self) -> Result<IsymiDecomposition<T>> {
        let tol = lit::<T>(SIGN_TOL);
        for (name, vec) in [("r", &self.r), ("v", &self.v)] {
            if let Some((j, x)) = vec.iter().enumerate().find(|(_, &x)| x < -tol) {
                return Err(Error::NotExcessive(format!("{}_{} = {:e} is negative", name, j, to_f64(*x))));
            }
        }
        let n = self.fvec.len();
        let rho = dot(&self.v, &self.gvec);
        let rho_sym = self.g_mat.bilinear(&self.v, &self.r);
        let h: Vec<T> = self.v.iter().zip(&self.r).map(|(&a, &b)| (a * b).max(T::zero()).sqrt()).collect();
        let gh = self.g_mat.matvec(&h);
        let nu = T::one() + rho - dot(&h, &gh);
        let a: Vec<T> = gh.iter().map(|&x| x / nu.sqrt()).collect();
        let a_sym = Matrix::from_fn(n + 1, n + 1, |i, j| match (i, j) {
            (0, 0) => T::one() + rho,
            (0, j) => -h[j - 1],
            (i, 0) => -h[i - 1],
            (i, j) => self.g_inv[(i - 1, j - 1)],
        });
        let inv_nu = T::one() / nu;
        let k_isymi = Matrix::from_fn(n + 1, n + 1, |i, j| match (i, j) {
            (0, 0) => inv_nu,
            (0, j) => inv_nu * gh[j - 1],
            (i, 0) => inv_nu * gh[i - 1],
            (i, j) => self.g_mat[(i - 1, j - 1)] + inv_nu * gh[i - 1] * gh[j - 1],
        });
        Ok(IsymiDecomposition {
            r: self.r.clone(),
            v: self.v.clone(),
            rho,
            rho_sym,
            h,
            nu,
            a,
            a_mat: self.a_matrix(),
            a_sym,
            k_isymi,
        })
    }
}

/// Output of [`AugmentedKernel::decompose`].
#[derive(Debug, Clone)]
pub struct IsymiDecomposition<T: Scalar> {
    pub r: Vec<T>,
    pub v: Vec<T>,
    /// `Σ v_j g(t'_j)`.
    pub rho: T,
    /// `vᵀ G r`, equal to `ρ` in exact arithmetic.
    pub rho_sym: T,
    pub h: Vec<T>,
    pub nu: T,
    /// `ν^{−1/2} (Gh)`.
    pub a: Vec<T>,
    pub a_mat: Matrix<T>,
    pub a_sym: Matrix<T>,
    pub k_isymi: Matrix<T>,
}

/// Largest `a_ij / a_ii` over `i ≠ j`; a Z-matrix has this `≤ 0`.
pub fn z_violation<T: Scalar>(a: &Matrix<T>) -> T {
    let mut worst = T::neg_infinity();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            if i != j {
                worst = worst.max(a[(i, j)] / a[(i, i)].abs());
            }
        }
    }
    worst
}

/// Largest `−b_ij / √(b_ii b_jj)`; an entrywise non-negative matrix has this `≤ 0`.
pub fn negativity<T: Scalar>(b: &Matrix<T>) -> T {
    let mut worst = T::neg_infinity();
    for i in 0..b.rows() {
        for j in 0..b.cols() {
            let scale = (b[(i, i)].abs() * b[(j, j)].abs()).sqrt().max(T::min_positive_value());
            worst = worst.max(-b[(i, j)] / scale);
        }
    }
    worst
}

/// Sign checks of the M-matrix closure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MMatrixReport {
    pub a_offdiag: f64,
    pub a_inverse_negativity: f64,
    pub a_sym_offdiag: f64,
    pub k_isymi_negativity: f64,
    pub ok: bool,
}

impl<T: Scalar> IsymiDecomposition<T> {
    pub fn mmatrix_report(&self, kernel: &AugmentedKernel<T>) -> MMatrixReport {
        let a_offdiag = to_f64(z_violation(&self.a_mat));
        let a_inverse_negativity = to_f64(negativity(&kernel.k));
        let a_sym_offdiag = to_f64(z_violation(&self.a_sym));
        let k_isymi_negativity = to_f64(negativity(&self.k_isymi));
        let ok = [a_offdiag, a_inverse_negativity, a_sym_offdiag, k_isymi_negativity].iter().all(|&x| x <= SIGN_TOL);
        MMatrixReport { a_offdiag, a_inverse_negativity, a_sym_offdiag, k_isymi_negativity, ok }
    }

    /// Largest entrywise gap between `K_isymi[1.., 1..]` and `G + ν⁻¹(Gh)(hG)`
    /// with `K_isymi` obtained by inverting `A_sym` densely.
    pub fn isymi_dense_gap(&self) -> Result<T> {
        let (inv, _) = inverse_with_condition(&self.a_sym)?;
        Ok(inv.sub(&self.k_isymi).max_abs())
    }
}

/// Residuals of the row-sum identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowsumReport {
    /// `|Σ r_j − g(d)/G_00|`.
    pub r_sum: f64,
    /// `|Σ v_j − f(d)/G_00|`.
    pub v_sum: f64,
    /// `|ρ − f(d)g(d)/G_00|`.
    pub rho: f64,
    /// `σ²(t'_m, t'_0)`, the scale the residuals are compared against.
    pub sigma2_tm: f64,
}

pub fn rowsum_check<T: Scalar>(kernel: &AugmentedKernel<T>, dec: &IsymiDecomposition<T>) -> RowsumReport {
    let g00 = kernel.g_mat[(0, 0)];
    let m = kernel.points.len() - 1;
    let sum = |v: &[T]| v.iter().copied().sum::<T>();
    let sigma2 = kernel.g_mat[(m, m)] + g00 - lit::<T>(2.0) * kernel.g_mat[(0, m)];
    RowsumReport {
        r_sum: to_f64((sum(&dec.r) - kernel.gvec[0] / g00).abs()),
        v_sum: to_f64((sum(&dec.v) - kernel.fvec[0] / g00).abs()),
        rho: to_f64((dec.rho - kernel.fvec[0] * kernel.gvec[0] / g00).abs()),
        sigma2_tm: to_f64(sigma2),
    }
}

/// `max_j a_j` against `√(f(d)g(d))`, and the constant `C` with
/// `max a_j = √(f(d)g(d)) + C σ(t_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ABound {
    pub max_a: f64,
    pub sqrt_fg: f64,
    pub fitted_c: f64,
}

pub fn a_bound<T: Scalar>(kernel: &AugmentedKernel<T>, dec: &IsymiDecomposition<T>) -> ABound {
    let rs = rowsum_check(kernel, dec);
    let max_a = dec.a.iter().copied().fold(T::neg_infinity(), T::max);
    let sqrt_fg = (kernel.fvec[0] * kernel.gvec[0]).sqrt();
    let sigma = rs.sigma2_tm.max(0.0).sqrt();
    let excess = to_f64(max_a - sqrt_fg);
    ABound { max_a: to_f64(max_a), sqrt_fg: to_f64(sqrt_fg), fitted_c: if sigma > 0.0 { (excess / sigma).max(0.0) } else { 0.0 } }
}

/// `m · max_{j≠k} |t_k − t_j| / φ(t_j, t_k)` with `φ = σ²/2`: the grid
/// condition of the ν-limit theorem, reported as a diagnostic.
pub fn grid_condition<T: Scalar>(u: &SymmetricPotential<T>, points: &[T]) -> Result<T> {
    let m = from_usize::<T>(points.len() - 1);
    let mut worst = T::zero();
    for j in 0..points.len() {
        for k in (j + 1)..points.len() {
            let phi = lit::<T>(0.5) * u.sigma2(points[j], points[k])?;
            worst = worst.max((points[k] - points[j]).abs() / phi);
        }
    }
    Ok(m * worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{PQPotential, ScalePotential};
    use crate::excessive::{make_flat_pair, ExcessiveKind};
    use crate::expr::Expr;

    #[test]
    fn grid_examples() {
        let g = GridSpec::new(0.0, 0.5, 20, 0.5);
        assert_eq!(g.m(), 17);
        let pts = g.build_grid::<f64>().unwrap();
        assert_eq!(pts.len(), 18);
        assert_eq!(pts[0], 0.0);
        assert_eq!(pts[1], 2f64.powi(-20));
        assert!(GridSpec::new(0.0, 0.5, 4, 0.5).build_grid::<f64>().is_err());
        let pts = GridSpec::new(1.0, 0.3, 30, 0.4).build_grid::<f64>().unwrap();
        assert!(pts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn min_kernel_inverse_examples() {
        let t = min_kernel_inverse(&[1.0f64, 2.0, 3.0]).unwrap();
        assert_eq!(t.to_rows(), vec![vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 1.0]]);
        assert_eq!(min_kernel_inverse(&[0.5f64]).unwrap().to_rows(), vec![vec![2.0]]);
        assert!(min_kernel_inverse(&[1.0f64, 1.0]).is_err());
    }

    #[test]
    fn one_point_kernel() {
        let k = AugmentedKernel::from_values(&[0.0], Matrix::from_rows(&[vec![2.0f64]]), vec![5.0], vec![3.0]).unwrap();
        assert_eq!(k.k.to_rows(), vec![vec![1.0, 5.0], vec![3.0, 17.0]]);
        assert!((k.det_ratio().unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scale_min_kernel_gives_three_halves() {
        let u = SymmetricPotential::Scale(ScalePotential::new(Expr::parse("x").unwrap(), 4.0).unwrap());
        let g = Excessive::new(ExcessiveKind::Const(1.0), u.clone()).unwrap();
        // x ∧ 2 = ½u(x, 2) on the grid
        let f = Excessive::new(ExcessiveKind::Atoms(vec![(2.0, 0.5)]), u.clone()).unwrap();
        let pts = GridSpec::new(1.0, 0.5, 20, 0.5).build_grid::<f64>().unwrap();
        let k = AugmentedKernel::assemble(&u, &f, &g, &pts).unwrap();
        assert_eq!(k.method, InverseMethod::Structured);
        let dec = k.decompose().unwrap();
        assert!((dec.nu - 1.5).abs() < 1e-12, "nu = {}", dec.nu);
    }

    #[test]
    fn symmetric_case_has_unit_nu() {
        let u = SymmetricPotential::PQ(
            PQPotential::new(Expr::parse("exp(x)").unwrap(), Expr::parse("exp(-x)").unwrap(), 0.5, (-3.0, 3.0)).unwrap(),
        );
        let (f, _) = make_flat_pair(0.0, &u).unwrap();
        let pts = GridSpec::new(0.0, 0.5, 16, 0.5).build_grid::<f64>().unwrap();
        let k = AugmentedKernel::assemble(&u, &f, &f, &pts).unwrap();
        let dec = k.decompose().unwrap();
        assert!((dec.nu - 1.0).abs() < 1e-12);
        assert!(dec.mmatrix_report(&k).ok);
    }

    #[test]
    fn structured_and_dense_agree() {
        let u = SymmetricPotential::PQ(
            PQPotential::new(Expr::parse("exp(x)").unwrap(), Expr::parse("exp(-x)").unwrap(), 0.5, (-3.0, 3.0)).unwrap(),
        );
        let (f, g) = make_flat_pair(0.2, &u).unwrap();
        let pts = GridSpec::new(0.2, 0.4, 10, 0.5).build_grid::<f64>().unwrap();
        let s = AugmentedKernel::assemble(&u, &f, &g, &pts).unwrap();
        let d = AugmentedKernel::from_values(&pts, s.g_mat.clone(), s.fvec.clone(), s.gvec.clone()).unwrap();
        for (a, b) in s.r.iter().zip(&d.r) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{} vs {}", a, b);
        }
        let (lu_inv, _) = inverse_with_condition(&s.k).unwrap();
        assert!(lu_inv.sub(&s.a_matrix()).max_abs() < 1e-6 * lu_inv.max_abs());
    }
}
