//! Small dense-matrix kernels.
//!
//! Everything here is sized for state dimensions up to about twenty: symmetric
//! eigenvalues come from cyclic Jacobi sweeps, the matrix exponential from
//! Padé scaling-and-squaring, and the continuous Lyapunov equation is solved
//! through its Kronecker-vectorized linear system.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest dimension accepted by the Kronecker Lyapunov solver and by file loaders.
pub const MAX_DIM: usize = 20;

const SYMMETRY_TOL: f64 = 1e-12;
const JACOBI_TOL: f64 = 1e-12;

/// Symmetric positive-definite weight `P`, defining `V(x) = xᵀPx` and `‖x‖_P = √V(x)`.
///
/// The lower Cholesky factor `L` (`P = L·Lᵀ`) is cached; `T = Lᵀ` is the factor
/// used for the weighted norms, `‖x‖_P = ‖T·x‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    p: Matrix,
    chol: Matrix,
}

impl QuadraticForm {
    pub fn new(p: Matrix) -> Result<Self> {
        check_square(&p, "P")?;
        check_finite(&p)?;
        let scale = p.amax().max(1.0);
        let asym = (&p - p.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::Validation(format!(
                "P is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let p = (&p + p.transpose()) * 0.5;
        let chol = nalgebra::Cholesky::new(p.clone())
            .ok_or(Error::NotPositiveDefinite)?
            .unpack();
        Ok(Self { p, chol })
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0).expect("identity is SPD")
    }

    pub fn scaled_identity(n: usize, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        Self::new(Matrix::identity(n, n) * c)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    /// Lower-triangular `L` with `P = L·Lᵀ`.
    pub fn cholesky_factor(&self) -> &Matrix {
        &self.chol
    }

    /// `V(x) = xᵀPx`.
    pub fn eval(&self, x: &Vector) -> f64 {
        x.dot(&(&self.p * x))
    }

    pub fn norm(&self, x: &Vector) -> f64 {
        (self.chol.transpose() * x).norm()
    }

    /// `P·x`.
    pub fn apply(&self, x: &Vector) -> Vector {
        &self.p * x
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        Self::new(&self.p * c)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.p)
    }

    /// `T·M·T⁻¹` with `T = Lᵀ`.
    fn similarity(&self, m: &Matrix) -> Result<Matrix> {
        if m.nrows() != self.dim() || m.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, weight is {}x{}",
                m.nrows(),
                m.ncols(),
                self.dim(),
                self.dim()
            )));
        }
        // X = M·L⁻ᵀ  <=>  L·Xᵀ = Mᵀ
        let xt = self
            .chol
            .solve_lower_triangular(&m.transpose())
            .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
        Ok(self.chol.transpose() * xt.transpose())
    }
}

impl Serialize for QuadraticForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for QuadraticForm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        QuadraticForm::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    if m == 0 || n > MAX_DIM * MAX_DIM || m > MAX_DIM * MAX_DIM {
        return Err(Error::Dimension(format!("unsupported matrix shape {n}x{m}")));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn check_square(a: &Matrix, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "{what} must be square and nonempty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn check_finite(a: &Matrix) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("matrix has non-finite entries".into()))
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(s: &Matrix) -> Result<Vec<f64>> {
    check_square(s, "symmetric matrix")?;
    check_finite(s)?;
    let n = s.nrows();
    let mut a = (s + s.transpose()) * 0.5;
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

fn lambda_max_sym(s: &Matrix) -> Result<f64> {
    Ok(*symmetric_eigenvalues(s)?.last().expect("nonempty"))
}

/// Eigenvalues of a general real matrix (via the real Schur form).
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    check_square(a, "matrix")?;
    check_finite(a)?;
    let mut ev: Vec<Complex<f64>> = a.clone().complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(ev)
}

pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `μ₂(A) = λmax((A + Aᵀ)/2)`.
pub fn log_norm2(a: &Matrix) -> Result<f64> {
    check_square(a, "A")?;
    lambda_max_sym(&((a + a.transpose()) * 0.5))
}

/// Logarithmic norm induced by `‖·‖_P`: `μ₂(T·A·T⁻¹)` with `P = TᵀT`.
pub fn log_norm2_weighted(a: &Matrix, p: &QuadraticForm) -> Result<f64> {
    check_square(a, "A")?;
    log_norm2(&p.similarity(a)?)
}

/// Operator norm induced by `‖·‖_P`: `σmax(T·M·T⁻¹)`.
pub fn operator_norm2_weighted(m: &Matrix, p: &QuadraticForm) -> Result<f64> {
    check_square(m, "M")?;
    let n = p.similarity(m)?;
    Ok(lambda_max_sym(&(n.transpose() * &n))?.max(0.0).sqrt())
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by Padé scaling-and-squaring (degrees 3 through 13).
pub fn expm(a: &Matrix) -> Result<Matrix> {
    check_square(a, "A")?;
    check_finite(a)?;
    let n = a.nrows();
    let id = Matrix::identity(n, n);
    let a_norm = norm1(a);
    if a_norm > 1e6 {
        return Err(Error::Numeric(format!(
            "matrix exponential overflow risk (1-norm {a_norm:.3e})"
        )));
    }
    for &(m, theta) in &THETA {
        if a_norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let a2 = a * a;
            let mut pow = id.clone();
            let mut u = Matrix::zeros(n, n);
            let mut v = Matrix::zeros(n, n);
            for k in (0..=m).step_by(2) {
                v += &pow * coeffs[k];
                u += &pow * coeffs[k + 1];
                pow = &pow * &a2;
            }
            let u = a * u;
            return pade_solve(&u, &v);
        }
    }
    let s = ((a_norm / THETA13).log2().ceil()).max(0.0) as i32;
    let a = a / 2f64.powi(s);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    check_finite(&r)?;
    Ok(r)
}

fn pade_solve(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    let lhs = v - u;
    let rhs = v + u;
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular Padé denominator".into()))
}

/// Solves `AᵀP + PA = −Q` for SPD `P`; `A` must be Hurwitz and `Q` SPD.
pub fn lyapunov_solve(a: &Matrix, q: &Matrix) -> Result<QuadraticForm> {
    check_square(a, "A")?;
    check_finite(a)?;
    let n = a.nrows();
    if n > MAX_DIM {
        return Err(Error::Dimension(format!("Lyapunov solver supports n <= {MAX_DIM}")));
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension("Q must match A".into()));
    }
    QuadraticForm::new(q.clone())?;
    let abscissa = spectral_abscissa(a)?;
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz(abscissa));
    }
    // Column-major vec: vec(AᵀP + PA) = (I⊗Aᵀ + Aᵀ⊗I) vec(P).
    let at = a.transpose();
    let nn = n * n;
    let mut k = Matrix::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = j * n + i;
            for l in 0..n {
                // (I⊗Aᵀ): P[l, j] contributes Aᵀ[i, l]
                k[(row, j * n + l)] += at[(i, l)];
                // (Aᵀ⊗I): P[i, l] contributes A[l, j]
                k[(row, l * n + i)] += a[(l, j)];
            }
        }
    }
    let rhs = Vector::from_iterator(nn, q.iter().map(|v| -v));
    let lu = k.clone().lu();
    let mut sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular Kronecker system".into()))?;
    // one step of iterative refinement
    let resid = &rhs - &k * &sol;
    if let Some(corr) = lu.solve(&resid) {
        sol += corr;
    }
    let p = Matrix::from_column_slice(n, n, sol.as_slice());
    let p = (&p + p.transpose()) * 0.5;
    let form = QuadraticForm::new(p)?;
    let res = lyapunov_residual(a, &form, q);
    if res > 1e-9 * q.amax().max(1.0) {
        return Err(Error::Numeric(format!("Lyapunov residual {res:.3e} too large")));
    }
    Ok(form)
}

/// `‖AᵀP + PA + Q‖_max`.
pub fn lyapunov_residual(a: &Matrix, p: &QuadraticForm, q: &Matrix) -> f64 {
    let pm = p.matrix();
    (a.transpose() * pm + pm * a + q).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: &[&[f64]]) -> Matrix {
        matrix_from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn ring_jacobian() -> Matrix {
        m(&[&[-1.0, -1.0, 0.0], &[1.0, -1.0, 0.0], &[0.0, 0.0, -10.0]])
    }

    #[test]
    fn log_norm_examples() {
        assert_relative_eq!(log_norm2(&(-Matrix::identity(2, 2))).unwrap(), -1.0, epsilon = 1e-14);
        assert_relative_eq!(log_norm2(&m(&[&[-1.0, -1.0], &[1.0, -1.0]])).unwrap(), -1.0, epsilon = 1e-14);
        assert_relative_eq!(log_norm2(&ring_jacobian()).unwrap(), -1.0, epsilon = 1e-14);
        assert!(matches!(log_norm2(&Matrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn weighted_log_norm_of_negative_identity() {
        let a = -Matrix::identity(2, 2);
        let i = QuadraticForm::identity(2);
        assert_relative_eq!(log_norm2_weighted(&a, &i).unwrap(), -1.0, epsilon = 1e-14);
        let p = QuadraticForm::from_rows(&[vec![3.6831, 2.3169], vec![2.3169, 14.7694]]).unwrap();
        assert_relative_eq!(log_norm2_weighted(&a, &p).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_indefinite_weight() {
        let err = QuadraticForm::new(m(&[&[1.0, 2.0], &[2.0, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite));
        assert!(QuadraticForm::new(m(&[&[1.0, 0.1], &[0.0, 1.0]])).is_err());
    }

    #[test]
    fn expm_closed_forms() {
        let z = expm(&Matrix::zeros(3, 3)).unwrap();
        assert_relative_eq!(z, Matrix::identity(3, 3), epsilon = 1e-15);

        let d = expm(&Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0]))).unwrap();
        assert_relative_eq!(d[(0, 0)], (-1f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(d[(1, 1)], (-2f64).exp(), max_relative = 1e-13);
        assert!(d[(0, 1)].abs() < 1e-15);

        for &theta in &[0.1, 1.0, 2.5, 10.0, 40.0] {
            let r = expm(&(m(&[&[0.0, 1.0], &[-1.0, 0.0]]) * theta)).unwrap();
            let expect = m(&[&[theta.cos(), theta.sin()], &[-theta.sin(), theta.cos()]]);
            assert_relative_eq!(r, expect, epsilon = 1e-10 * theta.max(1.0));
        }
    }

    #[test]
    fn expm_matches_taylor_oracle() {
        // Taylor series with many terms on a well-scaled matrix is an independent route.
        let a = m(&[&[0.3, -0.7, 0.1], &[0.2, -0.4, 0.5], &[-0.6, 0.05, -0.2]]);
        let mut term = Matrix::identity(3, 3);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        let e = expm(&a).unwrap();
        assert!((&e - &sum).amax() <= 1e-10 * sum.amax());
        assert!(expm(&(Matrix::identity(2, 2) * 1e7)).is_err());
    }

    #[test]
    fn operator_norm_examples() {
        let p = QuadraticForm::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert_relative_eq!(operator_norm2_weighted(&Matrix::identity(2, 2), &p).unwrap(), 1.0, epsilon = 1e-12);
        let i2 = QuadraticForm::identity(2);
        assert_relative_eq!(operator_norm2_weighted(&(Matrix::identity(2, 2) * 2.0), &i2).unwrap(), 2.0, epsilon = 1e-12);
        let e = expm(&(ring_jacobian() * 0.2)).unwrap();
        let i3 = QuadraticForm::identity(3);
        assert_relative_eq!(operator_norm2_weighted(&e, &i3).unwrap(), (-0.2f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_examples() {
        let q = Matrix::identity(2, 2);
        let p = lyapunov_solve(&(-Matrix::identity(2, 2)), &q).unwrap();
        assert_relative_eq!(p.matrix().clone(), Matrix::identity(2, 2) * 0.5, epsilon = 1e-14);
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0]));
        let p = lyapunov_solve(&a, &q).unwrap();
        assert_relative_eq!(p.matrix()[(0, 0)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(p.matrix()[(1, 1)], 0.25, epsilon = 1e-14);
        assert!(p.matrix()[(0, 1)].abs() < 1e-15);
        assert!(matches!(
            lyapunov_solve(&Matrix::identity(2, 2), &q),
            Err(Error::NotHurwitz(_))
        ));
        let a = m(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!(lyapunov_solve(&a, &q).is_err());
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let s = m(&[&[2.0, 1.0, 0.0], &[1.0, 2.0, 1.0], &[0.0, 1.0, 2.0]]);
        let ev = symmetric_eigenvalues(&s).unwrap();
        let r2 = 2f64.sqrt();
        assert_relative_eq!(ev[0], 2.0 - r2, epsilon = 1e-12);
        assert_relative_eq!(ev[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(ev[2], 2.0 + r2, epsilon = 1e-12);
    }
}
