//! Dense complex linear algebra on the small spaces this crate works in.
//!
//! Everything is built on [`ComplexMatrix`], a row-major `Vec<Complex64>`
//! matrix. Dimensions stay tiny (joint system-environment spaces of dimension
//! at most 16), so the implementations favour clarity and numerical
//! robustness over asymptotic speed: matrix exponentials use scaling and
//! squaring around a Taylor core, Hermitian eigendecompositions use cyclic
//! Jacobi rotations.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance for exact linear-algebra identities (unitarity of exponentials,
/// eigendecomposition residuals, ...).
pub const TOL_NUMERIC: f64 = 1e-12;

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, validating the entry count and
    /// that every entry is finite.
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::EntryCount {
                rows,
                cols,
                expected: rows * cols,
                got: entries.len(),
            });
        }
        for (index, z) in entries.iter().enumerate() {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                entries.push(f(r, c));
            }
        }
        Self { rows, cols, entries }
    }

    /// Square matrix with the given diagonal and zeros elsewhere.
    pub fn from_diag(diag: &[Complex64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim, dim);
        for (i, z) in diag.iter().enumerate() {
            m[(i, i)] = *z;
        }
        m
    }

    /// Column vector |i> of the given dimension.
    pub fn basis_column(dim: usize, i: usize) -> Self {
        let mut m = Self::zeros(dim, 1);
        m[(i, 0)] = Complex64::new(1.0, 0.0);
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Matrix product, checking inner dimensions.
    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        Ok(out)
    }

    /// Kronecker product; `self` is the slow (left) factor.
    pub fn kron(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = ComplexMatrix::zeros(rows, cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self[(r1, c1)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        out[(r1 * other.rows + r2, c1 * other.cols + c2)] = a * other[(r2, c2)];
                    }
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn add(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "matrix addition requires equal shapes"
        );
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn sub(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "matrix subtraction requires equal shapes"
        );
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a - b)
            .collect();
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn scale(&self, factor: Complex64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        assert!(self.is_square(), "trace requires a square matrix");
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// Partial trace of a square matrix on a bipartite space.
    ///
    /// The composite index convention is `first * dim_second + second` (the
    /// first factor varies slowest). With `keep_first` the first factor of
    /// dimension `dim_keep` is kept and the second of dimension `dim_traced`
    /// is traced out; otherwise the roles are swapped.
    pub fn partial_trace(
        &self,
        dim_keep: usize,
        dim_traced: usize,
        keep_first: bool,
    ) -> Result<ComplexMatrix> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        if dim_keep == 0 || dim_traced == 0 || self.rows != dim_keep * dim_traced {
            return Err(Error::BadFactorization {
                dim: self.rows,
                first: if keep_first { dim_keep } else { dim_traced },
                second: if keep_first { dim_traced } else { dim_keep },
            });
        }
        let mut out = ComplexMatrix::zeros(dim_keep, dim_keep);
        for i in 0..dim_keep {
            for j in 0..dim_keep {
                let mut sum = Complex64::new(0.0, 0.0);
                for t in 0..dim_traced {
                    let (r, c) = if keep_first {
                        (i * dim_traced + t, j * dim_traced + t)
                    } else {
                        (t * dim_keep + i, t * dim_keep + j)
                    };
                    sum += self[(r, c)];
                }
                out[(i, j)] = sum;
            }
        }
        Ok(out)
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise difference to `other` (shapes must match).
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "matrix comparison requires equal shapes"
        );
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute row sum (operator infinity norm).
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self[(r, c)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for r in 0..self.rows {
            for c in r..self.cols {
                if (self[(r, c)] - self[(c, r)].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Matrix exponential by scaling and squaring around a Taylor series.
    ///
    /// The argument is scaled by a power of two until its infinity norm is at
    /// most 1/2, the series is summed to machine precision, and the result is
    /// squared back up. For the anti-Hermitian inputs produced by the model
    /// parameterization this yields a unitary within [`TOL_NUMERIC`].
    pub fn matrix_exp(&self) -> Result<ComplexMatrix> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let norm = self.inf_norm();
        let squarings = if norm <= 0.5 {
            0
        } else {
            (norm / 0.5).log2().ceil() as u32
        };
        let scaled = self.scale(Complex64::new(1.0 / 2f64.powi(squarings as i32), 0.0));

        let dim = self.rows;
        let mut sum = ComplexMatrix::identity(dim);
        let mut term = ComplexMatrix::identity(dim);
        for k in 1..=40u32 {
            term = term
                .matmul(&scaled)
                .expect("square matrices always multiply")
                .scale(Complex64::new(1.0 / f64::from(k), 0.0));
            sum = sum.add(&term);
            if term.inf_norm() <= 1e-17 * sum.inf_norm().max(1.0) {
                break;
            }
        }
        let mut result = sum;
        for _ in 0..squarings {
            result = result
                .matmul(&result)
                .expect("square matrices always multiply");
        }
        Ok(result)
    }

    /// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
    ///
    /// Returns eigenvalues in ascending order and a unitary whose columns are
    /// the matching eigenvectors, so `self = V diag(w) V^dagger` up to
    /// [`TOL_NUMERIC`] * scale. Errors if the matrix is not Hermitian within
    /// `1e-8` times its largest entry.
    pub fn hermitian_eigen(&self) -> Result<(Vec<f64>, ComplexMatrix)> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let scale = self.max_abs().max(1e-300);
        if !self.is_hermitian(1e-8 * scale) {
            return Err(Error::InvalidState {
                reason: "hermitian_eigen called on a non-Hermitian matrix".into(),
            });
        }
        let dim = self.rows;
        // Work on the exactly Hermitian part to keep the rotations unitary.
        let mut a = ComplexMatrix::from_fn(dim, dim, |r, c| {
            (self[(r, c)] + self[(c, r)].conj()) * Complex64::new(0.5, 0.0)
        });
        let mut v = ComplexMatrix::identity(dim);

        for _sweep in 0..60 {
            let mut off = 0.0;
            for p in 0..dim {
                for q in (p + 1)..dim {
                    off += a[(p, q)].norm_sqr();
                }
            }
            if off.sqrt() <= 1e-15 * scale {
                break;
            }
            for p in 0..dim {
                for q in (p + 1)..dim {
                    let alpha = a[(p, q)];
                    let m = alpha.norm();
                    if m <= 1e-18 * scale {
                        continue;
                    }
                    let app = a[(p, p)].re;
                    let aqq = a[(q, q)].re;
                    let tau = (app - aqq) / (2.0 * m);
                    // tan(theta) solving tan(2*theta) = 2m / (app - aqq),
                    // taking the smaller rotation for stability.
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    let u = alpha / Complex64::new(m, 0.0); // phase of the pivot

                    // Columns: A <- A R with R[p][p]=c, R[p][q]=-s*u,
                    // R[q][p]=s*conj(u), R[q][q]=c.
                    for k in 0..dim {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = akp * c + akq * s * u.conj();
                        a[(k, q)] = -akp * s * u + akq * c;
                    }
                    // Rows: A <- R^dagger A.
                    for k in 0..dim {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = apk * c + aqk * s * u;
                        a[(q, k)] = -apk * s * u.conj() + aqk * c;
                    }
                    // Accumulate eigenvectors: V <- V R.
                    for k in 0..dim {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = vkp * c + vkq * s * u.conj();
                        v[(k, q)] = -vkp * s * u + vkq * c;
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&i, &j| {
            a[(i, i)]
                .re
                .partial_cmp(&a[(j, j)].re)
                .expect("eigenvalues are finite")
        });
        let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
        let vectors = ComplexMatrix::from_fn(dim, dim, |r, c| v[(r, order[c])]);
        Ok((eigenvalues, vectors))
    }

    /// Eigenvalues only, ascending.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.hermitian_eigen()?.0)
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.entries[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.entries[r * self.cols + c]
    }
}

/// Product of two matrices with statically known compatible shapes; panics on
/// mismatch. Use [`ComplexMatrix::matmul`] when shapes come from input data.
impl std::ops::Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
            .expect("operator * requires compatible shapes")
    }
}

impl std::fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Serialized form: `{rows, cols, entries}` with each complex entry as a
/// `[re, im]` pair, row-major.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    entries: Vec<[f64; 2]>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(deserializer)?;
        let entries = repr
            .entries
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        ComplexMatrix::new(repr.rows, repr.cols, entries).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn hadamard() -> ComplexMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ComplexMatrix::new(2, 2, vec![c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]).unwrap()
    }

    fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::new(2, 2, vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, dim: usize) -> ComplexMatrix {
        let a = random_matrix(rng, dim, dim);
        a.add(&a.dagger()).scale(c(0.5, 0.0))
    }

    fn random_anti_hermitian(rng: &mut ChaCha8Rng, dim: usize) -> ComplexMatrix {
        let a = random_matrix(rng, dim, dim);
        a.sub(&a.dagger()).scale(c(0.5, 0.0))
    }

    #[test]
    fn hadamard_squares_to_identity() {
        let h = hadamard();
        let hh = h.matmul(&h).unwrap();
        assert!(hh.max_abs_diff(&ComplexMatrix::identity(2)) < TOL_NUMERIC);
    }

    #[test]
    fn hadamard_maps_ground_state_to_plus() {
        let h = hadamard();
        let ket0 = ComplexMatrix::basis_column(2, 0);
        let plus = h.matmul(&ket0).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((plus[(0, 0)] - c(r, 0.0)).norm() < TOL_NUMERIC);
        assert!((plus[(1, 0)] - c(r, 0.0)).norm() < TOL_NUMERIC);
    }

    #[test]
    fn matmul_shape_error_reports_both_shapes() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3"), "unhelpful message: {msg}");
    }

    #[test]
    fn entry_count_is_validated() {
        let err = ComplexMatrix::new(2, 2, vec![c(1.0, 0.0); 3]).unwrap_err();
        assert!(matches!(err, Error::EntryCount { expected: 4, got: 3, .. }));
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let err = ComplexMatrix::new(1, 2, vec![c(1.0, 0.0), c(f64::NAN, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1 }));
    }

    #[test]
    fn kron_of_identities_is_identity() {
        let i2 = ComplexMatrix::identity(2);
        let i3 = ComplexMatrix::identity(3);
        assert!(i2.kron(&i3).max_abs_diff(&ComplexMatrix::identity(6)) == 0.0);
    }

    #[test]
    fn kron_places_left_factor_in_blocks() {
        // |1><0| kron I2 should connect block row 1 to block column 0.
        let e10 = ComplexMatrix::from_fn(2, 2, |r, c_| {
            if r == 1 && c_ == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) }
        });
        let k = e10.kron(&ComplexMatrix::identity(2));
        for r in 0..4 {
            for col in 0..4 {
                let expected = if (r, col) == (2, 0) || (r, col) == (3, 1) { 1.0 } else { 0.0 };
                assert_eq!(k[(r, col)], c(expected, 0.0), "at ({r},{col})");
            }
        }
    }

    #[test]
    fn kron_respects_mixed_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 2, 2);
            let b = random_matrix(&mut rng, 3, 3);
            let x = random_matrix(&mut rng, 2, 2);
            let y = random_matrix(&mut rng, 3, 3);
            let lhs = a.kron(&b).matmul(&x.kron(&y)).unwrap();
            let rhs = a.matmul(&x).unwrap().kron(&b.matmul(&y).unwrap());
            assert!(lhs.max_abs_diff(&rhs) < 1e-13);
        }
    }

    #[test]
    fn partial_trace_of_product_state_recovers_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_hermitian(&mut rng, 2);
        let tau = random_hermitian(&mut rng, 3);
        let joint = rho.kron(&tau);
        let traced_second = joint.partial_trace(2, 3, true).unwrap();
        let expected = rho.scale(tau.trace());
        assert!(traced_second.max_abs_diff(&expected) < 1e-13);

        let traced_first = joint.partial_trace(3, 2, false).unwrap();
        let expected = tau.scale(rho.trace());
        assert!(traced_first.max_abs_diff(&expected) < 1e-13);
    }

    #[test]
    fn partial_trace_of_correlated_diagonal_state() {
        // (|00><00| + |11><11|)/2 reduces to I/2 on either factor.
        let mut joint = ComplexMatrix::zeros(4, 4);
        joint[(0, 0)] = c(0.5, 0.0);
        joint[(3, 3)] = c(0.5, 0.0);
        let half_identity = ComplexMatrix::identity(2).scale(c(0.5, 0.0));
        assert!(joint.partial_trace(2, 2, true).unwrap().max_abs_diff(&half_identity) == 0.0);
        assert!(joint.partial_trace(2, 2, false).unwrap().max_abs_diff(&half_identity) == 0.0);
    }

    #[test]
    fn partial_trace_rejects_bad_factorization() {
        let m = ComplexMatrix::identity(6);
        let err = m.partial_trace(4, 2, true).unwrap_err();
        assert!(matches!(err, Error::BadFactorization { dim: 6, .. }));
    }

    #[test]
    fn matrix_exp_of_zero_is_identity() {
        let z = ComplexMatrix::zeros(3, 3);
        assert!(z.matrix_exp().unwrap().max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);
    }

    #[test]
    fn matrix_exp_matches_pauli_rotation_closed_form() {
        // exp(i theta X) = cos(theta) I + i sin(theta) X.
        for &theta in &[0.3, 1.0, std::f64::consts::FRAC_PI_2, 2.5] {
            let arg = pauli_x().scale(c(0.0, theta));
            let expected = ComplexMatrix::identity(2)
                .scale(c(theta.cos(), 0.0))
                .add(&pauli_x().scale(c(0.0, theta.sin())));
            assert!(arg.matrix_exp().unwrap().max_abs_diff(&expected) < 1e-14, "theta={theta}");
        }
    }

    #[test]
    fn matrix_exp_of_anti_hermitian_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..100 {
            let dim = 2 + trial % 7; // dims 2..=8
            let a = random_anti_hermitian(&mut rng, dim).scale(c(rng.gen_range(0.1..4.0), 0.0));
            let u = a.matrix_exp().unwrap();
            let residual = u.dagger().matmul(&u).unwrap().max_abs_diff(&ComplexMatrix::identity(dim));
            assert!(residual < TOL_NUMERIC, "trial {trial}: residual {residual}");
        }
    }

    #[test]
    fn matrix_exp_stays_unitary_at_large_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_anti_hermitian(&mut rng, 6).scale(c(60.0, 0.0));
        let u = a.matrix_exp().unwrap();
        let residual = u.dagger().matmul(&u).unwrap().max_abs_diff(&ComplexMatrix::identity(6));
        assert!(residual < TOL_NUMERIC, "residual {residual}");
    }

    #[test]
    fn matrix_exp_inverts_negated_argument() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_anti_hermitian(&mut rng, 4).scale(c(2.0, 0.0));
        let u = a.matrix_exp().unwrap();
        let u_inv = a.scale(c(-1.0, 0.0)).matrix_exp().unwrap();
        assert!(u.matmul(&u_inv).unwrap().max_abs_diff(&ComplexMatrix::identity(4)) < 1e-13);
    }

    #[test]
    fn hermitian_eigen_reconstructs_the_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in 2..=8 {
            let a = random_hermitian(&mut rng, dim);
            let (w, v) = a.hermitian_eigen().unwrap();
            assert!(w.windows(2).all(|p| p[0] <= p[1]), "unsorted eigenvalues");
            let diag = ComplexMatrix::from_diag(&w.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>());
            let rebuilt = v.matmul(&diag).unwrap().matmul(&v.dagger()).unwrap();
            assert!(rebuilt.max_abs_diff(&a) < TOL_NUMERIC, "dim {dim}");
            let vtv = v.dagger().matmul(&v).unwrap();
            assert!(vtv.max_abs_diff(&ComplexMatrix::identity(dim)) < TOL_NUMERIC);
        }
    }

    #[test]
    fn hermitian_eigen_of_pauli_x() {
        let (w, _) = pauli_x().hermitian_eigen().unwrap();
        assert!((w[0] + 1.0).abs() < TOL_NUMERIC);
        assert!((w[1] - 1.0).abs() < TOL_NUMERIC);
    }

    #[test]
    fn hermitian_eigen_rejects_non_hermitian_input() {
        let m = ComplexMatrix::new(2, 2, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(m.hermitian_eigen().is_err());
    }

    #[test]
    fn serde_roundtrip_preserves_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = random_matrix(&mut rng, 3, 2);
        let json = serde_json::to_string(&m).unwrap();
        let back: ComplexMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn serde_rejects_inconsistent_entry_count() {
        let json = r#"{"rows":2,"cols":2,"entries":[[1.0,0.0]]}"#;
        assert!(serde_json::from_str::<ComplexMatrix>(json).is_err());
    }

    fn small_matrix() -> impl Strategy<Value = ComplexMatrix> {
        (1usize..4, 1usize..4).prop_flat_map(|(rows, cols)| {
            proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols).prop_map(
                move |parts| {
                    let entries = parts.into_iter().map(|(re, im)| c(re, im)).collect();
                    ComplexMatrix::new(rows, cols, entries).unwrap()
                },
            )
        })
    }

    fn square_matrix(dim: usize) -> impl Strategy<Value = ComplexMatrix> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim).prop_map(move |parts| {
            let entries = parts.into_iter().map(|(re, im)| c(re, im)).collect();
            ComplexMatrix::new(dim, dim, entries).unwrap()
        })
    }

    proptest! {
        #[test]
        fn prop_kron_is_associative(a in small_matrix(), b in small_matrix(), x in small_matrix()) {
            let lhs = a.kron(&b).kron(&x);
            let rhs = a.kron(&b.kron(&x));
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-14);
        }

        #[test]
        fn prop_dagger_reverses_products(a in square_matrix(3), b in square_matrix(3)) {
            let lhs = a.matmul(&b).unwrap().dagger();
            let rhs = b.dagger().matmul(&a.dagger()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-14);
        }

        #[test]
        fn prop_partial_trace_of_kron_scales_kept_factor(a in square_matrix(2), b in square_matrix(3)) {
            let joint = a.kron(&b);
            let kept = joint.partial_trace(2, 3, true).unwrap();
            prop_assert!(kept.max_abs_diff(&a.scale(b.trace())) < 1e-13);
            let kept_second = joint.partial_trace(3, 2, false).unwrap();
            prop_assert!(kept_second.max_abs_diff(&b.scale(a.trace())) < 1e-13);
        }

        #[test]
        fn prop_trace_of_kron_factorizes(a in square_matrix(3), b in square_matrix(2)) {
            let lhs = a.kron(&b).trace();
            let rhs = a.trace() * b.trace();
            prop_assert!((lhs - rhs).norm() < 1e-13);
        }
    }
}
