//! Small helpers for complex Hermitian matrices shared across the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Symmetry residual `max_ij |A_ij - conj(A_ji)|`.
pub fn hermitian_residual(a: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let d = (a[(i, j)] - a[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Returns `(A + A^H) / 2`.
pub fn hermitianize(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Outer product `v v^H`.
pub fn outer(v: &DVector<Complex64>) -> DMatrix<Complex64> {
    v * v.adjoint()
}

/// Real part of `Tr(A B)` for Hermitian `A`, `B` (the trace itself is real).
pub fn inner(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let p = a[(i, j)] * b[(j, i)];
            acc += p.re;
        }
    }
    acc
}

/// Quadratic form `w^H A w`, returned as its real part.
///
/// Debug builds assert that the imaginary residue stays below `1e-10`
/// relative to the magnitude of the real part, which catches Hermitian
/// symmetry bugs in the inputs.
pub fn quad_form(a: &DMatrix<Complex64>, w: &DVector<Complex64>) -> f64 {
    let q = (w.adjoint() * a * w)[(0, 0)];
    debug_assert!(
        q.im.abs() <= 1e-10 * (1.0 + q.re.abs()),
        "imaginary residue {} too large for quadratic form",
        q.im
    );
    q.re
}

/// Real trace of a Hermitian matrix.
pub fn real_trace(a: &DMatrix<Complex64>) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

/// Eigenvalues of a Hermitian matrix in descending order, with unit
/// eigenvectors as matching columns.
pub fn eigh_descending(a: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = hermitianize(a).symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<Complex64>::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &DMatrix<Complex64>) -> f64 {
    let (vals, _) = eigh_descending(a);
    *vals.last().expect("non-empty matrix")
}

/// Real symmetric embedding `[[Re A, -Im A], [Im A, Re A]]` of a complex
/// matrix. Each eigenvalue of `A` appears twice in the embedding and
/// `Tr(embed(A)) = 2 Tr(A)`.
pub fn embed(a: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
            out[(i + n, j + n)] = z.re;
        }
    }
    out
}

/// Inverse of [`embed`] for (approximately) structured symmetric matrices:
/// averages the two real copies and antisymmetrizes the imaginary part, then
/// Hermitianizes.
pub fn unembed(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n2 = m.nrows();
    debug_assert!(n2 % 2 == 0);
    let n = n2 / 2;
    let mut out = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (m[(i, j)] + m[(i + n, j + n)]);
            let im = 0.5 * (m[(i + n, j)] - m[(i, j + n)]);
            out[(i, j)] = Complex64::new(re, im);
        }
    }
    hermitianize(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn embedding_doubles_trace_and_eigenvalues() {
        let a = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.3, -0.7), c(0.3, 0.7), c(1.0, 0.0)]);
        let e = embed(&a);
        assert_relative_eq!(e.trace(), 2.0 * real_trace(&a), epsilon = 1e-14);
        let mut emb_vals: Vec<f64> = e.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        emb_vals.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let (vals, _) = eigh_descending(&a);
        // each complex eigenvalue appears twice in the embedding
        assert_relative_eq!(emb_vals[0], vals[0], epsilon = 1e-12);
        assert_relative_eq!(emb_vals[1], vals[0], epsilon = 1e-12);
        assert_relative_eq!(emb_vals[2], vals[1], epsilon = 1e-12);
        assert_relative_eq!(emb_vals[3], vals[1], epsilon = 1e-12);
    }

    #[test]
    fn unembed_roundtrips() {
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.2, 0.5), c(0.2, -0.5), c(3.0, 0.0)]);
        let back = unembed(&embed(&a));
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(back[(i, j)].re, a[(i, j)].re, epsilon = 1e-14);
                assert_relative_eq!(back[(i, j)].im, a[(i, j)].im, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn inner_matches_embedded_inner() {
        let a = hermitianize(&DMatrix::from_fn(3, 3, |i, j| c((i + j) as f64, i as f64 - j as f64)));
        let b = hermitianize(&DMatrix::from_fn(3, 3, |i, j| c((2 * i) as f64 - j as f64, 0.3 * j as f64)));
        let lhs = inner(&a, &b);
        let ea = embed(&a);
        let eb = embed(&b);
        let mut rhs = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                rhs += ea[(i, j)] * eb[(j, i)];
            }
        }
        assert_relative_eq!(lhs, rhs / 2.0, epsilon = 1e-12);
    }
}
