//! Dense Kronecker algebra.
//!
//! `vec` is column-major throughout: entry `(i, j)` of an `n × m` matrix lands
//! at position `j·n + i`. With that convention `vec(A·B·C) = (Cᵀ ⊗ A)·vec(B)`
//! and `vec(v·vᵀ) = v ⊗ v`, and every moment vector in the crate relies on it.

use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Column-major stacking of the columns of `m`.
pub fn vec(m: &Matrix) -> Vector {
    // nalgebra stores dense matrices column-major.
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`] for a `rows × cols` target.
///
/// Panics if `v.len() != rows * cols`.
pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Matrix {
    assert_eq!(v.len(), rows * cols, "unvec: length does not match shape");
    Matrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// `v ⊗ v`.
pub fn kron_power2(v: &Vector) -> Vector {
    v.kronecker(v)
}

/// `M ⊗ M`.
pub fn kron_power2_mat(m: &Matrix) -> Matrix {
    m.kronecker(m)
}

/// The commutation matrix `C_{n,n}` with `C·(z ⊗ v) = v ⊗ z`.
pub fn commutation(n: usize) -> Matrix {
    let mut c = Matrix::zeros(n * n, n * n);
    for a in 0..n {
        for b in 0..n {
            c[(a * n + b, b * n + a)] = 1.0;
        }
    }
    c
}

/// `K_{n²} = I_{n²} + C_{n,n}`, so that `K·(z ⊗ v) = v ⊗ z + z ⊗ v`.
///
/// Panics if `n == 0`.
pub fn symmetrizer(n: usize) -> Matrix {
    assert!(n >= 1, "symmetrizer requires n >= 1");
    let mut k = commutation(n);
    for i in 0..n * n {
        k[(i, i)] += 1.0;
    }
    k
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Block-diagonal matrix with the given blocks.
pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Horizontal concatenation `(M₁ | … | M_k)`; all blocks must share a row count.
pub fn hcat(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hcat: row count mismatch");
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Vertical concatenation; all blocks must share a column count.
pub fn vcat(blocks: &[&Matrix]) -> Matrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vcat: column count mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Stacks `[a; b]`.
pub fn vstack(a: &Vector, b: &Vector) -> Vector {
    let mut out = Vector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// `[y; y ⊗ y]`.
pub fn augment(y: &Vector) -> Vector {
    vstack(y, &kron_power2(y))
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Index-loop Kronecker product, independent of nalgebra's implementation.
    fn naive_kron(a: &Matrix, b: &Matrix) -> Matrix {
        let (p, q, r, s) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
        let mut out = Matrix::zeros(p * r, q * s);
        for i in 0..p {
            for j in 0..q {
                for k in 0..r {
                    for l in 0..s {
                        out[(i * r + k, j * s + l)] = a[(i, j)] * b[(k, l)];
                    }
                }
            }
        }
        out
    }

    fn naive_vec(m: &Matrix) -> Vector {
        let mut out = Vector::zeros(m.len());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                out[j * m.nrows() + i] = m[(i, j)];
            }
        }
        out
    }

    fn mat(n: usize, m: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-3.0..3.0f64, n * m).prop_map(move |v| Matrix::from_vec(n, m, v))
    }

    fn vector(n: usize) -> impl Strategy<Value = Vector> {
        prop::collection::vec(-3.0..3.0f64, n).prop_map(Vector::from_vec)
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.shape() == b.shape() && (a - b).iter().all(|x| x.abs() <= tol)
    }

    fn close_v(a: &Vector, b: &Vector, tol: f64) -> bool {
        a.len() == b.len() && (a - b).iter().all(|x| x.abs() <= tol)
    }

    fn col(v: &Vector) -> Matrix {
        Matrix::from_column_slice(v.len(), 1, v.as_slice())
    }

    #[test]
    fn vec_examples() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec(&m).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(vec(&Matrix::zeros(2, 2)).as_slice(), &[0.0; 4]);
        assert_eq!(unvec(&vec(&m), 2, 2), m);
    }

    #[test]
    fn kron_examples() {
        let a = Matrix::from_element(1, 1, 2.0);
        let b = Matrix::from_element(1, 1, 3.0);
        assert_eq!(kron(&a, &b)[(0, 0)], 6.0);
        assert_eq!(
            kron(&Matrix::identity(2, 2), &Matrix::identity(2, 2)),
            Matrix::identity(4, 4)
        );
    }

    #[test]
    fn kron_power2_examples() {
        assert_eq!(kron_power2(&Vector::from_vec(vec![3.0])).as_slice(), &[9.0]);
        assert_eq!(
            kron_power2(&Vector::from_vec(vec![1.0, 2.0])).as_slice(),
            &[1.0, 2.0, 2.0, 4.0]
        );
    }

    #[test]
    fn symmetrizer_examples() {
        assert_eq!(symmetrizer(1)[(0, 0)], 2.0);
        let z = Vector::from_vec(vec![1.0, 0.0]);
        let v = Vector::from_vec(vec![0.0, 1.0]);
        let out = symmetrizer(2) * z.kronecker(&v);
        assert_eq!(out.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn symmetrizer_defining_identity_on_basis() {
        for n in [2usize, 3] {
            let k = symmetrizer(n);
            for a in 0..n {
                for b in 0..n {
                    let z = Vector::from_fn(n, |i, _| if i == a { 1.0 } else { 0.0 });
                    let v = Vector::from_fn(n, |i, _| if i == b { 1.0 } else { 0.0 });
                    let lhs = &k * naive_kron(&col(&z), &col(&v));
                    let rhs = naive_kron(&col(&v), &col(&z)) + naive_kron(&col(&z), &col(&v));
                    assert_eq!(lhs, rhs, "n={n} a={a} b={b}");
                }
            }
            assert_eq!(k, k.transpose());
        }
    }

    #[test]
    fn block_helpers() {
        let a = Matrix::from_element(1, 2, 1.0);
        let b = Matrix::from_element(2, 1, 2.0);
        let d = block_diag(&[&a, &b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 2)], 0.0);
        assert_eq!(d[(2, 2)], 2.0);
        assert_eq!(hcat(&[&a, &a]).shape(), (1, 4));
        assert_eq!(vcat(&[&b, &b]).shape(), (4, 1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn kron_matches_index_loop(a in mat(2, 3), b in mat(3, 2)) {
            prop_assert!(close(&kron(&a, &b), &naive_kron(&a, &b), 0.0));
        }

        #[test]
        fn vec_abc_identity(a in mat(2, 2), b in mat(2, 2), c in mat(2, 2)) {
            let lhs = naive_vec(&(&a * &b * &c));
            let rhs = naive_kron(&c.transpose(), &a) * naive_vec(&b);
            prop_assert!(close_v(&lhs, &rhs, 1e-12));
        }

        #[test]
        fn vec_abc_identity_3d(a in mat(3, 3), b in mat(3, 3), c in mat(3, 3)) {
            let lhs = vec(&(&a * &b * &c));
            let rhs = kron(&c.transpose(), &a) * vec(&b);
            prop_assert!(close_v(&lhs, &rhs, 1e-11));
        }

        #[test]
        fn mixed_product(a in mat(2, 2), b in mat(2, 2), c in mat(2, 2), d in mat(2, 2)) {
            let lhs = kron(&a, &b) * kron(&c, &d);
            let rhs = naive_kron(&(&a * &c), &(&b * &d));
            prop_assert!(close(&lhs, &rhs, 1e-12));
        }

        #[test]
        fn kron_acts_on_products(a in mat(2, 2), b in mat(3, 3), x in vector(2), y in vector(3)) {
            let lhs = kron(&a, &b) * x.kronecker(&y);
            let rhs = (&a * &x).kronecker(&(&b * &y));
            prop_assert!(close_v(&lhs, &rhs, 1e-12));
        }

        #[test]
        fn power2_commutes_with_linear_maps(m in mat(2, 2), v in vector(2)) {
            let lhs = kron_power2(&(&m * &v));
            let rhs = kron_power2_mat(&m) * kron_power2(&v);
            prop_assert!(close_v(&lhs, &rhs, 1e-12));
        }

        #[test]
        fn vec_outer_is_power2(v in vector(3)) {
            let outer = &v * v.transpose();
            prop_assert!(close_v(&vec(&outer), &kron_power2(&v), 0.0));
        }

        #[test]
        fn symmetrizer_on_random_pairs(z in vector(3), v in vector(3)) {
            let k = symmetrizer(3);
            let lhs = &k * z.kronecker(&v);
            let rhs = v.kronecker(&z) + z.kronecker(&v);
            prop_assert!(close_v(&lhs, &rhs, 1e-12));
            let doubled = &k * kron_power2(&z);
            prop_assert!(close_v(&doubled, &(kron_power2(&z) * 2.0), 1e-12));
        }

        #[test]
        fn kron_is_bilinear(a in mat(2, 2), b in mat(2, 2), c in mat(2, 2), s in -2.0..2.0f64) {
            let lhs = kron(&(&a * s + &b), &c);
            let rhs = kron(&a, &c) * s + kron(&b, &c);
            prop_assert!(close(&lhs, &rhs, 1e-12));
        }
    }
}
