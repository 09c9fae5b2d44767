//! Dense complex linear algebra helpers on top of nalgebra.
//!
//! Everything here operates on small matrices (transition operators are a few
//! dozen rows at desk scale), so dense Schur/SVD routines are plenty.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Eigenvalues of a general complex square matrix via Schur decomposition.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    debug_assert!(m.is_square());
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = m
        .clone()
        .try_schur(1e-14, 100_000)
        .or_else(|| m.clone().try_schur(1e-10, 1_000_000))
        .ok_or_else(|| Error::NumericalFailure("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Orthonormal basis of the (right) null space of `m`, singular values <= tol.
pub fn kernel_basis(m: &CMat, tol: f64) -> Vec<CVec> {
    let ncols = m.ncols();
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("svd requested v_t");
    let mut out = Vec::new();
    for (i, &sv) in svd.singular_values.iter().enumerate() {
        if sv <= tol {
            out.push(vt.row(i).adjoint());
        }
    }
    // Rows of V^H beyond the singular-value count (wide kernels) are not
    // produced by nalgebra's thin SVD; pad via full rank analysis.
    let rank_rows = svd.singular_values.len();
    if rank_rows < ncols {
        // m has more columns than rows: the thin SVD misses ncols - nrows
        // kernel directions. Recover them from the full V of m^H m.
        let gram = m.adjoint() * m;
        let eig = gram.symmetric_eigen();
        let mut extra = Vec::new();
        for (i, &ev) in eig.eigenvalues.iter().enumerate() {
            if ev.abs().sqrt() <= tol {
                extra.push(eig.eigenvectors.column(i).into_owned());
            }
        }
        if extra.len() > out.len() {
            return orthonormalize(&extra, 1e-12);
        }
    }
    out
}

/// Orthonormal basis of the left null space: {w : w^H m = 0}.
pub fn left_kernel_basis(m: &CMat, tol: f64) -> Vec<CVec> {
    kernel_basis(&m.adjoint(), tol)
}

/// Gram-Schmidt with pruning of dependent vectors.
pub fn orthonormalize(vs: &[CVec], drop_tol: f64) -> Vec<CVec> {
    let mut basis: Vec<CVec> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for b in &basis {
            let proj = b.dotc(&w);
            w -= b * proj;
        }
        let n = w.norm();
        if n > drop_tol {
            basis.push(w / cr(n));
        }
    }
    basis
}

/// Spectral (2-) norm = largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Smallest singular value.
pub fn min_singular_value(m: &CMat) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Hermitian part (a + a^H)/2.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Smallest eigenvalue of the hermitian part of `m`.
pub fn hermitian_min_eig(m: &CMat) -> f64 {
    let h = hermitian_part(m);
    h.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Functional calculus on the hermitian part: f applied to each eigenvalue.
/// Errors if an eigenvalue falls outside `domain_min`.
pub fn hermitian_calculus(
    m: &CMat,
    f: impl Fn(f64) -> f64,
    domain_min: f64,
) -> Result<CMat> {
    let h = hermitian_part(m);
    let eig = h.symmetric_eigen();
    for &ev in eig.eigenvalues.iter() {
        if ev < domain_min {
            return Err(Error::NumericalFailure(format!(
                "eigenvalue {ev:.3e} below domain minimum {domain_min:.3e}"
            )));
        }
    }
    let d = CMat::from_diagonal(&CVec::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&ev| cr(f(ev))),
    ));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// Positive-definite square root of the hermitian part.
pub fn hermitian_sqrt(m: &CMat) -> Result<CMat> {
    hermitian_calculus(m, |t| t.max(0.0).sqrt(), -1e-10)
}

/// Inverse square root; fails when an eigenvalue is at or below `floor`.
pub fn hermitian_inv_sqrt(m: &CMat, floor: f64) -> Result<CMat> {
    hermitian_calculus(m, |t| 1.0 / t.sqrt(), floor)
}

/// Least-squares solve min ‖a x − b‖ via SVD pseudoinverse. Returns (x, residual).
pub fn lstsq(a: &CMat, b: &CVec) -> (CVec, f64) {
    let svd = a.clone().svd(true, true);
    let eps = 1e-13 * svd.singular_values.iter().cloned().fold(0.0, f64::max).max(1.0);
    let x = svd.solve(b, eps).expect("svd solve");
    let resid = (a * &x - b).norm();
    (x, resid)
}

/// Principal-angle distance between two subspaces given by orthonormal
/// columns: the sine of the largest principal angle, computed as
/// ‖(I − P_b)·Q_a‖₂ to keep full precision at tiny angles.
pub fn subspace_gap(a: &[CVec], b: &[CVec]) -> f64 {
    if a.len() != b.len() {
        return 1.0;
    }
    if a.is_empty() {
        return 0.0;
    }
    let qa = CMat::from_columns(&a.iter().cloned().collect::<Vec<_>>());
    let qb = CMat::from_columns(&b.iter().cloned().collect::<Vec<_>>());
    let residual = &qa - &qb * (qb.adjoint() * &qa);
    op_norm(&residual)
}

/// Deterministic cluster of eigenvalues: groups values within `tol` of each
/// other (transitive closure), returning (representative, multiplicity) sorted
/// by (-|λ|, re, im).
pub fn cluster_eigenvalues(eigs: &[C64], tol: f64) -> Vec<(C64, usize)> {
    let mut sorted: Vec<C64> = eigs.to_vec();
    sorted.sort_by(|x, y| {
        (-x.norm(), x.re, x.im)
            .partial_cmp(&(-y.norm(), y.re, y.im))
            .unwrap()
    });
    let mut clusters: Vec<(C64, usize)> = Vec::new();
    'outer: for &e in &sorted {
        for cl in clusters.iter_mut() {
            if (e - cl.0).norm() <= tol {
                // running mean keeps the representative stable
                let k = cl.1 as f64;
                cl.0 = (cl.0 * cr(k) + e) / cr(k + 1.0);
                cl.1 += 1;
                continue 'outer;
            }
        }
        clusters.push((e, 1));
    }
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_triangular() {
        let m = CMat::from_row_slice(
            3,
            3,
            &[
                cr(0.5), cr(0.0), cr(0.0),
                cr(0.5), cr(1.0), cr(0.5),
                cr(0.0), cr(0.0), cr(0.5),
            ],
        );
        let mut eig = eigenvalues(&m).unwrap();
        eig.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((eig[0].re - 0.5).abs() < 1e-12);
        assert!((eig[1].re - 0.5).abs() < 1e-12);
        assert!((eig[2].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_of_rank_deficient() {
        let m = CMat::from_row_slice(2, 2, &[cr(1.0), cr(1.0), cr(1.0), cr(1.0)]);
        let k = kernel_basis(&m, 1e-10);
        assert_eq!(k.len(), 1);
        assert!((m * &k[0]).norm() < 1e-12);
    }

    #[test]
    fn sqrt_roundtrip() {
        let m = CMat::from_row_slice(2, 2, &[cr(2.0), c(0.0, 1.0), c(0.0, -1.0), cr(3.0)]);
        let s = hermitian_sqrt(&m).unwrap();
        assert!(op_norm(&(&s * &s - &m)) < 1e-12);
    }

    #[test]
    fn cluster_groups_near_values() {
        let eigs = vec![cr(1.0), cr(1.0 + 1e-12), cr(0.5), cr(-0.5)];
        let cl = cluster_eigenvalues(&eigs, 1e-8);
        assert_eq!(cl.len(), 3);
        assert_eq!(cl[0].1, 2);
    }
}
