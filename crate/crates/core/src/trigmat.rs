//! Matrix-valued trigonometric polynomials and filter-level certificates:
//! evaluation, convolution products, adjoints, QMF residuals, and the E(l)
//! low-pass report.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::lattice::DilationSystem;
use crate::linalg::{self, c, cr, CMat, CVec, C64};

/// Coefficients below this Frobenius norm are pruned.
pub const PRUNE_TOL: f64 = 1e-15;

/// A finite-support map k ↦ Mₖ representing p(x) = Σₖ Mₖ e^{2πi k·x} with
/// d×d complex matrix coefficients over integer frequencies k ∈ Zⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct MatTrigPoly {
    n: usize,
    d: usize,
    coeffs: BTreeMap<Vec<i64>, CMat>,
}

impl MatTrigPoly {
    pub fn zero(n: usize, d: usize) -> Self {
        MatTrigPoly {
            n,
            d,
            coeffs: BTreeMap::new(),
        }
    }

    /// The constant polynomial with value `m`.
    pub fn constant(n: usize, m: CMat) -> Self {
        assert!(m.is_square());
        let d = m.nrows();
        let mut p = MatTrigPoly::zero(n, d);
        p.add_coeff(vec![0; n], m);
        p
    }

    pub fn identity(n: usize, d: usize) -> Self {
        Self::constant(n, CMat::identity(d, d))
    }

    pub fn from_coeffs(n: usize, d: usize, entries: Vec<(Vec<i64>, CMat)>) -> Self {
        let mut p = MatTrigPoly::zero(n, d);
        for (k, m) in entries {
            assert_eq!(k.len(), n);
            assert_eq!(m.nrows(), d);
            assert_eq!(m.ncols(), d);
            p.add_coeff(k, m);
        }
        p
    }

    /// Scalar (d = 1) polynomial on the line from (frequency, value) pairs.
    pub fn scalar_1d(entries: &[(i64, C64)]) -> Self {
        let mut p = MatTrigPoly::zero(1, 1);
        for &(k, v) in entries {
            p.add_coeff(vec![k], CMat::from_element(1, 1, v));
        }
        p
    }

    pub fn add_coeff(&mut self, k: Vec<i64>, m: CMat) {
        assert_eq!(k.len(), self.n);
        let key = k.clone();
        let slot = self
            .coeffs
            .entry(k)
            .or_insert_with(|| CMat::zeros(self.d, self.d));
        *slot += m;
        if slot.norm() <= PRUNE_TOL {
            self.coeffs.remove(&key);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coeff(&self, k: &[i64]) -> CMat {
        self.coeffs
            .get(k)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.d, self.d))
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&Vec<i64>, &CMat)> {
        self.coeffs.iter()
    }

    pub fn support(&self) -> Vec<Vec<i64>> {
        self.coeffs.keys().cloned().collect()
    }

    pub fn num_coeffs(&self) -> usize {
        self.coeffs.len()
    }

    /// Exact finite Fourier sum; 1-periodic in each coordinate.
    pub fn evaluate(&self, x: &[f64]) -> CMat {
        assert_eq!(x.len(), self.n);
        let mut acc = CMat::zeros(self.d, self.d);
        for (k, m) in &self.coeffs {
            let phase: f64 = TAU * k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum::<f64>();
            acc += m * c(phase.cos(), phase.sin());
        }
        acc
    }

    /// Coefficient convolution; pointwise (pq)(x) = p(x)·q(x).
    pub fn product(&self, rhs: &MatTrigPoly) -> Result<MatTrigPoly> {
        if self.d != rhs.d {
            return Err(Error::DimensionMismatch(self.d, rhs.d));
        }
        assert_eq!(self.n, rhs.n);
        let mut out = MatTrigPoly::zero(self.n, self.d);
        for (k1, m1) in &self.coeffs {
            for (k2, m2) in &rhs.coeffs {
                let k: Vec<i64> = k1.iter().zip(k2).map(|(a, b)| a + b).collect();
                out.add_coeff(k, m1 * m2);
            }
        }
        out.prune();
        Ok(out)
    }

    /// Pointwise adjoint: coefficient at k is (M₋ₖ)^H; an involution.
    pub fn adjoint(&self) -> MatTrigPoly {
        let mut out = MatTrigPoly::zero(self.n, self.d);
        for (k, m) in &self.coeffs {
            let neg: Vec<i64> = k.iter().map(|t| -t).collect();
            out.add_coeff(neg, m.adjoint());
        }
        out
    }

    pub fn add(&self, rhs: &MatTrigPoly) -> MatTrigPoly {
        assert_eq!(self.d, rhs.d);
        let mut out = self.clone();
        for (k, m) in &rhs.coeffs {
            out.add_coeff(k.clone(), m.clone());
        }
        out.prune();
        out
    }

    pub fn sub(&self, rhs: &MatTrigPoly) -> MatTrigPoly {
        self.add(&rhs.scale(cr(-1.0)))
    }

    pub fn scale(&self, s: C64) -> MatTrigPoly {
        let mut out = self.clone();
        for m in out.coeffs.values_mut() {
            *m *= s;
        }
        out.prune();
        out
    }

    fn prune(&mut self) {
        self.coeffs.retain(|_, m| m.norm() > PRUNE_TOL);
    }

    /// ℓ² norm of the coefficient sequence (Frobenius per coefficient).
    pub fn coeff_norm(&self) -> f64 {
        (self.coeffs.values().map(|m| m.norm_squared()).sum::<f64>() + 0.0).sqrt()
    }

    /// True when p is hermitian-valued on Rⁿ, i.e. M₋ₖ = Mₖ^H for all k.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.sub(&self.adjoint()).coeff_norm() <= tol
    }

    /// The (r, c) entry as a scalar polynomial.
    pub fn entry_poly(&self, r: usize, cidx: usize) -> MatTrigPoly {
        let mut out = MatTrigPoly::zero(self.n, 1);
        for (k, m) in &self.coeffs {
            out.add_coeff(k.clone(), CMat::from_element(1, 1, m[(r, cidx)]));
        }
        out.prune();
        out
    }

    /// Assembles a block matrix polynomial from a square grid of equal-size
    /// blocks (used for the level-k complete-positivity checks).
    pub fn block_matrix(blocks: &[Vec<MatTrigPoly>]) -> MatTrigPoly {
        let rows = blocks.len();
        assert!(rows > 0 && blocks.iter().all(|r| r.len() == rows));
        let n = blocks[0][0].n;
        let d = blocks[0][0].d;
        let big = d * rows;
        let mut out = MatTrigPoly::zero(n, big);
        for (bi, row) in blocks.iter().enumerate() {
            for (bj, p) in row.iter().enumerate() {
                assert_eq!(p.d, d);
                for (k, m) in &p.coeffs {
                    let mut full = CMat::zeros(big, big);
                    full.view_mut((bi * d, bj * d), (d, d)).copy_from(m);
                    out.add_coeff(k.clone(), full);
                }
            }
        }
        out.prune();
        out
    }
}

/// A C^d-valued trigonometric polynomial (a section of the trivial bundle).
#[derive(Debug, Clone)]
pub struct VecTrigPoly {
    n: usize,
    d: usize,
    coeffs: BTreeMap<Vec<i64>, CVec>,
}

impl VecTrigPoly {
    pub fn zero(n: usize, d: usize) -> Self {
        VecTrigPoly {
            n,
            d,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, v: CVec) -> Self {
        let d = v.len();
        let mut s = VecTrigPoly::zero(n, d);
        s.add_coeff(vec![0; n], v);
        s
    }

    pub fn add_coeff(&mut self, k: Vec<i64>, v: CVec) {
        assert_eq!(k.len(), self.n);
        assert_eq!(v.len(), self.d);
        let slot = self.coeffs.entry(k).or_insert_with(|| CVec::zeros(self.d));
        *slot += v;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&Vec<i64>, &CVec)> {
        self.coeffs.iter()
    }

    pub fn evaluate(&self, x: &[f64]) -> CVec {
        let mut acc = CVec::zeros(self.d);
        for (k, v) in &self.coeffs {
            let phase: f64 = TAU * k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum::<f64>();
            acc += v * c(phase.cos(), phase.sin());
        }
        acc
    }

    /// Matrix polynomial times section: (m·s)ₖ = Σⱼ Mⱼ S_{k−j}.
    pub fn left_mul(&self, m: &MatTrigPoly) -> Result<VecTrigPoly> {
        if m.d() != self.d {
            return Err(Error::DimensionMismatch(m.d(), self.d));
        }
        let mut out = VecTrigPoly::zero(self.n, self.d);
        for (km, mm) in m.coeffs() {
            for (ks, vs) in &self.coeffs {
                let k: Vec<i64> = km.iter().zip(ks).map(|(a, b)| a + b).collect();
                out.add_coeff(k, mm * vs);
            }
        }
        Ok(out)
    }

    /// s∘r for the torus endomorphism r(x) = Ax mod Zⁿ: frequencies map to
    /// Aᵀk.
    pub fn compose_forward(&self, sys: &crate::lattice::DilationSystem) -> VecTrigPoly {
        let at = sys.matrix().transpose();
        let mut out = VecTrigPoly::zero(self.n, self.d);
        for (k, v) in &self.coeffs {
            let kv = nalgebra::DVector::from_column_slice(k);
            let nk: Vec<i64> = (&at * kv).iter().cloned().collect();
            out.add_coeff(nk, v.clone());
        }
        out
    }

    /// Rank-one operator symbol t₁(x)·t₂(x)^H as a matrix polynomial.
    pub fn outer(&self, rhs: &VecTrigPoly) -> MatTrigPoly {
        assert_eq!(self.d, rhs.d);
        let mut out = MatTrigPoly::zero(self.n, self.d);
        for (k1, v1) in &self.coeffs {
            for (k2, v2) in &rhs.coeffs {
                let k: Vec<i64> = k1.iter().zip(k2).map(|(a, b)| a - b).collect();
                out.add_coeff(k, v1 * v2.adjoint());
            }
        }
        out
    }
}

/// Regular torus grid {j/2^level}ⁿ, deterministic row-major order.
pub fn torus_grid(n: usize, level: u32) -> Vec<Vec<f64>> {
    let per_dim = 1usize << level;
    let total = per_dim.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut x = vec![0.0; n];
        for xi in x.iter_mut() {
            *xi = (rem % per_dim) as f64 / per_dim as f64;
            rem /= per_dim;
        }
        out.push(x);
    }
    out
}

/// Sup over the level-grid of ‖Σᵢ m(ψᵢx)* m(ψᵢx) − I‖₂. Zero (within grid
/// polynomial exactness) certifies the QMF equation R1 = 1.
pub fn qmf_residual(m: &MatTrigPoly, sys: &DilationSystem, grid_level: u32) -> f64 {
    let d = m.d();
    let eye = CMat::identity(d, d);
    let mut worst: f64 = 0.0;
    for x in torus_grid(sys.n(), grid_level) {
        let mut acc = CMat::zeros(d, d);
        for i in 0..sys.q() {
            let y = sys.branch_point(i, &x);
            let mv = m.evaluate(&y);
            acc += mv.adjoint() * mv;
        }
        worst = worst.max(linalg::op_norm(&(acc - &eye)));
    }
    worst
}

/// Failure reasons for the E(l) certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ElFailure {
    NormNotOne,
    DefectiveEigenvalue,
    PeripheralExtra,
}

/// Low-pass certificate for a = m(0): ‖a‖ = 1, eigenvalue 1 semisimple with
/// multiplicity l, all other eigenvalues strictly inside the unit disc.
#[derive(Debug, Clone)]
pub struct ElReport {
    pub holds: bool,
    pub l: usize,
    pub e1_basis: Vec<CVec>,
    pub spectral_margin: f64,
    pub reason: Option<ElFailure>,
    /// max over the basis of ‖m(0)* v − v‖ (zero when ‖m(0)‖ = 1).
    pub adjoint_residual: f64,
    /// max over branches j ≥ 2 and v ∈ E1 of ‖m(ψⱼ(0)) v‖ when the QMF
    /// residual vanishes; None otherwise.
    pub annihilation_residual: Option<f64>,
}

pub fn el_condition(m: &MatTrigPoly, sys: &DilationSystem, tol: f64) -> Result<ElReport> {
    let a = m.evaluate(&vec![0.0; sys.n()]);
    let d = m.d();
    let eigs = linalg::eigenvalues(&a)?;
    let fail = |reason| {
        Ok(ElReport {
            holds: false,
            l: 0,
            e1_basis: Vec::new(),
            spectral_margin: 0.0,
            reason: Some(reason),
            adjoint_residual: f64::NAN,
            annihilation_residual: None,
        })
    };

    let one_cluster: Vec<&C64> = eigs.iter().filter(|e| (*e - cr(1.0)).norm() <= tol.max(1e-10) * 10.0).collect();
    let algebraic = one_cluster.len();
    if algebraic == 0 {
        // no eigenvalue 1 at all: classify by what sits on the circle
        let peripheral_other = eigs.iter().any(|e| e.norm() >= 1.0 - tol.max(1e-10));
        if peripheral_other {
            return fail(ElFailure::PeripheralExtra);
        }
        return fail(ElFailure::NormNotOne);
    }

    let eye = CMat::identity(d, d);
    let e1_basis = linalg::kernel_basis(&(&a - &eye), 1e-8);
    let geometric = e1_basis.len();
    if geometric < algebraic {
        return fail(ElFailure::DefectiveEigenvalue);
    }

    let mut margin: f64 = 1.0;
    for e in &eigs {
        if (e - cr(1.0)).norm() <= tol.max(1e-10) * 10.0 {
            continue;
        }
        if e.norm() >= 1.0 - tol.max(1e-10) {
            return fail(ElFailure::PeripheralExtra);
        }
        margin = margin.min(1.0 - e.norm());
    }

    let norm_a = linalg::op_norm(&a);
    if (norm_a - 1.0).abs() > tol.max(1e-9) {
        return fail(ElFailure::NormNotOne);
    }

    let adjoint_residual = e1_basis
        .iter()
        .map(|v| (a.adjoint() * v - v).norm())
        .fold(0.0, f64::max);

    // when R1 = 1, the branches j >= 2 annihilate the eigenspace E1
    let annihilation_residual = if qmf_residual(m, sys, 6) <= 1e-9 {
        let zero = vec![0.0; sys.n()];
        let mut worst: f64 = 0.0;
        for j in 1..sys.q() {
            let y = sys.branch_point(j, &zero);
            let mv = m.evaluate(&y);
            for v in &e1_basis {
                worst = worst.max((&mv * v).norm());
            }
        }
        Some(worst)
    } else {
        None
    };

    Ok(ElReport {
        holds: true,
        l: geometric,
        e1_basis,
        spectral_margin: margin,
        reason: None,
        adjoint_residual,
        annihilation_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DilationSystem;
    use nalgebra::DMatrix;

    fn haar() -> MatTrigPoly {
        MatTrigPoly::scalar_1d(&[(0, cr(0.5)), (1, cr(0.5))])
    }

    fn dil2() -> DilationSystem {
        DilationSystem::new(DMatrix::from_row_slice(1, 1, &[2])).unwrap()
    }

    #[test]
    fn evaluate_haar() {
        let m = haar();
        assert!((m.evaluate(&[0.0])[(0, 0)] - cr(1.0)).norm() < 1e-15);
        assert!(m.evaluate(&[0.5])[(0, 0)].norm() < 1e-15);
        let v = m.evaluate(&[0.25])[(0, 0)];
        assert!((v - c(0.5, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn product_identity() {
        let m = haar();
        let id = MatTrigPoly::identity(1, 1);
        let p = id.product(&m).unwrap();
        assert_eq!(p, m);
    }

    #[test]
    fn adjoint_times_haar_coeffs() {
        let m = haar();
        let p = m.adjoint().product(&m).unwrap();
        assert!((p.coeff(&[-1])[(0, 0)] - cr(0.25)).norm() < 1e-15);
        assert!((p.coeff(&[0])[(0, 0)] - cr(0.5)).norm() < 1e-15);
        assert!((p.coeff(&[1])[(0, 0)] - cr(0.25)).norm() < 1e-15);
        // cross-check pointwise on a 64-grid
        for x in torus_grid(1, 6) {
            let lhs = p.evaluate(&x)[(0, 0)];
            let rhs = m.evaluate(&x)[(0, 0)].conj() * m.evaluate(&x)[(0, 0)];
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn adjoint_of_haar() {
        let m = haar();
        let a = m.adjoint();
        assert!((a.coeff(&[0])[(0, 0)] - cr(0.5)).norm() < 1e-15);
        assert!((a.coeff(&[-1])[(0, 0)] - cr(0.5)).norm() < 1e-15);
        assert_eq!(a.adjoint(), m);
    }

    #[test]
    fn hermitian_fixed_by_adjoint() {
        let p = MatTrigPoly::scalar_1d(&[(-1, cr(0.5)), (0, cr(1.0)), (1, cr(0.5))]);
        assert!(p.is_hermitian(1e-14));
        assert_eq!(p.adjoint(), p);
    }

    #[test]
    fn qmf_residuals() {
        let sys = dil2();
        assert!(qmf_residual(&haar(), &sys, 8) < 1e-14);
        let haar3 = MatTrigPoly::scalar_1d(&[(0, cr(0.5)), (3, cr(0.5))]);
        assert!(qmf_residual(&haar3, &sys, 8) < 1e-14);
        let stretched = MatTrigPoly::scalar_1d(&[(0, cr(0.5)), (2, cr(0.5))]);
        let r = qmf_residual(&stretched, &sys, 8);
        assert!((r - 1.0).abs() < 1e-12, "stretched-haar residual {r}");
    }

    #[test]
    fn el_haar() {
        let sys = dil2();
        let rep = el_condition(&haar(), &sys, 1e-8).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.l, 1);
        assert!((rep.e1_basis[0][0].norm() - 1.0).abs() < 1e-12);
        assert!(rep.adjoint_residual < 1e-12);
        assert!(rep.annihilation_residual.unwrap() < 1e-12);
    }

    #[test]
    fn el_defective_jordan_block() {
        let sys = dil2();
        let m = MatTrigPoly::constant(
            1,
            CMat::from_row_slice(2, 2, &[cr(1.0), cr(1.0), cr(0.0), cr(1.0)]),
        );
        let rep = el_condition(&m, &sys, 1e-8).unwrap();
        assert!(!rep.holds);
        assert_eq!(rep.reason, Some(ElFailure::DefectiveEigenvalue));
    }

    #[test]
    fn el_shifted_diag_block() {
        // d = 2, m = diag(haar, e₁·haar): m(0) = I₂, l = 2
        let sys = dil2();
        let mut m = MatTrigPoly::zero(1, 2);
        m.add_coeff(vec![0], CMat::from_row_slice(2, 2, &[cr(0.5), cr(0.0), cr(0.0), cr(0.0)]));
        m.add_coeff(vec![1], CMat::from_row_slice(2, 2, &[cr(0.5), cr(0.0), cr(0.0), cr(0.5)]));
        m.add_coeff(vec![2], CMat::from_row_slice(2, 2, &[cr(0.0), cr(0.0), cr(0.0), cr(0.5)]));
        let rep = el_condition(&m, &sys, 1e-8).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.l, 2);
    }

    #[test]
    fn peripheral_extra_detected() {
        let sys = dil2();
        let m = MatTrigPoly::constant(
            1,
            CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)]),
        );
        let rep = el_condition(&m, &sys, 1e-8).unwrap();
        assert!(!rep.holds);
        assert_eq!(rep.reason, Some(ElFailure::PeripheralExtra));
    }

    #[test]
    fn norm_not_one_detected() {
        let sys = dil2();
        // spectral radius strictly inside the disc: no eigenvalue 1 at all
        let m = MatTrigPoly::constant(1, CMat::from_element(1, 1, cr(0.5)));
        let rep = el_condition(&m, &sys, 1e-8).unwrap();
        assert!(!rep.holds);
        assert_eq!(rep.reason, Some(ElFailure::NormNotOne));
        // eigenvalue 1 present but operator norm above 1
        let m2 = MatTrigPoly::constant(
            1,
            CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(3.0), cr(0.2)]),
        );
        let rep2 = el_condition(&m2, &sys, 1e-8).unwrap();
        assert!(!rep2.holds);
        assert_eq!(rep2.reason, Some(ElFailure::NormNotOne));
    }
}
