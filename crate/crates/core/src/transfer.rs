//! The transfer operator R in exact coefficient form: invariant frequency
//! sets, the finite transition matrix, its spectrum, the spectral projection
//! T1 onto the harmonic maps, and sampled Cesàro means for non-polynomial
//! arguments.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::lattice::DilationSystem;
use crate::linalg::{self, cr, CMat, CVec, C64};
use crate::trigmat::MatTrigPoly;

/// Applies R in coefficient form: (Rh)ₛ = q·F_{Aᵀs} with F = m* h m by
/// convolution. Pointwise this equals Σᵢ m(ψᵢx)* h(ψᵢx) m(ψᵢx).
pub fn transfer_apply(
    m: &MatTrigPoly,
    sys: &DilationSystem,
    h: &MatTrigPoly,
) -> Result<MatTrigPoly> {
    if m.d() != h.d() {
        return Err(Error::DimensionMismatch(m.d(), h.d()));
    }
    let f = m.adjoint().product(h)?.product(m)?;
    let mut out = MatTrigPoly::zero(m.n(), m.d());
    let q = cr(sys.q() as f64);
    for (t, ft) in f.coeffs() {
        if let Some(s) = sys.freq_preimage(t) {
            out.add_coeff(s, ft * q);
        }
    }
    Ok(out)
}

/// A finite, lexicographically sorted set of integer frequencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    freqs: Vec<Vec<i64>>,
}

impl SupportSet {
    pub fn new(mut freqs: Vec<Vec<i64>>) -> Self {
        freqs.sort();
        freqs.dedup();
        SupportSet { freqs }
    }

    pub fn freqs(&self) -> &[Vec<i64>] {
        &self.freqs
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn contains(&self, s: &[i64]) -> bool {
        self.freqs.binary_search_by(|f| f.as_slice().cmp(s)).is_ok()
    }

    pub fn index_of(&self, s: &[i64]) -> Option<usize> {
        self.freqs.binary_search_by(|f| f.as_slice().cmp(s)).ok()
    }
}

/// Difference set D = supp(m) − supp(m).
fn difference_set(m: &MatTrigPoly) -> Vec<Vec<i64>> {
    let supp = m.support();
    let mut d: BTreeSet<Vec<i64>> = BTreeSet::new();
    for k2 in &supp {
        for k1 in &supp {
            d.insert(k2.iter().zip(k1).map(|(a, b)| a - b).collect());
        }
    }
    d.into_iter().collect()
}

/// Checks that `set` is closed under the transfer operator for filter `m`:
/// any integer A⁻ᵀ(s + δ) with s ∈ set, δ ∈ D must land in `set`.
fn verify_closed(set: &SupportSet, m: &MatTrigPoly, sys: &DilationSystem) -> Result<()> {
    let d = difference_set(m);
    for s in set.freqs() {
        for delta in &d {
            let t: Vec<i64> = s.iter().zip(delta).map(|(a, b)| a + b).collect();
            if let Some(sp) = sys.freq_preimage(&t) {
                if !set.contains(&sp) {
                    return Err(Error::SupportNotClosed(sp));
                }
            }
        }
    }
    Ok(())
}

/// The safe invariant frequency set K* = {s ∈ Zⁿ : ‖s‖ ≤ θ·Dmax/(1−θ)} in the
/// frequency adapted norm. Any h supported in K* has Rh supported in K*, and
/// R-iterates of any polynomial eventually have support in K*.
pub fn invariant_support(m: &MatTrigPoly, sys: &DilationSystem) -> SupportSet {
    let theta = sys.theta();
    let dmax = difference_set(m)
        .iter()
        .map(|delta| sys.freq_norm().eval_int(delta))
        .fold(0.0, f64::max);
    let radius = theta * dmax / (1.0 - theta) + 1e-9;
    let bound = radius.floor() as i64;
    let n = sys.n();
    let mut freqs = Vec::new();
    let mut g = vec![-bound; n];
    'enumerate: loop {
        if sys.freq_norm().eval_int(&g) <= radius {
            freqs.push(g.clone());
        }
        for i in (0..n).rev() {
            if g[i] < bound {
                g[i] += 1;
                continue 'enumerate;
            }
            g[i] = -bound;
        }
        break;
    }
    let set = SupportSet::new(freqs);
    debug_assert!(set.contains(&vec![0; n]));
    verify_closed(&set, m, sys).expect("norm-ball support must be closed");
    set
}

/// Smallest closed superset of K* ∪ seed, grown by forward closure.
pub fn closed_superset(
    seed: &[Vec<i64>],
    m: &MatTrigPoly,
    sys: &DilationSystem,
) -> SupportSet {
    let base = invariant_support(m, sys);
    let mut set: BTreeSet<Vec<i64>> = base.freqs().iter().cloned().collect();
    for s in seed {
        set.insert(s.clone());
    }
    let d = difference_set(m);
    loop {
        let mut added = Vec::new();
        for s in &set {
            for delta in &d {
                let t: Vec<i64> = s.iter().zip(delta).map(|(a, b)| a + b).collect();
                if let Some(sp) = sys.freq_preimage(&t) {
                    if !set.contains(&sp) {
                        added.push(sp);
                    }
                }
            }
        }
        if added.is_empty() {
            break;
        }
        set.extend(added);
    }
    SupportSet::new(set.into_iter().collect())
}

/// R as a dense matrix on the coefficient space of polynomials supported in a
/// closed frequency set. Basis order: frequency-major, then row-major matrix
/// entries, so index = freq_idx·d² + a·d + b.
#[derive(Debug, Clone)]
pub struct TransitionOperator {
    support: SupportSet,
    d: usize,
    n: usize,
    matrix: CMat,
}

impl TransitionOperator {
    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Coefficient vector of a polynomial supported in this set.
    pub fn poly_to_vec(&self, h: &MatTrigPoly) -> Result<CVec> {
        let d = self.d;
        let mut v = CVec::zeros(self.dim());
        for (k, mat) in h.coeffs() {
            let idx = self
                .support
                .index_of(k)
                .ok_or_else(|| Error::SupportNotClosed(k.clone()))?;
            for a in 0..d {
                for b in 0..d {
                    v[idx * d * d + a * d + b] = mat[(a, b)];
                }
            }
        }
        Ok(v)
    }

    pub fn vec_to_poly(&self, v: &CVec) -> MatTrigPoly {
        let d = self.d;
        let mut p = MatTrigPoly::zero(self.n, d);
        for (idx, k) in self.support.freqs().iter().enumerate() {
            let mut mat = CMat::zeros(d, d);
            for a in 0..d {
                for b in 0..d {
                    mat[(a, b)] = v[idx * d * d + a * d + b];
                }
            }
            p.add_coeff(k.clone(), mat);
        }
        p
    }
}

/// Assembles the transition matrix columnwise from `transfer_apply`.
pub fn transition_operator(
    m: &MatTrigPoly,
    sys: &DilationSystem,
    support: &SupportSet,
) -> Result<TransitionOperator> {
    verify_closed(support, m, sys)?;
    let d = m.d();
    let n = sys.n();
    let size = support.len() * d * d;
    let mut matrix = CMat::zeros(size, size);
    for (col_f, k) in support.freqs().iter().enumerate() {
        for a in 0..d {
            for b in 0..d {
                let mut basis = CMat::zeros(d, d);
                basis[(a, b)] = cr(1.0);
                let h = MatTrigPoly::from_coeffs(n, d, vec![(k.clone(), basis)]);
                let rh = transfer_apply(m, sys, &h)?;
                let col = col_f * d * d + a * d + b;
                for (s, mat) in rh.coeffs() {
                    let row_f = support
                        .index_of(s)
                        .ok_or_else(|| Error::SupportNotClosed(s.clone()))?;
                    for ar in 0..d {
                        for br in 0..d {
                            matrix[(row_f * d * d + ar * d + br, col)] = mat[(ar, br)];
                        }
                    }
                }
            }
        }
    }
    Ok(TransitionOperator {
        support: support.clone(),
        d,
        n,
        matrix,
    })
}

/// Spectral analysis of a transition operator: eigenvalues, harmonic fixed
/// spaces, and the spectral projection T1 onto the eigenvalue 1.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<C64>,
    pub fixed_right: Vec<MatTrigPoly>,
    pub fixed_right_vecs: Vec<CVec>,
    pub fixed_left: Vec<CVec>,
    pub t1: CMat,
    pub peripheral: Vec<C64>,
    pub semisimple_peripheral: bool,
    /// True when the spectrum certifies sup_k ‖R^k‖ < ∞: spectral radius ≤ 1
    /// and all unimodular eigenvalues semisimple.
    pub power_bounded: bool,
    pub theta: f64,
}

impl SpectralData {
    pub fn fixed_dim(&self) -> usize {
        self.fixed_right.len()
    }

    /// T1 applied to a coefficient vector.
    pub fn t1_apply_vec(&self, v: &CVec) -> CVec {
        &self.t1 * v
    }
}

pub fn spectral_data(t: &TransitionOperator, tol: f64, sys: &DilationSystem) -> Result<SpectralData> {
    let mat = t.matrix();
    let size = t.dim();
    let mut eigenvalues = linalg::eigenvalues(mat)?;
    eigenvalues.sort_by(|x, y| {
        (-x.norm(), x.re, x.im)
            .partial_cmp(&(-y.norm(), y.re, y.im))
            .unwrap()
    });
    let sr = eigenvalues.first().map(|e| e.norm()).unwrap_or(0.0);
    // Defective eigenvalues split under the Schur iteration by roughly
    // eps^(1/jordan_size), so the peripheral band and multiplicity counting
    // need a coarser tolerance than the eigensolve itself.
    let scale = sr.max(1.0);
    let ctol = tol.max(1e-6) * scale;
    let peri_cut = sr.max(1.0) - ctol;
    let peripheral: Vec<C64> = eigenvalues.iter().cloned().filter(|e| e.norm() >= peri_cut).collect();
    let clusters = linalg::cluster_eigenvalues(&peripheral, ctol);
    let eye = CMat::identity(size, size);
    let mut semisimple = true;
    for (lambda, algebraic) in &clusters {
        let shifted = mat - &eye * *lambda;
        let geometric = linalg::kernel_basis(&shifted, ctol).len();
        if geometric < *algebraic {
            return Err(Error::DefectivePeripheral {
                eigenvalue: format!("{:.6}+{:.6}i", lambda.re, lambda.im),
                algebraic: *algebraic,
                geometric,
            });
        }
        if geometric != *algebraic {
            semisimple = false;
        }
    }

    let power_bounded = sr <= 1.0 + tol.max(1e-8) && semisimple;

    // spectral projection onto the eigenvalue 1 via biorthogonal kernels
    let has_one = eigenvalues.iter().any(|e| (e - cr(1.0)).norm() <= 1e-8);
    let (fixed_right_vecs, fixed_left, t1) = if has_one {
        let shifted = mat - &eye;
        let v = linalg::kernel_basis(&shifted, 1e-8);
        let w = linalg::left_kernel_basis(&shifted, 1e-8);
        if v.len() != w.len() {
            return Err(Error::DefectivePeripheral {
                eigenvalue: "1".into(),
                algebraic: w.len(),
                geometric: v.len(),
            });
        }
        let vm = CMat::from_columns(&v);
        let wm = CMat::from_columns(&w);
        let overlap = wm.adjoint() * &vm;
        // a defective eigenvalue 1 makes the right/left kernels deficient or
        // near-orthogonal; refuse rather than invert an ill-conditioned Gram
        if linalg::min_singular_value(&overlap) < 1e-10 {
            return Err(Error::DefectivePeripheral {
                eigenvalue: "1".into(),
                algebraic: w.len(),
                geometric: v.len(),
            });
        }
        let inv = overlap.clone().try_inverse().ok_or(Error::DefectivePeripheral {
            eigenvalue: "1".into(),
            algebraic: v.len(),
            geometric: v.len(),
        })?;
        let t1 = &vm * inv * wm.adjoint();
        (v, w, t1)
    } else {
        (Vec::new(), Vec::new(), CMat::zeros(size, size))
    };

    let fixed_right: Vec<MatTrigPoly> = fixed_right_vecs.iter().map(|v| t.vec_to_poly(v)).collect();

    Ok(SpectralData {
        eigenvalues,
        fixed_right,
        fixed_right_vecs,
        fixed_left,
        t1,
        peripheral,
        semisimple_peripheral: semisimple,
        power_bounded,
        theta: sys.theta(),
    })
}

/// (1/k) Σ_{j=1}^k T^j, the Cesàro mean of matrix powers. Independent oracle
/// for the spectral projection T1; converges at rate O(1/k).
pub fn cesaro_matrix(t: &TransitionOperator, k: usize) -> CMat {
    let size = t.dim();
    let mut sum = CMat::zeros(size, size);
    let mut pow = CMat::identity(size, size);
    for _ in 1..=k {
        pow = t.matrix() * pow;
        sum += &pow;
    }
    sum / cr(k as f64)
}

/// Richardson extrapolation of the Cesàro means, 2·C_k − C_{k/2}. The plain
/// mean carries an O(1/k) tail from contracting eigenvalues; the
/// extrapolation cancels that term, leaving geometric-order agreement with
/// the spectral projection. `k` must be even (even k also annihilates a
/// peripheral eigenvalue −1 exactly).
pub fn cesaro_extrapolated(t: &TransitionOperator, k: usize) -> CMat {
    assert!(k >= 2 && k % 2 == 0);
    let size = t.dim();
    let mut sum_half = CMat::zeros(size, size);
    let mut sum_full = CMat::zeros(size, size);
    let mut pow = CMat::identity(size, size);
    for j in 1..=k {
        pow = t.matrix() * pow;
        sum_full += &pow;
        if j <= k / 2 {
            sum_half += &pow;
        }
    }
    sum_full * cr(2.0 / k as f64) - sum_half * cr(2.0 / k as f64)
}

/// Essential-radius bound certifying peripheral eigenvalues isolated:
/// max(θ, spectral radius of A⁻¹) plus a safety margin.
pub fn ess_radius_bound(sys: &DilationSystem) -> f64 {
    sys.theta().max(sys.inverse_spectral_radius()) + 1e-9
}

/// Pointwise Cesàro mean (1/k)Σ_{j=1}^k (R^j f)(x) by direct preimage
/// summation, for arguments that are not trigonometric polynomials.
///
/// Direct summation costs qʲ terms at stage j. When k exceeds the depth the
/// budget allows, the iterates must have stabilized (Cauchy, allowing a
/// period-2 limit cycle from peripheral eigenvalue −1); the remaining Cesàro
/// weight is then assigned to the stabilized value. Otherwise the call fails
/// with `BudgetExceeded`.
pub fn cesaro_apply(
    m: &MatTrigPoly,
    sys: &DilationSystem,
    f: &dyn Fn(&[f64]) -> CMat,
    x: &[f64],
    k: usize,
    budget: u64,
) -> Result<CMat> {
    let d = m.d();
    let q = sys.q();
    // deepest level the budget allows
    let mut depth_cap = 0usize;
    let mut nodes = 1u64;
    while nodes.saturating_mul(q as u64) <= budget {
        nodes = nodes.saturating_mul(q as u64);
        depth_cap += 1;
    }
    let depth = k.min(depth_cap);

    let mut level: Vec<(Vec<f64>, CMat)> = vec![(x.to_vec(), CMat::identity(d, d))];
    let mut iterates: Vec<CMat> = Vec::with_capacity(depth);
    let mut sum = CMat::zeros(d, d);
    for _ in 1..=depth {
        let mut next = Vec::with_capacity(level.len() * q);
        for (z, prod) in &level {
            for i in 0..q {
                let zi = sys.branch_point(i, z);
                let prod_i = m.evaluate(&zi) * prod;
                next.push((zi, prod_i));
            }
        }
        let mut v = CMat::zeros(d, d);
        for (z, prod) in &next {
            v += prod.adjoint() * f(z) * prod;
        }
        sum += &v;
        iterates.push(v);
        level = next;
    }

    if depth == k {
        return Ok(sum / cr(k as f64));
    }

    // stabilization: require the last iterates Cauchy up to a 2-cycle
    let j = iterates.len();
    if j < 4 {
        return Err(Error::BudgetExceeded {
            needed: (q as u64).saturating_pow(k.min(63) as u32),
            budget,
        });
    }
    let d1 = linalg::op_norm(&(&iterates[j - 1] - &iterates[j - 3]));
    let d2 = linalg::op_norm(&(&iterates[j - 2] - &iterates[j - 4]));
    let scale = linalg::op_norm(&iterates[j - 1]).max(1.0);
    if d1 > 1e-8 * scale || d2 > 1e-8 * scale {
        return Err(Error::BudgetExceeded {
            needed: (q as u64).saturating_pow(k.min(63) as u32),
            budget,
        });
    }
    // average of the last two iterates absorbs a possible −1 cycle
    let mu = (&iterates[j - 1] + &iterates[j - 2]).scale(0.5);
    let tail = cr((k - depth) as f64);
    Ok((sum + mu * tail) / cr(k as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trigmat::torus_grid;
    use nalgebra::DMatrix;

    fn dil2() -> DilationSystem {
        DilationSystem::new(DMatrix::from_row_slice(1, 1, &[2])).unwrap()
    }

    fn haar() -> MatTrigPoly {
        MatTrigPoly::scalar_1d(&[(0, cr(0.5)), (1, cr(0.5))])
    }

    fn haar3() -> MatTrigPoly {
        MatTrigPoly::scalar_1d(&[(0, cr(0.5)), (3, cr(0.5))])
    }

    #[test]
    fn haar_qmf_fixed_point() {
        let sys = dil2();
        let one = MatTrigPoly::identity(1, 1);
        let r1 = transfer_apply(&haar(), &sys, &one).unwrap();
        assert!(r1.sub(&one).coeff_norm() < 1e-14);
    }

    #[test]
    fn haar_shift_image() {
        let sys = dil2();
        let e1 = MatTrigPoly::scalar_1d(&[(1, cr(1.0))]);
        let r = transfer_apply(&haar(), &sys, &e1).unwrap();
        assert!((r.coeff(&[0])[(0, 0)] - cr(0.5)).norm() < 1e-14);
        assert!((r.coeff(&[1])[(0, 0)] - cr(0.5)).norm() < 1e-14);
        assert_eq!(r.num_coeffs(), 2);
    }

    #[test]
    fn haar3_shift_image() {
        let sys = dil2();
        let e3 = MatTrigPoly::scalar_1d(&[(3, cr(1.0))]);
        let r = transfer_apply(&haar3(), &sys, &e3).unwrap();
        assert!((r.coeff(&[0])[(0, 0)] - cr(0.5)).norm() < 1e-14);
        assert!((r.coeff(&[3])[(0, 0)] - cr(0.5)).norm() < 1e-14);
        assert_eq!(r.num_coeffs(), 2);
    }

    #[test]
    fn invariant_support_examples() {
        let sys = dil2();
        let k = invariant_support(&haar(), &sys);
        assert_eq!(k.freqs(), &[vec![-1], vec![0], vec![1]]);
        let k3 = invariant_support(&haar3(), &sys);
        assert_eq!(k3.len(), 7);
        assert!(k3.contains(&[-3]) && k3.contains(&[3]));
        let const_filter = MatTrigPoly::scalar_1d(&[(0, cr(1.0))]);
        let k0 = invariant_support(&const_filter, &sys);
        assert_eq!(k0.freqs(), &[vec![0]]);
    }

    #[test]
    fn transition_haar_actions() {
        let sys = dil2();
        let k = invariant_support(&haar(), &sys);
        let t = transition_operator(&haar(), &sys, &k).unwrap();
        assert_eq!(t.dim(), 3);
        // e₋₁ ↦ (e₋₁+e₀)/2, e₀ ↦ e₀, e₁ ↦ (e₀+e₁)/2
        let em1 = MatTrigPoly::scalar_1d(&[(-1, cr(1.0))]);
        let r = t.vec_to_poly(&(t.matrix() * t.poly_to_vec(&em1).unwrap()));
        assert!((r.coeff(&[-1])[(0, 0)] - cr(0.5)).norm() < 1e-14);
        assert!((r.coeff(&[0])[(0, 0)] - cr(0.5)).norm() < 1e-14);
    }

    #[test]
    fn transition_sizes() {
        let sys = dil2();
        let k3 = invariant_support(&haar3(), &sys);
        let t3 = transition_operator(&haar3(), &sys, &k3).unwrap();
        assert_eq!(t3.dim(), 7);

        let mut m = MatTrigPoly::zero(1, 2);
        m.add_coeff(vec![0], CMat::from_row_slice(2, 2, &[cr(0.5), cr(0.0), cr(0.0), cr(0.0)]));
        m.add_coeff(vec![1], CMat::from_row_slice(2, 2, &[cr(0.5), cr(0.0), cr(0.0), cr(0.5)]));
        m.add_coeff(vec![2], CMat::from_row_slice(2, 2, &[cr(0.0), cr(0.0), cr(0.0), cr(0.5)]));
        // {−1,0,1} is itself closed for this filter and carries a 12-dim operator
        let k = SupportSet::new(vec![vec![-1], vec![0], vec![1]]);
        let t = transition_operator(&m, &sys, &k).unwrap();
        assert_eq!(t.dim(), 12);
        // the safe norm-ball superset is closed as well
        let ksafe = invariant_support(&m, &sys);
        assert!(transition_operator(&m, &sys, &ksafe).is_ok());
    }

    #[test]
    fn spectral_haar() {
        let sys = dil2();
        let k = invariant_support(&haar(), &sys);
        let t = transition_operator(&haar(), &sys, &k).unwrap();
        let sd = spectral_data(&t, 1e-8, &sys).unwrap();
        assert_eq!(sd.fixed_dim(), 1);
        let mods: Vec<f64> = sd.eigenvalues.iter().map(|e| e.norm()).collect();
        assert!((mods[0] - 1.0).abs() < 1e-10);
        assert!((mods[1] - 0.5).abs() < 1e-10);
        assert!((mods[2] - 0.5).abs() < 1e-10);
        assert!(sd.power_bounded);
        // T1 e₁ = e₀
        let e1 = MatTrigPoly::scalar_1d(&[(1, cr(1.0))]);
        let img = t.vec_to_poly(&sd.t1_apply_vec(&t.poly_to_vec(&e1).unwrap()));
        assert!((img.coeff(&[0])[(0, 0)] - cr(1.0)).norm() < 1e-10);
        assert_eq!(img.num_coeffs(), 1);
    }

    #[test]
    fn spectral_haar3_fixed_space_and_minus_one() {
        let sys = dil2();
        let k = invariant_support(&haar3(), &sys);
        let t = transition_operator(&haar3(), &sys, &k).unwrap();
        let sd = spectral_data(&t, 1e-8, &sys).unwrap();
        assert_eq!(sd.fixed_dim(), 2);
        // peripheral spectrum {1, 1, -1}
        let ones = sd.eigenvalues.iter().filter(|e| (*e - cr(1.0)).norm() < 1e-9).count();
        let negs = sd.eigenvalues.iter().filter(|e| (*e + cr(1.0)).norm() < 1e-9).count();
        assert_eq!(ones, 2);
        assert_eq!(negs, 1);
        assert!(sd.power_bounded);
        // fixed space contains 1 and 2cos2πx + cos4πx
        let one_vec = t.poly_to_vec(&MatTrigPoly::identity(1, 1)).unwrap();
        let resid = (t.matrix() * &one_vec - &one_vec).norm();
        assert!(resid < 1e-12);
        let u = MatTrigPoly::scalar_1d(&[(-2, cr(0.5)), (-1, cr(1.0)), (1, cr(1.0)), (2, cr(0.5))]);
        let uv = t.poly_to_vec(&u).unwrap();
        assert!((t.matrix() * &uv - &uv).norm() < 1e-12);
    }

    #[test]
    fn t1_identities() {
        let sys = dil2();
        for m in [haar(), haar3()] {
            let k = invariant_support(&m, &sys);
            let t = transition_operator(&m, &sys, &k).unwrap();
            let sd = spectral_data(&t, 1e-8, &sys).unwrap();
            let t1 = &sd.t1;
            assert!(linalg::op_norm(&(t1 * t1 - t1)) < 1e-10);
            assert!(linalg::op_norm(&(t1 * t.matrix() - t1)) < 1e-10);
            assert!(linalg::op_norm(&(t.matrix() * t1 - t1)) < 1e-10);
        }
    }

    #[test]
    fn cesaro_matrix_matches_t1() {
        let sys = dil2();
        let k = invariant_support(&haar3(), &sys);
        let t = transition_operator(&haar3(), &sys, &k).unwrap();
        let sd = spectral_data(&t, 1e-8, &sys).unwrap();
        // plain Cesàro carries an O(1/k) tail; the extrapolated mean does not
        let plain = cesaro_matrix(&t, 1 << 12);
        assert!(linalg::op_norm(&(plain - &sd.t1)) < 1e-3);
        let extra = cesaro_extrapolated(&t, 1 << 12);
        assert!(linalg::op_norm(&(extra - &sd.t1)) < 1e-8);
    }

    #[test]
    fn defective_peripheral_refused() {
        let sys = dil2();
        let m = MatTrigPoly::constant(
            1,
            CMat::from_row_slice(2, 2, &[cr(1.0), cr(1.0), cr(0.0), cr(1.0)]),
        );
        let k = invariant_support(&m, &sys);
        let t = transition_operator(&m, &sys, &k).unwrap();
        assert!(matches!(
            spectral_data(&t, 1e-8, &sys),
            Err(Error::DefectivePeripheral { .. })
        ));
    }

    #[test]
    fn ess_radius_examples() {
        assert!((ess_radius_bound(&dil2()) - 0.5).abs() < 1e-6);
        let sys2 = DilationSystem::new(DMatrix::from_row_slice(2, 2, &[2, 0, 0, 2])).unwrap();
        assert!((ess_radius_bound(&sys2) - 0.5).abs() < 1e-6);
        let quincunx = DilationSystem::new(DMatrix::from_row_slice(2, 2, &[1, 1, -1, 1])).unwrap();
        assert!((ess_radius_bound(&quincunx) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn positivity_preserved() {
        let sys = dil2();
        // h = g* g is pointwise PSD; R h must be PSD on the grid
        let g = MatTrigPoly::scalar_1d(&[(0, crate::linalg::c(0.3, 0.1)), (1, cr(0.7)), (-2, crate::linalg::c(-0.2, 0.4))]);
        let h = g.adjoint().product(&g).unwrap();
        let rh = transfer_apply(&haar3(), &sys, &h).unwrap();
        for x in torus_grid(1, 7) {
            assert!(linalg::hermitian_min_eig(&rh.evaluate(&x)) > -1e-10);
        }
    }

    #[test]
    fn cesaro_apply_fixed_point_is_exact() {
        let sys = dil2();
        let m = haar();
        let one = MatTrigPoly::identity(1, 1);
        let f = move |x: &[f64]| one.evaluate(x);
        let v = cesaro_apply(&m, &sys, &f, &[0.3], 12, 1 << 16).unwrap();
        assert!((v[(0, 0)] - cr(1.0)).norm() < 1e-10);
    }

    #[test]
    fn cesaro_apply_haar_e1_large_k() {
        let sys = dil2();
        let m = haar();
        let e1 = MatTrigPoly::scalar_1d(&[(1, cr(1.0))]);
        let f = move |x: &[f64]| e1.evaluate(x);
        let v = cesaro_apply(&m, &sys, &f, &[0.0], 1 << 10, 1 << 16).unwrap();
        assert!((v[(0, 0)] - cr(1.0)).norm() < 1e-3);
    }

    #[test]
    fn cesaro_apply_stretched_haar() {
        let sys = dil2();
        let m = MatTrigPoly::scalar_1d(&[(0, cr(0.5)), (2, cr(0.5))]);
        let one = MatTrigPoly::identity(1, 1);
        let f = move |x: &[f64]| one.evaluate(x);
        let v = cesaro_apply(&m, &sys, &f, &[0.0], 1 << 10, 1 << 16).unwrap();
        assert!((v[(0, 0)] - cr(2.0)).norm() < 1e-6);
    }
}
