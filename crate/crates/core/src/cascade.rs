//! Refinement-operator iterates, truncated infinite products P(x),
//! scaling-map correlations by lattice summation, and convergence
//! certificates.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::harmonic::HarmonicAlgebra;
use crate::lattice::DilationSystem;
use crate::linalg::{self, cr, CMat, CVec, C64};
use crate::transfer::{transfer_apply, SpectralData, TransitionOperator};
use crate::trigmat::{qmf_residual, ElReport, MatTrigPoly, VecTrigPoly};

/// The built-in window: a normalized tensor tent,
/// f(x) = tent(x)/sqrt(Σ_g tent(x+g)²). Lipschitz, ⟨f,f⟩' = 1, f(0) = 1 and
/// f(g) = 0 at nonzero lattice points; support [−1,1]ⁿ.
#[derive(Debug, Clone, Copy)]
pub struct TentWindow {
    n: usize,
}

impl TentWindow {
    pub fn new(n: usize) -> Self {
        TentWindow { n }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        let mut out = 1.0;
        for &xi in x {
            let t = (1.0 - xi.abs()).max(0.0);
            let fr = xi.rem_euclid(1.0);
            let denom = ((1.0 - fr) * (1.0 - fr) + fr * fr).sqrt();
            out *= t / denom;
        }
        out
    }

    /// Support radius in ‖·‖_∞.
    pub fn support_radius(&self) -> f64 {
        1.0
    }
}

/// A truncated infinite product P(x) ≈ m(A⁻ᵏx)⋯m(A⁻¹x) with an a-posteriori
/// error bound.
#[derive(Debug, Clone)]
pub struct ProductEvaluation {
    pub x: Vec<f64>,
    pub k: usize,
    pub value: CMat,
    pub err: f64,
}

/// Evaluates P(x) = lim m(A⁻ᵏx)⋯m(A⁻¹x) for a QMF low-pass filter, with the
/// truncation error split into a Lipschitz tail (geometric in ‖A⁻ᵏ‖) and the
/// power decay of m(0) towards the E1 projection. Both constants are
/// computed from the filter, not guessed.
#[derive(Debug, Clone)]
pub struct ProductEvaluator {
    m: MatTrigPoly,
    sys: DilationSystem,
    d: usize,
    /// Orthogonal projection onto E1.
    pi1: CMat,
    /// 2π Σ ‖k‖‖M_k‖: Lipschitz constant of m in the Euclidean metric.
    lip: f64,
    /// ‖A^{-j}‖₂ for j = 0, 1, …
    anorms: Vec<f64>,
    /// Σ_{j≥1} ‖A^{-j}‖₂ (with certified-ratio tail).
    s_a: f64,
    /// ‖(m(0) − Π₁)^p‖₂ for p = 0, 1, …
    npows: Vec<f64>,
    /// sup_p ‖N^p‖.
    c_n: f64,
    max_depth: usize,
}

impl ProductEvaluator {
    pub fn new(m: &MatTrigPoly, sys: &DilationSystem, el: &ElReport) -> Result<Self> {
        if !el.holds {
            return Err(Error::PreconditionFailed(
                "E(l) does not hold for m(0)".into(),
            ));
        }
        if qmf_residual(m, sys, 6) > 1e-9 {
            return Err(Error::PreconditionFailed(
                "QMF residual is not zero; the product bound needs ‖m‖ ≤ 1".into(),
            ));
        }
        let d = m.d();
        let mut pi1 = CMat::zeros(d, d);
        for v in &el.e1_basis {
            pi1 += v * v.adjoint();
        }
        let lip = 2.0
            * PI
            * m.coeffs()
                .map(|(k, mat)| {
                    let kn = k.iter().map(|&t| (t * t) as f64).sum::<f64>().sqrt();
                    kn * linalg::op_norm(mat)
                })
                .sum::<f64>();

        // ‖A^{-j}‖ table and its sum with a geometric tail bound
        let ainv_c = sys.inverse().map(linalg::cr);
        let mut anorms = vec![1.0];
        let mut pow = CMat::identity(sys.n(), sys.n());
        for _ in 0..96 {
            pow = &ainv_c * &pow;
            anorms.push(linalg::op_norm(&pow));
            if *anorms.last().unwrap() < 1e-15 {
                break;
            }
        }
        let mut s_a: f64 = anorms[1..].iter().sum();
        let last = *anorms.last().unwrap();
        if anorms.len() >= 3 {
            let ratio = anorms[anorms.len() - 1] / anorms[anorms.len() - 2];
            if ratio < 1.0 {
                s_a += last * ratio / (1.0 - ratio);
            }
        }

        // N = m(0) − Π₁ power decay
        let m0 = m.evaluate(&vec![0.0; sys.n()]);
        let n_mat = &m0 - &pi1;
        let mut npows = vec![linalg::op_norm(&(CMat::identity(d, d) - &pi1))];
        let mut npow = CMat::identity(d, d);
        for _ in 0..256 {
            npow = &n_mat * &npow;
            npows.push(linalg::op_norm(&npow));
            if *npows.last().unwrap() < 1e-15 {
                break;
            }
        }
        let c_n = npows.iter().cloned().fold(0.0, f64::max).max(1.0);

        Ok(ProductEvaluator {
            m: m.clone(),
            sys: sys.clone(),
            d,
            pi1,
            lip,
            anorms,
            s_a,
            npows,
            c_n,
            max_depth: 4096,
        })
    }

    pub fn e1_projection(&self) -> &CMat {
        &self.pi1
    }

    /// Upper bound for ‖P(x) − V_K(x)‖ at truncation depth K, minimized over
    /// the split K = k + p of Lipschitz and power-decay parts.
    pub fn err_bound(&self, x_norm: f64, total_depth: usize) -> f64 {
        let mut best = f64::INFINITY;
        for k in 0..=total_depth {
            let p = total_depth - k;
            let a = self
                .anorms
                .get(k)
                .cloned()
                .unwrap_or_else(|| *self.anorms.last().unwrap());
            let np = self
                .npows
                .get(p)
                .cloned()
                .unwrap_or_else(|| *self.npows.last().unwrap());
            let lip_part = 2.0 * self.lip * self.s_a * a * x_norm;
            let pow_part = 2.0 * self.c_n * np;
            best = best.min(lip_part + pow_part);
        }
        best
    }

    fn depth_for(&self, x_norm: f64, tol: f64) -> Result<usize> {
        for k in 1..=self.max_depth {
            if self.err_bound(x_norm, k) <= tol {
                return Ok(k);
            }
        }
        Err(Error::TolNotReached {
            tol,
            depth: self.max_depth,
            achieved: self.err_bound(x_norm, self.max_depth),
        })
    }

    /// The truncated product at certified accuracy `tol`.
    pub fn eval(&self, x: &[f64], tol: f64) -> Result<ProductEvaluation> {
        let x_norm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        let k = self.depth_for(x_norm, tol)?;
        Ok(self.eval_at_depth(x, k))
    }

    /// The truncated product at a fixed depth with its error bound.
    pub fn eval_at_depth(&self, x: &[f64], k: usize) -> ProductEvaluation {
        let x_norm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        let mut value = CMat::identity(self.d, self.d);
        let mut point = x.to_vec();
        let ainv = self.sys.inverse();
        for _ in 1..=k {
            let v = nalgebra::DVector::from_column_slice(&point);
            point = (ainv * v).iter().cloned().collect();
            value = self.m.evaluate(&point) * value;
        }
        ProductEvaluation {
            x: x.to_vec(),
            k,
            value,
            err: self.err_bound(x_norm, k),
        }
    }
}

/// One-call form: builds the evaluator (checking the QMF and E(l)
/// hypotheses) and evaluates P(x) to tolerance `tol`, verifying the range
/// identity m(0)·P = P, and at lattice points the E1 annihilation.
pub fn matrix_product_p(
    m: &MatTrigPoly,
    sys: &DilationSystem,
    el: &ElReport,
    x: &[f64],
    tol: f64,
) -> Result<ProductEvaluation> {
    let ev = ProductEvaluator::new(m, sys, el)?;
    let out = ev.eval(x, tol)?;
    let m0 = m.evaluate(&vec![0.0; sys.n()]);
    let range_resid = linalg::op_norm(&(&m0 * &out.value - &out.value));
    if range_resid > 2.0 * out.err + 1e-9 {
        return Err(Error::NumericalFailure(format!(
            "range identity m(0)P = P violated: {range_resid:.3e}"
        )));
    }
    Ok(out)
}

/// Label attached to a cascade run, from the strong-convergence certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ConvergenceLabel {
    Strong,
    PointwiseOnly,
}

/// Samples of the refinement-operator iterates M^k W_{s0} applied to a probe
/// section, on a grid of real points, with per-level diagnostics.
#[derive(Debug, Clone)]
pub struct CascadeRun {
    pub level: usize,
    pub grid: Vec<Vec<f64>>,
    /// (M^k W_{s0} probe)(x) per grid point at the final level.
    pub samples: Vec<C64>,
    /// sup over the grid of |iterate − ⟨v, P(x)·probe(px)⟩| per level 0..=k.
    pub sup_distance: Vec<f64>,
    /// sup over the grid of |iterate_j − iterate_{j−1}|.
    pub cauchy_increments: Vec<f64>,
    pub label: ConvergenceLabel,
}

/// Iterates the refinement operator on the rank-one map W_{s0}s = ⟨s0, s⟩f
/// with the built-in tent window:
/// (M^k W)s(x) = ⟨s0(p(A⁻ᵏx)), m⁽ᵏ⁾(A⁻ᵏx)·s(px)⟩·f(A⁻ᵏx).
pub fn refinement_iterate(
    m: &MatTrigPoly,
    sys: &DilationSystem,
    s0: &VecTrigPoly,
    k: usize,
    grid: &[Vec<f64>],
    probe: &VecTrigPoly,
    el: &ElReport,
    label: ConvergenceLabel,
) -> Result<CascadeRun> {
    if grid.len().saturating_mul(k.max(1)) > 10_000_000 {
        return Err(Error::BudgetExceeded {
            needed: (grid.len() * k) as u64,
            budget: 10_000_000,
        });
    }
    let window = TentWindow::new(sys.n());
    let ev = ProductEvaluator::new(m, sys, el)?;
    let v0 = s0.evaluate(&vec![0.0; sys.n()]);

    // limits ⟨v, P(x) probe(px)⟩ for the diagnostics
    let limits: Vec<C64> = grid
        .iter()
        .map(|x| {
            let p = ev.eval(x, 1e-11)?;
            Ok((v0.adjoint() * &p.value * probe.evaluate(x))[(0, 0)])
        })
        .collect::<Result<_>>()?;

    let ainv = sys.inverse();
    let mut points: Vec<Vec<f64>> = grid.to_vec();
    let mut products: Vec<CMat> = grid
        .iter()
        .map(|_| CMat::identity(m.d(), m.d()))
        .collect();
    let probe_vals: Vec<CVec> = grid.iter().map(|x| probe.evaluate(x)).collect();

    let sample_at = |points: &[Vec<f64>], products: &[CMat]| -> Vec<C64> {
        points
            .iter()
            .zip(products)
            .zip(&probe_vals)
            .map(|((pt, prod), pv)| {
                let s0v = s0.evaluate(pt);
                (s0v.adjoint() * prod * pv)[(0, 0)] * cr(window.eval(pt))
            })
            .collect()
    };

    let mut samples = sample_at(&points, &products);
    let mut sup_distance = vec![samples
        .iter()
        .zip(&limits)
        .map(|(s, l)| (s - l).norm())
        .fold(0.0, f64::max)];
    let mut cauchy_increments = Vec::with_capacity(k);

    for _ in 1..=k {
        for (pt, prod) in points.iter_mut().zip(products.iter_mut()) {
            let v = nalgebra::DVector::from_column_slice(pt);
            *pt = (ainv * v).iter().cloned().collect();
            *prod = m.evaluate(pt) * prod.clone();
        }
        let next = sample_at(&points, &products);
        cauchy_increments.push(
            next.iter()
                .zip(&samples)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max),
        );
        samples = next;
        sup_distance.push(
            samples
                .iter()
                .zip(&limits)
                .map(|(s, l)| (s - l).norm())
                .fold(0.0, f64::max),
        );
    }

    Ok(CascadeRun {
        level: k,
        grid: grid.to_vec(),
        samples,
        sup_distance,
        cauchy_increments,
        label,
    })
}

/// Independent oracle for the iterate formula: M^k W_{s0} probe evaluated by
/// the symbolic recursion t_{j} = m·(t_{j−1}∘r) instead of the closed-form
/// matrix product.
pub fn refinement_iterate_symbolic(
    m: &MatTrigPoly,
    sys: &DilationSystem,
    s0: &VecTrigPoly,
    k: usize,
    probe: &VecTrigPoly,
    x: &[f64],
) -> Result<C64> {
    let window = TentWindow::new(sys.n());
    let mut t = probe.clone();
    for _ in 0..k {
        t = t.compose_forward(sys).left_mul(m)?;
    }
    let mut point = x.to_vec();
    let ainv = sys.inverse();
    for _ in 0..k {
        let v = nalgebra::DVector::from_column_slice(&point);
        point = (ainv * v).iter().cloned().collect();
    }
    let s0v = s0.evaluate(&point);
    Ok((s0v.adjoint() * t.evaluate(&point))[(0, 0)] * cr(window.eval(&point)))
}

/// Correlation h_{v1,v2}(x) = Σ_g P(x+g)* v2 v1* P(x+g), computed on a grid
/// by doubling lattice shells until the monotone tail bound is below `tol`,
/// then fitted in the fixed-space basis.
#[allow(clippy::too_many_arguments)]
pub fn correlation(
    m: &MatTrigPoly,
    sys: &DilationSystem,
    t: &TransitionOperator,
    spec: &SpectralData,
    el: &ElReport,
    v1: &CVec,
    v2: &CVec,
    tol: f64,
) -> Result<MatTrigPoly> {
    let ev = ProductEvaluator::new(m, sys, el)?;
    let n = sys.n();
    let d = m.d();
    let vv = v2 * v1.adjoint();

    // grid fine enough to separate the fixed-space frequencies
    let max_freq = t
        .support()
        .freqs()
        .iter()
        .flat_map(|f| f.iter().map(|t| t.unsigned_abs()))
        .max()
        .unwrap_or(1) as u32;
    let level = (2 * max_freq + 2).next_power_of_two().trailing_zeros().max(3);
    let grid = crate::trigmat::torus_grid(n, level.min(6));

    // Shells are doubled in radius; their sums decay like 1/R, so the raw
    // partial sums converge too slowly. The observed shell ratio (≈ 1/2 per
    // doubling) extrapolates the tail; doubling stops when consecutive
    // extrapolated totals agree within the tolerance.
    let inner_tol = (tol * 1e-2).max(1e-13);
    let mut samples: Vec<CMat> = Vec::with_capacity(grid.len());
    for x in &grid {
        let mut total = CMat::zeros(d, d);
        let p0 = ev.eval(x, inner_tol)?;
        total += p0.value.adjoint() * &vv * &p0.value;
        let mut shell_norms: Vec<f64> = Vec::new();
        let mut extrapolated_prev: Option<CMat> = None;
        let mut result: Option<CMat> = None;
        let mut last_delta = f64::INFINITY;
        let mut radius: i64 = 1;
        while radius <= (1 << 13) {
            let lo = radius / 2;
            let mut shell = CMat::zeros(d, d);
            for g in shell_points(n, lo, radius) {
                let xg: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + *b as f64).collect();
                let p = ev.eval(&xg, inner_tol)?;
                shell += p.value.adjoint() * &vv * &p.value;
            }
            total += &shell;
            let sn = shell.norm();
            let extrapolated = if let Some(&prev_sn) = shell_norms.last() {
                if prev_sn > 0.0 && sn > 0.0 {
                    let ratio = (sn / prev_sn).min(0.9);
                    &total + &shell * cr(ratio / (1.0 - ratio))
                } else {
                    total.clone()
                }
            } else {
                total.clone()
            };
            shell_norms.push(sn);
            if let Some(prev) = &extrapolated_prev {
                last_delta = (&extrapolated - prev).norm();
                let len = shell_norms.len();
                let decaying = len >= 4
                    && shell_norms[len - 1] <= shell_norms[len - 2] + 1e-15
                    && shell_norms[len - 2] <= shell_norms[len - 3] + 1e-15;
                if decaying && last_delta < tol / 4.0 {
                    result = Some(extrapolated.clone());
                    break;
                }
            }
            extrapolated_prev = Some(extrapolated);
            radius *= 2;
        }
        match result {
            Some(v) => samples.push(v),
            None => return Err(Error::TailBoundNotMet(last_delta, tol / 4.0)),
        }
    }

    // fit in the fixed-space basis
    let basis = &spec.fixed_right;
    let mm = basis.len();
    let rows = grid.len() * d * d;
    let mut design = CMat::zeros(rows, mm);
    let mut rhs = CVec::zeros(rows);
    for (gi, x) in grid.iter().enumerate() {
        for (alpha, bpoly) in basis.iter().enumerate() {
            let bv = bpoly.evaluate(x);
            for r in 0..d {
                for cidx in 0..d {
                    design[(gi * d * d + r * d + cidx, alpha)] = bv[(r, cidx)];
                }
            }
        }
        for r in 0..d {
            for cidx in 0..d {
                rhs[gi * d * d + r * d + cidx] = samples[gi][(r, cidx)];
            }
        }
    }
    let (coords, resid) = linalg::lstsq(&design, &rhs);
    let rel = resid / rhs.norm().max(1.0);
    if rel > tol {
        return Err(Error::TailBoundNotMet(rel, tol));
    }
    let mut h = MatTrigPoly::zero(n, d);
    for (c, b) in coords.iter().zip(basis) {
        h = h.add(&b.scale(*c));
    }

    // postconditions: harmonic, and h(0)w = ⟨v1,w⟩v2 on E1
    let rh = transfer_apply(m, sys, &h)?;
    let harm_resid = rh.sub(&h).coeff_norm();
    if harm_resid > 1e-8 {
        return Err(Error::NumericalFailure(format!(
            "correlation is not harmonic: residual {harm_resid:.3e}"
        )));
    }
    let h0 = h.evaluate(&vec![0.0; n]);
    for w in &el.e1_basis {
        let lhs = &h0 * w;
        let rhs_v = v2 * (v1.adjoint() * w)[(0, 0)];
        if (lhs - rhs_v).norm() > (tol * 10.0).max(1e-7) {
            return Err(Error::NumericalFailure(
                "correlation value at the fixed point is off".into(),
            ));
        }
    }
    Ok(h)
}

/// Integer points with lo < ‖g‖_∞ ≤ hi (lo = 0 includes ‖g‖ = 1 … hi).
fn shell_points(n: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut g = vec![-hi; n];
    'enumerate: loop {
        let norm = g.iter().map(|t| t.abs()).max().unwrap_or(0);
        if norm > lo && norm <= hi {
            out.push(g.clone());
        }
        for i in (0..n).rev() {
            if g[i] < hi {
                g[i] += 1;
                continue 'enumerate;
            }
            g[i] = -hi;
        }
        break;
    }
    out
}

/// Strong-convergence certificate: (a) 1 is the only peripheral eigenvalue,
/// (b) dim 𝔥 = l², (c) the τ functionals vanish on (M^kW − W)*(M^kW − W)
/// for constant starting sections. On pass, Σᵢ h_{vᵢ} must equal the unit.
#[derive(Debug, Clone)]
pub struct StrongCertReport {
    pub sole_peripheral_one: bool,
    pub dim_matches_l_squared: bool,
    pub tau_residual: f64,
    pub tau_ok: bool,
    pub sum_residual: Option<f64>,
    pub passed: bool,
    pub failed_clause: Option<String>,
}

pub fn strong_convergence_certificate(
    m: &MatTrigPoly,
    sys: &DilationSystem,
    t: &TransitionOperator,
    spec: &SpectralData,
    el: &ElReport,
    alg: Option<&HarmonicAlgebra>,
    kmax: usize,
    tol: f64,
) -> Result<StrongCertReport> {
    if !el.holds {
        return Err(Error::PreconditionFailed("E(l) does not hold".into()));
    }
    if qmf_residual(m, sys, 6) > 1e-9 {
        return Err(Error::PreconditionFailed("QMF residual is not zero".into()));
    }
    let sole_peripheral_one = spec
        .peripheral
        .iter()
        .all(|e| (e - cr(1.0)).norm() <= 1e-6);
    let l = el.l;
    let dim_matches = spec.fixed_dim() == l * l;

    // clause (c): τ_{i,i'}((M^kW_j − W_j)*(M^kW_j − W_j)) over the lattice.
    // With constant sections s_j ≡ v_j and the tent window the sums are
    // finite: the iterate term is supported on A^k·[−1,1]ⁿ.
    let window = TentWindow::new(sys.n());
    let mut tau_residual: f64 = 0.0;
    let a_f = sys.matrix_f();
    for k in 1..=kmax {
        // g must satisfy A^{-k} g ∈ supp f; bound the box by ‖A^k‖_∞
        let mut apow = nalgebra::DMatrix::<f64>::identity(sys.n(), sys.n());
        for _ in 0..k {
            apow = a_f * apow;
        }
        let row_sum = (0..sys.n())
            .map(|i| (0..sys.n()).map(|j| apow[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let bound = row_sum.ceil() as i64 + 1;
        if (2 * bound + 1).pow(sys.n() as u32) > 1 << 22 {
            return Err(Error::BudgetExceeded {
                needed: ((2 * bound + 1).pow(sys.n() as u32)) as u64,
                budget: 1 << 22,
            });
        }
        let points = shell_points(sys.n(), -1, bound); // all ‖g‖_∞ ≤ bound
        let ainv = sys.inverse();
        for j in 0..l {
            let vj = &el.e1_basis[j];
            // difference function D_i(g) for all i at once
            let mut gram = CMat::zeros(l, l);
            for g in &points {
                let gf: Vec<f64> = g.iter().map(|&t| t as f64).collect();
                // A^{-k} g and the product m^{(k)}(A^{-k}g)
                let mut pt = gf.clone();
                let mut prod = CMat::identity(m.d(), m.d());
                for _ in 0..k {
                    let v = nalgebra::DVector::from_column_slice(&pt);
                    pt = (ainv * v).iter().cloned().collect();
                    prod = m.evaluate(&pt) * prod;
                }
                let fk = window.eval(&pt);
                let f0 = window.eval(&gf);
                let mut dvals = CVec::zeros(l);
                for (i, vi) in el.e1_basis.iter().enumerate() {
                    let iter_term = (vj.adjoint() * &prod * vi)[(0, 0)] * cr(fk);
                    let w_term = (vj.adjoint() * vi)[(0, 0)] * cr(f0);
                    dvals[i] = iter_term - w_term;
                }
                gram += &dvals * dvals.adjoint();
            }
            tau_residual = tau_residual.max(linalg::op_norm(&gram));
        }
    }
    let tau_ok = tau_residual <= tol;

    // on pass: Σ h_{v_i} = unit
    let mut sum_residual = None;
    if sole_peripheral_one && dim_matches && tau_ok {
        if let Some(alg) = alg {
            let mut sum = MatTrigPoly::zero(sys.n(), m.d());
            for v in &el.e1_basis {
                let vv = MatTrigPoly::constant(sys.n(), v * v.adjoint());
                let hv = t.vec_to_poly(&spec.t1_apply_vec(&t.poly_to_vec(&vv)?));
                sum = sum.add(&hv);
            }
            sum_residual = Some(sum.sub(alg.unit()).coeff_norm());
        }
    }

    let failed_clause = if !sole_peripheral_one {
        Some("peripheral spectrum contains eigenvalues other than 1".to_string())
    } else if !dim_matches {
        Some(format!(
            "dim of the harmonic algebra is {} ≠ l² = {}",
            spec.fixed_dim(),
            l * l
        ))
    } else if !tau_ok {
        Some(format!("tau residual {tau_residual:.3e} exceeds {tol:.3e}"))
    } else {
        None
    };
    let passed = failed_clause.is_none()
        && sum_residual.map_or(true, |r| r <= (tol * 10.0).max(1e-8));

    Ok(StrongCertReport {
        sole_peripheral_one,
        dim_matches_l_squared: dim_matches,
        tau_residual,
        tau_ok,
        sum_residual,
        passed,
        failed_clause,
    })
}

/// Projective-MRA certificate: pointwise idempotency h(x)² = h(x) on the
/// grid and nonvanishing at the fixed point.
#[derive(Debug, Clone)]
pub struct PmraReport {
    pub idempotent_ok: bool,
    pub max_idempotency_residual: f64,
    pub witness: Option<(Vec<f64>, f64)>,
    pub nonvanishing_ok: bool,
    pub passed: bool,
}

pub fn pmra_certificate(h: &MatTrigPoly, grid: &[Vec<f64>], tol: f64) -> PmraReport {
    let mut worst = 0.0f64;
    let mut witness = None;
    for x in grid {
        let hx = h.evaluate(x);
        let resid = linalg::op_norm(&(&hx * &hx - &hx));
        if resid > worst {
            worst = resid;
            witness = Some((x.clone(), resid));
        }
    }
    let idempotent_ok = worst <= tol;
    let h0 = h.evaluate(&vec![0.0; h.n()]);
    let nonvanishing_ok = linalg::op_norm(&h0) > tol;
    PmraReport {
        idempotent_ok,
        max_idempotency_residual: worst,
        witness: if idempotent_ok { None } else { witness },
        nonvanishing_ok,
        passed: idempotent_ok && nonvanishing_ok,
    }
}

/// Rank-one Hom(S, Ξ) element W s = ⟨t, s⟩ f with the tent window.
#[derive(Debug, Clone)]
pub struct RankOneOp {
    pub section: VecTrigPoly,
    pub window: TentWindow,
}

impl RankOneOp {
    pub fn new(section: VecTrigPoly) -> Self {
        let n = section.n();
        RankOneOp {
            section,
            window: TentWindow::new(n),
        }
    }

    /// (W s)(x̃) for a real (covering space) point.
    pub fn apply(&self, s: &VecTrigPoly, x: &[f64]) -> C64 {
        let tv = self.section.evaluate(x);
        let sv = s.evaluate(x);
        (tv.adjoint() * sv)[(0, 0)] * cr(self.window.eval(x))
    }

    /// (M W s)(x̃) = ⟨t(p A⁻¹x), m(p A⁻¹x)·s(px)⟩ f(A⁻¹x).
    pub fn apply_refined(
        &self,
        m: &MatTrigPoly,
        sys: &DilationSystem,
        s: &VecTrigPoly,
        x: &[f64],
    ) -> Result<C64> {
        let v = nalgebra::DVector::from_column_slice(x);
        let y: Vec<f64> = (sys.inverse() * v).iter().cloned().collect();
        let tv = self.section.evaluate(&y);
        let msv = m.evaluate(&y) * s.evaluate(x);
        Ok((tv.adjoint() * msv)[(0, 0)] * cr(self.window.eval(&y)))
    }

    /// W₁*W₂ as a matrix polynomial: t₁(x)·t₂(x)^H (the tent bracket
    /// ⟨f,f⟩' is identically 1).
    pub fn symbol_product(&self, other: &RankOneOp) -> MatTrigPoly {
        self.section.outer(&other.section)
    }
}

/// Sampled bracket ⟨M W₁ s, M W₂ s'⟩'(px) = Σ_g conj(MW₁s)(x+g)·(MW₂s')(x+g).
/// The sum is finite because the windows have compact support.
pub fn refined_bracket(
    w1: &RankOneOp,
    w2: &RankOneOp,
    m: &MatTrigPoly,
    sys: &DilationSystem,
    s1: &VecTrigPoly,
    s2: &VecTrigPoly,
    x: &[f64],
) -> Result<C64> {
    // supp(MWᵢs)(·) requires A⁻¹(x+g) ∈ [−1,1]ⁿ
    let a_f = sys.matrix_f();
    let row_sum = (0..sys.n())
        .map(|i| (0..sys.n()).map(|j| a_f[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let bound = (row_sum + x.iter().map(|t| t.abs()).fold(0.0, f64::max)).ceil() as i64 + 1;
    let mut acc = C64::default();
    for g in shell_points(sys.n(), -1, bound) {
        let xg: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + *b as f64).collect();
        let t1 = w1.apply_refined(m, sys, s1, &xg)?;
        let t2 = w2.apply_refined(m, sys, s2, &xg)?;
        acc += t1.conj() * t2;
    }
    Ok(acc)
}
