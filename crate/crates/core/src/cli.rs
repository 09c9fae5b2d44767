//! Filter ingestion (JSON and builtins), orchestration of the full analysis
//! pipeline, and serialized reports.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cascade::{
    pmra_certificate, strong_convergence_certificate, ConvergenceLabel, ProductEvaluator,
    StrongCertReport,
};
use crate::error::{Error, Result};
use crate::harmonic::{
    build_algebra, minimal_projection, unit_candidate, wedderburn, HarmonicAlgebra, StarRoute,
};
use crate::lattice::DilationSystem;
use crate::linalg::{cr, CMat};
use crate::transfer::{
    cesaro_extrapolated, ess_radius_bound, invariant_support, spectral_data, transfer_apply,
    transition_operator,
};
use crate::trigmat::{el_condition, qmf_residual, torus_grid, MatTrigPoly};

/// One Fourier coefficient of a matrix polynomial: complex matrices as
/// separate re/im arrays, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffEntry {
    pub index: Vec<i64>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

/// On-disk description of a filter bank: dilation matrix plus the matrix
/// trigonometric polynomial coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub schema: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "A")]
    pub a: Vec<i64>,
    pub coeffs: Vec<CoeffEntry>,
}

pub fn poly_to_entries(p: &MatTrigPoly) -> Vec<CoeffEntry> {
    let d = p.d();
    p.coeffs()
        .map(|(k, m)| CoeffEntry {
            index: k.clone(),
            re: (0..d)
                .map(|r| (0..d).map(|c| m[(r, c)].re).collect())
                .collect(),
            im: (0..d)
                .map(|r| (0..d).map(|c| m[(r, c)].im).collect())
                .collect(),
        })
        .collect()
}

pub fn entries_to_poly(n: usize, d: usize, entries: &[CoeffEntry]) -> Result<MatTrigPoly> {
    let mut p = MatTrigPoly::zero(n, d);
    for (pos, e) in entries.iter().enumerate() {
        if e.index.len() != n {
            return Err(Error::ParseError(format!(
                "coeffs[{pos}].index has length {} but n = {n}",
                e.index.len()
            )));
        }
        if e.re.len() != d || e.im.len() != d {
            return Err(Error::ParseError(format!(
                "coeffs[{pos}]: re/im must be {d}x{d} row-major arrays"
            )));
        }
        let mut m = CMat::zeros(d, d);
        for r in 0..d {
            if e.re[r].len() != d || e.im[r].len() != d {
                return Err(Error::ParseError(format!(
                    "coeffs[{pos}]: re/im row {r} must have {d} entries"
                )));
            }
            for c in 0..d {
                m[(r, c)] = crate::linalg::c(e.re[r][c], e.im[r][c]);
            }
        }
        p.add_coeff(e.index.clone(), m);
    }
    Ok(p)
}

impl FilterSpec {
    pub fn from_parts(m: &MatTrigPoly, sys: &DilationSystem, name: Option<String>) -> Self {
        let a: Vec<i64> = (0..sys.n())
            .flat_map(|i| (0..sys.n()).map(move |j| (i, j)))
            .map(|(i, j)| sys.matrix()[(i, j)])
            .collect();
        FilterSpec {
            schema: 1,
            name,
            n: sys.n(),
            d: m.d(),
            a,
            coeffs: poly_to_entries(m),
        }
    }

    pub fn parse(json: &str) -> Result<FilterSpec> {
        let spec: FilterSpec =
            serde_json::from_str(json).map_err(|e| Error::ParseError(e.to_string()))?;
        if spec.schema != 1 {
            return Err(Error::ParseError(format!(
                "unsupported schema version {}",
                spec.schema
            )));
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("filter spec serializes")
    }

    pub fn build(&self) -> Result<(MatTrigPoly, DilationSystem)> {
        if self.a.len() != self.n * self.n {
            return Err(Error::ParseError(format!(
                "A has {} entries, expected n² = {}",
                self.a.len(),
                self.n * self.n
            )));
        }
        let a = DMatrix::from_row_slice(self.n, self.n, &self.a);
        let sys = DilationSystem::new(a)?;
        let m = entries_to_poly(self.n, self.d, &self.coeffs)?;
        Ok((m, sys))
    }
}

/// Builtin filter banks.
pub const BUILTINS: &[&str] = &["haar", "haar3", "stretched-haar", "haar2-shift", "d4"];

pub fn builtin(name: &str) -> Result<(MatTrigPoly, DilationSystem, FilterSpec)> {
    let two = DMatrix::from_row_slice(1, 1, &[2i64]);
    let m = match name {
        "haar" => MatTrigPoly::scalar_1d(&[(0, cr(0.5)), (1, cr(0.5))]),
        "haar3" => MatTrigPoly::scalar_1d(&[(0, cr(0.5)), (3, cr(0.5))]),
        "stretched-haar" => MatTrigPoly::scalar_1d(&[(0, cr(0.5)), (2, cr(0.5))]),
        "haar2-shift" => {
            let mut m = MatTrigPoly::zero(1, 2);
            m.add_coeff(
                vec![0],
                CMat::from_row_slice(2, 2, &[cr(0.5), cr(0.0), cr(0.0), cr(0.0)]),
            );
            m.add_coeff(
                vec![1],
                CMat::from_row_slice(2, 2, &[cr(0.5), cr(0.0), cr(0.0), cr(0.5)]),
            );
            m.add_coeff(
                vec![2],
                CMat::from_row_slice(2, 2, &[cr(0.0), cr(0.0), cr(0.0), cr(0.5)]),
            );
            m
        }
        "d4" => {
            let s3 = 3.0f64.sqrt();
            MatTrigPoly::scalar_1d(&[
                (0, cr((1.0 + s3) / 8.0)),
                (1, cr((3.0 + s3) / 8.0)),
                (2, cr((3.0 - s3) / 8.0)),
                (3, cr((1.0 - s3) / 8.0)),
            ])
        }
        _ => return Err(Error::UnknownBuiltin(name.to_string())),
    };
    let sys = DilationSystem::new(two)?;
    let spec = FilterSpec::from_parts(&m, &sys, Some(name.to_string()));
    Ok((m, sys, spec))
}

/// Loads a filter from a path or a builtin name.
pub fn load_filter(source: &str) -> Result<(MatTrigPoly, DilationSystem, FilterSpec)> {
    if Path::new(source).exists() {
        let json = std::fs::read_to_string(source)?;
        let spec = FilterSpec::parse(&json)?;
        let (m, sys) = spec.build()?;
        Ok((m, sys, spec))
    } else {
        builtin(source)
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub tol: f64,
    pub grid_level: u32,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            tol: 1e-8,
            grid_level: 8,
            max_depth: 20,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QmfSection {
    pub residual: f64,
    /// Coefficient-route cross-check ‖R1 − 1‖ (exact convolution arithmetic).
    pub exact_r1_residual: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ElSection {
    pub holds: bool,
    pub l: usize,
    pub spectral_margin: f64,
    pub reason: Option<String>,
    pub adjoint_residual: Option<f64>,
    pub annihilation_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSection {
    pub support_size: usize,
    pub operator_dim: usize,
    pub eigenvalues: Vec<[f64; 2]>,
    pub theta: f64,
    pub ess_radius_bound: f64,
    pub fixed_dim: usize,
    pub semisimple_peripheral: bool,
    pub power_bounded: bool,
    pub t1_vs_cesaro: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnitSection {
    pub coeffs: Vec<CoeffEntry>,
    pub min_eig: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgebraSection {
    pub available: bool,
    pub reason: Option<String>,
    pub dim: usize,
    pub route: Option<String>,
    pub unit: Option<UnitSection>,
    pub blocks: Option<Vec<usize>>,
    pub center_dim: Option<usize>,
    pub commutative: Option<bool>,
    pub law_residuals: Option<LawSection>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LawSection {
    pub unit_law: f64,
    pub associativity: f64,
    pub involution: f64,
    pub cstar_identity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionSection {
    pub v_index: usize,
    pub fast_route: bool,
    pub route_agreement: Option<f64>,
    pub coeffs: Vec<CoeffEntry>,
    pub value_at_zero_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrongSection {
    pub ran: bool,
    pub passed: bool,
    pub sole_peripheral_one: Option<bool>,
    pub dim_matches_l_squared: Option<bool>,
    pub tau_residual: Option<f64>,
    pub sum_residual: Option<f64>,
    pub failed_clause: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PmraSection {
    pub ran: bool,
    pub passed: bool,
    pub idempotent_ok: Option<bool>,
    pub max_idempotency_residual: Option<f64>,
    pub nonvanishing_ok: Option<bool>,
}

/// The serialized analysis report. Deterministic for a fixed spec and seed;
/// timing data goes to stderr, never into the report.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: u32,
    pub name: String,
    pub options: ReportOptions,
    pub qmf: QmfSection,
    pub el: ElSection,
    pub spectrum: SpectrumSection,
    pub algebra: AlgebraSection,
    pub projections: Vec<ProjectionSection>,
    pub strong_certificate: StrongSection,
    pub pmra_certificate: PmraSection,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportOptions {
    pub tol: f64,
    pub grid_level: u32,
    pub max_depth: usize,
    pub seed: u64,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Everything the pipeline computed, for callers that need the live objects
/// alongside the serialized report.
pub struct Analysis {
    pub report: Report,
    pub algebra: Option<HarmonicAlgebra>,
    pub projections: Vec<MatTrigPoly>,
    pub strong: Option<StrongCertReport>,
}

/// Runs the full pipeline: QMF → E(l) → invariant support → transition →
/// spectrum → algebra → Wedderburn → projections → certificates. Failed
/// preconditions downgrade the corresponding sections; only structural
/// errors (bad input) abort.
pub fn analyze(
    m: &MatTrigPoly,
    sys: &DilationSystem,
    name: &str,
    opts: &AnalyzeOptions,
) -> Result<Analysis> {
    let residual = qmf_residual(m, sys, opts.grid_level.min(8));
    let one = MatTrigPoly::identity(sys.n(), m.d());
    let exact_r1 = transfer_apply(m, sys, &one)?.sub(&one).coeff_norm();
    let qmf = QmfSection {
        residual,
        exact_r1_residual: exact_r1,
        passes: residual <= 1e-9,
    };

    let el = el_condition(m, sys, opts.tol)?;
    let el_section = ElSection {
        holds: el.holds,
        l: el.l,
        spectral_margin: el.spectral_margin,
        reason: el.reason.map(|r| format!("{r:?}")),
        adjoint_residual: if el.holds { Some(el.adjoint_residual) } else { None },
        annihilation_residual: el.annihilation_residual,
    };

    let support = invariant_support(m, sys);
    let t = transition_operator(m, sys, &support)?;
    let spec_res = spectral_data(&t, opts.tol, sys);

    let (spectrum, spec_opt) = match spec_res {
        Ok(sd) => {
            let ces = cesaro_extrapolated(&t, 1 << 12);
            let ces_diff = crate::linalg::op_norm(&(ces - &sd.t1));
            (
                SpectrumSection {
                    support_size: support.len(),
                    operator_dim: t.dim(),
                    eigenvalues: sd.eigenvalues.iter().map(|e| [e.re, e.im]).collect(),
                    theta: sys.theta(),
                    ess_radius_bound: ess_radius_bound(sys),
                    fixed_dim: sd.fixed_dim(),
                    semisimple_peripheral: sd.semisimple_peripheral,
                    power_bounded: sd.power_bounded,
                    t1_vs_cesaro: ces_diff,
                    error: None,
                },
                Some(sd),
            )
        }
        Err(e) => (
            SpectrumSection {
                support_size: support.len(),
                operator_dim: t.dim(),
                eigenvalues: Vec::new(),
                theta: sys.theta(),
                ess_radius_bound: ess_radius_bound(sys),
                fixed_dim: 0,
                semisimple_peripheral: false,
                power_bounded: false,
                t1_vs_cesaro: f64::NAN,
                error: Some(e.to_string()),
            },
            None,
        ),
    };

    // algebra (graceful downgrade on NotInvertible / power-unbounded)
    let mut algebra_section = AlgebraSection {
        available: false,
        reason: None,
        dim: spectrum.fixed_dim,
        route: None,
        unit: None,
        blocks: None,
        center_dim: None,
        commutative: None,
        law_residuals: None,
    };
    let mut algebra = None;
    if let Some(sd) = &spec_opt {
        let (unit, cert) = unit_candidate(sd, &t, sys, opts.grid_level.min(8))?;
        algebra_section.unit = Some(UnitSection {
            coeffs: poly_to_entries(&unit),
            min_eig: cert.min_eig,
            passes: cert.passes,
        });
        match build_algebra(m, sys, &t, sd, opts.grid_level.min(8)) {
            Ok(alg) => {
                let laws = alg.law_residuals(opts.seed, 8)?;
                let wed = wedderburn(&alg, 1e-7, opts.seed)?;
                algebra_section.available = true;
                algebra_section.route = Some(
                    match alg.route() {
                        StarRoute::Exact => "exact",
                        StarRoute::Sampled => "sampled",
                    }
                    .to_string(),
                );
                algebra_section.commutative = Some(wed.blocks.iter().all(|&k| k == 1));
                algebra_section.blocks = Some(wed.blocks.clone());
                algebra_section.center_dim = Some(wed.center_dim);
                algebra_section.law_residuals = Some(LawSection {
                    unit_law: laws.unit_law,
                    associativity: laws.associativity,
                    involution: laws.involution,
                    cstar_identity: laws.cstar_identity,
                });
                algebra = Some(alg);
            }
            Err(Error::NotInvertible(me)) => {
                algebra_section.reason = Some(format!(
                    "unit candidate not invertible (min eigenvalue {me:.3e}); linear fixed-space analysis only"
                ));
            }
            Err(Error::PreconditionFailed(msg)) => {
                algebra_section.reason = Some(msg);
            }
            Err(e) => return Err(e),
        }
    } else {
        algebra_section.reason = Some("spectral analysis unavailable".into());
    }

    // minimal projections per E1 basis vector (QMF + E(l) required)
    let mut projections = Vec::new();
    let mut projection_sections = Vec::new();
    if el.holds && qmf.passes {
        if let Some(sd) = &spec_opt {
            for (idx, v) in el.e1_basis.iter().enumerate() {
                let mp = minimal_projection(m, sys, &t, sd, &el, v, opts.tol.max(1e-6))?;
                let h0 = mp.poly.evaluate(&vec![0.0; sys.n()]);
                let mut ok = true;
                for w in &el.e1_basis {
                    let lhs = &h0 * w;
                    let rhs = v * (v.adjoint() * w)[(0, 0)];
                    if (lhs - rhs).norm() > 1e-6 {
                        ok = false;
                    }
                }
                projection_sections.push(ProjectionSection {
                    v_index: idx,
                    fast_route: mp.fast_route,
                    route_agreement: mp.route_agreement,
                    coeffs: poly_to_entries(&mp.poly),
                    value_at_zero_ok: ok,
                });
                projections.push(mp.poly);
            }
        }
    }

    // strong-convergence certificate
    let mut strong = None;
    let strong_section = if el.holds && qmf.passes && spec_opt.is_some() {
        let sd = spec_opt.as_ref().unwrap();
        let kmax = opts.max_depth.min(8).max(3);
        let rep = strong_convergence_certificate(
            m,
            sys,
            &t,
            sd,
            &el,
            algebra.as_ref(),
            kmax,
            opts.tol.max(1e-8),
        )?;
        let s = StrongSection {
            ran: true,
            passed: rep.passed,
            sole_peripheral_one: Some(rep.sole_peripheral_one),
            dim_matches_l_squared: Some(rep.dim_matches_l_squared),
            tau_residual: Some(rep.tau_residual),
            sum_residual: rep.sum_residual,
            failed_clause: rep.failed_clause.clone(),
        };
        strong = Some(rep);
        s
    } else {
        StrongSection {
            ran: false,
            passed: false,
            sole_peripheral_one: None,
            dim_matches_l_squared: None,
            tau_residual: None,
            sum_residual: None,
            failed_clause: Some("preconditions (QMF + E(l)) not met".into()),
        }
    };

    // PMRA certificate on the correlation candidate Σᵢ h_{vᵢ}
    let pmra_section = if !projections.is_empty() {
        let mut w_corr = MatTrigPoly::zero(sys.n(), m.d());
        for p in &projections {
            w_corr = w_corr.add(p);
        }
        let grid = torus_grid(sys.n(), opts.grid_level.min(8));
        let rep = pmra_certificate(&w_corr, &grid, opts.tol.max(1e-8));
        PmraSection {
            ran: true,
            passed: rep.passed,
            idempotent_ok: Some(rep.idempotent_ok),
            max_idempotency_residual: Some(rep.max_idempotency_residual),
            nonvanishing_ok: Some(rep.nonvanishing_ok),
        }
    } else {
        PmraSection {
            ran: false,
            passed: false,
            idempotent_ok: None,
            max_idempotency_residual: None,
            nonvanishing_ok: None,
        }
    };

    let report = Report {
        schema: 1,
        name: name.to_string(),
        options: ReportOptions {
            tol: opts.tol,
            grid_level: opts.grid_level,
            max_depth: opts.max_depth,
            seed: opts.seed,
        },
        qmf,
        el: el_section,
        spectrum,
        algebra: algebra_section,
        projections: projection_sections,
        strong_certificate: strong_section,
        pmra_certificate: pmra_section,
    };

    Ok(Analysis {
        report,
        algebra,
        projections,
        strong,
    })
}

/// CSV dump of P(x) samples: x coordinates, then matrix entries as
/// interleaved re/im columns, then the truncation error bound.
pub fn p_samples_csv(
    m: &MatTrigPoly,
    sys: &DilationSystem,
    el: &crate::trigmat::ElReport,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<String> {
    let ev = ProductEvaluator::new(m, sys, el)?;
    let d = m.d();
    let mut out = String::new();
    for i in 0..sys.n() {
        out.push_str(&format!("x{i},"));
    }
    for r in 0..d {
        for c in 0..d {
            out.push_str(&format!("p_{r}_{c}_re,p_{r}_{c}_im,"));
        }
    }
    out.push_str("err\n");
    for x in points {
        let p = ev.eval(x, tol)?;
        for xi in x {
            out.push_str(&format!("{xi},"));
        }
        for r in 0..d {
            for c in 0..d {
                out.push_str(&format!("{},{},", p.value[(r, c)].re, p.value[(r, c)].im));
            }
        }
        out.push_str(&format!("{}\n", p.err));
    }
    Ok(out)
}

/// CSV dump of a cascade run: x coordinates then the iterate samples.
pub fn cascade_samples_csv(
    m: &MatTrigPoly,
    sys: &DilationSystem,
    el: &crate::trigmat::ElReport,
    strong: Option<&StrongCertReport>,
    points: &[Vec<f64>],
    level: usize,
) -> Result<String> {
    let label = match strong {
        Some(s) if s.passed => ConvergenceLabel::Strong,
        _ => ConvergenceLabel::PointwiseOnly,
    };
    let v0 = el
        .e1_basis
        .first()
        .cloned()
        .unwrap_or_else(|| crate::linalg::CVec::from_element(m.d(), cr(1.0)));
    let s0 = crate::trigmat::VecTrigPoly::constant(sys.n(), v0.clone());
    let probe = crate::trigmat::VecTrigPoly::constant(sys.n(), v0);
    let run = crate::cascade::refinement_iterate(m, sys, &s0, level, points, &probe, el, label)?;
    let mut out = String::new();
    for i in 0..sys.n() {
        out.push_str(&format!("x{i},"));
    }
    out.push_str("sample_re,sample_im\n");
    for (x, s) in run.grid.iter().zip(&run.samples) {
        for xi in x {
            out.push_str(&format!("{xi},"));
        }
        out.push_str(&format!("{},{}\n", s.re, s.im));
    }
    Ok(out)
}

/// Exit code mapping: 0 analysis complete, 2 parse error, 3 structural or
/// precondition error, 4 numeric budget exceeded.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::ParseError(_) | Error::UnknownBuiltin(_) | Error::Io(_) => 2,
        Error::BudgetExceeded { .. }
        | Error::TolNotReached { .. }
        | Error::TailBoundNotMet(_, _)
        | Error::FitResidualTooLarge(_, _) => 4,
        _ => 3,
    }
}
