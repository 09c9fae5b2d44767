//! Integer dilation arithmetic: coset digits of Zⁿ/AZⁿ, inverse branches ψᵢ,
//! and adapted norms certifying expansiveness.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// A norm of the form N(x) = Σⱼ wⱼ ‖Mⱼ x‖₂ adapted to a dilation.
#[derive(Debug, Clone)]
pub struct AdaptedNorm {
    terms: Vec<(f64, DMatrix<f64>)>,
}

impl AdaptedNorm {
    fn euclidean(n: usize) -> Self {
        AdaptedNorm {
            terms: vec![(1.0, DMatrix::identity(n, n))],
        }
    }

    /// Truncated series norm Σ_{j<=J} ρ^j ‖B^{-j} x‖₂ for an expansive B.
    fn series(b_inv: &DMatrix<f64>, rho: f64, truncation: usize) -> Self {
        let n = b_inv.nrows();
        let mut terms = Vec::with_capacity(truncation + 1);
        let mut pow = DMatrix::identity(n, n);
        let mut w = 1.0;
        for _ in 0..=truncation {
            terms.push((w, pow.clone()));
            pow = b_inv * &pow;
            w *= rho;
        }
        AdaptedNorm { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(x);
        self.terms.iter().map(|(w, m)| w * (m * &v).norm()).sum()
    }

    pub fn eval_int(&self, g: &[i64]) -> f64 {
        let x: Vec<f64> = g.iter().map(|&t| t as f64).collect();
        self.eval(&x)
    }
}

/// Expansive integer dilation with digit set, branch maps and certified
/// contraction data for both the spatial (A) and frequency (Aᵀ) sides.
#[derive(Debug, Clone)]
pub struct DilationSystem {
    n: usize,
    a: DMatrix<i64>,
    a_f: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    at_inv: DMatrix<f64>,
    det: i64,
    q: usize,
    digits: Vec<Vec<i64>>,
    rho: f64,
    theta: f64,
    norm_truncation: usize,
    min_abs_eig: f64,
    spatial_norm: AdaptedNorm,
    freq_norm: AdaptedNorm,
    snf: SmithData,
    adj_at: Vec<Vec<i128>>,
}

#[derive(Debug, Clone)]
struct SmithData {
    /// Row-transform P with P·A·Q = diag(s), P unimodular.
    p: Vec<Vec<i128>>,
    diag: Vec<i128>,
}

impl SmithData {
    /// Residue class key of g modulo A·Zⁿ.
    fn residue_key(&self, g: &[i64]) -> Vec<i128> {
        let n = self.diag.len();
        let mut key = vec![0i128; n];
        for i in 0..n {
            let mut acc: i128 = 0;
            for j in 0..n {
                acc += self.p[i][j] * g[j] as i128;
            }
            let s = self.diag[i].abs();
            key[i] = if s == 0 { acc } else { acc.rem_euclid(s) };
        }
        key
    }
}

/// Exact integer determinant by fraction-free (Bareiss) elimination.
fn int_det(a: &DMatrix<i64>) -> i128 {
    let n = a.nrows();
    let mut m: Vec<Vec<i128>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] as i128).collect())
        .collect();
    let mut sign: i128 = 1;
    let mut prev: i128 = 1;
    for k in 0..n.saturating_sub(1) {
        if m[k][k] == 0 {
            let swap = (k + 1..n).find(|&i| m[i][k] != 0);
            match swap {
                Some(i) => {
                    m.swap(k, i);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
            }
            m[i][k] = 0;
        }
        prev = m[k][k];
    }
    sign * m[n - 1][n - 1]
}

/// Exact adjugate via cofactors (desk-scale n).
fn int_adjugate(a: &DMatrix<i64>) -> Vec<Vec<i128>> {
    let n = a.nrows();
    if n == 1 {
        return vec![vec![1i128]];
    }
    let minor_det = |r: usize, c: usize| -> i128 {
        let sub = DMatrix::from_fn(n - 1, n - 1, |i, j| {
            let ii = if i < r { i } else { i + 1 };
            let jj = if j < c { j } else { j + 1 };
            a[(ii, jj)]
        });
        int_det(&sub)
    };
    let mut adj = vec![vec![0i128; n]; n];
    for i in 0..n {
        for j in 0..n {
            let s = if (i + j) % 2 == 0 { 1 } else { -1 };
            // adj = transpose of cofactor matrix
            adj[j][i] = s as i128 * minor_det(i, j);
        }
    }
    adj
}

/// Smith normal form over Z: returns P (row transform) and the diagonal,
/// with P·A·Q = diag. Only P and the diagonal are needed for residue hashing.
fn smith_normal_form(a: &DMatrix<i64>) -> SmithData {
    let n = a.nrows();
    let mut m: Vec<Vec<i128>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] as i128).collect())
        .collect();
    let mut p: Vec<Vec<i128>> = (0..n)
        .map(|i| (0..n).map(|j| i128::from(i == j)).collect())
        .collect();

    for t in 0..n {
        loop {
            // locate smallest nonzero entry in the trailing block
            let mut best: Option<(usize, usize)> = None;
            for i in t..n {
                for j in t..n {
                    if m[i][j] != 0
                        && best.map_or(true, |(bi, bj)| m[i][j].abs() < m[bi][bj].abs())
                    {
                        best = Some((i, j));
                    }
                }
            }
            let (bi, bj) = match best {
                Some(b) => b,
                None => break,
            };
            m.swap(t, bi);
            p.swap(t, bi);
            for row in m.iter_mut() {
                row.swap(t, bj);
            }
            let pivot = m[t][t];
            let mut dirty = false;
            for i in t + 1..n {
                let f = m[i][t].div_euclid(pivot);
                if f != 0 {
                    for j in 0..n {
                        m[i][j] -= f * m[t][j];
                        p[i][j] -= f * p[t][j];
                    }
                }
                if m[i][t] != 0 {
                    dirty = true;
                }
            }
            for j in t + 1..n {
                let f = m[t][j].div_euclid(pivot);
                if f != 0 {
                    for row in m.iter_mut() {
                        row[j] -= f * row[t];
                    }
                }
                if m[t][j] != 0 {
                    dirty = true;
                }
            }
            if !dirty {
                break;
            }
        }
    }
    let diag = (0..n).map(|i| m[i][i]).collect();
    SmithData { p, diag }
}

fn lex_less(a: &[i64], b: &[i64]) -> bool {
    a.iter().zip(b.iter()).find(|(x, y)| x != y).map(|(x, y)| x < y).unwrap_or(false)
}

impl DilationSystem {
    /// Builds the system from an expansive integer matrix, enumerating the
    /// canonical digit set A[0,1)ⁿ ∩ Zⁿ.
    pub fn new(a: DMatrix<i64>) -> Result<Self> {
        Self::build(a, None)
    }

    /// Same as [`DilationSystem::new`] but with a caller-supplied digit set
    /// (validated for completeness). Used to confirm digit independence.
    pub fn with_digits(a: DMatrix<i64>, digits: Vec<Vec<i64>>) -> Result<Self> {
        Self::build(a, Some(digits))
    }

    fn build(a: DMatrix<i64>, custom_digits: Option<Vec<Vec<i64>>>) -> Result<Self> {
        assert!(a.is_square(), "dilation matrix must be square");
        let n = a.nrows();
        let a_f = a.map(|t| t as f64);

        let eigs = linalg::eigenvalues(&a_f.map(|t| linalg::cr(t)))?;
        let min_abs_eig = eigs.iter().map(|e| e.norm()).fold(f64::INFINITY, f64::min);
        if min_abs_eig <= 1.0 + 1e-9 {
            return Err(Error::NotExpansive(min_abs_eig));
        }

        let det128 = int_det(&a);
        if det128 == 0 {
            return Err(Error::NotExpansive(0.0));
        }
        let det = i64::try_from(det128)
            .map_err(|_| Error::NumericalFailure("determinant overflows i64".into()))?;
        let q = det.unsigned_abs() as usize;
        if q < 2 {
            return Err(Error::NotExpansive(min_abs_eig));
        }

        let a_inv = a_f
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("singular dilation".into()))?;
        let at_inv = a_inv.transpose();
        let snf = smith_normal_form(&a);

        let digits = match custom_digits {
            Some(d) => Self::validate_digits(&a, &snf, d, q)?,
            None => Self::canonical_digits(&a, det128, q)?,
        };

        // Spatial adapted norm: truncated series with rho = (1 + min|λ|)/2.
        let rho = (1.0 + min_abs_eig) / 2.0;
        let mut norm_truncation = 0usize;
        {
            let mut pow = DMatrix::<f64>::identity(n, n);
            let mut w = 1.0;
            loop {
                if w * linalg::op_norm(&pow.map(linalg::cr)) < 1e-12 {
                    break;
                }
                pow = &a_inv * &pow;
                w *= rho;
                norm_truncation += 1;
                if norm_truncation > 4000 {
                    return Err(Error::NumericalFailure(
                        "adapted norm series did not truncate".into(),
                    ));
                }
            }
        }
        let spatial_norm = AdaptedNorm::series(&a_inv, rho, norm_truncation);

        // Frequency side: certified contraction of A^{-T}. The Euclidean norm
        // certifies θ = ‖A^{-T}‖₂ when that is < 1; otherwise fall back to the
        // series norm for Aᵀ which certifies 1/ρ plus the truncation tail.
        let theta_euclid = linalg::op_norm(&at_inv.map(linalg::cr)) + 1e-12;
        let (theta, freq_norm) = if theta_euclid < 1.0 - 1e-9 {
            (theta_euclid, AdaptedNorm::euclidean(n))
        } else {
            let freq_norm = AdaptedNorm::series(&at_inv, rho, norm_truncation);
            let mut pow = at_inv.clone();
            for _ in 0..norm_truncation {
                pow = &at_inv * &pow;
            }
            let tail = rho.powi(norm_truncation as i32)
                * linalg::op_norm(&pow.map(linalg::cr));
            (1.0 / rho + tail, freq_norm)
        };

        let adj_at = int_adjugate(&a.transpose());
        Ok(DilationSystem {
            n,
            a,
            a_f,
            a_inv,
            at_inv,
            det,
            q,
            digits,
            rho,
            theta,
            norm_truncation,
            min_abs_eig,
            spatial_norm,
            freq_norm,
            snf,
            adj_at,
        })
    }

    /// The canonical digit set: the q integer points of A·[0,1)ⁿ, i.e. g with
    /// 0 ≤ (adj(A)·g)ᵢ·sign(det) < |det|. Sorted with 0 first, then lex.
    fn canonical_digits(a: &DMatrix<i64>, det: i128, q: usize) -> Result<Vec<Vec<i64>>> {
        let n = a.nrows();
        let adj = int_adjugate(a);
        let sign: i128 = if det >= 0 { 1 } else { -1 };
        let abs_det = det.abs();
        let box_radius: i64 = (0..n)
            .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<i64>())
            .max()
            .unwrap_or(1);

        let mut digits: Vec<Vec<i64>> = Vec::with_capacity(q);
        let mut g = vec![-box_radius; n];
        'enumerate: loop {
            let inside = (0..n).all(|i| {
                let num: i128 = (0..n).map(|j| adj[i][j] * g[j] as i128).sum();
                let v = num * sign;
                v >= 0 && v < abs_det
            });
            if inside {
                digits.push(g.clone());
            }
            for i in (0..n).rev() {
                if g[i] < box_radius {
                    g[i] += 1;
                    continue 'enumerate;
                }
                g[i] = -box_radius;
            }
            break;
        }
        if digits.len() != q {
            return Err(Error::NumericalFailure(format!(
                "digit enumeration found {} representatives, expected {}",
                digits.len(),
                q
            )));
        }
        digits.sort_by(|x, y| {
            let xz = x.iter().all(|&t| t == 0);
            let yz = y.iter().all(|&t| t == 0);
            match (xz, yz) {
                (true, false) => std::cmp::Ordering::Less,
                (false, true) => std::cmp::Ordering::Greater,
                _ => {
                    if lex_less(x, y) {
                        std::cmp::Ordering::Less
                    } else if x == y {
                        std::cmp::Ordering::Equal
                    } else {
                        std::cmp::Ordering::Greater
                    }
                }
            }
        });
        Ok(digits)
    }

    fn validate_digits(
        a: &DMatrix<i64>,
        snf: &SmithData,
        digits: Vec<Vec<i64>>,
        q: usize,
    ) -> Result<Vec<Vec<i64>>> {
        if digits.len() != q {
            return Err(Error::ParseError(format!(
                "digit set has {} entries, |det A| = {}",
                digits.len(),
                q
            )));
        }
        let n = a.nrows();
        if digits.iter().any(|d| d.len() != n) {
            return Err(Error::ParseError("digit dimension mismatch".into()));
        }
        if digits[0].iter().any(|&t| t != 0) {
            return Err(Error::ParseError("first digit must be 0".into()));
        }
        let mut keys: Vec<Vec<i128>> = digits.iter().map(|d| snf.residue_key(d)).collect();
        keys.sort();
        keys.dedup();
        if keys.len() != q {
            return Err(Error::ParseError(
                "digits are not pairwise incongruent modulo A·Zⁿ".into(),
            ));
        }
        Ok(digits)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn det(&self) -> i64 {
        self.det
    }

    pub fn matrix(&self) -> &DMatrix<i64> {
        &self.a
    }

    pub fn matrix_f(&self) -> &DMatrix<f64> {
        &self.a_f
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn transpose_inverse(&self) -> &DMatrix<f64> {
        &self.at_inv
    }

    pub fn digits(&self) -> &[Vec<i64>] {
        &self.digits
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Certified contraction factor of A⁻ᵀ in the frequency adapted norm.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn norm_truncation(&self) -> usize {
        self.norm_truncation
    }

    pub fn min_abs_eigenvalue(&self) -> f64 {
        self.min_abs_eig
    }

    pub fn spatial_norm(&self) -> &AdaptedNorm {
        &self.spatial_norm
    }

    pub fn freq_norm(&self) -> &AdaptedNorm {
        &self.freq_norm
    }

    /// Spectral radius of A⁻¹ = 1 / min |λ(A)|.
    pub fn inverse_spectral_radius(&self) -> f64 {
        1.0 / self.min_abs_eig
    }

    /// ψᵢ(x) = A⁻¹(x + gᵢ). Branch indices are 1-based, 1 ≤ i ≤ q.
    pub fn inverse_branch(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        if i == 0 || i > self.q {
            return Err(Error::IndexOutOfRange {
                index: i,
                count: self.q,
            });
        }
        Ok(self.branch_point(i - 1, x))
    }

    /// 0-based branch evaluation used by internal sweeps.
    pub fn branch_point(&self, idx: usize, x: &[f64]) -> Vec<f64> {
        let g = &self.digits[idx];
        let v = nalgebra::DVector::from_iterator(
            self.n,
            x.iter().zip(g.iter()).map(|(&xi, &gi)| xi + gi as f64),
        );
        (&self.a_inv * v).iter().cloned().collect()
    }

    /// All q branch points ψᵢ(x).
    pub fn branch_points(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.q).map(|i| self.branch_point(i, x)).collect()
    }

    /// The torus endomorphism r(x) = A·x mod Zⁿ.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(x);
        (&self.a_f * v).iter().map(|t| t.rem_euclid(1.0)).collect()
    }

    /// Apply A⁻ᵀ to an integer frequency; returns None when not an integer
    /// vector (i.e. t ∉ AᵀZⁿ). Exact adjugate arithmetic.
    pub fn freq_preimage(&self, t: &[i64]) -> Option<Vec<i64>> {
        let n = self.n;
        let det = self.det as i128;
        let mut s = vec![0i64; n];
        for i in 0..n {
            let num: i128 = (0..n).map(|j| self.adj_at[i][j] * t[j] as i128).sum();
            if num % det != 0 {
                return None;
            }
            s[i] = i64::try_from(num / det).ok()?;
        }
        Some(s)
    }

    /// Residue key for tests of digit completeness.
    pub fn residue_key(&self, g: &[i64]) -> Vec<i128> {
        self.snf.residue_key(g)
    }
}
