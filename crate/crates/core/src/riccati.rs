//! Continuous algebraic Riccati equation `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`.
//!
//! The primary solver extracts the stable invariant subspace of the
//! Hamiltonian matrix from an ordered real Schur form. Newton-Kleinman
//! iteration is used for refinement, for warm-started solves and as an
//! independent cross-check.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Residual above which a Schur solution is refined by Newton steps.
pub const REFINE_RESIDUAL: f64 = 1e-11;
/// Relative asymmetry of the raw subspace solution treated as ill-conditioned.
pub const MAX_ASYMMETRY: f64 = 1e-8;
/// Eigenvalues with `|Re λ|` below this bound count as on the imaginary axis.
pub const AXIS_TOL: f64 = 1e-9;

const MAX_NEWTON_STEPS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub residual: f64,
    pub closed_loop_spectrum: Vec<Complex<f64>>,
}

impl CareSolution {
    pub fn is_hurwitz(&self) -> bool {
        self.closed_loop_spectrum.iter().all(|z| z.re < 0.0)
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.closed_loop_spectrum
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CareMethod {
    Schur,
    NewtonKleinman,
}

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) || m == 0 {
        return Err(Error::Dimension(format!(
            "CARE shapes A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    if a.iter().chain(b.iter()).chain(q.iter()).chain(r.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Dimension("CARE data contains non-finite entries".into()));
    }
    Ok(())
}

/// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F`.
pub fn care_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let r_inv = r.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(r.nrows(), r.ncols(), f64::NAN));
    let pb = p * b;
    (a.transpose() * p + p * a - &pb * r_inv * pb.transpose() + q).norm()
}

fn finish(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: DMatrix<f64>,
) -> Result<CareSolution> {
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NoStabilizingSolution { reason: "R is singular".into() })?;
    let gain = &r_inv * b.transpose() * &p;
    let closed = a - b * &gain;
    let closed_loop_spectrum: Vec<Complex<f64>> = closed.complex_eigenvalues().iter().copied().collect();
    let residual = care_residual(a, b, q, r, &p);
    let sol = CareSolution {
        p,
        gain,
        residual,
        closed_loop_spectrum,
    };
    if !sol.is_hurwitz() {
        return Err(Error::NoStabilizingSolution {
            reason: format!("closed loop not Hurwitz (spectral abscissa {:.3e})", sol.spectral_abscissa()),
        });
    }
    Ok(sol)
}

/// Solves the CARE for its stabilizing solution via the ordered Schur form,
/// refining with Newton steps when the residual warrants it. If the Schur
/// route fails, Newton-Kleinman from Bass's gain is tried before the Schur
/// error is returned.
pub fn solve_care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<CareSolution> {
    match solve_care_schur(a, b, q, r) {
        Ok(sol) => Ok(sol),
        Err(Error::Dimension(msg)) => Err(Error::Dimension(msg)),
        Err(first) => solve_care_with(CareMethod::NewtonKleinman, a, b, q, r, None).map_err(|_| first),
    }
}

fn solve_care_schur(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<CareSolution> {
    check_dims(a, b, q, r)?;
    let p = schur_subspace(a, b, q, r)?;
    let p = if care_residual(a, b, q, r, &p) > REFINE_RESIDUAL * (1.0 + q.norm()) {
        newton_refine(a, b, q, r, p, 6)?
    } else {
        p
    };
    finish(a, b, q, r, p)
}

/// Solves the CARE with either method. `warm` seeds Newton-Kleinman when it
/// yields a stabilizing gain; otherwise the iteration starts from Bass's gain.
pub fn solve_care_with(
    method: CareMethod,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    warm: Option<&DMatrix<f64>>,
) -> Result<CareSolution> {
    match method {
        CareMethod::Schur => solve_care_schur(a, b, q, r),
        CareMethod::NewtonKleinman => {
            check_dims(a, b, q, r)?;
            let r_inv = r
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::NoStabilizingSolution { reason: "R is singular".into() })?;
            let seeded = warm.map(|p| &r_inv * b.transpose() * p).filter(|k| is_hurwitz(&(a - b * k)));
            let k0 = match seeded {
                Some(k) => k,
                None => bass_gain(a, b)?,
            };
            let p = newton_kleinman(a, b, q, r, k0, MAX_NEWTON_STEPS)?;
            finish(a, b, q, r, p)
        }
    }
}

fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    m.complex_eigenvalues().iter().all(|z| z.re < 0.0)
}

/// Symplectic diagonal scaling `H ← T H T⁻¹` with `T = diag(D, D⁻¹)`, powers
/// of two only. Returns `D`; the Riccati solution of the scaled problem is
/// `D⁻¹ P D⁻¹`.
fn symplectic_balance(h: &mut DMatrix<f64>, n: usize) -> DVector<f64> {
    let mut d = DVector::from_element(n, 1.0);
    for _ in 0..50 {
        let mut changed = false;
        for j in 0..n {
            let off = |v: f64, k: usize, skip: usize| if k == skip { 0.0 } else { v.abs() };
            // entries that grow with d_j: row j and column n+j
            let grow: f64 = (0..2 * n).map(|k| off(h[(j, k)], k, j) + off(h[(k, n + j)], k, n + j)).sum();
            let shrink: f64 = (0..2 * n).map(|k| off(h[(k, j)], k, j) + off(h[(n + j, k)], k, n + j)).sum();
            if grow == 0.0 || shrink == 0.0 {
                continue;
            }
            let f = (0.5 * (shrink / grow).log2()).round().exp2();
            if f == 1.0 {
                continue;
            }
            changed = true;
            d[j] *= f;
            for k in 0..2 * n {
                h[(j, k)] *= f;
                h[(k, j)] /= f;
                h[(n + j, k)] /= f;
                h[(k, n + j)] *= f;
            }
        }
        if !changed {
            break;
        }
    }
    d
}

/// `P = U21 U11⁻¹` from the stable invariant subspace of
/// `H = [[A, −BR⁻¹Bᵀ], [−Q, −Aᵀ]]`.
fn schur_subspace(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NoStabilizingSolution { reason: "R is singular".into() })?;
    let s = b * r_inv * b.transpose();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let d = symplectic_balance(&mut h, n);

    let schur = h
        .try_schur(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NoStabilizingSolution { reason: "Hamiltonian Schur iteration did not converge".into() })?;
    let (mut u, mut t) = schur.unpack();
    let scale = t.amax().max(f64::MIN_POSITIVE);
    split_real_pairs(&mut u, &mut t);
    let blocks = diagonal_blocks(&t);
    let mut stable = 0;
    for &(start, size) in &blocks {
        let re = block_real_part(&t, start, size);
        if re.abs() <= AXIS_TOL * scale {
            return Err(Error::NoStabilizingSolution {
                reason: format!("Hamiltonian eigenvalue on the imaginary axis (Re = {re:.3e})"),
            });
        }
        if re < 0.0 {
            stable += size;
        }
    }
    if stable != n {
        return Err(Error::NoStabilizingSolution {
            reason: format!("found {stable} stable Hamiltonian eigenvalues, expected {n}"),
        });
    }
    reorder_stable_first(&mut u, &mut t)?;

    let u11 = u.view((0, 0), (n, n)).into_owned();
    let u21 = u.view((n, 0), (n, n)).into_owned();
    let u11_t_inv = u11
        .transpose()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::NoStabilizingSolution { reason: "stable subspace is not a graph (U11 singular)".into() })?;
    // P = U21 U11⁻¹, computed as (U11⁻ᵀ U21ᵀ)ᵀ, in balanced coordinates
    let pb = (u11_t_inv * u21.transpose()).transpose();
    let asym = (&pb - pb.transpose()).norm() / pb.norm().max(f64::MIN_POSITIVE);
    if !asym.is_finite() || asym > MAX_ASYMMETRY {
        return Err(Error::IllConditioned { asymmetry: asym });
    }
    let p = DMatrix::from_fn(n, n, |i, j| d[i] * pb[(i, j)] * d[j]);
    Ok((&p + p.transpose()) * 0.5)
}

/// Starting indices and sizes of the diagonal blocks of a quasi-triangular `t`.
fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

fn block_real_part(t: &DMatrix<f64>, start: usize, size: usize) -> f64 {
    if size == 1 {
        t[(start, start)]
    } else {
        0.5 * (t[(start, start)] + t[(start + 1, start + 1)])
    }
}

/// Applies `t ← GᵀtG`, `u ← uG` for a rotation `G` acting on columns `i, i+1`.
fn rotate(u: &mut DMatrix<f64>, t: &mut DMatrix<f64>, i: usize, c: f64, s: f64) {
    let n = t.nrows();
    for k in 0..n {
        let (a, b) = (t[(i, k)], t[(i + 1, k)]);
        t[(i, k)] = c * a + s * b;
        t[(i + 1, k)] = -s * a + c * b;
    }
    for k in 0..n {
        let (a, b) = (t[(k, i)], t[(k, i + 1)]);
        t[(k, i)] = c * a + s * b;
        t[(k, i + 1)] = -s * a + c * b;
        let (a, b) = (u[(k, i)], u[(k, i + 1)]);
        u[(k, i)] = c * a + s * b;
        u[(k, i + 1)] = -s * a + c * b;
    }
}

/// Splits 2×2 diagonal blocks that carry a pair of real eigenvalues, and
/// flushes negligible subdiagonal entries to zero.
fn split_real_pairs(u: &mut DMatrix<f64>, t: &mut DMatrix<f64>) {
    let n = t.nrows();
    let scale = t.amax();
    for i in 0..n.saturating_sub(1) {
        if t[(i + 1, i)].abs() <= f64::EPSILON * scale {
            t[(i + 1, i)] = 0.0;
        }
    }
    let mut i = 0;
    while i + 1 < n {
        if t[(i + 1, i)] == 0.0 {
            i += 1;
            continue;
        }
        let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
        let half = 0.5 * (a - d);
        let disc = half * half + b * c;
        if disc >= 0.0 {
            // eigenvector (λ − d, c) of the block for λ = (a+d)/2 + sign·√disc
            let lambda = 0.5 * (a + d) + if half >= 0.0 { disc.sqrt() } else { -disc.sqrt() };
            let (x, y) = (lambda - d, c);
            let norm = x.hypot(y);
            if norm > 0.0 {
                rotate(u, t, i, x / norm, y / norm);
            }
            t[(i + 1, i)] = 0.0;
            i += 1;
        } else {
            i += 2;
        }
    }
}

/// Solves `T11 X − X T22 = T12` for blocks of size at most 2.
fn small_sylvester(t11: &DMatrix<f64>, t22: &DMatrix<f64>, t12: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = t11.nrows();
    let q = t22.nrows();
    let ip = DMatrix::<f64>::identity(p, p);
    let iq = DMatrix::<f64>::identity(q, q);
    let k = iq.kronecker(t11) - t22.transpose().kronecker(&ip);
    let rhs = DVector::from_column_slice(t12.as_slice());
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NoStabilizingSolution { reason: "block swap failed (coincident eigenvalues)".into() })?;
    Ok(DMatrix::from_column_slice(p, q, x.as_slice()))
}

/// Swaps the adjacent diagonal blocks starting at `i` (size `p`) and `i + p`
/// (size `q`) with an orthogonal similarity.
fn swap_blocks(u: &mut DMatrix<f64>, t: &mut DMatrix<f64>, i: usize, p: usize, q: usize) -> Result<()> {
    let n = t.nrows();
    let t11 = t.view((i, i), (p, p)).into_owned();
    let t22 = t.view((i + p, i + p), (q, q)).into_owned();
    let t12 = t.view((i, i + p), (p, q)).into_owned();
    let x = small_sylvester(&t11, &t22, &t12)?;
    // columns of [−X; I_q] span the invariant subspace belonging to T22
    let mut basis = DMatrix::zeros(p + q, q);
    basis.view_mut((0, 0), (p, q)).copy_from(&(-x));
    basis.view_mut((p, 0), (q, q)).fill_with_identity();
    let qr = basis.qr();
    let g = complete_basis(&qr.q());
    let rows = t.view((i, 0), (p + q, n)).into_owned();
    t.view_mut((i, 0), (p + q, n)).copy_from(&(g.transpose() * rows));
    let cols = t.view((0, i), (n, p + q)).into_owned();
    t.view_mut((0, i), (n, p + q)).copy_from(&(cols * &g));
    let ucols = u.view((0, i), (n, p + q)).into_owned();
    u.view_mut((0, i), (n, p + q)).copy_from(&(ucols * &g));
    for r in (i + q)..(i + p + q) {
        for c in i..(i + q) {
            t[(r, c)] = 0.0;
        }
    }
    Ok(())
}

/// Extends orthonormal columns `g` to a square orthogonal matrix.
fn complete_basis(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    let mut out: Vec<DVector<f64>> = g.column_iter().map(|c| c.into_owned()).collect();
    for j in 0..n {
        if out.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[j] = 1.0;
        for _ in 0..2 {
            for w in &out {
                let d = w.dot(&v);
                v -= w * d;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            out.push(v / norm);
        }
    }
    DMatrix::from_columns(&out)
}

/// Bubbles every stable block of the quasi-triangular `t` ahead of the
/// unstable ones.
fn reorder_stable_first(u: &mut DMatrix<f64>, t: &mut DMatrix<f64>) -> Result<()> {
    loop {
        let blocks = diagonal_blocks(t);
        let mut swapped = false;
        for w in blocks.windows(2) {
            let (i, p) = w[0];
            let (j, q) = w[1];
            if block_real_part(t, i, p) > 0.0 && block_real_part(t, j, q) < 0.0 {
                swap_blocks(u, t, i, p, q)?;
                split_real_pairs(u, t);
                swapped = true;
                break;
            }
        }
        if !swapped {
            return Ok(());
        }
    }
}

/// Solves `AᵀX + XA + C = 0` through its Kronecker form.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let i = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let k = i.kronecker(&at) + at.kronecker(&i);
    let rhs = -DVector::from_column_slice(c.as_slice());
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NoStabilizingSolution { reason: "singular Lyapunov operator".into() })?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// A stabilizing gain `K = BᵀZ⁻¹` with `(A + βI)Z + Z(A + βI)ᵀ = 2BBᵀ` and
/// `β` beyond the spectral abscissa of `A`.
pub fn bass_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let abscissa = a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let beta = abscissa.max(0.0) + 1.0 + 0.1 * a.norm();
    let shifted = -(a + DMatrix::<f64>::identity(n, n) * beta);
    // (−A_β)ᵀ-form: shiftedᵀ Z + Z shifted + 2BBᵀ = 0 with shifted = −(A+βI)ᵀ
    let z = solve_lyapunov(&shifted.transpose(), &(b * b.transpose() * 2.0))?;
    let z_inv = z
        .try_inverse()
        .ok_or_else(|| Error::NoStabilizingSolution { reason: "(A, B) is not controllable".into() })?;
    Ok(b.transpose() * z_inv)
}

/// Newton-Kleinman iteration from a stabilizing gain `k0`.
pub fn newton_kleinman(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k0: DMatrix<f64>,
    max_steps: usize,
) -> Result<DMatrix<f64>> {
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NoStabilizingSolution { reason: "R is singular".into() })?;
    let mut k = k0;
    let mut p_prev: Option<DMatrix<f64>> = None;
    for _ in 0..max_steps {
        let closed = a - b * &k;
        let p = solve_lyapunov(&closed, &(q + k.transpose() * r * &k))?;
        k = &r_inv * b.transpose() * &p;
        if let Some(prev) = &p_prev {
            if (&p - prev).norm() <= 1e-14 * p.norm().max(1.0) {
                return Ok(p);
            }
        }
        p_prev = Some(p);
    }
    let p = p_prev.ok_or_else(|| Error::NoStabilizingSolution { reason: "no Newton steps taken".into() })?;
    if care_residual(a, b, q, r, &p) > 1e-6 * (1.0 + q.norm()) {
        return Err(Error::NoStabilizingSolution { reason: "Newton-Kleinman did not converge".into() });
    }
    Ok(p)
}

fn newton_refine(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: DMatrix<f64>,
    steps: usize,
) -> Result<DMatrix<f64>> {
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NoStabilizingSolution { reason: "R is singular".into() })?;
    let k = &r_inv * b.transpose() * &p;
    if !is_hurwitz(&(a - b * &k)) {
        return Ok(p);
    }
    match newton_kleinman(a, b, q, r, k, steps) {
        Ok(refined) if care_residual(a, b, q, r, &refined) < care_residual(a, b, q, r, &p) => Ok(refined),
        _ => Ok(p),
    }
}

/// State weight `Q(x̄) = (1 + c5 e5² + c6 e6²) · Q0` and constant `R`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weighting {
    pub q_diag: [f64; 6],
    pub q_scale: f64,
    pub angle_gain: f64,
    pub rate_gain: f64,
    pub r_diag: [f64; 2],
}

impl Default for Weighting {
    fn default() -> Self {
        Self {
            q_diag: [260.0, 1.0, 260.0, 1.0, 160.0, 100.0],
            q_scale: 0.001,
            angle_gain: 0.01,
            rate_gain: 0.01,
            r_diag: [50.0, 50.0],
        }
    }
}

impl Weighting {
    pub fn validate(&self) -> Result<()> {
        let ok = self.q_diag.iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.q_scale.is_finite()
            && self.q_scale >= 0.0
            && self.angle_gain >= 0.0
            && self.rate_gain >= 0.0
            && self.r_diag.iter().all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("weights must satisfy Q ⪰ 0 and R ≻ 0".into()))
        }
    }

    /// `Q` at the error state `e`.
    pub fn q(&self, e: &DVector<f64>) -> DMatrix<f64> {
        let factor = 1.0 + self.angle_gain * e[4] * e[4] + self.rate_gain * e[5] * e[5];
        DMatrix::from_diagonal(&DVector::from_iterator(6, self.q_diag.iter().map(|d| d * self.q_scale * factor)))
    }

    pub fn r(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.r_diag))
    }
}

/// Result of one SDRE evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SdreOutput {
    pub u: DVector<f64>,
    pub gain: DMatrix<f64>,
    pub care: CareSolution,
}

/// `u = −R⁻¹BᵀP e` for the frozen pair `(A, B)`.
pub fn sdre_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    weights: &Weighting,
    e: &DVector<f64>,
    warm: Option<&DMatrix<f64>>,
) -> Result<SdreOutput> {
    let q = weights.q(e);
    let r = weights.r();
    let care = match solve_care_schur(a, b, &q, &r) {
        Ok(sol) => sol,
        Err(first) => solve_care_with(CareMethod::NewtonKleinman, a, b, &q, &r, warm).map_err(|_| first)?,
    };
    let u = -(&care.gain * e);
    Ok(SdreOutput {
        u,
        gain: care.gain.clone(),
        care,
    })
}

/// One sample of the Lyapunov diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub t: f64,
    pub value: f64,
    pub rate: f64,
    pub p_rate_max_eig: f64,
    pub flagged: bool,
}

/// Distance from the origin below which non-decrease of `L` is not flagged.
pub const LYAPUNOV_ORIGIN_TOL: f64 = 1e-6;

/// `L = eᵀP e` with central-difference estimates of `L̇` and of the largest
/// eigenvalue of `Ṗ`; one-sided differences at the ends.
pub fn lyapunov_monitor(dt: f64, states: &[DVector<f64>], ps: &[DMatrix<f64>]) -> Result<Vec<LyapunovSample>> {
    if states.len() != ps.len() {
        return Err(Error::Dimension("state and P series differ in length".into()));
    }
    if states.len() < 3 {
        return Err(Error::InvalidConfig("the Lyapunov monitor needs at least 3 samples".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig("sample step must be positive".into()));
    }
    let n = states.len();
    let values: Vec<f64> = states.iter().zip(ps).map(|(e, p)| e.dot(&(p * e))).collect();
    let diff = |k: usize| -> (usize, usize, f64) {
        if k == 0 {
            (1, 0, dt)
        } else if k == n - 1 {
            (n - 1, n - 2, dt)
        } else {
            (k + 1, k - 1, 2.0 * dt)
        }
    };
    Ok((0..n)
        .map(|k| {
            let (hi, lo, h) = diff(k);
            let rate = (values[hi] - values[lo]) / h;
            let p_dot = (&ps[hi] - &ps[lo]) / h;
            let sym = (&p_dot + p_dot.transpose()) * 0.5;
            let p_rate_max_eig = sym.symmetric_eigenvalues().max();
            LyapunovSample {
                t: k as f64 * dt,
                value: values[k],
                rate,
                p_rate_max_eig,
                flagged: rate >= 0.0 && states[k].norm() > LYAPUNOV_ORIGIN_TOL,
            }
        })
        .collect())
}
