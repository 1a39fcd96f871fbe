//! Catalog of monotone operators with closed-form resolvents or values, plus
//! sampled property checkers.
//!
//! Checkers return signed residuals; callers pick the tolerance.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spaces::{add_scaled, dist_sq, dot, norm_sq, sub};

/// Dense real matrix, row-major. Used for linear couplings `L_ki` and for
/// affine monotone operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct LinearMap {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LinearMap {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param("matrix", "empty matrix"));
        }
        if data.len() != rows * cols {
            return Err(Error::dim("matrix data", rows * cols, data.len()));
        }
        Ok(LinearMap { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::param("matrix", "ragged rows"));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, 1.0)
    }

    pub fn scalar(n: usize, s: f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = s;
        }
        LinearMap { rows: n, cols: n, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data.chunks_exact(self.cols).map(|row| dot(row, x)).collect()
    }

    /// `out += self · x`
    pub fn apply_add(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    pub fn adjoint_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.adjoint_apply_add(v, &mut out);
        out
    }

    /// `out += selfᵀ · v`
    pub fn adjoint_apply_add(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        for (vi, row) in v.iter().zip(self.data.chunks_exact(self.cols)) {
            add_scaled(out, *vi, row);
        }
    }

    pub fn transpose(&self) -> LinearMap {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.get(r, c);
            }
        }
        LinearMap {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|r| (0..r).all(|c| (self.get(r, c) - self.get(c, r)).abs() <= tol))
    }

    /// Whether `M + Mᵀ` is positive semidefinite, i.e. `x ↦ Mx` is monotone.
    pub fn is_monotone(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.rows;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        // Cholesky of the symmetric part with a small diagonal lift.
        let mut a = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                a[r * n + c] = 0.5 * (self.get(r, c) + self.get(c, r));
            }
            a[r * n + r] += 1e-10 * scale;
        }
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if d <= 0.0 {
                return false;
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
        }
        true
    }

    /// Solves `(I + γ M) p = rhs` by Gaussian elimination with partial pivoting.
    fn solve_shifted(&self, gamma: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.rows;
        let mut a: Vec<f64> = self.data.iter().map(|v| gamma * v).collect();
        for i in 0..n {
            a[i * n + i] += 1.0;
        }
        let mut b = rhs.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
                .unwrap();
            if a[piv * n + col].abs() < 1e-300 {
                return Err(Error::param("matrix", "singular system in affine resolvent"));
            }
            if piv != col {
                for k in 0..n {
                    a.swap(piv * n + k, col * n + k);
                }
                b.swap(piv, col);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                if f != 0.0 {
                    for k in col..n {
                        a[r * n + k] -= f * a[col * n + k];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
        for r in (0..n).rev() {
            let mut s = b[r];
            for k in r + 1..n {
                s -= a[r * n + k] * b[k];
            }
            b[r] = s / a[r * n + r];
        }
        Ok(b)
    }
}

impl TryFrom<Vec<Vec<f64>>> for LinearMap {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        LinearMap::from_rows(&rows)
    }
}

impl From<LinearMap> for Vec<Vec<f64>> {
    fn from(m: LinearMap) -> Self {
        m.data.chunks_exact(m.cols).map(<[f64]>::to_vec).collect()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::param("gamma", format!("must be positive and finite, got {gamma}")))
    }
}

fn check_len(context: &str, expected: usize, x: &[f64]) -> Result<()> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(Error::dim(context, expected, x.len()))
    }
}

/// Maximally monotone operators with closed-form resolvents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaxMonotoneOp {
    Zero,
    /// `∂(weight·‖·‖₁)`.
    L1 { weight: f64 },
    /// Normal cone of the box `[lo, hi]`; its resolvent is the projection.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `∂(½ Σ q_j (x_j − c_j)²)` with `q ≥ 0`.
    Quadratic { q: Vec<f64>, c: Vec<f64> },
    /// `x ↦ Mx + b` with `M + Mᵀ ⪰ 0`.
    Affine { matrix: LinearMap, b: Vec<f64> },
    /// `x ↦ inner(x) − shift`.
    Shifted {
        inner: Box<MaxMonotoneOp>,
        shift: Vec<f64>,
    },
}

impl MaxMonotoneOp {
    pub fn l1(weight: f64) -> Self {
        MaxMonotoneOp::L1 { weight }
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        MaxMonotoneOp::Box { lo, hi }
    }

    /// Normal cone of `{0}` in dimension `dim`.
    pub fn origin_cone(dim: usize) -> Self {
        MaxMonotoneOp::Box {
            lo: vec![0.0; dim],
            hi: vec![0.0; dim],
        }
    }

    pub fn quadratic(q: Vec<f64>, c: Vec<f64>) -> Self {
        MaxMonotoneOp::Quadratic { q, c }
    }

    pub fn affine(matrix: LinearMap, b: Vec<f64>) -> Self {
        MaxMonotoneOp::Affine { matrix, b }
    }

    pub fn shifted(self, shift: Vec<f64>) -> Self {
        if shift.iter().all(|v| *v == 0.0) {
            return self;
        }
        match self {
            MaxMonotoneOp::Shifted { inner, shift: s0 } => {
                let s: Vec<f64> = s0.iter().zip(&shift).map(|(a, b)| a + b).collect();
                MaxMonotoneOp::Shifted { inner, shift: s }
            }
            op => MaxMonotoneOp::Shifted {
                inner: Box::new(op),
                shift,
            },
        }
    }

    /// Fixed dimension, when the operator carries one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            MaxMonotoneOp::Zero | MaxMonotoneOp::L1 { .. } => None,
            MaxMonotoneOp::Box { lo, .. } => Some(lo.len()),
            MaxMonotoneOp::Quadratic { q, .. } => Some(q.len()),
            MaxMonotoneOp::Affine { matrix, .. } => Some(matrix.rows()),
            MaxMonotoneOp::Shifted { shift, .. } => Some(shift.len()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, MaxMonotoneOp::Zero)
    }

    /// Checks parameters and, if `dim` is given, compatibility with it.
    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        if let (Some(d), Some(own)) = (dim, self.dim()) {
            if d != own {
                return Err(Error::dim("operator dimension", d, own));
            }
        }
        match self {
            MaxMonotoneOp::Zero => Ok(()),
            MaxMonotoneOp::L1 { weight } => {
                if *weight >= 0.0 && weight.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("weight", "must be finite and nonnegative"))
                }
            }
            MaxMonotoneOp::Box { lo, hi } => {
                check_len("box hi", lo.len(), hi)?;
                if lo.iter().zip(hi).all(|(l, h)| l <= h) {
                    Ok(())
                } else {
                    Err(Error::param("box", "lo must not exceed hi"))
                }
            }
            MaxMonotoneOp::Quadratic { q, c } => {
                check_len("quadratic center", q.len(), c)?;
                if q.iter().all(|v| *v >= 0.0 && v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::param("q", "weights must be finite and nonnegative"))
                }
            }
            MaxMonotoneOp::Affine { matrix, b } => {
                check_len("affine offset", matrix.rows(), b)?;
                if !matrix.is_monotone() {
                    return Err(Error::param("matrix", "M + Mᵀ is not positive semidefinite"));
                }
                Ok(())
            }
            MaxMonotoneOp::Shifted { inner, shift } => inner.validate(Some(shift.len())),
        }
    }

    /// `J_{γA} x = (Id + γA)⁻¹ x`.
    pub fn resolvent(&self, gamma: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_gamma(gamma)?;
        self.resolvent_unchecked(gamma, x)
    }

    fn resolvent_unchecked(&self, gamma: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            MaxMonotoneOp::Zero => Ok(x.to_vec()),
            MaxMonotoneOp::L1 { weight } => {
                let t = gamma * weight;
                Ok(x.iter().map(|&v| v.signum() * (v.abs() - t).max(0.0)).collect())
            }
            MaxMonotoneOp::Box { lo, hi } => {
                check_len("box resolvent", lo.len(), x)?;
                Ok(x.iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(&v, (&l, &h))| v.max(l).min(h))
                    .collect())
            }
            MaxMonotoneOp::Quadratic { q, c } => {
                check_len("quadratic resolvent", q.len(), x)?;
                Ok(x.iter()
                    .zip(q.iter().zip(c))
                    .map(|(&v, (&qj, &cj))| (v + gamma * qj * cj) / (1.0 + gamma * qj))
                    .collect())
            }
            MaxMonotoneOp::Affine { matrix, b } => {
                check_len("affine resolvent", matrix.rows(), x)?;
                let rhs: Vec<f64> = x.iter().zip(b).map(|(v, bj)| v - gamma * bj).collect();
                matrix.solve_shifted(gamma, &rhs)
            }
            MaxMonotoneOp::Shifted { inner, shift } => {
                check_len("shifted resolvent", shift.len(), x)?;
                let mut arg = x.to_vec();
                add_scaled(&mut arg, gamma, shift);
                inner.resolvent_unchecked(gamma, &arg)
            }
        }
    }

    /// A point of `gra A`: `(J_{γA}x, (x − J_{γA}x)/γ)`.
    pub fn graph_point(&self, gamma: f64, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let w = self.resolvent(gamma, x)?;
        let wstar = x.iter().zip(&w).map(|(a, b)| (a - b) / gamma).collect();
        Ok((w, wstar))
    }

    /// `‖J_A(p + p*) − p‖`, zero exactly when `p* ∈ A p`.
    pub fn graph_residual(&self, p: &[f64], pstar: &[f64]) -> Result<f64> {
        let arg: Vec<f64> = p.iter().zip(pstar).map(|(a, b)| a + b).collect();
        let j = self.resolvent_unchecked(1.0, &arg)?;
        Ok(dist_sq(&j, p).sqrt())
    }

    /// Minimal-norm element of `A x`, or `None` when `x ∉ dom A`.
    pub fn min_norm_element(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            MaxMonotoneOp::Zero => Some(vec![0.0; x.len()]),
            MaxMonotoneOp::L1 { weight } => Some(
                x.iter()
                    .map(|&v| if v == 0.0 { 0.0 } else { weight * v.signum() })
                    .collect(),
            ),
            MaxMonotoneOp::Box { lo, hi } => {
                let inside = x.len() == lo.len()
                    && x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| l <= v && v <= h);
                inside.then(|| vec![0.0; x.len()])
            }
            MaxMonotoneOp::Quadratic { q, c } => {
                (x.len() == q.len()).then(|| x.iter().zip(q.iter().zip(c)).map(|(v, (qj, cj))| qj * (v - cj)).collect())
            }
            MaxMonotoneOp::Affine { matrix, b } => (x.len() == matrix.cols()).then(|| {
                let mut y = matrix.apply(x);
                add_scaled(&mut y, 1.0, b);
                y
            }),
            MaxMonotoneOp::Shifted { inner, shift } => {
                let mut e = inner.min_norm_element(x)?;
                add_scaled(&mut e, -1.0, shift);
                Some(e)
            }
        }
    }

    /// A known point of `zer A` in dimension `dim`, when one is available in
    /// closed form.
    pub fn known_zero(&self, dim: usize) -> Option<Vec<f64>> {
        match self {
            MaxMonotoneOp::Zero | MaxMonotoneOp::L1 { .. } => Some(vec![0.0; dim]),
            MaxMonotoneOp::Box { lo, hi } => {
                Some(lo.iter().zip(hi).map(|(l, h)| 0.0f64.max(*l).min(*h)).collect())
            }
            MaxMonotoneOp::Quadratic { c, .. } => Some(c.clone()),
            MaxMonotoneOp::Affine { matrix, b } => {
                // M z = −b  ⇔  (I + M)z = z − b; only attempt invertible M.
                let neg_b: Vec<f64> = b.iter().map(|v| -v).collect();
                let z = solve_dense(matrix, &neg_b)?;
                Some(z)
            }
            MaxMonotoneOp::Shifted { .. } => None,
        }
    }

    /// Value of the convex potential `f` with `A = ∂f`, when `A` is a
    /// subdifferential in the catalog. `+∞` outside the domain.
    pub fn potential(&self, x: &[f64]) -> Option<f64> {
        match self {
            MaxMonotoneOp::Zero => Some(0.0),
            MaxMonotoneOp::L1 { weight } => Some(weight * x.iter().map(|v| v.abs()).sum::<f64>()),
            MaxMonotoneOp::Box { lo, hi } => {
                let inside = x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| l <= v && v <= h);
                Some(if inside { 0.0 } else { f64::INFINITY })
            }
            MaxMonotoneOp::Quadratic { q, c } => Some(
                0.5 * x
                    .iter()
                    .zip(q.iter().zip(c))
                    .map(|(v, (qj, cj))| qj * (v - cj) * (v - cj))
                    .sum::<f64>(),
            ),
            MaxMonotoneOp::Affine { matrix, b } => matrix
                .is_symmetric(1e-14)
                .then(|| 0.5 * dot(x, &matrix.apply(x)) + dot(b, x)),
            MaxMonotoneOp::Shifted { inner, shift } => Some(inner.potential(x)? - dot(shift, x)),
        }
    }
}

fn solve_dense(m: &LinearMap, rhs: &[f64]) -> Option<Vec<f64>> {
    // Reuse the shifted solver on (I + (M − I)) by building M − I explicitly.
    let n = m.rows();
    if !m.is_square() {
        return None;
    }
    let mut shifted = m.clone();
    for i in 0..n {
        shifted.data[i * n + i] -= 1.0;
    }
    let z = shifted.solve_shifted(1.0, rhs).ok()?;
    z.iter().all(|v| v.is_finite()).then_some(z)
}

/// Opaque user-supplied map. Property checks on it are sampled, never proved.
#[derive(Clone)]
pub struct CustomMap {
    pub name: String,
    pub f: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl fmt::Debug for CustomMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomMap({})", self.name)
    }
}

impl PartialEq for CustomMap {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.f, &other.f)
    }
}

/// Single-valued maps used for the cocoercive, Lipschitz-monotone and
/// coupling roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SingleValuedMap {
    Zero,
    ScaledIdentity { scale: f64 },
    /// `x ↦ q ⊙ (x − c)`, the gradient of `½ Σ q_j (x_j − c_j)²`.
    DiagAffine { q: Vec<f64>, c: Vec<f64> },
    Affine { matrix: LinearMap, b: Vec<f64> },
    /// Planar rotation by `angle` scaled by `scale`; monotone when
    /// `cos(angle) ≥ 0`, never cocoercive for `angle = ±π/2`.
    Rotation { angle: f64, scale: f64 },
    #[serde(skip)]
    Custom(CustomMap),
}

impl SingleValuedMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SingleValuedMap::Zero => vec![0.0; x.len()],
            SingleValuedMap::ScaledIdentity { scale } => x.iter().map(|v| scale * v).collect(),
            SingleValuedMap::DiagAffine { q, c } => {
                x.iter().zip(q.iter().zip(c)).map(|(v, (qj, cj))| qj * (v - cj)).collect()
            }
            SingleValuedMap::Affine { matrix, b } => {
                let mut y = matrix.apply(x);
                add_scaled(&mut y, 1.0, b);
                y
            }
            SingleValuedMap::Rotation { angle, scale } => {
                let (s, c) = angle.sin_cos();
                vec![scale * (c * x[0] - s * x[1]), scale * (s * x[0] + c * x[1])]
            }
            SingleValuedMap::Custom(m) => (m.f)(x),
        }
    }

    /// `out += self(x)`
    pub fn apply_add(&self, x: &[f64], out: &mut [f64]) {
        match self {
            SingleValuedMap::Zero => {}
            _ => add_scaled(out, 1.0, &self.apply(x)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SingleValuedMap::Zero)
    }

    /// `false` for opaque user callables.
    pub fn is_catalog(&self) -> bool {
        !matches!(self, SingleValuedMap::Custom(_))
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            SingleValuedMap::Zero | SingleValuedMap::ScaledIdentity { .. } | SingleValuedMap::Custom(_) => None,
            SingleValuedMap::DiagAffine { q, .. } => Some(q.len()),
            SingleValuedMap::Affine { matrix, .. } => Some(matrix.rows()),
            SingleValuedMap::Rotation { .. } => Some(2),
        }
    }

    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        if let (Some(d), Some(own)) = (dim, self.dim()) {
            if d != own {
                return Err(Error::dim("map dimension", d, own));
            }
        }
        match self {
            SingleValuedMap::DiagAffine { q, c } => check_len("diag_affine center", q.len(), c),
            SingleValuedMap::Affine { matrix, b } => {
                if !matrix.is_square() {
                    return Err(Error::param("matrix", "affine map must be square"));
                }
                check_len("affine offset", matrix.rows(), b)
            }
            _ => Ok(()),
        }
    }
}

/// `C` with `⟨x−y | Cx−Cy⟩ ≥ α‖Cx−Cy‖²`. The zero map carries `α = +∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoerciveOp {
    pub map: SingleValuedMap,
    #[serde(with = "serde_extended_f64")]
    pub alpha: f64,
}

impl CocoerciveOp {
    pub fn new(map: SingleValuedMap, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::param("alpha", "cocoercivity constant must be positive"));
        }
        Ok(CocoerciveOp { map, alpha })
    }

    pub fn zero() -> Self {
        CocoerciveOp {
            map: SingleValuedMap::Zero,
            alpha: f64::INFINITY,
        }
    }

    pub fn identity() -> Self {
        CocoerciveOp {
            map: SingleValuedMap::ScaledIdentity { scale: 1.0 },
            alpha: 1.0,
        }
    }

    /// Gradient of `½ Σ q_j (x_j − c_j)²`; cocoercive with constant `1/max q`.
    pub fn quadratic_gradient(q: Vec<f64>, c: Vec<f64>) -> Self {
        let m = q.iter().fold(0.0f64, |a, b| a.max(*b));
        let alpha = if m > 0.0 { 1.0 / m } else { f64::INFINITY };
        let map = if m > 0.0 {
            SingleValuedMap::DiagAffine { q, c }
        } else {
            SingleValuedMap::Zero
        };
        CocoerciveOp { map, alpha }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.map.apply(x)
    }

    pub fn is_zero(&self) -> bool {
        self.map.is_zero()
    }
}

/// Monotone and `lip`-Lipschitz single-valued operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzMonotoneOp {
    pub map: SingleValuedMap,
    pub lip: f64,
}

impl LipschitzMonotoneOp {
    pub fn new(map: SingleValuedMap, lip: f64) -> Result<Self> {
        if !(lip >= 0.0 && lip.is_finite()) {
            return Err(Error::param("lip", "Lipschitz constant must be finite and nonnegative"));
        }
        Ok(LipschitzMonotoneOp { map, lip })
    }

    pub fn zero() -> Self {
        LipschitzMonotoneOp {
            map: SingleValuedMap::Zero,
            lip: 0.0,
        }
    }

    /// Planar rotation by `angle` (monotone for `|angle| ≤ π/2`), `scale`-Lipschitz.
    pub fn rotation(angle: f64, scale: f64) -> Self {
        LipschitzMonotoneOp {
            map: SingleValuedMap::Rotation { angle, scale },
            lip: scale.abs(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.map.apply(x)
    }

    pub fn is_zero(&self) -> bool {
        self.map.is_zero()
    }
}

impl Default for MaxMonotoneOp {
    fn default() -> Self {
        MaxMonotoneOp::Zero
    }
}

impl Default for CocoerciveOp {
    fn default() -> Self {
        CocoerciveOp::zero()
    }
}

impl Default for LipschitzMonotoneOp {
    fn default() -> Self {
        LipschitzMonotoneOp::zero()
    }
}

/// `‖J x − J y‖² + ‖(x − Jx) − (y − Jy)‖² − ‖x − y‖²` for `J = J_{γA}`.
pub fn check_firm_nonexpansive(op: &MaxMonotoneOp, gamma: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    let jx = op.resolvent(gamma, x)?;
    let jy = op.resolvent(gamma, y)?;
    let rx = sub(x, &jx);
    let ry = sub(y, &jy);
    Ok(dist_sq(&jx, &jy) + dist_sq(&rx, &ry) - dist_sq(x, y))
}

/// `α‖Cx − Cy‖² − ⟨x − y | Cx − Cy⟩`.
pub fn check_cocoercive(op: &CocoerciveOp, x: &[f64], y: &[f64]) -> f64 {
    let dc = sub(&op.apply(x), &op.apply(y));
    let dx = sub(x, y);
    let n = norm_sq(&dc);
    let penalty = if n == 0.0 { 0.0 } else { op.alpha * n };
    penalty - dot(&dx, &dc)
}

/// `−⟨x − y | Tx − Ty⟩`; nonpositive for monotone `T`.
pub fn check_monotone(op: &LipschitzMonotoneOp, x: &[f64], y: &[f64]) -> f64 {
    let dt = sub(&op.apply(x), &op.apply(y));
    -dot(&sub(x, y), &dt)
}

/// `‖Tx − Ty‖ − lip·‖x − y‖`.
pub fn check_lipschitz(op: &LipschitzMonotoneOp, x: &[f64], y: &[f64]) -> f64 {
    let dt = sub(&op.apply(x), &op.apply(y));
    norm_sq(&dt).sqrt() - op.lip * dist_sq(x, y).sqrt()
}

/// `⟨x−y | (γ⁻¹Id − T)x − (γ⁻¹Id − T)y⟩ − σ‖x−y‖²`, nonnegative whenever
/// `γ ≤ 1/(lip + σ)`.
pub fn strong_monotonicity_margin(
    gamma: f64,
    op: &LipschitzMonotoneOp,
    sigma: f64,
    x: &[f64],
    y: &[f64],
) -> f64 {
    let dx = sub(x, y);
    let dt = sub(&op.apply(x), &op.apply(y));
    let g: Vec<f64> = dx.iter().zip(&dt).map(|(a, b)| a / gamma - b).collect();
    dot(&dx, &g) - sigma * norm_sq(&dx)
}

/// Adjoint identity residual `⟨Lx | v⟩ − ⟨x | L*v⟩`.
pub fn adjoint_residual(l: &LinearMap, x: &[f64], v: &[f64]) -> f64 {
    dot(&l.apply(x), v) - dot(x, &l.adjoint_apply(v))
}

mod serde_extended_f64 {
    //! Encodes `+∞` as the string `"inf"` so JSON round-trips keep it.
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" || s == "+inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}
