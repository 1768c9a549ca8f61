//! Laplacians, a cyclic Jacobi eigensolver and the Loewner-order
//! approximation check between two Laplacians.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{build_star, EdgeList};
use crate::scalar::Scalar;

/// Largest asymmetry accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Off-diagonal Frobenius norm at which Jacobi iteration stops.
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense symmetric matrix, row-major; both triangles are stored and kept
/// exactly equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T: Scalar = f64> {
    n: usize,
    a: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    /// Checks symmetry within [`SYMMETRY_TOL`] and copies the upper
    /// triangle onto the lower one.
    pub fn new(n: usize, mut a: Vec<T>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::Invalid(format!("{} entries for a {n}x{n} matrix", a.len())));
        }
        for i in 0..n {
            for j in i + 1..n {
                let diff = (a[i * n + j] - a[j * n + i]).abs().to_f64_lossy();
                if diff.is_nan() || diff > SYMMETRY_TOL {
                    return Err(Error::NotSymmetric { i, j, diff });
                }
                a[j * n + i] = a[i * n + j];
            }
        }
        Ok(SymMatrix { n, a })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("matrix rows are ragged or not square".into()));
        }
        Self::new(n, rows.concat())
    }

    pub fn diagonal(values: &[T]) -> Self {
        let n = values.len();
        let mut a = vec![T::zero(); n * n];
        for (i, &v) in values.iter().enumerate() {
            a[i * n + i] = v;
        }
        SymMatrix { n, a }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.a[i * self.n + j]
    }

    pub fn data(&self) -> &[T] {
        &self.a
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sums(&self) -> Vec<T> {
        self.a.chunks(self.n.max(1)).map(|r| r.iter().copied().sum()).collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        self.a.chunks(self.n.max(1)).map(|r| r.iter().zip(x).map(|(&a, &b)| a * b).sum()).collect()
    }

    pub fn quadratic_form(&self, x: &[T]) -> T {
        self.mul_vec(x).iter().zip(x).map(|(&a, &b)| a * b).sum()
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: T, other: &Self, beta: T) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Invalid(format!("order mismatch: {} vs {}", self.n, other.n)));
        }
        let a = self.a.iter().zip(&other.a).map(|(&x, &y)| alpha * x + beta * y).collect();
        Ok(SymMatrix { n: self.n, a })
    }
}

/// Eigenvalues in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum<T: Scalar = f64> {
    pub eigenvalues: Vec<T>,
}

impl<T: Scalar> Spectrum<T> {
    pub fn min(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> T {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// Largest elementwise gap to `expected` (sorted ascending here).
    pub fn max_abs_error(&self, expected: &[f64]) -> f64 {
        let mut exp = expected.to_vec();
        exp.sort_by(f64::total_cmp);
        if exp.len() != self.eigenvalues.len() {
            return f64::INFINITY;
        }
        self.eigenvalues.iter().zip(&exp).map(|(a, b)| (a.to_f64_lossy() - b).abs()).fold(0.0, f64::max)
    }
}

pub fn laplacian_complete<T: Scalar>(n: usize) -> Result<SymMatrix<T>> {
    if n < 2 {
        return Err(Error::Invalid(format!("complete-graph Laplacian needs n >= 2, got {n}")));
    }
    let deg = T::from_usize_lossy(n - 1);
    let a = (0..n * n).map(|k| if k / n == k % n { deg } else { -T::one() }).collect();
    Ok(SymMatrix { n, a })
}

/// Unweighted Laplacian: degrees on the diagonal, -1 per edge.
pub fn laplacian_from_edges<T: Scalar>(g: &EdgeList) -> SymMatrix<T> {
    let n = g.n();
    let mut a = vec![T::zero(); n * n];
    for (u, v) in g.edges() {
        a[u * n + v] -= T::one();
        a[v * n + u] -= T::one();
        a[u * n + u] += T::one();
        a[v * n + v] += T::one();
    }
    SymMatrix { n, a }
}

pub fn laplacian_star<T: Scalar>(n: usize) -> Result<SymMatrix<T>> {
    Ok(laplacian_from_edges(&build_star(n, 0)?.to_edge_list()))
}

fn off_diagonal_norm<T: Scalar>(a: &[T], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = a[i * n + j].to_f64_lossy();
                s += v * v;
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops
/// below [`JACOBI_TOL`]. Entries too small to change either diagonal
/// element are zeroed outright after the first few sweeps.
pub fn eigenvalues_sym<T: Scalar>(m: &SymMatrix<T>) -> Result<Spectrum<T>> {
    let n = m.n;
    let mut a = m.a.clone();
    let hundred = T::lit(100.0);
    let half = T::lit(0.5);
    let mut residual = off_diagonal_norm(&a, n);
    for sweep in 0..JACOBI_MAX_SWEEPS {
        if residual < JACOBI_TOL {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let g = hundred * apq.abs();
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = T::zero();
                    a[q * n + p] = T::zero();
                    continue;
                }
                if apq == T::zero() {
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = half * h / apq;
                    let t = T::one() / (theta.abs() + (T::one() + theta * theta).sqrt());
                    if theta < T::zero() { -t } else { t }
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                let tau = s / (T::one() + c);
                let shift = t * apq;
                a[p * n + p] = app - shift;
                a[q * n + q] = aqq + shift;
                a[p * n + q] = T::zero();
                a[q * n + p] = T::zero();
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let (arp, arq) = (a[r * n + p], a[r * n + q]);
                    let new_rp = arp - s * (arq + arp * tau);
                    let new_rq = arq + s * (arp - arq * tau);
                    a[r * n + p] = new_rp;
                    a[p * n + r] = new_rp;
                    a[r * n + q] = new_rq;
                    a[q * n + r] = new_rq;
                }
            }
        }
        residual = off_diagonal_norm(&a, n);
    }
    if !(residual < JACOBI_TOL) {
        return Err(Error::NoConvergence { sweeps: JACOBI_MAX_SWEEPS, residual });
    }
    let mut eigenvalues: Vec<T> = (0..n).map(|i| a[i * n + i]).collect();
    eigenvalues.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(Spectrum { eigenvalues })
}

/// Minimum eigenvalues of `sigma L_h - L_g` and `L_g - L_h / sigma`.
pub fn sigma_approx_margins<T: Scalar>(l_g: &SymMatrix<T>, l_h: &SymMatrix<T>, sigma: f64) -> Result<(T, T)> {
    if l_g.n != l_h.n {
        return Err(Error::Invalid(format!("order mismatch: {} vs {}", l_g.n, l_h.n)));
    }
    if !(sigma >= 1.0) {
        return Err(Error::Invalid(format!("sigma must be >= 1, got {sigma}")));
    }
    let s = T::lit(sigma);
    let upper = l_h.combine(s, l_g, -T::one())?;
    let lower = l_g.combine(T::one(), l_h, -T::one() / s)?;
    Ok((eigenvalues_sym(&upper)?.min(), eigenvalues_sym(&lower)?.min()))
}

/// True iff `L_h / sigma <= L_g <= sigma L_h` in the Loewner order, with
/// both minimum eigenvalues allowed to dip to `-tol`.
pub fn check_sigma_approx<T: Scalar>(l_g: &SymMatrix<T>, l_h: &SymMatrix<T>, sigma: f64, tol: f64) -> Result<bool> {
    let (upper, lower) = sigma_approx_margins(l_g, l_h, sigma)?;
    Ok(upper.to_f64_lossy() >= -tol && lower.to_f64_lossy() >= -tol)
}

/// Complete graph versus star at one order.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub n: usize,
    #[serde(rename = "spectrum_K")]
    pub spectrum_k: Vec<f64>,
    #[serde(rename = "spectrum_T")]
    pub spectrum_t: Vec<f64>,
    pub max_err_k: f64,
    pub max_err_t: f64,
    /// The star passes at `sigma = n`.
    pub sigma_pass: bool,
    /// The star fails at `sigma = n - 0.5`.
    pub sigma_tight: bool,
    pub pass: bool,
}

pub fn expected_spectrum_complete(n: usize) -> Vec<f64> {
    std::iter::once(0.0).chain(std::iter::repeat_n(n as f64, n - 1)).collect()
}

pub fn expected_spectrum_star(n: usize) -> Vec<f64> {
    let mut v = vec![0.0];
    v.extend(std::iter::repeat_n(1.0, n - 2));
    v.push(n as f64);
    v
}

pub fn verify_order(n: usize, tol: f64) -> Result<SpectralReport> {
    if n < 3 {
        return Err(Error::Invalid(format!("spectral checks start at n = 3, got {n}")));
    }
    let lk = laplacian_complete::<f64>(n)?;
    let lt = laplacian_star::<f64>(n)?;
    let sk = eigenvalues_sym(&lk)?;
    let st = eigenvalues_sym(&lt)?;
    let max_err_k = sk.max_abs_error(&expected_spectrum_complete(n));
    let max_err_t = st.max_abs_error(&expected_spectrum_star(n));
    let sigma_pass = check_sigma_approx(&lk, &lt, n as f64, tol)?;
    let sigma_tight = !check_sigma_approx(&lk, &lt, n as f64 - 0.5, tol)?;
    let pass = max_err_k <= tol && max_err_t <= tol && sigma_pass && sigma_tight;
    Ok(SpectralReport {
        n,
        spectrum_k: sk.eigenvalues,
        spectrum_t: st.eigenvalues,
        max_err_k,
        max_err_t,
        sigma_pass,
        sigma_tight,
        pass,
    })
}
