//! Dense complex linear algebra for small Hermitian generators.
//!
//! Everything here works on `N × N` complex matrices with `N` in the single
//! or low double digits. The propagator of a constant Hamiltonian over one
//! interval is built from a Hermitian eigendecomposition, and the same
//! decomposition feeds the Daleckii–Krein formula for the exact derivative
//! of the exponential map.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Default hermiticity tolerance accepted by the checked entry points.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalue gaps below this use the confluent branch of the divided difference.
const CONFLUENT_GAP: f64 = 1e-12;

const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn frobenius_norm(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ‖M − M†‖_F
pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    if n != m.ncols() {
        return f64::INFINITY;
    }
    let mut acc = 0.0;
    for j in 0..n {
        for k in 0..n {
            acc += (m[(j, k)] - m[(k, j)].conj()).norm_sqr();
        }
    }
    acc.sqrt()
}

/// ‖M†M − I‖_F
pub fn unitarity_defect(m: &ComplexMatrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let prod = m.adjoint() * m;
    frobenius_norm(&(prod - ComplexMatrix::identity(m.nrows(), m.ncols())))
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    hermiticity_defect(m) <= tol
}

pub fn is_unitary(m: &ComplexMatrix, tol: f64) -> bool {
    unitarity_defect(m) <= tol
}

/// Fails unless `m` is square and Hermitian to `tol` (scaled by `max(1, ‖m‖_F)`).
pub fn ensure_hermitian(m: &ComplexMatrix, tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let tolerance = tol * frobenius_norm(m).max(1.0);
    let deviation = hermiticity_defect(m);
    if deviation > tolerance {
        return Err(Error::NotHermitian {
            deviation,
            tolerance,
        });
    }
    Ok(())
}

/// Eigenvalues in ascending order with the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// V diag(λ) V†
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply_diagonal(|lambda| Complex64::new(lambda, 0.0))
    }

    /// V diag(f(λ)) V†
    pub fn apply_diagonal(&self, f: impl Fn(f64) -> Complex64) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let fk = f(lambda);
            scaled.column_mut(k).iter_mut().for_each(|z| *z *= fk);
        }
        scaled * v.adjoint()
    }

    /// exp(−i H dt)
    pub fn unitary(&self, dt: f64) -> ComplexMatrix {
        self.apply_diagonal(|lambda| (-I * lambda * dt).exp())
    }

    /// Daleckii–Krein divided differences Γ_jk of f(λ) = e^{−iλ dt}.
    pub fn exp_divided_differences(&self, dt: f64) -> ComplexMatrix {
        let n = self.dim();
        let lam = &self.eigenvalues;
        ComplexMatrix::from_fn(n, n, |j, k| {
            let gap = lam[j] - lam[k];
            if gap.abs() < CONFLUENT_GAP {
                -I * dt * (-I * lam[j] * dt).exp()
            } else {
                // e^{-iadt} - e^{-ibdt} = e^{-i(a+b)dt/2} (-2i sin((a-b)dt/2))
                let mid = (-I * 0.5 * (lam[j] + lam[k]) * dt).exp();
                mid * (-2.0 * I) * (0.5 * gap * dt).sin() / gap
            }
        })
    }

    /// d/dε exp(−i (H + ε D) dt) at ε = 0, given this decomposition of H.
    pub fn exp_derivative(&self, direction: &ComplexMatrix, dt: f64) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let rotated = v.adjoint() * direction * v;
        let gamma = self.exp_divided_differences(dt);
        let weighted = rotated.component_mul(&gamma);
        v * weighted * v.adjoint()
    }
}

/// Eigendecomposition without the hermiticity check; the lower triangle is trusted.
pub(crate) fn hermitian_eig_unchecked(h: &ComplexMatrix) -> EigenDecomposition {
    let SymmetricEigen {
        eigenvectors,
        eigenvalues,
    } = SymmetricEigen::new(h.clone());
    let n = eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
    let sorted_values = order.iter().map(|&k| eigenvalues[k]).collect();
    let sorted_vectors = ComplexMatrix::from_fn(n, n, |r, c| eigenvectors[(r, order[c])]);
    EigenDecomposition {
        eigenvalues: sorted_values,
        eigenvectors: sorted_vectors,
    }
}

pub fn hermitian_eig(h: &ComplexMatrix) -> Result<EigenDecomposition> {
    ensure_hermitian(h, HERMITIAN_TOL)?;
    Ok(hermitian_eig_unchecked(h))
}

/// exp(−i H dt) with ħ = 1.
pub fn expm_unitary(h: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    Ok(hermitian_eig(h)?.unitary(dt))
}

/// dU/dε at ε = 0 for U(ε) = exp(−i (H + ε·direction) dt).
pub fn expm_directional_derivative(
    h: &ComplexMatrix,
    direction: &ComplexMatrix,
    dt: f64,
) -> Result<ComplexMatrix> {
    ensure_hermitian(direction, HERMITIAN_TOL)?;
    if direction.shape() != h.shape() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            found: direction.nrows(),
        });
    }
    Ok(hermitian_eig(h)?.exp_derivative(direction, dt))
}

/// Nearest unitary in Frobenius norm: M (M†M)^{−1/2}.
pub fn polar_unitary(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let gram = m.adjoint() * m;
    let eig = hermitian_eig(&gram)?;
    if eig.eigenvalues[0] <= 0.0 {
        return Err(Error::InvalidParameter(
            "matrix is singular; polar factor undefined".into(),
        ));
    }
    let inv_sqrt = eig.apply_diagonal(|lambda| Complex64::new(lambda.powf(-0.5), 0.0));
    Ok(m * inv_sqrt)
}

/// Hermitian matrix from real diagonal entries.
pub fn real_diagonal(values: &[f64]) -> ComplexMatrix {
    let n = values.len();
    ComplexMatrix::from_fn(n, n, |j, k| {
        if j == k {
            Complex64::new(values[j], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Fixed-size real square matrix, row-major.
pub(crate) type RealMat<const N: usize> = [[f64; N]; N];

/// Cyclic Jacobi diagonalization of a real symmetric matrix, warm-started.
///
/// `a` holds `Vᵀ H V` for the incoming `v`; on return it is diagonal up to
/// elements of relative size 1e-15 and the columns of `v` are the
/// eigenvectors of `H`. Starting from the eigenvectors of a nearby matrix
/// typically needs one or two sweeps.
pub(crate) fn jacobi_rotate<const N: usize>(a: &mut RealMat<N>, v: &mut RealMat<N>) {
    const MAX_SWEEPS: usize = 50;
    let total: f64 = a.iter().flatten().map(|x| x * x).sum();
    let negligible = 1e-30 * total / (N * N) as f64;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[p][q];
                if apq * apq <= negligible {
                    continue;
                }
                rotated = true;
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
                let (rp, rq) = (a[p], a[q]);
                for k in 0..N {
                    a[p][k] = c * rp[k] - s * rq[k];
                    a[q][k] = s * rp[k] + c * rq[k];
                }
                for row in v.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
            }
        }
        if !rotated {
            return;
        }
    }
}

/// Vᵀ H V
pub(crate) fn congruence<const N: usize>(h: &RealMat<N>, v: &RealMat<N>) -> RealMat<N> {
    let mut hv = [[0.0; N]; N];
    for i in 0..N {
        for k in 0..N {
            let hik = h[i][k];
            for j in 0..N {
                hv[i][j] += hik * v[k][j];
            }
        }
    }
    let mut out = [[0.0; N]; N];
    for k in 0..N {
        for i in 0..N {
            let vki = v[k][i];
            for j in 0..N {
                out[i][j] += vki * hv[k][j];
            }
        }
    }
    out
}
