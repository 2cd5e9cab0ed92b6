//! State/costate evaluation for systems whose H₀ and μ are real symmetric.
//!
//! Instead of carrying N × N propagators, the forward pass propagates the
//! columns the objective actually reads, and the backward pass carries the
//! matching costates. Each interval Hamiltonian is diagonalized by Jacobi
//! rotations warm-started from the previous interval's eigenbasis.

use num_complex::Complex64;

use super::GradientMode;
use crate::numerics::{congruence, hermitian_eig, jacobi_rotate, RealMat};
use crate::system::{ObjectiveKind, ObjectiveSpec, QuantumSystem};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Below this |λ_j − λ_k| Δt the divided difference uses the sine form.
const DIRECT_QUOTIENT_MIN: f64 = 1e-3;
const CONFLUENT_GAP: f64 = 1e-12;

pub(crate) struct RealSystem {
    n: usize,
    h0: Vec<f64>,
    mu: Vec<f64>,
}

impl RealSystem {
    pub(crate) fn from_system(system: &QuantumSystem) -> Option<Self> {
        let n = system.dim();
        if n > MAX_DIM {
            return None;
        }
        let real = |m: &crate::numerics::ComplexMatrix| -> Option<Vec<f64>> {
            let mut out = vec![0.0; n * n];
            for j in 0..n {
                for k in 0..n {
                    let z = m[(j, k)];
                    if z.im != 0.0 {
                        return None;
                    }
                    out[j * n + k] = z.re;
                }
            }
            Some(out)
        };
        Some(Self {
            n,
            h0: real(system.h0())?,
            mu: real(system.dipole())?,
        })
    }
}

/// How the objective reads the propagated columns.
enum Readout {
    Transition { target: Vec<Complex64> },
    /// Weights p_r of the ρ₀ eigenvectors and θ row-major.
    Observable { weights: Vec<f64>, theta: Vec<Complex64> },
    /// Columns W e_k.
    Evolution { columns: Vec<Vec<Complex64>> },
}

struct Plan {
    initial: Vec<Vec<Complex64>>,
    readout: Readout,
}

fn to_vec(v: &nalgebra::DVector<Complex64>) -> Vec<Complex64> {
    v.iter().copied().collect()
}

fn basis(n: usize, k: usize) -> Vec<Complex64> {
    let mut v = vec![ZERO; n];
    v[k] = Complex64::new(1.0, 0.0);
    v
}

fn plan(objective: &ObjectiveSpec) -> Plan {
    let n = objective.dim();
    match &objective.kind {
        ObjectiveKind::StateTransition { initial, target } => Plan {
            initial: vec![to_vec(initial)],
            readout: Readout::Transition {
                target: to_vec(target),
            },
        },
        ObjectiveKind::Observable { rho0, theta } => {
            let diagonal = (0..n).all(|j| (0..n).all(|k| j == k || rho0[(j, k)] == ZERO));
            let (weights, initial): (Vec<f64>, Vec<Vec<Complex64>>) = if diagonal {
                (0..n)
                    .filter(|&k| rho0[(k, k)].re != 0.0)
                    .map(|k| (rho0[(k, k)].re, basis(n, k)))
                    .unzip()
            } else {
                let eig = hermitian_eig(rho0).expect("density matrix validated as Hermitian");
                (0..n)
                    .filter(|&k| eig.eigenvalues[k].abs() > 1e-15)
                    .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect()))
                    .unzip()
            };
            let theta = (0..n * n).map(|i| theta[(i / n, i % n)]).collect();
            Plan {
                initial,
                readout: Readout::Observable { weights, theta },
            }
        }
        ObjectiveKind::EvolutionOperator { target } => Plan {
            initial: (0..n).map(|k| basis(n, k)).collect(),
            readout: Readout::Evolution {
                columns: (0..n).map(|k| target.column(k).iter().copied().collect()).collect(),
            },
        },
    }
}

fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Bare objective and the costate seeds b_r with C = Σ_r |a_r⟩⟨b_r|.
fn read_out(readout: &Readout, finals: &[Vec<Complex64>], n: usize) -> (f64, Vec<Vec<Complex64>>) {
    match readout {
        Readout::Transition { target } => {
            let amp = dotc(target, &finals[0]);
            let seed = target.iter().map(|f| f * amp * 2.0).collect();
            (amp.norm_sqr(), vec![seed])
        }
        Readout::Observable { weights, theta } => {
            let mut value = 0.0;
            let seeds = finals
                .iter()
                .zip(weights)
                .map(|(psi, &p)| {
                    let theta_psi: Vec<Complex64> = (0..n)
                        .map(|j| (0..n).map(|k| theta[j * n + k] * psi[k]).sum())
                        .collect();
                    value += p * dotc(psi, &theta_psi).re;
                    theta_psi.into_iter().map(|z| z * (2.0 * p)).collect()
                })
                .collect();
            (value, seeds)
        }
        Readout::Evolution { columns } => {
            let scale = 1.0 / (2.0 * n as f64);
            let overlap: f64 = columns.iter().zip(finals).map(|(w, psi)| dotc(w, psi).re).sum();
            let seeds = columns
                .iter()
                .map(|w| w.iter().map(|z| z * -scale).collect())
                .collect();
            (0.5 - overlap * scale, seeds)
        }
    }
}

fn fixed<const N: usize>(flat: &[f64]) -> RealMat<N> {
    std::array::from_fn(|i| std::array::from_fn(|j| flat[i * N + j]))
}

fn fixed_vec<const N: usize>(v: &[Complex64]) -> [Complex64; N] {
    std::array::from_fn(|i| v[i])
}

/// V x
fn apply<const N: usize>(v: &RealMat<N>, x: &[Complex64; N]) -> [Complex64; N] {
    std::array::from_fn(|i| {
        let mut acc = ZERO;
        for k in 0..N {
            acc += x[k] * v[i][k];
        }
        acc
    })
}

/// Vᵀ x
fn apply_transpose<const N: usize>(v: &RealMat<N>, x: &[Complex64; N]) -> [Complex64; N] {
    let mut out = [ZERO; N];
    for k in 0..N {
        for i in 0..N {
            out[i] += x[k] * v[k][i];
        }
    }
    out
}

/// Largest dimension handled here; bigger systems use dense propagators.
pub(crate) const MAX_DIM: usize = 8;

/// Bare objective value and ∂J/∂ε_l (without any fluence penalty).
pub(crate) fn value_and_gradient(
    sys: &RealSystem,
    samples: &[f64],
    dt: f64,
    objective: &ObjectiveSpec,
    mode: GradientMode,
) -> (f64, Vec<f64>) {
    let plan = plan(objective);
    match sys.n {
        2 => run::<2>(sys, samples, dt, &plan, mode),
        3 => run::<3>(sys, samples, dt, &plan, mode),
        4 => run::<4>(sys, samples, dt, &plan, mode),
        5 => run::<5>(sys, samples, dt, &plan, mode),
        6 => run::<6>(sys, samples, dt, &plan, mode),
        7 => run::<7>(sys, samples, dt, &plan, mode),
        8 => run::<8>(sys, samples, dt, &plan, mode),
        n => unreachable!("RealSystem admits 2 ≤ N ≤ {MAX_DIM}, got {n}"),
    }
}

fn run<const N: usize>(
    sys: &RealSystem,
    samples: &[f64],
    dt: f64,
    plan: &Plan,
    mode: GradientMode,
) -> (f64, Vec<f64>) {
    let h0 = fixed::<N>(&sys.h0);
    let mu = fixed::<N>(&sys.mu);
    let steps = samples.len();
    let ranks = plan.initial.len();

    // per interval: eigenvectors, eigenvalues, Vᵀ μ V, and u_r = Vᵀ ψ_{r,l−1}
    let mut vecs: Vec<RealMat<N>> = Vec::with_capacity(steps);
    let mut vals: Vec<[f64; N]> = Vec::with_capacity(steps);
    let mut dip: Vec<RealMat<N>> = Vec::with_capacity(steps);
    let mut rotated: Vec<[Complex64; N]> = Vec::with_capacity(steps * ranks);

    let mut v: RealMat<N> = std::array::from_fn(|i| std::array::from_fn(|j| f64::from(u8::from(i == j))));
    let mut states: Vec<[Complex64; N]> = plan.initial.iter().map(|x| fixed_vec(x)).collect();
    for &eps in samples {
        let mut h = h0;
        for (row, mu_row) in h.iter_mut().zip(&mu) {
            for (x, m) in row.iter_mut().zip(mu_row) {
                *x -= eps * m;
            }
        }
        let mut a = congruence(&h, &v);
        jacobi_rotate(&mut a, &mut v);
        let lam: [f64; N] = std::array::from_fn(|j| a[j][j]);
        let d: [Complex64; N] = std::array::from_fn(|j| Complex64::cis(-lam[j] * dt));
        for psi in states.iter_mut() {
            let u = apply_transpose(&v, psi);
            rotated.push(u);
            *psi = apply(&v, &std::array::from_fn(|j| u[j] * d[j]));
        }
        vecs.push(v);
        vals.push(lam);
        dip.push(congruence(&mu, &v));
    }

    let finals: Vec<Vec<Complex64>> = states.iter().map(|s| s.to_vec()).collect();
    let (value, seeds) = read_out(&plan.readout, &finals, N);
    let mut costates: Vec<[Complex64; N]> = seeds.iter().map(|x| fixed_vec(x)).collect();

    let mut grad = vec![0.0; steps];
    let mut gamma = [[ZERO; N]; N];
    for l in (0..steps).rev() {
        let (v, lam, k) = (&vecs[l], &vals[l], &dip[l]);
        let d: [Complex64; N] = std::array::from_fn(|j| Complex64::cis(-lam[j] * dt));
        if mode == GradientMode::Exact {
            for j in 0..N {
                for m in 0..N {
                    let gap = lam[j] - lam[m];
                    gamma[j][m] = if gap.abs() < CONFLUENT_GAP {
                        -I * dt * d[j]
                    } else if (gap * dt).abs() > DIRECT_QUOTIENT_MIN {
                        (d[j] - d[m]) / gap
                    } else {
                        Complex64::cis(-0.5 * (lam[j] + lam[m]) * dt) * (-2.0 * I) * (0.5 * gap * dt).sin() / gap
                    };
                }
            }
        }
        let mut acc = 0.0;
        for (r, phi) in costates.iter_mut().enumerate() {
            let u = &rotated[l * ranks + r];
            let w = apply_transpose(v, phi);
            match mode {
                GradientMode::Exact => {
                    // Re Σ w̄_j Γ_jm (−K_jm) u_m
                    for j in 0..N {
                        let mut row = ZERO;
                        for m in 0..N {
                            row += gamma[j][m] * (u[m] * k[j][m]);
                        }
                        acc -= (w[j].conj() * row).re;
                    }
                }
                GradientMode::Approximate => {
                    // −Im Σ w̄_j K_jm d_m u_m · Δt
                    for j in 0..N {
                        let mut row = ZERO;
                        for m in 0..N {
                            row += (d[m] * u[m]) * k[j][m];
                        }
                        acc -= (w[j].conj() * row).im * dt;
                    }
                }
            }
            *phi = apply(v, &std::array::from_fn(|j| w[j] * d[j].conj()));
        }
        grad[l] = acc;
    }
    (value, grad)
}
