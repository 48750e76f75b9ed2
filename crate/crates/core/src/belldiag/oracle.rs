//! Brute-force density-matrix versions of the Bell-diagonal maps.
//!
//! These exist only to cross-check the closed forms in the parent module.
//! Everything is built from explicit gates and projectors on up to four
//! qubits (16×16 matrices), so the two routes share no algebra.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use super::{BellCoeffs, BellError};

type C = Complex<f64>;
type Matrix = DMatrix<C>;

/// Largest off-diagonal Bell-basis element tolerated in an oracle output.
pub const RESIDUE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("result left the Bell-diagonal family (residue {0:e})")]
    NotBellDiagonal(f64),
    #[error(transparent)]
    Bell(#[from] BellError),
}

fn c(re: f64) -> C {
    Complex::new(re, 0.0)
}

fn identity(dim: usize) -> Matrix {
    Matrix::identity(dim, dim)
}

fn pauli_x() -> Matrix {
    Matrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

fn pauli_z() -> Matrix {
    Matrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

/// `X^x Z^z`.
fn pauli(index: usize) -> Matrix {
    let mut m = identity(2);
    if index & 2 == 2 {
        m = pauli_z() * m;
    }
    if index & 1 == 1 {
        m = pauli_x() * m;
    }
    m
}

/// `exp(sign · iπX/4)`.
fn x_quarter_turn(sign: f64) -> Matrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Matrix::from_row_slice(2, 2, &[c(h), Complex::new(0.0, sign * h), Complex::new(0.0, sign * h), c(h)])
}

/// Bell state `X^x Z^z ⊗ I |Φ+⟩` on two qubits, basis index `2a + b`.
fn bell_vector(index: usize) -> DVector<C> {
    let phi_plus =
        DVector::from_vec(vec![c(std::f64::consts::FRAC_1_SQRT_2), c(0.0), c(0.0), c(std::f64::consts::FRAC_1_SQRT_2)]);
    pauli(index).kronecker(&identity(2)) * phi_plus
}

fn pair_density(s: &BellCoeffs) -> Matrix {
    let mut rho = Matrix::zeros(4, 4);
    for (k, &p) in s.coeffs().iter().enumerate() {
        let v = bell_vector(k);
        rho += (&v * v.adjoint()) * c(p);
    }
    rho
}

/// Embeds a single-qubit operator on `qubit` of an `n`-qubit register
/// (qubit 0 is the most significant bit).
fn on_qubit(op: &Matrix, qubit: usize, n: usize) -> Matrix {
    let mut out = identity(1);
    for q in 0..n {
        let factor = if q == qubit { op.clone() } else { identity(2) };
        out = out.kronecker(&factor);
    }
    out
}

fn cnot(control: usize, target: usize, n: usize) -> Matrix {
    let dim = 1 << n;
    let cbit = 1 << (n - 1 - control);
    let tbit = 1 << (n - 1 - target);
    let mut m = Matrix::zeros(dim, dim);
    for col in 0..dim {
        let row = if col & cbit != 0 { col ^ tbit } else { col };
        m[(row, col)] = c(1.0);
    }
    m
}

/// Traces out every qubit not listed in `keep` (which must be ascending).
fn reduce(rho: &Matrix, n: usize, keep: &[usize]) -> Matrix {
    let k = keep.len();
    let dim_keep = 1 << k;
    let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let compose = |kept_bits: usize, traced_bits: usize| -> usize {
        let mut idx = 0;
        for (pos, &q) in keep.iter().enumerate() {
            if kept_bits & (1 << (k - 1 - pos)) != 0 {
                idx |= 1 << (n - 1 - q);
            }
        }
        for (pos, &q) in traced.iter().enumerate() {
            if traced_bits & (1 << (traced.len() - 1 - pos)) != 0 {
                idx |= 1 << (n - 1 - q);
            }
        }
        idx
    };
    let mut out = Matrix::zeros(dim_keep, dim_keep);
    for i in 0..dim_keep {
        for j in 0..dim_keep {
            let mut acc = c(0.0);
            for t in 0..(1 << traced.len()) {
                acc += rho[(compose(i, t), compose(j, t))];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

fn trace(m: &Matrix) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

/// Bell-basis coefficients of a normalized two-qubit density matrix, with the
/// residue check.
fn bell_decompose(sigma: &Matrix) -> Result<BellCoeffs, OracleError> {
    let basis: Vec<DVector<C>> = (0..4).map(bell_vector).collect();
    let mut p = [0.0; 4];
    let mut residue: f64 = 0.0;
    for (i, bi) in basis.iter().enumerate() {
        for (j, bj) in basis.iter().enumerate() {
            let elem = (bi.adjoint() * sigma * bj)[(0, 0)];
            if i == j {
                p[i] = elem.re;
                residue = residue.max(elem.im.abs());
            } else {
                residue = residue.max(elem.norm());
            }
        }
    }
    if residue > RESIDUE_TOLERANCE {
        return Err(OracleError::NotBellDiagonal(residue));
    }
    Ok(BellCoeffs::new(p)?)
}

/// Depolarizes qubit 0 of the pair via the Pauli twirl
/// `(1−p)ρ + p/4 Σ_P (P⊗I) ρ (P⊗I)†`.
pub fn oracle_depolarize_one_side(s: &BellCoeffs, p: f64) -> Result<BellCoeffs, OracleError> {
    let rho = pair_density(s);
    let mut twirl = Matrix::zeros(4, 4);
    for k in 0..4 {
        let op = on_qubit(&pauli(k), 0, 2);
        twirl += &op * &rho * op.adjoint();
    }
    let out = rho * c(1.0 - p) + twirl * c(p / 4.0);
    bell_decompose(&out)
}

/// `e^{−r dt} ρ + (1 − e^{−r dt}) ZρZ` on qubit 0.
pub fn oracle_dephase(s: &BellCoeffs, dt: f64, rate: f64) -> Result<BellCoeffs, OracleError> {
    let rho = pair_density(s);
    let keep = (-rate * dt).exp();
    let z = on_qubit(&pauli_z(), 0, 2);
    let out = &rho * c(keep) + (&z * &rho * &z) * c(1.0 - keep);
    bell_decompose(&out)
}

/// Entanglement swap by explicit Bell measurement.
///
/// Register order is `[A, B1, B2, C]` with `a` on `(A, B1)` and `b` on
/// `(B2, C)`. Each of the four outcomes on `(B1, B2)` is corrected by the
/// Pauli on `A` that maps the noiseless post-measurement state back to `Φ+`;
/// the corrected branches are summed.
pub fn oracle_swap(a: &BellCoeffs, b: &BellCoeffs) -> Result<BellCoeffs, OracleError> {
    let rho = pair_density(a).kronecker(&pair_density(b));
    let ideal = pair_density(&BellCoeffs::PHI_PLUS).kronecker(&pair_density(&BellCoeffs::PHI_PLUS));
    let target = pair_density(&BellCoeffs::PHI_PLUS);
    let mut total = Matrix::zeros(4, 4);
    for m in 0..4 {
        let v = bell_vector(m);
        let projector = identity(2).kronecker(&(&v * v.adjoint())).kronecker(&identity(2));

        let ideal_branch = reduce(&(&projector * &ideal * &projector), 4, &[0, 3]);
        let ideal_branch = &ideal_branch * c(1.0 / trace(&ideal_branch));
        let correction = (0..4)
            .map(|k| on_qubit(&pauli(k), 0, 2))
            .find(|op| (op * &ideal_branch * op.adjoint() - &target).norm() < 1e-12)
            .expect("every Bell outcome is correctable by a Pauli");

        let branch = reduce(&(&projector * &rho * &projector), 4, &[0, 3]);
        total += &correction * branch * correction.adjoint();
    }
    let total = &total * c(1.0 / trace(&total));
    bell_decompose(&total)
}

/// One DEJMPS round by explicit circuit.
///
/// Register order is `[A1, B1, A2, B2]`: kept pair on `(A1, B1)`, ancilla on
/// `(A2, B2)`; `A` is the initiator side. The initiator applies
/// `exp(−iπX/4)` to its qubits and the solicited side `exp(+iπX/4)`; each
/// side then applies CNOT from its kept qubit to its ancilla qubit, and the
/// ancilla qubits are projected onto equal computational outcomes.
pub fn oracle_dejmps(kept: &BellCoeffs, ancilla: &BellCoeffs) -> Result<(f64, Option<BellCoeffs>), OracleError> {
    let n = 4;
    let rho = pair_density(kept).kronecker(&pair_density(ancilla));
    let minus = x_quarter_turn(-1.0);
    let plus = x_quarter_turn(1.0);
    let rotations = on_qubit(&minus, 0, n) * on_qubit(&plus, 1, n) * on_qubit(&minus, 2, n) * on_qubit(&plus, 3, n);
    let circuit = cnot(1, 3, n) * cnot(0, 2, n) * rotations;
    let evolved = &circuit * rho * circuit.adjoint();

    let mut projector = Matrix::zeros(16, 16);
    for idx in 0..16usize {
        let a2 = (idx >> 1) & 1;
        let b2 = idx & 1;
        if a2 == b2 {
            projector[(idx, idx)] = c(1.0);
        }
    }
    let kept_branch = &projector * evolved * &projector;
    let success = trace(&kept_branch);
    if success <= 1e-15 {
        return Ok((0.0, None));
    }
    let sigma = reduce(&kept_branch, n, &[0, 1]) * c(1.0 / success);
    Ok((success, Some(bell_decompose(&sigma)?)))
}
