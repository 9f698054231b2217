//! Collective-spin and truncated-boson operators.
//!
//! The spin factor lives in the symmetric sector `j = N/2`, basis index
//! `i = m + N/2`. Product states are indexed photon-major:
//! `idx = n (N + 1) + i`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Matrix elements of the collective spin for `j = N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinOps {
    pub n_spins: usize,
    /// `m` for each basis index.
    pub m: Vec<f64>,
    /// `<i+1| J+ |i>`.
    pub plus: Vec<f64>,
}

impl SpinOps {
    pub fn new(n_spins: usize) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::Domain("need at least one spin".into()));
        }
        let j = n_spins as f64 / 2.0;
        let m: Vec<f64> = (0..=n_spins).map(|i| i as f64 - j).collect();
        let plus = m[..n_spins]
            .iter()
            .map(|&m| (j * (j + 1.0) - m * (m + 1.0)).sqrt())
            .collect();
        Ok(SpinOps { n_spins, m, plus })
    }

    pub fn dim(&self) -> usize {
        self.n_spins + 1
    }

    /// `<i+1| J_x |i>` (real symmetric).
    pub fn jx_off(&self, i: usize) -> f64 {
        0.5 * self.plus[i]
    }

    pub fn jx(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for i in 0..d - 1 {
            out[(i + 1, i)] = self.jx_off(i);
            out[(i, i + 1)] = self.jx_off(i);
        }
        out
    }

    pub fn jz(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.m))
    }
}

/// Dense operators for a spin system and a cavity truncated at `n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet {
    pub n_spins: usize,
    pub n_max: usize,
    pub jx: DMatrix<Complex64>,
    pub jy: DMatrix<Complex64>,
    pub jz: DMatrix<Complex64>,
    pub a: DMatrix<Complex64>,
    pub adag: DMatrix<Complex64>,
    pub num: DMatrix<Complex64>,
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

impl OperatorSet {
    pub fn new(n_spins: usize, n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::Domain("n_max must be at least 1".into()));
        }
        let spin = SpinOps::new(n_spins)?;
        let d = spin.dim();
        let mut jp = DMatrix::<Complex64>::zeros(d, d);
        for i in 0..d - 1 {
            jp[(i + 1, i)] = Complex64::new(spin.plus[i], 0.0);
        }
        let jm = jp.adjoint();
        let jy = (&jp - &jm) * (-0.5 * I);
        let f = n_max + 1;
        let mut a = DMatrix::<Complex64>::zeros(f, f);
        for n in 1..f {
            a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
        }
        let adag = a.adjoint();
        let num = &adag * &a;
        Ok(OperatorSet {
            n_spins,
            n_max,
            jx: complexify(&spin.jx()),
            jy,
            jz: complexify(&spin.jz()),
            a,
            adag,
            num,
        })
    }

    pub fn spin_dim(&self) -> usize {
        self.n_spins + 1
    }

    pub fn fock_dim(&self) -> usize {
        self.n_max + 1
    }

    /// Spin operator lifted to the product space.
    pub fn on_product_spin(&self, op: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        kron(&DMatrix::identity(self.fock_dim(), self.fock_dim()), op)
    }

    /// Cavity operator lifted to the product space.
    pub fn on_product_fock(&self, op: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        kron(op, &DMatrix::identity(self.spin_dim(), self.spin_dim()))
    }
}

/// Compressed sparse rows with real entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Csr {
    pub dim: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let dim = m.nrows();
        let mut out = Csr {
            dim,
            indptr: vec![0],
            ..Default::default()
        };
        for r in 0..dim {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v != 0.0 {
                    out.indices.push(c);
                    out.values.push(v);
                }
            }
            out.indptr.push(out.indices.len());
        }
        out
    }

    #[inline]
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `H(g) = diag + g V` with real entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitHamiltonian {
    pub diag: Vec<f64>,
    pub coupling: Csr,
}

impl SplitHamiltonian {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn dense(&self, g: f64) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for r in 0..d {
            h[(r, r)] += self.diag[r];
            for (c, v) in self.coupling.row(r) {
                h[(r, c)] += g * v;
            }
        }
        h
    }

    /// Row-sum bound on the spectral radius of `H(g)`.
    pub fn norm_bound(&self, g: f64) -> f64 {
        let d = self.diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        d + g.abs() * self.coupling.norm_inf()
    }

    /// `out = -i H(g) psi`.
    pub fn apply_schrodinger(&self, g: f64, psi: &[Complex64], out: &mut [Complex64]) {
        for r in 0..self.dim() {
            let mut acc = psi[r] * self.diag[r];
            for (c, v) in self.coupling.row(r) {
                acc += psi[c] * (g * v);
            }
            out[r] = Complex64::new(acc.im, -acc.re);
        }
    }
}

/// LMG Hamiltonian `ω0 J_z - (ω0 r²/N) J_x²` split as `diag + r² V`.
pub fn lmg_hamiltonian(spin: &SpinOps, omega0: f64) -> SplitHamiltonian {
    let jx = spin.jx();
    let v = (&jx * &jx) * (-omega0 / spin.n_spins as f64);
    SplitHamiltonian {
        diag: spin.m.iter().map(|m| omega0 * m).collect(),
        coupling: Csr::from_dense(&v),
    }
}

/// Closed Dicke Hamiltonian `ωp a†a + ω0 J_z + (2λ/sqrt(N))(a + a†) J_x`
/// split as `diag + λ V`.
pub fn dicke_hamiltonian(spin: &SpinOps, n_max: usize, omega0: f64, omega_p: f64) -> SplitHamiltonian {
    let s = spin.dim();
    let d = (n_max + 1) * s;
    let scale = 2.0 / (spin.n_spins as f64).sqrt();
    let mut diag = Vec::with_capacity(d);
    for n in 0..=n_max {
        for i in 0..s {
            diag.push(omega_p * n as f64 + omega0 * spin.m[i]);
        }
    }
    let mut csr = Csr {
        dim: d,
        indptr: vec![0],
        ..Default::default()
    };
    for n in 0..=n_max {
        for i in 0..s {
            // (a + a†) moves n by ±1, J_x moves i by ±1
            let mut entries = Vec::with_capacity(4);
            for (n2, amp) in [(n.wrapping_sub(1), (n as f64).sqrt()), (n + 1, ((n + 1) as f64).sqrt())] {
                if n2 > n_max {
                    continue;
                }
                if i > 0 {
                    entries.push((n2 * s + i - 1, scale * amp * spin.jx_off(i - 1)));
                }
                if i + 1 < s {
                    entries.push((n2 * s + i + 1, scale * amp * spin.jx_off(i)));
                }
            }
            entries.sort_by_key(|e| e.0);
            for (c, v) in entries {
                csr.indices.push(c);
                csr.values.push(v);
            }
            csr.indptr.push(csr.indices.len());
        }
    }
    SplitHamiltonian { diag, coupling: csr }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spin_half_jz() {
        let ops = OperatorSet::new(1, 2).unwrap();
        assert_eq!(ops.jz[(0, 0)].re, -0.5);
        assert_eq!(ops.jz[(1, 1)].re, 0.5);
        for n in 0..3 {
            assert!((ops.num[(n, n)].re - n as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn su2_commutators() {
        for n in [1, 2, 5, 8, 16, 33] {
            let o = OperatorSet::new(n, 1).unwrap();
            let c = &o.jx * &o.jy - &o.jy * &o.jx - &o.jz * I;
            let worst = c.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            assert!(worst < 1e-12, "N={n}: {worst}");
            let c2 = &o.jy * &o.jz - &o.jz * &o.jy - &o.jx * I;
            assert!(c2.iter().all(|v| v.norm() < 1e-12));
            // Casimir j(j+1)
            let j = n as f64 / 2.0;
            let cas = &o.jx * &o.jx + &o.jy * &o.jy + &o.jz * &o.jz;
            for i in 0..=n {
                assert!((cas[(i, i)].re - j * (j + 1.0)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn split_hamiltonians_match_dense_construction() {
        let spin = SpinOps::new(3).unwrap();
        let o = OperatorSet::new(3, 4).unwrap();
        let lam = 0.37;
        let dense = o.on_product_fock(&o.num) * Complex64::new(1.3, 0.0)
            + o.on_product_spin(&o.jz) * Complex64::new(0.9, 0.0)
            + o.on_product_fock(&(&o.a + &o.adag)) * o.on_product_spin(&o.jx) * Complex64::new(2.0 * lam / 3f64.sqrt(), 0.0);
        let split = dicke_hamiltonian(&spin, 4, 0.9, 1.3).dense(lam);
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                assert!((dense[(r, c)].re - split[(r, c)]).abs() < 1e-14);
                assert!(dense[(r, c)].im.abs() < 1e-14);
            }
        }
        let lmg = lmg_hamiltonian(&spin, 0.9).dense(1.21);
        let want = &o.jz * Complex64::new(0.9, 0.0) - &o.jx * &o.jx * Complex64::new(0.9 * 1.21 / 3.0, 0.0);
        for r in 0..4 {
            for c in 0..4 {
                assert!((want[(r, c)].re - lmg[(r, c)]).abs() < 1e-14);
            }
        }
    }
}
