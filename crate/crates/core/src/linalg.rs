//! Matrix exponentials.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{cx, phase, re, Cx, Real};

/// Spectral decomposition `H = V diag(E) V^dagger` of a Hermitian matrix,
/// reusable for propagators at any time.
#[derive(Clone, Debug)]
pub struct HermitianSpectrum<T: Real> {
    pub eigenvalues: Vec<T>,
    pub eigenvectors: DMatrix<Cx<T>>,
}

impl<T: Real> HermitianSpectrum<T> {
    pub fn new(h: &DMatrix<Cx<T>>, tol: T) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Dimension(format!("{}x{} matrix is not square", h.nrows(), h.ncols())));
        }
        let dev = h.iter().zip(h.adjoint().iter()).fold(T::zero(), |m, (a, b)| m.max((*a - *b).norm_sqr().sqrt()));
        // Relative to the matrix scale: rotating-frame Hamiltonians carry
        // entries of order 1e7 rad/s.
        let scale = h.iter().fold(T::one(), |m, z| m.max(z.norm_sqr().sqrt()));
        if dev > tol * scale {
            return Err(Error::NotHermitian { deviation: dev.as_f64() });
        }
        let sym = (h + h.adjoint()) * re(T::lit(0.5));
        let eig = sym.symmetric_eigen();
        Ok(Self { eigenvalues: eig.eigenvalues.iter().copied().collect(), eigenvectors: eig.eigenvectors })
    }

    /// `exp(-i H t)`
    pub fn propagator(&self, t: T) -> DMatrix<Cx<T>> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &e) in self.eigenvalues.iter().enumerate() {
            let p = phase(-e * t);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= p);
        }
        scaled * v.adjoint()
    }

    /// `max(E) - min(E)`
    pub fn spread(&self) -> T {
        let (lo, hi) = self
            .eigenvalues
            .iter()
            .fold((T::max_value().unwrap(), T::min_value().unwrap()), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        if self.eigenvalues.is_empty() {
            T::zero()
        } else {
            hi - lo
        }
    }
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn expm_hermitian<T: Real>(h: &DMatrix<Cx<T>>, t: T) -> Result<DMatrix<Cx<T>>> {
    Ok(HermitianSpectrum::new(h, T::tolerance())?.propagator(t))
}

fn one_norm<T: Real>(a: &DMatrix<Cx<T>>) -> T {
    a.column_iter().map(|c| c.iter().fold(T::zero(), |s, z| s + z.norm_sqr().sqrt())).fold(T::zero(), |m, s| m.max(s))
}

/// `exp(A)` for a general square matrix by scaling and squaring with a
/// Taylor core. Used for small superoperators, where `A` is not normal.
pub fn expm<T: Real>(a: &DMatrix<Cx<T>>) -> Result<DMatrix<Cx<T>>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    let norm = one_norm(a);
    let mut squarings = 0u32;
    let mut s = T::one();
    let half = T::lit(0.5);
    while norm * s > half {
        s *= half;
        squarings += 1;
    }
    let scaled = a * re(s);
    // ||A s|| <= 1/2: 24 terms leave a remainder below 1e-30.
    let mut result = DMatrix::<Cx<T>>::identity(n, n);
    let mut term = DMatrix::<Cx<T>>::identity(n, n);
    for k in 1..=24u32 {
        term = &term * &scaled * re(T::one() / T::from_u32(k).unwrap());
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// `i * x`
#[inline]
pub fn times_i<T: Real>(z: Cx<T>) -> Cx<T> {
    cx(-z.im, z.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_y() -> DMatrix<Cx<f64>> {
        DMatrix::from_row_slice(2, 2, &[re(0.0), cx(0.0, -1.0), cx(0.0, 1.0), re(0.0)])
    }

    #[test]
    fn propagator_of_pauli_y() {
        let t = 0.37;
        let u = expm_hermitian(&pauli_y(), t).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[re(t.cos()), re(-t.sin()), re(t.sin()), re(t.cos())]);
        assert!((u - expect).camax() < 1e-15);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut h = pauli_y();
        h[(0, 1)] = re(1.0);
        assert!(matches!(expm_hermitian(&h, 1.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn general_expm_matches_spectral_route() {
        let h = DMatrix::from_row_slice(
            3,
            3,
            &[re(1.0), cx(0.5, 0.2), re(0.0), cx(0.5, -0.2), re(-0.3), cx(0.0, 0.7), re(0.0), cx(0.0, -0.7), re(2.0)],
        );
        let t = 5.3;
        let a = &h * cx(0.0, -t);
        let u1 = expm(&a).unwrap();
        let u2 = expm_hermitian(&h, t).unwrap();
        assert!((u1 - u2).camax() < 1e-12);
    }

    #[test]
    fn expm_of_nilpotent_and_damping() {
        let n = DMatrix::from_row_slice(2, 2, &[re(0.0), re(3.0), re(0.0), re(0.0)]);
        let e = expm(&n).unwrap();
        assert!((e[(0, 1)] - re(3.0)).norm() < 1e-14);
        let d = DMatrix::from_row_slice(1, 1, &[re(-40.0)]);
        assert!((expm(&d).unwrap()[(0, 0)].re - (-40.0f64).exp()).abs() < 1e-28);
    }
}
