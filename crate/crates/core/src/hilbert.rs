//! Dense states and operators on a tensor-product Hilbert space.
//!
//! Basis indices are row-major over the subsystem list: the first subsystem
//! is the most significant digit. The gate simulator always orders the
//! subsystems as cavity, target atoms 2..=n+1 ascending, then (optionally)
//! the control atom.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{re, Cx, Real};

/// Ordered subsystem dimensions of a composite space.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    dims: Vec<usize>,
    total: usize,
}

impl SpaceLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Layout("layout needs at least one subsystem".into()));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::Layout(format!("subsystem dimension {d} < 2")));
        }
        let total = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Layout("total dimension overflows".into()))?;
        Ok(Self { dims, total })
    }

    /// `n` qubits.
    pub fn qubits(n: usize) -> Result<Self> {
        Self::new(vec![2; n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn num_subsystems(&self) -> usize {
        self.dims.len()
    }

    /// Index stride of each subsystem (row-major).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for s in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[s] = strides[s + 1] * self.dims[s + 1];
        }
        strides
    }

    /// Basis index of a digit string.
    pub fn index(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.dims.len() {
            return Err(Error::Dimension(format!("{} digits for {} subsystems", digits.len(), self.dims.len())));
        }
        let mut idx = 0;
        for (&d, &dim) in digits.iter().zip(&self.dims) {
            if d >= dim {
                return Err(Error::Dimension(format!("level {d} out of range for dimension {dim}")));
            }
            idx = idx * dim + d;
        }
        Ok(idx)
    }

    /// Digit string of a basis index.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for s in (0..self.dims.len()).rev() {
            out[s] = index % self.dims[s];
            index /= self.dims[s];
        }
        out
    }

    /// Level of one subsystem within a basis index.
    #[inline]
    pub fn digit(&self, index: usize, subsystem: usize) -> usize {
        let stride: usize = self.dims[subsystem + 1..].iter().product();
        (index / stride) % self.dims[subsystem]
    }

    fn check_subsystem(&self, subsystem: usize) -> Result<()> {
        if subsystem >= self.dims.len() {
            return Err(Error::Layout(format!("subsystem {subsystem} out of range ({} subsystems)", self.dims.len())));
        }
        Ok(())
    }
}

/// Dense operator on a composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator<T: Real> {
    matrix: DMatrix<Cx<T>>,
    layout: SpaceLayout,
}

impl<T: Real> Operator<T> {
    pub fn from_matrix(layout: SpaceLayout, matrix: DMatrix<Cx<T>>) -> Result<Self> {
        let d = layout.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Dimension(format!(
                "{}x{} matrix on a space of dimension {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix, layout })
    }

    pub fn zeros(layout: &SpaceLayout) -> Self {
        let d = layout.total_dim();
        Self { matrix: DMatrix::zeros(d, d), layout: layout.clone() }
    }

    pub fn identity(layout: &SpaceLayout) -> Self {
        let d = layout.total_dim();
        Self { matrix: DMatrix::identity(d, d), layout: layout.clone() }
    }

    /// Diagonal operator from real entries.
    pub fn diagonal(layout: &SpaceLayout, diag: &[T]) -> Result<Self> {
        if diag.len() != layout.total_dim() {
            return Err(Error::Dimension(format!(
                "{} diagonal entries for dimension {}",
                diag.len(),
                layout.total_dim()
            )));
        }
        let d = diag.len();
        let matrix = DMatrix::from_fn(d, d, |i, j| if i == j { re(diag[i]) } else { Cx::new(T::zero(), T::zero()) });
        Ok(Self { matrix, layout: layout.clone() })
    }

    pub fn matrix(&self) -> &DMatrix<Cx<T>> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Cx<T>> {
        self.matrix
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), layout: self.layout.clone() }
    }

    /// Largest entry of `|A - A^dagger|`.
    pub fn hermiticity_error(&self) -> T {
        max_abs_diff(&self.matrix, &self.matrix.adjoint())
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn ensure_hermitian(&self, tol: T) -> Result<()> {
        let dev = self.hermiticity_error();
        if dev > tol {
            return Err(Error::NotHermitian { deviation: dev.as_f64() });
        }
        Ok(())
    }

    /// Largest entry of `|U^dagger U - I|`.
    pub fn unitarity_error(&self) -> T {
        let d = self.dim();
        max_abs_diff(&(self.matrix.adjoint() * &self.matrix), &DMatrix::identity(d, d))
    }

    pub fn max_abs(&self) -> T {
        self.matrix.iter().fold(T::zero(), |m, z| m.max(z.norm_sqr().sqrt()))
    }

    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        self.check_same_layout(&rhs.layout)?;
        Ok(Self { matrix: &self.matrix * &rhs.matrix, layout: self.layout.clone() })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.check_same_layout(&rhs.layout)?;
        Ok(Self { matrix: &self.matrix + &rhs.matrix, layout: self.layout.clone() })
    }

    pub fn scale(&self, s: Cx<T>) -> Self {
        Self { matrix: &self.matrix * s, layout: self.layout.clone() }
    }

    pub fn commutator(&self, rhs: &Self) -> Result<Self> {
        self.check_same_layout(&rhs.layout)?;
        Ok(Self { matrix: &self.matrix * &rhs.matrix - &rhs.matrix * &self.matrix, layout: self.layout.clone() })
    }

    pub fn apply(&self, psi: &StateVector<T>) -> Result<StateVector<T>> {
        self.check_same_layout(&psi.layout)?;
        Ok(StateVector { amplitudes: &self.matrix * &psi.amplitudes, layout: self.layout.clone() })
    }

    /// `A rho A^dagger`
    pub fn conjugate(&self, rho: &DensityMatrix<T>) -> Result<DensityMatrix<T>> {
        self.check_same_layout(&rho.layout)?;
        let m = &self.matrix * &rho.matrix * self.matrix.adjoint();
        Ok(DensityMatrix { matrix: m, layout: self.layout.clone() })
    }

    fn check_same_layout(&self, other: &SpaceLayout) -> Result<()> {
        if &self.layout != other {
            return Err(Error::Layout(format!("{:?} vs {:?}", self.layout.dims(), other.dims())));
        }
        Ok(())
    }
}

impl<T: Real> std::ops::Add for Operator<T> {
    type Output = Operator<T>;

    /// Panics on layout mismatch; use [`Operator::add`] for a fallible sum.
    fn add(self, rhs: Self) -> Self {
        assert_eq!(self.layout, rhs.layout, "layout mismatch");
        Operator { matrix: self.matrix + rhs.matrix, layout: self.layout }
    }
}

/// Pure state on a composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T: Real> {
    amplitudes: DVector<Cx<T>>,
    layout: SpaceLayout,
}

impl<T: Real> StateVector<T> {
    pub fn new(layout: SpaceLayout, amplitudes: DVector<Cx<T>>) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for dimension {}",
                amplitudes.len(),
                layout.total_dim()
            )));
        }
        Ok(Self { amplitudes, layout })
    }

    /// Computational basis state with the given level per subsystem.
    pub fn basis(layout: &SpaceLayout, digits: &[usize]) -> Result<Self> {
        let idx = layout.index(digits)?;
        let mut amplitudes = DVector::zeros(layout.total_dim());
        amplitudes[idx] = re(T::one());
        Ok(Self { amplitudes, layout: layout.clone() })
    }

    /// Tensor product of one local state per subsystem.
    pub fn product(layout: &SpaceLayout, factors: &[DVector<Cx<T>>]) -> Result<Self> {
        if factors.len() != layout.num_subsystems() {
            return Err(Error::Dimension(format!(
                "{} factors for {} subsystems",
                factors.len(),
                layout.num_subsystems()
            )));
        }
        for (f, &d) in factors.iter().zip(layout.dims()) {
            if f.len() != d {
                return Err(Error::Dimension(format!("factor of length {} for dimension {d}", f.len())));
            }
        }
        let mut amps = vec![re(T::one())];
        for f in factors {
            amps = amps.iter().flat_map(|&a| f.iter().map(move |&b| a * b)).collect();
        }
        Ok(Self { amplitudes: DVector::from_vec(amps), layout: layout.clone() })
    }

    pub fn amplitudes(&self) -> &DVector<Cx<T>> {
        &self.amplitudes
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn amplitude(&self, digits: &[usize]) -> Result<Cx<T>> {
        Ok(self.amplitudes[self.layout.index(digits)?])
    }

    pub fn norm(&self) -> T {
        self.amplitudes.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == T::zero() {
            return Err(Error::InvalidState("cannot normalize the zero vector".into()));
        }
        Ok(Self { amplitudes: &self.amplitudes / re(n), layout: self.layout.clone() })
    }

    /// `<self|other>`
    pub fn inner(&self, other: &Self) -> Result<Cx<T>> {
        if self.layout != other.layout {
            return Err(Error::Layout(format!("{:?} vs {:?}", self.layout.dims(), other.layout.dims())));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn scaled(&self, s: Cx<T>) -> Self {
        Self { amplitudes: &self.amplitudes * s, layout: self.layout.clone() }
    }

    /// `|psi><psi|`
    pub fn to_density(&self) -> DensityMatrix<T> {
        DensityMatrix { matrix: &self.amplitudes * self.amplitudes.adjoint(), layout: self.layout.clone() }
    }
}

/// Mixed state on a composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    matrix: DMatrix<Cx<T>>,
    layout: SpaceLayout,
}

impl<T: Real> DensityMatrix<T> {
    /// Wraps a matrix without checking the density-matrix invariants; see
    /// [`DensityMatrix::validate`].
    pub fn from_matrix(layout: SpaceLayout, matrix: DMatrix<Cx<T>>) -> Result<Self> {
        let d = layout.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Dimension(format!(
                "{}x{} matrix on a space of dimension {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix, layout })
    }

    pub fn maximally_mixed(layout: &SpaceLayout) -> Self {
        let d = layout.total_dim();
        let w = re(T::one() / T::from_usize(d).unwrap());
        Self { matrix: DMatrix::identity(d, d) * w, layout: layout.clone() }
    }

    pub fn matrix(&self) -> &DMatrix<Cx<T>> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Cx<T>> {
        self.matrix
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn trace(&self) -> Cx<T> {
        self.matrix.trace()
    }

    pub fn hermiticity_error(&self) -> T {
        max_abs_diff(&self.matrix, &self.matrix.adjoint())
    }

    /// Replaces the matrix by its Hermitian part.
    pub fn symmetrize(&mut self) {
        let adj = self.matrix.adjoint();
        self.matrix += adj;
        self.matrix *= re(T::lit(0.5));
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> T {
        let h = (&self.matrix + self.matrix.adjoint()) * re(T::lit(0.5));
        h.symmetric_eigenvalues().iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b))
    }

    pub fn purity(&self) -> T {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Checks Hermiticity, unit trace and positivity against tolerances.
    pub fn validate(&self, herm_tol: T, trace_tol: T, eig_tol: T) -> Result<()> {
        let h = self.hermiticity_error();
        if h > herm_tol {
            return Err(Error::NotHermitian { deviation: h.as_f64() });
        }
        let tr = self.trace();
        if (tr.re - T::one()).abs() > trace_tol || tr.im.abs() > trace_tol {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let m = self.min_eigenvalue();
        if m < -eig_tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {m:e}")));
        }
        Ok(())
    }

    /// Population of a basis state.
    pub fn population(&self, digits: &[usize]) -> Result<T> {
        let i = self.layout.index(digits)?;
        Ok(self.matrix[(i, i)].re)
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        partial_trace(self, keep)
    }
}

fn max_abs_diff<T: Real>(a: &DMatrix<Cx<T>>, b: &DMatrix<Cx<T>>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |m, (x, y)| m.max((*x - *y).norm_sqr().sqrt()))
}

/// Lifts a local operator on one subsystem to the whole space:
/// `I (x) ... (x) local (x) ... (x) I`.
pub fn embed<T: Real>(local: &DMatrix<Cx<T>>, subsystem: usize, layout: &SpaceLayout) -> Result<Operator<T>> {
    layout.check_subsystem(subsystem)?;
    let d = layout.dims()[subsystem];
    if local.nrows() != d || local.ncols() != d {
        return Err(Error::Dimension(format!(
            "{}x{} local operator on subsystem {subsystem} of dimension {d}",
            local.nrows(),
            local.ncols()
        )));
    }
    let stride = layout.strides()[subsystem];
    let total = layout.total_dim();
    let mut m = DMatrix::zeros(total, total);
    // Each column index decomposes as base + a * stride with digit a; the
    // operator only mixes indices sharing the same base.
    for col in 0..total {
        let a = (col / stride) % d;
        let base = col - a * stride;
        for b in 0..d {
            let v = local[(b, a)];
            if v != Cx::new(T::zero(), T::zero()) {
                m[(base + b * stride, col)] = v;
            }
        }
    }
    Ok(Operator { matrix: m, layout: layout.clone() })
}

/// Index offsets of every digit combination of `subs` (row-major over
/// `subs` in the given order) and the base indices where all of them are 0.
fn local_offsets(layout: &SpaceLayout, subs: &[usize], local_dim: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    for (i, &s) in subs.iter().enumerate() {
        layout.check_subsystem(s)?;
        if subs[..i].contains(&s) {
            return Err(Error::Layout(format!("subsystem {s} listed twice")));
        }
    }
    let dims: Vec<usize> = subs.iter().map(|&s| layout.dims()[s]).collect();
    let expect: usize = dims.iter().product();
    if expect != local_dim {
        return Err(Error::Dimension(format!(
            "{local_dim}-dimensional operator on subsystems of total dimension {expect}"
        )));
    }
    let strides = layout.strides();
    let mut offsets = vec![0usize; local_dim];
    for (l, off) in offsets.iter_mut().enumerate() {
        let mut rest = l;
        for (i, &s) in subs.iter().enumerate().rev() {
            *off += (rest % dims[i]) * strides[s];
            rest /= dims[i];
        }
    }
    let bases = (0..layout.total_dim()).filter(|&idx| subs.iter().all(|&s| layout.digit(idx, s) == 0)).collect();
    Ok((offsets, bases))
}

/// Applies `u`, acting on the listed subsystems, to `psi` without forming
/// the full operator.
pub fn apply_local<T: Real>(psi: &StateVector<T>, subs: &[usize], u: &DMatrix<Cx<T>>) -> Result<StateVector<T>> {
    if !u.is_square() {
        return Err(Error::Dimension("local operator must be square".into()));
    }
    let (offsets, bases) = local_offsets(&psi.layout, subs, u.nrows())?;
    let mut out = psi.amplitudes.clone();
    let mut v = DVector::zeros(offsets.len());
    for base in bases {
        for (l, &o) in offsets.iter().enumerate() {
            v[l] = psi.amplitudes[base + o];
        }
        let w = u * &v;
        for (l, &o) in offsets.iter().enumerate() {
            out[base + o] = w[l];
        }
    }
    Ok(StateVector { amplitudes: out, layout: psi.layout.clone() })
}

/// `U rho U^+` for `u` acting on the listed subsystems.
pub fn conjugate_local<T: Real>(
    rho: &DensityMatrix<T>,
    subs: &[usize],
    u: &DMatrix<Cx<T>>,
) -> Result<DensityMatrix<T>> {
    if !u.is_square() {
        return Err(Error::Dimension("local operator must be square".into()));
    }
    let (offsets, bases) = local_offsets(&rho.layout, subs, u.nrows())?;
    let total = rho.layout.total_dim();
    let ld = offsets.len();
    let mut left = rho.matrix.clone();
    let mut v = DVector::zeros(ld);
    for &base in &bases {
        for col in 0..total {
            for (l, &o) in offsets.iter().enumerate() {
                v[l] = rho.matrix[(base + o, col)];
            }
            let w = u * &v;
            for (l, &o) in offsets.iter().enumerate() {
                left[(base + o, col)] = w[l];
            }
        }
    }
    let u_conj = u.map(|z| z.conj());
    let mut out = left.clone();
    for &base in &bases {
        for row in 0..total {
            for (l, &o) in offsets.iter().enumerate() {
                v[l] = left[(row, base + o)];
            }
            let w = &u_conj * &v;
            for (l, &o) in offsets.iter().enumerate() {
                out[(row, base + o)] = w[l];
            }
        }
    }
    Ok(DensityMatrix { matrix: out, layout: rho.layout.clone() })
}

/// Truncated cavity annihilation operator on `d_c` Fock levels.
pub fn annihilation<T: Real>(d_c: usize) -> Result<DMatrix<Cx<T>>> {
    if d_c < 2 {
        return Err(Error::InvalidParameter(format!("cavity cutoff {d_c} < 2")));
    }
    let mut a = DMatrix::zeros(d_c, d_c);
    for m in 1..d_c {
        a[(m - 1, m)] = re(T::from_usize(m).unwrap().sqrt());
    }
    Ok(a)
}

/// `|i><j|` on a `d`-level subsystem.
pub fn transition<T: Real>(d: usize, i: usize, j: usize) -> DMatrix<Cx<T>> {
    let mut m = DMatrix::zeros(d, d);
    m[(i, j)] = re(T::one());
    m
}

/// `|<psi_id|psi>|^2`
pub fn fidelity_pure<T: Real>(psi_id: &StateVector<T>, psi: &StateVector<T>) -> Result<T> {
    Ok(psi_id.inner(psi)?.norm_sqr())
}

/// `<psi_id|rho|psi_id>`; rejects a non-Hermitian `rho`.
pub fn fidelity_mixed<T: Real>(psi_id: &StateVector<T>, rho: &DensityMatrix<T>) -> Result<T> {
    if psi_id.layout != rho.layout {
        return Err(Error::Layout(format!("{:?} vs {:?}", psi_id.layout.dims(), rho.layout.dims())));
    }
    let h = rho.hermiticity_error();
    if h > T::tolerance() {
        return Err(Error::NotHermitian { deviation: h.as_f64() });
    }
    let v = psi_id.amplitudes.dotc(&(&rho.matrix * &psi_id.amplitudes));
    debug_assert!(v.im.abs() < T::tolerance());
    Ok(v.re)
}

/// Traces out every subsystem not listed in `keep`. The result keeps the
/// original subsystem order.
pub fn partial_trace<T: Real>(rho: &DensityMatrix<T>, keep: &[usize]) -> Result<DensityMatrix<T>> {
    let layout = &rho.layout;
    if keep.is_empty() {
        return Err(Error::Layout("partial trace must keep at least one subsystem".into()));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    for &s in &kept {
        layout.check_subsystem(s)?;
    }
    let traced: Vec<usize> = (0..layout.num_subsystems()).filter(|s| !kept.contains(s)).collect();
    let out_layout = SpaceLayout::new(kept.iter().map(|&s| layout.dims()[s]).collect())?;
    let env_layout_dims: Vec<usize> = traced.iter().map(|&s| layout.dims()[s]).collect();
    let env_dim: usize = env_layout_dims.iter().product();
    let strides = layout.strides();

    let offset =
        |sub: &[usize], digits: &[usize]| -> usize { sub.iter().zip(digits).map(|(&s, &d)| d * strides[s]).sum() };
    let to_digits = |mut idx: usize, dims: &[usize]| -> Vec<usize> {
        let mut out = vec![0; dims.len()];
        for k in (0..dims.len()).rev() {
            out[k] = idx % dims[k];
            idx /= dims[k];
        }
        out
    };

    let d_out = out_layout.total_dim();
    let kept_offsets: Vec<usize> = (0..d_out).map(|i| offset(&kept, &to_digits(i, out_layout.dims()))).collect();
    let env_offsets: Vec<usize> = (0..env_dim).map(|e| offset(&traced, &to_digits(e, &env_layout_dims))).collect();

    let mut m = DMatrix::zeros(d_out, d_out);
    for i in 0..d_out {
        for j in 0..d_out {
            let mut acc = Cx::new(T::zero(), T::zero());
            for &e in &env_offsets {
                acc += rho.matrix[(kept_offsets[i] + e, kept_offsets[j] + e)];
            }
            m[(i, j)] = acc;
        }
    }
    Ok(DensityMatrix { matrix: m, layout: out_layout })
}
