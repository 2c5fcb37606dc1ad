//! Time evolution: exact propagators for time-independent Hamiltonians and
//! a fixed-step integrator for the master equation
//!
//! `d(rho)/dt = -i [H, rho] + sum_c (2 c rho c^+ - c^+ c rho - rho c^+ c)`
//!
//! where each collapse operator `c` already carries the square root of its
//! rate.
//!
//! Write the right-hand side as `-i (K rho - rho K^+) + J(rho)` with
//! `K = H - i sum c^+ c` and `J(rho) = 2 sum c rho c^+`. The first part has
//! the exact flow `rho -> G rho G^+`, `G = exp(-i K h)`, so the integrator is
//! RK4 in the interaction picture of that flow (Lawson's scheme). Couplings
//! and detunings are propagated exactly, but in that picture the jump terms
//! oscillate at the Bohr frequencies of `H`, so the step still has to
//! resolve them, if only at about a radian per step. `K` is
//! block diagonal in the computational basis for every generator used here
//! (it never changes which atoms are excited beyond a photon hop), so `G` is
//! stored as a set of small dense blocks.
//!
//! The state is restricted to the smallest coordinate subspace that contains
//! the support of the initial state and is closed under `H` and every
//! collapse operator. Amplitudes outside it stay exactly zero.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, Operator, SpaceLayout, StateVector};
use crate::linalg::{expm, HermitianSpectrum};
use crate::scalar::{cx, phase, re, Cx, Real};

/// Step control for [`evolve_lindblad`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolutionConfig<T: Real> {
    /// Largest step (s).
    pub dt: T,
    /// Cap on `omega * dt`, with `omega` the spread of `H` plus twice the
    /// largest decay rate. The no-jump part is exact, so this only bounds
    /// the quadrature error of the jump terms, which rotate at Bohr
    /// frequencies of `H`; it is not a stability limit.
    pub max_phase_per_step: T,
}

impl<T: Real> Default for EvolutionConfig<T> {
    fn default() -> Self {
        Self { dt: T::lit(1.0e-5), max_phase_per_step: T::lit(3.0) }
    }
}

impl<T: Real> EvolutionConfig<T> {
    /// Same configuration with every step halved.
    pub fn refined(&self) -> Self {
        let half = T::lit(0.5);
        Self { dt: self.dt * half, max_phase_per_step: self.max_phase_per_step * half }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !(self.max_phase_per_step > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} and max_phase_per_step = {} must be positive",
                self.dt, self.max_phase_per_step
            )));
        }
        Ok(())
    }
}

/// `exp(-i H t)` as an operator.
pub fn propagator<T: Real>(h: &Operator<T>, t: T) -> Result<Operator<T>> {
    let spec = HermitianSpectrum::new(h.matrix(), T::tolerance())?;
    Operator::from_matrix(h.layout().clone(), spec.propagator(t))
}

/// `exp(-i H t) |psi>`
pub fn evolve_unitary<T: Real>(h: &Operator<T>, t: T, psi: &StateVector<T>) -> Result<StateVector<T>> {
    if !(t >= T::zero()) {
        return Err(Error::InvalidParameter(format!("evolution time {t} < 0")));
    }
    if h.layout() != psi.layout() {
        return Err(Error::Layout(format!("{:?} vs {:?}", h.layout().dims(), psi.layout().dims())));
    }
    if t == T::zero() {
        h.ensure_hermitian(T::tolerance() * h.max_abs().max(T::one()))?;
        return Ok(psi.clone());
    }
    propagator(h, t)?.apply(psi)
}

/// What the integrator did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LindbladStats<T: Real> {
    pub steps: usize,
    pub dt: T,
    pub subspace_dim: usize,
    /// Largest block of `K`.
    pub largest_block: usize,
}

/// Integrates the master equation for time `t`.
pub fn evolve_lindblad<T: Real>(
    h: &Operator<T>,
    collapse: &[Operator<T>],
    t: T,
    rho: &DensityMatrix<T>,
    cfg: &EvolutionConfig<T>,
) -> Result<DensityMatrix<T>> {
    evolve_lindblad_with_stats(h, collapse, t, rho, cfg).map(|(r, _)| r)
}

/// [`evolve_lindblad`], also reporting the step count and subspace size.
pub fn evolve_lindblad_with_stats<T: Real>(
    h: &Operator<T>,
    collapse: &[Operator<T>],
    t: T,
    rho: &DensityMatrix<T>,
    cfg: &EvolutionConfig<T>,
) -> Result<(DensityMatrix<T>, LindbladStats<T>)> {
    cfg.validate()?;
    if !(t >= T::zero()) {
        return Err(Error::InvalidParameter(format!("evolution time {t} < 0")));
    }
    let layout = rho.layout();
    if h.layout() != layout {
        return Err(Error::Layout(format!("{:?} vs {:?}", h.layout().dims(), layout.dims())));
    }
    if let Some(c) = collapse.iter().find(|c| c.layout() != layout) {
        return Err(Error::Layout(format!("collapse operator on {:?}", c.layout().dims())));
    }
    h.ensure_hermitian(T::tolerance() * h.max_abs().max(T::one()))?;
    if t == T::zero() {
        return Ok((rho.clone(), LindbladStats { steps: 0, dt: T::zero(), subspace_dim: 0, largest_block: 0 }));
    }

    let problem = RestrictedProblem::build(h.matrix(), collapse, rho.matrix());
    let omega = problem.frequency_scale()?;
    let mut dt = cfg.dt;
    if omega > T::zero() {
        dt = dt.min(cfg.max_phase_per_step / omega);
    }
    let steps = (t / dt).ceil().to_usize().unwrap_or(1).max(1);
    let dt = t / T::from_usize(steps).unwrap();

    let half_flow = problem.flow(dt * T::lit(0.5))?;
    let mut state = problem.restrict(rho.matrix());
    let mut ws = LawsonWorkspace::new(problem.dim());
    for _ in 0..steps {
        ws.step(&problem, &half_flow, &mut state, dt);
    }

    let out = problem.expand(&state, layout.total_dim());
    let mut result = DensityMatrix::from_matrix(layout.clone(), out)?;
    result.symmetrize();
    let largest_block = half_flow.blocks.iter().map(|b| b.0.len()).max().unwrap_or(0);
    Ok((result, LindbladStats { steps, dt, subspace_dim: problem.dim(), largest_block }))
}

/// Nonzero entries `(row, col, value)` of a matrix.
fn triplets<T: Real>(m: &DMatrix<Cx<T>>) -> Vec<(usize, usize, Cx<T>)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if z != Cx::new(T::zero(), T::zero()) {
                out.push((i, j, z));
            }
        }
    }
    out
}

/// Master equation restricted to an invariant coordinate subspace: the dense
/// `K` and the jump operators `sqrt(2) c` as triplets.
struct RestrictedProblem<T: Real> {
    /// Global basis index of each local coordinate.
    basis: Vec<usize>,
    k: DMatrix<Cx<T>>,
    jumps: Vec<Vec<(usize, usize, Cx<T>)>>,
    /// Row-sum bound on `sum c^+ c`.
    decay_scale: T,
}

/// `rho -> G rho G^+` with block-diagonal `G`.
struct BlockFlow<T: Real> {
    blocks: Vec<(Vec<usize>, DMatrix<Cx<T>>)>,
    /// Block number and position inside it, per coordinate.
    slot: Vec<(usize, usize)>,
}

impl<T: Real> RestrictedProblem<T> {
    fn build(h: &DMatrix<Cx<T>>, collapse: &[Operator<T>], rho: &DMatrix<Cx<T>>) -> Self {
        let d = h.nrows();
        let zero = Cx::new(T::zero(), T::zero());
        let h_trip = triplets(h);
        let c_trip: Vec<_> = collapse.iter().map(|c| triplets(c.matrix())).filter(|t| !t.is_empty()).collect();

        let mut next: Vec<Vec<usize>> = vec![Vec::new(); d];
        for &(i, j, _) in h_trip.iter().chain(c_trip.iter().flatten()) {
            next[j].push(i);
        }
        let mut inside = vec![false; d];
        let mut queue = Vec::new();
        for i in 0..d {
            if (0..d).any(|j| rho[(i, j)] != zero || rho[(j, i)] != zero) {
                inside[i] = true;
                queue.push(i);
            }
        }
        while let Some(j) = queue.pop() {
            for &i in &next[j] {
                if !inside[i] {
                    inside[i] = true;
                    queue.push(i);
                }
            }
        }
        let basis: Vec<usize> = (0..d).filter(|&i| inside[i]).collect();
        let mut local = vec![usize::MAX; d];
        for (l, &g) in basis.iter().enumerate() {
            local[g] = l;
        }
        let m = basis.len();

        // Columns inside imply rows inside, by closure.
        let sqrt2 = T::lit(2.0).sqrt();
        let jumps: Vec<Vec<(usize, usize, Cx<T>)>> = c_trip
            .iter()
            .map(|trip| {
                trip.iter()
                    .filter(|&&(_, j, _)| inside[j])
                    .map(|&(i, j, v)| (local[i], local[j], v * sqrt2))
                    .collect::<Vec<_>>()
            })
            .filter(|t| !t.is_empty())
            .collect();

        // sum c^+ c: (c^+ c)_{jk} = sum_i conj(c_ij) c_ik; jumps carry sqrt 2.
        let mut decay = DMatrix::<Cx<T>>::zeros(m, m);
        let half = T::lit(0.5);
        for trip in &jumps {
            let mut by_row: Vec<Vec<(usize, Cx<T>)>> = vec![Vec::new(); m];
            for &(i, j, v) in trip {
                by_row[i].push((j, v));
            }
            for row in &by_row {
                for &(j, v) in row {
                    for &(k, w) in row {
                        decay[(j, k)] += v.conj() * w * half;
                    }
                }
            }
        }
        let decay_scale = (0..m)
            .map(|j| (0..m).fold(T::zero(), |s, k| s + decay[(j, k)].norm_sqr().sqrt()))
            .fold(T::zero(), |a, b| a.max(b));

        let hr = DMatrix::from_fn(m, m, |a, b| h[(basis[a], basis[b])]);
        let k = hr - decay.map(|z| cx(-z.im, z.re));
        Self { basis, k, jumps, decay_scale }
    }

    fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Spread of the Hermitian part of `K` plus twice the decay bound.
    fn frequency_scale(&self) -> Result<T> {
        let h = (&self.k + self.k.adjoint()) * re(T::lit(0.5));
        let spread = if self.dim() > 1 { HermitianSpectrum::new(&h, T::tolerance())?.spread() } else { T::zero() };
        Ok(spread + T::lit(2.0) * self.decay_scale)
    }

    /// Exact no-jump flow for time `h`, one dense exponential per connected
    /// block of `K`.
    fn flow(&self, h: T) -> Result<BlockFlow<T>> {
        let m = self.dim();
        let zero = Cx::new(T::zero(), T::zero());
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for a in 0..m {
            for b in 0..m {
                if a != b && self.k[(a, b)] != zero {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra] = rb;
                    }
                }
            }
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); m];
        for a in 0..m {
            let r = find(&mut parent, a);
            members[r].push(a);
        }
        let mut blocks = Vec::new();
        let mut slot = vec![(0, 0); m];
        let mi_h = cx(T::zero(), -h);
        for idx in members.into_iter().filter(|v| !v.is_empty()) {
            let s = idx.len();
            let kb = DMatrix::from_fn(s, s, |i, j| self.k[(idx[i], idx[j])]);
            let g = if s == 1 {
                {
                    let z = kb[(0, 0)] * mi_h;
                    DMatrix::from_element(1, 1, phase(z.im) * z.re.exp())
                }
            } else {
                expm(&(kb * mi_h))?
            };
            for (pos, &a) in idx.iter().enumerate() {
                slot[a] = (blocks.len(), pos);
            }
            blocks.push((idx, g));
        }
        Ok(BlockFlow { blocks, slot })
    }

    fn restrict(&self, rho: &DMatrix<Cx<T>>) -> Vec<Cx<T>> {
        let m = self.dim();
        let mut out = Vec::with_capacity(m * m);
        for &a in &self.basis {
            for &b in &self.basis {
                out.push(rho[(a, b)]);
            }
        }
        out
    }

    fn expand(&self, state: &[Cx<T>], d: usize) -> DMatrix<Cx<T>> {
        let m = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for (a, &ga) in self.basis.iter().enumerate() {
            for (b, &gb) in self.basis.iter().enumerate() {
                out[(ga, gb)] = state[a * m + b];
            }
        }
        out
    }

    /// `out = J(rho)`
    fn jump(&self, rho: &[Cx<T>], out: &mut [Cx<T>]) {
        let m = self.dim();
        out.iter_mut().for_each(|z| *z = Cx::new(T::zero(), T::zero()));
        for trip in &self.jumps {
            for &(j, i, v) in trip {
                let src = i * m;
                let dst = j * m;
                for &(l, k, w) in trip {
                    out[dst + l] += v * rho[src + k] * w.conj();
                }
            }
        }
    }
}

impl<T: Real> BlockFlow<T> {
    /// `out = G rho G^+`, using `tmp` as scratch.
    fn apply(&self, rho: &[Cx<T>], out: &mut [Cx<T>], tmp: &mut [Cx<T>]) {
        let m = self.slot.len();
        let zero = Cx::new(T::zero(), T::zero());
        // tmp = G rho, block rows.
        for (idx, g) in &self.blocks {
            for (p, &a) in idx.iter().enumerate() {
                let row = &mut tmp[a * m..(a + 1) * m];
                row.iter_mut().for_each(|z| *z = zero);
                for (q, &b) in idx.iter().enumerate() {
                    let gpq = g[(p, q)];
                    if gpq == zero {
                        continue;
                    }
                    let src = &rho[b * m..(b + 1) * m];
                    for (o, &x) in row.iter_mut().zip(src) {
                        *o += gpq * x;
                    }
                }
            }
        }
        // out = tmp G^+, block columns: out[i, a] = sum_b tmp[i, b] conj(G[a, b]).
        for i in 0..m {
            let row = &tmp[i * m..(i + 1) * m];
            let orow = &mut out[i * m..(i + 1) * m];
            for (idx, g) in &self.blocks {
                for (p, &a) in idx.iter().enumerate() {
                    let mut acc = zero;
                    for (q, &b) in idx.iter().enumerate() {
                        acc += row[b] * g[(p, q)].conj();
                    }
                    orow[a] = acc;
                }
            }
        }
    }
}

struct LawsonWorkspace<T: Real> {
    a_u: Vec<Cx<T>>,
    j: Vec<Cx<T>>,
    acc: Vec<Cx<T>>,
    stage: Vec<Cx<T>>,
    tmp: Vec<Cx<T>>,
    scratch: Vec<Cx<T>>,
    m: usize,
}

impl<T: Real> LawsonWorkspace<T> {
    fn new(m: usize) -> Self {
        let z = vec![Cx::new(T::zero(), T::zero()); m * m];
        Self { a_u: z.clone(), j: z.clone(), acc: z.clone(), stage: z.clone(), tmp: z.clone(), scratch: z, m }
    }

    /// One step of RK4 in the interaction picture of the no-jump flow `E`,
    /// with `a = E(h/2)`:
    ///
    /// ```text
    /// U2 = a(u) + h/2 a(J u)
    /// U3 = a(u) + h/2 J(U2)
    /// U4 = a(a(u) + h J(U3))
    /// u' = a(a(u) + h/6 a(J u) + h/3 (J(U2) + J(U3))) + h/6 J(U4)
    /// ```
    fn step(&mut self, p: &RestrictedProblem<T>, a: &BlockFlow<T>, u: &mut [Cx<T>], h: T) {
        let half = h * T::lit(0.5);
        let sixth = h / T::lit(6.0);
        let third = h / T::lit(3.0);

        a.apply(u, &mut self.a_u, &mut self.scratch);
        p.jump(u, &mut self.tmp);
        a.apply(&self.tmp, &mut self.j, &mut self.scratch); // a(J u)

        // acc = a(u) + h/6 a(J u); stage = U2
        for i in 0..u.len() {
            self.acc[i] = self.a_u[i] + self.j[i] * sixth;
            self.stage[i] = self.a_u[i] + self.j[i] * half;
        }
        p.jump(&self.stage, &mut self.j); // J(U2)
        for i in 0..u.len() {
            self.acc[i] += self.j[i] * third;
            self.stage[i] = self.a_u[i] + self.j[i] * half;
        }
        p.jump(&self.stage, &mut self.j); // J(U3)
        for i in 0..u.len() {
            self.acc[i] += self.j[i] * third;
            self.tmp[i] = self.a_u[i] + self.j[i] * h;
        }
        a.apply(&self.tmp, &mut self.stage, &mut self.scratch); // U4
        p.jump(&self.stage, &mut self.j); // J(U4)
        a.apply(&self.acc, u, &mut self.scratch);
        for (x, &j) in u.iter_mut().zip(&self.j) {
            *x += j * sixth;
        }
        // Hermitian part; positivity is monitored, not enforced.
        let m = self.m;
        let half1 = T::lit(0.5);
        for r in 0..m {
            let z = u[r * m + r];
            u[r * m + r] = cx(z.re, T::zero());
            for c in r + 1..m {
                let avg = (u[r * m + c] + u[c * m + r].conj()) * half1;
                u[r * m + c] = avg;
                u[c * m + r] = avg.conj();
            }
        }
    }
}

/// Lindblad evolution with `H = 0`: decay during an interval in which
/// nothing is driven.
pub fn free_decay<T: Real>(
    rho: &DensityMatrix<T>,
    collapse: &[Operator<T>],
    tau_m: T,
    cfg: &EvolutionConfig<T>,
) -> Result<DensityMatrix<T>> {
    let h = Operator::zeros(rho.layout());
    evolve_lindblad(&h, collapse, tau_m, rho, cfg)
}

/// Generator acting on a single subsystem.
#[derive(Clone, Debug)]
pub struct LocalGenerator<T: Real> {
    pub subsystem: usize,
    pub hamiltonian: DMatrix<Cx<T>>,
    pub collapse: Vec<DMatrix<Cx<T>>>,
}

/// Superoperator of `rho -> -i[H, rho] + sum (2 c rho c^+ - {c^+ c, rho})` on
/// a `d`-level system, acting on row-major `vec(rho)` (index `a d + b` for
/// `|a><b|`).
pub fn lindblad_superoperator<T: Real>(h: &DMatrix<Cx<T>>, collapse: &[DMatrix<Cx<T>>]) -> DMatrix<Cx<T>> {
    let d = h.nrows();
    let mut l = DMatrix::zeros(d * d, d * d);
    let mi = cx(T::zero(), -T::one());
    let two = re(T::lit(2.0));
    let cdc: Vec<DMatrix<Cx<T>>> = collapse.iter().map(|c| c.adjoint() * c).collect();
    for a in 0..d {
        for b in 0..d {
            let mut e = DMatrix::zeros(d, d);
            e[(a, b)] = re(T::one());
            let mut out = (h * &e - &e * h) * mi;
            for (c, n) in collapse.iter().zip(&cdc) {
                out += c * &e * c.adjoint() * two - n * &e - &e * n;
            }
            for i in 0..d {
                for j in 0..d {
                    l[(i * d + j, a * d + b)] = out[(i, j)];
                }
            }
        }
    }
    l
}

/// Superoperator of `rho -> U rho U^+`.
pub fn unitary_superoperator<T: Real>(u: &DMatrix<Cx<T>>) -> DMatrix<Cx<T>> {
    let d = u.nrows();
    DMatrix::from_fn(d * d, d * d, |r, c| {
        let (i, j) = (r / d, r % d);
        let (a, b) = (c / d, c % d);
        u[(i, a)] * u[(j, b)].conj()
    })
}

/// Exact channel of a local generator after time `t`.
pub fn local_channel<T: Real>(generator: &LocalGenerator<T>, t: T) -> Result<DMatrix<Cx<T>>> {
    let d = generator.hamiltonian.nrows();
    if !generator.hamiltonian.is_square() || generator.collapse.iter().any(|c| c.nrows() != d || c.ncols() != d) {
        return Err(Error::Dimension("local generator blocks must share one square dimension".into()));
    }
    let l = lindblad_superoperator(&generator.hamiltonian, &generator.collapse);
    expm(&(l * re(t)))
}

/// Applies a superoperator on one subsystem of a composite density matrix.
pub fn apply_local_channel<T: Real>(
    rho: &DensityMatrix<T>,
    subsystem: usize,
    channel: &DMatrix<Cx<T>>,
) -> Result<DensityMatrix<T>> {
    let layout: &SpaceLayout = rho.layout();
    if subsystem >= layout.num_subsystems() {
        return Err(Error::Layout(format!("subsystem {subsystem} out of range")));
    }
    let d = layout.dims()[subsystem];
    if channel.nrows() != d * d || channel.ncols() != d * d {
        return Err(Error::Dimension(format!(
            "{}x{} channel for a {d}-level subsystem",
            channel.nrows(),
            channel.ncols()
        )));
    }
    let stride = layout.strides()[subsystem];
    let total = layout.total_dim();
    let bases: Vec<usize> = (0..total).filter(|&i| (i / stride).is_multiple_of(d)).collect();
    let src = rho.matrix();
    let mut out = DMatrix::zeros(total, total);
    let mut block = vec![Cx::new(T::zero(), T::zero()); d * d];
    for &bi in &bases {
        for &bj in &bases {
            for a in 0..d {
                for b in 0..d {
                    block[a * d + b] = src[(bi + a * stride, bj + b * stride)];
                }
            }
            for r in 0..d * d {
                let mut acc = Cx::new(T::zero(), T::zero());
                for (c, &v) in block.iter().enumerate() {
                    acc += channel[(r, c)] * v;
                }
                out[(bi + (r / d) * stride, bj + (r % d) * stride)] = acc;
            }
        }
    }
    DensityMatrix::from_matrix(layout.clone(), out)
}

/// Exact evolution under a sum of generators on distinct subsystems. Such
/// generators commute, so the channel factorizes.
pub fn evolve_lindblad_factorized<T: Real>(
    generators: &[LocalGenerator<T>],
    t: T,
    rho: &DensityMatrix<T>,
) -> Result<DensityMatrix<T>> {
    let mut seen = vec![false; rho.layout().num_subsystems()];
    let mut out = rho.clone();
    for g in generators {
        if g.subsystem >= seen.len() || seen[g.subsystem] {
            return Err(Error::Layout(format!("subsystem {} repeated or out of range", g.subsystem)));
        }
        seen[g.subsystem] = true;
        out = apply_local_channel(&out, g.subsystem, &local_channel(g, t)?)?;
    }
    out.symmetrize();
    Ok(out)
}
