//! The seven-step gate sequence.
//!
//! ```text
//! (i)   targets: 1-2 pulse, phase -pi/2      control: in the cavity for pi/(2 g_r)
//! (ii)  targets in the cavity for pi Delta_c / g^2
//! (iii) targets: 1-2 pulse, phase +pi/2
//! (iv)  targets: off-resonant 2-3 pulses for tau (Stark phases theta_k)
//! (v)   targets: 1-2 pulse, phase -pi/2
//! (vi)  targets in the cavity for pi Delta_c / g^2
//! (vii) targets: 1-2 pulse, phase +pi/2      control: in the cavity for 3 pi/(2 g_r)
//! ```
//!
//! A control atom in `|1>` leaves one photon in the cavity for steps
//! (ii)-(vi); each target in `|2>` then picks up a sign per dispersive step,
//! which the pulses turn into the phase `e^{i theta_k}` on `|1>_1 |1>_k`.
//!
//! During (ii)-(vi) the control atom is carried along as an idle spectator.
//! With a deviated control coupling, (i) leaves part of `|1>_1` behind, and
//! (vii) needs that amplitude.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dynamics::{evolve_lindblad_with_stats, free_decay, EvolutionConfig};
use crate::error::{Error, Result};
use crate::hilbert::{
    annihilation, apply_local, conjugate_local, fidelity_mixed, fidelity_pure, transition, DensityMatrix, Operator,
    SpaceLayout, StateVector,
};
use crate::linalg::expm_hermitian;
use crate::model::{
    collapse_operators, dispersive_hamiltonian_full, local_resonant_pulse, offresonant_pulse_hamiltonian, GateSpace,
    NoiseRates, PhysicalParams, PulseSpec, CONTROL_LEVELS, TARGET_LEVELS,
};
use crate::scalar::{phase, re, wrap_angle, Cx, Real};

/// Target phases `theta_2 .. theta_{n+1}`, each reduced into `[0, 2 pi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateAngles<T: Real> {
    theta: Vec<T>,
}

impl<T: Real> GateAngles<T> {
    pub fn new(theta: Vec<T>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidParameter("need at least one target phase".into()));
        }
        if let Some(t) = theta.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter(format!("phase {t} is not finite")));
        }
        Ok(Self { theta: theta.into_iter().map(wrap_angle).collect() })
    }

    /// The same phase on every target.
    pub fn uniform(n: usize, theta: T) -> Result<Self> {
        Self::new(vec![theta; n])
    }

    /// `theta_k = 2 pi / 2^k` for `k = 2 .. n+1`.
    pub fn qft(n: usize) -> Result<Self> {
        Self::new((2..n + 2).map(|k| T::two_pi() / T::lit(2f64.powi(k as i32))).collect())
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        Self::new((0..n).map(|_| T::lit(rng.gen::<f64>()) * T::two_pi()).collect())
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeKind {
    /// Exact unitaries with nominal couplings.
    IdealEffective,
    /// Exact unitaries with the actual couplings `g_k`, `g_r_actual`.
    DeviatedEffective,
    /// Full Hamiltonians with dissipation in (ii), (iv), (vi) and transport.
    LossyFull,
}

/// Labels of the transport intervals, in the order they occur.
pub const TRANSPORT_EVENTS: [&str; 10] = [
    "control in (i)",
    "control out (i)",
    "targets in (ii)",
    "targets out (ii)",
    "reposition (iv)",
    "reposition (v)",
    "targets in (vi)",
    "targets out (vi)",
    "control in (vii)",
    "control out (vii)",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationMode<T: Real> {
    pub kind: ModeKind,
    /// Apply `free_decay` for `tau_m` at transport events (lossy mode only).
    pub include_transport_decay: bool,
    /// Only the first this-many entries of [`TRANSPORT_EVENTS`] are applied.
    pub transport_event_count: usize,
    pub evolution: EvolutionConfig<T>,
}

impl<T: Real> SimulationMode<T> {
    fn with_kind(kind: ModeKind) -> Self {
        Self {
            kind,
            include_transport_decay: true,
            transport_event_count: TRANSPORT_EVENTS.len(),
            evolution: EvolutionConfig::default(),
        }
    }

    pub fn ideal() -> Self {
        Self::with_kind(ModeKind::IdealEffective)
    }

    pub fn deviated() -> Self {
        Self::with_kind(ModeKind::DeviatedEffective)
    }

    pub fn lossy() -> Self {
        Self::with_kind(ModeKind::LossyFull)
    }

    pub fn validate(&self) -> Result<()> {
        if self.transport_event_count > TRANSPORT_EVENTS.len() {
            return Err(Error::Mode(format!(
                "transport_event_count = {} exceeds the {} transport events",
                self.transport_event_count,
                TRANSPORT_EVENTS.len()
            )));
        }
        self.evolution.validate()
    }
}

/// Pure or mixed state of the whole system.
#[derive(Clone, Debug, PartialEq)]
pub enum QuantumState<T: Real> {
    Pure(StateVector<T>),
    Mixed(DensityMatrix<T>),
}

impl<T: Real> QuantumState<T> {
    pub fn layout(&self) -> &SpaceLayout {
        match self {
            Self::Pure(p) => p.layout(),
            Self::Mixed(r) => r.layout(),
        }
    }

    pub fn to_density(&self) -> DensityMatrix<T> {
        match self {
            Self::Pure(p) => p.to_density(),
            Self::Mixed(r) => r.clone(),
        }
    }

    /// `<psi_id|rho|psi_id>`, or `|<psi_id|psi>|^2` for a pure state.
    pub fn fidelity(&self, psi_id: &StateVector<T>) -> Result<T> {
        match self {
            Self::Pure(p) => fidelity_pure(psi_id, p),
            Self::Mixed(r) => fidelity_mixed(psi_id, r),
        }
    }

    fn apply_local(&self, subs: &[usize], u: &DMatrix<Cx<T>>) -> Result<Self> {
        Ok(match self {
            Self::Pure(p) => Self::Pure(apply_local(p, subs, u)?),
            Self::Mixed(r) => Self::Mixed(conjugate_local(r, subs, u)?),
        })
    }

    /// Multiplies by the diagonal unitary `diag(e^{i angle_j})`.
    fn rotate(&self, angle: &[T]) -> Result<Self> {
        Ok(match self {
            Self::Pure(p) => {
                let amps = DVector::from_fn(angle.len(), |i, _| p.amplitudes()[i] * phase(angle[i]));
                Self::Pure(StateVector::new(p.layout().clone(), amps)?)
            }
            Self::Mixed(r) => {
                let d = angle.len();
                let m = DMatrix::from_fn(d, d, |i, j| r.matrix()[(i, j)] * phase(angle[i] - angle[j]));
                Self::Mixed(DensityMatrix::from_matrix(r.layout().clone(), m)?)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry<T: Real> {
    pub label: String,
    pub state: QuantumState<T>,
    /// Physical time since the start of the protocol (s).
    pub elapsed: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolTrace<T: Real> {
    pub entries: Vec<TraceEntry<T>>,
    /// Integrator steps taken by the lossy steps.
    pub integrator_steps: usize,
}

impl<T: Real> ProtocolTrace<T> {
    fn push(&mut self, label: impl Into<String>, state: &QuantumState<T>, elapsed: T) {
        self.entries.push(TraceEntry { label: label.into(), state: state.clone(), elapsed });
    }
}

/// Diagonal gate `|x_1 .. x_{n+1}> -> exp(i x_1 sum_k theta_k x_k) |x>` on
/// `n + 1` qubits, control first.
pub fn ideal_gate_operator<T: Real>(angles: &GateAngles<T>, n: usize) -> Result<Operator<T>> {
    if n == 0 || angles.n() != n {
        return Err(Error::InvalidParameter(format!("{} phases for n = {n}", angles.n())));
    }
    let layout = SpaceLayout::qubits(n + 1)?;
    let diag: Vec<Cx<T>> = (0..layout.total_dim())
        .map(|idx| {
            let x = layout.digits(idx);
            if x[0] == 0 {
                return re(T::one());
            }
            let total = angles.theta.iter().zip(&x[1..]).filter(|(_, &b)| b == 1).fold(T::zero(), |s, (t, _)| s + *t);
            phase(total)
        })
        .collect();
    Operator::from_matrix(layout, DMatrix::from_diagonal(&DVector::from_vec(diag)))
}

/// Places an `(n+1)`-qubit state (control first) into the gate space with
/// the cavity in vacuum.
pub fn embed_qubits<T: Real>(psi: &StateVector<T>, space: &GateSpace) -> Result<StateVector<T>> {
    let n = space.n_targets();
    let expect = SpaceLayout::qubits(n + 1)?;
    if psi.layout() != &expect || !space.has_control() {
        return Err(Error::Layout(format!(
            "{:?} is not an {}-qubit register for this space",
            psi.layout().dims(),
            n + 1
        )));
    }
    let layout = space.layout();
    let mut amps = DVector::zeros(layout.total_dim());
    for (q, &a) in psi.amplitudes().iter().enumerate() {
        let x = expect.digits(q);
        amps[layout.index(&space.digits(0, &x[1..], Some(x[0])))?] = a;
    }
    StateVector::new(layout.clone(), amps)
}

/// Amplitudes of a gate-space state on the qubit subspace (cavity vacuum,
/// targets in `{|0>, |1>}`). Not renormalized.
pub fn project_qubits<T: Real>(psi: &StateVector<T>, space: &GateSpace) -> Result<StateVector<T>> {
    if psi.layout() != space.layout() || !space.has_control() {
        return Err(Error::Layout("state is not on this gate space".into()));
    }
    let n = space.n_targets();
    let q = SpaceLayout::qubits(n + 1)?;
    let amps = DVector::from_fn(q.total_dim(), |i, _| {
        let x = q.digits(i);
        let idx = space.layout().index(&space.digits(0, &x[1..], Some(x[0]))).expect("qubit digits fit");
        psi.amplitudes()[idx]
    });
    StateVector::new(q, amps)
}

/// `(|0> + |1>)/sqrt 2` on every atom, cavity in vacuum.
pub fn uniform_initial_state<T: Real>(space: &GateSpace) -> Result<StateVector<T>> {
    let n = space.n_targets();
    let q = SpaceLayout::qubits(n + 1)?;
    let amp = re(T::one() / T::from_usize(q.total_dim()).unwrap().sqrt());
    embed_qubits(&StateVector::new(q.clone(), DVector::from_element(q.total_dim(), amp))?, space)
}

/// The ideal gate applied to the qubit part of `initial`.
pub fn ideal_final_state<T: Real>(
    initial: &StateVector<T>,
    angles: &GateAngles<T>,
    space: &GateSpace,
) -> Result<StateVector<T>> {
    let q = project_qubits(initial, space)?;
    let u = ideal_gate_operator(angles, space.n_targets())?;
    embed_qubits(&u.apply(&q)?, space)
}

/// `exp(-i H t)` of the 1-2 quarter pulse with phase `phi` (4x4).
pub fn pulse_unitary<T: Real>(phi: T, omega_r: T) -> Result<DMatrix<Cx<T>>> {
    let spec = PulseSpec::quarter_1_2(phi, omega_r);
    expm_hermitian(&local_resonant_pulse(&spec)?, spec.duration)
}

/// `exp(-i H_JC t)` on (cavity, control), cavity digit first.
pub fn jc_unitary<T: Real>(g: T, t: T, fock_cutoff: usize) -> Result<DMatrix<Cx<T>>> {
    let a = annihilation::<T>(fock_cutoff)?;
    let hop = a.adjoint().kronecker(&transition::<T>(CONTROL_LEVELS, 0, 1));
    let h = (&hop + hop.adjoint()) * re(g);
    expm_hermitian(&h, t)
}

/// `diag(1, 1, e^{i theta}, e^{-i theta})`: the effective Stark step.
pub fn stark_unitary<T: Real>(theta: T) -> DMatrix<Cx<T>> {
    let mut u = DMatrix::identity(TARGET_LEVELS, TARGET_LEVELS);
    u[(2, 2)] = phase(theta);
    u[(3, 3)] = phase(-theta);
    u
}

fn check_vacuum<T: Real>(psi: &StateVector<T>, space: &GateSpace) -> Result<()> {
    let layout = space.layout();
    let excited: T = psi
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(i, _)| layout.digit(*i, space.cavity()) > 0)
        .fold(T::zero(), |s, (_, a)| s + a.norm_sqr());
    if excited > T::tolerance() {
        return Err(Error::InvalidState(format!("cavity not in vacuum (photon population {excited})")));
    }
    let norm = psi.norm();
    if (norm - T::one()).abs() > T::tolerance() {
        return Err(Error::InvalidState(format!("initial state has norm {norm}")));
    }
    Ok(())
}

/// Runs steps (i)-(vii) on `initial` (a gate-space state with the control
/// atom). Effective modes return a pure state, the lossy mode a density
/// matrix.
pub fn run_protocol<T: Real>(
    initial: &StateVector<T>,
    params: &PhysicalParams<T>,
    noise: Option<&NoiseRates<T>>,
    mode: &SimulationMode<T>,
) -> Result<(QuantumState<T>, ProtocolTrace<T>)> {
    params.validate()?;
    mode.validate()?;
    let space = params.space(true)?;
    if initial.layout() != space.layout() {
        return Err(Error::Layout(format!(
            "initial state on {:?}, expected {:?}",
            initial.layout().dims(),
            space.layout().dims()
        )));
    }
    check_vacuum(initial, &space)?;
    let lossy = mode.kind == ModeKind::LossyFull;
    let noise = match (lossy, noise) {
        (true, None) => return Err(Error::Mode("lossy mode needs noise rates".into())),
        (true, Some(n)) => {
            n.validate()?;
            Some(n)
        }
        (false, Some(n)) if !n.is_zero() => {
            return Err(Error::Mode("effective modes are lossless; use the lossy mode with noise".into()))
        }
        _ => None,
    };
    if !lossy && params.delta_c == T::zero() {
        return Err(Error::InvalidParameter("cavity detuning must be nonzero".into()));
    }

    let (g_k, g_r) = match mode.kind {
        ModeKind::IdealEffective => (vec![params.g; params.n], params.g_r),
        _ => (params.g_k.clone(), params.g_r_actual),
    };
    let targets: Vec<usize> = space.targets().map(|(_, s)| s).collect();
    let cav_ctrl = [space.cavity(), space.control()?];
    let layout = space.layout();

    let pulse_minus = pulse_unitary(-T::frac_pi_2(), params.omega_r)?;
    let pulse_plus = pulse_unitary(T::frac_pi_2(), params.omega_r)?;
    let t_pulse = params.pulse_time();
    let t_disp = params.dispersive_time();

    let collapse = match noise {
        Some(n) => collapse_operators(n, &space)?,
        None => Vec::new(),
    };
    let transports = if lossy && mode.include_transport_decay { mode.transport_event_count } else { 0 };

    let mut trace = ProtocolTrace { entries: Vec::new(), integrator_steps: 0 };
    let mut state = if lossy { QuantumState::Mixed(initial.to_density()) } else { QuantumState::Pure(initial.clone()) };
    let mut elapsed = T::zero();
    let mut event = 0usize;
    trace.push("initial", &state, elapsed);

    let mut transport = |state: &mut QuantumState<T>, elapsed: &mut T, trace: &mut ProtocolTrace<T>| -> Result<()> {
        if event < transports {
            if let QuantumState::Mixed(r) = state {
                *state = QuantumState::Mixed(free_decay(r, &collapse, params.tau_m, &mode.evolution)?);
            }
            *elapsed += params.tau_m;
            trace.push(TRANSPORT_EVENTS[event], state, *elapsed);
        }
        event += 1;
        Ok(())
    };
    let pulses = |state: &QuantumState<T>, u: &DMatrix<Cx<T>>| -> Result<QuantumState<T>> {
        let mut s = state.clone();
        for &sub in &targets {
            s = s.apply_local(&[sub], u)?;
        }
        Ok(s)
    };
    let n3_angle = |scale: T| -> Vec<T> {
        (0..layout.total_dim())
            .map(|i| {
                let count = targets.iter().filter(|&&s| layout.digit(i, s) == 3).count();
                scale * T::from_usize(count).unwrap()
            })
            .collect()
    };
    let lindblad =
        |state: &QuantumState<T>, h: &Operator<T>, t: T, trace: &mut ProtocolTrace<T>| -> Result<QuantumState<T>> {
            let QuantumState::Mixed(r) = state else { unreachable!("lossy steps act on density matrices") };
            let (out, stats) = evolve_lindblad_with_stats(h, &collapse, t, r, &mode.evolution)?;
            trace.integrator_steps += stats.steps;
            Ok(QuantumState::Mixed(out))
        };
    let dispersive = |state: &QuantumState<T>, trace: &mut ProtocolTrace<T>| -> Result<QuantumState<T>> {
        if lossy {
            let h = dispersive_hamiltonian_full(params, &space)?;
            let out = lindblad(state, &h, t_disp, trace)?;
            // Back to the interaction picture: e^{i Delta_c N3 t}.
            out.rotate(&n3_angle(params.delta_c * t_disp))
        } else {
            // exp(+i t sum_k (g_k^2 / Delta_c) a^+ a |2><2|_k)
            let angle: Vec<T> = (0..layout.total_dim())
                .map(|i| {
                    let photons = T::from_usize(layout.digit(i, space.cavity())).unwrap();
                    let shift = targets
                        .iter()
                        .zip(&g_k)
                        .filter(|(&s, _)| layout.digit(i, s) == 2)
                        .fold(T::zero(), |acc, (_, &g)| acc + g * g / params.delta_c);
                    shift * photons * t_disp
                })
                .collect();
            state.rotate(&angle)
        }
    };

    // (i)
    transport(&mut state, &mut elapsed, &mut trace)?;
    state = pulses(&state, &pulse_minus)?;
    state = state.apply_local(&cav_ctrl, &jc_unitary(g_r, params.control_load_time(), space.fock_cutoff())?)?;
    elapsed += t_pulse.max(params.control_load_time());
    trace.push("(i)", &state, elapsed);
    transport(&mut state, &mut elapsed, &mut trace)?;

    // (ii)
    transport(&mut state, &mut elapsed, &mut trace)?;
    state = dispersive(&state, &mut trace)?;
    elapsed += t_disp;
    trace.push("(ii)", &state, elapsed);
    transport(&mut state, &mut elapsed, &mut trace)?;

    // (iii)
    state = pulses(&state, &pulse_plus)?;
    elapsed += t_pulse;
    trace.push("(iii)", &state, elapsed);

    // (iv)
    transport(&mut state, &mut elapsed, &mut trace)?;
    if lossy {
        let mut h = Operator::zeros(layout);
        for ((k, _), &w) in space.targets().zip(&params.omega_k) {
            h = h + offresonant_pulse_hamiltonian(w, params.delta, k, &space)?;
        }
        state = lindblad(&state, &h, params.tau, &mut trace)?;
        state = state.rotate(&n3_angle(params.delta * params.tau))?;
    } else {
        for (&sub, theta) in targets.iter().zip(params.stark_phases()?) {
            state = state.apply_local(&[sub], &stark_unitary(theta))?;
        }
    }
    elapsed += params.tau;
    trace.push("(iv)", &state, elapsed);
    transport(&mut state, &mut elapsed, &mut trace)?;

    // (v)
    state = pulses(&state, &pulse_minus)?;
    elapsed += t_pulse;
    trace.push("(v)", &state, elapsed);

    // (vi)
    transport(&mut state, &mut elapsed, &mut trace)?;
    state = dispersive(&state, &mut trace)?;
    elapsed += t_disp;
    trace.push("(vi)", &state, elapsed);
    transport(&mut state, &mut elapsed, &mut trace)?;

    // (vii)
    transport(&mut state, &mut elapsed, &mut trace)?;
    state = pulses(&state, &pulse_plus)?;
    state = state.apply_local(&cav_ctrl, &jc_unitary(g_r, params.control_unload_time(), space.fock_cutoff())?)?;
    elapsed += t_pulse.max(params.control_unload_time());
    trace.push("(vii)", &state, elapsed);
    transport(&mut state, &mut elapsed, &mut trace)?;

    Ok((state, trace))
}

/// Final state of the lossless protocol from `(|0> + |1>)/sqrt 2` on every
/// atom, kept in factored form.
///
/// The photon number is fixed during (ii)-(vi), so each target evolves
/// independently given it: `phi_k^(m) = P+ D_k^m P- S_k P+ D_k^m P- v` with
/// `v = (|0> + |1>)/sqrt 2`. With `c1, s1` and `c3, s3` the amplitudes of the
/// two control-cavity exchanges, the final state is
///
/// ```text
/// |0>_1|0>_c (x) Phi0 / sqrt 2
/// + |1>_1|0>_c (x) (c1 c3 Phi0 - s1 s3 Phi1) / sqrt 2
/// - i |0>_1|1>_c (x) (c1 s3 Phi0 + s1 c3 Phi1) / sqrt 2
/// ```
///
/// where `Phi_m` is the product of the `phi_k^(m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchProductState<T: Real> {
    pub c1: T,
    pub s1: T,
    pub c3: T,
    pub s3: T,
    /// Per-target four-level states, without photon and with one photon.
    pub phi: [Vec<DVector<Cx<T>>>; 2],
}

pub fn branch_product_final_state<T: Real>(
    params: &PhysicalParams<T>,
    angles: &GateAngles<T>,
    mode: &SimulationMode<T>,
) -> Result<BranchProductState<T>> {
    if mode.kind == ModeKind::LossyFull {
        return Err(Error::Mode("the branch product is lossless; use run_protocol for the lossy mode".into()));
    }
    params.validate()?;
    if angles.n() != params.n {
        return Err(Error::InvalidParameter(format!("{} phases for n = {}", angles.n(), params.n)));
    }
    if params.delta_c == T::zero() {
        return Err(Error::InvalidParameter("cavity detuning must be nonzero".into()));
    }
    let (g_k, g_r) = match mode.kind {
        ModeKind::IdealEffective => (vec![params.g; params.n], params.g_r),
        _ => (params.g_k.clone(), params.g_r_actual),
    };
    let minus = pulse_unitary(-T::frac_pi_2(), params.omega_r)?;
    let plus = pulse_unitary(T::frac_pi_2(), params.omega_r)?;
    let amp = re(T::FRAC_1_SQRT_2());
    let v = DVector::from_vec(vec![amp, amp, re(T::zero()), re(T::zero())]);
    let t_disp = params.dispersive_time();

    let mut phi: [Vec<DVector<Cx<T>>>; 2] = [Vec::new(), Vec::new()];
    for (&g, &theta) in g_k.iter().zip(angles.theta()) {
        let s = stark_unitary(theta);
        for (m, out) in phi.iter_mut().enumerate() {
            let mut d = DMatrix::identity(TARGET_LEVELS, TARGET_LEVELS);
            d[(2, 2)] = phase(g * g / params.delta_c * t_disp * T::from_usize(m).unwrap());
            let u = &plus * &d * &minus * &s * &plus * &d * &minus;
            out.push(u * &v);
        }
    }
    let a1 = g_r * params.control_load_time();
    let a3 = g_r * params.control_unload_time();
    Ok(BranchProductState { c1: a1.cos(), s1: a1.sin(), c3: a3.cos(), s3: a3.sin(), phi })
}

impl<T: Real> BranchProductState<T> {
    pub fn n(&self) -> usize {
        self.phi[0].len()
    }

    /// `<psi_id|psi>` with `psi_id` the ideal gate applied to the uniform
    /// initial state.
    pub fn overlap_with_ideal(&self, angles: &GateAngles<T>) -> Result<Cx<T>> {
        if angles.n() != self.n() {
            return Err(Error::InvalidParameter(format!("{} phases for n = {}", angles.n(), self.n())));
        }
        let amp = re(T::FRAC_1_SQRT_2());
        let mut p0 = re(T::one());
        let mut p1 = re(T::one());
        let mut q1 = re(T::one());
        for (k, &theta) in angles.theta().iter().enumerate() {
            let id1 = [amp, amp * phase(theta)];
            let (f0, f1) = (&self.phi[0][k], &self.phi[1][k]);
            p0 *= amp.conj() * f0[0] + amp.conj() * f0[1];
            p1 *= id1[0].conj() * f0[0] + id1[1].conj() * f0[1];
            q1 *= id1[0].conj() * f1[0] + id1[1].conj() * f1[1];
        }
        let half = re(T::lit(0.5));
        Ok(half * p0 + half * (p1 * re(self.c1 * self.c3) - q1 * re(self.s1 * self.s3)))
    }

    pub fn fidelity(&self, angles: &GateAngles<T>) -> Result<T> {
        Ok(self.overlap_with_ideal(angles)?.norm_sqr())
    }

    /// The full state vector on `space` (which must include the control).
    pub fn to_dense(&self, space: &GateSpace) -> Result<StateVector<T>> {
        if space.n_targets() != self.n() || !space.has_control() {
            return Err(Error::Layout("space does not match the branch state".into()));
        }
        let layout = space.layout();
        let targets: Vec<usize> = space.targets().map(|(_, s)| s).collect();
        let ctrl = space.control()?;
        let h = re(T::FRAC_1_SQRT_2());
        let mi = Cx::new(T::zero(), -T::one());
        let amps = DVector::from_fn(layout.total_dim(), |i, _| {
            let photons = layout.digit(i, space.cavity());
            let control = layout.digit(i, ctrl);
            let prod = |m: usize| {
                targets.iter().enumerate().fold(re(T::one()), |acc, (k, &s)| acc * self.phi[m][k][layout.digit(i, s)])
            };
            match (control, photons) {
                (0, 0) => prod(0) * h,
                (1, 0) => (prod(0) * re(self.c1 * self.c3) - prod(1) * re(self.s1 * self.s3)) * h,
                (0, 1) => (prod(0) * re(self.c1 * self.s3) + prod(1) * re(self.s1 * self.c3)) * mi * h,
                _ => re(T::zero()),
            }
        });
        StateVector::new(layout.clone(), amps)
    }
}

/// Nominal parameters for `n` targets with the Stark phases set to `angles`.
pub fn params_for_angles<T: Real>(angles: &GateAngles<T>, b: T) -> Result<PhysicalParams<T>> {
    PhysicalParams::nominal(angles.n(), b).with_stark_phases(angles.theta())
}
