//! Hamiltonians, collapse operators and parameter derivations for the
//! atom-cavity gate.
//!
//! # Frames
//!
//! The atom-cavity coupling in the interaction picture carries an explicit
//! `e^{-i Delta_c t}` on `a^+ sigma_23^-`. With `A = Delta_c N3`, where `N3`
//! counts atoms in `|3>`, the substitution `psi_I(t) = e^{i A t} phi(t)`
//! gives `i d(phi)/dt = (Delta_c N3 + g (a^+ sigma^- + sigma^+ a)) phi`,
//! which is time independent. Each step's clock starts at zero, so the
//! interaction-picture state after a step of length `t` is
//! `e^{i Delta_c N3 t}` applied to the static-frame state. The same
//! construction turns the off-resonant pulse coupling into
//! `Delta |3><3| + Omega (|2><3| + |3><2|)`.
//!
//! Every collapse operator lowers `N3` by a definite integer (or leaves it
//! alone), so `e^{i A t} c e^{-i A t}` is `c` times a phase and the
//! dissipators are unchanged by the frame change.
//!
//! All rates and frequencies are angular (rad/s).

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{annihilation, embed, transition, Operator, SpaceLayout};
use crate::scalar::{phase, re, Cx, Real};

/// Levels of a target atom.
pub const TARGET_LEVELS: usize = 4;
/// Levels of the control atom.
pub const CONTROL_LEVELS: usize = 2;

/// Composite space of the gate: cavity, targets `2..=n+1`, then the
/// control atom when present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateSpace {
    layout: SpaceLayout,
    n_targets: usize,
    fock_cutoff: usize,
    has_control: bool,
}

impl GateSpace {
    pub fn new(n_targets: usize, fock_cutoff: usize, has_control: bool) -> Result<Self> {
        if n_targets == 0 {
            return Err(Error::InvalidParameter("need at least one target atom".into()));
        }
        if fock_cutoff < 2 {
            return Err(Error::InvalidParameter(format!("cavity cutoff {fock_cutoff} < 2")));
        }
        let mut dims = vec![fock_cutoff];
        dims.extend(std::iter::repeat_n(TARGET_LEVELS, n_targets));
        if has_control {
            dims.push(CONTROL_LEVELS);
        }
        Ok(Self { layout: SpaceLayout::new(dims)?, n_targets, fock_cutoff, has_control })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn fock_cutoff(&self) -> usize {
        self.fock_cutoff
    }

    pub fn has_control(&self) -> bool {
        self.has_control
    }

    pub fn cavity(&self) -> usize {
        0
    }

    /// Subsystem index of target atom `k` (`2 <= k <= n+1`).
    pub fn target(&self, k: usize) -> Result<usize> {
        if k < 2 || k > self.n_targets + 1 {
            return Err(Error::InvalidParameter(format!("target atom {k} not in 2..={}", self.n_targets + 1)));
        }
        Ok(k - 1)
    }

    pub fn control(&self) -> Result<usize> {
        if self.has_control {
            Ok(self.n_targets + 1)
        } else {
            Err(Error::Layout("space has no control atom".into()))
        }
    }

    /// `(k, subsystem)` for each target atom.
    pub fn targets(&self) -> impl Iterator<Item = (usize, usize)> {
        (2..=self.n_targets + 1).map(|k| (k, k - 1))
    }

    /// Digit string for cavity level, target levels and control level.
    pub fn digits(&self, photons: usize, targets: &[usize], control: Option<usize>) -> Vec<usize> {
        let mut d = vec![photons];
        d.extend_from_slice(targets);
        if let Some(c) = control {
            d.push(c);
        }
        d
    }
}

/// Parameters of one gate run. Rates in rad/s, times in s.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalParams<T: Real> {
    pub n: usize,
    /// Nominal atom-cavity coupling; sets the dispersive step time.
    pub g: T,
    /// Actual coupling of targets `2..=n+1`.
    pub g_k: Vec<T>,
    pub g_r: T,
    pub g_r_actual: T,
    pub delta_c: T,
    pub delta: T,
    pub omega_r: T,
    pub omega_k: Vec<T>,
    pub tau: T,
    pub tau_m: T,
    /// `Delta_c / g = Delta / Omega_2` when the detunings were derived from it.
    pub b: Option<T>,
    pub fock_cutoff: usize,
}

impl<T: Real> PhysicalParams<T> {
    /// `2 pi x 50 kHz`
    pub fn reference_coupling() -> T {
        T::two_pi() * T::lit(5.0e4)
    }

    /// Ideal couplings, detunings set by `b`, every `Omega_k = g` (Stark
    /// phases `pi / 2`).
    pub fn nominal(n: usize, b: T) -> Self {
        let g = Self::reference_coupling();
        let omega_2 = g;
        let delta = b * omega_2;
        let tau = delta / (omega_2 * omega_2) * (T::two_pi() / T::lit(4.0));
        Self {
            n,
            g,
            g_k: vec![g; n],
            g_r: g,
            g_r_actual: g,
            delta_c: b * g,
            delta,
            omega_r: g,
            omega_k: vec![omega_2; n],
            tau,
            tau_m: T::lit(1.0e-6),
            b: Some(b),
            fock_cutoff: 2,
        }
    }

    /// Four-qubit QFT gate with 0.99 coupling deviations (`n = 3`).
    pub fn rydberg_qft(b: T) -> Self {
        Self::qft(3, b).with_deviation(T::lit(0.99))
    }

    /// QFT phase ladder on `n` targets with ideal couplings.
    pub fn qft(n: usize, b: T) -> Self {
        let mut p = Self::nominal(n, b);
        let (omegas, tau) = qft_parameters(n, p.g, p.delta).expect("positive preset values");
        p.omega_k = omegas;
        p.tau = tau;
        p
    }

    /// Scales every actual coupling by `factor`.
    pub fn with_deviation(mut self, factor: T) -> Self {
        self.g_k = vec![self.g * factor; self.n];
        self.g_r_actual = self.g_r * factor;
        self
    }

    /// Sets the step-(iv) Rabi frequencies so the Stark phases equal `thetas`
    /// at the current `tau` and `delta`. Clears `b`, since `Omega_2` no longer
    /// ties to the detuning.
    pub fn with_stark_phases(mut self, thetas: &[T]) -> Result<Self> {
        if thetas.len() != self.n {
            return Err(Error::InvalidParameter(format!("{} phases for {} targets", thetas.len(), self.n)));
        }
        if self.tau <= T::zero() || self.delta <= T::zero() {
            return Err(Error::InvalidParameter("tau and delta must be positive to set Stark phases".into()));
        }
        self.omega_k = thetas
            .iter()
            .map(|&th| {
                if th < T::zero() {
                    Err(Error::InvalidParameter(format!("negative Stark phase {th}")))
                } else {
                    Ok((th * self.delta / self.tau).sqrt())
                }
            })
            .collect::<Result<_>>()?;
        self.b = None;
        Ok(self)
    }

    /// Step-(iv) phases `Omega_k^2 tau / Delta`.
    pub fn stark_phases(&self) -> Result<Vec<T>> {
        self.omega_k.iter().map(|&w| stark_phase(w, self.tau, self.delta, false)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        if self.g_k.len() != self.n || self.omega_k.len() != self.n {
            return Err(Error::InvalidParameter(format!(
                "g_k has {} and omega_k has {} entries for n = {}",
                self.g_k.len(),
                self.omega_k.len(),
                self.n
            )));
        }
        let scalars = [
            ("g", self.g),
            ("g_r", self.g_r),
            ("g_r_actual", self.g_r_actual),
            ("delta_c", self.delta_c),
            ("delta", self.delta),
            ("omega_r", self.omega_r),
            ("tau", self.tau),
            ("tau_m", self.tau_m),
        ];
        for (name, v) in scalars {
            if !(v >= T::zero()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be >= 0")));
            }
        }
        if let Some(v) = self.g_k.iter().chain(&self.omega_k).find(|v| !(**v >= T::zero())) {
            return Err(Error::InvalidParameter(format!("negative coupling or Rabi frequency {v}")));
        }
        if self.fock_cutoff < 2 {
            return Err(Error::InvalidParameter(format!("cavity cutoff {} < 2", self.fock_cutoff)));
        }
        if let Some(b) = self.b {
            let tol = T::lit(1e-9);
            let rel = |a: T, e: T| (a - e).abs() <= tol * e.abs().max(T::one());
            if !rel(self.delta_c, b * self.g) || !rel(self.delta, b * self.omega_k[0]) {
                return Err(Error::InvalidParameter(format!(
                    "b = {b} inconsistent with delta_c = {}, delta = {}",
                    self.delta_c, self.delta
                )));
            }
        }
        Ok(())
    }

    /// Duration of steps (ii) and (vi): `pi Delta_c / g^2`.
    pub fn dispersive_time(&self) -> T {
        T::pi() * self.delta_c / (self.g * self.g)
    }

    /// Duration of the resonant 1-2 pulses: `pi / (4 Omega_r)`.
    pub fn pulse_time(&self) -> T {
        T::frac_pi_4() / self.omega_r
    }

    /// Control atom in the cavity during step (i): `pi / (2 g_r)`.
    pub fn control_load_time(&self) -> T {
        T::frac_pi_2() / self.g_r
    }

    /// Control atom in the cavity during step (vii): `3 pi / (2 g_r)`.
    pub fn control_unload_time(&self) -> T {
        T::lit(3.0) * T::frac_pi_2() / self.g_r
    }

    pub fn space(&self, has_control: bool) -> Result<GateSpace> {
        GateSpace::new(self.n, self.fock_cutoff, has_control)
    }
}

/// Atomic decay path `|from> -> |to>` of a target atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DecayPath {
    P32,
    P31,
    P30,
    P21,
    P20,
    P10,
}

impl DecayPath {
    pub const ALL: [DecayPath; 6] =
        [DecayPath::P32, DecayPath::P31, DecayPath::P30, DecayPath::P21, DecayPath::P20, DecayPath::P10];

    pub fn from_level(self) -> usize {
        match self {
            DecayPath::P32 | DecayPath::P31 | DecayPath::P30 => 3,
            DecayPath::P21 | DecayPath::P20 => 2,
            DecayPath::P10 => 1,
        }
    }

    pub fn to_level(self) -> usize {
        match self {
            DecayPath::P32 => 2,
            DecayPath::P31 | DecayPath::P21 => 1,
            DecayPath::P30 | DecayPath::P20 | DecayPath::P10 => 0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DecayPath::P32 => "32",
            DecayPath::P31 => "31",
            DecayPath::P30 => "30",
            DecayPath::P21 => "21",
            DecayPath::P20 => "20",
            DecayPath::P10 => "10",
        }
    }
}

/// Decay rates entering the master equation.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRates<T: Real> {
    pub kappa: T,
    pub gamma: BTreeMap<DecayPath, T>,
}

impl<T: Real> NoiseRates<T> {
    pub fn none() -> Self {
        Self { kappa: T::zero(), gamma: DecayPath::ALL.iter().map(|&p| (p, T::zero())).collect() }
    }

    /// Every path out of level `j` decays at `1 / lifetime_j`; the cavity at
    /// `1 / cavity_lifetime`.
    pub fn from_lifetimes(cavity_lifetime: T, lifetimes: [T; 3]) -> Result<Self> {
        let inv = |x: T| {
            if x > T::zero() {
                Ok(T::one() / x)
            } else {
                Err(Error::InvalidParameter(format!("lifetime {x} must be positive")))
            }
        };
        let mut gamma = BTreeMap::new();
        for p in DecayPath::ALL {
            gamma.insert(p, inv(lifetimes[p.from_level() - 1])?);
        }
        Ok(Self { kappa: inv(cavity_lifetime)?, gamma })
    }

    /// `kappa^-1 = gamma_1^-1 = gamma_2^-1 = gamma_3^-1 = 3e-2 s`.
    pub fn rydberg() -> Self {
        let l = T::lit(3.0e-2);
        Self::from_lifetimes(l, [l, l, l]).expect("positive lifetimes")
    }

    pub fn rate(&self, path: DecayPath) -> T {
        self.gamma.get(&path).copied().unwrap_or_else(T::zero)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= T::zero()) {
            return Err(Error::InvalidParameter(format!("kappa = {} must be >= 0", self.kappa)));
        }
        for (p, &r) in &self.gamma {
            if !(r >= T::zero()) {
                return Err(Error::InvalidParameter(format!("gamma_{} = {r} must be >= 0", p.label())));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.kappa == T::zero() && self.gamma.values().all(|&r| r == T::zero())
    }
}

/// Driven atomic transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transition {
    OneTwo,
    TwoThree,
}

/// Square classical pulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseSpec<T: Real> {
    pub transition: Transition,
    pub phase: T,
    pub rabi: T,
    pub duration: T,
}

impl<T: Real> PulseSpec<T> {
    /// `{omega_21, phi, pi / (4 Omega_r)}`
    pub fn quarter_1_2(phase: T, omega_r: T) -> Self {
        Self { transition: Transition::OneTwo, phase, rabi: omega_r, duration: T::frac_pi_4() / omega_r }
    }
}

fn check_params_space<T: Real>(params: &PhysicalParams<T>, space: &GateSpace) -> Result<()> {
    params.validate()?;
    if params.n != space.n_targets() {
        return Err(Error::Layout(format!(
            "params for n = {} on a space with {} targets",
            params.n,
            space.n_targets()
        )));
    }
    Ok(())
}

/// Static-frame form of the dispersive atom-cavity coupling:
/// `Delta_c sum_k |3><3|_k + sum_k g_k (a^+ |2><3|_k + |3><2|_k a)`.
pub fn dispersive_hamiltonian_full<T: Real>(params: &PhysicalParams<T>, space: &GateSpace) -> Result<Operator<T>> {
    check_params_space(params, space)?;
    let layout = space.layout();
    let a = embed(&annihilation::<T>(space.fock_cutoff())?, space.cavity(), layout)?;
    let a_dag = a.adjoint();
    let mut h = Operator::zeros(layout);
    for ((_, sub), &gk) in space.targets().zip(&params.g_k) {
        let n3 = embed(&transition(TARGET_LEVELS, 3, 3), sub, layout)?;
        let lower = embed(&transition(TARGET_LEVELS, 2, 3), sub, layout)?;
        let hop = a_dag.compose(&lower)?;
        h = h + n3.scale(re(params.delta_c)) + hop.add(&hop.adjoint())?.scale(re(gk));
    }
    Ok(h)
}

/// `-sum_k (g_k^2 / Delta_c) a^+ a |2><2|_k`
pub fn dispersive_hamiltonian_effective<T: Real>(params: &PhysicalParams<T>, space: &GateSpace) -> Result<Operator<T>> {
    check_params_space(params, space)?;
    if params.delta_c == T::zero() {
        return Err(Error::InvalidParameter("cavity detuning must be nonzero".into()));
    }
    let layout = space.layout();
    let a = annihilation::<T>(space.fock_cutoff())?;
    let number = embed(&(a.adjoint() * &a), space.cavity(), layout)?;
    let mut h = Operator::zeros(layout);
    for ((_, sub), &gk) in space.targets().zip(&params.g_k) {
        let n2 = embed(&transition(TARGET_LEVELS, 2, 2), sub, layout)?;
        h = h + number.compose(&n2)?.scale(re(-gk * gk / params.delta_c));
    }
    Ok(h)
}

/// Resonant control-atom coupling `g_r (a^+ |0><1|_1 + a |1><0|_1)`.
pub fn resonant_jc_hamiltonian<T: Real>(g_r_actual: T, space: &GateSpace) -> Result<Operator<T>> {
    let layout = space.layout();
    let ctrl = space.control()?;
    let a = embed(&annihilation::<T>(space.fock_cutoff())?, space.cavity(), layout)?;
    let lower = embed(&transition(CONTROL_LEVELS, 0, 1), ctrl, layout)?;
    let hop = a.adjoint().compose(&lower)?;
    Ok(hop.add(&hop.adjoint())?.scale(re(g_r_actual)))
}

/// `Omega (e^{-i phi} |2><1| + e^{i phi} |1><2|)` on a four-level atom.
pub fn local_resonant_pulse<T: Real>(pulse: &PulseSpec<T>) -> Result<DMatrix<Cx<T>>> {
    if pulse.transition != Transition::OneTwo {
        return Err(Error::InvalidParameter("resonant pulses drive the 1-2 transition".into()));
    }
    if !(pulse.duration >= T::zero()) {
        return Err(Error::InvalidParameter(format!("pulse duration {} < 0", pulse.duration)));
    }
    let mut h = DMatrix::zeros(TARGET_LEVELS, TARGET_LEVELS);
    h[(2, 1)] = phase(-pulse.phase) * pulse.rabi;
    h[(1, 2)] = phase(pulse.phase) * pulse.rabi;
    Ok(h)
}

/// Resonant 1-2 pulse on target atom `k`. The phase convention reproduces
/// the step transformations, e.g. `phi = -pi/2` for `pi / (4 Omega)` maps
/// `|1>` to `(|1> + |2>)/sqrt 2`.
pub fn resonant_pulse_hamiltonian<T: Real>(pulse: &PulseSpec<T>, k: usize, space: &GateSpace) -> Result<Operator<T>> {
    embed(&local_resonant_pulse(pulse)?, space.target(k)?, space.layout())
}

/// `Delta |3><3| + Omega (|2><3| + |3><2|)` on a four-level atom.
pub fn local_offresonant_pulse<T: Real>(omega_k: T, delta: T) -> DMatrix<Cx<T>> {
    let mut h = DMatrix::zeros(TARGET_LEVELS, TARGET_LEVELS);
    h[(3, 3)] = re(delta);
    h[(2, 3)] = re(omega_k);
    h[(3, 2)] = re(omega_k);
    h
}

/// Static-frame off-resonant 2-3 pulse on target atom `k`.
pub fn offresonant_pulse_hamiltonian<T: Real>(
    omega_k: T,
    delta: T,
    k: usize,
    space: &GateSpace,
) -> Result<Operator<T>> {
    embed(&local_offresonant_pulse(omega_k, delta), space.target(k)?, space.layout())
}

/// Large-detuning limit of the off-resonant pulse:
/// `(Omega^2 / Delta)(|3><3| - |2><2|)`.
pub fn stark_hamiltonian_effective<T: Real>(omega_k: T, delta: T, k: usize, space: &GateSpace) -> Result<Operator<T>> {
    if delta == T::zero() {
        return Err(Error::InvalidParameter("pulse detuning must be nonzero".into()));
    }
    let shift = omega_k * omega_k / delta;
    let mut h = DMatrix::zeros(TARGET_LEVELS, TARGET_LEVELS);
    h[(3, 3)] = re(shift);
    h[(2, 2)] = re(-shift);
    embed(&h, space.target(k)?, space.layout())
}

/// `Omega^2 t / Delta`, optionally reduced into `[0, 2 pi)`.
pub fn stark_phase<T: Real>(omega: T, t: T, delta: T, reduce: bool) -> Result<T> {
    if delta == T::zero() {
        return Err(Error::InvalidParameter("pulse detuning must be nonzero".into()));
    }
    let theta = omega * omega * t / delta;
    Ok(if reduce { crate::scalar::wrap_angle(theta) } else { theta })
}

/// Local collapse operators `sqrt(gamma_ji) |i><j|` of one target atom, in
/// [`DecayPath::ALL`] order.
pub fn local_target_collapse<T: Real>(noise: &NoiseRates<T>) -> Result<Vec<DMatrix<Cx<T>>>> {
    noise.validate()?;
    Ok(DecayPath::ALL
        .iter()
        .map(|&p| transition::<T>(TARGET_LEVELS, p.to_level(), p.from_level()) * re(noise.rate(p).sqrt()))
        .collect())
}

/// `sqrt(kappa) a`
pub fn local_cavity_collapse<T: Real>(noise: &NoiseRates<T>, fock_cutoff: usize) -> Result<DMatrix<Cx<T>>> {
    noise.validate()?;
    Ok(annihilation::<T>(fock_cutoff)? * re(noise.kappa.sqrt()))
}

/// `sqrt(kappa) a` followed by `sqrt(gamma_ji) |i><j|_k` for each target and
/// path. Rates are folded in unhalved; the dissipator is
/// `2 c rho c^+ - c^+ c rho - rho c^+ c`.
pub fn collapse_operators<T: Real>(noise: &NoiseRates<T>, space: &GateSpace) -> Result<Vec<Operator<T>>> {
    let layout = space.layout();
    let mut ops = vec![embed(&local_cavity_collapse(noise, space.fock_cutoff())?, space.cavity(), layout)?];
    let local = local_target_collapse(noise)?;
    for (_, sub) in space.targets() {
        for c in &local {
            ops.push(embed(c, sub, layout)?);
        }
    }
    Ok(ops)
}

/// `a^+ a + sum_k |3><3|_k`
pub fn excitation_number<T: Real>(space: &GateSpace) -> Result<Operator<T>> {
    let layout = space.layout();
    let a = annihilation::<T>(space.fock_cutoff())?;
    let mut n = embed(&(a.adjoint() * &a), space.cavity(), layout)?;
    for (_, sub) in space.targets() {
        n = n + embed(&transition(TARGET_LEVELS, 3, 3), sub, layout)?;
    }
    Ok(n)
}

/// Rabi frequencies `Omega_k = Omega_2 2^{-(k-2)/2}` and duration
/// `tau = (Delta / Omega_2^2)(2 pi / 4)` giving phases `2 pi / 2^k`.
pub fn qft_parameters<T: Real>(n: usize, omega_2: T, delta: T) -> Result<(Vec<T>, T)> {
    if n == 0 || !(omega_2 > T::zero()) || !(delta > T::zero()) {
        return Err(Error::InvalidParameter("need n >= 1, omega_2 > 0 and delta > 0".into()));
    }
    let ratio = T::FRAC_1_SQRT_2();
    let mut omegas = Vec::with_capacity(n);
    let mut w = omega_2;
    for _ in 0..n {
        omegas.push(w);
        w *= ratio;
    }
    let tau = delta / (omega_2 * omega_2) * (T::two_pi() / T::lit(4.0));
    Ok((omegas, tau))
}

/// `Q = omega_c / kappa`
pub fn required_quality_factor<T: Real>(omega_c: T, kappa: T) -> Result<T> {
    if !(kappa > T::zero()) {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} must be positive")));
    }
    Ok(omega_c / kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::StateVector;
    use crate::linalg::expm_hermitian;
    use crate::scalar::cx;
    use std::f64::consts::PI;

    fn evolve(h: &Operator<f64>, t: f64, psi: &StateVector<f64>) -> StateVector<f64> {
        let u = expm_hermitian(h.matrix(), t).unwrap();
        StateVector::new(psi.layout().clone(), u * psi.amplitudes()).unwrap()
    }

    fn close(a: &StateVector<f64>, b: &StateVector<f64>, tol: f64) -> bool {
        (a.amplitudes() - b.amplitudes()).camax() < tol
    }

    #[test]
    fn full_hamiltonian_decoupled_limit_is_diagonal() {
        let mut p = PhysicalParams::<f64>::nominal(2, 10.0);
        p.g_k = vec![0.0; 2];
        let space = p.space(false).unwrap();
        let h = dispersive_hamiltonian_full(&p, &space).unwrap();
        let n3 = embed(&transition(4, 3, 3), 1, space.layout()).unwrap()
            + embed(&transition(4, 3, 3), 2, space.layout()).unwrap();
        assert!((h.matrix() - n3.matrix() * re(p.delta_c)).camax() < 1e-9);
    }

    #[test]
    fn full_hamiltonian_single_target_couples_one_pair() {
        let p = PhysicalParams::<f64>::nominal(1, 10.0);
        let space = p.space(false).unwrap();
        let h = dispersive_hamiltonian_full(&p, &space).unwrap();
        assert_eq!(h.dim(), 8);
        assert!(h.is_hermitian(1e-12));
        let i = space.layout().index(&[1, 2]).unwrap();
        let j = space.layout().index(&[0, 3]).unwrap();
        assert_eq!(h.matrix()[(i, j)], re(p.g_k[0]));
        assert_eq!(h.matrix()[(j, i)], re(p.g_k[0]));
        let off: usize = h.matrix().iter().enumerate().filter(|(idx, z)| idx % 9 != 0 && z.norm() > 0.0).count();
        assert_eq!(off, 2);
    }

    #[test]
    fn full_dispersive_step_approaches_phase_flip() {
        let p = PhysicalParams::<f64>::nominal(1, 50.0);
        let space = p.space(false).unwrap();
        let h = dispersive_hamiltonian_full(&p, &space).unwrap();
        let psi = StateVector::basis(space.layout(), &[1, 2]).unwrap();
        let out = evolve(&h, p.dispersive_time(), &psi);
        let overlap = psi.scaled(re(-1.0)).inner(&out).unwrap();
        assert!(1.0 - overlap.norm_sqr() < 4.0 / (50.0 * 50.0));
        // Leading-order phase error is pi / b^2.
        assert!((overlap.arg().abs() - PI / 2500.0).abs() < 1e-4);
    }

    #[test]
    fn effective_hamiltonian_eigenvalues() {
        let p = PhysicalParams::<f64>::nominal(2, 10.0);
        let space = p.space(false).unwrap();
        let h = dispersive_hamiltonian_effective(&p, &space).unwrap();
        let l = space.layout();
        let i = l.index(&[1, 2, 0]).unwrap();
        assert!((h.matrix()[(i, i)].re + p.g * p.g / p.delta_c).abs() < 1e-9);
        for idx in 0..l.total_dim() {
            if l.digit(idx, 0) == 0 {
                assert_eq!(h.matrix()[(idx, idx)], re(0.0));
            }
        }
        let psi = StateVector::basis(l, &[1, 2, 1]).unwrap();
        let out = evolve(&h, p.dispersive_time(), &psi);
        assert!(close(&out, &psi.scaled(re(-1.0)), 1e-12));
        let mut bad = p.clone();
        bad.delta_c = 0.0;
        bad.b = None;
        assert!(dispersive_hamiltonian_effective(&bad, &space).is_err());
    }

    #[test]
    fn jc_step_transformations() {
        let p = PhysicalParams::<f64>::nominal(1, 10.0);
        let space = p.space(true).unwrap();
        let l = space.layout();
        let h = resonant_jc_hamiltonian(p.g_r, &space).unwrap();
        let load = evolve(&h, p.control_load_time(), &StateVector::basis(l, &[0, 0, 1]).unwrap());
        assert!(close(&load, &StateVector::basis(l, &[1, 0, 0]).unwrap().scaled(cx(0.0, -1.0)), 1e-12));
        let unload = evolve(&h, p.control_unload_time(), &StateVector::basis(l, &[1, 0, 0]).unwrap());
        assert!(close(&unload, &StateVector::basis(l, &[0, 0, 1]).unwrap().scaled(cx(0.0, 1.0)), 1e-12));
        let ground = StateVector::basis(l, &[0, 2, 0]).unwrap();
        assert!(close(&evolve(&h, 1.234e-5, &ground), &ground, 1e-14));
        assert!(resonant_jc_hamiltonian(p.g_r, &p.space(false).unwrap()).is_err());
    }

    #[test]
    fn pulse_phase_convention() {
        let space = GateSpace::new(1, 2, false).unwrap();
        let l = space.layout();
        let w = 1.3e5;
        let s = 0.5f64.sqrt();
        let ket = |a1: f64, a2: f64| {
            let b1 = StateVector::basis(l, &[0, 1]).unwrap();
            let b2 = StateVector::basis(l, &[0, 2]).unwrap();
            StateVector::new(l.clone(), b1.amplitudes() * re(a1) + b2.amplitudes() * re(a2)).unwrap()
        };
        let run = |phi: f64, psi: StateVector<f64>| {
            let pulse = PulseSpec::quarter_1_2(phi, w);
            let h = resonant_pulse_hamiltonian(&pulse, 2, &space).unwrap();
            evolve(&h, pulse.duration, &psi)
        };
        assert!(close(&run(-PI / 2.0, ket(1.0, 0.0)), &ket(s, s), 1e-12));
        assert!(close(&run(PI / 2.0, ket(s, -s)), &ket(0.0, -1.0), 1e-12));
        assert!(close(&run(-PI / 2.0, ket(0.0, 1.0)), &ket(-s, s), 1e-12));
        assert!(close(&run(PI / 2.0, ket(s, s)), &ket(1.0, 0.0), 1e-12));

        let wrong = PulseSpec { transition: Transition::TwoThree, phase: 0.0, rabi: w, duration: 1.0 };
        assert!(resonant_pulse_hamiltonian(&wrong, 2, &space).is_err());
    }

    #[test]
    fn offresonant_pulse_gives_stark_phase() {
        let space = GateSpace::new(1, 2, false).unwrap();
        let delta = 50.0 * 3.0e5;
        let omega = 3.0e5;
        let t = 1.7e-4;
        let h0 = offresonant_pulse_hamiltonian(0.0, delta, 2, &space).unwrap();
        let n3 = embed(&transition(4, 3, 3), 1, space.layout()).unwrap();
        assert!((h0.matrix() - n3.matrix() * re(delta)).camax() < 1e-9);
        let h = offresonant_pulse_hamiltonian(omega, delta, 2, &space).unwrap();
        assert!(h.is_hermitian(1e-12));
        let psi = StateVector::basis(space.layout(), &[0, 2]).unwrap();
        let out = evolve(&h, t, &psi);
        let theta = stark_phase(omega, t, delta, false).unwrap();
        let amp = psi.inner(&out).unwrap();
        let err = (amp - cx(theta.cos(), theta.sin())).norm();
        // O((Omega/Delta)^2) leakage plus the fourth-order shift Omega^4 t / Delta^3.
        assert!(err < 2e-3, "err {err}");
    }

    #[test]
    fn stark_phase_values() {
        let omega_2 = 3.0e5;
        let delta = 10.0 * omega_2;
        let tau = delta / (omega_2 * omega_2) * (2.0 * PI / 4.0);
        assert!((stark_phase(omega_2, tau, delta, false).unwrap() - PI / 2.0).abs() < 1e-12);
        let w3 = omega_2 / 2f64.sqrt();
        assert!((stark_phase(w3, tau, delta, false).unwrap() - PI / 4.0).abs() < 1e-12);
        assert_eq!(stark_phase(omega_2, 0.0, delta, false).unwrap(), 0.0);
        assert!(stark_phase(omega_2, 1.0, 0.0, false).is_err());
        let big = stark_phase(omega_2, 5.0 * tau, delta, true).unwrap();
        assert!((big - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn collapse_operator_list() {
        let noise = NoiseRates::<f64>::rydberg();
        let space = GateSpace::new(1, 2, false).unwrap();
        let ops = collapse_operators(&noise, &space).unwrap();
        assert_eq!(ops.len(), 7);
        let space3 = GateSpace::new(3, 2, true).unwrap();
        assert_eq!(collapse_operators(&noise, &space3).unwrap().len(), 19);

        let mut bad = noise.clone();
        bad.gamma.insert(DecayPath::P21, -1.0);
        assert!(collapse_operators(&bad, &space).is_err());
        bad = noise.clone();
        bad.kappa = -1.0;
        assert!(bad.validate().is_err());

        // tr(2 c rho c^+ - c^+ c rho - rho c^+ c) = 0
        let c = &ops[0];
        let l = space.layout();
        let rho = DMatrix::from_fn(8, 8, |i, j| cx(((i * 7 + j * 3) % 5) as f64, (i as f64) - (j as f64)));
        let cm = c.matrix();
        let d = cm * &rho * cm.adjoint() * re(2.0) - cm.adjoint() * cm * &rho - &rho * cm.adjoint() * cm;
        assert!(d.trace().norm() < 1e-12);
        assert_eq!(l.total_dim(), 8);
    }

    #[test]
    fn lifetimes_map_to_paths() {
        let noise = NoiseRates::<f64>::from_lifetimes(1.0, [2.0, 4.0, 8.0]).unwrap();
        assert_eq!(noise.kappa, 1.0);
        assert_eq!(noise.rate(DecayPath::P10), 0.5);
        assert_eq!(noise.rate(DecayPath::P20), 0.25);
        assert_eq!(noise.rate(DecayPath::P21), 0.25);
        assert_eq!(noise.rate(DecayPath::P31), 0.125);
        assert!(NoiseRates::<f64>::from_lifetimes(0.0, [1.0; 3]).is_err());
        assert!(NoiseRates::<f64>::none().is_zero());
    }

    #[test]
    fn qft_ladder() {
        let (w, tau) = qft_parameters(3, 2.0, 20.0).unwrap();
        let thetas: Vec<f64> = w.iter().map(|&x| stark_phase(x, tau, 20.0, false).unwrap()).collect();
        for (i, th) in thetas.iter().enumerate() {
            assert!((th - 2.0 * PI / 2f64.powi(i as i32 + 2)).abs() < 1e-12);
        }
        for pair in w.windows(2) {
            assert!((pair[1] / pair[0] - 0.5f64.sqrt()).abs() < 1e-15);
        }
        let (w1, tau1) = qft_parameters(1, 2.0, 20.0).unwrap();
        assert!((stark_phase(w1[0], tau1, 20.0, false).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!(qft_parameters(0, 2.0, 20.0).is_err());
        assert!(qft_parameters(2, 0.0, 20.0).is_err());
    }

    #[test]
    fn quality_factor() {
        let omega_c = 2.0 * PI * 50.9995e9;
        let q = required_quality_factor(omega_c, 1.0 / 3.0e-2).unwrap();
        assert!((q / 9.6e9 - 1.0).abs() < 0.02, "{q:e}");
        assert_eq!(required_quality_factor(7.0, 7.0).unwrap(), 1.0);
        let q2 = required_quality_factor(omega_c, 2.0 / 3.0e-2).unwrap();
        assert!((q2 * 2.0 / q - 1.0).abs() < 1e-15);
        assert!(required_quality_factor(1.0, 0.0).is_err());
    }

    #[test]
    fn params_validation() {
        let p = PhysicalParams::<f64>::rydberg_qft(10.0);
        p.validate().unwrap();
        assert!((p.g_k[0] / p.g - 0.99).abs() < 1e-15);
        let phases = p.stark_phases().unwrap();
        assert!((phases[1] - PI / 4.0).abs() < 1e-12 && (phases[2] - PI / 8.0).abs() < 1e-12);
        let mut bad = p.clone();
        bad.g_k.pop();
        assert!(bad.validate().is_err());
        let mut bad = p.clone();
        bad.delta_c *= 2.0;
        assert!(bad.validate().is_err());
        let mut bad = p.clone();
        bad.tau = -1.0;
        assert!(bad.validate().is_err());
        let set = PhysicalParams::<f64>::nominal(2, 10.0).with_stark_phases(&[1.0, 2.0]).unwrap();
        let th = set.stark_phases().unwrap();
        assert!((th[0] - 1.0).abs() < 1e-12 && (th[1] - 2.0).abs() < 1e-12);
    }
}
