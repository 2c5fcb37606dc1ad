//! Fidelity sweeps, CSV output and the validation suite behind the CLI.
//!
//! Config files are flat `key = value` lines; `#` starts a comment and
//! lists are comma separated. Keys:
//!
//! | key                 | meaning                                         | default                  |
//! |---------------------|-------------------------------------------------|--------------------------|
//! | `n`                 | target counts (fig4, gate-check)                | `1..=15` / `1,2,3`       |
//! | `theta`             | explicit theta grid (rad)                       | unset                    |
//! | `theta_points`      | uniform grid on `[0, 2 pi]` when `theta` unset  | 201                      |
//! | `b`                 | detuning ratios (fig5)                          | 4,5,6,8,10,12,15,20,25,30,40 |
//! | `deviation`         | actual/nominal coupling ratio                   | 0.99                     |
//! | `preset`            | three-target QFT, Rydberg noise, deviation 0.99 | true                     |
//! | `targets`           | fig5 target count without the preset            | 3                        |
//! | `noise`             | `rydberg` or `none` without the preset          | rydberg                  |
//! | `fock_cutoff`       | cavity levels (fig5)                            | 3                        |
//! | `transport_decay`   | free decay at transport events                  | true                     |
//! | `transport_events`  | how many of the ten events                      | 10                       |
//! | `dt`                | largest integrator step (s)                     | 1e-5                     |
//! | `max_phase`         | phase cap per step (rad)                        | 3                        |
//! | `convergence_check` | rerun each fig5 point with halved steps         | false                    |
//! | `draws`             | random angle sets per n (gate-check)            | 20                       |
//! | `seed`              | RNG seed                                        | 20240611                 |
//! | `out`               | output path                                     | stdout                   |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{evolve_unitary, propagator, EvolutionConfig};
use crate::error::{Error, Result};
use crate::hilbert::{fidelity_pure, Operator, SpaceLayout, StateVector};
use crate::model::{
    dispersive_hamiltonian_effective, dispersive_hamiltonian_full, offresonant_pulse_hamiltonian,
    resonant_jc_hamiltonian, resonant_pulse_hamiltonian, GateSpace, NoiseRates, PhysicalParams, PulseSpec,
};
use crate::protocol::{
    branch_product_final_state, embed_qubits, ideal_final_state, ideal_gate_operator, params_for_angles, run_protocol,
    uniform_initial_state, GateAngles, QuantumState, SimulationMode,
};
use crate::scalar::{phase, re, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Fig4,
    Fig5,
    GateCheck,
    Validate,
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig4" => Ok(Self::Fig4),
            "fig5" => Ok(Self::Fig5),
            "gate-check" => Ok(Self::GateCheck),
            "validate" => Ok(Self::Validate),
            _ => Err(Error::Config(format!("unknown experiment '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub experiment: Experiment,
    pub n_values: Vec<usize>,
    pub theta: Option<Vec<f64>>,
    pub theta_points: usize,
    pub b_values: Vec<f64>,
    pub deviation: f64,
    pub preset: bool,
    pub targets: usize,
    pub noise_rydberg: bool,
    pub fock_cutoff: usize,
    pub transport_decay: bool,
    pub transport_events: usize,
    pub dt: f64,
    pub max_phase: f64,
    pub convergence_check: bool,
    pub draws: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

pub const DEFAULT_B_GRID: [f64; 11] = [4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 15.0, 20.0, 25.0, 30.0, 40.0];

impl SweepConfig {
    pub fn new(experiment: Experiment) -> Self {
        let evo = EvolutionConfig::<f64>::default();
        Self {
            experiment,
            n_values: match experiment {
                Experiment::GateCheck => vec![1, 2, 3],
                _ => (1..=15).collect(),
            },
            theta: None,
            theta_points: 201,
            b_values: DEFAULT_B_GRID.to_vec(),
            deviation: 0.99,
            preset: true,
            targets: 3,
            noise_rydberg: true,
            // Two photons appear after step (iv): see `run_validate`.
            fock_cutoff: 3,
            transport_decay: true,
            transport_events: 10,
            dt: evo.dt,
            max_phase: evo.max_phase_per_step,
            convergence_check: false,
            draws: 20,
            seed: 20240611,
            output: None,
        }
    }

    /// Defaults overridden by a config file's contents.
    pub fn from_text(experiment: Experiment, text: &str) -> Result<Self> {
        let mut cfg = Self::new(experiment);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{line}'", lineno + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(experiment: Experiment, path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_text(experiment, &text)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got '{kv}'")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n_values = parse_list(key, value)?,
            "theta" => self.theta = Some(parse_list(key, value)?),
            "theta_points" => self.theta_points = parse_one(key, value)?,
            "b" => self.b_values = parse_list(key, value)?,
            "deviation" => self.deviation = parse_one(key, value)?,
            "preset" => self.preset = parse_one(key, value)?,
            "targets" => self.targets = parse_one(key, value)?,
            "noise" => {
                self.noise_rydberg = match value {
                    "rydberg" => true,
                    "none" => false,
                    _ => return Err(Error::Config(format!("noise must be 'rydberg' or 'none', got '{value}'"))),
                }
            }
            "fock_cutoff" => self.fock_cutoff = parse_one(key, value)?,
            "transport_decay" => self.transport_decay = parse_one(key, value)?,
            "transport_events" => self.transport_events = parse_one(key, value)?,
            "dt" => self.dt = parse_one(key, value)?,
            "max_phase" => self.max_phase = parse_one(key, value)?,
            "convergence_check" => self.convergence_check = parse_one(key, value)?,
            "draws" => self.draws = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "out" => self.output = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return bad("n must be a nonempty list of positive integers".into());
        }
        if let Some(t) = &self.theta {
            if t.is_empty() || t.iter().any(|x| !x.is_finite()) {
                return bad("theta grid must be nonempty and finite".into());
            }
        } else if self.theta_points < 2 {
            return bad("theta_points must be at least 2".into());
        }
        if self.b_values.is_empty() || self.b_values.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return bad("b must be a nonempty list of positive numbers".into());
        }
        if !(self.deviation > 0.0 && self.deviation < 2.0) {
            return bad(format!("deviation {} outside (0, 2)", self.deviation));
        }
        if self.targets == 0 || self.fock_cutoff < 2 {
            return bad("targets must be >= 1 and fock_cutoff >= 2".into());
        }
        if self.transport_events > 10 {
            return bad(format!("transport_events = {} exceeds 10", self.transport_events));
        }
        if !(self.dt > 0.0) || !(self.max_phase > 0.0) {
            return bad("dt and max_phase must be positive".into());
        }
        if self.experiment == Experiment::GateCheck && self.n_values.iter().any(|&n| n > 3) {
            return bad("gate-check builds the dense space; n must be <= 3".into());
        }
        Ok(())
    }

    pub fn theta_grid(&self) -> Vec<f64> {
        match &self.theta {
            Some(t) => t.clone(),
            None => {
                let last = (self.theta_points - 1) as f64;
                (0..self.theta_points).map(|i| std::f64::consts::TAU * i as f64 / last).collect()
            }
        }
    }

    pub fn evolution<T: Real>(&self) -> EvolutionConfig<T> {
        EvolutionConfig { dt: T::lit(self.dt), max_phase_per_step: T::lit(self.max_phase) }
    }

    pub fn mode<T: Real>(&self) -> SimulationMode<T> {
        let mut m = SimulationMode::lossy();
        m.include_transport_decay = self.transport_decay;
        m.transport_event_count = self.transport_events;
        m.evolution = self.evolution();
        m
    }

    /// Parameters and noise of a fig5 point.
    pub fn fig5_setup<T: Real>(&self, b: f64) -> (PhysicalParams<T>, NoiseRates<T>) {
        let b = T::lit(b);
        let (mut p, noise) = if self.preset {
            (PhysicalParams::rydberg_qft(b), NoiseRates::rydberg())
        } else {
            let noise = if self.noise_rydberg { NoiseRates::rydberg() } else { NoiseRates::none() };
            (PhysicalParams::qft(self.targets, b).with_deviation(T::lit(self.deviation)), noise)
        };
        p.fock_cutoff = self.fock_cutoff;
        (p, noise)
    }
}

fn parse_one<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value.parse().map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value.split(',').map(|s| parse_one(key, s.trim())).collect()
}

/// `printf("%.12g")`.
pub fn format_g12(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rows of numbers with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| format_g12(x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|source| Error::Io { path: path.display().to_string(), source })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Branch-product fidelity for every `n` and theta, all targets sharing
/// theta. Rows are ordered by `(n, theta)`.
pub fn run_fig4<T: Real>(cfg: &SweepConfig) -> Result<Table> {
    cfg.validate()?;
    let grid = cfg.theta_grid();
    let mode = SimulationMode::<T>::deviated();
    let blocks: Vec<Result<Vec<Vec<f64>>>> = cfg
        .n_values
        .par_iter()
        .map(|&n| {
            // The effective dispersive phase does not depend on b.
            let p = PhysicalParams::<T>::nominal(n, T::lit(10.0)).with_deviation(T::lit(cfg.deviation));
            grid.iter()
                .map(|&theta| {
                    let angles = GateAngles::uniform(n, T::lit(theta))?;
                    let f = branch_product_final_state(&p, &angles, &mode)?.fidelity(&angles)?;
                    Ok(vec![n as f64, theta, f.as_f64()])
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for b in blocks {
        rows.extend(b?);
    }
    Ok(Table { columns: vec!["n", "theta", "fidelity"], rows })
}

/// One fig5 point with its integrator diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Fig5Point {
    pub b: f64,
    pub fidelity: f64,
    /// Largest `|tr rho - 1|` over the recorded snapshots.
    pub trace_drift: f64,
    /// Smallest eigenvalue over the recorded snapshots.
    pub min_eigenvalue: f64,
    pub integrator_steps: usize,
    /// `|F - F(halved steps)|` when the convergence check ran.
    pub refinement_change: Option<f64>,
}

impl Fig5Point {
    pub fn converged(&self) -> bool {
        self.refinement_change.is_none_or(|d| d < FIG5_REFINEMENT_TOL)
    }
}

pub const FIG5_REFINEMENT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Fig5Report {
    pub points: Vec<Fig5Point>,
}

impl Fig5Report {
    pub fn table(&self) -> Table {
        Table { columns: vec!["b", "fidelity"], rows: self.points.iter().map(|p| vec![p.b, p.fidelity]).collect() }
    }

    pub fn all_converged(&self) -> bool {
        self.points.iter().all(Fig5Point::converged)
    }
}

/// Lossy protocol fidelity at one `b`, against the lossless, deviation-free
/// ideal state.
pub fn fig5_point<T: Real>(cfg: &SweepConfig, b: f64, evolution: EvolutionConfig<T>) -> Result<Fig5Point> {
    let (p, noise) = cfg.fig5_setup::<T>(b);
    let space = p.space(true)?;
    let psi = uniform_initial_state::<T>(&space)?;
    let angles = GateAngles::new(p.stark_phases()?)?;
    let ideal = ideal_final_state(&psi, &angles, &space)?;
    let mut mode = cfg.mode::<T>();
    mode.evolution = evolution;
    let (out, trace) = run_protocol(&psi, &p, Some(&noise), &mode)?;
    let mut drift = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for e in &trace.entries {
        if let QuantumState::Mixed(r) = &e.state {
            drift = drift.max((r.trace().re - T::one()).abs().as_f64());
            min_eig = min_eig.min(r.min_eigenvalue().as_f64());
        }
    }
    Ok(Fig5Point {
        b,
        fidelity: out.fidelity(&ideal)?.as_f64(),
        trace_drift: drift,
        min_eigenvalue: min_eig,
        integrator_steps: trace.integrator_steps,
        refinement_change: None,
    })
}

pub fn run_fig5<T: Real>(cfg: &SweepConfig) -> Result<Fig5Report> {
    cfg.validate()?;
    let points: Vec<Result<Fig5Point>> = cfg
        .b_values
        .par_iter()
        .map(|&b| {
            let evo = cfg.evolution::<T>();
            let mut point = fig5_point::<T>(cfg, b, evo)?;
            if cfg.convergence_check {
                let fine = fig5_point::<T>(cfg, b, evo.refined())?;
                point.refinement_change = Some((fine.fidelity - point.fidelity).abs());
            }
            Ok(point)
        })
        .collect();
    Ok(Fig5Report { points: points.into_iter().collect::<Result<_>>()? })
}

/// Worst basis-state error for one set of angles.
#[derive(Clone, Debug, PartialEq)]
pub struct GateCheckCase {
    pub n: usize,
    pub theta: Vec<f64>,
    pub max_error: f64,
    /// Qubit bits (control first) of the input with the largest error.
    pub worst_input: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateCheckReport {
    pub cases: Vec<GateCheckCase>,
    pub tolerance: f64,
}

impl GateCheckReport {
    pub fn max_error(&self) -> f64 {
        self.cases.iter().fold(0.0, |m, c| m.max(c.max_error))
    }

    pub fn passed(&self) -> bool {
        self.max_error() < self.tolerance
    }
}

pub const GATE_CHECK_TOL: f64 = 1e-10;

/// Ideal-mode protocol against the ideal gate on every computational basis
/// input, allowing one global phase per angle set.
pub fn gate_equivalence<T: Real>(angles: &GateAngles<T>) -> Result<GateCheckCase> {
    let n = angles.n();
    let p = params_for_angles(angles, T::lit(10.0))?;
    let space = p.space(true)?;
    let gate = ideal_gate_operator(angles, n)?;
    let q = SpaceLayout::qubits(n + 1)?;
    let mode = SimulationMode::ideal();
    let mut global: Option<crate::scalar::Cx<T>> = None;
    let mut worst = (0.0f64, Vec::new());
    for idx in 0..q.total_dim() {
        let bits = q.digits(idx);
        let input = StateVector::basis(&q, &bits)?;
        let (out, _) = run_protocol(&embed_qubits(&input, &space)?, &p, None, &mode)?;
        let QuantumState::Pure(out) = out else {
            return Err(Error::Mode("ideal mode returned a mixed state".into()));
        };
        let expect = embed_qubits(&gate.apply(&input)?, &space)?;
        let ph = *global.get_or_insert_with(|| {
            let ov = expect.inner(&out).unwrap_or(re(T::one()));
            if ov.norm_sqr() > T::zero() {
                ov / ov.norm_sqr().sqrt()
            } else {
                re(T::one())
            }
        });
        let err = (out.amplitudes() - expect.amplitudes() * ph).camax().as_f64();
        if err >= worst.0 {
            worst = (err, bits);
        }
    }
    Ok(GateCheckCase {
        n,
        theta: angles.theta().iter().map(|t| t.as_f64()).collect(),
        max_error: worst.0,
        worst_input: worst.1,
    })
}

pub fn run_gate_check<T: Real>(cfg: &SweepConfig) -> Result<GateCheckReport> {
    cfg.validate()?;
    if cfg.n_values.iter().any(|&n| n > 3) {
        return Err(Error::Config("gate-check builds the dense space; n must be <= 3".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut all = Vec::new();
    for &n in &cfg.n_values {
        all.push(GateAngles::<T>::qft(n)?);
        all.push(GateAngles::uniform(n, T::zero())?);
        all.push(GateAngles::uniform(n, T::pi())?);
        for _ in 0..cfg.draws {
            all.push(GateAngles::random(n, &mut rng)?);
        }
    }
    let cases: Vec<Result<GateCheckCase>> = all.par_iter().map(gate_equivalence).collect();
    Ok(GateCheckReport { cases: cases.into_iter().collect::<Result<_>>()?, tolerance: GATE_CHECK_TOL })
}

/// `1 - |<psi_eff|psi_full>|^2` after one dispersive step on `|1>_c |2>`
/// (single target, ideal coupling).
pub fn dispersive_step_infidelity<T: Real>(b: T) -> Result<T> {
    let p = PhysicalParams::<T>::nominal(1, b);
    let space = GateSpace::new(1, p.fock_cutoff, false)?;
    let psi = StateVector::basis(space.layout(), &space.digits(1, &[2], None))?;
    let t = p.dispersive_time();
    let full = evolve_unitary(&dispersive_hamiltonian_full(&p, &space)?, t, &psi)?;
    // Back to the interaction picture.
    let layout = space.layout();
    let sub = space.target(2)?;
    let amps = nalgebra::DVector::from_fn(layout.total_dim(), |i, _| {
        let n3 = if layout.digit(i, sub) == 3 { T::one() } else { T::zero() };
        full.amplitudes()[i] * phase(p.delta_c * n3 * t)
    });
    let full = StateVector::new(layout.clone(), amps)?;
    let eff = evolve_unitary(&dispersive_hamiltonian_effective(&p, &space)?, t, &psi)?;
    Ok(T::one() - fidelity_pure(&eff, &full)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        s
    }
}

/// Hamiltonians the protocol builds, for the structural checks.
fn protocol_hamiltonians<T: Real>(p: &PhysicalParams<T>) -> Result<Vec<(&'static str, Operator<T>)>> {
    let space = p.space(true)?;
    let mut hs = vec![
        ("dispersive (full)", dispersive_hamiltonian_full(p, &space)?),
        ("dispersive (effective)", dispersive_hamiltonian_effective(p, &space)?),
        ("control exchange", resonant_jc_hamiltonian(p.g_r_actual, &space)?),
    ];
    for (k, _) in space.targets() {
        hs.push((
            "1-2 pulse",
            resonant_pulse_hamiltonian(&PulseSpec::quarter_1_2(-T::frac_pi_2(), p.omega_r), k, &space)?,
        ));
        hs.push(("2-3 pulse", offresonant_pulse_hamiltonian(p.omega_k[k - 2], p.delta, k, &space)?));
    }
    Ok(hs)
}

pub fn run_validate<T: Real>(cfg: &SweepConfig) -> Result<ValidationReport> {
    cfg.validate()?;
    let mut checks = Vec::new();
    let (p, _) = cfg.fig5_setup::<T>(10.0);

    let hs = protocol_hamiltonians(&p)?;
    let herm = hs.iter().fold(0.0f64, |m, (_, h)| m.max((h.hermiticity_error() / h.max_abs().max(T::one())).as_f64()));
    checks.push(Check {
        name: "hermiticity",
        passed: herm < 1e-12,
        detail: format!("max relative deviation {herm:.3e}"),
    });

    let mut unit = 0.0f64;
    for (_, h) in &hs {
        unit = unit.max(propagator(h, p.dispersive_time())?.unitarity_error().as_f64());
    }
    checks.push(Check { name: "unitarity", passed: unit < 1e-10, detail: format!("max |U^+U - I| {unit:.3e}") });

    // Negative control: a non-Hermitian generator must be refused.
    let mut bad = hs[0].1.matrix().clone();
    bad[(0, 1)] += re(T::one());
    let bad = Operator::from_matrix(hs[0].1.layout().clone(), bad)?;
    let psi0 = uniform_initial_state::<T>(&p.space(true)?)?;
    let refused = matches!(evolve_unitary(&bad, T::one(), &psi0), Err(Error::NotHermitian { .. }));
    checks.push(Check {
        name: "non-Hermitian rejected",
        passed: refused,
        detail: if refused { "injected H refused".into() } else { "injected H accepted".into() },
    });

    let base = fig5_point::<T>(cfg, 10.0, cfg.evolution())?;
    checks.push(Check {
        name: "trace preservation",
        passed: base.trace_drift < 1e-8,
        detail: format!("max |tr - 1| {:.3e} at b = 10", base.trace_drift),
    });
    checks.push(Check {
        name: "positivity",
        passed: base.min_eigenvalue >= -1e-8,
        detail: format!("min eigenvalue {:.3e} at b = 10", base.min_eigenvalue),
    });

    let fine = fig5_point::<T>(cfg, 10.0, cfg.evolution::<T>().refined())?;
    let d = (fine.fidelity - base.fidelity).abs();
    checks.push(Check {
        name: "dt convergence",
        passed: d < 1e-6,
        detail: format!("|dF| {d:.3e} on halving at b = 10"),
    });

    // The square Stark pulse leaves ~1% in |3>, and with the photon present
    // step (vi) couples |1>_c|3> to |2>_c|2>. Two cavity levels miss this
    // (|dF| ~ 3e-5 at b = 10); three are converged.
    let mut wider = cfg.clone();
    wider.fock_cutoff = cfg.fock_cutoff.max(2) + 1;
    let w = fig5_point::<T>(&wider, 10.0, cfg.evolution())?;
    let d = (w.fidelity - base.fidelity).abs();
    checks.push(Check {
        name: "cavity truncation",
        passed: d < 1e-6,
        detail: format!("|F(d_c={}) - F(d_c={})| {d:.3e}", cfg.fock_cutoff, wider.fock_cutoff),
    });

    let bs = [10.0, 20.0, 40.0, 80.0];
    let inf: Vec<f64> =
        bs.iter().map(|&b| dispersive_step_infidelity(T::lit(b)).map(|x| x.as_f64())).collect::<Result<_>>()?;
    let mono = inf.windows(2).all(|w| w[1] < w[0]);
    checks.push(Check {
        name: "effective-model convergence",
        passed: mono,
        detail: inf.iter().zip(bs).map(|(x, b)| format!("b={b}: {x:.3e}")).collect::<Vec<_>>().join(", "),
    });

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    for n in 1..=3usize {
        for _ in 0..3 {
            let angles = GateAngles::<T>::random(n, &mut rng)?;
            let dev = T::lit(0.95 + 0.05 * rand::Rng::gen::<f64>(&mut rng));
            let pp = params_for_angles(&angles, T::lit(10.0))?.with_deviation(dev);
            let space = pp.space(true)?;
            let psi = uniform_initial_state::<T>(&space)?;
            let mode = SimulationMode::deviated();
            let (dense, _) = run_protocol(&psi, &pp, None, &mode)?;
            let QuantumState::Pure(dense) = dense else { unreachable!() };
            let bp = branch_product_final_state(&pp, &angles, &mode)?.to_dense(&space)?;
            worst = worst.max((bp.amplitudes() - dense.amplitudes()).camax().as_f64());
        }
    }
    checks.push(Check {
        name: "branch product vs dense",
        passed: worst < 1e-10,
        detail: format!("max amplitude error {worst:.3e}"),
    });

    let mut gate = 0.0f64;
    for n in 1..=3usize {
        gate = gate.max(gate_equivalence(&GateAngles::<T>::random(n, &mut rng)?)?.max_error);
    }
    checks.push(Check {
        name: "gate equivalence",
        passed: gate < GATE_CHECK_TOL,
        detail: format!("max error {gate:.3e} (n = 1..3)"),
    });

    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g12_formatting() {
        assert_eq!(format_g12(0.0), "0");
        assert_eq!(format_g12(1.0), "1");
        assert_eq!(format_g12(15.0), "15");
        assert_eq!(format_g12(0.5), "0.5");
        assert_eq!(format_g12(std::f64::consts::PI), "3.14159265359");
        assert_eq!(format_g12(0.999999999999), "0.999999999999");
        assert_eq!(format_g12(0.9999999999999), "1");
        assert_eq!(format_g12(1.5e-5), "1.5e-05");
        assert_eq!(format_g12(-2.0e13), "-2e+13");
        assert_eq!(format_g12(123456789012.0), "123456789012");
        assert_eq!(format_g12(0.0001), "0.0001");
    }

    #[test]
    fn config_parsing() {
        let text =
            "# sweep\nn = 1, 2,3\ntheta_points = 11  # coarse\n\nb=4,10\nnoise = none\nconvergence_check = true\n";
        let cfg = SweepConfig::from_text(Experiment::Fig4, text).unwrap();
        assert_eq!(cfg.n_values, vec![1, 2, 3]);
        assert_eq!(cfg.theta_grid().len(), 11);
        assert_eq!(cfg.b_values, vec![4.0, 10.0]);
        assert!(!cfg.noise_rydberg && cfg.convergence_check);
        assert!(SweepConfig::from_text(Experiment::Fig4, "bogus = 1").is_err());
        assert!(SweepConfig::from_text(Experiment::Fig4, "n = one").is_err());
        assert!(SweepConfig::from_text(Experiment::Fig4, "just words").is_err());

        let mut cfg = SweepConfig::new(Experiment::Fig4);
        cfg.apply_override("deviation=2.5").unwrap();
        assert!(cfg.validate().is_err());
        cfg.apply_override("deviation=0.5").unwrap();
        cfg.apply_override("n=").unwrap_err();
        cfg.validate().unwrap();
        let g = cfg.theta_grid();
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], 0.0);
        assert!((g[200] - std::f64::consts::TAU).abs() < 1e-15);
    }

    #[test]
    fn fig4_small_sweep() {
        let mut cfg = SweepConfig::new(Experiment::Fig4);
        cfg.set("n", "1,2").unwrap();
        cfg.set("theta_points", "5").unwrap();
        let t = run_fig4::<f64>(&cfg).unwrap();
        assert_eq!(t.rows.len(), 10);
        let csv = t.to_csv();
        assert!(csv.starts_with("n,theta,fidelity\n"));
        assert_eq!(csv.matches('\n').count(), 11);
        assert_eq!(csv, run_fig4::<f64>(&cfg).unwrap().to_csv());
        cfg.set("deviation", "1").unwrap();
        let t = run_fig4::<f64>(&cfg).unwrap();
        assert!(t.column("fidelity").unwrap().iter().all(|f| (f - 1.0).abs() < 1e-12));
    }

    #[test]
    fn dispersive_error_shrinks() {
        let a = dispersive_step_infidelity(10.0f64).unwrap();
        let b = dispersive_step_infidelity(20.0f64).unwrap();
        assert!(b < a && a < 1e-2);
    }

    #[test]
    fn gate_check_rejects_large_n() {
        let mut cfg = SweepConfig::new(Experiment::GateCheck);
        cfg.set("n", "4").unwrap();
        assert!(run_gate_check::<f64>(&cfg).is_err());
    }
}
