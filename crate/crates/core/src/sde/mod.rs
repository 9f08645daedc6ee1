//! Euler-Maruyama integration of the regularized N-particle system
//!
//! ```text
//! dX_i = (1/N) Σ_{j≠i} F_ε(X_i − X_j) dt + √2 dB_i.
//! ```
//!
//! The diffusion is additive, so the scheme is exact in the noise and the
//! strong error comes only from the drift (order 1 under coupled
//! refinement). Noise is counter-based (see [`crate::rng`]): a run is fully
//! determined by (seed, parameters), coupled refinement reuses the same
//! fine Brownian lattice, and the fluctuation martingale
//! M_t = (2√2/N) Σ_{i≠j} ∫ F_ε(X_i − X_j)·dB_i is accumulated in-stream
//! from the same increments the integrator consumes.

use crate::error::{Error, Result};
use crate::kernel::{pairwise_forces, ForceMethod, KernelSpec};
use crate::pde::RadialField;
use crate::rng::{BrownianSource, Domain, NoiseSource, Philox};
use crate::stats::{self, DiagnosticsRow, FisherOptions};
use crate::vec3::{self, Vec3};

/// Positions of N particles plus the counter-based stream state (the seed
/// and the number of consumed steps).
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub positions: Vec<Vec3>,
    pub t: f64,
    pub seed: u64,
    pub step_index: u64,
}

impl ParticleEnsemble {
    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.iter().any(|p| !vec3::is_finite(*p)) {
            return Err(Error::InvalidInput("non-finite particle position".into()));
        }
        Ok(())
    }
}

/// Admissible initial densities. All built-in kinds are radial with finite
/// second moment, entropy, and Coulomb energy.
#[derive(Debug, Clone)]
pub enum InitialDensity {
    Gaussian { sigma: f64 },
    UniformBall { radius: f64 },
    /// Cell-averaged radial probability density (unit mass under 4πr²dr).
    RadialTable(RadialField),
}

impl InitialDensity {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialDensity::Gaussian { sigma } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidInput(format!("gaussian sigma {sigma}")));
                }
            }
            InitialDensity::UniformBall { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidInput(format!("ball radius {radius}")));
                }
            }
            InitialDensity::RadialTable(field) => {
                let mass = field.mass();
                if (mass - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidInput(format!(
                        "radial table mass {mass} is not 1 under 4πr²dr"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Radial density evaluator (all kinds are radial), for PDE initial data.
    pub fn radial_density(&self) -> Box<dyn Fn(f64) -> f64 + '_> {
        match self {
            InitialDensity::Gaussian { sigma } => Box::new(crate::pde::gaussian_radial(*sigma)),
            InitialDensity::UniformBall { radius } => {
                Box::new(crate::pde::uniform_ball_radial(*radius))
            }
            InitialDensity::RadialTable(field) => {
                let dr = field.dr();
                let cells = field.cells();
                Box::new(move |r: f64| {
                    if r >= field.r_max() {
                        0.0
                    } else {
                        field.values()[((r / dr) as usize).min(cells - 1)]
                    }
                })
            }
        }
    }

    /// Radius beyond which the tail mass is negligible (≲ 1e−9).
    pub fn support_radius(&self) -> f64 {
        match self {
            InitialDensity::Gaussian { sigma } => 6.5 * sigma,
            InitialDensity::UniformBall { radius } => *radius,
            InitialDensity::RadialTable(field) => field.r_max(),
        }
    }
}

/// Draw N i.i.d. samples from ρ₀; fully determined by the seed.
pub fn sample_initial(rho0: &InitialDensity, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    rho0.validate()?;
    if n < 1 {
        return Err(Error::InvalidInput("need at least one particle".into()));
    }
    let rng = Philox::new(seed);
    let positions: Vec<Vec3> = (0..n as u64)
        .map(|i| match rho0 {
            InitialDensity::Gaussian { sigma } => {
                vec3::scale(rng.normal3(Domain::InitialSample, i, 0), *sigma)
            }
            InitialDensity::UniformBall { radius } => {
                let r = radius * rng.uniform(Domain::InitialSample, i, 1, 0).cbrt();
                vec3::scale(unit_direction(&rng, i), r)
            }
            InitialDensity::RadialTable(field) => {
                let r = crate::pde::sample_radius(field, &rng, i);
                vec3::scale(unit_direction(&rng, i), r)
            }
        })
        .collect();
    Ok(ParticleEnsemble {
        positions,
        t: 0.0,
        seed,
        step_index: 0,
    })
}

fn unit_direction(rng: &Philox, particle: u64) -> Vec3 {
    let z = rng.normal3(Domain::InitialSample, particle, 0);
    let norm = vec3::norm(z);
    if norm == 0.0 {
        [1.0, 0.0, 0.0]
    } else {
        vec3::scale(z, 1.0 / norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy)]
pub struct StepPolicy {
    pub dt: f64,
    pub scheme: Scheme,
    /// Enforce dt·max|drift| ≤ ε/4 at every step.
    pub drift_cap_check: bool,
}

impl StepPolicy {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        Ok(StepPolicy {
            dt,
            scheme: Scheme::EulerMaruyama,
            drift_cap_check: true,
        })
    }
}

/// Default step rule dt = πε³: the worst-case drift 1/(4πε²) then moves a
/// particle at most ε/4 per step.
pub fn default_dt(epsilon: f64) -> f64 {
    std::f64::consts::PI * epsilon * epsilon * epsilon
}

/// Per-step byproducts the caller may fold into running functionals.
pub struct StepInfo {
    /// Mean-field drift rows used for the step.
    pub drift: Vec<Vec3>,
    pub max_drift: f64,
    /// Σ_i b_i·ΔB_i with the step's own increments (martingale quadrature).
    pub martingale_dot: f64,
}

/// Advance one Euler-Maruyama step: X ← X + b dt + √2 ΔB.
pub fn step(
    ens: &mut ParticleEnsemble,
    spec: &KernelSpec,
    policy: &StepPolicy,
    method: ForceMethod,
    noise: &dyn NoiseSource,
) -> Result<StepInfo> {
    ens.validate()?;
    let drift = pairwise_forces(&ens.positions, spec, method)?;
    let (max_drift, martingale_dot) = advance_with_drift(ens, &drift, spec, policy, noise)?;
    Ok(StepInfo {
        drift,
        max_drift,
        martingale_dot,
    })
}

fn advance_with_drift(
    ens: &mut ParticleEnsemble,
    drift: &[Vec3],
    spec: &KernelSpec,
    policy: &StepPolicy,
    noise: &dyn NoiseSource,
) -> Result<(f64, f64)> {
    let max_drift = drift.iter().map(|b| vec3::norm(*b)).fold(0.0, f64::max);
    if policy.drift_cap_check && policy.dt * max_drift > spec.epsilon / 4.0 {
        return Err(Error::StepSize(format!(
            "dt·max|drift| = {:.3e} exceeds ε/4 = {:.3e}; dt and ε are mismatched",
            policy.dt * max_drift,
            spec.epsilon / 4.0
        )));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut mart_dot = 0.0;
    for (i, x) in ens.positions.iter_mut().enumerate() {
        let db = noise.increment(i, ens.step_index, policy.dt);
        mart_dot += vec3::dot(drift[i], db);
        for c in 0..3 {
            x[c] += drift[i][c] * policy.dt + sqrt2 * db[c];
        }
    }
    ens.t += policy.dt;
    ens.step_index += 1;
    Ok((max_drift, mart_dot))
}

/// Minimum over unordered pairs of |x_i − x_j|.
pub fn min_pair_distance(positions: &[Vec3]) -> Result<f64> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "pair distance needs at least two particles".into(),
        ));
    }
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            best = best.min(vec3::dist(positions[i], positions[j]));
        }
    }
    Ok(best)
}

/// First sampled time at which the minimum pair distance drops to the
/// threshold, or None.
pub fn stopping_time(times: &[f64], min_dists: &[f64], threshold: f64) -> Option<f64> {
    times
        .iter()
        .zip(min_dists)
        .find(|(_, d)| **d <= threshold)
        .map(|(t, _)| *t)
}

/// Positions and drifts stored at the output cadence, plus the in-stream
/// martingale series. The drift snapshots use the run's own kernel.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub spec: KernelSpec,
    pub seed: u64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Vec3>>,
    pub drifts: Vec<Vec<Vec3>>,
    /// M_t at the stored times; None when the run disabled retention.
    pub martingale: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.positions.first().map(|p| p.len()).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsOptions {
    pub entropy: bool,
    pub fisher: bool,
    pub knn_k: usize,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        DiagnosticsOptions {
            entropy: true,
            fisher: false,
            knn_k: 4,
        }
    }
}

/// Full description of one simulation run.
#[derive(Debug, Clone)]
pub struct SimParams {
    pub n: usize,
    pub spec: KernelSpec,
    /// 0.0 requests the default rule dt = πε³.
    pub dt: f64,
    pub t_final: f64,
    /// Snapshots after t = 0 (the t = 0 state is always stored).
    pub outputs: usize,
    pub rho0: InitialDensity,
    pub seed: u64,
    pub method: ForceMethod,
    pub fine_substeps: u32,
    pub diagnostics: DiagnosticsOptions,
    /// Track the minimum pair distance at every step (collision scans).
    pub track_min_every_step: bool,
    pub drift_cap_check: bool,
}

impl SimParams {
    pub fn new(n: usize, epsilon: f64, t_final: f64, seed: u64) -> Result<Self> {
        Ok(SimParams {
            n,
            spec: KernelSpec::new(epsilon)?,
            dt: 0.0,
            t_final,
            outputs: 32,
            rho0: InitialDensity::Gaussian { sigma: 1.0 },
            seed,
            method: ForceMethod::Direct,
            fine_substeps: 1,
            diagnostics: DiagnosticsOptions::default(),
            track_min_every_step: false,
            drift_cap_check: true,
        })
    }

    pub fn effective_dt(&self) -> f64 {
        if self.dt > 0.0 {
            self.dt
        } else {
            default_dt(self.spec.epsilon)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rho0.validate()?;
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        if !(self.t_final >= 0.0) {
            return Err(Error::InvalidInput("t_final must be ≥ 0".into()));
        }
        if self.outputs == 0 {
            return Err(Error::InvalidInput("outputs must be ≥ 1".into()));
        }
        let dt = self.effective_dt();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt = {dt}")));
        }
        let cap = default_dt(self.spec.epsilon);
        if dt > cap * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "dt = {dt:.3e} violates the step rule dt ≤ πε³ = {cap:.3e}"
            )));
        }
        if self.fine_substeps == 0 {
            return Err(Error::InvalidInput("fine_substeps must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Everything a single run produces in memory.
pub struct SimulationOutput {
    pub trajectory: Trajectory,
    pub diagnostics: Vec<DiagnosticsRow>,
    /// (times, min pair distance) at every step when tracking was on.
    pub min_dist_series: Option<(Vec<f64>, Vec<f64>)>,
}

impl SimulationOutput {
    /// Stopping-time estimate from the densest available series.
    pub fn stopping_time(&self, threshold: f64) -> Option<f64> {
        if let Some((times, dists)) = &self.min_dist_series {
            stopping_time(times, dists, threshold)
        } else {
            let times: Vec<f64> = self.diagnostics.iter().map(|r| r.t).collect();
            let dists: Vec<f64> = self.diagnostics.iter().map(|r| r.min_dist).collect();
            stopping_time(&times, &dists, threshold)
        }
    }
}

/// Integrate one ensemble, storing snapshots and diagnostics at the output
/// cadence. Deterministic given (seed, params).
pub fn simulate(params: &SimParams) -> Result<SimulationOutput> {
    params.validate()?;
    let mut ens = sample_initial(&params.rho0, params.n, params.seed)?;
    let noise = BrownianSource::with_substeps(params.seed, params.fine_substeps);
    let (n_steps, dt) = if params.t_final == 0.0 {
        (0u64, 0.0)
    } else {
        let requested = params.effective_dt();
        let steps = (params.t_final / requested).ceil().max(1.0) as u64;
        (steps, params.t_final / steps as f64)
    };
    let policy = if n_steps > 0 {
        let mut p = StepPolicy::new(dt)?;
        p.drift_cap_check = params.drift_cap_check;
        p
    } else {
        StepPolicy {
            dt: 0.0,
            scheme: Scheme::EulerMaruyama,
            drift_cap_check: false,
        }
    };

    // snapshot step indices, evenly spread over [0, n_steps]
    let outputs = params.outputs.min(n_steps.max(1) as usize);
    let snapshot_steps: Vec<u64> = if n_steps == 0 {
        vec![0]
    } else {
        let mut s: Vec<u64> = (0..=outputs)
            .map(|j| (j as u128 * n_steps as u128 / outputs as u128) as u64)
            .collect();
        s.dedup();
        s
    };

    let mut trajectory = Trajectory {
        spec: params.spec,
        seed: params.seed,
        times: Vec::new(),
        positions: Vec::new(),
        drifts: Vec::new(),
        martingale: Some(Vec::new()),
    };
    let mut diagnostics = Vec::new();
    let mut min_series = if params.track_min_every_step {
        Some((Vec::new(), Vec::new()))
    } else {
        None
    };
    let mut martingale = 0.0;
    let two_sqrt2 = 2.0 * std::f64::consts::SQRT_2;
    let mut next_snapshot = 0usize;

    if let Some((times, dists)) = &mut min_series {
        if ens.n() >= 2 {
            times.push(0.0);
            dists.push(min_pair_distance(&ens.positions)?);
        }
    }
    for k in 0..=n_steps {
        let take_snapshot =
            next_snapshot < snapshot_steps.len() && snapshot_steps[next_snapshot] == k;
        let need_drift = take_snapshot || k < n_steps;
        if !need_drift {
            continue;
        }
        let drift = pairwise_forces(&ens.positions, &params.spec, params.method)?;
        if take_snapshot {
            push_snapshot(
                &mut trajectory,
                &mut diagnostics,
                params,
                ens.t,
                ens.positions.clone(),
                drift.clone(),
                martingale,
            )?;
            next_snapshot += 1;
        }
        if k < n_steps {
            let (_, mart_dot) = advance_with_drift(&mut ens, &drift, &params.spec, &policy, &noise)?;
            martingale += two_sqrt2 * mart_dot;
            if let Some((times, dists)) = &mut min_series {
                if ens.n() >= 2 {
                    times.push(ens.t);
                    dists.push(min_pair_distance(&ens.positions)?);
                }
            }
        }
    }
    Ok(SimulationOutput {
        trajectory,
        diagnostics,
        min_dist_series: min_series,
    })
}

fn push_snapshot(
    trajectory: &mut Trajectory,
    diagnostics: &mut Vec<DiagnosticsRow>,
    params: &SimParams,
    t: f64,
    positions: Vec<Vec3>,
    drift: Vec<Vec3>,
    martingale: f64,
) -> Result<()> {
    let row = diagnostics_row(params, t, &positions, martingale)?;
    diagnostics.push(row);
    trajectory.times.push(t);
    trajectory.positions.push(positions);
    trajectory.drifts.push(drift);
    if let Some(series) = &mut trajectory.martingale {
        series.push(martingale);
    }
    Ok(())
}

fn diagnostics_row(
    params: &SimParams,
    t: f64,
    positions: &[Vec3],
    martingale: f64,
) -> Result<DiagnosticsRow> {
    let n = positions.len();
    let spec = &params.spec;
    // single pair sweep for both energies and the minimum distance
    let mut energy = 0.0;
    let mut energy_moll = 0.0;
    let mut min_dist = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = vec3::sub(positions[i], positions[j]);
            let r = vec3::norm(d);
            if r == 0.0 {
                return Err(Error::Singularity(format!(
                    "coincident particles at t = {t} (exact-kernel energy)"
                )));
            }
            min_dist = min_dist.min(r);
            energy += 1.0 / (4.0 * std::f64::consts::PI * r);
            energy_moll += crate::kernel::mollified_potential(d, spec);
        }
    }
    let n2 = n as f64 * n as f64;
    let entropy_est = if params.diagnostics.entropy && n > params.diagnostics.knn_k {
        stats::entropy_knn(positions, params.diagnostics.knn_k, false)?
    } else {
        f64::NAN
    };
    let fisher_est = if params.diagnostics.fisher && n >= 1000 {
        stats::fisher_kde(positions, &FisherOptions::default())?
    } else {
        f64::NAN
    };
    Ok(DiagnosticsRow {
        t,
        energy: energy / n2,
        energy_mollified: energy_moll / n2,
        entropy_est,
        fisher_est,
        m2: stats::second_moment(positions),
        min_dist: if n >= 2 { min_dist } else { f64::NAN },
        martingale,
    })
}
