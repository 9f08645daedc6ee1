//! Weak-form residual of the empirical measure, the fluctuation martingale,
//! and the discrete work integral.
//!
//! For a trajectory of the regularized system and a C² test function φ, the
//! symmetrized residual is
//!
//! ```text
//! K_ψ(μ^N) = (1/N²) Σ_{i,j} [ φ(X_t^i) − φ(X_0^i)
//!            − ½∫₀ᵗ (∇φ(X_s^i) − ∇φ(X_s^j))·F(X_s^i − X_s^j) ds
//!            − ∫₀ᵗ Δφ(X_s^i) ds ].
//! ```
//!
//! Using the oddness of F, the pair term collapses to the mean-field drift:
//! ½ Σ_{i,j}(∇φ_i − ∇φ_j)·F(X_i−X_j) = N Σ_i ∇φ_i·b_i, so the residual is
//! evaluated in O(N) per quadrature time from stored drift rows; the tests
//! pin this against the literal O(N²) double sum. Time integrals use the
//! trapezoid rule on the trajectory's stored grid.

use crate::error::{Error, Result};
use crate::kernel::{coulomb_force, pairwise_forces, ForceMethod, Kernel, KernelSpec};
use crate::sde::Trajectory;
use crate::vec3::{self, Vec3};

/// Bounded C² test functions with analytic gradient and Laplacian.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TestFunction {
    /// exp(−|x−c|²/(2w²))
    GaussianBump { center: Vec3, width: f64 },
    /// (1 − |x−c|²/R²)³ inside the ball of radius R, zero outside
    PolynomialTaper { center: Vec3, radius: f64 },
    /// g·x (unbounded; used for exact-zero checks only)
    Linear { gradient: Vec3 },
    Constant { value: f64 },
}

impl TestFunction {
    pub fn value(&self, x: Vec3) -> f64 {
        match self {
            TestFunction::GaussianBump { center, width } => {
                let u = vec3::norm_sq(vec3::sub(x, *center));
                (-0.5 * u / (width * width)).exp()
            }
            TestFunction::PolynomialTaper { center, radius } => {
                let u = vec3::norm_sq(vec3::sub(x, *center)) / (radius * radius);
                if u >= 1.0 {
                    0.0
                } else {
                    let w = 1.0 - u;
                    w * w * w
                }
            }
            TestFunction::Linear { gradient } => vec3::dot(*gradient, x),
            TestFunction::Constant { value } => *value,
        }
    }

    pub fn gradient(&self, x: Vec3) -> Vec3 {
        match self {
            TestFunction::GaussianBump { center, width } => {
                let d = vec3::sub(x, *center);
                let w2 = width * width;
                vec3::scale(d, -self.value(x) / w2)
            }
            TestFunction::PolynomialTaper { center, radius } => {
                let d = vec3::sub(x, *center);
                let u = vec3::norm_sq(d) / (radius * radius);
                if u >= 1.0 {
                    vec3::ZERO
                } else {
                    let w = 1.0 - u;
                    vec3::scale(d, -6.0 * w * w / (radius * radius))
                }
            }
            TestFunction::Linear { gradient } => *gradient,
            TestFunction::Constant { .. } => vec3::ZERO,
        }
    }

    pub fn laplacian(&self, x: Vec3) -> f64 {
        match self {
            TestFunction::GaussianBump { center, width } => {
                let u = vec3::norm_sq(vec3::sub(x, *center));
                let w2 = width * width;
                self.value(x) * (u / (w2 * w2) - 3.0 / w2)
            }
            TestFunction::PolynomialTaper { center, radius } => {
                let r2 = radius * radius;
                let u = vec3::norm_sq(vec3::sub(x, *center)) / r2;
                if u >= 1.0 {
                    0.0
                } else {
                    let w = 1.0 - u;
                    // Δ(1−u)³ with u = r²/R²: 24u(1−u)/R² − 18(1−u)²/R²
                    (24.0 * u * w - 18.0 * w * w) / r2
                }
            }
            TestFunction::Linear { .. } | TestFunction::Constant { .. } => 0.0,
        }
    }

    /// sup-norm bound on the Hessian (spectral norm), closed form per kind.
    pub fn hessian_norm_bound(&self) -> f64 {
        match self {
            TestFunction::GaussianBump { width, .. } => 1.0 / (width * width),
            TestFunction::PolynomialTaper { radius, .. } => 6.0 / (radius * radius),
            TestFunction::Linear { .. } | TestFunction::Constant { .. } => 0.0,
        }
    }

    pub fn id(&self) -> String {
        match self {
            TestFunction::GaussianBump { center, width } => format!(
                "bump(c=[{:.3},{:.3},{:.3}],w={:.3})",
                center[0], center[1], center[2], width
            ),
            TestFunction::PolynomialTaper { center, radius } => format!(
                "taper(c=[{:.3},{:.3},{:.3}],R={:.3})",
                center[0], center[1], center[2], radius
            ),
            TestFunction::Linear { gradient } => format!(
                "linear([{:.3},{:.3},{:.3}])",
                gradient[0], gradient[1], gradient[2]
            ),
            TestFunction::Constant { value } => format!("const({value:.3})"),
        }
    }
}

/// Five gaussian bumps with centers on a fixed icosahedral-direction pattern
/// scaled to the cloud size and alternating widths {0.5, 1.0}·scale.
pub fn standard_battery(scale: f64) -> Vec<TestFunction> {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let norm = (1.0 + phi * phi).sqrt();
    let dirs = [
        [0.0, 1.0 / norm, phi / norm],
        [1.0 / norm, phi / norm, 0.0],
        [phi / norm, 0.0, 1.0 / norm],
        [0.0, -1.0 / norm, phi / norm],
    ];
    let mut battery = vec![TestFunction::GaussianBump {
        center: vec3::ZERO,
        width: scale,
    }];
    for (k, d) in dirs.iter().enumerate() {
        let width = if k % 2 == 0 { 0.5 } else { 1.0 } * scale;
        battery.push(TestFunction::GaussianBump {
            center: vec3::scale(*d, scale),
            width,
        });
    }
    battery
}

/// (∇φ(x) − ∇φ(y))·F(x − y); the symmetrization bounds it by
/// 2‖∇²φ‖_∞ |x−y| |F(x−y)| ≤ 2‖∇²φ‖_∞/(4π|x−y|).
pub fn symmetrized_pair_integrand(
    x: Vec3,
    y: Vec3,
    phi: &TestFunction,
    kernel: Kernel,
) -> Result<f64> {
    let diff = vec3::sub(x, y);
    if let Kernel::Mollified(_) = kernel {
        if diff == vec3::ZERO {
            return Ok(0.0);
        }
    }
    let force = kernel.force(diff)?;
    Ok(vec3::dot(vec3::sub(phi.gradient(x), phi.gradient(y)), force))
}

/// One weak-residual evaluation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct WeakResidualReport {
    pub n: usize,
    /// Mollification radius of the requested kernel; None for the exact one.
    pub epsilon: Option<f64>,
    /// Mollification radius the trajectory was integrated with.
    pub dynamics_epsilon: f64,
    pub t: f64,
    pub seed: u64,
    pub phi: String,
    pub value: f64,
    /// Residual of the dynamics' own kernel (a pure martingale in law).
    pub ito_martingale_part: f64,
    /// Pair-term difference between the requested and the dynamics kernel.
    pub mollification_gap_part: f64,
}

/// Evaluate K_ψ(μ^N) at a stored time with the requested kernel.
pub fn weak_residual(
    trajectory: &Trajectory,
    phi: &TestFunction,
    kernel: Kernel,
    t: f64,
) -> Result<WeakResidualReport> {
    let idx = locate_time(trajectory, t)?;
    if idx < 1 {
        return Err(Error::InvalidInput(
            "insufficient quadrature times before t".into(),
        ));
    }
    let n = trajectory.n();
    let inv_n = 1.0 / n as f64;
    let times = &trajectory.times[..=idx];

    // per-time integrands: s(t_k) = (1/N)Σ ∇φ(X_i)·b_i, l(t_k) = (1/N)ΣΔφ(X_i)
    let mut pair_requested = Vec::with_capacity(times.len());
    let mut pair_dynamics = Vec::with_capacity(times.len());
    let mut laplacian_term = Vec::with_capacity(times.len());
    let requested_matches_dynamics = match kernel {
        Kernel::Mollified(spec) => spec == trajectory.spec,
        Kernel::Exact => false,
    };
    for k in 0..times.len() {
        let positions = &trajectory.positions[k];
        let dyn_rows = &trajectory.drifts[k];
        let s_dyn = inv_n
            * positions
                .iter()
                .zip(dyn_rows)
                .map(|(x, b)| vec3::dot(phi.gradient(*x), *b))
                .sum::<f64>();
        pair_dynamics.push(s_dyn);
        if requested_matches_dynamics {
            pair_requested.push(s_dyn);
        } else {
            let rows = mean_field_rows(positions, kernel)?;
            let s_req = inv_n
                * positions
                    .iter()
                    .zip(&rows)
                    .map(|(x, b)| vec3::dot(phi.gradient(*x), *b))
                    .sum::<f64>();
            pair_requested.push(s_req);
        }
        laplacian_term.push(inv_n * positions.iter().map(|x| phi.laplacian(*x)).sum::<f64>());
    }

    let boundary = inv_n
        * trajectory.positions[idx]
            .iter()
            .zip(&trajectory.positions[0])
            .map(|(xt, x0)| phi.value(*xt) - phi.value(*x0))
            .sum::<f64>();
    let lap_integral = trapezoid(times, &laplacian_term);
    let value = boundary - trapezoid(times, &pair_requested) - lap_integral;
    let ito = boundary - trapezoid(times, &pair_dynamics) - lap_integral;
    let gap = trapezoid(times, &pair_dynamics) - trapezoid(times, &pair_requested);
    Ok(WeakResidualReport {
        n,
        epsilon: match kernel {
            Kernel::Mollified(spec) => Some(spec.epsilon),
            Kernel::Exact => None,
        },
        dynamics_epsilon: trajectory.spec.epsilon,
        t,
        seed: trajectory.seed,
        phi: phi.id(),
        value,
        ito_martingale_part: ito,
        mollification_gap_part: gap,
    })
}

/// Trapezoid value of ∫₀ᵗ (1/N) Σ_i |b_i(s)|² ds on the stored grid.
pub fn work_integral(trajectory: &Trajectory, kernel: Kernel, t: f64) -> Result<f64> {
    let idx = locate_time(trajectory, t)?;
    Ok(work_series(trajectory, kernel)?[idx])
}

/// Running work integral at every stored time (prefix trapezoid).
pub fn work_series(trajectory: &Trajectory, kernel: Kernel) -> Result<Vec<f64>> {
    let n_inv = 1.0 / trajectory.n() as f64;
    let times = &trajectory.times;
    let matches_dynamics = match kernel {
        Kernel::Mollified(spec) => spec == trajectory.spec,
        Kernel::Exact => false,
    };
    let mut densities = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let rows_storage;
        let rows: &[Vec3] = if matches_dynamics {
            &trajectory.drifts[k]
        } else {
            rows_storage = mean_field_rows(&trajectory.positions[k], kernel)?;
            &rows_storage
        };
        densities.push(n_inv * rows.iter().map(|b| vec3::norm_sq(*b)).sum::<f64>());
    }
    let mut series = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    series.push(0.0);
    for k in 1..times.len() {
        acc += 0.5 * (densities[k] + densities[k - 1]) * (times[k] - times[k - 1]);
        series.push(acc);
    }
    Ok(series)
}

/// The fluctuation martingale series M_t recorded by the integrator.
/// Available only for the kernel the trajectory was integrated with.
pub fn martingale_track(trajectory: &Trajectory, spec: &KernelSpec) -> Result<Vec<(f64, f64)>> {
    if *spec != trajectory.spec {
        return Err(Error::Unavailable(
            "martingale increments are accumulated with the integration kernel only".into(),
        ));
    }
    match &trajectory.martingale {
        Some(series) => Ok(trajectory
            .times
            .iter()
            .copied()
            .zip(series.iter().copied())
            .collect()),
        None => Err(Error::Unavailable(
            "run did not retain martingale increments".into(),
        )),
    }
}

/// Mean-field drift rows for an arbitrary kernel (the trajectory stores them
/// only for its own).
fn mean_field_rows(positions: &[Vec3], kernel: Kernel) -> Result<Vec<Vec3>> {
    match kernel {
        Kernel::Mollified(spec) => pairwise_forces(positions, &spec, ForceMethod::Direct),
        Kernel::Exact => {
            let n = positions.len();
            let mut rows = vec![vec3::ZERO; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let f = coulomb_force(vec3::sub(positions[i], positions[j]))?;
                    rows[i] = vec3::add(rows[i], f);
                    rows[j] = vec3::sub(rows[j], f);
                }
            }
            let inv_n = 1.0 / n as f64;
            for row in rows.iter_mut() {
                *row = vec3::scale(*row, inv_n);
            }
            Ok(rows)
        }
    }
}

fn locate_time(trajectory: &Trajectory, t: f64) -> Result<usize> {
    let tol = 1e-9 * trajectory.times.last().copied().unwrap_or(1.0).max(1.0);
    trajectory
        .times
        .iter()
        .position(|s| (s - t).abs() <= tol)
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "t = {t} is not a stored quadrature time (insufficient quadrature times)"
            ))
        })
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 1..times.len() {
        acc += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
    }
    acc
}
