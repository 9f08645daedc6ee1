//! Quantitative propagation-of-chaos diagnostics: distance between the
//! empirical time-marginal and the reference radial density, and decay of
//! pairwise correlations across an ensemble of independent runs.

use crate::error::{Error, Result};
use crate::pde::RadialField;
use crate::rng::{Domain, Philox};
use crate::vec3::{self, Vec3};
use crate::weakform::TestFunction;
use std::f64::consts::PI;

/// Aggregated chaos metrics for one (N, t) point of a scan.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ChaosReport {
    pub n: usize,
    pub t: f64,
    /// Median over seeds of the radial Kolmogorov-Smirnov distance.
    pub radial_ks: f64,
    /// Median over seeds of the sliced Wasserstein-1 distance.
    pub sliced_w1: f64,
    /// Pair-correlation estimate per test function.
    pub pair_cov: Vec<(String, f64)>,
    pub seeds_used: usize,
}

/// Kolmogorov-Smirnov distance between the empirical CDF of |X_i| and the
/// reference radial CDF ∫₀^r 4πs²ρ ds.
pub fn radial_ks(samples: &[Vec3], rho: &RadialField) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    let mass = rho.mass();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "reference density has mass {mass}, expected a normalized density"
        )));
    }
    let mut radii: Vec<f64> = samples.iter().map(|p| vec3::norm(*p)).collect();
    radii.sort_by(f64::total_cmp);
    let n = radii.len() as f64;
    let mut ks = 0.0f64;
    for (i, r) in radii.iter().enumerate() {
        let c = rho.cdf(*r);
        ks = ks.max((c - i as f64 / n).abs());
        ks = ks.max(((i + 1) as f64 / n - c).abs());
    }
    Ok(ks)
}

/// Symmetric 1D marginal CDF of a radial density along any axis:
/// q(u) = 2π ∫_{|u|}^R ρ(s) s ds, integrated in closed form per cell.
struct ProjectedCdf<'a> {
    rho: &'a RadialField,
    /// suffix sums Σ_{j≥m} ρ_j (b_j² − a_j²)/2
    suffix: Vec<f64>,
    /// T(a_m) = ∫_0^{a_m} S(v) dv with S(v) = ∫_v^R ρ s ds
    cumulative: Vec<f64>,
    mass: f64,
}

impl<'a> ProjectedCdf<'a> {
    fn new(rho: &'a RadialField) -> Self {
        let cells = rho.cells();
        let mut suffix = vec![0.0; cells + 1];
        for m in (0..cells).rev() {
            let a = rho.edge(m);
            let b = rho.edge(m + 1);
            suffix[m] = suffix[m + 1] + rho.values()[m] * (b * b - a * a) / 2.0;
        }
        let mut cumulative = vec![0.0; cells + 1];
        for m in 0..cells {
            let a = rho.edge(m);
            let b = rho.edge(m + 1);
            let v = rho.values()[m];
            // within the cell S(v) = ρ b²/2 + suffix[m+1] − ρ v²/2
            let c0 = v * b * b / 2.0 + suffix[m + 1];
            cumulative[m + 1] =
                cumulative[m] + c0 * (b - a) - v * (b * b * b - a * a * a) / 6.0;
        }
        let mass = rho.mass();
        ProjectedCdf {
            rho,
            suffix,
            cumulative,
            mass,
        }
    }

    /// ∫_0^u S(v) dv for u ≥ 0 (saturates beyond the support).
    fn int_s(&self, u: f64) -> f64 {
        let cells = self.rho.cells();
        if u >= self.rho.r_max() {
            return self.cumulative[cells];
        }
        let dr = self.rho.dr();
        let m = ((u / dr) as usize).min(cells - 1);
        let a = self.rho.edge(m);
        let b = self.rho.edge(m + 1);
        let v = self.rho.values()[m];
        let c0 = v * b * b / 2.0 + self.suffix[m + 1];
        self.cumulative[m] + c0 * (u - a) - v * (u * u * u - a * a * a) / 6.0
    }

    /// Q(u) = P(X·e ≤ u) for the radial density.
    fn eval(&self, u: f64) -> f64 {
        if u >= 0.0 {
            self.mass / 2.0 + 2.0 * PI * self.int_s(u)
        } else {
            self.mass / 2.0 - 2.0 * PI * self.int_s(-u)
        }
    }
}

/// Deterministic set of quadrature directions on the sphere.
pub fn direction_set(count: usize, seed: u64) -> Vec<Vec3> {
    let rng = Philox::new(seed);
    (0..count as u64)
        .map(|i| {
            let z = rng.normal3(Domain::Directions, i, 0);
            let n = vec3::norm(z);
            if n == 0.0 {
                [0.0, 0.0, 1.0]
            } else {
                vec3::scale(z, 1.0 / n)
            }
        })
        .collect()
}

/// Average over directions of the 1D Wasserstein-1 distance between the
/// projected samples and the projected radial reference.
pub fn sliced_w1(
    samples: &[Vec3],
    rho: &RadialField,
    directions: usize,
    seed: u64,
) -> Result<f64> {
    if samples.is_empty() || directions == 0 {
        return Err(Error::InvalidInput("empty sample or no directions".into()));
    }
    let mass = rho.mass();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "reference density has mass {mass}, expected a normalized density"
        )));
    }
    let projected = ProjectedCdf::new(rho);
    let dirs = direction_set(directions, seed);
    let mut total = 0.0;
    for e in &dirs {
        let mut u: Vec<f64> = samples.iter().map(|p| vec3::dot(*p, *e)).collect();
        u.sort_by(f64::total_cmp);
        total += w1_empirical_vs_cdf(&u, &projected, rho.r_max());
    }
    Ok(total / dirs.len() as f64)
}

/// ∫ |F̂(u) − Q(u)| du with F̂ the empirical step CDF. Panels are the sample
/// points plus a uniform refinement; a sign change inside a panel is split
/// at the linear-interpolation crossing.
fn w1_empirical_vs_cdf(sorted: &[f64], cdf: &ProjectedCdf, r_max: f64) -> f64 {
    let n = sorted.len() as f64;
    let lo = sorted.first().unwrap().min(-r_max) - 1e-9;
    let hi = sorted.last().unwrap().max(r_max) + 1e-9;
    // breakpoints: samples plus a uniform grid, merged sorted
    let grid_points = (4 * sorted.len()).clamp(256, 65_536);
    let mut breaks: Vec<f64> = Vec::with_capacity(sorted.len() + grid_points + 2);
    breaks.extend_from_slice(sorted);
    for g in 0..=grid_points {
        breaks.push(lo + (hi - lo) * g as f64 / grid_points as f64);
    }
    breaks.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut count = 0usize; // samples ≤ current position
    let mut prev = breaks[0];
    let mut q_prev = cdf.eval(prev);
    for &b in breaks.iter().skip(1) {
        while count < sorted.len() && sorted[count] <= prev {
            count += 1;
        }
        if b > prev {
            let f_hat = count as f64 / n;
            let q_b = cdf.eval(b);
            let da = f_hat - q_prev;
            let db = f_hat - q_b;
            if da * db >= 0.0 {
                total += 0.5 * (da.abs() + db.abs()) * (b - prev);
            } else {
                let cross = prev + (b - prev) * da.abs() / (da.abs() + db.abs());
                total += 0.5 * da.abs() * (cross - prev) + 0.5 * db.abs() * (b - cross);
            }
            q_prev = q_b;
            prev = b;
        }
    }
    total
}

/// Sliced W1 between two equally sized empirical clouds (quantile coupling
/// per direction).
pub fn sliced_w1_samples(a: &[Vec3], b: &[Vec3], directions: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidInput(
            "clouds must be non-empty and equally sized".into(),
        ));
    }
    let dirs = direction_set(directions, seed);
    let mut total = 0.0;
    for e in &dirs {
        let mut ua: Vec<f64> = a.iter().map(|p| vec3::dot(*p, *e)).collect();
        let mut ub: Vec<f64> = b.iter().map(|p| vec3::dot(*p, *e)).collect();
        ua.sort_by(f64::total_cmp);
        ub.sort_by(f64::total_cmp);
        total += ua
            .iter()
            .zip(&ub)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / ua.len() as f64;
    }
    Ok(total / dirs.len() as f64)
}

/// Two-particle correlation estimate ∬φφ(f^(2) − f⊗f) from an ensemble of
/// independent clouds at a common time: the seed-to-seed variance of
/// ⟨μ^N, φ⟩ minus the within-cloud variance over N.
pub fn pair_covariance(clouds: &[Vec<Vec3>], phi: &TestFunction) -> Result<f64> {
    let s = clouds.len();
    if s < 8 {
        return Err(Error::InvalidInput(format!(
            "pair covariance needs at least 8 independent clouds, got {s}"
        )));
    }
    let n = clouds[0].len();
    if n < 2 || clouds.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput(
            "clouds must share a common size ≥ 2".into(),
        ));
    }
    let mut means = Vec::with_capacity(s);
    let mut within = Vec::with_capacity(s);
    for cloud in clouds {
        let vals: Vec<f64> = cloud.iter().map(|x| phi.value(*x)).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        means.push(mean);
        within.push(var);
    }
    let grand = means.iter().sum::<f64>() / s as f64;
    let var_between =
        means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (s as f64 - 1.0);
    let mean_within = within.iter().sum::<f64>() / s as f64;
    Ok(var_between - mean_within / n as f64)
}
