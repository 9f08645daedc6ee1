//! Radial finite-volume solver for the limiting nonlinear Fokker-Planck
//! equation ∂tρ = Δρ + ∇·(ρ∇h), h = g∗ρ.
//!
//! For radial densities the nonlocal field collapses to the Gauss law
//! ∂_r h = −M(r)/(4πr²) with M the enclosed mass, so the equation becomes a
//! 1D conservation law in the radial mass coordinate. The scheme is
//! conservative: centered diffusive flux, first-order upwind advective flux
//! (the advection velocity −∂_r h ≥ 0 always points outward), zero flux at
//! r = 0 and at the truncation wall r = R. Mass is conserved to rounding by
//! the telescoping flux sum and positivity follows from the CFL bound
//! dt ≤ safety·min(Δr²/6, Δr/max|h′|).

use crate::error::{Error, Result};
use crate::rng::{Domain, Philox};
use statrs::function::erf::erf;
use std::f64::consts::PI;

const FOUR_THIRDS_PI: f64 = 4.0 * PI / 3.0;

/// Cell-averaged radial density on a uniform grid over [0, R].
#[derive(Debug, Clone)]
pub struct RadialField {
    r_max: f64,
    rho: Vec<f64>,
    pub t: f64,
}

impl RadialField {
    pub fn new(r_max: f64, rho: Vec<f64>, t: f64) -> Result<Self> {
        if !(r_max > 0.0) || rho.is_empty() {
            return Err(Error::InvalidInput(
                "radial field needs r_max > 0 and at least one cell".into(),
            ));
        }
        if rho.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "radial density values must be finite and non-negative".into(),
            ));
        }
        Ok(RadialField { r_max, rho, t })
    }

    /// Discretize a radial density by 4-point Gauss quadrature cell averages.
    /// If `normalize` is set the result is rescaled to unit mass.
    pub fn discretize<F: Fn(f64) -> f64>(
        density: F,
        r_max: f64,
        cells: usize,
        normalize: bool,
    ) -> Result<Self> {
        const GX: [f64; 4] = [
            -0.8611363115940526,
            -0.3399810435848563,
            0.3399810435848563,
            0.8611363115940526,
        ];
        const GW: [f64; 4] = [
            0.3478548451374538,
            0.6521451548625461,
            0.6521451548625461,
            0.3478548451374538,
        ];
        if cells == 0 || !(r_max > 0.0) {
            return Err(Error::InvalidInput("bad radial grid".into()));
        }
        let dr = r_max / cells as f64;
        let mut rho = Vec::with_capacity(cells);
        for m in 0..cells {
            let a = m as f64 * dr;
            let b = a + dr;
            // volume-weighted cell average: ∫ρ 4πr²dr / V
            let mut num = 0.0;
            for (x, w) in GX.iter().zip(GW) {
                let r = 0.5 * (a + b) + 0.5 * dr * x;
                num += w * density(r) * r * r;
            }
            num *= 0.5 * dr * 4.0 * PI;
            let vol = FOUR_THIRDS_PI * (b * b * b - a * a * a);
            rho.push((num / vol).max(0.0));
        }
        let mut field = RadialField::new(r_max, rho, 0.0)?;
        if normalize {
            let mass = field.mass();
            if mass <= 0.0 {
                return Err(Error::InvalidInput("density has zero mass on the grid".into()));
            }
            for v in field.rho.iter_mut() {
                *v /= mass;
            }
        }
        Ok(field)
    }

    pub fn cells(&self) -> usize {
        self.rho.len()
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn dr(&self) -> f64 {
        self.r_max / self.rho.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub fn edge(&self, m: usize) -> f64 {
        m as f64 * self.dr()
    }

    pub fn center(&self, m: usize) -> f64 {
        (m as f64 + 0.5) * self.dr()
    }

    pub fn cell_volume(&self, m: usize) -> f64 {
        let a = self.edge(m);
        let b = self.edge(m + 1);
        FOUR_THIRDS_PI * (b * b * b - a * a * a)
    }

    pub fn mass(&self) -> f64 {
        (0..self.cells()).map(|m| self.rho[m] * self.cell_volume(m)).sum()
    }

    pub fn max_value(&self) -> f64 {
        self.rho.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    /// Radial CDF C(r) = ∫_0^r 4πs²ρ ds, exact for the piecewise-constant
    /// representation.
    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r >= self.r_max {
            return self.mass();
        }
        let dr = self.dr();
        let m = ((r / dr) as usize).min(self.cells() - 1);
        let below: f64 = (0..m).map(|j| self.rho[j] * self.cell_volume(j)).sum();
        let a = self.edge(m);
        below + self.rho[m] * FOUR_THIRDS_PI * (r * r * r - a * a * a)
    }

    /// Inverse of `cdf` for sampling; u must lie in (0, mass].
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for m in 0..self.cells() {
            let dm = self.rho[m] * self.cell_volume(m);
            if acc + dm >= u || m == self.cells() - 1 {
                if dm <= 0.0 {
                    return self.edge(m + 1);
                }
                let a = self.edge(m);
                let need = (u - acc).clamp(0.0, dm);
                let r3 = a * a * a + need / (self.rho[m] * FOUR_THIRDS_PI);
                return r3.cbrt().min(self.r_max);
            }
            acc += dm;
        }
        self.r_max
    }

    /// L¹ distance between two fields on the same grid.
    pub fn l1_distance(&self, other: &RadialField) -> Result<f64> {
        if self.cells() != other.cells() || (self.r_max - other.r_max).abs() > 1e-12 {
            return Err(Error::InvalidInput("grids differ".into()));
        }
        Ok((0..self.cells())
            .map(|m| (self.rho[m] - other.rho[m]).abs() * self.cell_volume(m))
            .sum())
    }

    /// Conservative restriction onto a grid with half as many cells.
    pub fn restrict(&self) -> Result<RadialField> {
        if self.cells() % 2 != 0 {
            return Err(Error::InvalidInput("cannot halve an odd cell count".into()));
        }
        let mut rho = Vec::with_capacity(self.cells() / 2);
        for m in 0..self.cells() / 2 {
            let va = self.cell_volume(2 * m);
            let vb = self.cell_volume(2 * m + 1);
            rho.push((self.rho[2 * m] * va + self.rho[2 * m + 1] * vb) / (va + vb));
        }
        RadialField::new(self.r_max, rho, self.t)
    }

    /// ∫ρ log ρ dx on the grid (0·log 0 = 0).
    pub fn entropy(&self) -> f64 {
        (0..self.cells())
            .map(|m| {
                let v = self.rho[m];
                if v > 0.0 {
                    v * v.ln() * self.cell_volume(m)
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// ∫ρ² dx on the grid.
    pub fn l2_squared(&self) -> f64 {
        (0..self.cells()).map(|m| self.rho[m] * self.rho[m] * self.cell_volume(m)).sum()
    }

    /// Fisher information ∫|∇ρ|²/ρ dx with edge-centered gradients.
    pub fn fisher(&self) -> f64 {
        let dr = self.dr();
        let mut total = 0.0;
        for e in 1..self.cells() {
            let grad = (self.rho[e] - self.rho[e - 1]) / dr;
            let rho_edge = 0.5 * (self.rho[e] + self.rho[e - 1]);
            if rho_edge > 1e-300 {
                let r = self.edge(e);
                total += grad * grad / rho_edge * 4.0 * PI * r * r * dr;
            }
        }
        total
    }
}

/// Enclosed mass and radial potential gradient at cell edges.
#[derive(Debug, Clone)]
pub struct GaussField {
    /// M(r) at the M+1 cell edges; exact partial sums of cell masses.
    pub enclosed_mass: Vec<f64>,
    /// ∂_r h = −M(r)/(4πr²) at the edges, with h′(0) = 0.
    pub h_prime: Vec<f64>,
}

/// Solve −Δh = ρ for the radial field by the Gauss law.
pub fn gauss_solve(rho: &RadialField) -> GaussField {
    let cells = rho.cells();
    let mut enclosed = Vec::with_capacity(cells + 1);
    enclosed.push(0.0);
    let mut acc = 0.0;
    for m in 0..cells {
        acc += rho.values()[m] * rho.cell_volume(m);
        enclosed.push(acc);
    }
    let mut h_prime = Vec::with_capacity(cells + 1);
    for (e, &mass) in enclosed.iter().enumerate() {
        let r = rho.edge(e);
        if r == 0.0 {
            h_prime.push(0.0);
        } else {
            h_prime.push(-mass / (4.0 * PI * r * r));
        }
    }
    GaussField {
        enclosed_mass: enclosed,
        h_prime,
    }
}

/// Coulomb self-energy 𝓔(ρ) = ½∬g(x−y)ρρ = ½∫hρ, evaluated in closed form
/// per cell for the piecewise-constant representation (the enclosed mass is
/// cubic inside each cell, so every integral below is polynomial).
pub fn continuum_energy(rho: &RadialField) -> f64 {
    let cells = rho.cells();
    let gauss = gauss_solve(rho);
    let total_mass = gauss.enclosed_mass[cells];
    // Potential at edges, integrating M/(4πr²) inward from the wall.
    let mut h_edge = vec![0.0; cells + 1];
    h_edge[cells] = total_mass / (4.0 * PI * rho.r_max());
    for m in (0..cells).rev() {
        let a = rho.edge(m);
        let b = rho.edge(m + 1);
        let c = FOUR_THIRDS_PI * rho.values()[m];
        let alpha = gauss.enclosed_mass[m] - c * a * a * a;
        // ∫_a^b M/(4πr²) dr with M = α + c r³
        let anti = |r: f64| (if r > 0.0 { -alpha / r } else { 0.0 }) + 0.5 * c * r * r;
        h_edge[m] = h_edge[m + 1] + (anti(b) - anti(a)) / (4.0 * PI);
    }
    // ½ Σ ρ_m ∫ h 4πr²dr with h(r) = h(b) + G(b) − G(r), G' = M/(4πr²).
    let mut energy = 0.0;
    for m in 0..cells {
        let a = rho.edge(m);
        let b = rho.edge(m + 1);
        let c = FOUR_THIRDS_PI * rho.values()[m];
        let alpha = gauss.enclosed_mass[m] - c * a * a * a;
        let g = |r: f64| ((if r > 0.0 { -alpha / r } else { 0.0 }) + 0.5 * c * r * r) / (4.0 * PI);
        // ∫_a^b G(r) r² dr = [−α r²/2 + c r⁵/10] / 4π
        let int_g_r2 = ((-0.5 * alpha * (b * b - a * a)) + c * (b.powi(5) - a.powi(5)) / 10.0)
            / (4.0 * PI);
        let vol3 = (b * b * b - a * a * a) / 3.0;
        let int_h_r2 = (h_edge[m + 1] + g(b)) * vol3 - int_g_r2;
        energy += 0.5 * rho.values()[m] * 4.0 * PI * int_h_r2;
    }
    energy
}

/// Field-energy route ½∫|∇h|², closed form per cell plus the exterior tail
/// M²/(4πR). Equals `continuum_energy` up to rounding; kept as the second
/// leg of the dual-route check.
pub fn field_energy(rho: &RadialField) -> f64 {
    let cells = rho.cells();
    let gauss = gauss_solve(rho);
    let total_mass = gauss.enclosed_mass[cells];
    let mut integral = 0.0;
    for m in 0..cells {
        let a = rho.edge(m);
        let b = rho.edge(m + 1);
        let c = FOUR_THIRDS_PI * rho.values()[m];
        let alpha = gauss.enclosed_mass[m] - c * a * a * a;
        // ∫ M²/(4πr²) dr, M = α + c r³
        let anti = |r: f64| {
            (if r > 0.0 { -alpha * alpha / r } else { 0.0 })
                + alpha * c * r * r
                + c * c * r.powi(5) / 5.0
        };
        integral += (anti(b) - anti(a)) / (4.0 * PI);
    }
    integral += total_mass * total_mass / (4.0 * PI * rho.r_max());
    0.5 * integral
}

#[derive(Debug, Clone, Copy)]
pub struct FpOptions {
    /// Include the nonlinear repulsion term; off gives pure heat flow.
    pub interaction: bool,
    /// CFL safety factor applied to min(Δr²/6, Δr/max|h′|).
    pub cfl_safety: f64,
}

impl Default for FpOptions {
    fn default() -> Self {
        FpOptions {
            interaction: true,
            cfl_safety: 0.4,
        }
    }
}

/// Largest stable step for the current state.
pub fn max_stable_dt(rho: &RadialField, opts: &FpOptions) -> f64 {
    let dr = rho.dr();
    let diffusive = dr * dr / 6.0;
    let advective = if opts.interaction {
        let gauss = gauss_solve(rho);
        let vmax = gauss.h_prime.iter().fold(0.0f64, |a, &h| a.max(h.abs()));
        if vmax > 0.0 {
            dr / vmax
        } else {
            f64::INFINITY
        }
    } else {
        f64::INFINITY
    };
    opts.cfl_safety * diffusive.min(advective)
}

/// Outward mass fluxes through every edge (length cells+1, zero at both
/// walls): A·(u·ρ_upwind − ∂_r ρ) with u = −h′ ≥ 0.
fn edge_fluxes(rho: &RadialField, opts: &FpOptions) -> Vec<f64> {
    let cells = rho.cells();
    let dr = rho.dr();
    let gauss = if opts.interaction {
        Some(gauss_solve(rho))
    } else {
        None
    };
    let mut flux = vec![0.0; cells + 1];
    for e in 1..cells {
        let r = rho.edge(e);
        let area = 4.0 * PI * r * r;
        let grad = (rho.values()[e] - rho.values()[e - 1]) / dr;
        let mut f = -area * grad;
        if let Some(g) = &gauss {
            let u = -g.h_prime[e]; // ≥ 0, outward
            f += area * u * rho.values()[e - 1];
        }
        flux[e] = f;
    }
    flux
}

/// One conservative explicit step.
pub fn fp_step(rho: &RadialField, dt: f64, opts: &FpOptions) -> Result<RadialField> {
    if !(dt > 0.0) {
        return Err(Error::StepSize("dt must be positive".into()));
    }
    let cap = max_stable_dt(rho, opts);
    if dt > cap * (1.0 + 1e-12) {
        return Err(Error::StepSize(format!(
            "dt = {dt:.3e} violates the CFL bound {cap:.3e}"
        )));
    }
    let flux = edge_fluxes(rho, opts);
    let cells = rho.cells();
    let mut next = Vec::with_capacity(cells);
    for m in 0..cells {
        let v = rho.cell_volume(m);
        let val = rho.values()[m] + dt * (flux[m] - flux[m + 1]) / v;
        next.push(val);
    }
    // The update is an M-matrix scheme under the CFL bound; any negative is
    // pure rounding noise at the density floor.
    let floor = -1e-13 * rho.max_value().max(1.0);
    for v in next.iter_mut() {
        if *v < 0.0 {
            if *v < floor {
                return Err(Error::Solver(format!(
                    "positivity lost: cell value {v:.3e}"
                )));
            }
            *v = 0.0;
        }
    }
    RadialField::new(rho.r_max(), next, rho.t + dt)
}

/// The cell-averaged interaction term ∇·(ρ∇h) as the solver discretizes it
/// (used as the Duhamel forcing in the mild-solution residual).
pub fn interaction_divergence(rho: &RadialField) -> Vec<f64> {
    let opts_full = FpOptions {
        interaction: true,
        cfl_safety: 0.4,
    };
    let opts_heat = FpOptions {
        interaction: false,
        cfl_safety: 0.4,
    };
    let full = edge_fluxes(rho, &opts_full);
    let heat = edge_fluxes(rho, &opts_heat);
    (0..rho.cells())
        .map(|m| {
            let adv_in = full[m] - heat[m];
            let adv_out = full[m + 1] - heat[m + 1];
            (adv_in - adv_out) / rho.cell_volume(m)
        })
        .collect()
}

/// Result of an initial-value solve: fields at the output cadence
/// (including t = 0) and the truncation-leakage monitor.
pub struct SolveResult {
    pub series: Vec<RadialField>,
    /// Mass fraction in the outermost two cells at the final time.
    pub boundary_mass: f64,
}

/// Evolve ρ₀ to `t_final`, storing `outputs` snapshots after t = 0.
pub fn solve(
    rho0: &RadialField,
    t_final: f64,
    outputs: usize,
    opts: &FpOptions,
) -> Result<SolveResult> {
    if !(t_final >= 0.0) || outputs == 0 {
        return Err(Error::InvalidInput("need t_final ≥ 0 and outputs ≥ 1".into()));
    }
    let sup0 = rho0.max_value();
    let mut field = rho0.clone();
    let mut series = Vec::with_capacity(outputs + 1);
    series.push(field.clone());
    if t_final == 0.0 {
        let boundary_mass = boundary_mass(&field);
        return Ok(SolveResult {
            series,
            boundary_mass,
        });
    }
    let dt_cap = max_stable_dt(rho0, opts);
    let per_output = t_final / outputs as f64;
    let steps_per_output = (per_output / dt_cap).ceil().max(1.0) as usize;
    let dt = per_output / steps_per_output as f64;
    for _ in 0..outputs {
        for _ in 0..steps_per_output {
            field = fp_step(&field, dt, opts)?;
            if field.max_value() > 2.0 * sup0 + 1e-12 {
                return Err(Error::Solver(
                    "blow-up monitor tripped: sup-norm doubled".into(),
                ));
            }
        }
        series.push(field.clone());
    }
    let boundary_mass = boundary_mass(&field);
    Ok(SolveResult {
        series,
        boundary_mass,
    })
}

fn boundary_mass(field: &RadialField) -> f64 {
    let cells = field.cells();
    (cells.saturating_sub(2)..cells)
        .map(|m| field.values()[m] * field.cell_volume(m))
        .sum()
}

/// Exact heat semigroup e^{τΔ} applied to the piecewise-constant field,
/// evaluated at cell centers. Uses the radial image-kernel form
/// u(r) = (1/(r√(4πτ))) ∫ s ρ(s) [e^{−(r−s)²/4τ} − e^{−(r+s)²/4τ}] ds
/// with the per-cell integral in closed form (erf + exp).
pub fn heat_evolve(rho: &RadialField, tau: f64) -> Result<RadialField> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidInput("negative heat time".into()));
    }
    if tau < 1e-14 {
        return Ok(rho.clone());
    }
    let cells = rho.cells();
    let root = 2.0 * tau.sqrt();
    let sqrt_pi_t = (PI * tau).sqrt();
    // ∫_a^b s e^{−(s−c)²/4τ} ds, c possibly negative (image charge).
    let strip = |a: f64, b: f64, c: f64| -> f64 {
        let za = (a - c) / root;
        let zb = (b - c) / root;
        c * sqrt_pi_t * (erf(zb) - erf(za)) + 2.0 * tau * ((-za * za).exp() - (-zb * zb).exp())
    };
    let mut out = Vec::with_capacity(cells);
    let norm = 1.0 / (4.0 * PI * tau).sqrt();
    for m in 0..cells {
        let r = rho.center(m);
        let mut acc = 0.0;
        for (j, &val) in rho.values().iter().enumerate() {
            if val == 0.0 {
                continue;
            }
            let a = rho.edge(j);
            let b = rho.edge(j + 1);
            // skip source cells farther than 10 diffusion lengths
            if a > r + 10.0 * root || b < r - 10.0 * root {
                continue;
            }
            acc += val * (strip(a, b, r) - strip(a, b, -r));
        }
        out.push((acc * norm / r).max(0.0));
    }
    RadialField::new(rho.r_max(), out, rho.t + tau)
}

/// L¹ defect of the Duhamel identity
/// ρ(T) − e^{TΔ}ρ₀ − ∫₀ᵀ e^{(T−s)Δ} ∇·(ρ∇h) ds
/// with the forcing taken from the stored series and trapezoid time
/// quadrature on its grid.
pub fn mild_residual(series: &[RadialField]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InvalidInput("need at least two snapshots".into()));
    }
    let last = series.len() - 1;
    let t_final = series[last].t;
    let t0 = series[0].t;
    let acc = heat_evolve(&series[0], t_final - t0)?;
    let mut duhamel = vec![0.0; acc.cells()];
    for (j, field) in series.iter().enumerate() {
        let weight = trapezoid_weight(series, j);
        let forcing = interaction_divergence(field);
        // heat_evolve is linear; split the signed forcing into ± parts.
        let pos: Vec<f64> = forcing.iter().map(|v| v.max(0.0)).collect();
        let neg: Vec<f64> = forcing.iter().map(|v| (-v).max(0.0)).collect();
        let tau = t_final - field.t;
        let pos_f = heat_evolve(&RadialField::new(field.r_max(), pos, field.t)?, tau)?;
        let neg_f = heat_evolve(&RadialField::new(field.r_max(), neg, field.t)?, tau)?;
        for m in 0..duhamel.len() {
            duhamel[m] += weight * (pos_f.values()[m] - neg_f.values()[m]);
        }
    }
    let mut l1 = 0.0;
    for m in 0..acc.cells() {
        let predicted = acc.values()[m] + duhamel[m];
        l1 += (series[last].values()[m] - predicted).abs() * acc.cell_volume(m);
    }
    Ok(l1)
}

fn trapezoid_weight(series: &[RadialField], j: usize) -> f64 {
    let n = series.len();
    if n == 1 {
        return 0.0;
    }
    if j == 0 {
        0.5 * (series[1].t - series[0].t)
    } else if j == n - 1 {
        0.5 * (series[n - 1].t - series[n - 2].t)
    } else {
        0.5 * (series[j + 1].t - series[j - 1].t)
    }
}

/// Radial gaussian density with scale σ (the 3D standard normal scaled).
pub fn gaussian_radial(sigma: f64) -> impl Fn(f64) -> f64 {
    let norm = 1.0 / ((2.0 * PI * sigma * sigma).powf(1.5));
    move |r: f64| norm * (-0.5 * r * r / (sigma * sigma)).exp()
}

/// Uniform-ball density of unit mass and radius R.
pub fn uniform_ball_radial(radius: f64) -> impl Fn(f64) -> f64 {
    let value = 1.0 / (FOUR_THIRDS_PI * radius * radius * radius);
    move |r: f64| if r <= radius { value } else { 0.0 }
}

/// Sample radii from the field's own CDF (inverse transform); used by tests
/// and by radial-table initial sampling.
pub fn sample_radius(field: &RadialField, rng: &Philox, particle: u64) -> f64 {
    let u = rng.uniform(Domain::InitialSample, particle, 1, 0) * field.mass();
    field.inverse_cdf(u)
}

#[cfg(test)]
mod tests;
