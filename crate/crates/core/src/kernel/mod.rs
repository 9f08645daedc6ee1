//! Exact and mollified 3D Coulomb kernels.
//!
//! The interaction potential is the fundamental solution of −Δ in 3D,
//! g(x) = 1/(4π|x|), with repulsive force F = −∇g = x/(4π|x|³). The
//! mollified pair (g_ε, F_ε) is the convolution of (g, F) with the bump
//!
//! ```text
//! J_ε(x) = ε⁻³ J(x/ε),   J(x) = c₃ (1 − |x|²)³ on |x| < 1,   ∫J = 1,
//! ```
//!
//! which is C², radial and supported in the unit ball. Because J is radial,
//! the shell theorem collapses the convolutions to closed radial forms driven
//! by the mollifier's enclosed-mass fraction m(s) = ∫_{|y|≤s} J dy:
//!
//! ```text
//! F_ε(x) = F(x) · m(|x|/ε),
//! g_ε(x) = m(u)/(4π|x|) + (1/4πε) ∫_u^1 m'(s)/s ds,   u = |x|/ε.
//! ```
//!
//! Both agree with the exact kernel for |x| ≥ ε, F_ε(0) = 0, and
//! ∇·F_ε = J_ε; the tests check these identities directly and against
//! adaptive quadrature of the defining convolutions.

mod tree;

pub use tree::Octree;

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};
use std::f64::consts::PI;

/// c₃ = 315/(64π): unit-mass normalization of (1 − |x|²)³.
const C3: f64 = 315.0 / (64.0 * PI);

/// Mollifier choice. A single built-in profile; an enum so the identity of
/// the profile is recorded in configs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum MollifierProfile {
    /// J(x) = c₃(1 − |x|²)³ on the unit ball.
    #[default]
    #[serde(rename = "polynomial_bump")]
    PolynomialBump,
}

impl MollifierProfile {
    /// J(s) for radius s (unit-scale mollifier density).
    #[inline]
    pub fn density(self, s: f64) -> f64 {
        if s >= 1.0 {
            0.0
        } else {
            let w = 1.0 - s * s;
            C3 * w * w * w
        }
    }

    /// Fraction of the mollifier's mass inside radius s.
    #[inline]
    pub fn mass_fraction(self, s: f64) -> f64 {
        if s >= 1.0 {
            1.0
        } else {
            let v = s * s;
            s * v * self.mass_over_s3(v)
        }
    }

    /// m(s)/s³ as a polynomial in v = s²; finite and positive at s = 0.
    #[inline]
    fn mass_over_s3(self, v: f64) -> f64 {
        (315.0 / 16.0) * (1.0 / 3.0 + v * (-3.0 / 5.0 + v * (3.0 / 7.0 - v / 9.0)))
    }

    /// ∫_u^1 m'(s)/s ds, the shell-potential tail of g_ε.
    #[inline]
    fn potential_tail(self, u: f64) -> f64 {
        if u >= 1.0 {
            0.0
        } else {
            let w = 1.0 - u * u;
            (315.0 / 128.0) * w * w * w * w
        }
    }

    /// C = sup_s m(s)/(4πs³), the constant in |F_ε(x)| ≤ C|x|/ε³.
    ///
    /// m(s)/s³ is decreasing for this profile, so the sup sits at s = 0
    /// and equals 105/(16·4π).
    pub fn force_bound_constant(self) -> f64 {
        self.mass_over_s3(0.0) / (4.0 * PI)
    }
}

/// Mollification radius plus profile. Spatial dimension is fixed to 3.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelSpec {
    pub epsilon: f64,
    #[serde(default)]
    pub profile: MollifierProfile,
}

impl KernelSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "mollification radius must be finite and > 0, got {epsilon}"
            )));
        }
        Ok(KernelSpec {
            epsilon,
            profile: MollifierProfile::PolynomialBump,
        })
    }

    /// J_ε(x) = ε⁻³ J(x/ε).
    pub fn mollifier_density(&self, x: Vec3) -> f64 {
        let e3 = self.epsilon * self.epsilon * self.epsilon;
        self.profile.density(vec3::norm(x) / self.epsilon) / e3
    }
}

/// Kernel selector for estimators that support both the exact and the
/// mollified interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Exact,
    Mollified(KernelSpec),
}

impl Kernel {
    /// Potential evaluation; errors only for the exact kernel at x = 0.
    pub fn potential(&self, x: Vec3) -> Result<f64> {
        match self {
            Kernel::Exact => coulomb_potential(x),
            Kernel::Mollified(spec) => Ok(mollified_potential(x, spec)),
        }
    }

    /// Force evaluation; errors only for the exact kernel at x = 0.
    pub fn force(&self, x: Vec3) -> Result<Vec3> {
        match self {
            Kernel::Exact => coulomb_force(x),
            Kernel::Mollified(spec) => Ok(mollified_force(x, spec)),
        }
    }
}

/// g(x) = 1/(4π|x|).
pub fn coulomb_potential(x: Vec3) -> Result<f64> {
    let r = vec3::norm(x);
    if r == 0.0 {
        return Err(Error::Singularity("coulomb potential at x = 0".into()));
    }
    Ok(1.0 / (4.0 * PI * r))
}

/// F(x) = −∇g(x) = x/(4π|x|³).
pub fn coulomb_force(x: Vec3) -> Result<Vec3> {
    let r2 = vec3::norm_sq(x);
    if r2 == 0.0 {
        return Err(Error::Singularity("coulomb force at x = 0".into()));
    }
    let r = r2.sqrt();
    Ok(vec3::scale(x, 1.0 / (4.0 * PI * r2 * r)))
}

/// F_ε(x) = F(x)·m(|x|/ε); defined everywhere, F_ε(0) = 0.
pub fn mollified_force(x: Vec3, spec: &KernelSpec) -> Vec3 {
    let r2 = vec3::norm_sq(x);
    let eps = spec.epsilon;
    if r2 >= eps * eps {
        let r = r2.sqrt();
        vec3::scale(x, 1.0 / (4.0 * PI * r2 * r))
    } else {
        // F(x)·m(u) = x · (m(u)/u³) / (4πε³); polynomial in u², no sqrt.
        let v = r2 / (eps * eps);
        let coef = spec.profile.mass_over_s3(v) / (4.0 * PI * eps * eps * eps);
        vec3::scale(x, coef)
    }
}

/// g_ε(x) = (J_ε ∗ g)(x) in closed radial form; finite at x = 0.
pub fn mollified_potential(x: Vec3, spec: &KernelSpec) -> f64 {
    let r2 = vec3::norm_sq(x);
    let eps = spec.epsilon;
    if r2 >= eps * eps {
        1.0 / (4.0 * PI * r2.sqrt())
    } else {
        let v = r2 / (eps * eps);
        let u = v.sqrt();
        // m(u)/(4πr) written as r²·(m(u)/u³)/(4πε³) to stay finite at r = 0.
        let enclosed = r2 * spec.profile.mass_over_s3(v) / (4.0 * PI * eps * eps * eps);
        enclosed + spec.profile.potential_tail(u) / (4.0 * PI * eps)
    }
}

/// How pair sums are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ForceMethod {
    /// Exact O(N²) summation with a fixed accumulation order; bitwise
    /// reproducible and independent of worker count.
    Direct,
    /// Barnes-Hut octree with monopole far field. Far nodes use the exact
    /// Coulomb force (legitimate: g_ε ≡ g outside ε); any node that could
    /// contain a point within ε of the target is opened, so near pairs are
    /// always evaluated directly.
    Tree { theta: f64 },
}

impl Default for ForceMethod {
    fn default() -> Self {
        ForceMethod::Direct
    }
}

pub const DEFAULT_TREE_THETA: f64 = 0.25;

/// Mean-field drift rows: b_i = (1/N) Σ_{j≠i} F_ε(x_i − x_j).
pub fn pairwise_forces(
    positions: &[Vec3],
    spec: &KernelSpec,
    method: ForceMethod,
) -> Result<Vec<Vec3>> {
    if positions.iter().any(|p| !vec3::is_finite(*p)) {
        return Err(Error::InvalidInput("non-finite particle position".into()));
    }
    match method {
        ForceMethod::Direct => Ok(pairwise_direct(positions, spec)),
        ForceMethod::Tree { theta } => {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "tree opening angle must lie in (0, 1), got {theta}"
                )));
            }
            let tree = Octree::build(positions);
            let n = positions.len();
            let inv_n = 1.0 / n as f64;
            Ok(positions
                .iter()
                .map(|&x| vec3::scale(tree.force_at(x, spec, theta), inv_n))
                .collect())
        }
    }
}

/// Symmetric pair accumulation: each unordered pair is evaluated once and
/// added with opposite signs, so the total drift cancels to rounding
/// (Newton's third law holds termwise).
fn pairwise_direct(positions: &[Vec3], spec: &KernelSpec) -> Vec<Vec3> {
    let n = positions.len();
    let mut rows = vec![vec3::ZERO; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let f = mollified_force(vec3::sub(positions[i], positions[j]), spec);
            rows[i] = vec3::add(rows[i], f);
            rows[j] = vec3::sub(rows[j], f);
        }
    }
    let inv_n = 1.0 / n as f64;
    for row in rows.iter_mut() {
        *row = vec3::scale(*row, inv_n);
    }
    rows
}
