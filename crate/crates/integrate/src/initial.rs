//! Initial data presets on the P2 nodes.

use fem::{from_nodes, Mesh};
use model_core::{stack, BeamParameters, Mat6, Vec3, Vec6};
use nalgebra::DVector;

use crate::{IntegrateError, Result};

/// Velocity choice for the helical datum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HelixVelocity {
    Zero,
    /// Curves from `0` at `x = 0` to `−K⁻¹ z⁰(ℓ)` at `x = ℓ` with zero end
    /// slopes, realized as the cubic Hermite blend `3ξ² − 2ξ³`.
    Compatible,
}

/// Unsheared helix strains `s⁰ = (0, (−1, 0, 1)/√2 − Υc)`.
pub fn helix_strain(params: &BeamParameters, x: f64) -> Vec6 {
    let k = Vec3::new(-1.0, 0.0, 1.0) / 2f64.sqrt() - params.precurvature_at(x);
    Vec6::new(0.0, 0.0, 0.0, k[0], k[1], k[2])
}

/// Stresses `z⁰ = C⁻¹ s⁰`.
pub fn helix_stress(params: &BeamParameters, x: f64) -> Result<Vec6> {
    params
        .flexibility_at(x)
        .cholesky()
        .map(|c| c.solve(&helix_strain(params, x)))
        .ok_or_else(|| IntegrateError::Parameter("flexibility is not positive definite".into()))
}

pub fn hermite_blend(xi: f64) -> f64 {
    xi * xi * (3.0 - 2.0 * xi)
}

/// Reduced nodal vector of the helical datum.
pub fn helix_state(params: &BeamParameters, mesh: &Mesh, velocity: HelixVelocity, feedback: &Mat6) -> Result<DVector<f64>> {
    let end_velocity = match velocity {
        HelixVelocity::Zero => Vec6::zeros(),
        HelixVelocity::Compatible => {
            let z_end = helix_stress(params, params.length)?;
            let lu = feedback.lu();
            if !lu.is_invertible() {
                return Err(IntegrateError::Parameter("compatible velocities need an invertible feedback".into()));
            }
            -lu.solve(&z_end).unwrap()
        }
    };
    let values = mesh
        .nodes()
        .into_iter()
        .map(|x| Ok(stack(&(end_velocity * hermite_blend(x / params.length)), &helix_stress(params, x)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(from_nodes(&values))
}
