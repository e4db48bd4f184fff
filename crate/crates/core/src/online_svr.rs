//! One-shot multiple incremental/decremental updates for ridge SVR.

use crate::error::{Error, Result};
use crate::model::{Sample, SampleId, SvrState, UpdateBatch};
use crate::online_svm::{self, UpdateConfig, UpdateReport};

/// `θ` of a new sample predicted from its output `f` and target `y`.
///
/// Outside the tube the prediction follows a ramp of slope `−1/ρ` through
/// the tube edge; inside it is zero.
pub fn wec_predict_svr(f_value: f64, target: f64, rho: f64, c: f64, epsilon: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::NonpositiveRho(rho));
    }
    let e = f_value - target;
    Ok(if e > epsilon {
        ((epsilon - e) / rho).clamp(-c, 0.0)
    } else if e < -epsilon {
        ((-epsilon - e) / rho).clamp(0.0, c)
    } else {
        0.0
    })
}

/// `Δθ_r = −θ_r` for every id to remove.
pub fn assign_removals_svr(state: &SvrState, remove: &[SampleId]) -> Result<Vec<(SampleId, f64)>> {
    online_svm::assign_removals(state, remove)
}

pub fn equilibrium_solve_svr(
    state: &SvrState,
    delta_add: &[(Sample, f64)],
    delta_remove: &[(SampleId, f64)],
) -> Result<(f64, Vec<f64>)> {
    online_svm::equilibrium_solve(state, delta_add, delta_remove)
}

pub fn update_multi_svr(state: &mut SvrState, batch: &UpdateBatch, config: &UpdateConfig) -> Result<UpdateReport> {
    let rho = state.kernel().ridge;
    let (c, eps) = (state.hyper().c, state.hyper().epsilon);
    online_svm::update_multi(state, batch, config, |f, y| wec_predict_svr(f, y, rho, c, eps))
}
