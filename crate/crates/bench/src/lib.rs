//! Shared fixtures for the criterion benches.

use quadtomo::channels::apply_loss_cov;
use quadtomo::{GaussianState, GridSpec, WignerGrid};

/// Displaced, squeezed, lossy state: no symmetry for the kernels to exploit.
pub fn test_state() -> GaussianState {
    let pure = GaussianState::squeezed_vacuum(0.8, 0.3).expect("valid squeezing");
    apply_loss_cov(&pure, 0.7)
        .expect("valid loss")
        .displaced([0.4, -0.2])
        .expect("finite mean")
}

/// Wigner function of [`test_state`] on an `n × n` grid.
pub fn test_grid(n: usize) -> WignerGrid {
    let state = test_state();
    let spec = GridSpec::for_state(&state, n).expect("valid grid");
    state.wigner_grid(&spec).expect("positive-definite covariance")
}
