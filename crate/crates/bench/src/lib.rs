//! Shared fixtures for the benchmarks.

use trimwave_core::disorder::{DistributionSpec, EnsembleSpec};
use trimwave_core::geometry::{
    build_periodic_box, build_trim_mask, single_layer_gamma0, GeometrySpec,
};

/// `p = 2` strip of width `2 * half_width` with `k` periods along the free direction.
pub fn strip_ensemble(half_width: i64, k: usize) -> EnsembleSpec {
    let spec = GeometrySpec::new(1, 1, vec![2, 2], 0, half_width, vec![k]).expect("valid geometry");
    let b = build_periodic_box(&spec).expect("box");
    let mask =
        build_trim_mask(&b, &single_layer_gamma0(&[2, 2], 1, None).expect("layer")).expect("mask");
    EnsembleSpec {
        seed: 0,
        realizations: 8,
        distribution: DistributionSpec::uniform(0.0, 10.0).expect("law"),
        mask,
    }
}
