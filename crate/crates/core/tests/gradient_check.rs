mod common;

use common::{gradient_check, relative_error};
use wafer_tda::classifier::ModelDims;

const TOL: f64 = 1e-4;

#[test]
fn every_parameter_of_small_models() {
    for seed in 0..24 {
        let dims = ModelDims {
            input: 6 + seed as usize % 5,
            hidden: 4 + seed as usize % 7,
            classes: 5,
        };
        let worst = gradient_check(seed, dims, None);
        assert!(worst <= TOL, "seed {seed} {dims:?}: {worst:e}");
    }
}

#[test]
fn other_class_counts() {
    for (seed, classes) in [(100, 2), (101, 3), (102, 7)] {
        let dims = ModelDims {
            input: 9,
            hidden: 20,
            classes,
        };
        let worst = gradient_check(seed, dims, None);
        assert!(worst <= TOL, "{classes} classes: {worst:e}");
    }
}

#[test]
fn sampled_parameters_at_full_size() {
    for seed in 200..203 {
        let worst = gradient_check(seed, ModelDims::default(), Some(40));
        assert!(worst <= TOL, "seed {seed}: {worst:e}");
    }
}

#[test]
fn relative_error_floors_small_denominators() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-12);
    assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
}
