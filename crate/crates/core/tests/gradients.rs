mod common;

use common::{CHECKS, TOLERANCE};
use proptest::prelude::*;

fn check(name: &str, seed: u64) -> Result<(), TestCaseError> {
    let (_, f) = CHECKS.iter().find(|(n, _)| *n == name).expect("known check");
    match f(seed) {
        None => Err(TestCaseError::reject("draw too close to a kink")),
        Some(err) => {
            prop_assert!(err <= TOLERANCE, "{name} seed {seed}: relative error {err:e}");
            Ok(())
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_layers_match_finite_differences(seed in any::<u64>()) {
        check("dense layers", seed)?;
    }

    #[test]
    fn cross_entropy_matches_finite_differences(seed in any::<u64>()) {
        check("cross-entropy", seed)?;
    }

    #[test]
    fn l1_matches_finite_differences(seed in any::<u64>()) {
        check("l1", seed)?;
    }

    #[test]
    fn rate_loss_latent_gradient(seed in any::<u64>()) {
        check("rate loss (latents)", seed)?;
    }

    #[test]
    fn entropy_parameter_gradient(seed in any::<u64>()) {
        check("entropy model (parameters)", seed)?;
    }

    #[test]
    fn power_normalization_gradient(seed in any::<u64>()) {
        check("power normalization", seed)?;
    }
}
