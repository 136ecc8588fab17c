//! Value of information for the two-model ensemble with a prior on model 1.

use ftlab::adaptive::{value_of_information, AdaptiveSpec, EnsembleKernels};
use ftlab::reference;

fn main() -> ftlab::Result<()> {
    let (states, actions) = (reference::state_grid(), reference::action_grid());
    let ensemble = reference::two_model_ensemble();
    let prior = reference::model1_prior(&ensemble)?;
    let kernels = EnsembleKernels::build(&ensemble, &states, &actions)?;
    let spec = AdaptiveSpec { horizon: 100, x0: reference::X0, seed: 3 };
    let study = value_of_information(&reference::truth(), &kernels, &prior, 20, &reference::reward(), &spec)?;
    let r = &study.report;
    println!("NPV learning {:.3}, planning {:.3}", r.npv_learning, r.npv_planning);
    println!("relative VOI {:.4} [{:.4}, {:.4}]", r.relative_voi, r.relative_ci.low, r.relative_ci.high);
    println!("runs favouring model2 after one update: {:.0}%", 100.0 * study.first_update_share(1, 0.5));
    Ok(())
}
