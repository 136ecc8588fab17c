//! Score one-step forecasts of the two candidate models on unfished truth data.

use ftlab::reference;
use ftlab::scoring::{score_campaign, score_difference_ci, summarize_scores, CampaignSpec, PolicyMode};

fn main() -> ftlab::Result<()> {
    let (states, actions) = (reference::state_grid(), reference::action_grid());
    let spec = CampaignSpec { reps: 50, horizon: 100, x0: reference::X0, seed: 7 };
    let series = score_campaign(&reference::two_model_ensemble(), &reference::truth(), &PolicyMode::Unfished, &states, &actions, &spec)?;
    for s in summarize_scores(&series) {
        println!("{:<7} mean log score {:.3} ({} zero-probability outcomes)", s.model, s.mean_score, s.neg_inf_count);
    }
    let ci = score_difference_ci(&series, "model2", "model1", 8)?;
    println!("model2 - model1: [{:.3}, {:.3}]", ci.low, ci.high);
    Ok(())
}
