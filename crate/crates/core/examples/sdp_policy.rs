//! Solve the harvest problem for the truth and print its escapement policy.

use ftlab::mdp::{discretize_kernel, escapement_profile, value_iterate, SolveOptions};
use ftlab::reference;

fn main() -> ftlab::Result<()> {
    let (states, actions) = (reference::state_grid(), reference::action_grid());
    let truth = reference::truth();
    let kernel = discretize_kernel(&truth, &states, &actions)?;
    let sol = value_iterate(&kernel, &reference::reward(), &states, &actions, &SolveOptions::default())?;
    println!("converged after {} sweeps (residual {:.2e})", sol.report.iterations, sol.report.residual);
    let prof = escapement_profile(&sol.policy, &states, &actions);
    println!("threshold state {:?}, escapement level {:?}, bang-bang {}", prof.threshold_state, prof.level, prof.bang_bang);
    for i in (0..states.len()).step_by(10) {
        println!(
            "x={:.2} quota={:.3} escapement={:.3} value={:.3}",
            states.values()[i],
            sol.policy.quota(i, &actions),
            prof.escapement[i],
            sol.value.values()[i]
        );
    }
    Ok(())
}
