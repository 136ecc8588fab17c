//! Compare two food-web candidates on forecast error and realized utility.

use ftlab::ecosystem::{run_trap_study, CandidateEcoModel, EffortGrid, FoodWeb, TrapSettings};

fn main() -> ftlab::Result<()> {
    let settings = TrapSettings { grid: EffortGrid::uniform(11)?, horizon: 50, reps: 40, delta: 0.99, history: 10, seed: 5 };
    let candidates = [CandidateEcoModel::reference_a(), CandidateEcoModel::reference_b()];
    let study = run_trap_study(&FoodWeb::reference(), &candidates, &settings)?;
    let best = &study.truth_optimum;
    println!(
        "truth optimum: bass effort {:.1}, herring effort {:.1}, value {:.3}",
        best.efforts.effort_bass, best.efforts.effort_herring, best.value
    );
    for c in &study.candidates {
        println!("{:<8} forecast RMSE {:.4}, utility ratio {:.3}", c.label, c.rmse, c.realized.utility_ratio);
    }
    Ok(())
}
