//! Tabulate the three single-species growth curves and their escapement levels.

use ftlab::mdp::{peak_net_growth, reed_escapement};
use ftlab::reference;

fn main() -> ftlab::Result<()> {
    let zoo = reference::zoo();
    println!("{:>6} {:>10} {:>10} {:>10}", "x", "model1", "model2", "truth");
    for i in 0..=12 {
        let x = 0.1 * i as f64;
        let g: Vec<f64> = zoo.iter().map(|m| m.curve.net_growth(x)).collect::<ftlab::Result<_>>()?;
        println!("{x:>6.2} {:>10.4} {:>10.4} {:>10.4}", g[0], g[1], g[2]);
    }
    for m in zoo.iter() {
        println!(
            "{:<7} peak net growth at {:.4}, discounted escapement {:.4}",
            m.label(),
            peak_net_growth(&m.curve),
            reed_escapement(&m.curve, reference::DELTA)?
        );
    }
    Ok(())
}
