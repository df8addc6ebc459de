//! Prints per-group GU on the test split of a default simulation for each
//! oracle bias given on the command line (default: 0 and 0.8).

use itemfair::dataset::Split;
use itemfair::pipeline::SimulationRun;
use itemfair::simulator::SimConfig;

fn main() -> itemfair::Result<()> {
    let betas: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let betas = if betas.is_empty() { vec![0.0, 0.8] } else { betas };
    for beta in betas {
        let run = SimulationRun::generate(&SimConfig {
            oracle_bias: beta,
            ..SimConfig::default()
        })?;
        for r in run.baseline(Split::Test, &[1, 20])? {
            let gu: Vec<String> = r.gu.iter().map(|(g, v)| format!("{g}:{v:+.4}")).collect();
            println!(
                "beta={beta} k={:<2} mgu={:.4} ndcg={:.4} gu=[{}]",
                r.k,
                r.mgu,
                r.ndcg,
                gu.join(" ")
            );
        }
    }
    Ok(())
}
