//! Runs the Monte Carlo depth sweep and prints the revenue/relevance
//! tradeoff between GFP and the matching mechanism as the number of
//! participating jobs grows.
//!
//! Run with: `cargo run --release --example depth_sweep`

use auctionlab::cli::summary_csv;
use auctionlab::simulation::{run_sweep, SimulationConfig};

fn main() -> auctionlab::Result<()> {
    let config = SimulationConfig {
        seeker_count: 800,
        depth_grid: vec![2, 4, 8, 16],
        seed: 7,
        ..SimulationConfig::default()
    };

    println!(
        "sweeping {} seekers per depth over n = {:?} (seed {})\n",
        config.seeker_count, config.depth_grid, config.seed
    );
    let report = run_sweep(&config, false)?;

    println!("{:>4} | {:>9} {:>9} | {:>9} {:>9} | {:>9}", "n", "rev gfp", "rev vcg", "rel gfp", "rel vcg", "rel lift");
    println!("{}", "-".repeat(62));
    for d in &report.depths {
        let s = &d.summary;
        println!(
            "{:>4} | {:>9.4} {:>9.4} | {:>9.4} {:>9.4} | {:>8.2}%",
            d.n,
            s.rev_gfp,
            s.rev_vcg,
            s.rel_gfp,
            s.rel_vcg,
            100.0 * (s.rel_vcg / s.rel_gfp - 1.0)
        );
    }

    println!("\nsummary CSV (what `auctionlab simulate` writes):\n");
    print!("{}", summary_csv(&report));
    Ok(())
}
