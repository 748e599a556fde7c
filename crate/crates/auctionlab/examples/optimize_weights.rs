//! Plans a weight policy with value iteration on a small MDP whose states
//! discretize (mean bid, mean erelevance) snapshots.
//!
//! Gains are measured one period at a time by running the allocation
//! pipeline on representative instances, counting revenue only: ranking for
//! relevance costs money today. The kernel supplies the payoff — a market
//! that keeps seeing relevant slates attracts higher bids and relevance
//! later, while bid-dominant ranking erodes both.
//!
//! Run with: `cargo run --release --example optimize_weights`

use auctionlab::mdp::{
    discretize_state, simulated_gain_table, value_iteration, GainKind, GainSimulation, GridSpec,
    MdpModel,
};

/// Drift kernel over a bid-bin x erelevance-bin grid. Investing in
/// relevance (higher weight actions) raises the chance that future bids and
/// relevance drift up; churn drifts them down at a fixed rate regardless.
/// At the top bins there is no headroom left, so investing buys nothing.
fn engagement_kernel(grid: &GridSpec, action_count: usize) -> Vec<Vec<Vec<f64>>> {
    let (nb, ne) = (grid.bid_bins(), grid.erelevance_bins());
    let states = grid.state_count();
    let mut kernel = vec![vec![vec![0.0; states]; action_count]; states];
    for b in 0..nb {
        for e in 0..ne {
            let state = b * ne + e;
            for action in 0..action_count {
                let invest = if action_count == 1 {
                    1.0
                } else {
                    action as f64 / (action_count as f64 - 1.0)
                };
                let up = 0.05 + 0.30 * invest;
                let down = 0.20;

                let row = &mut kernel[state][action];
                let mut stay = 1.0;
                if b + 1 < nb {
                    row[(b + 1) * ne + e] += up;
                    stay -= up;
                }
                if b > 0 {
                    row[(b - 1) * ne + e] += down;
                    stay -= down;
                }
                if e + 1 < ne {
                    row[b * ne + e + 1] += up;
                    stay -= up;
                }
                if e > 0 {
                    row[b * ne + e - 1] += down;
                    stay -= down;
                }
                row[state] += stay.max(0.0);
                let total: f64 = row.iter().sum();
                for p in row.iter_mut() {
                    *p /= total;
                }
            }
        }
    }
    kernel
}

fn main() -> auctionlab::Result<()> {
    let grid = GridSpec::uniform((0.4, 2.4), 3, (0.2, 1.0), 3)?;
    let actions = vec![0.5, 1.0, 2.0];

    println!(
        "estimating revenue gains by simulation over {} states x {} actions...",
        grid.state_count(),
        actions.len()
    );
    let gain = simulated_gain_table(
        &grid,
        &actions,
        &GainSimulation {
            depth: 4,
            samples_per_cell: 256,
            seed: 3,
            gain_kind: GainKind::RevenueOnly,
        },
    )?;

    println!("\nper-period revenue by state and weight (higher weight = less revenue now):");
    println!("{:>8} | {:>8} {:>8} {:>8}", "state", "w=0.5", "w=1.0", "w=2.0");
    let labels = grid.state_labels();
    for (x, label) in labels.iter().enumerate() {
        println!(
            "{:>8} | {:>8.3} {:>8.3} {:>8.3}",
            label, gain[x][0], gain[x][1], gain[x][2]
        );
    }

    let model = MdpModel {
        states: labels,
        actions: actions.clone(),
        gain,
        kernel: engagement_kernel(&grid, actions.len()),
        discount: 0.9,
    };
    model.validate()?;

    let result = value_iteration(&model, 1e-9, 100_000)?;
    println!("converged in {} iterations (residual {:.2e})\n", result.iterations, result.residual);

    println!("{:>8} | {:>8} | {:>10}", "state", "weight", "value");
    println!("{}", "-".repeat(32));
    for (x, label) in model.states.iter().enumerate() {
        println!(
            "{:>8} | {:>8} | {:>10.3}",
            label,
            model.actions[result.policy.actions[x]],
            result.value.values[x]
        );
    }
    println!("\n(states are bid-bin x erelevance-bin; b2_e2 = rich bids, strong relevance)");

    // Where would a live snapshot land?
    let bids = [1.8, 0.9, 1.4];
    let erelevances = [0.45, 0.7, 0.3];
    let state = discretize_state(&bids, &erelevances, &grid)?;
    println!(
        "\nsnapshot with mean bid {:.2} and mean erelevance {:.2} -> state {} ({}), weight {}",
        bids.iter().sum::<f64>() / bids.len() as f64,
        erelevances.iter().sum::<f64>() / erelevances.len() as f64,
        state.index,
        model.states[state.index],
        model.actions[result.policy.actions[state.index]]
    );

    Ok(())
}
