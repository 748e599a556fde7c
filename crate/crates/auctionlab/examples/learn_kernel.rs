//! Learns the transition kernel from sampled transitions and shows that the
//! planned policy matches the one computed on the true kernel.
//!
//! Run with: `cargo run --example learn_kernel`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use auctionlab::mdp::{
    learn_and_plan, value_iteration, Episode, MdpModel, ModelSkeleton, Transition,
};

fn main() -> auctionlab::Result<()> {
    // True dynamics, unknown to the planner: staying patient (action 1)
    // drifts the market toward the high-engagement state.
    let true_model = MdpModel {
        states: vec!["cold".into(), "warm".into(), "hot".into()],
        actions: vec![0.5, 2.0],
        gain: vec![vec![1.0, 0.3], vec![1.8, 0.9], vec![5.0, 2.2]],
        kernel: vec![
            vec![vec![0.9, 0.1, 0.0], vec![0.3, 0.6, 0.1]],
            vec![vec![0.5, 0.4, 0.1], vec![0.1, 0.5, 0.4]],
            vec![vec![0.2, 0.5, 0.3], vec![0.0, 0.2, 0.8]],
        ],
        discount: 0.9,
    };
    true_model.validate()?;

    // Collect transitions with a uniformly exploring behavior policy.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut transitions = Vec::new();
    let mut state = 0usize;
    for _ in 0..60_000 {
        let action = rng.random_range(0..2);
        let u: f64 = rng.random_range(0.0..1.0);
        let row = &true_model.kernel[state][action];
        let mut acc = 0.0;
        let mut next_state = row.len() - 1;
        for (x2, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next_state = x2;
                break;
            }
        }
        transitions.push(Transition { state, action, next_state });
        state = next_state;
    }
    println!("collected {} transitions from the true dynamics", transitions.len());

    let skeleton = ModelSkeleton {
        states: true_model.states.clone(),
        actions: true_model.actions.clone(),
        gain: true_model.gain.clone(),
        discount: true_model.discount,
        smoothing: 0.0,
    };
    let plan = learn_and_plan(&[Episode { transitions }], &skeleton, 1e-9, 100_000)?;

    println!("\nestimated kernel vs truth (worst row L1 distance):");
    let mut worst = 0.0_f64;
    for x in 0..3 {
        for a in 0..2 {
            let l1: f64 = plan.model.kernel[x][a]
                .iter()
                .zip(&true_model.kernel[x][a])
                .map(|(p, q)| (p - q).abs())
                .sum();
            worst = worst.max(l1);
        }
    }
    println!("  {worst:.4}");

    let true_result = value_iteration(&true_model, 1e-9, 100_000)?;
    println!("\nstate   learned-weight   true-weight");
    for (x, label) in true_model.states.iter().enumerate() {
        println!(
            "{:6}  {:>14}  {:>12}",
            label,
            plan.model.actions[plan.convergence.policy.actions[x]],
            true_model.actions[true_result.policy.actions[x]]
        );
    }
    assert_eq!(plan.convergence.policy, true_result.policy);
    println!("\nplanned policy matches the true-kernel policy");

    Ok(())
}
