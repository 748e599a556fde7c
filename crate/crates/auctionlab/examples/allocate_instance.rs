//! Allocates one instance under every solver in the crate and compares
//! them: GFP ranking, Hungarian matching, the epsilon-scaling auction, and
//! the brute-force oracle.
//!
//! Run with: `cargo run --example allocate_instance`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use auctionlab::allocation::{
    exactness_schedule, gfp_rank, match_auction_eps, match_brute_force, match_optimal,
    total_score, DEFAULT_AUCTION_SCALE,
};
use auctionlab::score::ScoreMatrix;

fn main() -> auctionlab::Result<()> {
    // The classic capacity trap with two bidders and two items: valuations
    // [[0, 1], [2, 3]]. Greedily handing each item to its highest bidder
    // gives everything to the second bidder, which a one-slot-per-bidder
    // matching cannot do. The optimum totals 3.
    let scores = ScoreMatrix::from_rows(vec![vec![0.0, 1.0], vec![2.0, 3.0]])?;
    println!("2x2 capacity example, scores [[0, 1], [2, 3]]:");

    let optimal = match_optimal(&scores)?;
    println!(
        "  hungarian:   assignment = {:?}, total = {}",
        optimal.matching.as_slice(),
        optimal.total_score
    );

    let brute = match_brute_force(&scores)?;
    println!(
        "  brute force: assignment = {:?}, total = {}",
        brute.matching.as_slice(),
        brute.total_score
    );

    let schedule = exactness_schedule(&scores, DEFAULT_AUCTION_SCALE);
    let auction = match_auction_eps(&scores, &schedule)?;
    println!(
        "  auction:     assignment = {:?}, total = {}, bidding rounds = {}",
        auction.matching.as_slice(),
        auction.total_score,
        auction.iterations.unwrap()
    );

    // A larger random instance, showing how much the position-unaware GFP
    // ranking leaves on the table.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 5;
    let scores = ScoreMatrix::from_fn(n, |_, _| rng.random_range(0.0..4.0));
    let score_bar: Vec<f64> =
        (0..n).map(|j| scores.row(j).iter().sum::<f64>() / n as f64).collect();

    let gfp = gfp_rank(&score_bar)?;
    let optimal = match_optimal(&scores)?;
    println!("\nrandom {n}x{n} instance:");
    println!(
        "  gfp ranking: assignment = {:?}, position-aware total = {:.4}",
        gfp.as_slice(),
        total_score(&scores, &gfp)
    );
    println!(
        "  hungarian:   assignment = {:?}, position-aware total = {:.4}",
        optimal.matching.as_slice(),
        optimal.total_score
    );
    println!(
        "  gap: {:.4} ({:.1}% of the optimum)",
        optimal.total_score - total_score(&scores, &gfp),
        100.0 * (optimal.total_score - total_score(&scores, &gfp)) / optimal.total_score
    );

    Ok(())
}
