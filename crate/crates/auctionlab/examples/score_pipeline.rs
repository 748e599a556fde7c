//! Builds one auction instance by hand and walks the scoring pipeline:
//! position-aware scores, slot averages, and position-unaware scores.
//!
//! Run with: `cargo run --example score_pipeline`

use auctionlab::score::{
    score_position_aware, score_position_unaware, slot_average, QueryInstance, ScoreCombiner,
    SquareMatrix,
};

fn main() -> auctionlab::Result<()> {
    // Three jobs, three slots. Click-through and relevance both fall off
    // with the slot, and job 2 is the relevance star while job 0 carries
    // the big bid.
    let instance = QueryInstance::new(
        "demo-seeker",
        vec![4.0, 1.5, 0.8],
        SquareMatrix::from_rows(vec![
            vec![0.30, 0.19, 0.15],
            vec![0.28, 0.18, 0.14],
            vec![0.35, 0.22, 0.17],
        ])?,
        SquareMatrix::from_rows(vec![
            vec![0.20, 0.13, 0.10],
            vec![0.50, 0.32, 0.25],
            vec![0.90, 0.57, 0.45],
        ])?,
        2.0, // money per unit of relevance for this seeker
    )?;

    let combiner = ScoreCombiner::Additive;
    let scores = score_position_aware(&instance, combiner)?;

    println!("position-aware scores s[j][k] = bid*pctr + weight*erelevance:");
    for j in 0..instance.n() {
        let row: Vec<String> = scores.row(j).iter().map(|s| format!("{s:.3}")).collect();
        println!("  job {j}: [{}]", row.join(", "));
    }

    let view = slot_average(&instance, &scores)?;
    println!("\nslot averages per job:");
    for j in 0..instance.n() {
        println!(
            "  job {j}: pctr_bar = {:.3}, erelevance_bar = {:.3}, score_bar = {:.3}",
            view.pctr_bar[j], view.erelevance_bar[j], view.score_bar[j]
        );
    }

    let s_bar = score_position_unaware(&view, &instance, combiner)?;
    println!("\nposition-unaware scores from averaged estimates:");
    for (j, s) in s_bar.iter().enumerate() {
        println!("  job {j}: {s:.3}");
    }

    // With the additive combiner these coincide with score_bar; with a
    // different combiner they may not.
    let poster_only = QueryInstance { seeker_weight: 0.0, ..instance.clone() };
    let poster_scores = score_position_aware(&poster_only, combiner)?;
    println!("\nwith the seeker weight at zero the score is pure bid*pctr:");
    println!(
        "  job 0, slot 0: {:.3} (bid {} x pctr {})",
        poster_scores.get(0, 0),
        poster_only.bids[0],
        poster_only.pctr.get(0, 0)
    );

    Ok(())
}
