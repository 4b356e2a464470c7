mod common;

use common::stats::observations;
use common::within_3_sigma;

#[test]
fn bernoulli_draws_within_three_sigma() {
    let obs = observations();
    let bad: Vec<_> = obs.iter().filter(|o| !within_3_sigma(o.hits, o.n, o.p)).collect();
    assert!(bad.is_empty(), "outside 3 sigma: {bad:#?}");
}
