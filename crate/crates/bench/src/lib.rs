//! Shared fixtures for the criterion benches.

use ospc_core::data::{generate_synthetic, stratified_split, CausalDataset, DgpSpec, OracleDgp};
use ospc_core::seed;

/// Synthetic train/test split at size `n` with `d_x = 25`.
pub struct Fixture {
    pub train: CausalDataset,
    pub test: CausalDataset,
    pub oracle: OracleDgp,
}

pub fn fixture(n: usize, seed_: u64) -> Fixture {
    let (data, oracle) = generate_synthetic(&DgpSpec::new(n, 25, seed_)).expect("valid spec");
    let (tr, te) = stratified_split(&data, 0.2, &mut seed::rng(seed::derive_labeled(seed_, "split"))).expect("split");
    Fixture { train: data.subset(&tr), test: data.subset(&te), oracle }
}
