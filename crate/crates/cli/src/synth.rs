//! Synthetic expression-study table: 4374 two-sided p-values that split into
//! bins of 1374 (p > 0.7), 1500 (0.15 <= p <= 0.7) and 1500 (p < 0.15).

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sgbh::simulate::{z_to_p, Sided};

pub const BIN_EDGES: (f64, f64) = (0.15, 0.7);
pub const BIN_SIZES: [usize; 3] = [1374, 1500, 1500];
/// Fraction of draws with a shifted mean.
const SIGNAL_FRACTION: f64 = 0.2;

/// Draws from a null/shifted Gaussian mixture until every bin is full,
/// discarding draws that land in a full bin. Rows are written in draw order.
pub fn table(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = BIN_EDGES;
    let mut filled = [0usize; 3];
    let mut out = String::from("id,pvalue\n");
    let mut id = 0usize;
    while filled.iter().zip(BIN_SIZES).any(|(f, n)| *f < n) {
        let mu = if rng.random_bool(SIGNAL_FRACTION) {
            rng.random_range(1.0..3.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
        } else {
            0.0
        };
        let e: f64 = rng.sample(StandardNormal);
        let p = z_to_p(&[mu + e], Sided::Two).expect("finite z").as_slice()[0];
        let bin = if p > b { 0 } else if p >= a { 1 } else { 2 };
        if filled[bin] < BIN_SIZES[bin] {
            filled[bin] += 1;
            id += 1;
            let _ = writeln!(out, "gene{id:05},{p}");
        }
    }
    out
}
