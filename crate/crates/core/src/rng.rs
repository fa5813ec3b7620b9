//! Counter-based random streams.
//!
//! Every random draw in a campaign comes from a ChaCha8 generator keyed by
//! the master seed and positioned on a stream id derived from
//! `(setup, realization)`. A work item can therefore be evaluated on any
//! thread, in any order, and still see exactly the same numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use num_complex::Complex64;

/// Stream of the topology draw (positions, shadowing) of a setup.
pub fn setup_stream(seed: u64, setup: usize) -> ChaCha8Rng {
    stream(seed, (setup as u64) << 32)
}

/// Stream of one channel realization inside a setup.
pub fn realization_stream(seed: u64, setup: usize, realization: usize) -> ChaCha8Rng {
    assert!(
        (realization as u64) < u32::MAX as u64,
        "realization index exceeds stream budget"
    );
    stream(seed, ((setup as u64) << 32) | (realization as u64 + 1))
}

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// One draw of CN(0, 1).
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn fill_complex_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [Complex64]) {
    for z in out {
        *z = complex_normal(rng);
    }
}
