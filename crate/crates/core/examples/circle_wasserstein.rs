//! Circular W1 between grid distributions.
//!
//! Shows the shift-median formula on a few pairs: rotations, antipodal point
//! masses and two wrapped Gaussians straddling the seam.

use mfucrl::torus::{wasserstein1_circle, GridDistribution};

fn main() -> mfucrl::Result<()> {
    let m = 100;
    let bump = GridDistribution::wrapped_gaussian(m, 0.25, 0.05)?;
    for k in [1, 10, 25, 50] {
        let d = wasserstein1_circle(&bump, &bump.rotate(k))?;
        println!("bump vs rotated by {k:>2} bins: W1 = {d:.6}");
    }
    let a = GridDistribution::point_mass(m, 0)?;
    let b = GridDistribution::point_mass(m, m / 2)?;
    println!("antipodal point masses: W1 = {:.6}", wasserstein1_circle(&a, &b)?);

    // Mass near 0.95 and near 0.05 is close across the seam.
    let left = GridDistribution::wrapped_gaussian(m, 0.95, 0.02)?;
    let right = GridDistribution::wrapped_gaussian(m, 0.05, 0.02)?;
    println!("across the seam: W1 = {:.6}", wasserstein1_circle(&left, &right)?);
    let uniform = GridDistribution::uniform(m)?;
    println!("bump vs uniform: W1 = {:.6}", wasserstein1_circle(&bump, &uniform)?);
    Ok(())
}
