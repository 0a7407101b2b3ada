//! Probability distributions on the unit torus `[0, 1)`, discretized on a
//! uniform grid.
//!
//! A [`GridDistribution`] with `M` bins stores density heights at the grid
//! points `m_i = i / M` (zero based). Bin `i` is the half-open interval
//! `[m_i - 1/(2M), m_i + 1/(2M))` and carries mass `heights[i] / M`, so a
//! normalized distribution has `sum(heights) == M`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Densities below this value are clamped before taking logarithms.
pub const DENSITY_FLOOR: f64 = 1e-8;

/// Map any real onto `[0, 1)`.
#[inline]
pub fn wrap(s: f64) -> f64 {
    let w = s - s.floor();
    // `s - floor(s)` rounds up to 1.0 for tiny negative inputs.
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Map a displacement onto `(-0.5, 0.5]`.
#[inline]
pub fn wrap_signed(d: f64) -> f64 {
    let w = wrap(d);
    if w > 0.5 {
        w - 1.0
    } else {
        w
    }
}

/// Shortest distance between two points on the unit circle.
#[inline]
pub fn circle_distance(x: f64, y: f64) -> f64 {
    wrap_signed(x - y).abs()
}

/// A position on the unit torus, always in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorusPoint(f64);

impl TorusPoint {
    pub fn new(s: f64) -> Self {
        TorusPoint(wrap(s))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<TorusPoint> for f64 {
    fn from(p: TorusPoint) -> f64 {
        p.0
    }
}

/// Histogram density on the unit torus.
///
/// Serializes as a plain JSON array of heights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GridDistribution {
    heights: Vec<f64>,
}

impl TryFrom<Vec<f64>> for GridDistribution {
    type Error = Error;

    fn try_from(heights: Vec<f64>) -> Result<Self> {
        GridDistribution::from_heights(heights)
    }
}

impl From<GridDistribution> for Vec<f64> {
    fn from(d: GridDistribution) -> Vec<f64> {
        d.heights
    }
}

fn check_grid(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidGrid(format!(
            "grid needs at least 2 bins, got {m}"
        )));
    }
    Ok(())
}

impl GridDistribution {
    /// The uniform distribution: every height is 1.
    pub fn uniform(m: usize) -> Result<Self> {
        check_grid(m)?;
        Ok(GridDistribution {
            heights: vec![1.0; m],
        })
    }

    /// Sample `density` at the grid points and normalize.
    pub fn from_density(m: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        check_grid(m)?;
        let heights = (0..m).map(|i| density(i as f64 / m as f64)).collect();
        Self::from_heights(heights)
    }

    /// Validate raw heights (finite, non-negative, positive total) and
    /// normalize them to unit mass.
    pub fn from_heights(mut heights: Vec<f64>) -> Result<Self> {
        check_grid(heights.len())?;
        if let Some((i, h)) = heights
            .iter()
            .enumerate()
            .find(|(_, h)| !h.is_finite() || **h < 0.0)
        {
            return Err(Error::InvalidDensity(format!(
                "height {h} at grid point {i} is negative or not finite"
            )));
        }
        let total: f64 = heights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDensity("total mass is zero".into()));
        }
        let scale = heights.len() as f64 / total;
        heights.iter_mut().for_each(|h| *h *= scale);
        Ok(GridDistribution { heights })
    }

    /// Heights already known to be non-negative and finite; only the total
    /// is rescaled.
    pub(crate) fn from_raw_unchecked(mut heights: Vec<f64>) -> Self {
        let total: f64 = heights.iter().sum();
        let scale = heights.len() as f64 / total;
        heights.iter_mut().for_each(|h| *h *= scale);
        GridDistribution { heights }
    }

    /// Heights taken as-is, without rescaling. Only for inspecting
    /// unnormalized operator output.
    pub(crate) fn from_parts_unnormalized(heights: Vec<f64>) -> Self {
        GridDistribution { heights }
    }

    /// All mass in bin `bin`.
    pub fn point_mass(m: usize, bin: usize) -> Result<Self> {
        check_grid(m)?;
        let mut heights = vec![0.0; m];
        heights[bin % m] = m as f64;
        Ok(GridDistribution { heights })
    }

    /// Wrapped normal density sampled at the grid points.
    pub fn wrapped_gaussian(m: usize, mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::InvalidDensity(format!(
                "gaussian std must be positive, got {std}"
            )));
        }
        let periods = (6.0 * std).ceil() as i64 + 1;
        Self::from_density(m, |s| {
            (-periods..=periods)
                .map(|k| {
                    let x = (s - mean + k as f64) / std;
                    (-0.5 * x * x).exp()
                })
                .sum()
        })
    }

    /// Empirical histogram of particle positions (nearest grid point).
    pub fn from_samples(m: usize, samples: &[f64]) -> Result<Self> {
        check_grid(m)?;
        if samples.is_empty() {
            return Err(Error::InvalidDensity("no samples".into()));
        }
        let mut counts = vec![0.0; m];
        for &s in samples {
            counts[bin_of(s, m)] += 1.0;
        }
        Self::from_heights(counts)
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.heights.len()
    }

    #[inline]
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Grid point `m_i = i / M`.
    #[inline]
    pub fn grid_point(&self, i: usize) -> f64 {
        i as f64 / self.m() as f64
    }

    /// Total mass `(1/M) * sum(heights)`.
    pub fn mass(&self) -> f64 {
        self.heights.iter().sum::<f64>() / self.m() as f64
    }

    /// Density at an arbitrary point, linearly interpolated between the two
    /// neighbouring grid points with periodic indexing.
    pub fn density_at(&self, s: f64) -> f64 {
        let m = self.m();
        let x = wrap(s) * m as f64;
        let lo = x.floor();
        let t = x - lo;
        let i = (lo as usize) % m;
        let j = (i + 1) % m;
        if t == 0.0 {
            return self.heights[i];
        }
        (1.0 - t) * self.heights[i] + t * self.heights[j]
    }

    /// `ln` of the interpolated density, clamped below at [`DENSITY_FLOOR`].
    pub fn ln_density_at(&self, s: f64) -> f64 {
        self.density_at(s).max(DENSITY_FLOOR).ln()
    }

    /// Draw `n` i.i.d. points by inverting the CDF of the piecewise-constant
    /// density. Deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<TorusPoint> {
        let mut rng = seed::rng(seed, &[seed::tag::SAMPLE]);
        self.sample_with(n, &mut rng)
    }

    pub(crate) fn sample_with(&self, n: usize, rng: &mut impl Rng) -> Vec<TorusPoint> {
        let m = self.m();
        let mf = m as f64;
        let mut cdf = Vec::with_capacity(m);
        let mut acc = 0.0;
        for h in &self.heights {
            acc += h / mf;
            cdf.push(acc);
        }
        let last_nonzero = self.heights.iter().rposition(|&h| h > 0.0).unwrap_or(0);
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen::<f64>() * acc;
                let mut i = cdf.partition_point(|&c| c <= u);
                if i >= m {
                    i = last_nonzero;
                }
                let lower = if i == 0 { 0.0 } else { cdf[i - 1] };
                let p = self.heights[i] / mf;
                let t = if p > 0.0 {
                    ((u - lower) / p).clamp(0.0, 1.0 - f64::EPSILON)
                } else {
                    0.5
                };
                TorusPoint::new((i as f64 - 0.5 + t) / mf)
            })
            .collect()
    }

    /// Rotate by `bins` grid steps (positive moves mass towards larger `s`).
    pub fn rotate(&self, bins: isize) -> GridDistribution {
        let m = self.m() as isize;
        let mut heights = vec![0.0; self.m()];
        for (i, h) in self.heights.iter().enumerate() {
            heights[(i as isize + bins).rem_euclid(m) as usize] = *h;
        }
        GridDistribution { heights }
    }

    /// Average-pool the heights into `f` equal blocks.
    pub fn pooled(&self, f: usize) -> Result<Vec<f64>> {
        let m = self.m();
        if f == 0 || m % f != 0 {
            return Err(Error::config(
                "feat_mode",
                format!("global pooling width {f} does not divide grid size {m}"),
            ));
        }
        let w = m / f;
        Ok(self
            .heights
            .chunks(w)
            .map(|c| c.iter().sum::<f64>() / w as f64)
            .collect())
    }

    /// Circular mean position (argument of the first Fourier moment).
    pub fn circular_mean(&self) -> f64 {
        let (mut c, mut s) = (0.0, 0.0);
        for (i, h) in self.heights.iter().enumerate() {
            let th = std::f64::consts::TAU * self.grid_point(i);
            c += h * th.cos();
            s += h * th.sin();
        }
        wrap(s.atan2(c) / std::f64::consts::TAU)
    }

    /// One CSV record: `label, h_1, ..., h_M`.
    pub fn csv_record(&self, label: impl ToString) -> Vec<String> {
        std::iter::once(label.to_string())
            .chain(self.heights.iter().map(|h| h.to_string()))
            .collect()
    }

    /// CSV header `h,m_1,...,m_M`.
    pub fn csv_header(m: usize) -> Vec<String> {
        std::iter::once("h".to_string())
            .chain((1..=m).map(|i| format!("m_{i}")))
            .collect()
    }
}

/// Nearest grid bin of a point.
#[inline]
pub fn bin_of(s: f64, m: usize) -> usize {
    ((wrap(s) * m as f64).round() as usize) % m
}

/// Wasserstein-1 distance on the unit circle between two grid distributions.
///
/// With `D_i` the difference of the two CDFs on `[m_i, m_{i+1})`, the
/// circular distance is `min_alpha (1/M) sum_i |D_i - alpha|`, attained at a
/// median of the `D_i`.
pub fn wasserstein1_circle(a: &GridDistribution, b: &GridDistribution) -> Result<f64> {
    if a.m() != b.m() {
        return Err(Error::GridMismatch {
            left: a.m(),
            right: b.m(),
        });
    }
    let m = a.m();
    let mf = m as f64;
    let mut diffs = Vec::with_capacity(m);
    let mut acc = 0.0;
    for (x, y) in a.heights.iter().zip(&b.heights) {
        acc += (x - y) / mf;
        diffs.push(acc);
    }
    let mut sorted = diffs.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(m - 1) / 2];
    Ok(diffs.iter().map(|d| (d - median).abs()).sum::<f64>() / mf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_has_unit_heights() {
        let d = GridDistribution::uniform(4).unwrap();
        assert_eq!(d.heights(), &[1.0; 4]);
        let d = GridDistribution::uniform(200).unwrap();
        assert!(d.heights().iter().all(|&h| h == 1.0));
        assert!(matches!(
            GridDistribution::uniform(1),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn from_density_normalizes_and_rejects_negative() {
        let d = GridDistribution::from_density(4, |_| 1.0).unwrap();
        assert_eq!(d.heights(), &[1.0; 4]);
        let d = GridDistribution::from_density(7, |s| 3.0 + s).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
        let err = GridDistribution::from_density(4, |s| if s > 0.4 { -1.0 } else { 1.0 });
        assert!(matches!(err, Err(Error::InvalidDensity(_))));
    }

    #[test]
    fn wrap_ranges() {
        assert_eq!(wrap(1.25), 0.25);
        assert_eq!(wrap(-0.25), 0.75);
        assert_eq!(wrap(-1e-20), 0.0);
        assert!((wrap(0.3 + 1.0) - 0.3).abs() < 1e-15);
        assert_eq!(wrap_signed(0.75), -0.25);
        assert_eq!(wrap_signed(0.5), 0.5);
        assert_eq!(wrap_signed(-0.5), 0.5);
    }

    #[test]
    fn density_at_nodes_and_between() {
        let u = GridDistribution::uniform(4).unwrap();
        assert_eq!(u.density_at(0.37), 1.0);
        let d = GridDistribution::from_heights(vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(d.density_at(0.0), d.heights()[0]);
        assert_eq!(d.density_at(1.0), d.heights()[0]);
        // halfway between m_4 = 0.75 and m_1 = 0 (wrapped)
        assert!((d.density_at(0.875) - 0.5 * d.heights()[0]).abs() < 1e-12);
    }

    #[test]
    fn point_mass_samples_stay_in_bin() {
        let m = 10;
        let d = GridDistribution::point_mass(m, 0).unwrap();
        for p in d.sample(5, 3) {
            assert!(circle_distance(p.get(), 0.0) <= 0.5 / m as f64);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = GridDistribution::from_density(50, |s| 1.5 + (6.0 * s).sin()).unwrap();
        assert_eq!(d.sample(100, 11), d.sample(100, 11));
        assert_ne!(d.sample(100, 11), d.sample(100, 12));
    }

    #[test]
    fn uniform_samples_are_balanced() {
        let n = 100_000;
        let d = GridDistribution::uniform(100).unwrap();
        let mean: f64 = d
            .sample(n, 5)
            .iter()
            .map(|p| (std::f64::consts::TAU * p.get()).cos())
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn w1_named_cases() {
        let a = GridDistribution::point_mass(8, 0).unwrap();
        assert_eq!(wasserstein1_circle(&a, &a).unwrap(), 0.0);
        let half = GridDistribution::point_mass(8, 4).unwrap();
        assert!((wasserstein1_circle(&a, &half).unwrap() - 0.5).abs() < 1e-15);
        let quarter = GridDistribution::point_mass(8, 2).unwrap();
        assert!((wasserstein1_circle(&a, &quarter).unwrap() - 0.25).abs() < 1e-15);
        // the short way round
        let back = GridDistribution::point_mass(8, 7).unwrap();
        assert!((wasserstein1_circle(&a, &back).unwrap() - 0.125).abs() < 1e-15);
        let other = GridDistribution::uniform(9).unwrap();
        assert!(matches!(
            wasserstein1_circle(&a, &other),
            Err(Error::GridMismatch { left: 8, right: 9 })
        ));
    }

    #[test]
    fn pooling() {
        let u = GridDistribution::uniform(8).unwrap();
        assert_eq!(u.pooled(4).unwrap(), vec![1.0; 4]);
        assert!(u.pooled(3).is_err());
    }

    #[test]
    fn json_is_a_height_array() {
        let d = GridDistribution::from_heights(vec![1.0, 3.0]).unwrap();
        assert_eq!(serde_json::to_string(&d).unwrap(), "[0.5,1.5]");
        let back: GridDistribution = serde_json::from_str("[0.5,1.5]").unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<GridDistribution>("[-1.0,1.0]").is_err());
    }
}
