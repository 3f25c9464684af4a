use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[low, high]` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct Bounds {
    ranges: Vec<(f64, f64)>,
}

impl Bounds {
    pub fn new(ranges: Vec<(f64, f64)>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::InvalidConfig("bounds need at least one dimension".into()));
        }
        for (dim, &(low, high)) in ranges.iter().enumerate() {
            if !(low < high) || !low.is_finite() || !high.is_finite() {
                return Err(Error::DegenerateBounds { dim, low, high });
            }
        }
        Ok(Bounds { ranges })
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn low(&self, d: usize) -> f64 {
        self.ranges[d].0
    }

    pub fn high(&self, d: usize) -> f64 {
        self.ranges[d].1
    }

    pub fn width(&self, d: usize) -> f64 {
        self.ranges[d].1 - self.ranges[d].0
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.ranges).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.ranges.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect()
    }

    /// Folds each coordinate back into its interval by mirror reflection.
    pub fn reflect(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.ranges) {
            if *v >= lo && *v <= hi {
                continue;
            }
            let w = hi - lo;
            let mut r = (*v - lo).rem_euclid(2.0 * w);
            if r > w {
                r = 2.0 * w - r;
            }
            *v = (lo + r).clamp(lo, hi);
        }
    }
}

impl TryFrom<Vec<(f64, f64)>> for Bounds {
    type Error = Error;

    fn try_from(ranges: Vec<(f64, f64)>) -> Result<Self> {
        Bounds::new(ranges)
    }
}

impl From<Bounds> for Vec<(f64, f64)> {
    fn from(b: Bounds) -> Self {
        b.ranges
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reflection() {
        let b = Bounds::new(vec![(0.0, 1.0)]).unwrap();
        let mut x = [1.2];
        b.reflect(&mut x);
        assert!((x[0] - 0.8).abs() < 1e-12);
        let mut x = [-0.3];
        b.reflect(&mut x);
        assert!((x[0] - 0.3).abs() < 1e-12);
        let mut x = [2.25];
        b.reflect(&mut x);
        assert!((x[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn degenerate() {
        assert!(matches!(Bounds::new(vec![(0.0, 1.0), (2.0, 2.0)]), Err(Error::DegenerateBounds { dim: 1, .. })));
        assert!(Bounds::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn reflected_points_stay_inside(v in -1e4f64..1e4, lo in -10f64..10.0, w in 1e-3f64..20.0) {
            let b = Bounds::new(vec![(lo, lo + w)]).unwrap();
            let mut x = [v];
            b.reflect(&mut x);
            prop_assert!(b.contains(&x));
        }
    }
}
