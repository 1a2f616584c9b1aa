//! Seeded random streams, uniform boxes and space-filling designs.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::special::normal_inv_cdf;
use crate::{Error, Result};

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seeded pseudo-random source identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose 64-bit stream selector gives independent
/// substreams without coordination. Equal identities replay equal
/// sequences; [`RandomStream::split`] derives child streams from the
/// identity alone, so children do not depend on how far the parent has
/// been consumed.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream number `child` of this stream.
    pub fn split(&self, child: u64) -> RandomStream {
        let derived = splitmix64(self.seed ^ splitmix64(self.stream_id.rotate_left(17) ^ 0xA5A5));
        RandomStream::new(derived, child)
    }

    /// Uniform variate in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Uniform variate in the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * TWO_POW_M53
    }

    /// Standard normal variate by inversion; consumes exactly one 64-bit word.
    pub fn standard_normal(&mut self) -> f64 {
        normal_inv_cdf(self.uniform_open())
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.standard_normal();
        }
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Draws one standard normal variate from `stream`.
pub fn standard_normal(stream: &mut RandomStream) -> f64 {
    stream.standard_normal()
}

/// Axis-aligned box `[lower_i, upper_i]`, the support of independent uniform
/// hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UniformBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl UniformBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid(format!(
                "box bounds must be non-empty and of equal length ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!(
                    "box side {i} is empty or not finite: [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The box `nominal_i * (1 -/+ fraction)`.
    pub fn around(nominal: &[f64], fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::domain(
                "UniformBox::around",
                format!("perturbation {fraction} not in (0, 1)"),
            ));
        }
        let (lower, upper) = nominal
            .iter()
            .map(|&x| {
                let a = x * (1.0 - fraction);
                let b = x * (1.0 + fraction);
                (a.min(b), a.max(b))
            })
            .unzip();
        Self::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Maps `u` in `[0, 1]` onto side `i`.
    pub fn from_unit(&self, i: usize, u: f64) -> f64 {
        self.lower[i] + (self.upper[i] - self.lower[i]) * u
    }

    /// Maps a coordinate of side `i` onto `[0, 1]`.
    pub fn to_unit(&self, i: usize, x: f64) -> f64 {
        (x - self.lower[i]) / (self.upper[i] - self.lower[i])
    }
}

/// Latin hypercube design of `n` points in `bounds`.
///
/// Column by column, rows receive a random permutation of the `n` strata and
/// a uniform position inside their stratum.
pub fn lhs_sample(bounds: &UniformBox, n: usize, stream: &mut RandomStream) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::EmptyDesign);
    }
    let m = bounds.dim();
    let mut rows = alloc::vec![alloc::vec![0.0; m]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..m {
        strata.shuffle(stream);
        for (row, &k) in rows.iter_mut().zip(&strata) {
            let u = (k as f64 + stream.uniform()) / n as f64;
            // (k + u)/n can round up to the next stratum edge for huge n
            let u = u.min(libm::nextafter((k + 1) as f64 / n as f64, 0.0));
            row[j] = bounds.from_unit(j, u);
        }
    }
    Ok(rows)
}

/// `n` independent uniform points in `bounds`.
pub fn uniform_box_sample(bounds: &UniformBox, n: usize, stream: &mut RandomStream) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::EmptyDesign);
    }
    Ok((0..n)
        .map(|_| {
            (0..bounds.dim())
                .map(|j| bounds.from_unit(j, stream.uniform()))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit(m: usize) -> UniformBox {
        UniformBox::new(vec![0.0; m], vec![1.0; m]).unwrap()
    }

    #[test]
    fn normal_moments() {
        let mut s = RandomStream::new(11, 0);
        let n = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = s.standard_normal();
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.004, "mean {mean}");
        assert!((var - 1.0).abs() < 0.005, "var {var}");
    }

    #[test]
    fn identical_streams_replay() {
        let mut a = RandomStream::new(7, 0);
        let mut b = RandomStream::new(7, 0);
        for _ in 0..100 {
            assert_eq!(standard_normal(&mut a).to_bits(), standard_normal(&mut b).to_bits());
        }
        assert_ne!(RandomStream::new(7, 0).next_u64(), RandomStream::new(7, 1).next_u64());
    }

    #[test]
    fn split_ignores_parent_consumption() {
        let fresh = RandomStream::new(3, 5);
        let mut used = RandomStream::new(3, 5);
        used.uniform();
        let mut a = fresh.split(9);
        let mut b = used.split(9);
        assert_eq!(a.next_u64(), b.next_u64());
        assert_ne!(fresh.split(1).next_u64(), fresh.split(2).next_u64());
    }

    #[test]
    fn lhs_quartiles() {
        let mut s = RandomStream::new(1, 0);
        let mut x: Vec<f64> = lhs_sample(&unit(1), 4, &mut s)
            .unwrap()
            .into_iter()
            .map(|r| r[0])
            .collect();
        x.sort_by(f64::total_cmp);
        for (k, v) in x.iter().enumerate() {
            assert!(*v >= k as f64 / 4.0 && *v < (k + 1) as f64 / 4.0);
        }
    }

    #[test]
    fn lhs_two_strata() {
        let mut s = RandomStream::new(2, 0);
        let d = lhs_sample(&unit(2), 2, &mut s).unwrap();
        for j in 0..2 {
            let below = d.iter().filter(|r| r[j] < 0.5).count();
            assert_eq!(below, 1);
        }
    }

    #[test]
    fn lhs_mean_beats_plain_monte_carlo() {
        // plain MC mean error on U(a,b) with n=1000 has sd (b-a)/sqrt(12 n) ~ 0.9% of the width;
        // stratification removes the between-stratum part and leaves ~1/n of it.
        let bounds = UniformBox::new(vec![0.0, 1.0, -3.0], vec![1.0, 5.0, 3.0]).unwrap();
        let mut s = RandomStream::new(5, 0);
        let d = lhs_sample(&bounds, 1000, &mut s).unwrap();
        let mid = bounds.midpoint();
        for j in 0..3 {
            let mean = d.iter().map(|r| r[j]).sum::<f64>() / 1000.0;
            let width = bounds.upper()[j] - bounds.lower()[j];
            let mc_sd = width / libm::sqrt(12.0 * 1000.0);
            assert!((mean - mid[j]).abs() < 0.005 * width.max(mid[j].abs()));
            assert!((mean - mid[j]).abs() < 0.1 * mc_sd);
        }
    }

    #[test]
    fn empty_designs_are_rejected() {
        let mut s = RandomStream::new(0, 0);
        assert_eq!(lhs_sample(&unit(1), 0, &mut s), Err(Error::EmptyDesign));
        assert_eq!(uniform_box_sample(&unit(1), 0, &mut s), Err(Error::EmptyDesign));
    }

    #[test]
    fn uniform_box_mean() {
        let bounds = UniformBox::new(vec![0.0], vec![2.0]).unwrap();
        let mut s = RandomStream::new(8, 0);
        let d = uniform_box_sample(&bounds, 100_000, &mut s).unwrap();
        let mean = d.iter().map(|r| r[0]).sum::<f64>() / 1e5;
        assert!((mean - 1.0).abs() < 0.01);
        let again = uniform_box_sample(&bounds, 100_000, &mut RandomStream::new(8, 0)).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn box_validation() {
        assert!(UniformBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(UniformBox::new(vec![], vec![]).is_err());
        let b = UniformBox::around(&[10.0, -2.0], 0.1).unwrap();
        assert_eq!(b.lower(), &[9.0, -2.2]);
        assert!(UniformBox::around(&[1.0], 1.5).is_err());
    }
}
