//! Sobol' indices of a polynomial chaos surrogate in closed form.
//!
//! With an orthonormal basis every non-constant term contributes its squared
//! coefficient to the variance, so each index is a ratio of coefficient
//! masses over a set of multi-indices selected by their support.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::pce::PCESurrogate;
use crate::{Error, Result};

/// First-order and total indices of every hyper-parameter.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SobolReport {
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Variance share of each interaction group (terms whose support is
    /// exactly the key); the values sum to one.
    #[cfg_attr(feature = "serde", serde(default, with = "interaction_list"))]
    pub interactions: BTreeMap<Vec<usize>, f64>,
}

// JSON object keys must be strings, so the map travels as a list of
// `{support, share}` records.
#[cfg(feature = "serde")]
mod interaction_list {
    use alloc::collections::BTreeMap;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        support: Vec<usize>,
        share: f64,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<Vec<usize>, f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter().map(|(k, v)| Entry {
            support: k.clone(),
            share: *v,
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Vec<usize>, f64>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries.into_iter().map(|e| (e.support, e.share)).collect())
    }
}

/// Indices of a variable subset `u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsetIndex {
    /// Mass of terms supported within `u` (closed index).
    pub closed: f64,
    /// Mass of terms supported on exactly `u` (interaction-only index).
    pub interaction: f64,
}

fn non_constant_mass(s: &PCESurrogate) -> Result<f64> {
    let v = s.variance();
    if !(v > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(v)
}

fn mass_where<F: Fn(&[usize]) -> bool>(s: &PCESurrogate, keep: F) -> f64 {
    s.basis
        .iter()
        .zip(&s.coeffs)
        .filter(|(b, _)| !b.is_constant() && keep(&b.support()))
        .map(|(_, c)| c * c)
        .sum()
}

pub fn first_order_indices(s: &PCESurrogate) -> Result<Vec<f64>> {
    let total = non_constant_mass(s)?;
    Ok((0..s.dim()).map(|i| mass_where(s, |sup| sup == [i]) / total).collect())
}

pub fn total_indices(s: &PCESurrogate) -> Result<Vec<f64>> {
    let total = non_constant_mass(s)?;
    Ok((0..s.dim())
        .map(|i| mass_where(s, |sup| sup.contains(&i)) / total)
        .collect())
}

/// Closed and interaction-only indices of the (0-based) variable set `u`.
pub fn subset_index(s: &PCESurrogate, u: &[usize]) -> Result<SubsetIndex> {
    if u.is_empty() {
        return Err(Error::domain("subset_index", "empty variable subset"));
    }
    if let Some(&bad) = u.iter().find(|&&i| i >= s.dim()) {
        return Err(Error::domain(
            "subset_index",
            format!("variable {bad} outside 0..{}", s.dim()),
        ));
    }
    let mut key = u.to_vec();
    key.sort_unstable();
    key.dedup();
    let total = non_constant_mass(s)?;
    Ok(SubsetIndex {
        closed: mass_where(s, |sup| sup.iter().all(|i| key.contains(i))) / total,
        interaction: mass_where(s, |sup| sup == key.as_slice()) / total,
    })
}

/// Variance share of every support set present in the expansion.
pub fn interaction_partition(s: &PCESurrogate) -> Result<BTreeMap<Vec<usize>, f64>> {
    let total = non_constant_mass(s)?;
    let mut out = BTreeMap::new();
    for (b, c) in s.basis.iter().zip(&s.coeffs) {
        if b.is_constant() {
            continue;
        }
        *out.entry(b.support()).or_insert(0.0) += c * c / total;
    }
    Ok(out)
}

/// Full report: first-order, total, interaction groups, mean and variance.
pub fn sobol_report(s: &PCESurrogate) -> Result<SobolReport> {
    let total = non_constant_mass(s)?;
    let mut first_order = vec![0.0; s.dim()];
    let mut totals = vec![0.0; s.dim()];
    let mut interactions = BTreeMap::new();
    for (b, c) in s.basis.iter().zip(&s.coeffs) {
        if b.is_constant() {
            continue;
        }
        let share = c * c / total;
        let support = b.support();
        if let [only] = support.as_slice() {
            first_order[*only] += share;
        }
        for &i in &support {
            totals[i] += share;
        }
        *interactions.entry(support).or_insert(0.0) += share;
    }
    Ok(SobolReport {
        first_order,
        total: totals,
        mean: s.mean(),
        variance: total,
        interactions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pce::{basis_size, Family, MultiIndex, PCESurrogate};
    use crate::sampling::{lhs_sample, RandomStream, UniformBox};

    fn surrogate_with(dim: usize, order: usize, terms: &[(&[u32], f64)]) -> PCESurrogate {
        let bx = UniformBox::new(vec![0.0; dim], vec![1.0; dim]).unwrap();
        let mut s = PCESurrogate::new(
            bx,
            vec![Family::Legendre; dim],
            order,
            vec![0.0; basis_size(dim, order).unwrap()],
        )
        .unwrap();
        for (idx, c) in terms {
            let k = s.basis.iter().position(|b| b == &MultiIndex(idx.to_vec())).unwrap();
            s.coeffs[k] = *c;
        }
        s
    }

    #[test]
    fn single_variable_terms() {
        let s = surrogate_with(3, 3, &[(&[0, 0, 0], 4.0), (&[1, 0, 0], 1.0), (&[3, 0, 0], -0.5)]);
        assert_eq!(first_order_indices(&s).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(total_indices(&s).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn additive_fit_has_one_to_four_split() {
        // xi1 + 2 xi2 on [0,1]^3: the fitted linear Legendre coefficients are
        // 1/(2 sqrt 3) and 2/(2 sqrt 3), a variance ratio of 1:4
        let bx = UniformBox::new(vec![0.0; 3], vec![1.0; 3]).unwrap();
        let pts = lhs_sample(&bx, 40, &mut RandomStream::new(1, 0)).unwrap();
        let y: Vec<f64> = pts.iter().map(|x| x[0] + 2.0 * x[1]).collect();
        let (s, _) = PCESurrogate::fit(&bx, 2, &pts, &y, 1e6).unwrap();
        let first = first_order_indices(&s).unwrap();
        let total = total_indices(&s).unwrap();
        for (got, want) in first.iter().zip([0.2, 0.8, 0.0]) {
            assert!((got - want).abs() < 1e-10);
        }
        for (f, t) in first.iter().zip(&total) {
            assert!((f - t).abs() < 1e-10);
        }
        assert!((total.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_interaction() {
        let s = surrogate_with(2, 2, &[(&[1, 1], 0.3)]);
        assert_eq!(first_order_indices(&s).unwrap(), vec![0.0, 0.0]);
        assert_eq!(total_indices(&s).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn subset_indices() {
        // xi1 + xi2 xi3 with unit-variance pieces: V1 = a^2, V23 = b^2
        let (a, b) = (0.6, 0.8);
        let s = surrogate_with(3, 2, &[(&[0, 0, 0], 1.0), (&[1, 0, 0], a), (&[0, 1, 1], b)]);
        let idx = subset_index(&s, &[1, 2]).unwrap();
        let expected = b * b / (a * a + b * b);
        assert!((idx.closed - expected).abs() < 1e-15);
        assert!((idx.interaction - expected).abs() < 1e-15);
        assert!((subset_index(&s, &[0, 1, 2]).unwrap().closed - 1.0).abs() < 1e-15);
        let single = subset_index(&s, &[0]).unwrap();
        assert_eq!(single.closed, first_order_indices(&s).unwrap()[0]);
        assert!(subset_index(&s, &[]).is_err());
        assert!(subset_index(&s, &[5]).is_err());
    }

    #[test]
    fn constant_surrogate_is_rejected() {
        let s = surrogate_with(2, 1, &[(&[0, 0], 1.0)]);
        assert_eq!(first_order_indices(&s), Err(Error::ZeroVariance));
        assert_eq!(sobol_report(&s), Err(Error::ZeroVariance));
    }

    #[test]
    fn report_agrees_with_individual_functions() {
        let s = surrogate_with(
            3,
            2,
            &[
                (&[0, 0, 0], 1.0),
                (&[1, 0, 0], 0.5),
                (&[1, 1, 0], 0.2),
                (&[0, 0, 2], -0.3),
            ],
        );
        let r = sobol_report(&s).unwrap();
        assert_eq!(r.first_order, first_order_indices(&s).unwrap());
        assert_eq!(r.total, total_indices(&s).unwrap());
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.interactions, interaction_partition(&s).unwrap());
        assert!((r.interactions.values().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
