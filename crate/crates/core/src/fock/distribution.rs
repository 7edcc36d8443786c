use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Probabilities over multimode occupation vectors.
///
/// Sums below one are expected under truncation. Fitted populations are
/// stored in the same type and are not constrained to sum to one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FockDistribution {
    entries: BTreeMap<Vec<usize>, f64>,
}

impl FockDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from `(occupation, probability)` pairs; repeated keys accumulate.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        let mut d = Self::new();
        for (n, p) in entries {
            d.add(n, p)?;
        }
        Ok(d)
    }

    pub fn add(&mut self, occupation: Vec<usize>, p: f64) -> Result<()> {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::invalid(format!(
                "probability for {occupation:?} must be finite and non-negative, got {p}"
            )));
        }
        if let Some(m) = self.num_modes() {
            if m != occupation.len() {
                return Err(Error::invalid(format!(
                    "occupation {occupation:?} has {} mode(s), expected {m}",
                    occupation.len()
                )));
            }
        }
        *self.entries.entry(occupation).or_insert(0.0) += p;
        Ok(())
    }

    pub fn num_modes(&self) -> Option<usize> {
        self.entries.keys().next().map(Vec::len)
    }

    pub fn get(&self, occupation: &[usize]) -> f64 {
        self.entries.get(occupation).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.entries.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Copy rescaled to unit total.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::ZeroVector("distribution has zero total".into()));
        }
        Ok(Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v / total))
                .collect(),
        })
    }

    /// `Σ p_n (−1)^{Σ_{j∈mask} n_j}` with 0-based mode indices. An empty
    /// mask yields the total weight (i.e. +1 for a normalized distribution).
    pub fn parity(&self, mask: &[usize]) -> f64 {
        self.entries
            .iter()
            .map(|(n, p)| parity_sign(n, mask) * p)
            .sum()
    }

    pub fn marginal(&self, mode: usize) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for (n, p) in &self.entries {
            *out.entry(n[mode]).or_insert(0.0) += p;
        }
        out
    }

    pub fn mean_occupation(&self, mode: usize) -> f64 {
        self.entries.iter().map(|(n, p)| n[mode] as f64 * p).sum()
    }

    /// Largest absolute per-cell difference, treating missing cells as zero.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for (n, p) in &self.entries {
            worst = worst.max((p - other.get(n)).abs());
        }
        for (n, q) in &other.entries {
            if !self.entries.contains_key(n) {
                worst = worst.max(q.abs());
            }
        }
        worst
    }

    /// Checks non-negativity and `Σp ≤ 1 + tol`.
    pub fn is_subnormalized(&self, tol: f64) -> bool {
        self.entries.values().all(|&p| p >= 0.0) && self.total() <= 1.0 + tol
    }
}

pub(crate) fn parity_sign(n: &[usize], mask: &[usize]) -> f64 {
    let s: usize = mask.iter().map(|&j| n[j]).sum();
    if s % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn occupation_key(n: &[usize]) -> String {
    n.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_occupation_key(key: &str) -> Result<Vec<usize>> {
    key.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad occupation key {key:?}")))
        })
        .collect()
}

impl Serialize for FockDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(self.entries.len()))?;
        for (n, p) in &self.entries {
            map.serialize_entry(&occupation_key(n), p)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for FockDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<String, f64>::deserialize(deserializer)?;
        let entries = raw
            .into_iter()
            .map(|(k, v)| parse_occupation_key(&k).map(|n| (n, v)))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        FockDistribution::from_entries(entries).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_and_marginals() {
        let d = FockDistribution::from_entries([
            (vec![0, 0], 0.5),
            (vec![1, 0], 0.25),
            (vec![1, 1], 0.25),
        ])
        .unwrap();
        assert!((d.parity(&[0]) - 0.0).abs() < 1e-15);
        assert!((d.parity(&[0, 1]) - 0.5).abs() < 1e-15);
        assert!((d.parity(&[]) - 1.0).abs() < 1e-15);
        assert!((d.mean_occupation(0) - 0.5).abs() < 1e-15);
        assert_eq!(d.marginal(1)[&1], 0.25);
    }

    #[test]
    fn rejects_negative_and_ragged() {
        assert!(FockDistribution::from_entries([(vec![0], -0.1)]).is_err());
        assert!(FockDistribution::from_entries([(vec![0], 0.1), (vec![0, 1], 0.1)]).is_err());
    }

    #[test]
    fn json_keys() {
        let d = FockDistribution::from_entries([(vec![1, 2], 0.5), (vec![0, 0], 0.5)]).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"0,0":0.5,"1,2":0.5}"#);
        let back: FockDistribution = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }
}
