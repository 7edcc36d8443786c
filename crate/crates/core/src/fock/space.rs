use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-level spin label. `Down` is the dark state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Down,
    Up,
}

impl Spin {
    /// Eigenvalue of σ_z: +1 for up, −1 for down.
    pub fn sz(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }

    pub fn bit(self) -> usize {
        match self {
            Spin::Up => 1,
            Spin::Down => 0,
        }
    }

    pub fn from_bit(bit: usize) -> Self {
        if bit & 1 == 1 {
            Spin::Up
        } else {
            Spin::Down
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

/// Truncated spin ⊗ multimode Fock space.
///
/// Basis ordering is part of the public contract: the flat index is
/// `spin_index * motional_dim + motional_index`, where the spin index packs
/// ion 0 into the most significant bit (1 = up), and the motional index is
/// row-major over modes with mode 0 slowest and the last mode fastest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRecord", into = "SpaceRecord")]
pub struct HilbertSpace {
    mode_dims: Vec<usize>,
    spin_count: usize,
    strides: Vec<usize>,
    motional_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct SpaceRecord {
    mode_dims: Vec<usize>,
    spin_count: usize,
}

impl TryFrom<SpaceRecord> for HilbertSpace {
    type Error = Error;

    fn try_from(r: SpaceRecord) -> Result<Self> {
        HilbertSpace::new(&r.mode_dims, r.spin_count)
    }
}

impl From<HilbertSpace> for SpaceRecord {
    fn from(s: HilbertSpace) -> Self {
        SpaceRecord {
            mode_dims: s.mode_dims,
            spin_count: s.spin_count,
        }
    }
}

impl HilbertSpace {
    pub const DEFAULT_DIM_CAP: usize = 65_536;

    pub fn new(mode_dims: &[usize], spin_count: usize) -> Result<Self> {
        Self::with_cap(mode_dims, spin_count, Self::DEFAULT_DIM_CAP)
    }

    pub fn with_cap(mode_dims: &[usize], spin_count: usize, cap: usize) -> Result<Self> {
        if mode_dims.is_empty() {
            return Err(Error::invalid("at least one mode is required"));
        }
        if let Some(j) = mode_dims.iter().position(|&d| d == 0) {
            return Err(Error::invalid(format!("mode {j} has zero dimension")));
        }
        if spin_count == 0 {
            return Err(Error::invalid("spin_count must be at least 1"));
        }
        let sizing = || Error::Sizing {
            product: usize::MAX,
            cap,
            mode_dims: mode_dims.to_vec(),
            spins: spin_count,
        };
        let spin_dim = 1usize.checked_shl(spin_count as u32).ok_or_else(sizing)?;
        let motional_dim = mode_dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(sizing)?;
        let total = motional_dim.checked_mul(spin_dim).ok_or_else(sizing)?;
        if total > cap {
            return Err(Error::Sizing {
                product: total,
                cap,
                mode_dims: mode_dims.to_vec(),
                spins: spin_count,
            });
        }
        let mut strides = vec![1usize; mode_dims.len()];
        for j in (0..mode_dims.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * mode_dims[j + 1];
        }
        Ok(Self {
            mode_dims: mode_dims.to_vec(),
            spin_count,
            strides,
            motional_dim,
        })
    }

    pub fn mode_dims(&self) -> &[usize] {
        &self.mode_dims
    }

    pub fn num_modes(&self) -> usize {
        self.mode_dims.len()
    }

    pub fn spin_count(&self) -> usize {
        self.spin_count
    }

    pub fn spin_dim(&self) -> usize {
        1 << self.spin_count
    }

    pub fn motional_dim(&self) -> usize {
        self.motional_dim
    }

    pub fn dim(&self) -> usize {
        self.spin_dim() * self.motional_dim
    }

    pub fn motional_index(&self, occupation: &[usize]) -> Result<usize> {
        if occupation.len() != self.mode_dims.len()
            || occupation
                .iter()
                .zip(&self.mode_dims)
                .any(|(&n, &d)| n >= d)
        {
            return Err(Error::OutOfBounds {
                occupation: occupation.to_vec(),
                mode_dims: self.mode_dims.clone(),
            });
        }
        Ok(occupation
            .iter()
            .zip(&self.strides)
            .map(|(n, s)| n * s)
            .sum())
    }

    pub fn occupation(&self, motional_index: usize) -> Vec<usize> {
        self.mode_dims
            .iter()
            .zip(&self.strides)
            .map(|(&d, &s)| (motional_index / s) % d)
            .collect()
    }

    /// Occupation of a single mode for a motional index.
    pub fn occupation_of(&self, motional_index: usize, mode: usize) -> usize {
        (motional_index / self.strides[mode]) % self.mode_dims[mode]
    }

    pub fn stride(&self, mode: usize) -> usize {
        self.strides[mode]
    }

    pub fn spin_index(&self, spins: &[Spin]) -> Result<usize> {
        if spins.len() != self.spin_count {
            return Err(Error::invalid(format!(
                "expected {} spin label(s), got {}",
                self.spin_count,
                spins.len()
            )));
        }
        Ok(spins.iter().fold(0, |acc, s| (acc << 1) | s.bit()))
    }

    pub fn spins(&self, spin_index: usize) -> Vec<Spin> {
        (0..self.spin_count)
            .map(|ion| self.spin_of(spin_index, ion))
            .collect()
    }

    /// Spin of `ion` within a packed spin index.
    pub fn spin_of(&self, spin_index: usize, ion: usize) -> Spin {
        Spin::from_bit(spin_index >> (self.spin_count - 1 - ion))
    }

    /// Bit mask selecting `ion` in a packed spin index.
    pub fn ion_mask(&self, ion: usize) -> usize {
        1 << (self.spin_count - 1 - ion)
    }

    pub fn index(&self, spins: &[Spin], occupation: &[usize]) -> Result<usize> {
        Ok(self.spin_index(spins)? * self.motional_dim + self.motional_index(occupation)?)
    }

    /// Inverse of [`HilbertSpace::index`]: `(spin_index, motional_index)`.
    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / self.motional_dim, index % self.motional_dim)
    }

    /// All-down spin configuration.
    pub fn ground_spins(&self) -> Vec<Spin> {
        vec![Spin::Down; self.spin_count]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        assert_eq!(HilbertSpace::new(&[13, 13], 1).unwrap().dim(), 338);
        assert_eq!(HilbertSpace::new(&[1], 1).unwrap().dim(), 2);
        assert_eq!(HilbertSpace::new(&[13, 13], 2).unwrap().dim(), 676);
    }

    #[test]
    fn cap_is_enforced() {
        let err = HilbertSpace::new(&[256, 256], 1).unwrap_err();
        match err {
            Error::Sizing { product, cap, .. } => {
                assert_eq!(product, 131_072);
                assert_eq!(cap, 65_536);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(HilbertSpace::with_cap(&[256, 256], 1, 1 << 17).is_ok());
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(HilbertSpace::new(&[3, 0], 1).is_err());
        assert!(HilbertSpace::new(&[3], 0).is_err());
    }

    #[test]
    fn ordering_mode_zero_slowest() {
        let s = HilbertSpace::new(&[3, 4], 1).unwrap();
        assert_eq!(s.motional_index(&[0, 1]).unwrap(), 1);
        assert_eq!(s.motional_index(&[1, 0]).unwrap(), 4);
        assert_eq!(s.index(&[Spin::Up], &[0, 0]).unwrap(), 12);
        assert!(s.motional_index(&[3, 0]).is_err());
    }

    #[test]
    fn ion_zero_is_most_significant() {
        let s = HilbertSpace::new(&[2], 2).unwrap();
        assert_eq!(s.spin_index(&[Spin::Up, Spin::Down]).unwrap(), 2);
        assert_eq!(s.spin_of(2, 0), Spin::Up);
        assert_eq!(s.spin_of(2, 1), Spin::Down);
    }

    #[test]
    fn index_round_trip() {
        let s = HilbertSpace::new(&[3, 2, 4], 2).unwrap();
        for idx in 0..s.dim() {
            let (si, mi) = s.split(idx);
            let spins = s.spins(si);
            let occ = s.occupation(mi);
            assert_eq!(s.index(&spins, &occ).unwrap(), idx);
        }
    }

    #[test]
    fn serde_validates() {
        let s = HilbertSpace::new(&[3, 4], 1).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"mode_dims":[3,4],"spin_count":1}"#);
        let back: HilbertSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<HilbertSpace>(r#"{"mode_dims":[0],"spin_count":1}"#).is_err());
    }
}
