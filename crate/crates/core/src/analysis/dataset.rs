use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::RamseySpec;

/// One Ramsey time trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamseyDataset {
    pub times: Vec<f64>,
    pub p_up: Vec<f64>,
    /// Shots per point; zero marks an exact (noiseless) value.
    pub shots: Vec<u64>,
    /// `r = χ_eff,1/χ_eff,2`, absent for single-mode settings.
    pub ratio_label: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<RamseySpec>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    time_s: f64,
    p_up: f64,
    shots: u64,
    ratio_label: Option<f64>,
}

impl RamseyDataset {
    pub fn new(times: Vec<f64>, p_up: Vec<f64>, shots: Vec<u64>, ratio_label: Option<f64>) -> Result<Self> {
        let d = Self {
            times,
            p_up,
            shots,
            ratio_label,
            spec: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_spec(mut self, spec: RamseySpec) -> Self {
        self.spec = Some(spec);
        self
    }

    /// Builds a trace from model probabilities. With an RNG, each point is
    /// replaced by a binomial estimate from `shots` repetitions.
    pub fn from_probabilities<R: Rng + ?Sized>(
        times: Vec<f64>,
        probabilities: &[f64],
        shots: u64,
        ratio_label: Option<f64>,
        rng: Option<&mut R>,
    ) -> Result<Self> {
        if probabilities.len() != times.len() {
            return Err(Error::invalid("one probability per time point required"));
        }
        let clean: Vec<f64> = probabilities.iter().map(|p| p.clamp(0.0, 1.0)).collect();
        let p_up = match rng {
            Some(rng) if shots > 0 => clean
                .iter()
                .map(|&p| {
                    let b = Binomial::new(shots, p).map_err(|e| Error::Numerical(e.to_string()))?;
                    Ok(b.sample(rng) as f64 / shots as f64)
                })
                .collect::<Result<_>>()?,
            _ => clean,
        };
        let n = times.len();
        Self::new(times, p_up, vec![shots; n], ratio_label)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n == 0 || self.p_up.len() != n || self.shots.len() != n {
            return Err(Error::invalid("times, p_up and shots must be non-empty and equally long"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) || self.times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("times must be finite and strictly increasing"));
        }
        if let Some(i) = self.p_up.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid(format!("p_up[{i}] = {} outside [0, 1]", self.p_up[i])));
        }
        if let Some(r) = self.ratio_label {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!("ratio label must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_datasets_csv(std::slice::from_ref(self), writer)
    }
}

/// Writes traces as `time_s,p_up,shots,ratio_label` rows, one trace after another.
pub fn write_datasets_csv<W: Write>(datasets: &[RamseyDataset], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for d in datasets {
        for i in 0..d.len() {
            w.serialize(CsvRow {
                time_s: d.times[i],
                p_up: d.p_up[i],
                shots: d.shots[i],
                ratio_label: d.ratio_label,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads rows and groups them into one trace per ratio label, in order of
/// first appearance. Rows with an empty label form the single-mode trace.
pub fn read_datasets_csv<R: Read>(reader: R) -> Result<Vec<RamseyDataset>> {
    let mut groups: Vec<(Option<f64>, Vec<CsvRow>)> = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: CsvRow = row?;
        match groups.iter_mut().find(|(label, _)| *label == row.ratio_label) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((row.ratio_label, vec![row])),
        }
    }
    if groups.is_empty() {
        return Err(Error::invalid("dataset file has no rows"));
    }
    groups
        .into_iter()
        .map(|(label, rows)| {
            RamseyDataset::new(
                rows.iter().map(|r| r.time_s).collect(),
                rows.iter().map(|r| r.p_up).collect(),
                rows.iter().map(|r| r.shots).collect(),
                label,
            )
        })
        .collect()
}

pub fn read_datasets_csv_file(path: impl AsRef<Path>) -> Result<Vec<RamseyDataset>> {
    read_datasets_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn csv_round_trip_groups_by_ratio() {
        let a = RamseyDataset::new(vec![0.0, 1e-3], vec![0.1, 0.2], vec![300, 300], Some(0.5)).unwrap();
        let b = RamseyDataset::new(vec![0.0, 2e-3], vec![0.3, 0.4], vec![300, 300], Some(2.0)).unwrap();
        let mut buf = Vec::new();
        write_datasets_csv(&[a.clone(), b.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time_s,p_up,shots,ratio_label\n"));
        let back = read_datasets_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![a, b]);

        let single = RamseyDataset::new(vec![0.0], vec![0.0], vec![0], None).unwrap();
        let mut buf = Vec::new();
        single.write_csv(&mut buf).unwrap();
        assert_eq!(read_datasets_csv(buf.as_slice()).unwrap(), vec![single]);
    }

    #[test]
    fn validation() {
        assert!(RamseyDataset::new(vec![1.0, 0.5], vec![0.0, 0.0], vec![1, 1], None).is_err());
        assert!(RamseyDataset::new(vec![0.0], vec![1.2], vec![1], None).is_err());
        assert!(RamseyDataset::new(vec![0.0], vec![0.2], vec![1], Some(-1.0)).is_err());
        assert!(read_datasets_csv("time_s,p_up,shots,ratio_label\n".as_bytes()).is_err());
    }

    #[test]
    fn binomial_noise_is_seeded() {
        let ts: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ps = vec![0.3; 50];
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let a = RamseyDataset::from_probabilities(ts.clone(), &ps, 300, None, Some(&mut r1)).unwrap();
        let b = RamseyDataset::from_probabilities(ts, &ps, 300, None, Some(&mut r2)).unwrap();
        assert_eq!(a, b);
        let mean = a.p_up.iter().sum::<f64>() / 50.0;
        assert!((mean - 0.3).abs() < 0.02);
        assert!(a.p_up.iter().all(|p| (p * 300.0).fract() < 1e-9 || (p * 300.0).fract() > 1.0 - 1e-9));
    }
}
