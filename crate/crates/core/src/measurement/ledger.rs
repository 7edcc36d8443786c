use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step event counts over many shots.
///
/// `a[ℓ]`, `b[ℓ]` count shots with the pass event `A_ℓ` (count ≤ pass
/// threshold) and the dark event `B_ℓ` (count ≤ discrimination threshold).
/// `a_chain[ℓ]` counts shots with `A_0 … A_ℓ` all true and `b_given_chain[ℓ]`
/// shots with `A_0 … A_{ℓ−1}` and `B_ℓ`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLedger {
    pub shots: u64,
    pub reached: Vec<u64>,
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    pub a_chain: Vec<u64>,
    pub b_given_chain: Vec<u64>,
    pub seed: u64,
}

impl EventLedger {
    pub fn new(steps: usize, seed: u64) -> Self {
        Self {
            shots: 0,
            reached: vec![0; steps],
            a: vec![0; steps],
            b: vec![0; steps],
            a_chain: vec![0; steps],
            b_given_chain: vec![0; steps],
            seed,
        }
    }

    pub fn steps(&self) -> usize {
        self.a.len()
    }

    /// Records one shot given its per-step `(A, B)` outcomes. Steps after the
    /// first failed `A` are not run and must be omitted.
    pub fn record(&mut self, events: &[(bool, bool)]) -> Result<()> {
        if events.len() > self.steps() {
            return Err(Error::invalid("more events than filter steps"));
        }
        self.shots += 1;
        let mut chain = true;
        for (l, &(a, b)) in events.iter().enumerate() {
            if a && !b {
                return Err(Error::invalid("event A implies event B"));
            }
            self.reached[l] += 1;
            self.a[l] += a as u64;
            self.b[l] += b as u64;
            if chain {
                self.b_given_chain[l] += b as u64;
                chain = a;
                self.a_chain[l] += a as u64;
            }
        }
        Ok(())
    }

    pub fn merge(mut self, other: &Self) -> Result<Self> {
        if self.steps() != other.steps() {
            return Err(Error::invalid("cannot merge ledgers with different step counts"));
        }
        self.shots += other.shots;
        for l in 0..self.steps() {
            self.reached[l] += other.reached[l];
            self.a[l] += other.a[l];
            self.b[l] += other.b[l];
            self.a_chain[l] += other.a_chain[l];
            self.b_given_chain[l] += other.b_given_chain[l];
        }
        Ok(self)
    }

    pub fn check_invariants(&self) -> Result<()> {
        for l in 0..self.steps() {
            if self.a[l] > self.b[l] || self.b[l] > self.reached[l] || self.reached[l] > self.shots {
                return Err(Error::invalid(format!("inconsistent counts at step {l}")));
            }
        }
        Ok(())
    }

    pub fn report(&self) -> LedgerReport {
        let estimate = estimate_population(self);
        LedgerReport {
            shots: self.shots,
            seed: self.seed,
            steps: (0..self.steps())
                .map(|l| StepReport {
                    a: self.a[l],
                    b: self.b[l],
                    reached: self.reached[l],
                    conditional_frequency: estimate.factors.get(l).map(|f| f.frequency),
                })
                .collect(),
            estimate: estimate.value,
            uncertainty: estimate.std_err,
            degenerate_factor: estimate.degenerate_factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub a: u64,
    pub b: u64,
    pub reached: u64,
    pub conditional_frequency: Option<f64>,
}

/// JSON export of a ledger together with its estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub shots: u64,
    pub seed: u64,
    pub steps: Vec<StepReport>,
    pub estimate: f64,
    pub uncertainty: f64,
    pub degenerate_factor: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateFactor {
    pub numerator: u64,
    pub denominator: u64,
    pub frequency: f64,
    pub std_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    pub value: f64,
    pub std_err: f64,
    pub factors: Vec<EstimateFactor>,
    /// First step whose conditioning set was empty.
    pub degenerate_factor: Option<usize>,
}

/// `p ≈ P(B₀) Π_ℓ P(B_ℓ | A₀ … A_{ℓ−1})` with binomial errors propagated in quadrature.
pub fn estimate_population(ledger: &EventLedger) -> PopulationEstimate {
    let mut factors = Vec::with_capacity(ledger.steps());
    let mut degenerate = None;
    for l in 0..ledger.steps() {
        let den = if l == 0 { ledger.shots } else { ledger.a_chain[l - 1] };
        let num = ledger.b_given_chain[l];
        if den == 0 {
            degenerate = Some(l);
            break;
        }
        let f = num as f64 / den as f64;
        factors.push(EstimateFactor {
            numerator: num,
            denominator: den,
            frequency: f,
            std_err: (f * (1.0 - f) / den as f64).sqrt(),
        });
    }
    if degenerate.is_some() || factors.is_empty() {
        return PopulationEstimate {
            value: 0.0,
            std_err: 0.0,
            factors,
            degenerate_factor: degenerate,
        };
    }
    let value: f64 = factors.iter().map(|f| f.frequency).product();
    let var: f64 = (0..factors.len())
        .map(|k| {
            let others: f64 = factors
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, f)| f.frequency)
                .product();
            (others * factors[k].std_err).powi(2)
        })
        .sum();
    PopulationEstimate {
        value,
        std_err: var.sqrt(),
        factors,
        degenerate_factor: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_pass_gives_one() {
        let mut l = EventLedger::new(3, 0);
        for _ in 0..10 {
            l.record(&[(true, true); 3]).unwrap();
        }
        let e = estimate_population(&l);
        assert_eq!(e.value, 1.0);
        assert_eq!(e.std_err, 0.0);
    }

    #[test]
    fn first_step_never_dark() {
        let mut l = EventLedger::new(2, 0);
        for _ in 0..10 {
            l.record(&[(false, false)]).unwrap();
        }
        let e = estimate_population(&l);
        assert_eq!(e.value, 0.0);
        assert_eq!(e.degenerate_factor, Some(1));
    }

    #[test]
    fn a_without_b_is_rejected() {
        let mut l = EventLedger::new(1, 0);
        assert!(l.record(&[(true, false)]).is_err());
    }

    #[test]
    fn synthetic_product() {
        let probs = [0.9, 0.8, 0.7];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut l = EventLedger::new(3, 11);
        for _ in 0..500 {
            let mut ev = Vec::new();
            for p in probs {
                let pass = rng.random::<f64>() < p;
                ev.push((pass, pass));
                if !pass {
                    break;
                }
            }
            l.record(&ev).unwrap();
        }
        l.check_invariants().unwrap();
        let e = estimate_population(&l);
        assert!((e.value - 0.504).abs() < 3.0 * e.std_err, "{} ± {}", e.value, e.std_err);
    }

    #[test]
    fn merge_adds_counts() {
        let mut a = EventLedger::new(2, 1);
        let mut b = EventLedger::new(2, 1);
        a.record(&[(true, true), (false, true)]).unwrap();
        b.record(&[(false, true)]).unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.shots, 2);
        assert_eq!(m.b, vec![2, 1]);
        assert_eq!(m.a_chain, vec![1, 0]);
        assert_eq!(m.b_given_chain, vec![2, 1]);
    }
}
