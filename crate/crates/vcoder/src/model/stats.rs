//! Per-unit running statistics of the conditioned reconstruction loss.
//!
//! Welford-updated mean/variance over the current window (the trainer
//! resets the window at each epoch boundary). The unit with the highest
//! loss variance is the split candidate.

use serde::{Deserialize, Serialize};

use super::{ModelError, UnitId};

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn record(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn variance(&self) -> Option<f64> {
        if self.count >= 2 {
            Some(self.m2 / (self.count - 1) as f64)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitLossStats {
    units: Vec<Welford>,
}

impl UnitLossStats {
    pub fn new(unit_count: usize) -> Self {
        UnitLossStats {
            units: vec![Welford::default(); unit_count],
        }
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    pub fn record(&mut self, unit: UnitId, loss: f64) {
        self.units[unit].record(loss);
    }

    /// Appends an empty accumulator for a freshly split unit.
    pub fn push_unit(&mut self) {
        self.units.push(Welford::default());
    }

    /// Clears the window, keeping the unit count.
    pub fn reset(&mut self) {
        for u in &mut self.units {
            *u = Welford::default();
        }
    }

    pub fn count(&self, unit: UnitId) -> u64 {
        self.units[unit].count
    }

    pub fn total_count(&self) -> u64 {
        self.units.iter().map(|u| u.count).sum()
    }

    pub fn mean(&self, unit: UnitId) -> Option<f64> {
        let u = &self.units[unit];
        (u.count > 0).then_some(u.mean)
    }

    /// Sample variance (n - 1 denominator); undefined below two samples.
    pub fn variance(&self, unit: UnitId) -> Option<f64> {
        self.units[unit].variance()
    }

    /// The unit with the highest loss variance among units with at least
    /// `min_samples` samples this window; ties go to the lower unit id.
    pub fn select_split_candidate(&self, min_samples: u64) -> Result<UnitId, ModelError> {
        let floor = min_samples.max(2);
        let mut best: Option<(UnitId, f64)> = None;
        for (j, u) in self.units.iter().enumerate() {
            if u.count < floor {
                continue;
            }
            let var = u.variance().expect("count >= 2 has a variance");
            match best {
                Some((_, v)) if var <= v => {}
                _ => best = Some((j, var)),
            }
        }
        best.map(|(j, _)| j)
            .ok_or(ModelError::NoEligibleUnit { min_samples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_pass(values: &[f64]) -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn welford_matches_the_two_pass_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut stats = UnitLossStats::new(1);
        let values: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..30.0)).collect();
        for &v in &values {
            stats.record(0, v);
        }
        let (mean, var) = two_pass(&values);
        assert!((stats.mean(0).unwrap() - mean).abs() < 1e-9);
        assert!((stats.variance(0).unwrap() - var).abs() < 1e-9);
    }

    #[test]
    fn highest_variance_unit_is_selected() {
        let mut stats = UnitLossStats::new(3);
        for i in 0..20 {
            stats.record(0, 1.0 + 0.01 * f64::from(i % 2));
            stats.record(1, f64::from(i)); // high variance
            stats.record(2, 2.0);
        }
        assert_eq!(stats.select_split_candidate(10).unwrap(), 1);
    }

    #[test]
    fn variance_ties_resolve_to_the_lower_unit() {
        let mut stats = UnitLossStats::new(2);
        for v in [1.0, 2.0, 3.0] {
            stats.record(0, v);
            stats.record(1, v);
        }
        assert_eq!(stats.select_split_candidate(2).unwrap(), 0);
    }

    #[test]
    fn units_below_the_sample_floor_are_ineligible() {
        let mut stats = UnitLossStats::new(2);
        stats.record(0, 1.0);
        stats.record(0, 5.0); // only 2 samples
        for v in 0..20 {
            stats.record(1, f64::from(v % 3));
        }
        assert_eq!(stats.select_split_candidate(10).unwrap(), 1);
        assert!(matches!(
            UnitLossStats::new(2).select_split_candidate(10),
            Err(ModelError::NoEligibleUnit { .. })
        ));
    }

    #[test]
    fn single_sample_variance_is_undefined() {
        let mut stats = UnitLossStats::new(1);
        stats.record(0, 3.0);
        assert_eq!(stats.variance(0), None);
        assert_eq!(stats.mean(0), Some(3.0));
    }
}
