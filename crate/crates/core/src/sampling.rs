//! Exploration command sequences for data collection.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::FdmError;
use crate::geom::{ActionBounds, ActionSeq, Twist};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMode {
    Linear,
    Normal,
    /// Alternate linear and normal sequences, mixing in planner output per schedule.
    Planner,
}

impl FromStr for SamplerMode {
    type Err = FdmError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "linear" => Ok(SamplerMode::Linear),
            "normal" => Ok(SamplerMode::Normal),
            "planner" => Ok(SamplerMode::Planner),
            o => Err(FdmError::Config(format!("unknown sampler mode '{o}'"))),
        }
    }
}

impl SamplerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerMode::Linear => "linear",
            SamplerMode::Normal => "normal",
            SamplerMode::Planner => "planner",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub beta_min: f64,
    pub sigma_max: f64,
    pub bounds: ActionBounds,
    pub mode: SamplerMode,
    /// Share of planner-generated sequences once the planner is switched on.
    pub planner_fraction: f64,
    /// Fraction of training rounds after which the planner is switched on.
    pub planner_onset: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            beta_min: 0.9,
            sigma_max: 0.3,
            bounds: ActionBounds::default(),
            mode: SamplerMode::Planner,
            planner_fraction: 0.3,
            planner_onset: 0.5,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.beta_min) {
            return Err("beta_min must lie in [0, 1)".into());
        }
        if !(self.sigma_max >= 0.0) {
            return Err("sigma_max must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.planner_fraction) {
            return Err("planner_fraction must lie in [0, 1]".into());
        }
        if (0..3).any(|i| self.bounds.min[i] > self.bounds.max[i]) {
            return Err("action bounds inverted".into());
        }
        Ok(())
    }

    /// Planner share for `round` (0-based) out of `rounds`.
    pub fn planner_share(&self, round: usize, rounds: usize) -> f64 {
        if self.mode != SamplerMode::Planner || (round as f64) < self.planner_onset * rounds as f64 {
            0.0
        } else {
            self.planner_fraction
        }
    }
}

/// Whether the `index`-th sequence of a round uses the planner. Exactly
/// `floor(count · share)` of the first `count` indices are selected.
pub fn uses_planner(index: usize, share: f64) -> bool {
    share > 0.0 && ((index + 1) as f64 * share).floor() > (index as f64 * share).floor()
}

fn uniform_twist<R: Rng + ?Sized>(bounds: &ActionBounds, rng: &mut R) -> [f64; 3] {
    std::array::from_fn(|i| {
        if bounds.max[i] > bounds.min[i] {
            rng.random_range(bounds.min[i]..bounds.max[i])
        } else {
            bounds.min[i]
        }
    })
}

/// `a_{t+1} = β·a_t + (1−β)·a_rand`, clipped per axis.
pub fn linear_correlated_with(start: [f64; 3], target: [f64; 3], beta: f64, n: usize, dt: f64, bounds: &ActionBounds) -> ActionSeq {
    let mut a = start;
    let mut twists = Vec::with_capacity(n);
    for t in 0..n {
        if t > 0 {
            for i in 0..3 {
                a[i] = beta * a[i] + (1.0 - beta) * target[i];
            }
        }
        twists.push(bounds.clip(Twist::from_array(a)));
        a = twists[t].to_array();
    }
    ActionSeq::new(twists, dt)
}

/// Linear time-correlated sequence: `β ~ U(β_min, 1)` and `a_rand`, `a₀`
/// uniform within bounds, all drawn once per sequence.
pub fn sample_linear_correlated<R: Rng + ?Sized>(cfg: &SamplerConfig, n: usize, dt: f64, rng: &mut R) -> ActionSeq {
    let beta = rng.random_range(cfg.beta_min..1.0);
    let target = uniform_twist(&cfg.bounds, rng);
    let start = uniform_twist(&cfg.bounds, rng);
    linear_correlated_with(start, target, beta, n, dt, &cfg.bounds)
}

/// Gaussian random walk with one `σ ~ U(0, σ_max)` per sequence, clipped per axis.
pub fn normal_correlated_with<R: Rng + ?Sized>(start: [f64; 3], sigma: f64, n: usize, dt: f64, bounds: &ActionBounds, rng: &mut R) -> ActionSeq {
    let mut a = bounds.clip(Twist::from_array(start)).to_array();
    let mut twists = Vec::with_capacity(n);
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    for t in 0..n {
        if t > 0 {
            for x in a.iter_mut() {
                *x += noise.sample(rng);
            }
            a = bounds.clip(Twist::from_array(a)).to_array();
        }
        twists.push(Twist::from_array(a));
    }
    ActionSeq::new(twists, dt)
}

pub fn sample_normal_correlated<R: Rng + ?Sized>(cfg: &SamplerConfig, n: usize, dt: f64, rng: &mut R) -> ActionSeq {
    let sigma = if cfg.sigma_max > 0.0 {
        rng.random_range(0.0..cfg.sigma_max)
    } else {
        0.0
    };
    let start = uniform_twist(&cfg.bounds, rng);
    normal_correlated_with(start, sigma, n, dt, &cfg.bounds, rng)
}

/// Picks linear or normal sampling with equal odds.
pub fn sample_exploration<R: Rng + ?Sized>(cfg: &SamplerConfig, n: usize, dt: f64, rng: &mut R) -> ActionSeq {
    match cfg.mode {
        SamplerMode::Linear => sample_linear_correlated(cfg, n, dt, rng),
        SamplerMode::Normal => sample_normal_correlated(cfg, n, dt, rng),
        SamplerMode::Planner => {
            if rng.random_bool(0.5) {
                sample_linear_correlated(cfg, n, dt, rng)
            } else {
                sample_normal_correlated(cfg, n, dt, rng)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg() -> SamplerConfig {
        SamplerConfig::default()
    }

    #[test]
    fn beta_one_is_constant() {
        let b = ActionBounds::default();
        let s = linear_correlated_with([0.3, -0.2, 0.9], [-1.0, 1.0, 0.0], 1.0, 10, 0.5, &b);
        assert!(s.twists.iter().all(|t| *t == Twist::new(0.3, -0.2, 0.9)));
    }

    #[test]
    fn beta_zero_jumps_to_target() {
        let b = ActionBounds::default();
        let s = linear_correlated_with([0.3, -0.2, 0.9], [-0.5, 0.5, 0.1], 0.0, 10, 0.5, &b);
        assert_eq!(s.twists[0], Twist::new(0.3, -0.2, 0.9));
        assert!(s.twists[1..].iter().all(|t| *t == Twist::new(-0.5, 0.5, 0.1)));
    }

    #[test]
    fn half_blend() {
        let b = ActionBounds::default();
        let s = linear_correlated_with([1.0, 1.0, 1.0], [0.0, 0.0, 0.0], 0.5, 2, 0.5, &b);
        assert_eq!(s.twists[1], Twist::new(0.5, 0.5, 0.5));
    }

    #[test]
    fn zero_sigma_is_constant() {
        let mut rng = rng_from_seed(1);
        let s = normal_correlated_with([0.2, 0.1, -0.3], 0.0, 10, 0.5, &ActionBounds::default(), &mut rng);
        assert!(s.twists.iter().all(|t| *t == Twist::new(0.2, 0.1, -0.3)));
    }

    #[test]
    fn normal_increments_are_uncorrelated() {
        // Monte Carlo: with bounds wide enough that nothing clips, successive
        // increments of the walk are independent draws.
        let wide = ActionBounds {
            min: [-1e9; 3],
            max: [1e9; 3],
        };
        let mut rng = rng_from_seed(42);
        let (mut sxy, mut sxx, mut syy, mut sx, mut sy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let mut draws = 0;
        while draws < 100_000 {
            let sigma = rng.random_range(0.0..0.3);
            let s = normal_correlated_with([0.0; 3], sigma, 12, 0.5, &wide, &mut rng);
            let inc: Vec<f64> = s.twists.windows(2).map(|w| w[1].vx - w[0].vx).collect();
            draws += inc.len();
            for w in inc.windows(2) {
                sxy += w[0] * w[1];
                sxx += w[0] * w[0];
                syy += w[1] * w[1];
                sx += w[0];
                sy += w[1];
                m += 1.0;
            }
        }
        let cov = sxy / m - (sx / m) * (sy / m);
        let rho = cov / ((sxx / m - (sx / m).powi(2)).sqrt() * (syy / m - (sy / m).powi(2)).sqrt());
        assert!(rho.abs() < 0.02, "lag-1 autocorrelation {rho}");
    }

    #[test]
    fn planner_share_counts() {
        for &share in &[0.3, 0.25, 0.0, 1.0, 0.7] {
            for count in [1usize, 7, 100, 1001] {
                let k = (0..count).filter(|&i| uses_planner(i, share)).count() as f64;
                assert!((k - share * count as f64).abs() <= 1.0, "share {share} count {count} got {k}");
            }
        }
        let c = cfg();
        assert_eq!(c.planner_share(0, 6), 0.0);
        assert_eq!(c.planner_share(2, 6), 0.0);
        assert_eq!(c.planner_share(3, 6), 0.3);
    }

    #[test]
    fn reproducible_under_seed() {
        let a = sample_linear_correlated(&cfg(), 10, 0.5, &mut rng_from_seed(9));
        let b = sample_linear_correlated(&cfg(), 10, 0.5, &mut rng_from_seed(9));
        assert_eq!(a, b);
        let a = sample_normal_correlated(&cfg(), 10, 0.5, &mut rng_from_seed(9));
        let b = sample_normal_correlated(&cfg(), 10, 0.5, &mut rng_from_seed(9));
        assert_eq!(a, b);
    }

    #[test]
    fn high_beta_min_flattens_sequences() {
        let mut rng = rng_from_seed(5);
        let var_for = |beta_min: f64, rng: &mut crate::rng::FdmRng| {
            let c = SamplerConfig { beta_min, ..cfg() };
            let mut total = 0.0;
            for _ in 0..200 {
                let s = sample_linear_correlated(&c, 10, 0.5, rng);
                let xs: Vec<f64> = s.twists.iter().map(|t| t.vx).collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                total += xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            }
            total / 200.0
        };
        let v90 = var_for(0.9, &mut rng);
        let v999 = var_for(0.999, &mut rng);
        assert!(v999 < v90 * 0.05, "{v999} vs {v90}");
        assert!(v999 < 1e-4);
    }

    proptest! {
        #[test]
        fn samples_respect_bounds(seed in 0u64..10_000, n in 1usize..20, sigma_max in 0.0..3.0f64) {
            let c = SamplerConfig { sigma_max, ..cfg() };
            let mut rng = rng_from_seed(seed);
            for s in [sample_linear_correlated(&c, n, 0.5, &mut rng), sample_normal_correlated(&c, n, 0.5, &mut rng)] {
                prop_assert_eq!(s.len(), n);
                for t in &s.twists {
                    prop_assert!(c.bounds.contains(t));
                    prop_assert_eq!(c.bounds.clip(*t), *t);
                }
            }
        }
    }
}
