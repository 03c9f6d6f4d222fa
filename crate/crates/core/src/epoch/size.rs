use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeMode {
    /// `k · ε⁻² · log n · log(k/(δε))`, valid in any metric.
    General,
    /// `k · ε⁻⁴ · log(k/(δε))`, Euclidean only.
    EuclideanEps4,
}

/// Per-group sample size `n_c`.
///
/// `max(⌈10kε⁻²⌉, ⌈C · k · ε⁻² · log2(n+2) · log2(k/(δε)+2)⌉)`, or the
/// `ε⁻⁴` variant without the `log n` factor.
pub fn coreset_size(
    k: usize,
    epsilon: f64,
    n: usize,
    delta: f64,
    mode: SizeMode,
    scale: f64,
) -> usize {
    let k = k as f64;
    let floor = (10.0 * k / (epsilon * epsilon)).ceil();
    let confidence = (k / (delta * epsilon) + 2.0).log2();
    let main = match mode {
        SizeMode::General => scale * k / (epsilon * epsilon) * (n as f64 + 2.0).log2() * confidence,
        SizeMode::EuclideanEps4 => scale * k / epsilon.powi(4) * confidence,
    };
    floor.max(main.ceil()) as usize
}

/// Sizing knobs of the epoch structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoresetConfig {
    /// Constant `C` in front of the logarithmic sample-size term.
    pub scale: f64,
    pub mode: SizeMode,
    /// Replaces the sample-size formula with a fixed `n_c`.
    pub sample_size: Option<usize>,
    /// Replaces the initially-large cutoff `log2(n) · n_c / ε`.
    pub large_group_cutoff: Option<usize>,
    /// Panic if a size estimate ever decreases within an epoch.
    pub strict: bool,
}

impl Default for CoresetConfig {
    fn default() -> Self {
        CoresetConfig {
            scale: 1.0,
            mode: SizeMode::General,
            sample_size: None,
            large_group_cutoff: None,
            strict: true,
        }
    }
}

impl CoresetConfig {
    /// Fixed sample size and cutoff, for exercising the sampling machinery on
    /// small inputs.
    pub fn calibrated(sample_size: usize, large_group_cutoff: usize) -> Self {
        CoresetConfig {
            sample_size: Some(sample_size),
            large_group_cutoff: Some(large_group_cutoff),
            ..Self::default()
        }
    }

    pub fn sample_size_for(&self, k: usize, epsilon: f64, n: usize, delta: f64) -> usize {
        self.sample_size
            .unwrap_or_else(|| coreset_size(k, epsilon, n, delta, self.mode, self.scale))
            .max(1)
    }

    /// Groups with more members than this are initially large. Never below
    /// `n_c`, so a large group always fills its sample.
    pub fn large_cutoff_for(&self, n: usize, n_c: usize, epsilon: f64) -> usize {
        let cutoff = self.large_group_cutoff.unwrap_or_else(|| {
            let raw = (n.max(1) as f64).log2() * n_c as f64 / epsilon;
            raw.floor().min(usize::MAX as f64) as usize
        });
        cutoff.max(n_c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_dominates_small_n() {
        for n in [1, 10, 100] {
            assert!(coreset_size(5, 1.0 / 3.0, n, 0.1, SizeMode::General, 0.0) >= 450);
        }
        assert_eq!(
            coreset_size(5, 1.0 / 3.0, 10, 0.1, SizeMode::General, 0.0),
            450
        );
    }

    #[test]
    fn halving_epsilon_quadruples() {
        for n in [10, 1000, 100_000] {
            let a = coreset_size(3, 0.2, n, 0.1, SizeMode::General, 1.0);
            let b = coreset_size(3, 0.1, n, 0.1, SizeMode::General, 1.0);
            assert!(b >= 4 * a, "n={n}: {a} -> {b}");
        }
    }

    #[test]
    fn formula_value() {
        // 2 / 0.04 · log2(1026) · log2(102) = 3337.15…
        assert_eq!(
            coreset_size(2, 0.2, 1024, 0.1, SizeMode::General, 1.0),
            3338
        );
    }

    #[test]
    fn eps4_variant_ignores_n() {
        let a = coreset_size(2, 0.2, 10, 0.1, SizeMode::EuclideanEps4, 1.0);
        let b = coreset_size(2, 0.2, 1_000_000, 0.1, SizeMode::EuclideanEps4, 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn cutoff_never_below_sample_size() {
        let cfg = CoresetConfig::calibrated(50, 10);
        assert_eq!(cfg.large_cutoff_for(1000, 50, 0.2), 50);
        let cfg = CoresetConfig::default();
        assert_eq!(cfg.large_cutoff_for(1024, 100, 0.25), 4000);
    }
}
