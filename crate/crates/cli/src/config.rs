//! Settings shared by `run` and `bench`: flags over config file over defaults.

use std::fs;
use std::path::PathBuf;

use dynclust::{CoresetConfig, CostParams, DistanceMatrix, Metric, Objective, RunConfig};

use crate::Failure;

#[derive(Clone, Debug, Default, PartialEq, clap::Args)]
pub struct Overrides {
    /// Number of centers.
    #[arg(long)]
    pub k: Option<usize>,
    /// Coreset accuracy.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Failure probability used in sample sizes.
    #[arg(long)]
    pub delta: Option<f64>,
    /// 1 for k-median, 2 for k-means.
    #[arg(long)]
    pub z: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `euclidean` or `matrix:<path>`.
    #[arg(long)]
    pub metric: Option<String>,
    /// Constant in front of the sample-size formula.
    #[arg(long)]
    pub coreset_scale: Option<f64>,
    /// Also report each query's cost on the full live dataset.
    #[arg(long)]
    pub exact: bool,
    /// Leave wall-clock timings out of the output.
    #[arg(long)]
    pub no_timing: bool,
    /// Output file; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// File of `key=value` lines with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn bad(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, Failure> {
    raw.parse()
        .map_err(|_| bad(format!("config: bad value '{raw}' for {key}")))
}

fn flag(key: &str, raw: &str) -> Result<bool, Failure> {
    match raw {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(format!("config: bad value '{raw}' for {key}"))),
    }
}

/// Parses a config file. Keys may use `-` or `_`; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Overrides, Failure> {
    let mut o = Overrides::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, raw) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("config line {}: expected key=value", i + 1)))?;
        let key = key.trim().replace('-', "_");
        let raw = raw.trim();
        match key.as_str() {
            "k" => o.k = Some(value(&key, raw)?),
            "epsilon" => o.epsilon = Some(value(&key, raw)?),
            "delta" => o.delta = Some(value(&key, raw)?),
            "z" => o.z = Some(value(&key, raw)?),
            "seed" => o.seed = Some(value(&key, raw)?),
            "metric" => o.metric = Some(raw.to_string()),
            "coreset_scale" => o.coreset_scale = Some(value(&key, raw)?),
            "exact" => o.exact = flag(&key, raw)?,
            "no_timing" => o.no_timing = flag(&key, raw)?,
            "out" => o.out = Some(PathBuf::from(raw)),
            _ => return Err(bad(format!("config line {}: unknown key '{key}'", i + 1))),
        }
    }
    Ok(o)
}

impl Overrides {
    /// Fills every unset field from `lower`.
    pub fn over(self, lower: Overrides) -> Overrides {
        Overrides {
            k: self.k.or(lower.k),
            epsilon: self.epsilon.or(lower.epsilon),
            delta: self.delta.or(lower.delta),
            z: self.z.or(lower.z),
            seed: self.seed.or(lower.seed),
            metric: self.metric.or(lower.metric),
            coreset_scale: self.coreset_scale.or(lower.coreset_scale),
            exact: self.exact || lower.exact,
            no_timing: self.no_timing || lower.no_timing,
            out: self.out.or(lower.out),
            config: self.config,
        }
    }

    /// Applies the config file, if any, underneath the flags.
    pub fn resolve(self) -> Result<Overrides, Failure> {
        match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| bad(format!("{}: {e}", path.display())))?;
                let file = parse_config(&text)?;
                Ok(self.over(file))
            }
            None => Ok(self),
        }
    }

    fn metric(&self, dim: Option<usize>) -> Result<Metric, Failure> {
        match self.metric.as_deref().unwrap_or("euclidean") {
            "euclidean" => Ok(Metric::euclidean(dim.unwrap_or(1))),
            other => {
                let path = other
                    .strip_prefix("matrix:")
                    .ok_or_else(|| bad(format!("unknown metric '{other}'")))?;
                let text =
                    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{path}: {e}")))?;
                let m = DistanceMatrix::parse(&text)
                    .map_err(|e| Failure::Data(format!("{path}: {e}")))?;
                Ok(Metric::matrix(m))
            }
        }
    }

    /// Final run configuration; `dim` is the stream's dimension.
    pub fn run_config(&self, dim: Option<usize>) -> Result<RunConfig, Failure> {
        let z = Objective::from_z(self.z.unwrap_or(2)).map_err(|e| bad(e.to_string()))?;
        let mut params = CostParams::new(self.k.unwrap_or(3), z, self.epsilon.unwrap_or(0.2));
        if let Some(d) = self.delta {
            params.delta = d;
        }
        params.seed = self.seed.unwrap_or(0);
        params.validate().map_err(|e| bad(e.to_string()))?;
        let mut coreset = CoresetConfig::default();
        if let Some(s) = self.coreset_scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(bad("coreset scale must be positive"));
            }
            coreset.scale = s;
        }
        Ok(RunConfig {
            params,
            metric: self.metric(dim)?,
            coreset,
            exact: self.exact,
            timing: !self.no_timing,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = parse_config("k = 7\nepsilon=0.1\n# note\nno-timing = true\n").unwrap();
        let flags = Overrides {
            k: Some(4),
            ..Default::default()
        };
        let merged = flags.over(file);
        assert_eq!(merged.k, Some(4));
        assert_eq!(merged.epsilon, Some(0.1));
        assert!(merged.no_timing);
        let cfg = merged.run_config(Some(2)).unwrap();
        assert_eq!(cfg.params.k, 4);
        assert_eq!(cfg.params.seed, 0);
        assert!(!cfg.timing);
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(parse_config("colour=red").is_err());
        assert!(parse_config("k=three").is_err());
        assert!(parse_config("just words").is_err());
    }

    #[test]
    fn rejects_bad_metric_and_z() {
        let o = Overrides {
            metric: Some("manhattan".into()),
            ..Default::default()
        };
        assert!(matches!(o.run_config(Some(2)), Err(Failure::Usage(_))));
        let o = Overrides {
            z: Some(3),
            ..Default::default()
        };
        assert!(matches!(o.run_config(Some(2)), Err(Failure::Usage(_))));
    }
}
