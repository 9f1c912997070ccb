//! Experiment configuration: presets, the flat key-value config format, and
//! strict validation.
//!
//! Config files are plain text, one `key = value` per line, `#` comments.
//! Lists are comma separated. Unknown keys are rejected so typos cannot
//! silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::table::Format;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentId {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    FigVsNt,
    Mnist,
    Custom,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Fig2 => "fig2",
            ExperimentId::Fig3 => "fig3",
            ExperimentId::Fig4 => "fig4",
            ExperimentId::Fig5 => "fig5",
            ExperimentId::Fig6 => "fig6",
            ExperimentId::Fig7 => "fig7",
            ExperimentId::Fig8 => "fig8",
            ExperimentId::FigVsNt => "fig_vs_nt",
            ExperimentId::Mnist => "mnist",
            ExperimentId::Custom => "custom",
        }
    }
}

impl std::str::FromStr for ExperimentId {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "fig2" => ExperimentId::Fig2,
            "fig3" => ExperimentId::Fig3,
            "fig4" => ExperimentId::Fig4,
            "fig5" => ExperimentId::Fig5,
            "fig6" => ExperimentId::Fig6,
            "fig7" => ExperimentId::Fig7,
            "fig8" => ExperimentId::Fig8,
            "fig_vs_nt" => ExperimentId::FigVsNt,
            "mnist" => ExperimentId::Mnist,
            "custom" => ExperimentId::Custom,
            other => {
                return Err(CliError::Config(format!(
                    "unknown experiment '{other}' \
                     (fig2|fig3|fig4|fig5|fig6|fig7|fig8|fig_vs_nt|mnist|custom)"
                )))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Theory,
    Simulate,
    Both,
}

impl Mode {
    pub fn wants_theory(self) -> bool {
        matches!(self, Mode::Theory | Mode::Both)
    }

    pub fn wants_simulation(self) -> bool {
        matches!(self, Mode::Simulate | Mode::Both)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Theory => "theory",
            Mode::Simulate => "simulate",
            Mode::Both => "both",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "theory" => Ok(Mode::Theory),
            "simulate" => Ok(Mode::Simulate),
            "both" => Ok(Mode::Both),
            other => Err(CliError::Config(format!("unknown mode '{other}' (theory|simulate|both)"))),
        }
    }
}

/// Settings for the digit-classification pipeline.
#[derive(Clone, Debug)]
pub struct MnistSettings {
    pub dir: Option<PathBuf>,
    /// Random-feature dimension.
    pub features: usize,
    pub train_per_task: usize,
    pub test_per_task: usize,
    /// Replays of the five-task sequence.
    pub repetitions: usize,
    pub nodes: usize,
    pub iterations: usize,
    /// Redraw the training subset on every repetition instead of reusing the
    /// fixed one.
    pub resample_per_rep: bool,
}

impl Default for MnistSettings {
    fn default() -> Self {
        Self {
            dir: None,
            features: 3000,
            train_per_task: 100,
            test_per_task: 2000,
            repetitions: 100,
            nodes: 2,
            iterations: 1,
            resample_per_rep: false,
        }
    }
}

/// A fully resolved experiment description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub mode: Mode,
    pub p: usize,
    pub p_shared_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub t_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub tc_values: Vec<usize>,
    pub eps_values: Vec<f64>,
    pub sigma2_values: Vec<f64>,
    pub e_w: f64,
    pub trials: usize,
    pub replays: usize,
    pub seed: u64,
    pub exclude_divergent: bool,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub mnist: MnistSettings,
    /// Full-scale reference dimension for the `scale` column.
    pub reference_p: usize,
}

impl ExperimentConfig {
    /// Preset defaults. Simulation presets use desk-scale dimensions unless
    /// `full_scale` is set; closed-form sweeps always use the full-scale
    /// reference dimensions.
    pub fn preset(experiment: ExperimentId, mode: Mode, full_scale: bool) -> Self {
        let full = full_scale || !mode.wants_simulation();
        let mut cfg = Self {
            experiment,
            mode,
            p: 64,
            p_shared_values: vec![32],
            k_values: vec![2],
            t_values: vec![4],
            n_values: vec![24],
            tc_values: vec![1],
            eps_values: vec![0.0],
            sigma2_values: vec![0.01],
            e_w: 1.0,
            trials: 100,
            replays: 3,
            seed: 1,
            exclude_divergent: false,
            out: None,
            format: Format::Csv,
            mnist: MnistSettings::default(),
            reference_p: 64,
        };
        match experiment {
            ExperimentId::Fig2 => {
                cfg.k_values = vec![1, 2, 4, 8, 16, 32, 64];
                cfg.t_values = vec![1, 2, 4, 8, 16];
                cfg.set_scaled_dims(full, 1024, 768, 2048, 4);
            }
            ExperimentId::Fig3 | ExperimentId::Fig4 => {
                cfg.p = 32;
                cfg.reference_p = 32;
                cfg.p_shared_values = vec![24];
                cfg.k_values = vec![1, 2, 4, 8, 16, 32];
                cfg.t_values = vec![1, 2, 4, 8, 16, 32, 64, 128];
                cfg.n_values = vec![if experiment == ExperimentId::Fig3 { 1 } else { 64 }];
                cfg.sigma2_values = vec![0.01, 1.0];
            }
            ExperimentId::Fig5 => {
                cfg.k_values = vec![4, 16];
                cfg.t_values = vec![1, 2, 4, 8, 16];
                cfg.set_scaled_dims(full, 1024, 768, 2048, 4);
                let p = cfg.p;
                cfg.p_shared_values = (0..=8).map(|i| i * p / 8).collect();
            }
            ExperimentId::Fig6 => {
                cfg.k_values = vec![2];
                cfg.t_values = vec![16];
                cfg.tc_values = vec![100];
                cfg.set_scaled_dims(full, 1024, 0, 32, 4);
                cfg.n_values = vec![32];
                let p = cfg.p;
                cfg.p_shared_values = (0..=4).map(|i| i * p / 4).collect();
            }
            ExperimentId::Fig7 => {
                cfg.p = 64;
                cfg.reference_p = 64;
                cfg.k_values = vec![2];
                cfg.t_values = vec![16];
                cfg.tc_values = vec![100];
                cfg.n_values = vec![128];
                cfg.p_shared_values = vec![0, 16, 32, 48, 64];
            }
            ExperimentId::Fig8 => {
                cfg.k_values = vec![1, 2, 4, 8, 16, 32, 64];
                cfg.t_values = vec![8];
                cfg.eps_values = vec![0.0, 0.5, 0.9, 0.95];
                cfg.set_scaled_dims(full, 1024, 768, 2048, 4);
            }
            ExperimentId::FigVsNt => {
                cfg.k_values = vec![32];
                cfg.t_values = vec![1, 16];
                cfg.tc_values = vec![1, 100];
                if full {
                    cfg.p = 1024;
                    cfg.p_shared_values = vec![512];
                    cfg.n_values = vec![
                        1, 2, 4, 8, 16, 24, 28, 30, 31, 32, 33, 34, 36, 40, 48, 64, 96, 128, 192,
                        256,
                    ];
                } else {
                    cfg.p = 256;
                    cfg.p_shared_values = vec![128];
                    cfg.n_values = vec![1, 2, 4, 6, 7, 8, 9, 10, 12, 16, 24, 32, 48, 64];
                }
                cfg.reference_p = 1024;
            }
            ExperimentId::Mnist | ExperimentId::Custom => {}
        }
        cfg
    }

    fn set_scaled_dims(&mut self, full: bool, p: usize, p_shared: usize, n: usize, factor: usize) {
        self.reference_p = p;
        if full {
            self.p = p;
            self.p_shared_values = vec![p_shared];
            self.n_values = vec![n];
        } else {
            self.p = p / factor;
            self.p_shared_values = vec![p_shared / factor];
            self.n_values = vec![n / factor];
        }
    }

    /// Ratio of this run's model dimension to the full-scale reference.
    pub fn scale(&self) -> f64 {
        self.p as f64 / self.reference_p as f64
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let named_grids: [(&str, bool); 7] = [
            ("p_shared", self.p_shared_values.is_empty()),
            ("k", self.k_values.is_empty()),
            ("t", self.t_values.is_empty()),
            ("n", self.n_values.is_empty()),
            ("t_c", self.tc_values.is_empty()),
            ("eps", self.eps_values.is_empty()),
            ("sigma2", self.sigma2_values.is_empty()),
        ];
        for (name, empty) in named_grids {
            if empty {
                return Err(CliError::Config(format!("grid '{name}' must be non-empty")));
            }
        }
        if self.p == 0 {
            return Err(CliError::Config("p must be at least 1".into()));
        }
        for &ps in &self.p_shared_values {
            if ps > self.p {
                return Err(CliError::Config(format!("p_shared = {ps} exceeds p = {}", self.p)));
            }
        }
        for &k in &self.k_values {
            if k == 0 || self.p % k != 0 {
                return Err(CliError::Config(format!(
                    "k = {k} must divide p = {} (supply explicit sizes via a custom build otherwise)",
                    self.p
                )));
            }
        }
        for &t in &self.t_values {
            if t == 0 {
                return Err(CliError::Config("t must be at least 1".into()));
            }
        }
        for &n in &self.n_values {
            if n == 0 {
                return Err(CliError::Config("n must be at least 1".into()));
            }
        }
        for &tc in &self.tc_values {
            if tc == 0 {
                return Err(CliError::Config("t_c must be at least 1".into()));
            }
        }
        for &eps in &self.eps_values {
            if !(0.0..1.0).contains(&eps) {
                return Err(CliError::Config(format!("eps = {eps} outside [0, 1)")));
            }
        }
        for &s in &self.sigma2_values {
            if s < 0.0 || !s.is_finite() {
                return Err(CliError::Config(format!("sigma2 = {s} must be finite and >= 0")));
            }
        }
        if self.replays == 0 {
            return Err(CliError::Config("replays must be at least 1".into()));
        }
        if self.mode.wants_simulation() && self.trials == 0 && self.experiment != ExperimentId::Mnist
        {
            return Err(CliError::Config("simulation requires trials >= 1".into()));
        }
        Ok(())
    }

    /// Apply `key = value` pairs parsed from a config file. Unknown keys are
    /// rejected by name.
    pub fn apply_pairs(&mut self, pairs: &BTreeMap<String, String>) -> Result<(), CliError> {
        for (key, value) in pairs {
            self.apply(key, value)?;
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |what: &str| CliError::Config(format!("config key '{key}': bad {what} '{value}'"));
        match key {
            "experiment" => self.experiment = value.parse()?,
            "mode" => self.mode = value.parse()?,
            "p" => self.p = value.parse().map_err(|_| bad("integer"))?,
            "p_shared" => self.p_shared_values = parse_list(value).map_err(|_| bad("list"))?,
            "k" => self.k_values = parse_list(value).map_err(|_| bad("list"))?,
            "t" => self.t_values = parse_list(value).map_err(|_| bad("list"))?,
            "n" => self.n_values = parse_list(value).map_err(|_| bad("list"))?,
            "t_c" => self.tc_values = parse_list(value).map_err(|_| bad("list"))?,
            "eps" => self.eps_values = parse_list(value).map_err(|_| bad("list"))?,
            "sigma2" => self.sigma2_values = parse_list(value).map_err(|_| bad("list"))?,
            "e_w" => self.e_w = value.parse().map_err(|_| bad("number"))?,
            "trials" => self.trials = value.parse().map_err(|_| bad("integer"))?,
            "replays" => self.replays = value.parse().map_err(|_| bad("integer"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("integer"))?,
            "exclude_divergent" => {
                self.exclude_divergent = value.parse().map_err(|_| bad("bool"))?
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            "mnist_dir" => self.mnist.dir = Some(PathBuf::from(value)),
            "mnist_features" => self.mnist.features = value.parse().map_err(|_| bad("integer"))?,
            "mnist_train_per_task" => {
                self.mnist.train_per_task = value.parse().map_err(|_| bad("integer"))?
            }
            "mnist_test_per_task" => {
                self.mnist.test_per_task = value.parse().map_err(|_| bad("integer"))?
            }
            "mnist_repetitions" => {
                self.mnist.repetitions = value.parse().map_err(|_| bad("integer"))?
            }
            "mnist_nodes" => self.mnist.nodes = value.parse().map_err(|_| bad("integer"))?,
            "mnist_iterations" => {
                self.mnist.iterations = value.parse().map_err(|_| bad("integer"))?
            }
            "mnist_resample" => {
                self.mnist.resample_per_rep = value.parse().map_err(|_| bad("bool"))?
            }
            other => return Err(CliError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, ()> {
    let items: Result<Vec<T>, _> =
        value.split(',').map(|s| s.trim().parse::<T>().map_err(|_| ())).collect();
    let items = items?;
    if items.is_empty() {
        return Err(());
    }
    Ok(items)
}

/// Parse the flat `key = value` config text, rejecting duplicates and
/// malformed lines.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut pairs = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if pairs.insert(key.clone(), value).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        use ExperimentId::*;
        for id in [Fig2, Fig3, Fig4, Fig5, Fig6, Fig7, Fig8, FigVsNt, Custom] {
            for (mode, full) in [(Mode::Theory, false), (Mode::Both, false), (Mode::Both, true)] {
                let cfg = ExperimentConfig::preset(id, mode, full);
                cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", id.name()));
            }
        }
    }

    #[test]
    fn desk_scale_matches_the_spec_example() {
        let cfg = ExperimentConfig::preset(ExperimentId::Fig2, Mode::Both, false);
        assert_eq!(cfg.p, 256);
        assert_eq!(cfg.p_shared_values, vec![192]);
        assert_eq!(cfg.n_values, vec![512]);
        assert_eq!(cfg.scale(), 0.25);
        let cfg = ExperimentConfig::preset(ExperimentId::Fig2, Mode::Theory, false);
        assert_eq!(cfg.p, 1024);
        assert_eq!(cfg.scale(), 1.0);
    }

    #[test]
    fn config_text_round_trip() {
        let text = "# comment\nexperiment = fig2\nk = 1, 2, 4\nsigma2 = 0.01,0.5\nseed = 9\n";
        let pairs = parse_config_text(text).unwrap();
        let mut cfg = ExperimentConfig::preset(ExperimentId::Custom, Mode::Both, false);
        cfg.apply_pairs(&pairs).unwrap();
        assert_eq!(cfg.experiment, ExperimentId::Fig2);
        assert_eq!(cfg.k_values, vec![1, 2, 4]);
        assert_eq!(cfg.sigma2_values, vec![0.01, 0.5]);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let pairs = parse_config_text("sneaky_knob = 3\n").unwrap();
        let mut cfg = ExperimentConfig::preset(ExperimentId::Custom, Mode::Both, false);
        let err = cfg.apply_pairs(&pairs).unwrap_err();
        assert!(err.to_string().contains("sneaky_knob"), "{err}");
    }

    #[test]
    fn duplicate_and_malformed_lines_are_rejected() {
        assert!(parse_config_text("a = 1\na = 2\n").is_err());
        assert!(parse_config_text("just some words\n").is_err());
    }

    #[test]
    fn validation_catches_bad_grids() {
        let mut cfg = ExperimentConfig::preset(ExperimentId::Custom, Mode::Both, false);
        cfg.k_values = vec![3]; // does not divide p = 64
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::preset(ExperimentId::Custom, Mode::Both, false);
        cfg.eps_values = vec![1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::preset(ExperimentId::Custom, Mode::Simulate, false);
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::preset(ExperimentId::Custom, Mode::Theory, false);
        cfg.trials = 0;
        assert!(cfg.validate().is_ok());
    }
}
