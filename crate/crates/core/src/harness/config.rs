//! Experiment configuration and its flat `key = value` text format.
//!
//! ```text
//! # comments start with '#'
//! link.n_samples = 1000
//! link.interferer_mean_inr_db = 5, 3, 0, -2, -5
//! methods = AR_EMD, AR_DIRECT, IIR, GENIE
//! ```
//!
//! Every key is optional; unknown keys are errors. [`ExperimentConfig::to_kv`]
//! writes every key in a fixed order and parses back to the same config.

use std::path::{Path, PathBuf};

use crate::baselines::IirParams;
use crate::chan_sim::LinkConfig;
use crate::emd::SiftParams;
use crate::error::{Error, Result};
use crate::forecast::{
    AdamConfig, ArimaSpec, CellActivation, Method, RecurrentSpec, RnnRefit, TrainValSplit,
};

/// Built-in configurations selectable by name instead of a file path.
pub const PRESETS: [&str; 3] = ["default", "table1_preset", "desk_preset"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub link: LinkConfig,
    pub train_fraction: f64,
    pub sift: SiftParams,
    pub arima: ArimaSpec,
    pub rnn: RecurrentSpec,
    pub iir: IirParams,
    pub payload_bits: f64,
    pub target_eps_list: Vec<f64>,
    pub n_seeds: usize,
    pub methods: Vec<Method>,
    pub integer_r: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            link: LinkConfig::default(),
            train_fraction: 0.8,
            sift: SiftParams::default(),
            arima: ArimaSpec::default(),
            rnn: RecurrentSpec::default(),
            iir: IirParams::default(),
            payload_bits: 50.0,
            target_eps_list: vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
            n_seeds: 20,
            methods: Method::ALL.to_vec(),
            integer_r: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// The short reference setup: 100 samples, one trace realisation.
    pub fn table1_preset() -> Self {
        let mut cfg = Self::default();
        cfg.link.n_samples = 100;
        cfg.n_seeds = 1;
        cfg
    }

    /// A recurrent model small enough for a single laptop core: one
    /// 16-unit layer, 20 epochs, and one fine-tune epoch per step.
    pub fn desk_preset() -> Self {
        let mut cfg = Self::default();
        cfg.rnn = RecurrentSpec {
            layers: 1,
            units: 16,
            epochs: 20,
            refit: RnnRefit::FineTune {
                epochs: 1,
                recent_pairs: 32,
            },
            adam: AdamConfig {
                learning_rate: 5e-3,
                ..AdamConfig::default()
            },
            ..RecurrentSpec::default()
        };
        cfg
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "table1_preset" => Some(Self::table1_preset()),
            "desk_preset" => Some(Self::desk_preset()),
            _ => None,
        }
    }

    /// Load a config file, or a built-in preset when `spec` names one and
    /// no such file exists.
    pub fn load(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if !path.exists() {
            if let Some(cfg) = Self::preset(spec) {
                return Ok(cfg);
            }
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn split(&self) -> Result<TrainValSplit> {
        TrainValSplit::from_fraction(self.link.n_samples, self.train_fraction)
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.sift.validate()?;
        self.arima.validate()?;
        self.rnn.validate()?;
        self.iir.validate()?;
        self.split()?;
        let cfg_err = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.payload_bits >= 1.0) {
            return cfg_err("payload_bits must be at least 1");
        }
        if self.target_eps_list.is_empty()
            || self.target_eps_list.iter().any(|e| !(*e > 0.0 && *e < 1.0))
        {
            return cfg_err("target_eps_list values must lie in (0, 1)");
        }
        if self.target_eps_list.windows(2).any(|w| w[0] >= w[1]) {
            return cfg_err("target_eps_list must be sorted ascending without repeats");
        }
        if self.n_seeds < 1 {
            return cfg_err("n_seeds must be at least 1");
        }
        if self.methods.is_empty() {
            return cfg_err("at least one method is required");
        }
        let mut sorted = self.methods.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.methods.len() {
            return cfg_err("methods must not repeat");
        }
        Ok(())
    }

    /// Parse `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut n_interferers_set = false;
        let mut inr_set = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value)
                .map_err(|msg| Error::Config(format!("line {}: {key}: {msg}", lineno + 1)))?;
            n_interferers_set |= key == "link.n_interferers";
            inr_set |= key == "link.interferer_mean_inr_db";
        }
        if inr_set && !n_interferers_set {
            cfg.link.n_interferers = cfg.link.interferer_mean_inr_db.len();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "link.n_interferers" => self.link.n_interferers = num(v)?,
            "link.interferer_mean_inr_db" => self.link.interferer_mean_inr_db = list(v)?,
            "link.desired_mean_snr_db" => self.link.desired_mean_snr_db = num(v)?,
            "link.noise_power" => self.link.noise_power = num(v)?,
            "link.n_samples" => self.link.n_samples = num(v)?,
            "link.coherence_block_len" => self.link.coherence_block_len = num(v)?,
            "link.rng_seed" => self.link.rng_seed = num(v)?,
            "link.faded_desired" => self.link.faded_desired = boolean(v)?,
            "split.train_fraction" => self.train_fraction = num(v)?,
            "sift.sd_threshold" => self.sift.sd_threshold = num(v)?,
            "sift.max_sift_iters" => self.sift.max_sift_iters = num(v)?,
            "sift.max_imfs" => self.sift.max_imfs = num(v)?,
            "sift.boundary_mode" => expect_word(v, "mirror")?,
            "sift.spline" => expect_word(v, "natural_cubic")?,
            "arima.p" => self.arima.p = num(v)?,
            "arima.d" => self.arima.d = num(v)?,
            "arima.q" => self.arima.q = num(v)?,
            "arima.window" => self.arima.window = num(v)?,
            "arima.fit_len" => {
                self.arima.fit_len = if v == "all" { None } else { Some(num(v)?) }
            }
            "rnn.layers" => self.rnn.layers = num(v)?,
            "rnn.units" => self.rnn.units = num(v)?,
            "rnn.epochs" => self.rnn.epochs = num(v)?,
            "rnn.window" => self.rnn.window = num(v)?,
            "rnn.batch_size" => self.rnn.batch_size = num(v)?,
            "rnn.learning_rate" => self.rnn.adam.learning_rate = num(v)?,
            "rnn.beta1" => self.rnn.adam.beta1 = num(v)?,
            "rnn.beta2" => self.rnn.adam.beta2 = num(v)?,
            "rnn.epsilon" => self.rnn.adam.epsilon = num(v)?,
            "rnn.cell_activation" => {
                self.rnn.cell_activation = match v {
                    "tanh" => CellActivation::Tanh,
                    "relu" => CellActivation::Relu,
                    _ => return Err(format!("expected tanh or relu, got '{v}'")),
                }
            }
            "rnn.refit" => {
                let (epochs, recent_pairs) = finetune_parts(self.rnn.refit);
                self.rnn.refit = match v {
                    "frozen" => RnnRefit::Frozen,
                    "finetune" => RnnRefit::FineTune {
                        epochs,
                        recent_pairs,
                    },
                    "retrain" => RnnRefit::Retrain,
                    _ => return Err(format!("expected frozen, finetune or retrain, got '{v}'")),
                }
            }
            "rnn.finetune_epochs" | "rnn.finetune_pairs" => {
                let (mut epochs, mut recent_pairs) = finetune_parts(self.rnn.refit);
                if key == "rnn.finetune_epochs" {
                    epochs = num(v)?;
                } else {
                    recent_pairs = num(v)?;
                }
                if let RnnRefit::FineTune { .. } = self.rnn.refit {
                    self.rnn.refit = RnnRefit::FineTune {
                        epochs,
                        recent_pairs,
                    };
                }
            }
            "iir.alpha" => self.iir.alpha = num(v)?,
            "iir.init_estimate" => {
                self.iir.init_estimate = if v == "first" { None } else { Some(num(v)?) }
            }
            "iir.literal_index" => self.iir.literal_index = boolean(v)?,
            "payload_bits" => self.payload_bits = num(v)?,
            "target_eps_list" => self.target_eps_list = list(v)?,
            "n_seeds" => self.n_seeds = num(v)?,
            "methods" => {
                self.methods = v
                    .split(',')
                    .map(|m| m.trim().parse::<Method>().map_err(|e| e.to_string()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "integer_r" => self.integer_r = boolean(v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            _ => return Err("unknown key".to_owned()),
        }
        Ok(())
    }

    /// The experiment-defining keys: everything except `output_dir`, so a
    /// run moved to another directory keeps the same echo and hash.
    pub fn experiment_kv(&self) -> String {
        let full = self.to_kv();
        full.lines()
            .filter(|l| !l.starts_with("output_dir "))
            .map(|l| format!("{l}\n"))
            .collect()
    }

    /// Every key with its current value, one per line, in a fixed order.
    pub fn to_kv(&self) -> String {
        let f = |v: f64| format!("{v:?}");
        let flist = |v: &[f64]| v.iter().map(|x| f(*x)).collect::<Vec<_>>().join(", ");
        let (ft_epochs, ft_pairs) = finetune_parts(self.rnn.refit);
        let lines = [
            ("link.n_interferers", self.link.n_interferers.to_string()),
            ("link.interferer_mean_inr_db", flist(&self.link.interferer_mean_inr_db)),
            ("link.desired_mean_snr_db", f(self.link.desired_mean_snr_db)),
            ("link.noise_power", f(self.link.noise_power)),
            ("link.n_samples", self.link.n_samples.to_string()),
            ("link.coherence_block_len", self.link.coherence_block_len.to_string()),
            ("link.rng_seed", self.link.rng_seed.to_string()),
            ("link.faded_desired", self.link.faded_desired.to_string()),
            ("split.train_fraction", f(self.train_fraction)),
            ("sift.sd_threshold", f(self.sift.sd_threshold)),
            ("sift.max_sift_iters", self.sift.max_sift_iters.to_string()),
            ("sift.max_imfs", self.sift.max_imfs.to_string()),
            ("sift.boundary_mode", "mirror".to_owned()),
            ("sift.spline", "natural_cubic".to_owned()),
            ("arima.p", self.arima.p.to_string()),
            ("arima.d", self.arima.d.to_string()),
            ("arima.q", self.arima.q.to_string()),
            ("arima.window", self.arima.window.to_string()),
            (
                "arima.fit_len",
                self.arima.fit_len.map_or("all".to_owned(), |n| n.to_string()),
            ),
            ("rnn.layers", self.rnn.layers.to_string()),
            ("rnn.units", self.rnn.units.to_string()),
            ("rnn.epochs", self.rnn.epochs.to_string()),
            ("rnn.window", self.rnn.window.to_string()),
            ("rnn.batch_size", self.rnn.batch_size.to_string()),
            ("rnn.learning_rate", f(self.rnn.adam.learning_rate)),
            ("rnn.beta1", f(self.rnn.adam.beta1)),
            ("rnn.beta2", f(self.rnn.adam.beta2)),
            ("rnn.epsilon", f(self.rnn.adam.epsilon)),
            (
                "rnn.cell_activation",
                match self.rnn.cell_activation {
                    CellActivation::Tanh => "tanh",
                    CellActivation::Relu => "relu",
                }
                .to_owned(),
            ),
            (
                "rnn.refit",
                match self.rnn.refit {
                    RnnRefit::Frozen => "frozen",
                    RnnRefit::FineTune { .. } => "finetune",
                    RnnRefit::Retrain => "retrain",
                }
                .to_owned(),
            ),
            ("rnn.finetune_epochs", ft_epochs.to_string()),
            ("rnn.finetune_pairs", ft_pairs.to_string()),
            ("iir.alpha", f(self.iir.alpha)),
            (
                "iir.init_estimate",
                self.iir.init_estimate.map_or("first".to_owned(), f),
            ),
            ("iir.literal_index", self.iir.literal_index.to_string()),
            ("payload_bits", f(self.payload_bits)),
            ("target_eps_list", flist(&self.target_eps_list)),
            ("n_seeds", self.n_seeds.to_string()),
            (
                "methods",
                self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(", "),
            ),
            ("integer_r", self.integer_r.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
        ];
        lines
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

fn finetune_parts(refit: RnnRefit) -> (usize, usize) {
    match refit {
        RnnRefit::FineTune {
            epochs,
            recent_pairs,
        } => (epochs, recent_pairs),
        _ => (5, 32),
    }
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse '{v}'"))
}

fn list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(|x| num(x.trim())).collect()
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected a boolean, got '{v}'")),
    }
}

fn expect_word(v: &str, want: &str) -> std::result::Result<(), String> {
    if v == want {
        Ok(())
    } else {
        Err(format!("only '{want}' is supported, got '{v}'"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_values() {
        let c = ExperimentConfig::default();
        assert_eq!(c.payload_bits, 50.0);
        assert_eq!(c.target_eps_list, vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1]);
        assert_eq!(c.iir.alpha, 0.01);
        assert_eq!((c.arima.p, c.arima.d, c.arima.q), (30, 1, 0));
        assert_eq!((c.rnn.layers, c.rnn.units, c.rnn.epochs, c.rnn.window), (2, 100, 100, 30));
        assert_eq!(c.link.n_samples, 1000);
        assert_eq!(c.n_seeds, 20);
        assert!(c.validate().is_ok());
        assert_eq!(ExperimentConfig::table1_preset().link.n_samples, 100);
    }

    #[test]
    fn echo_round_trips() {
        for name in PRESETS {
            let mut cfg = ExperimentConfig::preset(name).unwrap();
            cfg.iir.init_estimate = Some(2.5);
            cfg.arima.fit_len = Some(200);
            cfg.methods = vec![Method::Genie, Method::ArEmd];
            let text = cfg.to_kv();
            assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn experiment_echo_ignores_output_dir() {
        let mut a = ExperimentConfig::default();
        a.output_dir = "x".into();
        let mut b = a.clone();
        b.output_dir = "y".into();
        assert_eq!(a.experiment_kv(), b.experiment_kv());
        assert_eq!(a.experiment_kv().lines().count() + 1, a.to_kv().lines().count());
    }

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# comment\nlink.n_samples = 200  # inline\n\nlink.interferer_mean_inr_db = 1, -1\nmethods = genie, iir\n",
        )
        .unwrap();
        assert_eq!(cfg.link.n_samples, 200);
        assert_eq!(cfg.link.n_interferers, 2);
        assert_eq!(cfg.methods, vec![Method::Genie, Method::Iir]);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "nonsense.key = 1",
            "link.n_samples",
            "link.n_samples = many",
            "methods =",
            "target_eps_list = 0.1, 0.01",
            "target_eps_list = 0.5, 1.0",
            "n_seeds = 0",
            "link.n_interferers = 3",
            "methods = GENIE, GENIE",
            "sift.boundary_mode = periodic",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn shipped_preset_file_matches_builtin() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/table1_preset.cfg");
        let mut cfg = ExperimentConfig::load(path).unwrap();
        cfg.output_dir = ExperimentConfig::table1_preset().output_dir;
        assert_eq!(cfg, ExperimentConfig::table1_preset());
    }

    #[test]
    fn missing_file_error_names_path() {
        let err = ExperimentConfig::load("/no/such/dir/exp.cfg").unwrap_err();
        assert!(err.to_string().contains("/no/such/dir/exp.cfg"));
        assert!(ExperimentConfig::load("table1_preset").is_ok());
    }
}
