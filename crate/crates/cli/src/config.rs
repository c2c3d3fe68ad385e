//! Flat `key = value` run configuration.
//!
//! One pair per line; `#` starts a comment. Every key is listed in [`KEYS`];
//! anything else is rejected. Relative paths resolve against the directory
//! holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bingear_core::distill::RankingWeightParams;
use bingear_core::TrainConfig;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("data", "directory holding dataset.bin written by `ingest`"),
    ("out", "directory for checkpoints, metrics and the run record"),
    ("dim", "embedding width"),
    ("num_layers", "graph convolution layers"),
    ("batch_size", "training pairs per step"),
    ("learning_rate", "Adam step size"),
    ("reg", "L2 coefficient on the base table"),
    ("ranking_scale", "ranking weight scale"),
    ("ranking_decay", "ranking weight decay per rank"),
    ("candidates", "negative candidates drawn per pair"),
    ("mix_bound", "upper bound of the positive mix-up weight, in (0, 1]"),
    ("pseudo_positives", "teacher top-ranked items kept per user and layer"),
    ("gamma", "sharpness of the sign derivative surrogate"),
    ("epochs", "teacher epochs"),
    ("student_epochs", "student epochs"),
    ("eval_every", "epochs between validation passes"),
    ("patience", "validation passes without improvement before stopping"),
    ("validation_fraction", "share of train edges held out for early stopping"),
    ("seed", "root seed for every random stream"),
    ("disable_id1", "drop the interacted-item distillation term"),
    ("disable_id2", "drop the pseudo-positive distillation term"),
    ("disable_synth_teacher", "use plain random negatives for the teacher"),
    ("disable_synth_student", "use plain random negatives for the student"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub train: TrainConfig,
}

fn bad_value(line: usize, key: &str, value: &str) -> CliError {
    CliError::usage(format!("config line {line}: invalid value {value:?} for {key}"))
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut seen = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!("config line {line_no}: expected key = value")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(CliError::usage(format!("config line {line_no}: unknown key {key:?}")));
            }
            if seen.insert(key.to_string(), (line_no, value.to_string())).is_some() {
                return Err(CliError::usage(format!("config line {line_no}: duplicate key {key:?}")));
            }
        }

        let path = |key: &str| -> Result<PathBuf, CliError> {
            let (_, v) = seen
                .get(key)
                .ok_or_else(|| CliError::usage(format!("config is missing required key {key:?}")))?;
            Ok(base.join(v))
        };
        let mut cfg = RunConfig { data: path("data")?, out: path("out")?, train: TrainConfig::default() };

        let t = &mut cfg.train;
        let mut ranking = (t.ranking.scale, t.ranking.decay);
        for (key, (line, value)) in &seen {
            let err = || bad_value(*line, key, value);
            let usize_v = || value.parse::<usize>().map_err(|_| err());
            let f64_v = || value.parse::<f64>().map_err(|_| err());
            let bool_v = || parse_bool(value).ok_or_else(err);
            match key.as_str() {
                "data" | "out" => {}
                "dim" => t.dim = usize_v()?,
                "num_layers" => t.num_layers = usize_v()?,
                "batch_size" => t.batch_size = usize_v()?,
                "learning_rate" => t.learning_rate = f64_v()?,
                "reg" => t.reg = f64_v()?,
                "ranking_scale" => ranking.0 = f64_v()?,
                "ranking_decay" => ranking.1 = f64_v()?,
                "candidates" => t.candidates = usize_v()?,
                "mix_bound" => t.mix_bound = f64_v()?,
                "pseudo_positives" => t.pseudo_positives = usize_v()?,
                "gamma" => t.gamma = f64_v()?,
                "epochs" => t.epochs = usize_v()?,
                "student_epochs" => t.student_epochs = usize_v()?,
                "eval_every" => t.eval_every = usize_v()?,
                "patience" => t.patience = usize_v()?,
                "validation_fraction" => t.validation_fraction = f64_v()?,
                "seed" => t.seed = value.parse().map_err(|_| err())?,
                "disable_id1" => t.ablation.disable_id1 = bool_v()?,
                "disable_id2" => t.ablation.disable_id2 = bool_v()?,
                "disable_synth_teacher" => t.ablation.disable_synth_teacher = bool_v()?,
                "disable_synth_student" => t.ablation.disable_synth_student = bool_v()?,
                other => unreachable!("key {other} accepted but not handled"),
            }
        }
        t.ranking = RankingWeightParams::new(ranking.0, ranking.1)
            .map_err(|e| CliError::usage(format!("config: {e}")))?;
        t.validate().map_err(|e| CliError::usage(format!("config: {e}")))?;
        Ok(cfg)
    }

    /// Training settings as sorted `key=value` lines; paths are excluded.
    pub fn canonical(&self) -> String {
        let t = &self.train;
        let a = &t.ablation;
        let pairs: [(&str, String); 21] = [
            ("batch_size", t.batch_size.to_string()),
            ("candidates", t.candidates.to_string()),
            ("dim", t.dim.to_string()),
            ("disable_id1", a.disable_id1.to_string()),
            ("disable_id2", a.disable_id2.to_string()),
            ("disable_synth_student", a.disable_synth_student.to_string()),
            ("disable_synth_teacher", a.disable_synth_teacher.to_string()),
            ("epochs", t.epochs.to_string()),
            ("eval_every", t.eval_every.to_string()),
            ("gamma", format!("{:?}", t.gamma)),
            ("learning_rate", format!("{:?}", t.learning_rate)),
            ("mix_bound", format!("{:?}", t.mix_bound)),
            ("num_layers", t.num_layers.to_string()),
            ("patience", t.patience.to_string()),
            ("pseudo_positives", t.pseudo_positives.to_string()),
            ("ranking_decay", format!("{:?}", t.ranking.decay)),
            ("ranking_scale", format!("{:?}", t.ranking.scale)),
            ("reg", format!("{:?}", t.reg)),
            ("seed", t.seed.to_string()),
            ("student_epochs", t.student_epochs.to_string()),
            ("validation_fraction", format!("{:?}", t.validation_fraction)),
        ];
        pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// SHA-256 over the canonical settings and the dataset bytes, folded to
    /// the leading 64 bits.
    pub fn hash(&self, dataset: &[u8]) -> u64 {
        let mut h = Sha256::new();
        h.update(self.canonical().as_bytes());
        h.update([0u8]);
        h.update(dataset);
        let digest = h.finalize();
        u64::from_be_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }
}

/// Usage text listing every config key, for `--help`.
pub fn keys_help() -> String {
    let mut out = String::from("Config keys (key = value, one per line, # comments):\n");
    for (k, doc) in KEYS {
        out.push_str(&format!("  {k:<22} {doc}\n"));
    }
    out
}
