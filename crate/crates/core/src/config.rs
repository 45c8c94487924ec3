//! Flat `key = value` experiment configuration.
//!
//! Every key has a default, so an empty file is a valid configuration. Keys
//! are dotted (`pseudo_label.tau`); a few short aliases (`tau`, `lambda`, ...)
//! map onto them. `#` starts a comment. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::augment::{AugmentKind, AugmentationSpec, TemporalViewSpec};
use crate::error::{Error, Result};
use crate::netcore::{OptimizerConfig, Schedule};
use crate::pseudolabel::SchemeId;
use crate::synthdata::{DatasetSpec, SplitScheme};
use crate::trainer::{ExperimentConfig, NetShape, TrainMode};

/// Every accepted key with its default value.
pub const KEYS: &[(&str, &str)] = &[
    ("data.num_classes", "10"),
    ("data.spatial_classes", "5"),
    ("data.temporal_classes", "5"),
    ("data.videos_per_class", "200"),
    ("data.val_videos_per_class", "50"),
    ("data.noise_sigma", "0.1"),
    ("data.seed", "0"),
    ("data.raw_length", "64"),
    ("data.spatial_dim", "64"),
    ("data.modulation_depth", "0.5"),
    ("data.base_frequency", "1"),
    ("data.frequency_step", "0.5"),
    ("data.template_separation", "1"),
    ("split.labeled_fraction", "0.01"),
    ("split.scheme", "uniform"),
    ("split.seed", "run"),
    ("trainer.mode", "cmpl"),
    ("trainer.epochs", "50"),
    ("trainer.labeled_batch", "2"),
    ("trainer.batch_ratio", "5"),
    ("trainer.lambda", "auto"),
    ("trainer.num_clips", "3"),
    ("trainer.snapshot_interval", "10"),
    ("pseudo_label.scheme", "cross"),
    ("pseudo_label.tau", "0.9"),
    ("optimizer.base_lr", "0.002"),
    ("optimizer.momentum", "0.9"),
    ("optimizer.weight_decay", "0.0001"),
    ("optimizer.schedule", "cosine"),
    ("temporal.primary_frames", "8"),
    ("temporal.primary_stride", "8"),
    ("temporal.aux_frames", "16"),
    ("temporal.aux_stride", "4"),
    ("temporal.time_offset", "0"),
    ("primary.depth_blocks", "2"),
    ("primary.width_factor", "1"),
    ("primary.base_channels", "32"),
    ("auxiliary.depth_blocks", "2"),
    ("auxiliary.width_factor", "0.25"),
    ("auxiliary.base_channels", "32"),
    ("augment.standard_jitter", "0.01"),
    ("augment.weak_jitter", "0.01"),
    ("augment.strong_jitter", "0"),
    ("augment.cutout_fraction", "0.25"),
    ("augment.transform_count", "2"),
    ("augment.shared_clip", "true"),
    ("eval.strides", "1,2,4,8"),
    ("run.seeds", "0"),
];

/// Short names accepted anywhere a key is.
pub const ALIASES: &[(&str, &str)] = &[
    ("tau", "pseudo_label.tau"),
    ("lambda", "trainer.lambda"),
    ("scheme", "pseudo_label.scheme"),
    ("mode", "trainer.mode"),
    ("epochs", "trainer.epochs"),
    ("batch_ratio", "trainer.batch_ratio"),
    ("labeled_fraction", "split.labeled_fraction"),
    ("time_offset", "temporal.time_offset"),
    ("aux_frames", "temporal.aux_frames"),
    ("aux_stride", "temporal.aux_stride"),
    ("aux_width", "auxiliary.width_factor"),
    ("aux_depth", "auxiliary.depth_blocks"),
    ("seeds", "run.seeds"),
    ("lr", "optimizer.base_lr"),
];

/// A sweep axis: one run per value, everything else fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
    sweep: Option<Sweep>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            sweep: None,
        }
    }
}

/// Canonical key for a name or alias.
pub fn resolve_key(name: &str) -> Result<&'static str> {
    if let Some((_, k)) = ALIASES.iter().find(|(a, _)| *a == name) {
        return Ok(k);
    }
    KEYS.iter()
        .find(|(k, _)| *k == name)
        .map(|(k, _)| *k)
        .ok_or_else(|| Error::config(format!("unknown config key {name:?}")))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", n + 1)))?;
            config.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    /// Sets one key (or alias). `sweep` takes `axis:v1,v2,...`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key == "sweep" {
            self.sweep = Some(parse_sweep(value)?);
            return Ok(());
        }
        let key = resolve_key(key)?;
        if value.is_empty() {
            return Err(Error::config(format!("empty value for {key}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        let key = resolve_key(key)?;
        Ok(self.values.get(key).map(String::as_str).expect("every key has a default"))
    }

    pub fn sweep(&self) -> Option<&Sweep> {
        self.sweep.as_ref()
    }

    pub fn clear_sweep(&mut self) {
        self.sweep = None;
    }

    fn parse_value<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse().map_err(|_| Error::config(format!("{key}: cannot parse {raw:?}")))
    }

    fn parse_bool(&self, key: &str) -> Result<bool> {
        match self.get(key)? {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(Error::config(format!("{key}: expected true or false, got {other:?}"))),
        }
    }

    fn parse_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.get(key)?;
        parse_list(raw).map_err(|_| Error::config(format!("{key}: cannot parse list {raw:?}")))
    }

    pub fn seeds(&self) -> Result<Vec<u64>> {
        let seeds: Vec<u64> = self.parse_list("run.seeds")?;
        if seeds.is_empty() {
            return Err(Error::config("run.seeds is empty"));
        }
        Ok(seeds)
    }

    pub fn set_seeds(&mut self, seeds: &[u64]) -> Result<()> {
        let text = seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        self.set("run.seeds", &text)
    }

    pub fn eval_strides(&self) -> Result<Vec<usize>> {
        self.parse_list("eval.strides")
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let spec = DatasetSpec {
            num_classes: self.parse_value("data.num_classes")?,
            spatial_class_count: self.parse_value("data.spatial_classes")?,
            temporal_class_count: self.parse_value("data.temporal_classes")?,
            videos_per_class: self.parse_value("data.videos_per_class")?,
            noise_sigma: self.parse_value("data.noise_sigma")?,
            seed: self.parse_value("data.seed")?,
            raw_length: self.parse_value("data.raw_length")?,
            spatial_dim: self.parse_value("data.spatial_dim")?,
            modulation_depth: self.parse_value("data.modulation_depth")?,
            base_frequency: self.parse_value("data.base_frequency")?,
            frequency_step: self.parse_value("data.frequency_step")?,
            template_separation: self.parse_value("data.template_separation")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn val_videos_per_class(&self) -> Result<usize> {
        self.parse_value("data.val_videos_per_class")
    }

    pub fn labeled_fraction(&self) -> Result<f64> {
        let f: f64 = self.parse_value("split.labeled_fraction")?;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::config(format!("split.labeled_fraction must lie in (0, 1), got {f}")));
        }
        Ok(f)
    }

    /// Fixed split seed, or `None` when each training seed draws its own split.
    pub fn split_seed(&self) -> Result<Option<u64>> {
        match self.get("split.seed")? {
            "run" => Ok(None),
            _ => self.parse_value("split.seed").map(Some),
        }
    }

    pub fn split_scheme(&self) -> Result<SplitScheme> {
        match self.get("split.scheme")? {
            "uniform" => Ok(SplitScheme::Uniform),
            "category_wise" => Ok(SplitScheme::CategoryWise),
            other => Err(Error::config(format!("split.scheme: unknown scheme {other:?}"))),
        }
    }

    /// Loss weight: explicit value, or 5 at up to 5% labels and 2 above.
    pub fn lambda(&self) -> Result<f64> {
        match self.get("trainer.lambda")? {
            "auto" => Ok(if self.labeled_fraction()? <= 0.05 { 5.0 } else { 2.0 }),
            _ => self.parse_value("trainer.lambda"),
        }
    }

    /// Mode and scheme after reconciling `scheme = fixmatch` with the mode.
    fn mode_and_scheme(&self) -> Result<(TrainMode, SchemeId)> {
        let mode: TrainMode = self.get("trainer.mode")?.parse()?;
        let scheme: SchemeId = self.get("pseudo_label.scheme")?.parse()?;
        Ok(match (mode, scheme) {
            (TrainMode::Cmpl, SchemeId::FixMatchSingle) | (TrainMode::FixMatch, _) => {
                (TrainMode::FixMatch, SchemeId::FixMatchSingle)
            }
            other => other,
        })
    }

    fn net_shape(&self, prefix: &str) -> Result<NetShape> {
        Ok(NetShape {
            depth_blocks: self.parse_value(&format!("{prefix}.depth_blocks"))?,
            width_factor: self.parse_value(&format!("{prefix}.width_factor"))?,
            base_channels: self.parse_value(&format!("{prefix}.base_channels"))?,
        })
    }

    /// Training configuration for one seed.
    pub fn experiment(&self, seed: u64) -> Result<ExperimentConfig> {
        let (mode, scheme) = self.mode_and_scheme()?;
        let schedule = match self.get("optimizer.schedule")? {
            "cosine" => Schedule::Cosine,
            "constant" => Schedule::Constant,
            other => return Err(Error::config(format!("optimizer.schedule: unknown schedule {other:?}"))),
        };
        let jitter = |key: &str, kind: AugmentKind| -> Result<AugmentationSpec> {
            Ok(AugmentationSpec {
                kind,
                jitter_sigma: self.parse_value(key)?,
                cutout_fraction: 0.0,
                transform_count: 0,
            })
        };
        let strong = AugmentationSpec {
            cutout_fraction: self.parse_value("augment.cutout_fraction")?,
            transform_count: self.parse_value("augment.transform_count")?,
            ..jitter("augment.strong_jitter", AugmentKind::Strong)?
        };
        let config = ExperimentConfig {
            mode,
            scheme,
            tau: self.parse_value("pseudo_label.tau")?,
            lambda: self.lambda()?,
            labeled_batch: self.parse_value("trainer.labeled_batch")?,
            batch_ratio: self.parse_value("trainer.batch_ratio")?,
            epochs: self.parse_value("trainer.epochs")?,
            optimizer: OptimizerConfig {
                base_lr: self.parse_value("optimizer.base_lr")?,
                momentum: self.parse_value("optimizer.momentum")?,
                weight_decay: self.parse_value("optimizer.weight_decay")?,
                total_steps: 1,
                schedule,
            },
            temporal: TemporalViewSpec {
                primary_frames: self.parse_value("temporal.primary_frames")?,
                primary_stride: self.parse_value("temporal.primary_stride")?,
                aux_frames: self.parse_value("temporal.aux_frames")?,
                aux_stride: self.parse_value("temporal.aux_stride")?,
                time_offset: self.parse_value("temporal.time_offset")?,
            },
            primary: self.net_shape("primary")?,
            auxiliary: self.net_shape("auxiliary")?,
            standard: jitter("augment.standard_jitter", AugmentKind::Standard)?,
            weak: jitter("augment.weak_jitter", AugmentKind::Weak)?,
            strong,
            shared_clip: self.parse_bool("augment.shared_clip")?,
            num_clips: self.parse_value("trainer.num_clips")?,
            snapshot_interval: self.parse_value("trainer.snapshot_interval")?,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks every key parses and every component validates, without
    /// running anything.
    pub fn validate(&self) -> Result<()> {
        let spec = self.dataset_spec()?;
        self.val_videos_per_class()?;
        self.labeled_fraction()?;
        self.split_scheme()?;
        self.split_seed()?;
        self.eval_strides()?;
        for seed in self.seeds()? {
            let exp = self.experiment(seed)?;
            exp.temporal.validate(spec.raw_length)?;
        }
        Ok(())
    }

    /// Sorted `key = value` lines with aliases resolved. Equal text means an
    /// equal configuration.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_list<T: FromStr>(raw: &str) -> std::result::Result<Vec<T>, T::Err> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

fn parse_sweep(value: &str) -> Result<Sweep> {
    let (axis, values) = value
        .split_once(':')
        .ok_or_else(|| Error::config(format!("sweep {value:?} is not axis:v1,v2,...")))?;
    let key = resolve_key(axis.trim())?;
    if key == "run.seeds" {
        return Err(Error::config("seeds are not a sweep axis; use run.seeds"));
    }
    let values = values.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
    Ok(Sweep { key: key.to_string(), values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = Config::default();
        c.validate().unwrap();
        let exp = c.experiment(0).unwrap();
        assert_eq!(exp.tau, 0.9);
        assert_eq!(exp.lambda, 5.0);
        assert_eq!(exp.unlabeled_batch(), 10);
        assert_eq!(exp.scheme, SchemeId::Cross);
    }

    #[test]
    fn comments_aliases_and_overrides() {
        let mut c = Config::parse("# header\npseudo_label.tau = 0.7  # inline\n\nlambda = 1\n").unwrap();
        assert_eq!(c.get("tau").unwrap(), "0.7");
        c.apply_overrides(&["tau=0.95", "labeled_fraction=0.1", "lambda=auto"]).unwrap();
        let exp = c.experiment(0).unwrap();
        assert_eq!(exp.tau, 0.95);
        assert_eq!(exp.lambda, 2.0);
    }

    #[test]
    fn unknown_key_fails() {
        assert!(matches!(Config::parse("pseudo_label.taux = 1"), Err(Error::Config(_))));
        assert!(matches!(Config::default().apply_overrides(&["bogus=1"]), Err(Error::Config(_))));
        assert!(matches!(Config::parse("no equals sign"), Err(Error::Config(_))));
    }

    #[test]
    fn bad_values_fail_at_validation() {
        let mut c = Config::default();
        c.set("tau", "1.5").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = Config::default();
        c.set("aux_frames", "32").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = Config::default();
        c.set("epochs", "many").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn fixmatch_scheme_selects_fixmatch_mode() {
        let mut c = Config::default();
        c.set("scheme", "fixmatch").unwrap();
        let exp = c.experiment(0).unwrap();
        assert_eq!((exp.mode, exp.scheme), (TrainMode::FixMatch, SchemeId::FixMatchSingle));
        let mut c = Config::default();
        c.set("mode", "fixmatch").unwrap();
        assert_eq!(c.experiment(0).unwrap().scheme, SchemeId::FixMatchSingle);
    }

    #[test]
    fn hash_ignores_layout_and_aliases() {
        let a = Config::parse("tau = 0.7\nlambda = 1").unwrap();
        let b = Config::parse("\n# x\ntrainer.lambda=1\npseudo_label.tau =0.7\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), Config::default().hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn sweep_parsing() {
        let c = Config::parse("sweep = tau:0.5,0.7,0.9,0.95").unwrap();
        let s = c.sweep().unwrap();
        assert_eq!(s.key, "pseudo_label.tau");
        assert_eq!(s.values.len(), 4);
        let empty = Config::parse("sweep = lambda:").unwrap();
        assert!(empty.sweep().unwrap().values.is_empty());
        assert!(Config::parse("sweep = nothing:1").is_err());
    }

    #[test]
    fn seeds() {
        let mut c = Config::default();
        c.set_seeds(&[3, 1, 4]).unwrap();
        assert_eq!(c.seeds().unwrap(), vec![3, 1, 4]);
        c.set("seeds", "").unwrap_err();
    }
}
