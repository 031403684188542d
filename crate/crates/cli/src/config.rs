//! Resolved run configuration: profile defaults, overlaid by a JSON file,
//! overlaid by `--set` pairs and explicit flags.

use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use msecg::data::DspConfig;
use msecg::model::ModelConfig;
use msecg::train::TrainConfig;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Small network and short schedule; minutes on a laptop.
    Desk,
    /// Full-size network and schedule.
    #[default]
    Paper,
}

/// Synthetic corpus settings used by `synth` (and by `prepare` when no noise bank is given).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub records: usize,
    pub duration_s: f64,
    pub sample_rate: f64,
    pub leads: usize,
    pub noise_duration_s: f64,
    pub noise_sample_rate: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            records: 100,
            duration_s: 10.0,
            sample_rate: 500.0,
            leads: 12,
            noise_duration_s: 1800.0,
            noise_sample_rate: 360.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dsp: DspConfig,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::for_profile(Profile::Paper)
    }
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Paper => RunConfig {
                profile,
                seed: 0,
                model: ModelConfig::default(),
                train: TrainConfig::default(),
                dsp: DspConfig::default(),
                data: DataConfig::default(),
            },
            Profile::Desk => RunConfig {
                profile,
                seed: 0,
                model: ModelConfig::tiny(12, 16, 2),
                train: TrainConfig::desk(),
                dsp: DspConfig::default(),
                data: DataConfig { records: 40, noise_duration_s: 120.0, ..DataConfig::default() },
            },
        }
    }

    /// `defaults(profile) <- file <- key=value pairs <- seed flag`.
    pub fn resolve(profile: Profile, file: Option<&Path>, sets: &[String], seed: Option<u64>) -> CliResult<Self> {
        let mut value = serde_json::to_value(RunConfig::for_profile(profile))?;
        if let Some(path) = file {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let overlay: Value =
                serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            merge(&mut value, overlay);
        }
        for kv in sets {
            let (key, raw) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("`--set {kv}` is not of the form key=value")))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut value, key, parsed)?;
        }
        if let Some(seed) = seed {
            value["seed"] = seed.into();
        }
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| CliError::Input(format!("configuration: {e}")))?;
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.dsp.factor != self.model.ratio {
            return Err(CliError::Input(format!(
                "dsp.factor {} must equal model.ratio {}",
                self.dsp.factor, self.model.ratio
            )));
        }
        Ok(())
    }

    /// Training schedule driven by the master seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn write_snapshot(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join("config.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| CliError::io(&path, e))
    }
}

/// Recursive object merge; non-object values replace.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

fn set_path(root: &mut Value, dotted: &str, v: Value) -> CliResult<()> {
    let mut cur = root;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Input(format!("`{dotted}`: `{}` is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), v);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_flags_then_sets_then_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"seed": 5, "train": {"stage1": {"epochs": 7}}, "model": {"d_model": 24}}"#).unwrap();
        let c = RunConfig::resolve(Profile::Desk, Some(&file), &["model.d_model=32".into()], None).unwrap();
        assert_eq!((c.seed, c.train.stage1.epochs, c.model.d_model), (5, 7, 32));
        assert_eq!(c.train.stage1.lr, TrainConfig::desk().stage1.lr);
        let c = RunConfig::resolve(Profile::Desk, Some(&file), &["train.seed=4".into()], Some(9)).unwrap();
        assert_eq!((c.seed, c.train.seed), (9, 9));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(RunConfig::resolve(Profile::Paper, None, &["nonsense".into()], None).is_err());
        assert!(RunConfig::resolve(Profile::Paper, None, &["model.bogus=1".into()], None).is_err());
        assert!(RunConfig::resolve(Profile::Paper, None, &["model.ratio=5".into()], None).is_err());
        assert!(RunConfig::resolve(Profile::Paper, Some(Path::new("/no/such.json")), &[], None).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig::for_profile(Profile::Desk);
        c.write_snapshot(dir.path()).unwrap();
        let back: RunConfig =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
