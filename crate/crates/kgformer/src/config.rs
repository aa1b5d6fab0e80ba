//! Run configuration: a JSON file whose keys mirror the library configs.
//! Missing keys take the library defaults, unknown keys are rejected, and
//! command-line flags override the file.

use clap::ValueEnum;
use kgformer_core::eval::Setting;
use kgformer_core::kgformer::{KgfConfig, NegativeMode};
use kgformer_core::linker::DEFAULT_MIN_LEN;
use kgformer_core::transe::TransEConfig;
use kgformer_core::{Fanout, Norm};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NormArg {
    L1,
    L2,
}

impl From<NormArg> for Norm {
    fn from(n: NormArg) -> Norm {
        match n {
            NormArg::L1 => Norm::L1,
            NormArg::L2 => Norm::L2,
        }
    }
}

impl From<Norm> for NormArg {
    fn from(n: Norm) -> NormArg {
        match n {
            Norm::L1 => NormArg::L1,
            Norm::L2 => NormArg::L2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NegativeArg {
    Substitute,
    Reencode,
}

impl From<NegativeArg> for NegativeMode {
    fn from(n: NegativeArg) -> NegativeMode {
        match n {
            NegativeArg::Substitute => NegativeMode::Substitute,
            NegativeArg::Reencode => NegativeMode::Reencode,
        }
    }
}

impl From<NegativeMode> for NegativeArg {
    fn from(n: NegativeMode) -> NegativeArg {
        match n {
            NegativeMode::Substitute => NegativeArg::Substitute,
            NegativeMode::Reencode => NegativeArg::Reencode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SettingArg {
    Raw,
    Filtered,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Setting {
        match s {
            SettingArg::Raw => Setting::Raw,
            SettingArg::Filtered => Setting::Filtered,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExportArg {
    Base,
    EncodedMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub k_in: usize,
    pub k_out: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let f = Fanout::default();
        SamplerSection { k_in: f.k_in, k_out: f.k_out }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranseSection {
    pub dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub norm: NormArg,
}

impl Default for TranseSection {
    fn default() -> Self {
        let c = TransEConfig::default();
        TranseSection {
            dim: c.dim,
            margin: c.margin,
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_size: c.batch_size,
            norm: c.norm.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgformerSection {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    /// `null` means four times `dim`.
    pub ff_dim: Option<usize>,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negative_mode: NegativeArg,
    pub norm: NormArg,
}

impl Default for KgformerSection {
    fn default() -> Self {
        let c = KgfConfig::default();
        KgformerSection {
            layers: c.layers,
            heads: c.heads,
            dim: c.dim,
            ff_dim: c.ff_dim,
            margin: c.margin,
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_size: c.batch_size,
            negative_mode: c.negative_mode.into(),
            norm: c.norm.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    pub mode: ExportArg,
    pub k_samples: usize,
}

impl Default for ExportSection {
    fn default() -> Self {
        ExportSection { mode: ExportArg::Base, k_samples: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub setting: SettingArg,
    pub norm: NormArg,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { setting: SettingArg::Filtered, norm: NormArg::L1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkerSection {
    pub min_len: usize,
}

impl Default for LinkerSection {
    fn default() -> Self {
        LinkerSection { min_len: DEFAULT_MIN_LEN }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub sampler: SamplerSection,
    pub transe: TranseSection,
    pub kgformer: KgformerSection,
    pub export: ExportSection,
    pub eval: EvalSection,
    pub linker: LinkerSection,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn fanout(&self) -> Fanout {
        Fanout { k_in: self.sampler.k_in, k_out: self.sampler.k_out }
    }

    pub fn transe_config(&self) -> TransEConfig {
        let t = &self.transe;
        TransEConfig {
            dim: t.dim,
            margin: t.margin,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            norm: t.norm.into(),
            seed: self.seed,
        }
    }

    pub fn kgf_config(&self) -> KgfConfig {
        let k = &self.kgformer;
        KgfConfig {
            layers: k.layers,
            heads: k.heads,
            dim: k.dim,
            ff_dim: k.ff_dim,
            margin: k.margin,
            learning_rate: k.learning_rate,
            epochs: k.epochs,
            batch_size: k.batch_size,
            seed: self.seed,
            negative_mode: k.negative_mode.into(),
            fanout: self.fanout(),
            norm: k.norm.into(),
        }
    }

    /// Dotted names of every key, e.g. `kgformer.dim`.
    pub fn keys() -> Vec<String> {
        let value = serde_json::to_value(RunConfig::default()).expect("config serializes");
        let mut keys = Vec::new();
        for (section, v) in value.as_object().expect("object") {
            match v.as_object() {
                Some(fields) => keys.extend(fields.keys().map(|k| format!("{section}.{k}"))),
                None => keys.push(section.clone()),
            }
        }
        keys
    }
}
