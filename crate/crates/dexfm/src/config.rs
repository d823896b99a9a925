//! Run settings merged from defaults, an optional config file and flags.
//!
//! Config files hold flat `key = value` lines; keys are the long flag
//! names (`lambda-d`, or `lambda_d`), `#` starts a comment. Values set on
//! the command line win over the file, which wins over the defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use dexfm_core::deepnet::MlpConfig;
use dexfm_core::model::{Architecture, ConfigError};
use dexfm_core::training::apply_variant;
use dexfm_core::{DeinConfig, TrainConfig, Variant};

use crate::error::{read_to_string, Error, Result};
use crate::formats::LabelFormat;

/// Feature-map counts: one value for every layer, or one per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Maps(pub Vec<usize>);

impl FromStr for Maps {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = s
            .split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|_| format!("`{x}` is not a count")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Maps(v))
    }
}

macro_rules! settings {
    ($( $(#[$doc:meta])* $field:ident : $ty:ty = $key:literal ),* $(,)?) => {
        /// Every setting shared by `train`, `cv` and `sweep`. `None` means
        /// "not given at this level".
        #[derive(Debug, Clone, Default, PartialEq, clap::Args)]
        pub struct Settings {
            $( $(#[$doc])* #[arg(long = $key)] pub $field: Option<$ty>, )*
        }

        impl Settings {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
                let value = value.trim();
                match key.replace('_', "-").as_str() {
                    $( $key => self.$field = Some(value.parse::<$ty>().map_err(|e| format!("{}: {e}", $key))?), )*
                    other => return Err(format!("unknown key `{other}`")),
                }
                Ok(())
            }

            /// Keeps everything set on `self` and fills the rest from `lower`.
            pub fn over(self, lower: Settings) -> Settings {
                Settings { $( $field: self.$field.or(lower.$field), )* }
            }
        }
    };
}

settings! {
    /// Schema file, one `name<TAB>kind` line per field [default: none, required]
    schema: PathBuf = "schema",
    /// Data file, label first then one column per field [default: none, required]
    data: PathBuf = "data",
    /// Output directory [default: out]
    out: PathBuf = "out",
    /// Seed for initialization, shuffling and fold assignment [default: 0]
    seed: u64 = "seed",
    /// Model variant: full, no_diversity, no_attention or no_deep [default: full]
    variant: Variant = "variant",
    /// Weight of the diversity term [default: 0.7]
    lambda_d: f64 = "lambda-d",
    /// Weight of the squared L2 penalty [default: 0.00001]
    lambda_n: f64 = "lambda-n",
    /// Number of interaction layers K [default: 3]
    depth_dein: usize = "depth-dein",
    /// Feature maps per interaction layer, one value or a comma list [default: 200]
    maps: Maps = "maps",
    /// Attention hidden size [default: 32]
    attention_hidden: usize = "attention-hidden",
    /// Embedding dimension [default: 10]
    embed_dim: usize = "embed-dim",
    /// Hidden layers of the deep component [default: 2]
    mlp_depth: usize = "mlp-depth",
    /// Width of each deep hidden layer [default: 300]
    mlp_width: usize = "mlp-width",
    /// Training epochs [default: 10]
    epochs: usize = "epochs",
    /// Mini-batch size [default: 4096]
    batch: usize = "batch",
    /// Adam learning rate [default: 0.001]
    lr: f64 = "lr",
    /// Early-stopping patience in epochs, 0 turns it off [default: 0]
    patience: usize = "patience",
    /// Norm bound for embedding and interaction-weight rows after each step, 0 turns it off [default: 0]
    max_norm: f64 = "max-norm",
    /// Instances per gradient chunk [default: 32]
    chunk: usize = "chunk",
    /// Minimum token count to enter the vocabulary [default: 0]
    min_freq: usize = "min-freq",
    /// Label column format: binary or rating [default: binary]
    labels: LabelFormat = "labels",
    /// Cross-validation folds [default: 5]
    folds: usize = "folds",
    /// Significance level of the paired t-test [default: 0.05]
    alpha: f64 = "alpha",
    /// Worker threads for folds, grid points and gradient chunks [default: 1]
    jobs: usize = "jobs",
}

pub fn parse_config_file(text: &str, path: &Path) -> Result<Settings> {
    let mut s = Settings::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, i + 1, "expected `key = value`"))?;
        s.set(k.trim(), v).map_err(|e| Error::parse(path, i + 1, e))?;
    }
    Ok(s)
}

/// Flags over the config file, if any.
pub fn merge(flags: &Settings, config: Option<&Path>) -> Result<Settings> {
    let file = match config {
        Some(p) => parse_config_file(&read_to_string(p)?, p)?,
        None => Settings::default(),
    };
    Ok(flags.clone().over(file))
}

const DEFAULT_DEPTH: usize = 3;
const DEFAULT_MAPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schema: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub min_freq: usize,
    pub labels: LabelFormat,
    pub folds: usize,
    pub alpha: f64,
    pub jobs: usize,
}

impl RunConfig {
    /// Fills unset values with defaults and rejects inconsistent
    /// combinations before any data is read.
    pub fn resolve(s: &Settings) -> Result<Self> {
        let invalid = |m: String| Error::Config(ConfigError::Invalid(m));
        let maps = match (&s.maps, s.depth_dein) {
            (Some(Maps(v)), d) if v.len() > 1 => {
                if d.is_some_and(|d| d != v.len()) {
                    return Err(invalid(format!("--maps lists {} layers but --depth-dein is {}", v.len(), d.unwrap())));
                }
                v.clone()
            }
            (m, d) => vec![m.as_ref().map_or(DEFAULT_MAPS, |m| m.0[0]); d.unwrap_or(DEFAULT_DEPTH)],
        };
        let arch_default = Architecture::default();
        let mlp_default = MlpConfig::default();
        let arch = Architecture {
            embed_dim: s.embed_dim.unwrap_or(arch_default.embed_dim),
            dein: DeinConfig {
                maps,
                attention: true,
                attention_hidden: s.attention_hidden.unwrap_or(arch_default.dein.attention_hidden),
            },
            mlp: Some(MlpConfig {
                depth: s.mlp_depth.unwrap_or(mlp_default.depth),
                width: s.mlp_width.unwrap_or(mlp_default.width),
            }),
        };
        let d = TrainConfig::default();
        let train = TrainConfig {
            lambda_d: s.lambda_d.unwrap_or(d.lambda_d),
            lambda_n: s.lambda_n.unwrap_or(d.lambda_n),
            adam: dexfm_core::adam::AdamConfig {
                learning_rate: s.lr.unwrap_or(d.adam.learning_rate),
                ..d.adam
            },
            epochs: s.epochs.unwrap_or(d.epochs),
            batch_size: s.batch.unwrap_or(d.batch_size),
            variant: s.variant.unwrap_or(d.variant),
            seed: s.seed.unwrap_or(d.seed),
            clip: d.clip,
            patience: s.patience.filter(|&p| p > 0),
            chunk_size: s.chunk.unwrap_or(d.chunk_size),
            max_norm: s.max_norm.filter(|&c| c != 0.0),
        };
        train.validate()?;
        // structural checks need field sizes; any positive size will do here
        apply_variant(&arch.spec(vec![1]), &train)?;
        let folds = s.folds.unwrap_or(5);
        if folds < 2 {
            return Err(invalid("--folds must be at least 2".into()));
        }
        let alpha = s.alpha.unwrap_or(0.05);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("--alpha must lie in (0, 1)".into()));
        }
        let jobs = s.jobs.unwrap_or(1);
        if jobs == 0 {
            return Err(invalid("--jobs must be positive".into()));
        }
        Ok(Self {
            schema: s.schema.clone(),
            data: s.data.clone(),
            out: s.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            arch,
            train,
            min_freq: s.min_freq.unwrap_or(0),
            labels: s.labels.unwrap_or_default(),
            folds,
            alpha,
            jobs,
        })
    }

    pub fn schema_path(&self) -> Result<&Path> {
        self.schema.as_deref().ok_or_else(|| Error::Usage("--schema is required".into()))
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| Error::Usage("--data is required".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_keys_and_comments() {
        let s = parse_config_file("# comment\nlambda_d = 0.5  # inline\n\nmaps=4,4\n", Path::new("c")).unwrap();
        assert_eq!(s.lambda_d, Some(0.5));
        assert_eq!(s.maps, Some(Maps(vec![4, 4])));
        let e = parse_config_file("epochs=3\nbogus=1\n", Path::new("c")).unwrap_err();
        assert!(e.to_string().contains("c:2"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn maps_and_depth() {
        let mut s = Settings::default();
        assert_eq!(RunConfig::resolve(&s).unwrap().arch.dein.maps, vec![200; 3]);
        s.set("maps", "7").unwrap();
        s.set("depth-dein", "2").unwrap();
        assert_eq!(RunConfig::resolve(&s).unwrap().arch.dein.maps, vec![7, 7]);
        s.set("maps", "4,5").unwrap();
        // shared attention weights need equal maps
        assert!(RunConfig::resolve(&s).is_err());
        s.set("variant", "no_attention").unwrap();
        assert_eq!(RunConfig::resolve(&s).unwrap().arch.dein.maps, vec![4, 5]);
        s.set("depth-dein", "3").unwrap();
        assert!(RunConfig::resolve(&s).is_err());
    }

    #[test]
    fn defaults_follow_the_core_crate() {
        let c = RunConfig::resolve(&Settings::default()).unwrap();
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.arch, Architecture::default());
        assert_eq!(c.folds, 5);
    }
}
