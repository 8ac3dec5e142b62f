//! `key=value` configuration files and the shipped presets.
//!
//! Lines are `key=value`; blank lines and lines starting with `#` are
//! ignored. Unknown and repeated keys are errors so typos fail loudly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::condenser::CondenserConfig;
use crate::error::{Error, Result};
use crate::graph::CombineMode;
use crate::model::{Ablations, ModelKind, VariantSpec};
use crate::numerics::RegMode;
use crate::trainer::TrainConfig;

const AUTOENCODER_CONF: &str = include_str!("../configs/autoencoder.conf");
const PRESETS: [(&str, &str); 3] = [
    ("amazon-musics", include_str!("../configs/amazon-musics.conf")),
    ("amazon-movies", include_str!("../configs/amazon-movies.conf")),
    ("amazon-electronics", include_str!("../configs/amazon-electronics.conf")),
];

/// Names accepted by [`train_preset`].
pub const PRESET_NAMES: [&str; 3] = ["amazon-musics", "amazon-movies", "amazon-electronics"];

pub const TRAIN_KEYS: [&str; 13] = [
    "model",
    "ablations",
    "layers",
    "heads",
    "lr",
    "weight_decay",
    "batch_size",
    "max_epochs",
    "eval_every",
    "patience",
    "seed",
    "reg_mode",
    "combine_mode",
];

pub const CONDENSER_KEYS: [&str; 8] = ["lr", "weight_decay", "batch_size", "epochs", "hidden", "dim", "seed", "reg_mode"];

/// True for finite `x > 0`; false for NaN.
pub(crate) fn is_positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// True for finite `x >= 0`; false for NaN.
pub(crate) fn is_non_negative(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

/// Parses `key=value` lines, rejecting keys outside `allowed`.
pub fn parse_kv(text: &str, allowed: &[&str], origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            msg,
        };
        let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        if !allowed.contains(&k) {
            return Err(err(format!("unknown key {k:?}")));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(err(format!("duplicate key {k:?}")));
        }
    }
    Ok(out)
}

fn take<T: FromStr>(map: &BTreeMap<String, String>, key: &str, slot: &mut T) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = map.get(key) {
        *slot = v
            .parse()
            .map_err(|e| Error::Config(format!("{key}={v:?}: {e}")))?;
    }
    Ok(())
}

/// Training configuration from `text`; absent keys keep their defaults.
pub fn parse_train_config(text: &str, origin: &Path) -> Result<TrainConfig> {
    let map = parse_kv(text, &TRAIN_KEYS, origin)?;
    let mut c = TrainConfig::default();
    let mut model = c.variant.model;
    let mut ablations = c.variant.ablations;
    take::<ModelKind>(&map, "model", &mut model)?;
    take::<Ablations>(&map, "ablations", &mut ablations)?;
    c.variant.model = model;
    c.variant.ablations = ablations;
    take(&map, "layers", &mut c.variant.layers)?;
    take(&map, "heads", &mut c.variant.heads)?;
    take::<CombineMode>(&map, "combine_mode", &mut c.variant.combine_mode)?;
    take(&map, "lr", &mut c.lr)?;
    take(&map, "weight_decay", &mut c.weight_decay)?;
    take(&map, "batch_size", &mut c.batch_size)?;
    take(&map, "max_epochs", &mut c.max_epochs)?;
    take(&map, "eval_every", &mut c.eval_every)?;
    take(&map, "patience", &mut c.patience)?;
    take(&map, "seed", &mut c.seed)?;
    take::<RegMode>(&map, "reg_mode", &mut c.reg_mode)?;
    c.validate()?;
    Ok(c)
}

pub fn parse_condenser_config(text: &str, origin: &Path) -> Result<CondenserConfig> {
    let map = parse_kv(text, &CONDENSER_KEYS, origin)?;
    let mut c = CondenserConfig {
        lr: 1e-3,
        weight_decay: 1e-2,
        batch_size: 128,
        epochs: 50,
        hidden: 384,
        dim: 64,
        seed: 2024,
        reg_mode: RegMode::Decoupled,
    };
    take(&map, "lr", &mut c.lr)?;
    take(&map, "weight_decay", &mut c.weight_decay)?;
    take(&map, "batch_size", &mut c.batch_size)?;
    take(&map, "epochs", &mut c.epochs)?;
    take(&map, "hidden", &mut c.hidden)?;
    take(&map, "dim", &mut c.dim)?;
    take(&map, "seed", &mut c.seed)?;
    take::<RegMode>(&map, "reg_mode", &mut c.reg_mode)?;
    c.validate()?;
    Ok(c)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    parse_train_config(&read(path)?, path)
}

pub fn load_condenser_config(path: &Path) -> Result<CondenserConfig> {
    parse_condenser_config(&read(path)?, path)
}

pub fn format_train_config(c: &TrainConfig) -> String {
    let v: &VariantSpec = &c.variant;
    let mut s = String::new();
    for (k, val) in [
        ("model", v.model.as_str().to_string()),
        ("ablations", v.ablations.to_string()),
        ("layers", v.layers.to_string()),
        ("heads", v.heads.to_string()),
        ("lr", c.lr.to_string()),
        ("weight_decay", c.weight_decay.to_string()),
        ("batch_size", c.batch_size.to_string()),
        ("max_epochs", c.max_epochs.to_string()),
        ("eval_every", c.eval_every.to_string()),
        ("patience", c.patience.to_string()),
        ("seed", c.seed.to_string()),
        ("reg_mode", c.reg_mode.as_str().to_string()),
        ("combine_mode", v.combine_mode.as_str().to_string()),
    ] {
        writeln!(s, "{k}={val}").expect("write to String");
    }
    s
}

pub fn format_condenser_config(c: &CondenserConfig) -> String {
    format!(
        "lr={}\nweight_decay={}\nbatch_size={}\nepochs={}\nhidden={}\ndim={}\nseed={}\nreg_mode={}\n",
        c.lr,
        c.weight_decay,
        c.batch_size,
        c.epochs,
        c.hidden,
        c.dim,
        c.seed,
        c.reg_mode.as_str()
    )
}

/// The shipped autoencoder settings.
pub fn autoencoder_preset() -> CondenserConfig {
    parse_condenser_config(AUTOENCODER_CONF, Path::new("configs/autoencoder.conf"))
        .expect("shipped autoencoder preset parses")
}

/// Training preset for one of [`PRESET_NAMES`].
pub fn train_preset(name: &str) -> Result<TrainConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown preset {name:?}; expected one of {PRESET_NAMES:?}")))?;
    parse_train_config(text, Path::new(name))
}
