//! The deep-learning pipeline search space and its numeric encoding.
//!
//! A pipeline is a pre-trained architecture plus its fine-tuning and
//! execution hyperparameters. [`default_space`] lists the 26 hyperparameters;
//! [`SearchSpace::encode`] maps a configuration onto a fixed-length vector with
//! one one-hot block per categorical and one `[0,1]` slot per numeric.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Integer { lo: i64, hi: i64, scale: Scale },
    Real { lo: f64, hi: f64, scale: Scale },
    Categorical { choices: Vec<String> },
}

/// Activation rule: the parameter is present iff `parent` takes one of `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub parent: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterSpec {
    pub name: String,
    pub kind: ParamKind,
    pub condition: Option<Condition>,
}

impl HyperparameterSpec {
    fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Validation(format!("{}: {msg}", self.name)));
        match &self.kind {
            ParamKind::Integer { lo, hi, scale } => {
                if lo >= hi {
                    return bad("lo must be < hi");
                }
                if *scale == Scale::Log && *lo <= 0 {
                    return bad("log scale requires lo > 0");
                }
            }
            ParamKind::Real { lo, hi, scale } => {
                if !(lo < hi) {
                    return bad("lo must be < hi");
                }
                if *scale == Scale::Log && *lo <= 0.0 {
                    return bad("log scale requires lo > 0");
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    return bad("empty category list");
                }
                for (i, c) in choices.iter().enumerate() {
                    if choices[..i].contains(c) {
                        return bad("duplicate category");
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of vector slots this parameter occupies.
    pub fn width(&self) -> usize {
        match &self.kind {
            ParamKind::Categorical { choices } => choices.len(),
            _ => 1,
        }
    }
}

/// A hyperparameter value; categories are strings, numerics are numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Cat(v) => write!(f, "{v}"),
        }
    }
}

pub type PipelineConfig = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownName(String),
    MissingActive(String),
    InactivePresent(String),
    WrongType { name: String, value: ParamValue },
    OutOfRange { name: String, value: ParamValue, range: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownName(n) => write!(f, "{n}: unknown hyperparameter"),
            Violation::MissingActive(n) => write!(f, "{n}: active hyperparameter missing"),
            Violation::InactivePresent(n) => write!(f, "{n}: inactive conditional present"),
            Violation::WrongType { name, value } => write!(f, "{name}: wrong value type '{value}'"),
            Violation::OutOfRange { name, value, range } => {
                write!(f, "{name}: value {value} out of range {range}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    params: Vec<HyperparameterSpec>,
}

fn cats(values: &[&str]) -> ParamKind {
    ParamKind::Categorical {
        choices: values.iter().map(|s| s.to_string()).collect(),
    }
}

fn int(lo: i64, hi: i64, scale: Scale) -> ParamKind {
    ParamKind::Integer { lo, hi, scale }
}

fn real(lo: f64, hi: f64, scale: Scale) -> ParamKind {
    ParamKind::Real { lo, hi, scale }
}

/// The 26-hyperparameter pipeline space.
///
/// Conditions: `momentum` and `nesterov` are active iff `optimizer = SGD`,
/// `amsgrad` iff `optimizer ∈ {Adam, AdamW}`, `simple_model` iff
/// `first_simple_model = true`.
pub fn default_space() -> SearchSpace {
    use Scale::{Linear, Log};
    let when = |parent: &str, values: &[&str]| {
        Some(Condition {
            parent: parent.into(),
            values: values.iter().map(|s| s.to_string()).collect(),
        })
    };
    let p = |name: &str, kind: ParamKind, condition: Option<Condition>| HyperparameterSpec {
        name: name.into(),
        kind,
        condition,
    };
    let params = vec![
        p("batch_size", int(16, 64, Log), None),
        p("learning_rate", real(1e-5, 1e-1, Log), None),
        p("min_learning_rate", real(1e-8, 1e-5, Log), None),
        p("weight_decay", real(1e-5, 1e-2, Log), None),
        p("momentum", real(0.01, 0.99, Linear), when("optimizer", &["SGD"])),
        p("optimizer", cats(&["SGD", "Adam", "AdamW"]), None),
        p("nesterov", cats(&["true", "false"]), when("optimizer", &["SGD"])),
        p("amsgrad", cats(&["true", "false"]), when("optimizer", &["Adam", "AdamW"])),
        p("scheduler", cats(&["plateau", "cosine"]), None),
        p("freeze_portion", cats(&["0.0", "0.1", "0.2", "0.3", "0.4", "0.5"]), None),
        p("warmup_multiplier", cats(&["1.0", "1.5", "2.0", "2.5", "3.0"]), None),
        p("warmup_epoch", int(3, 6, Linear), None),
        p("architecture", cats(&["ResNet18", "EffNet-b0", "EffNet-b1", "EffNet-b2"]), None),
        p("steps_per_epoch", int(5, 250, Log), None),
        p("early_epoch", int(1, 3, Linear), None),
        p("cv_ratio", real(0.05, 0.2, Linear), None),
        p("max_valid_count", int(128, 512, Log), None),
        p("skip_valid_threshold", real(0.7, 0.95, Linear), None),
        p("test_freq", int(1, 3, Linear), None),
        p("test_freq_max", int(60, 120, Linear), None),
        p("test_freq_step", int(2, 10, Linear), None),
        p("max_inner_loop", real(0.1, 0.3, Linear), None),
        p("n_init_samples", int(128, 512, Log), None),
        p("max_input_size", int(5, 7, Linear), None),
        p("first_simple_model", cats(&["true", "false"]), None),
        p("simple_model", cats(&["SVC", "NuSVC", "RF", "LR"]), when("first_simple_model", &["true"])),
    ];
    SearchSpace::new(params).expect("default space is well-formed")
}

fn unit(v: f64, lo: f64, hi: f64, scale: Scale) -> f64 {
    match scale {
        Scale::Linear => (v - lo) / (hi - lo),
        Scale::Log => (v.ln() - lo.ln()) / (hi.ln() - lo.ln()),
    }
}

fn from_unit(u: f64, lo: f64, hi: f64, scale: Scale) -> f64 {
    match scale {
        Scale::Linear => lo + u * (hi - lo),
        Scale::Log => (lo.ln() + u * (hi.ln() - lo.ln())).exp(),
    }
}

impl SearchSpace {
    pub fn new(params: Vec<HyperparameterSpec>) -> Result<Self> {
        for (i, p) in params.iter().enumerate() {
            p.check()?;
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::Validation(format!("duplicate hyperparameter '{}'", p.name)));
            }
        }
        for p in &params {
            if let Some(c) = &p.condition {
                let parent = params.iter().find(|q| q.name == c.parent).ok_or_else(|| {
                    Error::Validation(format!("{}: unknown parent '{}'", p.name, c.parent))
                })?;
                if parent.condition.is_some() || !matches!(parent.kind, ParamKind::Categorical { .. }) {
                    return Err(Error::Validation(format!(
                        "{}: parent '{}' must be an unconditional categorical",
                        p.name, c.parent
                    )));
                }
            }
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[HyperparameterSpec] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&HyperparameterSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Encoded vector length: category counts plus one slot per numeric.
    pub fn vector_len(&self) -> usize {
        self.params.iter().map(HyperparameterSpec::width).sum()
    }

    fn is_active(&self, p: &HyperparameterSpec, c: &PipelineConfig) -> bool {
        match &p.condition {
            None => true,
            Some(cond) => matches!(c.get(&cond.parent), Some(ParamValue::Cat(v)) if cond.values.contains(v)),
        }
    }

    pub fn validate(&self, c: &PipelineConfig) -> std::result::Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        for name in c.keys() {
            if self.get(name).is_none() {
                out.push(Violation::UnknownName(name.clone()));
            }
        }
        for p in &self.params {
            let active = self.is_active(p, c);
            let value = c.get(&p.name);
            let value = match (active, value) {
                (true, None) => {
                    out.push(Violation::MissingActive(p.name.clone()));
                    continue;
                }
                (false, Some(_)) => {
                    out.push(Violation::InactivePresent(p.name.clone()));
                    continue;
                }
                (false, None) => continue,
                (true, Some(v)) => v,
            };
            let range_err = |range: String| Violation::OutOfRange {
                name: p.name.clone(),
                value: value.clone(),
                range,
            };
            match (&p.kind, value) {
                (ParamKind::Integer { lo, hi, .. }, ParamValue::Int(v)) => {
                    if v < lo || v > hi {
                        out.push(range_err(format!("[{lo},{hi}]")));
                    }
                }
                (ParamKind::Real { lo, hi, .. }, ParamValue::Real(_) | ParamValue::Int(_)) => {
                    let v = match value {
                        ParamValue::Real(v) => *v,
                        ParamValue::Int(v) => *v as f64,
                        ParamValue::Cat(_) => unreachable!(),
                    };
                    if !(v >= *lo && v <= *hi) {
                        out.push(range_err(format!("[{lo},{hi}]")));
                    }
                }
                (ParamKind::Categorical { choices }, ParamValue::Cat(v)) => {
                    if !choices.contains(v) {
                        out.push(range_err(format!("{{{}}}", choices.join(", "))));
                    }
                }
                _ => out.push(Violation::WrongType {
                    name: p.name.clone(),
                    value: value.clone(),
                }),
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// Encodes a valid configuration. Inactive conditionals become zeros.
    pub fn encode(&self, c: &PipelineConfig) -> Result<Vec<f64>> {
        if let Err(violations) = self.validate(c) {
            let msg: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::Validation(msg.join("; ")));
        }
        let mut out = Vec::with_capacity(self.vector_len());
        for p in &self.params {
            let value = c.get(&p.name);
            match (&p.kind, value) {
                (ParamKind::Categorical { choices }, Some(ParamValue::Cat(v))) => {
                    out.extend(choices.iter().map(|ch| if ch == v { 1.0 } else { 0.0 }));
                }
                (ParamKind::Categorical { choices }, _) => out.extend(std::iter::repeat_n(0.0, choices.len())),
                (ParamKind::Integer { lo, hi, scale }, Some(ParamValue::Int(v))) => {
                    out.push(unit(*v as f64, *lo as f64, *hi as f64, *scale));
                }
                (ParamKind::Real { lo, hi, scale }, Some(ParamValue::Real(v))) => {
                    out.push(unit(*v, *lo, *hi, *scale));
                }
                (ParamKind::Real { lo, hi, scale }, Some(ParamValue::Int(v))) => {
                    out.push(unit(*v as f64, *lo, *hi, *scale));
                }
                _ => out.push(0.0),
            }
        }
        Ok(out)
    }

    /// Inverts [`encode`](Self::encode) on vectors it produced.
    pub fn decode(&self, vector: &[f64]) -> Result<PipelineConfig> {
        if vector.len() != self.vector_len() {
            return Err(Error::DimensionMismatch {
                expected: self.vector_len(),
                found: vector.len(),
            });
        }
        let mut config = PipelineConfig::new();
        let mut offset = 0;
        // categoricals first so conditions can be resolved
        let mut slots = Vec::with_capacity(self.params.len());
        for p in &self.params {
            slots.push(offset);
            offset += p.width();
        }
        for (p, &off) in self.params.iter().zip(&slots) {
            if let ParamKind::Categorical { choices } = &p.kind {
                let block = &vector[off..off + choices.len()];
                if let Some(i) = block.iter().position(|&x| x == 1.0) {
                    config.insert(p.name.clone(), ParamValue::Cat(choices[i].clone()));
                }
            }
        }
        for (p, &off) in self.params.iter().zip(&slots) {
            if !self.is_active(p, &config) {
                config.remove(&p.name);
                continue;
            }
            let u = vector[off];
            match &p.kind {
                ParamKind::Integer { lo, hi, scale } => {
                    let v = from_unit(u, *lo as f64, *hi as f64, *scale).round() as i64;
                    config.insert(p.name.clone(), ParamValue::Int(v));
                }
                ParamKind::Real { lo, hi, scale } => {
                    config.insert(p.name.clone(), ParamValue::Real(from_unit(u, *lo, *hi, *scale)));
                }
                ParamKind::Categorical { .. } => {}
            }
        }
        Ok(config)
    }

    /// Draws a configuration uniformly in the encoded space: log-uniform for
    /// log-scale numerics (integers rounded), uniform categories.
    pub fn sample(&self, seed: u64) -> PipelineConfig {
        let mut rng = rng_from_seed(seed);
        let mut config = PipelineConfig::new();
        // unconditional parameters first; parents are always unconditional
        let order = self
            .params
            .iter()
            .filter(|p| p.condition.is_none())
            .chain(self.params.iter().filter(|p| p.condition.is_some()));
        for p in order {
            if !self.is_active(p, &config) {
                continue;
            }
            let value = match &p.kind {
                ParamKind::Integer { lo, hi, scale: Scale::Linear } => ParamValue::Int(rng.random_range(*lo..=*hi)),
                ParamKind::Integer { lo, hi, scale: Scale::Log } => {
                    let u: f64 = rng.random();
                    let v = from_unit(u, *lo as f64, *hi as f64, Scale::Log).round() as i64;
                    ParamValue::Int(v.clamp(*lo, *hi))
                }
                ParamKind::Real { lo, hi, scale } => {
                    let u: f64 = rng.random();
                    ParamValue::Real(from_unit(u, *lo, *hi, *scale).clamp(*lo, *hi))
                }
                ParamKind::Categorical { choices } => {
                    ParamValue::Cat(choices[rng.random_range(0..choices.len())].clone())
                }
            };
            config.insert(p.name.clone(), value);
        }
        config
    }
}

/// A named pipeline as stored in the pipelines JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEntry {
    pub id: String,
    pub config: PipelineConfig,
}

pub fn read_pipelines<R: Read>(reader: R) -> Result<Vec<PipelineEntry>> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn load_pipelines(path: impl AsRef<Path>) -> Result<Vec<PipelineEntry>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pipelines(std::io::BufReader::new(file))
}

pub fn write_pipelines<W: Write>(pipelines: &[PipelineEntry], writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, pipelines)?;
    Ok(())
}

pub fn save_pipelines(pipelines: &[PipelineEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_pipelines(pipelines, &mut w)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn full_config() -> PipelineConfig {
        default_space().sample(1)
    }

    fn sgd_config() -> PipelineConfig {
        let space = default_space();
        (0..).map(|s| space.sample(s)).find(|c| c["optimizer"] == ParamValue::Cat("SGD".into())).unwrap()
    }

    #[test]
    fn space_has_26_parameters() {
        let space = default_space();
        assert_eq!(space.len(), 26);
        assert_eq!(space.vector_len(), 47);
    }

    #[test]
    fn table_entries() {
        let space = default_space();
        assert_eq!(
            space.get("learning_rate").unwrap().kind,
            ParamKind::Real { lo: 1e-5, hi: 1e-1, scale: Scale::Log }
        );
        assert_eq!(space.get("batch_size").unwrap().kind, ParamKind::Integer { lo: 16, hi: 64, scale: Scale::Log });
        assert_eq!(space.get("scheduler").unwrap().kind, cats(&["plateau", "cosine"]));
        assert_eq!(
            space.get("architecture").unwrap().kind,
            cats(&["ResNet18", "EffNet-b0", "EffNet-b1", "EffNet-b2"])
        );
        assert_eq!(space.get("simple_model").unwrap().kind, cats(&["SVC", "NuSVC", "RF", "LR"]));
    }

    #[test]
    fn sampled_config_is_valid() {
        assert_eq!(default_space().validate(&full_config()), Ok(()));
    }

    #[test]
    fn batch_size_out_of_range() {
        let mut c = full_config();
        c.insert("batch_size".into(), ParamValue::Int(128));
        let v = default_space().validate(&c).unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("out of range [16,64]"), "{}", v[0]);
    }

    #[test]
    fn nesterov_with_adam_is_inactive_present() {
        let mut c = sgd_config();
        c.insert("optimizer".into(), ParamValue::Cat("Adam".into()));
        c.remove("momentum");
        c.insert("amsgrad".into(), ParamValue::Cat("false".into()));
        let v = default_space().validate(&c).unwrap_err();
        assert_eq!(v, vec![Violation::InactivePresent("nesterov".into())]);
        assert!(v[0].to_string().contains("inactive conditional present"));
    }

    #[test]
    fn unknown_and_missing_are_reported() {
        let mut c = full_config();
        c.insert("dropout".into(), ParamValue::Real(0.1));
        c.remove("scheduler");
        let v = default_space().validate(&c).unwrap_err();
        assert!(v.contains(&Violation::UnknownName("dropout".into())));
        assert!(v.contains(&Violation::MissingActive("scheduler".into())));
    }

    fn offset_of(space: &SearchSpace, name: &str) -> usize {
        space.params().iter().take_while(|p| p.name != name).map(HyperparameterSpec::width).sum()
    }

    #[test]
    fn encodes_one_hot_and_log_slots() {
        let space = default_space();
        let mut c = sgd_config();
        c.insert("learning_rate".into(), ParamValue::Real(1e-5));
        let v = space.encode(&c).unwrap();
        let opt = offset_of(&space, "optimizer");
        assert_eq!(&v[opt..opt + 3], &[1.0, 0.0, 0.0]);
        assert_eq!(v[offset_of(&space, "learning_rate")], 0.0);

        c.insert("learning_rate".into(), ParamValue::Real(1e-3));
        let v = space.encode(&c).unwrap();
        assert_relative_eq!(v[offset_of(&space, "learning_rate")], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn inactive_conditionals_encode_as_zeros() {
        let space = default_space();
        let c = (0..)
            .map(|s| space.sample(s))
            .find(|c| c["optimizer"] != ParamValue::Cat("SGD".into()))
            .unwrap();
        let v = space.encode(&c).unwrap();
        let nes = offset_of(&space, "nesterov");
        assert_eq!(&v[nes..nes + 2], &[0.0, 0.0]);
        assert_eq!(v[offset_of(&space, "momentum")], 0.0);
    }

    #[test]
    fn encode_rejects_invalid() {
        let mut c = full_config();
        c.insert("batch_size".into(), ParamValue::Int(1000));
        assert!(default_space().encode(&c).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let space = default_space();
        assert_eq!(space.sample(42), space.sample(42));
        assert_ne!(space.sample(42), space.sample(43));
    }

    #[test]
    fn learning_rate_median_is_log_midpoint() {
        let space = default_space();
        let mut lrs: Vec<f64> = (0..10_000u64)
            .map(|s| match space.sample(s)["learning_rate"] {
                ParamValue::Real(v) => v,
                ref other => panic!("{other:?}"),
            })
            .collect();
        lrs.sort_by(f64::total_cmp);
        let median = 0.5 * (lrs[4999] + lrs[5000]);
        assert!((0.5e-3..=2e-3).contains(&median), "median {median}");
    }

    #[test]
    fn malformed_spaces_are_rejected() {
        let bad_log = HyperparameterSpec {
            name: "x".into(),
            kind: ParamKind::Real { lo: 0.0, hi: 1.0, scale: Scale::Log },
            condition: None,
        };
        assert!(SearchSpace::new(vec![bad_log]).is_err());
        let dup = HyperparameterSpec { name: "c".into(), kind: cats(&["a", "a"]), condition: None };
        assert!(SearchSpace::new(vec![dup]).is_err());
    }

    #[test]
    fn pipelines_json_shape() {
        let entries = vec![PipelineEntry { id: "p0".into(), config: full_config() }];
        let mut buf = Vec::new();
        write_pipelines(&entries, &mut buf).unwrap();
        let json: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(json[0]["id"], "p0");
        assert!(json[0]["config"]["architecture"].is_string());
        assert!(json[0]["config"]["learning_rate"].is_number());
        assert_eq!(read_pipelines(buf.as_slice()).unwrap(), entries);
    }

    proptest! {
        #[test]
        fn encoded_samples_are_well_formed(seed in any::<u64>()) {
            let space = default_space();
            let c = space.sample(seed);
            prop_assert_eq!(space.validate(&c), Ok(()));
            let v = space.encode(&c).unwrap();
            prop_assert_eq!(v.len(), space.vector_len());
            let mut off = 0;
            for p in space.params() {
                let block = &v[off..off + p.width()];
                prop_assert!(block.iter().all(|x| (0.0..=1.0).contains(x)));
                if matches!(p.kind, ParamKind::Categorical { .. }) {
                    let expected = if c.contains_key(&p.name) { 1.0 } else { 0.0 };
                    prop_assert_eq!(block.iter().sum::<f64>(), expected);
                }
                off += p.width();
            }
        }

        #[test]
        fn decode_inverts_encode(seed in any::<u64>()) {
            let space = default_space();
            let c = space.sample(seed);
            let back = space.decode(&space.encode(&c).unwrap()).unwrap();
            prop_assert_eq!(back.len(), c.len());
            for (name, v) in &c {
                match (v, &back[name]) {
                    (ParamValue::Real(a), ParamValue::Real(b)) => {
                        prop_assert!((a - b).abs() <= 1e-9 * a.abs());
                    }
                    (a, b) => prop_assert_eq!(a, b),
                }
            }
        }
    }
}
