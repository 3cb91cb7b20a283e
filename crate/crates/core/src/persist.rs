//! Versioned JSON model files.
//!
//! ```text
//! {format_version, model_type, score_values[], k, gamma, eta, m, seed,
//!  user_ids[], item_ids[], P[], Q[]}
//! ```
//!
//! Factor tensors are flattened row-major (entity, then score, then factor
//! for the restricted Bernoulli model; entity, then factor for PMF). Every
//! float is written with 17 significant digits so a load reproduces the
//! saved bits.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::baselines::PmfModel;
use crate::error::{Error, Result};
use crate::model::{FactorModel, Hyperparams};
use crate::scores::ScoreSet;

pub const FORMAT_VERSION: u32 = 1;
pub const RESBEMF: &str = "resbemf";
pub const PMF: &str = "pmf";

fn exact(x: f64) -> Box<RawValue> {
    // finite by model invariant
    RawValue::from_string(format!("{x:.16e}")).expect("formatted float is valid JSON")
}

fn ser_f64<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    exact(*x).serialize(s)
}

fn ser_vec<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|&x| exact(x)))
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format_version: u32,
    model_type: &'a str,
    #[serde(serialize_with = "ser_vec")]
    score_values: &'a [f64],
    k: usize,
    #[serde(serialize_with = "ser_f64")]
    gamma: f64,
    #[serde(serialize_with = "ser_f64")]
    eta: f64,
    m: usize,
    seed: u64,
    user_ids: &'a [String],
    item_ids: &'a [String],
    #[serde(rename = "P", serialize_with = "ser_vec")]
    p: &'a [f64],
    #[serde(rename = "Q", serialize_with = "ser_vec")]
    q: &'a [f64],
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
    #[serde(default)]
    model_type: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeIn {
    #[allow(dead_code)]
    format_version: u32,
    #[allow(dead_code)]
    #[serde(default)]
    model_type: Option<String>,
    score_values: Vec<f64>,
    k: usize,
    gamma: f64,
    eta: f64,
    m: usize,
    seed: u64,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    #[serde(rename = "P")]
    p: Vec<f64>,
    #[serde(rename = "Q")]
    q: Vec<f64>,
}

impl EnvelopeIn {
    fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            k: self.k,
            gamma: self.gamma,
            eta: self.eta,
            m: self.m,
            seed: self.seed,
        }
    }
}

fn write_envelope<W: Write>(
    out: W,
    model_type: &str,
    scores: &ScoreSet,
    hp: &Hyperparams,
    user_ids: &[String],
    item_ids: &[String],
    p: &[f64],
    q: &[f64],
) -> Result<()> {
    let env = EnvelopeOut {
        format_version: FORMAT_VERSION,
        model_type,
        score_values: scores.values(),
        k: hp.k,
        gamma: hp.gamma,
        eta: hp.eta,
        m: hp.m,
        seed: hp.seed,
        user_ids,
        item_ids,
        p,
        q,
    };
    let mut out = out;
    serde_json::to_writer(&mut out, &env)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn read_envelope(text: &str, expected: &str) -> Result<EnvelopeIn> {
    let header: Header = serde_json::from_str(text)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedFormatVersion(header.format_version));
    }
    let found = header.model_type.unwrap_or_else(|| RESBEMF.to_string());
    if found != expected {
        return Err(Error::ModelType {
            expected: expected.to_string(),
            found,
        });
    }
    Ok(serde_json::from_str(text)?)
}

/// The `model_type` field of a model file, defaulting to `resbemf`.
pub fn peek_model_type(text: &str) -> Result<String> {
    let header: Header = serde_json::from_str(text)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedFormatVersion(header.format_version));
    }
    Ok(header.model_type.unwrap_or_else(|| RESBEMF.to_string()))
}

pub fn save_model<W: Write>(model: &FactorModel, out: W) -> Result<()> {
    write_envelope(
        out,
        RESBEMF,
        model.score_set(),
        model.hyperparams(),
        model.user_ids(),
        model.item_ids(),
        model.p(),
        model.q(),
    )
}

pub fn load_model<R: Read>(mut input: R) -> Result<FactorModel> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    model_from_str(&text)
}

pub fn model_from_str(text: &str) -> Result<FactorModel> {
    let env = read_envelope(text, RESBEMF)?;
    let scores = ScoreSet::new(env.score_values.clone())?;
    let hp = env.hyperparams();
    FactorModel::from_parts(scores, hp, env.user_ids, env.item_ids, env.p, env.q)
}

pub fn save_pmf<W: Write>(model: &PmfModel, out: W) -> Result<()> {
    write_envelope(
        out,
        PMF,
        model.score_set(),
        model.hyperparams(),
        model.user_ids(),
        model.item_ids(),
        model.p(),
        model.q(),
    )
}

pub fn pmf_from_str(text: &str) -> Result<PmfModel> {
    let env = read_envelope(text, PMF)?;
    let scores = ScoreSet::new(env.score_values.clone())?;
    let hp = env.hyperparams();
    PmfModel::from_parts(scores, hp, env.user_ids, env.item_ids, env.p, env.q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(p: Vec<f64>, q: Vec<f64>) -> FactorModel {
        FactorModel::from_parts(
            ScoreSet::new(vec![0.5, 1.0, 1.5]).unwrap(),
            Hyperparams {
                k: 2,
                gamma: 0.1,
                eta: 0.003,
                m: 25,
                seed: 9,
            },
            vec!["a".into(), "b".into()],
            vec!["x".into()],
            p,
            q,
        )
        .unwrap()
    }

    fn to_string(m: &FactorModel) -> String {
        let mut buf = Vec::new();
        save_model(m, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            p in prop::collection::vec(-1.0e6f64..1.0e6, 12),
            q in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 6),
        ) {
            let m = model(p, q);
            let back = model_from_str(&to_string(&m)).unwrap();
            prop_assert_eq!(back.p().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            m.p().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.q().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            m.q().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn floats_carry_seventeen_digits() {
        let text = to_string(&model(vec![0.1; 12], vec![1.0 / 3.0; 6]));
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
        assert!(text.contains("\"format_version\":1"));
        assert!(text.contains("\"model_type\":\"resbemf\""));
    }

    #[test]
    fn unknown_version_rejected() {
        let text = to_string(&model(vec![0.0; 12], vec![0.0; 6])).replace("\"format_version\":1", "\"format_version\":7");
        assert!(matches!(model_from_str(&text), Err(Error::UnsupportedFormatVersion(7))));
    }

    #[test]
    fn wrong_model_type_rejected() {
        let text = to_string(&model(vec![0.0; 12], vec![0.0; 6]));
        assert!(matches!(pmf_from_str(&text), Err(Error::ModelType { .. })));
    }

    #[test]
    fn truncated_tensor_rejected() {
        let text = to_string(&model(vec![0.0; 12], vec![0.0; 6]));
        let broken = text.replacen("[0.0000000000000000e0,", "[", 1);
        assert!(model_from_str(&broken).is_err());
    }
}
