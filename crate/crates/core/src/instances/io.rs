//! TOML instance and policy files.
//!
//! Instance schema (flat keys, `[oracle]` table):
//!
//! ```toml
//! prompt_weights = [0.5, 0.5]          # optional, default uniform
//! responses = [["a", "b"], ["c", "d", "e"]]
//! reference = [[0.5, 0.5], [0.2, 0.3, 0.5]]   # optional, default uniform
//! rewards = [[0.0, 1.0], [0.0, 0.5, 1.0]]     # optional
//!
//! [oracle]
//! kind = "bradley_terry"   # bradley_terry | cyclic | indifferent | matrix
//! strength = 1.0           # cyclic only
//! matrices = [[[0.5, 0.3], [0.7, 0.5]]]      # matrix only
//! ```
//!
//! Policy schema: `rows = [[...], ...]`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    make_bt_oracle, uniform_weights, GameInstance, OracleSpec, PairwisePreference, ResponseSpace,
    RewardTable, TabularPolicy,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompt_weights: Option<Vec<f64>>,
    responses: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rewards: Option<Vec<Vec<f64>>>,
    oracle: OracleFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleFile {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrices: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    rows: Vec<Vec<f64>>,
}

fn to_s<S: Scalar>(rows: Vec<Vec<f64>>) -> Vec<Vec<S>> {
    rows.into_iter()
        .map(|r| r.into_iter().map(S::lit).collect())
        .collect()
}

fn to_f64<S: Scalar>(rows: &[Vec<S>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect()
}

/// Parses an instance from TOML text and validates it.
pub fn parse_instance<S: Scalar>(text: &str) -> Result<GameInstance<S>> {
    let file: InstanceFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let space = ResponseSpace::new(file.responses);
    let n = space.num_prompts();
    let weights = match file.prompt_weights {
        Some(w) => w.into_iter().map(S::lit).collect(),
        None => uniform_weights(n),
    };
    let reference = match file.reference {
        Some(rows) => TabularPolicy::from_rows_unchecked(to_s(rows)),
        None => TabularPolicy::uniform(&space),
    };
    let rewards = match file.rewards {
        Some(rows) => Some(RewardTable::new(to_s(rows))?),
        None => None,
    };
    let (preference, oracle) = match file.oracle.kind.as_str() {
        "bradley_terry" => {
            let r = rewards.as_ref().ok_or(Error::MissingRewards(
                "oracle kind `bradley_terry` needs `rewards`",
            ))?;
            (make_bt_oracle(r)?, OracleSpec::BradleyTerry)
        }
        "cyclic" => {
            let strength = S::lit(
                file.oracle
                    .strength
                    .ok_or_else(|| Error::Format("missing key `oracle.strength`".into()))?,
            );
            (
                PairwisePreference::cyclic(&space, strength)?,
                OracleSpec::Cyclic { strength },
            )
        }
        "indifferent" => (
            PairwisePreference::indifferent(&space),
            OracleSpec::Indifferent,
        ),
        "matrix" => {
            let m = file
                .oracle
                .matrices
                .ok_or_else(|| Error::Format("missing key `oracle.matrices`".into()))?;
            (
                PairwisePreference::from_matrices_unchecked(m.into_iter().map(to_s).collect())?,
                OracleSpec::Matrix,
            )
        }
        other => return Err(Error::Format(format!("unknown oracle kind `{other}`"))),
    };
    GameInstance::new(weights, space, reference, preference, rewards, oracle)
}

/// Serializes an instance. Derived oracles are written by kind; explicit ones as matrices.
pub fn store_instance<S: Scalar>(inst: &GameInstance<S>) -> Result<String> {
    let oracle = match inst.oracle() {
        OracleSpec::BradleyTerry => OracleFile {
            kind: "bradley_terry".into(),
            strength: None,
            matrices: None,
        },
        OracleSpec::Cyclic { strength } => OracleFile {
            kind: "cyclic".into(),
            strength: Some(strength.as_f64()),
            matrices: None,
        },
        OracleSpec::Indifferent => OracleFile {
            kind: "indifferent".into(),
            strength: None,
            matrices: None,
        },
        OracleSpec::Matrix => OracleFile {
            kind: "matrix".into(),
            strength: None,
            matrices: Some(
                inst.preference()
                    .matrices()
                    .iter()
                    .map(|m| to_f64(&m.to_rows()))
                    .collect(),
            ),
        },
    };
    let file = InstanceFile {
        prompt_weights: Some(inst.prompt_weights().iter().map(|w| w.as_f64()).collect()),
        responses: inst.space().all_labels().to_vec(),
        reference: Some(to_f64(inst.reference().rows())),
        rewards: inst.reward().map(|r| to_f64(r.rows())),
        oracle,
    };
    toml::to_string(&file).map_err(|e| Error::Format(e.to_string()))
}

pub fn load_instance<S: Scalar>(path: impl AsRef<Path>) -> Result<GameInstance<S>> {
    parse_instance(&fs::read_to_string(path)?)
}

pub fn parse_policy<S: Scalar>(text: &str) -> Result<TabularPolicy<S>> {
    let file: PolicyFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    TabularPolicy::new(to_s(file.rows))
}

pub fn store_policy<S: Scalar>(policy: &TabularPolicy<S>) -> Result<String> {
    toml::to_string(&PolicyFile {
        rows: to_f64(policy.rows()),
    })
    .map_err(|e| Error::Format(e.to_string()))
}

pub fn load_policy<S: Scalar>(path: impl AsRef<Path>) -> Result<TabularPolicy<S>> {
    parse_policy(&fs::read_to_string(path)?)
}
