//! Tabular game instances: prompts, response spaces, policies and preference oracles.
//!
//! Prompts and responses are dense indices. Every probability table is stored per prompt
//! as a plain vector; constructors named `*_unchecked` skip validation so malformed data can
//! be fed to [`validate_instance`] for diagnostics.

mod io;

use std::collections::HashSet;
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{logistic, Scalar};

pub use io::{
    load_instance, load_policy, parse_instance, parse_policy, store_instance, store_policy,
};

/// Per-prompt response labels. Math only ever uses the indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseSpace {
    labels: Vec<Vec<String>>,
}

impl ResponseSpace {
    pub fn new(labels: Vec<Vec<String>>) -> Self {
        ResponseSpace { labels }
    }

    /// Labels every response `y{i}`.
    pub fn with_counts(counts: &[usize]) -> Self {
        ResponseSpace {
            labels: counts
                .iter()
                .map(|&k| (0..k).map(|i| format!("y{i}")).collect())
                .collect(),
        }
    }

    pub fn num_prompts(&self) -> usize {
        self.labels.len()
    }

    pub fn count(&self, prompt: usize) -> usize {
        self.labels[prompt].len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.labels.iter().map(Vec::len).collect()
    }

    pub fn labels(&self, prompt: usize) -> &[String] {
        &self.labels[prompt]
    }

    pub fn all_labels(&self) -> &[Vec<String>] {
        &self.labels
    }

    fn check(&self, out: &mut Vec<Violation>) {
        if self.labels.is_empty() {
            out.push(Violation::new(ViolationKind::Dimension, "no prompts"));
        }
        for (x, row) in self.labels.iter().enumerate() {
            if row.len() < 2 {
                out.push(Violation::new(
                    ViolationKind::TooFewResponses,
                    format!("prompt {x} has {} responses", row.len()),
                ));
            }
            let mut seen = HashSet::new();
            for label in row {
                if !seen.insert(label.as_str()) {
                    out.push(Violation::new(
                        ViolationKind::DuplicateLabel,
                        format!("prompt {x} repeats label `{label}`"),
                    ));
                }
            }
        }
    }
}

/// Per-prompt probability vectors over responses.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy<S> {
    rows: Vec<Vec<S>>,
}

impl<S: Scalar> TabularPolicy<S> {
    /// Builds a policy, checking non-negativity, finiteness and normalization.
    pub fn new(rows: Vec<Vec<S>>) -> Result<Self> {
        let policy = TabularPolicy { rows };
        let mut v = Vec::new();
        policy.check_rows("policy", &mut v);
        match v.first() {
            None => Ok(policy),
            Some(first) => Err(Error::InvalidInstance(first.to_string())),
        }
    }

    pub fn from_rows_unchecked(rows: Vec<Vec<S>>) -> Self {
        TabularPolicy { rows }
    }

    pub fn uniform(space: &ResponseSpace) -> Self {
        TabularPolicy {
            rows: space
                .counts()
                .into_iter()
                .map(|k| vec![S::one() / S::lit(k as f64); k])
                .collect(),
        }
    }

    /// Uniform over the support of `reference`.
    pub fn uniform_on_support(reference: &TabularPolicy<S>) -> Self {
        TabularPolicy {
            rows: reference
                .rows
                .iter()
                .map(|row| {
                    let m = row.iter().filter(|p| **p > S::zero()).count();
                    row.iter()
                        .map(|&p| {
                            if p > S::zero() {
                                S::one() / S::lit(m as f64)
                            } else {
                                S::zero()
                            }
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Point mass on `choices[x]` for every prompt `x`.
    pub fn point_masses(space: &ResponseSpace, choices: &[usize]) -> Result<Self> {
        if choices.len() != space.num_prompts() {
            return Err(Error::DimensionMismatch(format!(
                "{} choices for {} prompts",
                choices.len(),
                space.num_prompts()
            )));
        }
        let mut rows = Vec::with_capacity(choices.len());
        for (x, &c) in choices.iter().enumerate() {
            let k = space.count(x);
            if c >= k {
                return Err(Error::IndexOutOfRange {
                    prompt: x,
                    response: c,
                });
            }
            let mut row = vec![S::zero(); k];
            row[c] = S::one();
            rows.push(row);
        }
        Ok(TabularPolicy { rows })
    }

    pub fn num_prompts(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<S>> {
        self.rows
    }

    pub fn row(&self, prompt: usize) -> &[S] {
        &self.rows[prompt]
    }

    #[inline]
    pub fn prob(&self, prompt: usize, response: usize) -> S {
        self.rows[prompt][response]
    }

    /// Indices with strictly positive probability.
    pub fn support(&self, prompt: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[prompt]
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > S::zero())
            .map(|(i, _)| i)
    }

    /// Largest absolute entry-wise difference across all prompts.
    pub fn linf_distance(&self, other: &TabularPolicy<S>) -> S {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (*p - *q).abs()))
            .fold(S::zero(), S::max)
    }

    /// Largest per-prompt total-variation distance.
    pub fn max_total_variation(&self, other: &TabularPolicy<S>) -> S {
        self.rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (*p - *q).abs()).sum::<S>() * S::half())
            .fold(S::zero(), S::max)
    }

    pub fn same_shape(&self, counts: &[usize]) -> bool {
        self.rows.len() == counts.len() && self.rows.iter().zip(counts).all(|(r, k)| r.len() == *k)
    }

    fn check_rows(&self, what: &str, out: &mut Vec<Violation>) {
        let tol = S::normalization_tol();
        for (x, row) in self.rows.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < S::zero()) {
                out.push(Violation::new(
                    ViolationKind::PolicyEntries,
                    format!("{what} row {x} has a negative or non-finite entry"),
                ));
                continue;
            }
            let sum: S = row.iter().copied().sum();
            if (sum - S::one()).abs() > tol {
                out.push(Violation::new(
                    ViolationKind::PolicyNormalization,
                    format!("{what} row {x} sums to {sum}"),
                ));
            }
        }
    }
}

/// A single prompt's `K x K` oracle matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix<S> {
    k: usize,
    data: Vec<S>,
}

impl<S: Scalar> PreferenceMatrix<S> {
    pub fn from_rows_unchecked(rows: Vec<Vec<S>>) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch(
                "preference matrix is not square".into(),
            ));
        }
        Ok(PreferenceMatrix {
            k,
            data: rows.into_iter().flatten().collect(),
        })
    }

    fn from_fn(k: usize, f: impl Fn(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                data.push(if i == j { S::half() } else { f(i, j) });
            }
        }
        PreferenceMatrix { k, data }
    }

    pub fn size(&self) -> usize {
        self.k
    }

    /// `P(y ≻ y')`.
    #[inline]
    pub fn get(&self, y: usize, y2: usize) -> S {
        self.data[y * self.k + y2]
    }

    pub fn row(&self, y: usize) -> &[S] {
        &self.data[y * self.k..(y + 1) * self.k]
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        self.data.chunks(self.k).map(<[S]>::to_vec).collect()
    }
}

/// Preference oracle `P(y ≻ y' | x)` as one matrix per prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwisePreference<S> {
    matrices: Vec<PreferenceMatrix<S>>,
}

impl<S: Scalar> PairwisePreference<S> {
    /// Builds an oracle from explicit matrices, enforcing range, diagonal and skew-symmetry.
    pub fn new(matrices: Vec<Vec<Vec<S>>>) -> Result<Self> {
        let pref = Self::from_matrices_unchecked(matrices)?;
        let mut v = Vec::new();
        pref.check(&mut v);
        match v.first() {
            None => Ok(pref),
            Some(first) => Err(Error::InvalidInstance(first.to_string())),
        }
    }

    /// Only squareness is checked.
    pub fn from_matrices_unchecked(matrices: Vec<Vec<Vec<S>>>) -> Result<Self> {
        Ok(PairwisePreference {
            matrices: matrices
                .into_iter()
                .map(PreferenceMatrix::from_rows_unchecked)
                .collect::<Result<_>>()?,
        })
    }

    pub fn from_prompt_matrices(matrices: Vec<PreferenceMatrix<S>>) -> Self {
        PairwisePreference { matrices }
    }

    /// Cyclic oracle on every prompt, sized by the response space.
    pub fn cyclic(space: &ResponseSpace, strength: S) -> Result<Self> {
        Ok(PairwisePreference {
            matrices: space
                .counts()
                .into_iter()
                .map(|k| make_cyclic_oracle(k, strength))
                .collect::<Result<_>>()?,
        })
    }

    /// Every off-diagonal entry 0.5.
    pub fn indifferent(space: &ResponseSpace) -> Self {
        PairwisePreference {
            matrices: space
                .counts()
                .into_iter()
                .map(|k| PreferenceMatrix::from_fn(k, |_, _| S::half()))
                .collect(),
        }
    }

    pub fn num_prompts(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrix(&self, prompt: usize) -> &PreferenceMatrix<S> {
        &self.matrices[prompt]
    }

    pub fn matrices(&self) -> &[PreferenceMatrix<S>] {
        &self.matrices
    }

    #[inline]
    pub fn get(&self, prompt: usize, y: usize, y2: usize) -> S {
        self.matrices[prompt].get(y, y2)
    }

    fn check(&self, out: &mut Vec<Violation>) {
        let tol = S::normalization_tol();
        for (x, m) in self.matrices.iter().enumerate() {
            for i in 0..m.k {
                if m.get(i, i) != S::half() {
                    out.push(Violation::new(
                        ViolationKind::PreferenceDiagonal,
                        format!("prompt {x}: M[{i}][{i}] = {}", m.get(i, i)),
                    ));
                }
                for j in 0..m.k {
                    let v = m.get(i, j);
                    if !(v >= S::zero() && v <= S::one()) {
                        out.push(Violation::new(
                            ViolationKind::PreferenceRange,
                            format!("prompt {x}: M[{i}][{j}] = {v}"),
                        ));
                    }
                    if j > i && (v + m.get(j, i) - S::one()).abs() > tol {
                        out.push(Violation::new(
                            ViolationKind::PreferenceSkewSymmetry,
                            format!(
                                "prompt {x}: M[{i}][{j}] + M[{j}][{i}] = {}",
                                v + m.get(j, i)
                            ),
                        ));
                    }
                }
            }
        }
    }
}

/// Per-prompt real rewards (log-odds scale).
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable<S> {
    rows: Vec<Vec<S>>,
}

impl<S: Scalar> RewardTable<S> {
    pub fn new(rows: Vec<Vec<S>>) -> Result<Self> {
        for (x, row) in rows.iter().enumerate() {
            if let Some(y) = row.iter().position(|r| !r.is_finite()) {
                return Err(Error::NonFinite {
                    prompt: x,
                    response: y,
                });
            }
        }
        Ok(RewardTable { rows })
    }

    pub fn from_rows_unchecked(rows: Vec<Vec<S>>) -> Self {
        RewardTable { rows }
    }

    pub fn zeros(space: &ResponseSpace) -> Self {
        RewardTable {
            rows: space
                .counts()
                .into_iter()
                .map(|k| vec![S::zero(); k])
                .collect(),
        }
    }

    pub fn num_prompts(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.rows
    }

    pub fn row(&self, prompt: usize) -> &[S] {
        &self.rows[prompt]
    }

    pub fn row_mut(&mut self, prompt: usize) -> &mut [S] {
        &mut self.rows[prompt]
    }

    #[inline]
    pub fn get(&self, prompt: usize, response: usize) -> S {
        self.rows[prompt][response]
    }

    /// Adds `shift[x]` to every reward of prompt `x`.
    pub fn shifted(&self, shift: &[S]) -> Self {
        RewardTable {
            rows: self
                .rows
                .iter()
                .zip(shift)
                .map(|(row, &c)| row.iter().map(|&r| r + c).collect())
                .collect(),
        }
    }

    /// Subtracts each prompt's mean reward.
    pub fn center(&mut self) {
        for row in &mut self.rows {
            if row.is_empty() {
                continue;
            }
            let mean = row.iter().copied().sum::<S>() / S::lit(row.len() as f64);
            for r in row.iter_mut() {
                *r -= mean;
            }
        }
    }
}

/// How an instance's oracle was produced; kept so instance files round-trip in kind.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleSpec<S> {
    BradleyTerry,
    Cyclic { strength: S },
    Indifferent,
    Matrix,
}

/// A complete tabular game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameInstance<S> {
    prompt_weights: Vec<S>,
    space: ResponseSpace,
    reference: TabularPolicy<S>,
    preference: PairwisePreference<S>,
    reward: Option<RewardTable<S>>,
    oracle: OracleSpec<S>,
}

impl<S: Scalar> GameInstance<S> {
    /// Assembles and validates an instance; every violation is reported in the error.
    pub fn new(
        prompt_weights: Vec<S>,
        space: ResponseSpace,
        reference: TabularPolicy<S>,
        preference: PairwisePreference<S>,
        reward: Option<RewardTable<S>>,
        oracle: OracleSpec<S>,
    ) -> Result<Self> {
        let inst = Self::from_parts_unchecked(
            prompt_weights,
            space,
            reference,
            preference,
            reward,
            oracle,
        );
        validate_instance(&inst).map_err(|v| {
            Error::InvalidInstance(
                v.iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            )
        })?;
        Ok(inst)
    }

    pub fn from_parts_unchecked(
        prompt_weights: Vec<S>,
        space: ResponseSpace,
        reference: TabularPolicy<S>,
        preference: PairwisePreference<S>,
        reward: Option<RewardTable<S>>,
        oracle: OracleSpec<S>,
    ) -> Self {
        GameInstance {
            prompt_weights,
            space,
            reference,
            preference,
            reward,
            oracle,
        }
    }

    /// Bradley-Terry game: uniform prompts, oracle derived from `rewards`.
    pub fn bradley_terry(
        space: ResponseSpace,
        reference: TabularPolicy<S>,
        rewards: RewardTable<S>,
    ) -> Result<Self> {
        let preference = make_bt_oracle(&rewards)?;
        let w = uniform_weights(space.num_prompts());
        Self::new(
            w,
            space,
            reference,
            preference,
            Some(rewards),
            OracleSpec::BradleyTerry,
        )
    }

    /// Cyclic game on every prompt with uniform prompt weights.
    pub fn cyclic(space: ResponseSpace, reference: TabularPolicy<S>, strength: S) -> Result<Self> {
        let preference = PairwisePreference::cyclic(&space, strength)?;
        let w = uniform_weights(space.num_prompts());
        Self::new(
            w,
            space,
            reference,
            preference,
            None,
            OracleSpec::Cyclic { strength },
        )
    }

    /// Rock-paper-scissors on one prompt, ordered so that response `i` beats `i + 1 (mod 3)`.
    pub fn rock_paper_scissors(reference: TabularPolicy<S>) -> Result<Self> {
        let space =
            ResponseSpace::new(vec![vec!["paper".into(), "rock".into(), "scissors".into()]]);
        Self::cyclic(space, reference, S::one())
    }

    /// Replaces the reward table (the oracle is left untouched).
    pub fn with_reward(mut self, reward: Option<RewardTable<S>>) -> Result<Self> {
        self.reward = reward;
        validate_instance(&self).map_err(|v| Error::InvalidInstance(v[0].to_string()))?;
        Ok(self)
    }

    pub fn with_reference(mut self, reference: TabularPolicy<S>) -> Result<Self> {
        self.reference = reference;
        validate_instance(&self).map_err(|v| Error::InvalidInstance(v[0].to_string()))?;
        Ok(self)
    }

    pub fn prompt_weights(&self) -> &[S] {
        &self.prompt_weights
    }

    pub fn prompt_weight(&self, prompt: usize) -> S {
        self.prompt_weights[prompt]
    }

    pub fn space(&self) -> &ResponseSpace {
        &self.space
    }

    pub fn num_prompts(&self) -> usize {
        self.space.num_prompts()
    }

    pub fn count(&self, prompt: usize) -> usize {
        self.space.count(prompt)
    }

    pub fn reference(&self) -> &TabularPolicy<S> {
        &self.reference
    }

    pub fn preference(&self) -> &PairwisePreference<S> {
        &self.preference
    }

    pub fn reward(&self) -> Option<&RewardTable<S>> {
        self.reward.as_ref()
    }

    pub fn oracle(&self) -> &OracleSpec<S> {
        &self.oracle
    }

    /// Whether `response` lies in the reference support of `prompt`.
    #[inline]
    pub fn in_support(&self, prompt: usize, response: usize) -> bool {
        self.reference.prob(prompt, response) > S::zero()
    }

    /// Checks that `policy` belongs to the instance's policy class.
    pub fn check_policy(&self, policy: &TabularPolicy<S>) -> Result<()> {
        let v = policy_violations(self, policy, "policy");
        match v.into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidInstance(v.to_string())),
        }
    }

    pub(crate) fn check_prompt_response(&self, prompt: usize, response: usize) -> Result<()> {
        if prompt >= self.num_prompts() || response >= self.count(prompt) {
            return Err(Error::IndexOutOfRange { prompt, response });
        }
        Ok(())
    }
}

pub(crate) fn uniform_weights<S: Scalar>(n: usize) -> Vec<S> {
    vec![S::one() / S::lit(n as f64); n]
}

/// Bradley-Terry oracle: `M[y][y'] = σ(R(y) - R(y'))`.
pub fn make_bt_oracle<S: Scalar>(rewards: &RewardTable<S>) -> Result<PairwisePreference<S>> {
    let checked = RewardTable::new(rewards.rows.clone())?;
    Ok(PairwisePreference {
        matrices: checked
            .rows
            .iter()
            .map(|r| PreferenceMatrix::from_fn(r.len(), |i, j| logistic(r[i] - r[j])))
            .collect(),
    })
}

/// Cycle `0 ≻ 1 ≻ … ≻ k-1 ≻ 0` with the given strength; non-adjacent pairs are ties.
pub fn make_cyclic_oracle<S: Scalar>(k: usize, strength: S) -> Result<PreferenceMatrix<S>> {
    if k < 3 {
        return Err(Error::param(
            "k",
            format!("a cycle needs at least 3 responses, got {k}"),
        ));
    }
    if !(strength >= S::half() && strength <= S::one()) {
        return Err(Error::param(
            "strength",
            format!("must lie in [0.5, 1], got {strength}"),
        ));
    }
    Ok(PreferenceMatrix::from_fn(k, |i, j| {
        if j == (i + 1) % k {
            strength
        } else if i == (j + 1) % k {
            S::one() - strength
        } else {
            S::half()
        }
    }))
}

/// Draws one Bernoulli preference between `y` and `y2`; returns `(winner, loser)`.
pub fn sample_preference<S: Scalar, R: Rng + ?Sized>(
    pref: &PairwisePreference<S>,
    prompt: usize,
    y: usize,
    y2: usize,
    rng: &mut R,
) -> Result<(usize, usize)> {
    if y == y2 {
        return Err(Error::SameResponse(y));
    }
    if prompt >= pref.num_prompts() {
        return Err(Error::IndexOutOfRange {
            prompt,
            response: y,
        });
    }
    let k = pref.matrix(prompt).size();
    if y >= k || y2 >= k {
        return Err(Error::IndexOutOfRange {
            prompt,
            response: y.max(y2),
        });
    }
    let u: f64 = rng.gen();
    if u < pref.get(prompt, y, y2).as_f64() {
        Ok((y, y2))
    } else {
        Ok((y2, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    Dimension,
    TooFewResponses,
    DuplicateLabel,
    PromptWeights,
    PolicyEntries,
    PolicyNormalization,
    PolicySupport,
    PreferenceRange,
    PreferenceDiagonal,
    PreferenceSkewSymmetry,
    RewardNonFinite,
}

impl ViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::Dimension => "dimension",
            ViolationKind::TooFewResponses => "response count",
            ViolationKind::DuplicateLabel => "duplicate label",
            ViolationKind::PromptWeights => "prompt weights",
            ViolationKind::PolicyEntries => "policy entries",
            ViolationKind::PolicyNormalization => "policy normalization",
            ViolationKind::PolicySupport => "policy support",
            ViolationKind::PreferenceRange => "preference range",
            ViolationKind::PreferenceDiagonal => "preference diagonal",
            ViolationKind::PreferenceSkewSymmetry => "preference skew-symmetry",
            ViolationKind::RewardNonFinite => "reward finiteness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl Violation {
    fn new(kind: ViolationKind, detail: impl Into<String>) -> Self {
        Violation {
            kind,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.name(), self.detail)
    }
}

fn policy_violations<S: Scalar>(
    inst: &GameInstance<S>,
    policy: &TabularPolicy<S>,
    what: &str,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if !policy.same_shape(&inst.space.counts()) {
        out.push(Violation::new(
            ViolationKind::Dimension,
            format!("{what} shape does not match the response space"),
        ));
        return out;
    }
    policy.check_rows(what, &mut out);
    for (x, row) in policy.rows.iter().enumerate() {
        for (y, p) in row.iter().enumerate() {
            if *p > S::zero() && !inst.in_support(x, y) {
                out.push(Violation::new(
                    ViolationKind::PolicySupport,
                    format!("{what} puts mass on prompt {x}, response {y} outside the reference support"),
                ));
            }
        }
    }
    out
}

/// Checks every structural invariant of an instance and reports all violations.
pub fn validate_instance<S: Scalar>(
    inst: &GameInstance<S>,
) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    inst.space.check(&mut out);
    let counts = inst.space.counts();
    let n = counts.len();

    let tol = S::normalization_tol();
    if inst.prompt_weights.len() != n {
        out.push(Violation::new(
            ViolationKind::Dimension,
            format!(
                "{} prompt weights for {n} prompts",
                inst.prompt_weights.len()
            ),
        ));
    } else if inst
        .prompt_weights
        .iter()
        .any(|w| !w.is_finite() || *w < S::zero())
    {
        out.push(Violation::new(
            ViolationKind::PromptWeights,
            "negative or non-finite prompt weight",
        ));
    } else {
        let s: S = inst.prompt_weights.iter().copied().sum();
        if (s - S::one()).abs() > tol {
            out.push(Violation::new(
                ViolationKind::PromptWeights,
                format!("prompt weights sum to {s}"),
            ));
        }
    }

    if !inst.reference.same_shape(&counts) {
        out.push(Violation::new(
            ViolationKind::Dimension,
            "reference policy shape does not match the response space",
        ));
    } else {
        inst.reference.check_rows("reference policy", &mut out);
    }

    let pref_shape_ok = inst.preference.num_prompts() == n
        && inst
            .preference
            .matrices
            .iter()
            .zip(&counts)
            .all(|(m, k)| m.k == *k);
    if pref_shape_ok {
        inst.preference.check(&mut out);
    } else {
        out.push(Violation::new(
            ViolationKind::Dimension,
            "preference matrices do not match the response space",
        ));
    }

    if let Some(r) = &inst.reward {
        if r.rows.len() != n || r.rows.iter().zip(&counts).any(|(row, k)| row.len() != *k) {
            out.push(Violation::new(
                ViolationKind::Dimension,
                "reward table shape does not match",
            ));
        } else {
            for (x, row) in r.rows.iter().enumerate() {
                if let Some(y) = row.iter().position(|v| !v.is_finite()) {
                    out.push(Violation::new(
                        ViolationKind::RewardNonFinite,
                        format!("prompt {x}, response {y}"),
                    ));
                }
            }
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Validates a policy against an instance (shape, normalization, reference support).
pub fn validate_policy<S: Scalar>(
    inst: &GameInstance<S>,
    policy: &TabularPolicy<S>,
) -> std::result::Result<(), Vec<Violation>> {
    let v = policy_violations(inst, policy, "policy");
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}
