//! Reproducible random instances and policies for property checks and experiments.

use rand::Rng;

use crate::instances::{
    GameInstance, OracleSpec, PairwisePreference, ResponseSpace, RewardTable, TabularPolicy,
};
use crate::scalar::Scalar;

fn normalized<S: Scalar>(raw: Vec<f64>) -> Vec<S> {
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|v| S::lit(v / z)).collect()
}

/// Policy with every entry drawn from `[floor, 1)` before normalization (`0 < floor < 1`).
pub fn random_policy<S: Scalar, R: Rng + ?Sized>(
    space: &ResponseSpace,
    floor: f64,
    rng: &mut R,
) -> TabularPolicy<S> {
    let rows = (0..space.num_prompts())
        .map(|x| {
            normalized(
                (0..space.count(x))
                    .map(|_| rng.gen_range(floor..1.0))
                    .collect(),
            )
        })
        .collect();
    TabularPolicy::from_rows_unchecked(rows)
}

/// Positive exactly where `support` is positive.
pub fn random_policy_on_support<S: Scalar, R: Rng + ?Sized>(
    support: &TabularPolicy<S>,
    floor: f64,
    rng: &mut R,
) -> TabularPolicy<S> {
    let rows = support
        .rows()
        .iter()
        .map(|row| {
            normalized(
                row.iter()
                    .map(|p| {
                        if *p > S::zero() {
                            rng.gen_range(floor..1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            )
        })
        .collect();
    TabularPolicy::from_rows_unchecked(rows)
}

/// Rewards uniform in `[-scale, scale)`.
pub fn random_rewards<S: Scalar, R: Rng + ?Sized>(
    space: &ResponseSpace,
    scale: f64,
    rng: &mut R,
) -> RewardTable<S> {
    let rows = (0..space.num_prompts())
        .map(|x| {
            (0..space.count(x))
                .map(|_| S::lit(rng.gen_range(-scale..scale)))
                .collect()
        })
        .collect();
    RewardTable::from_rows_unchecked(rows)
}

/// A general (typically non-transitive) preference: `P(i ≻ j)` uniform in `[0.05, 0.95)` above
/// the diagonal, completed by skew-symmetry.
#[allow(clippy::needless_range_loop)]
pub fn random_preference<S: Scalar, R: Rng + ?Sized>(
    space: &ResponseSpace,
    rng: &mut R,
) -> PairwisePreference<S> {
    let matrices = (0..space.num_prompts())
        .map(|x| {
            let k = space.count(x);
            let mut m = vec![vec![S::half(); k]; k];
            for i in 0..k {
                for j in i + 1..k {
                    let p = S::lit(rng.gen_range(0.05..0.95));
                    m[i][j] = p;
                    m[j][i] = S::one() - p;
                }
            }
            m
        })
        .collect();
    PairwisePreference::new(matrices).expect("constructed skew-symmetric")
}

/// Random prompt weights, a strictly positive reference, a general preference matrix and,
/// optionally, an unrelated random reward table.
pub fn random_instance<S: Scalar, R: Rng + ?Sized>(
    counts: &[usize],
    with_rewards: bool,
    rng: &mut R,
) -> GameInstance<S> {
    let space = ResponseSpace::with_counts(counts);
    let weights = normalized((0..counts.len()).map(|_| rng.gen_range(0.2..1.0)).collect());
    let reference = random_policy(&space, 0.1, rng);
    let preference = random_preference(&space, rng);
    let rewards = with_rewards.then(|| random_rewards(&space, 2.0, rng));
    GameInstance::new(
        weights,
        space,
        reference,
        preference,
        rewards,
        OracleSpec::Matrix,
    )
    .expect("random instance is valid")
}

/// Bradley-Terry instance with random rewards and a strictly positive random reference.
pub fn random_bt_instance<S: Scalar, R: Rng + ?Sized>(
    counts: &[usize],
    rng: &mut R,
) -> GameInstance<S> {
    let space = ResponseSpace::with_counts(counts);
    let reference = random_policy(&space, 0.1, rng);
    let rewards = random_rewards(&space, 2.0, rng);
    GameInstance::bradley_terry(space, reference, rewards).expect("random instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::validate_instance;
    use crate::rng::stream;

    #[test]
    fn random_objects_are_valid() {
        let mut rng = stream(11, "random");
        for _ in 0..20 {
            let inst: GameInstance<f64> = random_instance(&[2, 3, 5], true, &mut rng);
            assert!(validate_instance(&inst).is_ok());
            let p = random_policy_on_support(inst.reference(), 0.05, &mut rng);
            assert!(inst.check_policy(&p).is_ok());
            let bt: GameInstance<f64> = random_bt_instance(&[4], &mut rng);
            assert!(validate_instance(&bt).is_ok());
        }
    }
}
