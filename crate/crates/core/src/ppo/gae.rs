use crate::scalar::Scalar;

use super::PpoError;

/// Generalized advantage estimates for one slot's time-ordered transitions.
///
/// `bootstrap[t]` is the value of the state reached after step `t` and is
/// read only where the next row does not continue the same episode: at the
/// last step and after a truncation (whose successor row belongs to a fresh,
/// auto-reset episode). Terminal steps never bootstrap. The advantage trace
/// stops at every episode boundary.
pub fn compute_gae<T: Scalar>(
    rewards: &[T],
    values: &[T],
    terminated: &[bool],
    truncated: &[bool],
    bootstrap: &[T],
    gamma: T,
    lambda: T,
) -> Result<(Vec<T>, Vec<T>), PpoError> {
    let n = rewards.len();
    for (what, len) in [
        ("values", values.len()),
        ("terminated", terminated.len()),
        ("truncated", truncated.len()),
        ("bootstrap", bootstrap.len()),
    ] {
        if len != n {
            return Err(PpoError::LengthMismatch { what, expected: n, found: len });
        }
    }
    let mut adv = vec![T::zero(); n];
    let mut next_adv = T::zero();
    for t in (0..n).rev() {
        let boundary = t + 1 == n || truncated[t] || terminated[t];
        let next_value = if terminated[t] {
            T::zero()
        } else if boundary {
            bootstrap[t]
        } else {
            values[t + 1]
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        let carry = if boundary { T::zero() } else { gamma * lambda * next_adv };
        adv[t] = delta + carry;
        next_adv = adv[t];
    }
    let returns = adv.iter().zip(values).map(|(&a, &v)| a + v).collect();
    Ok((adv, returns))
}
