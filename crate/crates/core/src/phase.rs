use std::f64::consts::{PI, TAU};

/// Wraps an angle to the principal interval (-pi, pi].
pub fn wrap(angle: f64) -> f64 {
    let mut w = angle.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w <= -PI {
        w += TAU;
    }
    w
}

/// All index triplets `n < m < k` for `p` acquisitions, in lexicographic order.
pub fn triplets(p: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..p).flat_map(move |n| (n + 1..p).flat_map(move |m| (m + 1..p).map(move |k| (n, m, k))))
}

pub fn triplet_count(p: usize) -> usize {
    if p < 3 {
        0
    } else {
        p * (p - 1) * (p - 2) / 6
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_edges() {
        assert_eq!(wrap(PI), PI);
        assert_eq!(wrap(-PI), PI);
        assert!((wrap(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap(0.0), 0.0);
    }

    #[test]
    fn triplet_enumeration() {
        assert_eq!(triplets(2).count(), 0);
        assert_eq!(triplets(23).count(), 1771);
        assert_eq!(triplet_count(23), 1771);
        assert_eq!(
            triplets(4).collect::<Vec<_>>(),
            vec![(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        );
    }

    proptest! {
        #[test]
        fn wrap_is_principal_and_congruent(x in -100.0f64..100.0) {
            let w = wrap(x);
            prop_assert!(w > -PI && w <= PI);
            let turns = (x - w) / TAU;
            prop_assert!((turns - turns.round()).abs() < 1e-9);
        }
    }
}
