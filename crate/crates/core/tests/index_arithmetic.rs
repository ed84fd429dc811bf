use medconf_core::quantile::{
    kth_smallest, lower_calibration_index, lower_calibration_rank, upper_calibration_index, Level,
};
use medconf_core::Rank;
use proptest::prelude::*;

/// Smallest k with k / (n2 + 1) >= num / den, counted by brute force.
fn upper_by_count(n2: usize, num: u64, den: u64) -> Rank {
    let m = n2 as u64 + 1;
    let k = (0..=m + 1).find(|&k| k * den >= num * m).unwrap() as usize;
    if k > n2 {
        Rank::PosInf
    } else {
        Rank::At(k.max(1))
    }
}

/// Smallest integer k with k >= (num / den)(n2 + 1) - 1, counted by brute force.
fn lower_by_count(n2: usize, num: u64, den: u64) -> Rank {
    let m = n2 as u64 + 1;
    let k = (0..=m).find(|&k| (k + 1) * den >= num * m).unwrap() as usize;
    if k < 1 {
        Rank::NegInf
    } else {
        Rank::At(k)
    }
}

fn key(r: Rank) -> i64 {
    match r {
        Rank::NegInf => i64::MIN,
        Rank::At(k) => k as i64,
        Rank::PosInf => i64::MAX,
    }
}

#[test]
fn upper_index_matches_count_definition() {
    for n2 in 1..=200 {
        for j in 1..200u64 {
            let expected = upper_by_count(n2, j, 200);
            assert_eq!(upper_calibration_index(n2, Level::ratio(j, 200)).unwrap(), expected);
            // the same level typed as a decimal literal
            let decimal = j as f64 / 200.0;
            assert_eq!(
                upper_calibration_index(n2, decimal).unwrap(),
                expected,
                "{n2} {decimal}"
            );
        }
    }
}

#[test]
fn lower_index_matches_count_definition() {
    for n2 in 1..=200 {
        for j in 0..200u64 {
            let expected = lower_by_count(n2, j, 200);
            assert_eq!(lower_calibration_rank(n2, Level::ratio(j, 200)).unwrap(), expected);
            let decimal = j as f64 / 200.0;
            assert_eq!(lower_calibration_rank(n2, decimal).unwrap(), expected, "{n2} {decimal}");
        }
    }
}

#[test]
fn lower_product_matches_count_definition() {
    // q and r on a 0.05 grid, product formed exactly
    for n2 in 1..=200 {
        for qi in 1..20u64 {
            for ri in 0..20u64 {
                let q = qi as f64 / 20.0;
                let r = ri as f64 / 20.0;
                let expected = lower_by_count(n2, qi * ri, 400);
                assert_eq!(lower_calibration_index(n2, q, r).unwrap(), expected, "{n2} {q} {r}");
            }
        }
    }
}

#[test]
fn lower_never_exceeds_upper() {
    for n2 in 1..=200 {
        for qi in 1..20u64 {
            for ri in 0..=20u64 {
                for si in 0..=20u64 {
                    // rq <= 1 - s(1 - q) in units of 1/400
                    let rq = ri * qi;
                    let upper_num = 400 - si * (20 - qi);
                    if rq > upper_num || rq >= 400 || upper_num == 0 {
                        continue;
                    }
                    let lo = lower_calibration_rank(n2, Level::ratio(rq, 400)).unwrap();
                    let hi = upper_calibration_index(n2, Level::ratio(upper_num, 400)).unwrap();
                    assert!(key(lo) <= key(hi), "{n2} q={qi} r={ri} s={si}");
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn kth_smallest_agrees_with_sorting(
        values in prop::collection::vec(prop_oneof![-5i32..5, -1000i32..1000], 1..1000),
        pick in any::<prop::sample::Index>(),
    ) {
        let values: Vec<f64> = values.into_iter().map(f64::from).collect();
        let k = pick.index(values.len()) + 1;
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(kth_smallest(&values, Rank::At(k)).unwrap(), sorted[k - 1]);
    }
}
