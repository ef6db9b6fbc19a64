use lob_uncertainty::lobdata::Movement;
use lob_uncertainty::metrics::{
    auc, auc_macro, binary_auc, confusion_matrix, ddr, precision_recall_f1, sharpe, AucAverage,
};
use lob_uncertainty::rng::CounterRng;
use proptest::prelude::*;

fn pairwise_auc(pos: &[bool], s: &[f64]) -> (u64, u64) {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if pos[i] && !pos[j] {
                pairs += 1;
                twice += if s[i] > s[j] {
                    2
                } else if s[i] == s[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    (twice, 2 * pairs)
}

#[test]
fn six_sample_handset_matches_pairwise_oracle_exactly() {
    use Movement::*;
    let labels = [Up, Down, Neutral, Up, Down, Neutral];
    let scores = [
        [0.6, 0.3, 0.1],
        [0.2, 0.2, 0.6],
        [0.3, 0.4, 0.3],
        [0.3, 0.3, 0.4],
        [0.6, 0.1, 0.3],
        [0.2, 0.5, 0.3],
    ];
    let r = auc(&labels, &scores, AucAverage::Macro).unwrap();
    for c in 0..3 {
        let pos: Vec<bool> = labels.iter().map(|l| l.class_index() == c).collect();
        let s: Vec<f64> = scores.iter().map(|v| v[c]).collect();
        let (num, den) = pairwise_auc(&pos, &s);
        assert_eq!(r.per_class[c].unwrap(), num as f64 / den as f64);
    }
}

#[test]
fn uninformative_scores_give_half() {
    let mut rng = CounterRng::from_key(5);
    let n = 20_000;
    let labels: Vec<Movement> = (0..n).map(|_| Movement::ALL[rng.below(3) as usize]).collect();
    let scores: Vec<[f64; 3]> = (0..n).map(|_| [rng.uniform(), rng.uniform(), rng.uniform()]).collect();
    let r = auc(&labels, &scores, AucAverage::Macro).unwrap();
    for (c, a) in r.per_class.iter().enumerate() {
        let p = labels.iter().filter(|l| l.class_index() == c).count() as f64;
        let q = n as f64 - p;
        // null standard deviation of the rank statistic
        let sd = ((p + q + 1.0) / (12.0 * p * q)).sqrt();
        assert!((a.unwrap() - 0.5).abs() < 3.0 * sd, "class {c}: {a:?}");
    }
}

#[test]
fn micro_average_pools_pairs() {
    use Movement::*;
    let labels = [Up, Down];
    let scores = [[0.7, 0.2, 0.1], [0.3, 0.3, 0.4]];
    let micro = auc(&labels, &scores, AucAverage::Micro).unwrap().value;
    let pos = [true, false, false, false, false, true];
    let flat = [0.7, 0.2, 0.1, 0.3, 0.3, 0.4];
    assert_eq!(Some(micro), binary_auc(&pos, &flat));
}

fn labels_and_preds() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..3, 0usize..3), 1..300)
}

proptest! {
    #[test]
    fn ddr_and_sharpe_are_positively_scale_invariant(
        r in prop::collection::vec(-1.0f64..1.0, 2..200),
        c in prop::sample::select(vec![0.5, 2.0, 10.0, 0.001, 1e3]),
    ) {
        let scaled: Vec<f64> = r.iter().map(|x| x * c).collect();
        let (a, b) = (ddr(&r).unwrap(), ddr(&scaled).unwrap());
        if a.is_finite() {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        } else {
            prop_assert_eq!(a, b);
        }
        let (a, b) = (sharpe(&r).unwrap(), sharpe(&scaled).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0) || a == b);
    }

    #[test]
    fn auc_invariant_under_monotone_transform(
        data in prop::collection::vec((0usize..3, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 6..100),
    ) {
        let labels: Vec<Movement> = data.iter().map(|d| Movement::ALL[d.0]).collect();
        let s: Vec<[f64; 3]> = data.iter().map(|d| [d.1, d.2, d.3]).collect();
        let t: Vec<[f64; 3]> = s.iter().map(|v| v.map(|x| (3.0 * x).exp() - 7.0)).collect();
        let (a, b) = (auc_macro(&labels, &s), auc_macro(&labels, &t));
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn confusion_matches_counting_and_scores_match_formulas(pairs in labels_and_preds()) {
        let l: Vec<Movement> = pairs.iter().map(|p| Movement::ALL[p.0]).collect();
        let p: Vec<Movement> = pairs.iter().map(|p| Movement::ALL[p.1]).collect();
        let cm = confusion_matrix(&l, &p).unwrap();
        prop_assert_eq!(cm.total(), pairs.len() as u64);
        for t in 0..3 {
            for q in 0..3 {
                prop_assert_eq!(cm.0[t][q], pairs.iter().filter(|x| **x == (t, q)).count() as u64);
            }
        }
        let prf = precision_recall_f1(&cm);
        let mut f1s = 0.0;
        for c in 0..3 {
            let tp = pairs.iter().filter(|x| x.0 == c && x.1 == c).count() as f64;
            let fp = pairs.iter().filter(|x| x.0 != c && x.1 == c).count() as f64;
            let fneg = pairs.iter().filter(|x| x.0 == c && x.1 != c).count() as f64;
            // F1 = 2TP / (2TP + FP + FN), 0 when undefined
            let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fneg) };
            prop_assert!((prf.per_class[c].f1 - f1).abs() < 1e-12);
            f1s += f1;
        }
        prop_assert!((prf.macro_avg.f1 - f1s / 3.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&prf.macro_avg.f1));
    }
}
