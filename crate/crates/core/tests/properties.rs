use std::collections::BTreeSet;

use clozegen_core::csg::{generate_candidates, CsgConfig};
use clozegen_core::features::strings::{edit_distance, longest_common_subsequence_length};
use clozegen_core::features::{extract_features, FeatureOptions, FeatureResources};
use clozegen_core::kb::Taxonomy;
use clozegen_core::metrics::ngram::train_ngram_lm;
use clozegen_core::metrics::{f1_at_k, mrr, ndcg_at_k, precision_at_k, recall_at_k};
use clozegen_core::ranker::RankedList;
use clozegen_core::topics::TopicModel;
use proptest::prelude::*;

fn taxonomy_strategy() -> impl Strategy<Value = Vec<(u8, u8, u64)>> {
    prop::collection::vec((0u8..4, 0u8..10, 1u64..30), 1..40)
}

fn build(edges: &[(u8, u8, u64)]) -> Taxonomy {
    let mut b = Taxonomy::builder();
    for (c, i, n) in edges {
        b.add_edge(&format!("concept{c}"), &format!("item{i}"), *n);
    }
    b.build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn candidate_probabilities_form_a_distribution(edges in taxonomy_strategy(), key in 0u8..10) {
        let tax = build(&edges);
        let vocab: Vec<String> = (0..10).map(|i| format!("item{i}")).collect();
        let model = TopicModel::uniform(2, vocab, 0.5, 0.01).unwrap();
        let key = format!("item{key}");
        let set = generate_candidates("The ____ was here.", &key, &tax, &model, &CsgConfig::default());
        if !tax.has_instance(&key) {
            prop_assert!(set.is_empty());
        } else if !set.is_empty() {
            let total: f64 = set.candidates.iter().map(|c| c.probability).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(set.candidates.windows(2).all(|w| w[0].probability >= w[1].probability));
            prop_assert!(set.surfaces().all(|s| s != key));
        }
    }

    #[test]
    fn edit_distance_is_a_metric(a in "[a-c]{0,8}", b in "[a-c]{0,8}", c in "[a-c]{0,8}") {
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        prop_assert_eq!(edit_distance(&a, &a), 0);
        let lcs = longest_common_subsequence_length(&a, &b);
        prop_assert!(edit_distance(&a, &b) >= a.len().max(b.len()) - lcs.min(a.len().max(b.len())));
    }

    #[test]
    fn metrics_stay_in_unit_interval(ranked in prop::collection::vec("[a-e]", 0..8), gold in prop::collection::btree_set("[a-e]", 0..4), k in 1usize..5) {
        for v in [precision_at_k(&ranked, &gold, k), recall_at_k(&ranked, &gold, k), f1_at_k(&ranked, &gold, k), mrr(&ranked, &gold), ndcg_at_k(&ranked, &gold, 10)] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn features_finite_for_arbitrary_text(a in "\\PC{0,12}", d in "\\PC{0,12}", q in "\\PC{0,20}") {
        let stem = format!("{q} ____");
        let f = extract_features(&stem, &a, &d, &FeatureResources::default(), &FeatureOptions::default());
        prop_assert!(f.0.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn ranked_list_is_sorted_and_truncated(scores in prop::collection::vec(-5i32..5, 0..20), n in 0usize..25) {
        let scored: Vec<(String, f64)> = scores.iter().enumerate().map(|(i, s)| (format!("c{i:02}"), *s as f64)).collect();
        let list = RankedList::from_scored(scored, n);
        prop_assert_eq!(list.len(), n.min(scores.len()));
        for w in list.entries.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].surface < w[1].surface));
        }
    }

    #[test]
    fn kneser_ney_normalizes(sentences in prop::collection::vec("[abc]( [abc]){0,5}", 1..6), h1 in "[abcd]", h2 in "[abcd]") {
        let lm = train_ngram_lm(&sentences, 3).unwrap();
        let vocab = lm.vocabulary();
        let total: f64 = vocab.iter().map(|w| lm.prob(w, &[h1.as_str(), h2.as_str()])).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "{}", total);
    }
}

#[test]
fn gold_set_lookup_is_case_insensitive() {
    let gold: BTreeSet<String> = ["rna".to_string()].into();
    assert_eq!(precision_at_k(&["RNA"], &gold, 1), 1.0);
}
