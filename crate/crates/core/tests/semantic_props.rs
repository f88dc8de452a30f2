use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sempubsub_core::demo;
use sempubsub_core::matcher::PredicateIndex;
use sempubsub_core::model::{match_syntactic, Event, Op, Pair, Predicate, Subscription, Term, Value};
use sempubsub_core::ontology::{load_ontology, Ontology};
use sempubsub_core::pipeline::{expand_event, normalize_subscription, PrecisionConfig};
use sempubsub_core::testkit::{
    closure_oracle, frontier_of, random_domain, random_event, random_subscription, OntologyShape, RandomDomain,
};

fn domain(seed: u64, shape: OntologyShape) -> (RandomDomain, Ontology) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = random_domain(&mut rng, shape);
    let o = load_ontology(std::slice::from_ref(&d.document)).expect("random ontologies are valid");
    (d, o)
}

fn t(s: &str) -> Term {
    Term::new(s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roots_are_idempotent(seed in any::<u64>()) {
        let (d, o) = domain(seed, OntologyShape::default());
        for term in d.all_terms() {
            let term = t(term);
            let r = o.root_of(&term);
            prop_assert_eq!(o.root_of(r), r);
        }
    }

    #[test]
    fn specialization_is_a_partial_order(seed in any::<u64>()) {
        let (d, o) = domain(seed, OntologyShape::default());
        let roots: Vec<Term> = d.roots.iter().map(|s| t(s)).collect();
        for a in &roots {
            prop_assert!(o.is_specialization_of(a, a));
            for b in &roots {
                if a != b && o.is_specialization_of(a, b) {
                    prop_assert!(!o.is_specialization_of(b, a));
                }
            }
        }
        // Transitivity along random upward walks.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for start in &roots {
            let mut path = vec![start.clone()];
            loop {
                let parents = o.hierarchy().parents(path.last().unwrap());
                let Some(next) = parents.choose(&mut rng) else { break };
                path.push(next.clone());
            }
            for i in 0..path.len() {
                for j in i..path.len() {
                    prop_assert!(o.is_specialization_of(&path[i], &path[j]));
                }
            }
        }
    }

    #[test]
    fn applicable_mappings_equal_brute_force(seed in any::<u64>()) {
        let (d, o) = domain(seed, OntologyShape { arithmetic: true, ..OntologyShape::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for i in 0..20 {
            let e = random_event(&mut rng, &d, i);
            let pairs: Vec<Pair> = e.pairs.iter().map(|p| Pair::new(o.root_of(&p.attribute).clone(), o.root_value(&p.value))).collect();
            let indexed: BTreeSet<&str> = o.applicable_mappings(&pairs, 2003).iter().map(|m| m.name()).collect();
            let brute: BTreeSet<&str> = o
                .mappings()
                .iter()
                .filter(|m| m.inputs().iter().all(|ip| pairs.iter().any(|p| ip.accepts(p, 2003))))
                .map(|m| m.name())
                .collect();
            prop_assert_eq!(indexed, brute);
            for m in o.applicable_mappings(&pairs, 2003) {
                for out in o.apply_mapping(m, &pairs, 2003) {
                    for p in out {
                        prop_assert_eq!(o.root_of(&p.attribute), &p.attribute);
                    }
                }
            }
        }
    }

    #[test]
    fn expansion_is_monotone_and_order_independent(seed in any::<u64>()) {
        let (d, o) = domain(seed, OntologyShape { arithmetic: true, ..OntologyShape::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(3));
        let cfg = PrecisionConfig::semantic();
        for i in 0..10 {
            let e = random_event(&mut rng, &d, i);
            let x = expand_event(&e, &o, &cfg, 2003);
            for p in &e.pairs {
                let normalized = Pair::new(o.root_of(&p.attribute).clone(), o.root_value(&p.value));
                prop_assert!(x.contains(&normalized));
            }
            let mut shuffled = e.pairs.clone();
            shuffled.shuffle(&mut rng);
            let y = expand_event(&Event::new(e.event_id.clone(), shuffled).unwrap(), &o, &cfg, 2003);
            prop_assert_eq!(frontier_of(&x), frontier_of(&y));
        }
    }

    #[test]
    fn all_stages_off_is_syntactic(seed in any::<u64>()) {
        let (d, o) = domain(seed, OntologyShape::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let subs: Vec<Subscription> = (0..30).map(|i| random_subscription(&mut rng, &d, i)).collect();
        let mut idx = PredicateIndex::new(2003);
        for s in &subs {
            idx.add_subscription(s.clone()).unwrap();
        }
        for i in 0..20 {
            let e = random_event(&mut rng, &d, i);
            let x = expand_event(&e, &o, &PrecisionConfig::syntactic(), 2003);
            let expected: BTreeSet<String> = subs.iter().filter(|s| match_syntactic(s, &e, 2003)).map(|s| s.sub_id.clone()).collect();
            prop_assert_eq!(idx.matching_ids(&x), expected);
        }
    }
}

#[test]
fn closure_matches_brute_force_oracle() {
    let mut checked = 0;
    for seed in 0..100u64 {
        let (d, o) = domain(seed, OntologyShape::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 10_000);
        for i in 0..10 {
            let e = random_event(&mut rng, &d, i);
            for cfg in [
                PrecisionConfig::semantic().with_max_passes(64),
                PrecisionConfig::semantic().with_max_passes(64).with_max_generality(Some(1)),
            ] {
                let x = expand_event(&e, &o, &cfg, 2003);
                assert!(x.reached_fixpoint(), "seed {seed} event {i} did not stabilize");
                assert_eq!(frontier_of(&x), closure_oracle(&e, &d.document, &cfg, 2003), "seed {seed} event {i}");
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 2000);
}

#[test]
fn demo_taxonomy_rule_asymmetry() {
    let o = demo::jobfinder_ontology();
    let terms: Vec<Term> = o.hierarchy().terms().into_iter().cloned().collect();
    assert_eq!(terms.len(), 10);
    let cfg = PrecisionConfig::semantic();
    for narrow in &terms {
        for wide in &terms {
            let expected = o.is_specialization_of(narrow, wide);
            // Term in value position.
            let e = Event::new("e", vec![Pair::new(t("kind"), Value::Symbol(narrow.clone()))]).unwrap();
            let s = Subscription::new(
                "s",
                "c",
                vec![Predicate::new(t("kind"), Op::Eq, Value::Symbol(wide.clone())).unwrap()],
            )
            .unwrap();
            let mut idx = PredicateIndex::new(2003);
            idx.add_subscription(normalize_subscription(&s, &o)).unwrap();
            let got = !idx.match_event(&expand_event(&e, &o, &cfg, 2003)).is_empty();
            assert_eq!(got, expected, "value {narrow} vs {wide}");

            // Term in attribute position.
            let e = Event::new("e", vec![Pair::new(narrow.clone(), Value::Bool(true))]).unwrap();
            let s = Subscription::new(
                "s",
                "c",
                vec![Predicate::new(wide.clone(), Op::Eq, Value::Bool(true)).unwrap()],
            )
            .unwrap();
            let mut idx = PredicateIndex::new(2003);
            idx.add_subscription(normalize_subscription(&s, &o)).unwrap();
            let got = !idx.match_event(&expand_event(&e, &o, &cfg, 2003)).is_empty();
            assert_eq!(got, expected, "attribute {narrow} vs {wide}");
        }
    }
    assert!(o.is_specialization_of(&t("car"), &t("vehicle")));
    assert!(!o.is_specialization_of(&t("vehicle"), &t("car")));
}
