mod common;

use common::random_tree;
use nested_distance::tree::{early_vs_late_information, validate, TreeError, Violation};
use nested_distance::{generate, parse_tree, serialize_tree, GenSpec, Node, ScenarioTree};
use proptest::prelude::*;

#[test]
fn early_tree_path_law_and_children() {
    let (x, y) = early_vs_late_information(1.0, 0.1);
    assert!(x.validate().is_empty());
    assert_eq!(x.nodes().len(), 5);

    let law = x.path_law();
    assert_eq!(law.paths.len(), 2);
    assert_eq!(law.paths[0].values, vec![1.0, 1.1, 2.0]);
    assert_eq!(law.paths[1].values, vec![1.0, 0.9, 0.0]);
    assert!(law.paths.iter().all(|p| p.prob == 0.5));

    let law = y.path_law();
    assert_eq!(law.paths[0].values, vec![1.0, 1.0, 2.0]);
    assert_eq!(law.paths[1].values, vec![1.0, 1.0, 0.0]);
    assert!(law.paths.iter().all(|p| p.prob == 0.5));

    let root = x.children_distribution(0).unwrap();
    assert_eq!(root.support(), &[1, 2]);
    assert_eq!(root.weights(), &[0.5, 0.5]);
    let up = x.children_distribution(1).unwrap();
    assert_eq!(up.support(), &[3]);
    assert_eq!(up.weights(), &[1.0]);
    assert!(matches!(
        x.children_distribution(3),
        Err(TreeError::NoChildren(3))
    ));
    assert!(matches!(
        x.children_distribution(99),
        Err(TreeError::UnknownNode(99))
    ));
}

#[test]
fn chain_has_one_certain_path() {
    let t = ScenarioTree::chain(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
    let law = t.path_law();
    assert_eq!(law.paths.len(), 1);
    assert_eq!(law.paths[0].prob, 1.0);
    assert_eq!(law.paths[0].values, vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn violations_name_the_nodes() {
    let root = Node::root(0, vec![0.0]);
    let a = Node::child(1, &root, vec![1.0], 0.5);
    let b = Node::child(2, &root, vec![2.0], 0.4);
    let v = validate(2, 1, &[root.clone(), a.clone(), b]);
    assert_eq!(
        v,
        vec![Violation::ChildrenProbSum {
            parent: 0,
            sum: 0.9
        }]
    );

    // a leaf at stage 2 of a depth-3 tree, and a wrong value length
    let bad = Node::child(2, &root, vec![2.0, 3.0], 0.5);
    let v = validate(3, 1, &[root, a, bad]);
    assert!(v.contains(&Violation::EarlyLeaf { id: 1, stage: 2 }));
    assert!(v.contains(&Violation::ValueLength {
        id: 2,
        len: 2,
        expected: 1
    }));
    assert!(validate(1, 1, &[]).contains(&Violation::Empty));
}

#[test]
fn canonical_json_of_a_single_node() {
    let t = ScenarioTree::new(1, 1, vec![Node::root(0, vec![1.5])]).unwrap();
    let text = serialize_tree(&t);
    let expected = r#"{
  "depth": 1,
  "value_dim": 1,
  "nodes": [
    {
      "id": 0,
      "stage": 1,
      "parent": null,
      "value": [
        1.5
      ],
      "cond_prob": 1.0
    }
  ]
}
"#;
    assert_eq!(text, expected);
    assert_eq!(parse_tree(text.as_bytes()).unwrap(), t);
}

#[test]
fn parse_errors_are_distinct() {
    let missing = r#"{"depth": 1, "value_dim": 1,
        "nodes": [{"id": 0, "stage": 1, "parent": null, "value": [0.0]}]}"#;
    match parse_tree(missing.as_bytes()) {
        Err(TreeError::Schema(msg)) => assert!(msg.contains("cond_prob"), "{msg}"),
        other => panic!("expected schema error, got {other:?}"),
    }
    assert!(matches!(
        parse_tree(b"{\"depth\": 1,"),
        Err(TreeError::Syntax(_))
    ));
    let invalid = r#"{"depth": 2, "value_dim": 1,
        "nodes": [{"id": 0, "stage": 1, "parent": null, "value": [0.0], "cond_prob": 1.0}]}"#;
    match parse_tree(invalid.as_bytes()) {
        Err(TreeError::Invalid(v)) => {
            assert!(v.contains(&Violation::EarlyLeaf { id: 0, stage: 1 }))
        }
        other => panic!("expected invalid tree, got {other:?}"),
    }
}

#[test]
fn round_trip_keeps_the_path_law() {
    let (x, _) = early_vs_late_information(1.0, 0.1);
    let back = parse_tree(serialize_tree(&x).as_bytes()).unwrap();
    assert_eq!(back.path_law(), x.path_law());
}

#[test]
fn generator_shape() {
    for seed in 0..5 {
        let t = random_tree(seed, 1, 3, 1);
        assert_eq!(t.nodes().len(), 1);
    }
    let spec = GenSpec::new(4, 3, 42);
    assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    assert_eq!(
        serialize_tree(&generate(&spec).unwrap()),
        serialize_tree(&generate(&spec).unwrap())
    );
    assert!(generate(&GenSpec::new(0, 3, 1)).is_err());
    assert!(generate(&GenSpec::new(3, 0, 1)).is_err());
}

#[test]
fn generated_trees_are_valid() {
    for seed in 0..100 {
        let t = random_tree(seed, 6, 3, 2);
        assert!(t.validate().is_empty(), "seed {seed}");
        assert_eq!(t.depth(), 6);
        assert!(t.leaves().all(|n| n.stage == 6));
        for node in t.nodes().iter().filter(|n| n.stage < 6) {
            let kids = t.children_distribution(node.id).unwrap();
            assert!((1..=3).contains(&kids.len()));
            assert!((kids.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        let total: f64 = t.path_law().paths.iter().map(|p| p.prob).sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn serialization_round_trips(seed in any::<u64>(), depth in 1usize..=6, k in 1usize..=4, dim in 1usize..=3) {
        let t = random_tree(seed, depth, k, dim);
        let text = serialize_tree(&t);
        let back = parse_tree(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(serialize_tree(&back), text);
    }
}
