// Random scenario trees: generation, structure, path law and the JSON
// format.
//
//     cargo run --example generate_tree

use nested_distance::{generate, parse_tree, serialize_tree, GenSpec};

fn main() {
    let spec = GenSpec {
        depth: 4,
        max_children: 3,
        value_dim: 1,
        seed: 42,
        increment_scale: 1.0,
    };
    let tree = generate(&spec).unwrap();
    println!(
        "depth {}, {} nodes, {} leaves",
        tree.depth(),
        tree.nodes().len(),
        tree.leaf_count()
    );
    for t in 1..=tree.depth() {
        println!("stage {t}: {} nodes", tree.stage_len(t));
    }

    let root = tree.root();
    let kids = tree.children_distribution(root.id).unwrap();
    println!(
        "root value {:?}, children {:?} with probabilities {:?}",
        root.value,
        kids.support(),
        kids.weights()
    );

    let law = tree.path_law();
    let total: f64 = law.paths.iter().map(|p| p.prob).sum();
    println!(
        "{} scenarios, total probability {total:.15}",
        law.paths.len()
    );
    for path in law.paths.iter().take(3) {
        println!(
            "  leaf {:>2}: p = {:.4}, values {:.3?}",
            path.leaf, path.prob, path.values
        );
    }

    let text = serialize_tree(&tree);
    let back = parse_tree(text.as_bytes()).unwrap();
    assert_eq!(back, tree);
    println!("JSON round trip ok ({} bytes); first lines:", text.len());
    for line in text.lines().take(12) {
        println!("  {line}");
    }

    // the same seed always gives the same tree
    assert_eq!(generate(&spec).unwrap(), tree);
}
