//! Graphviz rendering of networks.

use std::fmt::Write;

use crate::format::sig;
use crate::graph::{Dag, NodeKind};

const TRAIT_COLOR: &str = "#8fd18f";
const SNP_COLOR: &str = "#8fb8e8";
const LATENT_COLOR: &str = "#d9d9d9";

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT digraph; `strength(parent, child)` labels arcs and scales their width.
pub fn to_dot(dag: &Dag, strength: Option<&dyn Fn(&str, &str) -> Option<f64>>, precision: usize) -> String {
    let mut out = String::from("digraph traitnet {\n  node [style=filled, fontname=\"Helvetica\"];\n");
    for n in dag.nodes() {
        let (color, shape) = match n.kind {
            NodeKind::Trait => (TRAIT_COLOR, "box"),
            NodeKind::Snp => (SNP_COLOR, "ellipse"),
            NodeKind::Latent => (LATENT_COLOR, "diamond"),
        };
        writeln!(out, "  {} [shape={shape}, fillcolor=\"{color}\"];", quote(&n.id)).unwrap();
    }
    for (p, c) in dag.arc_ids() {
        match strength.and_then(|f| f(&p, &c)) {
            Some(s) => writeln!(
                out,
                "  {} -> {} [label=\"{}\", penwidth={}];",
                quote(&p),
                quote(&c),
                sig(s, precision),
                sig(0.5 + 4.5 * s, 3)
            )
            .unwrap(),
            None => writeln!(out, "  {} -> {};", quote(&p), quote(&c)).unwrap(),
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Node;

    #[test]
    fn renders_kinds_and_strengths() {
        let dag = Dag::with_arcs(vec![Node::snp("S1"), Node::trait_node("Y", 0)], &[("S1", "Y")]).unwrap();
        let plain = to_dot(&dag, None, 6);
        assert!(plain.starts_with("digraph"));
        assert!(plain.contains("\"S1\" -> \"Y\";"));
        assert!(plain.contains(SNP_COLOR) && plain.contains(TRAIT_COLOR));
        let f = |_: &str, _: &str| Some(0.49);
        let weighted = to_dot(&dag, Some(&f), 6);
        assert!(weighted.contains("label=\"0.49\""));
        assert!(weighted.contains("penwidth=2.71"));
        assert_eq!(plain.matches('{').count(), plain.matches('}').count());
    }
}
