//! SVG dendrogram: leaves equally spaced along the x axis, node height
//! mapped to the y axis, rejected clusters stroked solid and annotated
//! with their adjusted p-value.

use hiertest_core::{ClusterTree, NodeId};

const LEAF_SPACING: f64 = 26.0;
const PLOT_HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;

pub struct Highlight {
    pub rejected: Vec<bool>,
    pub p_h: Vec<f64>,
}

pub fn render(tree: &ClusterTree, highlight: Option<&Highlight>) -> String {
    let p = tree.n_vars();
    let width = MARGIN * 2.0 + LEAF_SPACING * p.max(2) as f64;
    let height = PLOT_HEIGHT + MARGIN * 2.0;

    let max_height = tree
        .nodes()
        .iter()
        .map(|n| n.height)
        .fold(f64::MIN_POSITIVE, f64::max);
    let y_of = |h: f64| MARGIN + (1.0 - (h / max_height).clamp(0.0, 1.0)) * PLOT_HEIGHT;

    // leaf order from a left-to-right walk; internal x = mean of children
    let mut x = vec![0.0f64; tree.len()];
    let mut next_leaf = 0usize;
    assign_x(tree, tree.root(), &mut x, &mut next_leaf);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));

    for node in tree.nodes() {
        if node.children.is_empty() {
            continue;
        }
        let (solid, label) = match highlight {
            Some(h) if h.rejected[node.id] => (true, Some(h.p_h[node.id])),
            _ => (false, None),
        };
        let stroke = if solid { "#111111" } else { "#9a9a9a" };
        let dash = if solid { "" } else { " stroke-dasharray=\"4,3\"" };
        let y = y_of(node.height);
        let first = *node.children.first().unwrap();
        let last = *node.children.last().unwrap();
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{stroke}\" stroke-width=\"1.5\"{dash}/>\n",
            x[first], x[last]
        ));
        for &c in &node.children {
            let yc = y_of(tree.nodes()[c].height);
            svg.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{yc:.1}\" stroke=\"{stroke}\" stroke-width=\"1.5\"{dash}/>\n",
                x[c], x[c]
            ));
        }
        if let Some(pv) = label {
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"9\" fill=\"#b00000\" \
                 text-anchor=\"middle\">{:.6}</text>\n",
                (x[first] + x[last]) / 2.0,
                y - 3.0,
                pv
            ));
        }
    }

    for node in tree.nodes() {
        if !node.children.is_empty() {
            continue;
        }
        let rejected_leaf =
            matches!(highlight, Some(h) if h.rejected[node.id]);
        let weight = if rejected_leaf { "bold" } else { "normal" };
        let color = if rejected_leaf { "#b00000" } else { "#333333" };
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" font-weight=\"{weight}\" \
             fill=\"{color}\" text-anchor=\"middle\">{}</text>\n",
            x[node.id],
            MARGIN + PLOT_HEIGHT + 14.0,
            node.variables[0] + 1
        ));
        if rejected_leaf {
            if let Some(h) = highlight {
                svg.push_str(&format!(
                    "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"8\" fill=\"#b00000\" \
                     text-anchor=\"middle\">{:.6}</text>\n",
                    x[node.id],
                    MARGIN + PLOT_HEIGHT + 25.0,
                    h.p_h[node.id]
                ));
            }
        }
    }

    svg.push_str("</svg>\n");
    svg
}

fn assign_x(tree: &ClusterTree, id: NodeId, x: &mut [f64], next_leaf: &mut usize) {
    let children = tree.nodes()[id].children.clone();
    if children.is_empty() {
        x[id] = MARGIN + LEAF_SPACING * (*next_leaf as f64 + 0.5);
        *next_leaf += 1;
        return;
    }
    for &c in &children {
        assign_x(tree, c, x, next_leaf);
    }
    x[id] = children.iter().map(|&c| x[c]).sum::<f64>() / children.len() as f64;
}
