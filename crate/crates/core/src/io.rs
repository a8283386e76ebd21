//! CSV writers (RFC 4180 quoting) for matrices and report tables.

use crate::data::DataMatrix;

/// Renders a table with a header row; fields are quoted where needed.
pub fn table_csv<S: AsRef<str>>(header: &[S], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header.iter().map(AsRef::as_ref))
        .expect("writing to memory");
    for r in rows {
        w.write_record(r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}

/// Data matrix as CSV; feature names (or `V1..Vp`) form the header.
pub fn matrix_csv(m: &DataMatrix) -> String {
    let header: Vec<String> = match m.feature_names() {
        Some(n) => n.to_vec(),
        None => (1..=m.cols()).map(|j| format!("V{j}")).collect(),
    };
    let rows: Vec<Vec<String>> = m
        .iter_rows()
        .map(|r| r.iter().map(|v| v.to_string()).collect())
        .collect();
    table_csv(&header, &rows)
}

/// `index,label` rows for a hard assignment.
pub fn labels_csv(labels: &[usize]) -> String {
    let rows: Vec<Vec<String>> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| vec![i.to_string(), l.to_string()])
        .collect();
    table_csv(&["index", "label"], &rows)
}


/// A binary merge: node ids follow the usual convention where leaves are
/// `0..n_leaves` and merge `t` creates node `n_leaves + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewickMerge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
}

/// Newick text for a complete merge sequence. Branch lengths are height
/// differences (leaves sit at height 0); internal nodes carry `label(t)`.
pub fn newick(
    n_leaves: usize,
    merges: &[NewickMerge],
    leaf_name: impl Fn(usize) -> String,
    label: impl Fn(usize) -> Option<String>,
) -> String {
    let height = |id: usize| {
        if id < n_leaves {
            0.0
        } else {
            merges[id - n_leaves].height
        }
    };
    // Explicit stack: deep chain-shaped trees would overflow recursion.
    enum Item {
        Visit(usize, f64),
        Text(String),
    }
    let root = n_leaves + merges.len() - 1;
    let mut out = String::new();
    let mut stack = vec![Item::Text(";".into()), Item::Visit(root, f64::NAN)];
    while let Some(item) = stack.pop() {
        match item {
            Item::Text(t) => out.push_str(&t),
            Item::Visit(id, parent_h) => {
                let len = if parent_h.is_nan() {
                    String::new()
                } else {
                    format!(":{}", parent_h - height(id))
                };
                if id < n_leaves {
                    out.push_str(&leaf_name(id));
                    out.push_str(&len);
                } else {
                    let m = merges[id - n_leaves];
                    let tail = format!("){}{len}", label(id - n_leaves).unwrap_or_default());
                    out.push('(');
                    stack.push(Item::Text(tail));
                    stack.push(Item::Visit(m.right, m.height));
                    stack.push(Item::Text(",".into()));
                    stack.push(Item::Visit(m.left, m.height));
                }
            }
        }
    }
    out
}
