use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Node;

/// Column-aligned observations for a set of typed nodes: the working table of
/// structure and parameter learning.
#[derive(Debug, Clone)]
pub struct NodeData {
    nodes: Vec<Node>,
    values: DMatrix<f64>,
    index: HashMap<String, usize>,
}

impl NodeData {
    pub fn new(nodes: Vec<Node>, values: DMatrix<f64>) -> Result<Self> {
        if nodes.len() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{} nodes for {} columns",
                nodes.len(),
                values.ncols()
            )));
        }
        let index: HashMap<String, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        if index.len() != nodes.len() {
            return Err(Error::Config("duplicate node ids".into()));
        }
        Ok(NodeData { nodes, values, index })
    }

    pub fn from_dataset(d: &Dataset) -> Self {
        NodeData::new(d.nodes(), d.matrix()).expect("dataset ids are unique")
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id).ok_or_else(|| Error::MissingColumn(id.to_string()))
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.values.as_slice()[i * n..(i + 1) * n]
    }

    /// Restrict to the named nodes, keeping the requested order.
    pub fn select<S: AsRef<str>>(&self, ids: &[S]) -> Result<NodeData> {
        let cols = ids
            .iter()
            .map(|s| self.require(s.as_ref()))
            .collect::<Result<Vec<usize>>>()?;
        NodeData::new(
            cols.iter().map(|&c| self.nodes[c].clone()).collect(),
            self.values.select_columns(&cols),
        )
    }

    pub fn select_rows(&self, rows: &[usize]) -> NodeData {
        NodeData {
            nodes: self.nodes.clone(),
            values: self.values.select_rows(rows),
            index: self.index.clone(),
        }
    }

    /// Maximum-likelihood covariance (divisor n) of all columns.
    pub fn mle_covariance(&self) -> DMatrix<f64> {
        let n = self.n() as f64;
        let mut centered = self.values.clone();
        for mut col in centered.column_iter_mut() {
            let m = col.sum() / n;
            col.add_scalar_mut(-m);
        }
        let mut c = centered.tr_mul(&centered) / n;
        crate::linalg::symmetrize(&mut c);
        c
    }
}
