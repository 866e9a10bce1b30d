//! One-step label propagation `Y = ZᵀL` with argmax decisions.

use ndarray::Array2;

use crate::clustering::AnchorLabeling;
use crate::error::{Error, Result};
use crate::model::AnchorGraph;
use crate::scalar::Scalar;

/// Soft assignments (`n × k`) and hard labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation<T> {
    pub soft: Array2<T>,
    pub hard_labels: Vec<usize>,
}

/// Propagates anchor labels to every sample. Ties in the argmax go to the
/// lowest cluster id.
pub fn propagate<T: Scalar>(
    graph: &AnchorGraph<T>,
    labeling: &AnchorLabeling<T>,
) -> Result<Propagation<T>> {
    if graph.m() != labeling.m() {
        return Err(Error::Shape(format!(
            "graph has {} anchors, labeling {}",
            graph.m(),
            labeling.m()
        )));
    }
    let soft = graph.z().t().dot(labeling.one_hot());
    let hard_labels = soft
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Ok(Propagation { soft, hard_labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn vertex_column_copies_anchor_label() {
        let graph = AnchorGraph::new(array![[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]]).unwrap();
        let lab = AnchorLabeling::new(vec![0, 1, 1], &[0, 0, 0], 2, 1).unwrap();
        let p = propagate(&graph, &lab).unwrap();
        assert_eq!(p.hard_labels, vec![1, 0]);
        assert_eq!(p.soft.row(0), lab.one_hot().row(1));
    }

    #[test]
    fn uniform_tie_goes_to_cluster_zero() {
        let graph = AnchorGraph::new(Array2::from_elem((4, 1), 0.25)).unwrap();
        let lab = AnchorLabeling::new(vec![0, 1, 0, 1], &[0; 4], 2, 1).unwrap();
        let p = propagate(&graph, &lab).unwrap();
        assert_eq!(p.soft, array![[0.5, 0.5]]);
        assert_eq!(p.hard_labels, vec![0]);
    }

    #[test]
    fn mixed_column() {
        let graph = AnchorGraph::<f64>::new(array![[0.3], [0.7]]).unwrap();
        let lab = AnchorLabeling::new(vec![0, 1], &[0, 0], 2, 1).unwrap();
        let p = propagate(&graph, &lab).unwrap();
        assert!((p.soft[[0, 0]] - 0.3).abs() < 1e-15 && (p.soft[[0, 1]] - 0.7).abs() < 1e-15);
        assert_eq!(p.hard_labels, vec![1]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let graph = AnchorGraph::new(array![[1.0]]).unwrap();
        let lab = AnchorLabeling::<f64>::new(vec![0, 0], &[0, 0], 1, 1).unwrap();
        assert!(propagate(&graph, &lab).is_err());
    }

    fn random_graph(m: usize, n: usize, raw: &[f64]) -> AnchorGraph<f64> {
        let mut z = Array2::from_shape_fn((m, n), |(j, i)| raw[(j * n + i) % raw.len()] + 1e-3);
        for mut col in z.columns_mut() {
            let s = col.sum();
            col /= s;
        }
        AnchorGraph::new(z).unwrap()
    }

    proptest! {
        #[test]
        fn rows_are_stochastic_and_labels_equivariant(
            raw in prop::collection::vec(0.0f64..1.0, 1..64),
            m in 2usize..8,
            n in 1usize..20,
            shift in 1usize..3,
        ) {
            let k = 3.min(m);
            let graph = random_graph(m, n, &raw);
            let labels: Vec<usize> = (0..m).map(|j| j % k).collect();
            let lab = AnchorLabeling::new(labels.clone(), &vec![0; m], k, 1).unwrap();
            let p = propagate(&graph, &lab).unwrap();
            for row in p.soft.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            }
            // cyclic relabeling permutes Y's columns the same way
            let perm: Vec<usize> = (0..k).map(|c| (c + shift) % k).collect();
            let permuted = AnchorLabeling::new(labels.iter().map(|&l| perm[l]).collect(), &vec![0; m], k, 1).unwrap();
            let q = propagate(&graph, &permuted).unwrap();
            for i in 0..n {
                for c in 0..k {
                    prop_assert_eq!(p.soft[[i, c]], q.soft[[i, perm[c]]]);
                }
                // argmax agrees unless the row has a tie
                let row = p.soft.row(i);
                let top = row[p.hard_labels[i]];
                if row.iter().filter(|&&v| v == top).count() == 1 {
                    prop_assert_eq!(perm[p.hard_labels[i]], q.hard_labels[i]);
                }
            }
            prop_assert_eq!(propagate(&graph, &lab).unwrap(), p);
        }
    }
}
