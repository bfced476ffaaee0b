mod common;

use common::*;
use ncla_core::diff::{DenseMatrix, EdgeValues};
use ncla_core::graph::Graph;
use ncla_core::model::{forward, init_params, ModelParams, ViewParams};

#[test]
fn forward_matches_dense_masked_softmax() {
    let mut r = rng(4);
    for (n, p) in [(1, 0.0), (4, 0.0), (6, 0.5), (8, 1.0), (10, 0.3)] {
        let g = random_graph(&mut r, n, p, 3);
        let params = init_params(3, 4, 2, n as u64).unwrap();
        let (adjs, es) = forward(&g, &params).unwrap();
        for (k, view) in params.views().iter().enumerate() {
            let (alpha, h) = dense_attention(&g, &view.weight, &view.attention);
            for i in 0..n {
                for j in 0..n {
                    assert!((adjs[k].get(&g, i, j) - alpha[i][j]).abs() < 1e-12);
                }
            }
            let dense = DenseMatrix::from_rows(&h).unwrap();
            assert!(max_abs_diff(&es.per_view[k], &dense) < 1e-12);
        }
    }
}

#[test]
fn coefficient_groups_sum_to_one() {
    let mut r = rng(9);
    let g = random_graph(&mut r, 30, 0.2, 5);
    let params = init_params(5, 8, 3, 1).unwrap();
    let (adjs, _) = forward(&g, &params).unwrap();
    for adj in &adjs {
        for i in 0..g.num_nodes() {
            let s: f64 = adj.coefficients.group(g.layout(), i).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn isolated_node_attends_only_to_itself() {
    let x = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.5], vec![-1.0, 3.0]]).unwrap();
    let g = Graph::from_edges("g", x.clone(), [(0, 1)], None).unwrap().0;
    let params = init_params(2, 3, 2, 0).unwrap();
    let (adjs, es) = forward(&g, &params).unwrap();
    assert_eq!(adjs[0].get(&g, 2, 2), 1.0);
    let w = &params.views()[0].weight;
    for o in 0..3 {
        let z = w.get(o, 0) * x.get(2, 0) + w.get(o, 1) * x.get(2, 1);
        let want = if z > 0.0 { z } else { z.exp_m1() };
        assert!((es.per_view[0].get(2, o) - want).abs() < 1e-14);
    }
}

#[test]
fn zero_attention_vector_gives_uniform_weights() {
    let mut r = rng(1);
    let g = random_graph(&mut r, 7, 0.5, 2);
    let base = init_params(2, 3, 2, 5).unwrap();
    let views: Vec<ViewParams> = base
        .views()
        .iter()
        .map(|v| ViewParams { weight: v.weight.clone(), attention: vec![0.0; 6] })
        .collect();
    let params = ModelParams::new(views).unwrap();
    let (adjs, _) = forward(&g, &params).unwrap();
    for i in 0..7 {
        let group: &[f64] = adjs[0].coefficients.group(g.layout(), i);
        let expected = 1.0 / (g.degree(i) + 1) as f64;
        assert!(group.iter().all(|&a| (a - expected).abs() < 1e-15));
    }
    let _: &EdgeValues = &adjs[1].coefficients;
}
