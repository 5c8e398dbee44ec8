#![allow(dead_code)]

use netsir::{Matrix, Model};

pub fn one_node(b_imm: f64, b: f64, d: f64, beta: f64, gamma: f64) -> Model {
    Model::new(
        vec![b_imm],
        vec![b],
        vec![d],
        Matrix::zeros(1, 1),
        vec![beta],
        vec![gamma],
    )
    .unwrap()
}

/// Isolated FMD herd: no demography, β = .67, γ = 1/5.5 per day.
pub fn fmd() -> Model {
    one_node(0.0, 0.0, 0.0, 0.67, 1.0 / 5.5)
}

/// Two exchangeable nodes with z* = (1, 1) and q = (1/2, 1/2).
pub fn pair() -> Model {
    Model::new(
        vec![0.5; 2],
        vec![0.0; 2],
        vec![0.5; 2],
        Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        vec![2.0; 2],
        vec![0.5; 2],
    )
    .unwrap()
}

/// Three-node demography used for the law-of-large-numbers experiment.
pub fn three_node() -> Model {
    Model::new(
        vec![1.0, 0.5, 0.5],
        vec![0.1, 0.05, 0.02],
        vec![0.1, 0.2, 0.1],
        Matrix::from_rows(&[vec![0.0, 0.2, 0.2], vec![0.1, 0.0, 0.5], vec![0.1, 0.0, 0.0]]).unwrap(),
        vec![0.0; 3],
        vec![0.0; 3],
    )
    .unwrap()
}

pub const THREE_NODE_X0: [f64; 3] = [5.0, 2.0, 20.0];

/// One node with endemic equilibrium (5, 2.5, 2.5).
pub fn endemic() -> Model {
    one_node(5.0, 0.5, 1.0, 4.0, 1.0)
}
