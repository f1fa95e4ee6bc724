//! Central-difference gradient checks, one test per operator and loss.

mod common;

use common::grad::check_op;

fn assert_op(op: &'static str) {
    let r = check_op(op);
    assert!(r.passed(), "{r:?}");
}

#[test]
fn conv2d() {
    assert_op("conv2d");
}

#[test]
fn batch_norm() {
    assert_op("batch_norm");
}

#[test]
fn relu() {
    assert_op("relu");
}

#[test]
fn sigmoid() {
    assert_op("sigmoid");
}

#[test]
fn tanh() {
    assert_op("tanh");
}

#[test]
fn add() {
    assert_op("add");
}

#[test]
fn mul() {
    assert_op("mul");
}

#[test]
fn mean_axis() {
    assert_op("mean_axis");
}

#[test]
fn reshape() {
    assert_op("reshape");
}

#[test]
fn linear() {
    assert_op("linear");
}

#[test]
fn gather() {
    assert_op("gather");
}

#[test]
fn slice_cols() {
    assert_op("slice_cols");
}

#[test]
fn scale_rows() {
    assert_op("scale_rows");
}

#[test]
fn l2_normalize() {
    assert_op("l2_normalize");
}

#[test]
fn sum() {
    assert_op("sum");
}

#[test]
fn cross_entropy() {
    assert_op("cross_entropy");
}

#[test]
fn circle_loss() {
    assert_op("circle_loss");
}

#[test]
fn cosine_loss() {
    assert_op("cosine_loss");
}
