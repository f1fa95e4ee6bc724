//! Central-difference checks of every tape operator and loss on random
//! shapes, shared by the gradient tests and the acceptance suite.

use qbe_kws::autodiff::{grad_check, uniform, GradCheckConfig, Graph, NodeId, ParamKind, ParamStore, Tensor};
use qbe_kws::losses::CircleParams;
use qbe_kws::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SHAPES: usize = 10;
pub const TOL: f64 = 1e-4;
pub const LINEAR_TOL: f64 = 1e-6;

pub const OPS: [&str; 18] = [
    "conv2d",
    "batch_norm",
    "relu",
    "sigmoid",
    "tanh",
    "add",
    "mul",
    "mean_axis",
    "reshape",
    "linear",
    "gather",
    "slice_cols",
    "scale_rows",
    "l2_normalize",
    "sum",
    "cross_entropy",
    "circle_loss",
    "cosine_loss",
];

#[derive(Debug, Clone)]
pub struct OpReport {
    pub op: &'static str,
    pub shapes: usize,
    pub checked: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl OpReport {
    pub fn passed(&self) -> bool {
        self.shapes >= SHAPES && self.checked > 0 && self.max_relative_error < self.tolerance
    }
}

/// Fixed pseudo-random projection to a scalar, so every output element
/// receives a distinct O(1) upstream gradient.
fn project<'a>(g: &mut Graph<'a>, y: NodeId) -> Result<NodeId> {
    let n = g.value(y).numel();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    g.weighted_sum(y, &w)
}

fn check<F>(rep: &mut OpReport, store: &mut ParamStore, build: F)
where
    F: for<'a> Fn(&'a ParamStore) -> Result<(Graph<'a>, NodeId)>,
{
    let r = grad_check(store, build, GradCheckConfig::default()).unwrap_or_else(|e| panic!("{}: {e}", rep.op));
    rep.shapes += 1;
    rep.checked += r.checked;
    rep.max_relative_error = rep.max_relative_error.max(r.max_relative_error);
}

fn store_with(params: &[(&str, Tensor)]) -> ParamStore {
    let mut s = ParamStore::new();
    for (name, t) in params {
        s.add(*name, t.clone(), ParamKind::Weight).unwrap();
    }
    s
}

fn rng(op: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed + op)
}

fn conv2d(rep: &mut OpReport) {
    let mut r = rng(1);
    for _ in 0..SHAPES {
        let (b, cin, cout) = (r.gen_range(1..3), r.gen_range(1..4), r.gen_range(1..4));
        let (h, w) = (r.gen_range(3..7), r.gen_range(3..7));
        let stride = [r.gen_range(1..3), r.gen_range(1..3)];
        let pad = [r.gen_range(0..2), r.gen_range(0..2)];
        let k = [r.gen_range(1..4), r.gen_range(1..4)];
        let mut s = store_with(&[
            ("x", uniform(&[b, cin, h, w], 1.0, &mut r)),
            ("w", uniform(&[cout, cin, k[0], k[1]], 1.0, &mut r)),
        ]);
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let (x, w) = (g.param(s.get(0)), g.param(s.get(1)));
            let y = g.conv2d(x, w, stride, pad)?;
            let l = project(&mut g, y)?;
            Ok((g, l))
        });
    }
}

fn batch_norm(rep: &mut OpReport) {
    let mut r = rng(2);
    for i in 0..SHAPES {
        let (b, c) = (r.gen_range(2..5), r.gen_range(1..4));
        let inner: Vec<usize> = (0..r.gen_range(0..3)).map(|_| r.gen_range(1..4)).collect();
        let shape: Vec<usize> = [b, c].into_iter().chain(inner).collect();
        let mut s = store_with(&[
            ("x", uniform(&shape, 2.0, &mut r)),
            ("gamma", uniform(&[c], 1.0, &mut r)),
            ("beta", uniform(&[c], 1.0, &mut r)),
        ]);
        s.add("mean", uniform(&[c], 0.5, &mut r), ParamKind::Buffer).unwrap();
        let var = Tensor::new(vec![c], (0..c).map(|_| r.gen_range(0.5..2.0)).collect()).unwrap();
        s.add("var", var, ParamKind::Buffer).unwrap();
        let batch_stats = i % 2 == 0;
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let (x, ga, be) = (g.param(s.get(0)), g.param(s.get(1)), g.param(s.get(2)));
            let y = g.batch_norm(x, ga, be, s.get(3), s.get(4), batch_stats)?;
            let l = project(&mut g, y)?;
            Ok((g, l))
        });
    }
}

fn unary(rep: &mut OpReport, seed: u64, f: for<'a> fn(&mut Graph<'a>, NodeId) -> NodeId) {
    let mut r = rng(seed);
    for _ in 0..SHAPES {
        let shape: Vec<usize> = (0..r.gen_range(1..5)).map(|_| r.gen_range(1..5)).collect();
        let mut s = store_with(&[("x", uniform(&shape, 2.0, &mut r))]);
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let x = g.param(s.get(0));
            let y = f(&mut g, x);
            let l = project(&mut g, y)?;
            Ok((g, l))
        });
    }
}

fn relu(rep: &mut OpReport) {
    unary(rep, 3, |g, x| g.relu(x));
}

fn sigmoid(rep: &mut OpReport) {
    unary(rep, 4, |g, x| g.sigmoid(x));
}

fn tanh(rep: &mut OpReport) {
    unary(rep, 5, |g, x| g.tanh(x));
}

fn binary(rep: &mut OpReport, seed: u64, f: for<'a> fn(&mut Graph<'a>, NodeId, NodeId) -> Result<NodeId>) {
    let mut r = rng(seed);
    for _ in 0..SHAPES {
        let shape: Vec<usize> = (0..r.gen_range(1..5)).map(|_| r.gen_range(1..5)).collect();
        let mut s = store_with(&[("a", uniform(&shape, 1.0, &mut r)), ("b", uniform(&shape, 1.0, &mut r))]);
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let (a, b) = (g.param(s.get(0)), g.param(s.get(1)));
            let y = f(&mut g, a, b)?;
            let l = project(&mut g, y)?;
            Ok((g, l))
        });
    }
}

fn add(rep: &mut OpReport) {
    binary(rep, 6, |g, a, b| g.add(a, b));
}

fn mul(rep: &mut OpReport) {
    binary(rep, 7, |g, a, b| g.mul(a, b));
}

fn mean_axis(rep: &mut OpReport) {
    let mut r = rng(8);
    for _ in 0..SHAPES {
        let shape: Vec<usize> = (0..r.gen_range(1..5)).map(|_| r.gen_range(1..5)).collect();
        let axis = r.gen_range(0..shape.len());
        let mut s = store_with(&[("x", uniform(&shape, 1.0, &mut r))]);
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let x = g.param(s.get(0));
            let y = g.mean_axis(x, axis)?;
            let l = project(&mut g, y)?;
            Ok((g, l))
        });
    }
}

fn reshape(rep: &mut OpReport) {
    let mut r = rng(9);
    for _ in 0..SHAPES {
        let (a, b, c) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..5));
        let mut s = store_with(&[("x", uniform(&[a, b, c], 1.0, &mut r))]);
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let x = g.param(s.get(0));
            let y = g.reshape(x, [a * b, c])?;
            let y = g.tanh(y);
            let l = project(&mut g, y)?;
            Ok((g, l))
        });
    }
}

fn linear(rep: &mut OpReport) {
    let mut r = rng(10);
    for i in 0..SHAPES {
        let (b, din, dout) = (r.gen_range(1..5), r.gen_range(1..6), r.gen_range(1..6));
        let mut s = store_with(&[
            ("x", uniform(&[b, din], 1.0, &mut r)),
            ("w", uniform(&[dout, din], 1.0, &mut r)),
            ("b", uniform(&[dout], 1.0, &mut r)),
        ]);
        let bias = i % 2 == 0;
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let (x, w) = (g.param(s.get(0)), g.param(s.get(1)));
            let b = bias.then(|| g.param(s.get(2)));
            let y = g.linear(x, w, b)?;
            let l = project(&mut g, y)?;
            Ok((g, l))
        });
    }
}

fn gather(rep: &mut OpReport) {
    let mut r = rng(11);
    for _ in 0..SHAPES {
        let (v, d, n) = (r.gen_range(2..8), r.gen_range(1..6), r.gen_range(1..10));
        let ids: Vec<usize> = (0..n).map(|_| r.gen_range(0..v)).collect();
        let mut s = store_with(&[("table", uniform(&[v, d], 1.0, &mut r))]);
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let t = g.param(s.get(0));
            let y = g.gather(t, &ids)?;
            let y = g.tanh(y);
            let l = project(&mut g, y)?;
            Ok((g, l))
        });
    }
}

fn slice_cols(rep: &mut OpReport) {
    let mut r = rng(12);
    for _ in 0..SHAPES {
        let (b, n) = (r.gen_range(1..5), r.gen_range(2..9));
        let start = r.gen_range(0..n);
        let len = r.gen_range(1..=n - start);
        let mut s = store_with(&[("x", uniform(&[b, n], 1.0, &mut r))]);
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let x = g.param(s.get(0));
            let x = g.tanh(x);
            let y = g.slice_cols(x, start, len)?;
            let l = project(&mut g, y)?;
            Ok((g, l))
        });
    }
}

fn scale_rows(rep: &mut OpReport) {
    let mut r = rng(13);
    for _ in 0..SHAPES {
        let (b, d) = (r.gen_range(1..6), r.gen_range(1..6));
        let coeffs: Vec<f64> = (0..b).map(|_| r.gen_range(-2.0..2.0)).collect();
        let mut s = store_with(&[("x", uniform(&[b, d], 1.0, &mut r))]);
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let x = g.param(s.get(0));
            let x = g.tanh(x);
            let y = g.scale_rows(x, &coeffs)?;
            let l = project(&mut g, y)?;
            Ok((g, l))
        });
    }
}

fn l2_normalize(rep: &mut OpReport) {
    let mut r = rng(14);
    for _ in 0..SHAPES {
        let (b, d) = (r.gen_range(1..6), r.gen_range(2..8));
        let mut s = store_with(&[("x", uniform(&[b, d], 1.0, &mut r))]);
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let x = g.param(s.get(0));
            let y = g.l2_normalize(x)?;
            let l = project(&mut g, y)?;
            Ok((g, l))
        });
    }
}

fn sum(rep: &mut OpReport) {
    let mut r = rng(15);
    for i in 0..SHAPES {
        let shape: Vec<usize> = (0..r.gen_range(1..4)).map(|_| r.gen_range(1..5)).collect();
        let mut s = store_with(&[("x", uniform(&shape, 1.0, &mut r))]);
        let weighted = i % 2 == 0;
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let x = g.param(s.get(0));
            let y = g.sigmoid(x);
            let l = if weighted { project(&mut g, y)? } else { g.sum(y) };
            Ok((g, l))
        });
    }
}

fn cross_entropy(rep: &mut OpReport) {
    let mut r = rng(16);
    for _ in 0..SHAPES {
        let (b, c) = (r.gen_range(1..8), r.gen_range(2..10));
        let labels: Vec<usize> = (0..b).map(|_| r.gen_range(0..c)).collect();
        let mut s = store_with(&[("logits", uniform(&[b, c], 3.0, &mut r))]);
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let x = g.param(s.get(0));
            let l = g.cross_entropy(x, &labels)?;
            Ok((g, l))
        });
    }
}

fn circle_loss(rep: &mut OpReport) {
    let mut r = rng(17);
    for _ in 0..SHAPES {
        // moderate scale keeps every pair weight far from underflow
        let params = CircleParams {
            gamma: r.gen_range(1.0..8.0),
            margin: r.gen_range(0.1..0.5),
        };
        let (p, k, d) = (r.gen_range(2..5), r.gen_range(2..4), r.gen_range(3..10));
        let labels: Vec<usize> = (0..p * k).map(|i| i / k).collect();
        let mut s = store_with(&[("x", uniform(&[p * k, d], 1.0, &mut r))]);
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let x = g.param(s.get(0));
            let x = g.l2_normalize(x)?;
            let (l, degenerate) = g.circle_loss(x, &labels, &params)?;
            assert!(!degenerate);
            Ok((g, l))
        });
    }
}

fn cosine_loss(rep: &mut OpReport) {
    let mut r = rng(18);
    for _ in 0..SHAPES {
        let (b, d) = (r.gen_range(1..6), r.gen_range(2..10));
        let mut target = uniform(&[b, d], 1.0, &mut r);
        for row in target.data_mut().chunks_mut(d) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter_mut().for_each(|v| *v /= n);
        }
        let mut s = store_with(&[("pred", uniform(&[b, d], 1.0, &mut r))]);
        check(rep, &mut s, |s| {
            let mut g = Graph::new(true);
            let x = g.param(s.get(0));
            let l = g.cosine_loss(x, &target)?;
            Ok((g, l))
        });
    }
}

/// Runs every shape of one operator's case.
pub fn check_op(op: &'static str) -> OpReport {
    let mut rep = OpReport {
        op,
        shapes: 0,
        checked: 0,
        max_relative_error: 0.0,
        tolerance: if op == "linear" { LINEAR_TOL } else { TOL },
    };
    let case: fn(&mut OpReport) = match op {
        "conv2d" => conv2d,
        "batch_norm" => batch_norm,
        "relu" => relu,
        "sigmoid" => sigmoid,
        "tanh" => tanh,
        "add" => add,
        "mul" => mul,
        "mean_axis" => mean_axis,
        "reshape" => reshape,
        "linear" => linear,
        "gather" => gather,
        "slice_cols" => slice_cols,
        "scale_rows" => scale_rows,
        "l2_normalize" => l2_normalize,
        "sum" => sum,
        "cross_entropy" => cross_entropy,
        "circle_loss" => circle_loss,
        "cosine_loss" => cosine_loss,
        other => panic!("no gradient case for `{other}`"),
    };
    case(&mut rep);
    rep
}
