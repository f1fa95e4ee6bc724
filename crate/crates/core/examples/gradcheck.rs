//! Builds a small network on the autodiff tape, trains it for a few Adam
//! steps and compares its gradients with central differences.
//!
//! cargo run --release --example gradcheck

use qbe_kws::autodiff::{grad_check, uniform, Adam, GradCheckConfig, Graph, NodeId, ParamKind, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn build<'a>(s: &'a ParamStore, x: &Tensor, labels: &[usize]) -> qbe_kws::Result<(Graph<'a>, NodeId)> {
    let mut g = Graph::new(true);
    let xi = g.input(x.clone());
    let w = g.param(s.by_name("conv.w")?);
    let h = g.conv2d(xi, w, [1, 1], [1, 1])?;
    let h = g.tanh(h);
    let h = g.mean_axis(h, 3)?;
    let h = g.mean_axis(h, 2)?;
    let h = g.reshape(h, [x.shape()[0], 3])?;
    let fw = g.param(s.by_name("fc.w")?);
    let fb = g.param(s.by_name("fc.b")?);
    let logits = g.linear(h, fw, Some(fb))?;
    let loss = g.cross_entropy(logits, labels)?;
    Ok((g, loss))
}

fn main() -> qbe_kws::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    store.add("conv.w", uniform(&[3, 1, 3, 3], 0.5, &mut rng), ParamKind::Weight)?;
    store.add("fc.w", uniform(&[4, 3], 0.5, &mut rng), ParamKind::Weight)?;
    store.add("fc.b", Tensor::zeros(vec![4]), ParamKind::Weight)?;
    let x = uniform(&[2, 1, 6, 5], 1.0, &mut rng);
    let labels = [1usize, 3];

    let mut adam = Adam::new(0.05);
    for step in 0..5 {
        let grads = {
            let (g, loss) = build(&store, &x, &labels)?;
            println!("step {step}: loss {:.6}", g.value(loss).item()?);
            g.backward(loss)?
        };
        adam.step(&mut [&mut store], &grads)?;
    }

    let report = grad_check(&mut store, |s| build(s, &x, &labels), GradCheckConfig::default())?;
    println!(
        "checked {} elements, max relative error {:.2e}",
        report.checked, report.max_relative_error
    );
    Ok(())
}
