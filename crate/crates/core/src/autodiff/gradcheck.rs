use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, NodeId, ParamStore};
use crate::error::{KwsError, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step, within [1e-7, 1e-3].
    pub step: f64,
    /// Elements sampled per parameter (all of them when smaller).
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-6,
            samples_per_param: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Elements whose perturbation crossed a non-differentiable point.
    pub skipped: usize,
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-12)
}

fn eval<F>(store: &ParamStore, build: &F) -> Result<(f64, u64)>
where
    F: for<'a> Fn(&'a ParamStore) -> Result<(Graph<'a>, NodeId)>,
{
    let (g, loss) = build(store)?;
    Ok((g.value(loss).item()?, g.branch_signature()))
}

/// Compares analytic gradients against central differences for every
/// trainable parameter of `store`. `build` must construct the graph from
/// scratch and return its scalar loss node.
pub fn grad_check<F>(store: &mut ParamStore, build: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&'a ParamStore) -> Result<(Graph<'a>, NodeId)>,
{
    if !(1e-7..=1e-3).contains(&cfg.step) {
        return Err(KwsError::OutOfRange {
            what: "grad-check step",
            value: cfg.step,
            min: 1e-7,
            max: 1e-3,
        });
    }
    let (analytic, base_sig) = {
        let (g, loss) = build(store)?;
        (g.backward(loss)?, g.branch_signature())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let names: Vec<(usize, usize)> = (0..store.len())
        .filter(|&i| store.get(i).trainable)
        .map(|i| (i, store.get(i).tensor.numel()))
        .collect();
    for (pid, numel) in names {
        let name = store.get(pid).name.clone();
        let grad = analytic.get(&name).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; numel]);
        let picks: Vec<usize> = if numel <= cfg.samples_per_param {
            (0..numel).collect()
        } else {
            sample(&mut rng, numel, cfg.samples_per_param).into_vec()
        };
        for i in picks {
            let orig = store.get(pid).tensor.data()[i];
            store.get_mut(pid).tensor.data_mut()[i] = orig + cfg.step;
            let plus = eval(store, &build);
            store.get_mut(pid).tensor.data_mut()[i] = orig - cfg.step;
            let minus = eval(store, &build);
            store.get_mut(pid).tensor.data_mut()[i] = orig;
            let ((lp, sp), (lm, sm)) = (plus?, minus?);
            if sp != base_sig || sm != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * cfg.step);
            report.max_relative_error = report.max_relative_error.max(relative_error(grad[i], numeric));
            report.checked += 1;
        }
    }
    if report.checked == 0 {
        return Err(KwsError::invalid("grad check: every sampled element sits at a non-differentiable point"));
    }
    Ok(report)
}
