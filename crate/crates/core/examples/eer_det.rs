//! EER and DET points for two overlapping score distributions.
//!
//! cargo run --release --example eer_det

use qbe_kws::eval::{compute_eer, det_csv};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> qbe_kws::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let target = Normal::new(0.7, 0.1).expect("valid normal");
    let nontarget = Normal::new(0.3, 0.15).expect("valid normal");
    let pos: Vec<f64> = (0..500).map(|_| target.sample(&mut rng)).collect();
    let neg: Vec<f64> = (0..5000).map(|_| nontarget.sample(&mut rng)).collect();

    let r = compute_eer(&pos, &neg)?;
    println!("EER {:.4} at threshold {:.4}", r.eer, r.threshold);
    println!("worked example: {:.2}", compute_eer(&[0.8, 0.2], &[0.6, 0.4])?.eer);

    let csv = det_csv(&r.det);
    let lines: Vec<&str> = csv.lines().collect();
    println!("{} DET points, every 1000th:", lines.len() - 1);
    for l in lines.iter().step_by(1000) {
        println!("  {l}");
    }
    Ok(())
}
