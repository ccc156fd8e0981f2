use pivq::codebook_train::{run_training, Gauss16, InitMethod, TrainerConfig};
use pivq::Execution;

fn window_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn codebook_loss_falls_over_a_run() {
    for seed in 0..5 {
        let mut cfg = TrainerConfig::new(16, Gauss16::DIM, 4);
        cfg.quantize_start = 50;
        cfg.window = 20;
        cfg.lr_decay = 0.01;
        cfg.init = InitMethod::Random;
        cfg.seed = seed;
        let stream = Gauss16::new(seed, 4, 16).take(1000);
        let (state, _) = run_training(stream, &cfg, Execution::Parallel).unwrap();
        let losses: Vec<f64> = state.loss_history.iter().map(|r| r.codebook_loss).collect();
        let tenth = losses.len() / 10;
        let first = window_mean(&losses[..tenth]);
        let last = window_mean(&losses[losses.len() - tenth..]);
        println!("seed {seed}: first {first:.5} last {last:.5}");
        assert!(last < first, "seed {seed}: first {first} last {last}");
    }
}
