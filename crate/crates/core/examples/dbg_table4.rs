use bbem_core::data::SimDesign;
use bbem_core::experiments::{run_experiment, ExperimentSpec, Method, Tuner};
use std::time::Instant;

fn main() {
    for l in [400usize, 500] {
        for seed in [2024u64, 777] {
            let t0 = Instant::now();
            let spec = ExperimentSpec {
                seed,
                subset_size: Some(l),
                ..ExperimentSpec::new(SimDesign::large_p(100, Some(1000), 0), 20, Method::Bbem, Tuner::Bic)
            };
            let t = run_experiment(&spec).unwrap();
            println!("L={} seed={}: signal={:.2} (>=2.9) noise={:.2} (<=0.6) ({:.0}s)",
                l, seed, t.signal_selected_mean, t.noise_selected_mean, t0.elapsed().as_secs_f64());
        }
    }
}
