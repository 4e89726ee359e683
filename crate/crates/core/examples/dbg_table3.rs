use bbem_core::bbem::{run_bbem, BootstrapConfig};
use bbem_core::data::gen_correlated;
use bbem_core::em::{EmConfig, GammaInit, HyperParams};
use bbem_core::rng::derive_u64;
use bbem_core::tuning::{tune_bic, tune_cv, EngineConfig, V0Grid};
use rayon::prelude::*;
use std::time::Instant;

fn run(tuner: &str, init: GammaInit, seed: u64, reps: u64) {
    let t0 = Instant::now();
    let hp = HyperParams::with_v0(0.01);
    let grid = V0Grid::default_cv();
    let stats: Vec<Vec<u8>> = (0..reps).into_par_iter().map(|rep| {
        let sim = gen_correlated(50, derive_u64(seed, &[6, rep, 0])).unwrap();
        let em = EmConfig { gamma_init: init.clone(), ..EmConfig::default() };
        let boot = BootstrapConfig::new(100, 40, derive_u64(seed, &[6, rep, 1]));
        let engine = EngineConfig::Bbem { em: em.clone(), bootstrap: boot.clone() };
        let v0 = match tuner {
            "cv" => tune_cv(&sim.dataset, &hp, &grid, 5, derive_u64(seed, &[6, rep, 2]), &engine).unwrap().best_v0,
            "bic" => tune_bic(&sim.dataset, &hp, &grid, &engine).unwrap().best_v0,
            _ => 0.01,
        };
        let ens = run_bbem(&sim.dataset, &hp.at_v0(v0), &em, &boot).unwrap();
        ens.selected(0.5)
    }).collect();
    let mut counts = vec![0usize; 40];
    for g in &stats { for j in 0..40 { counts[j] += g[j] as usize; } }
    let scale = 100.0 / reps as f64;
    let mut sig: Vec<f64> = (0..6).map(|j| counts[j] as f64 * scale).collect();
    let mut noi: Vec<f64> = (6..40).map(|j| counts[j] as f64 * scale).collect();
    sig.sort_by(|a,b| a.partial_cmp(b).unwrap());
    noi.sort_by(|a,b| a.partial_cmp(b).unwrap());
    let noise_med = 0.5 * (noi[16] + noi[17]);
    println!("{} {:?}: sig {:.0}/{:.0}/{:.0} noise {:.0}/{:.0}/{:.0} ({:.0}s)  [target sig_med>=90 noise_med<=14]",
        tuner, if init == GammaInit::AllZeros {"zeros"} else {"ones"},
        sig[0], 0.5*(sig[2]+sig[3]), sig[5], noi[0], noise_med, noi[33], t0.elapsed().as_secs_f64());
}

fn main() {
    run("cv", GammaInit::AllZeros, 2024, 50);
    run("cv", GammaInit::AllOnes, 2024, 50);
    run("bic", GammaInit::AllZeros, 2024, 50);
    run("bic", GammaInit::AllOnes, 2024, 50);
    run("fixed", GammaInit::AllZeros, 2024, 50);
}
