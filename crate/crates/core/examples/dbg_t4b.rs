use bbem_core::bbem::{run_bbem, BootstrapConfig};
use bbem_core::data::gen_large_p;
use bbem_core::em::{EmConfig, GammaInit, HyperParams};
use bbem_core::rng::derive_u64;
use bbem_core::tuning::{tune_bic, EngineConfig, V0Grid};
use rayon::prelude::*;

fn run(l: usize, theta0: f64, seed: u64) {
    let reps = 20u64;
    let counts: Vec<(usize, usize)> = (0..reps).into_par_iter().map(|rep| {
        let sim = gen_large_p(100, 1000, derive_u64(seed, &[6, rep, 0])).unwrap();
        let em = EmConfig { theta_init: theta0, gamma_init: GammaInit::AllZeros, ..EmConfig::default() };
        let boot = BootstrapConfig::new(100, l, derive_u64(seed, &[6, rep, 1]));
        let engine = EngineConfig::Bbem { em: em.clone(), bootstrap: boot.clone() };
        let hp = HyperParams::with_v0(0.01);
        let v0 = tune_bic(&sim.dataset, &hp, &V0Grid::default_bic(), &engine).map(|t| t.best_v0).unwrap_or(0.01);
        let ens = run_bbem(&sim.dataset, &hp.at_v0(v0), &em, &boot).unwrap();
        let sel = ens.selected(0.5);
        let sig = sel[..3].iter().filter(|&&g| g == 1).count();
        let noi = sel[3..].iter().filter(|&&g| g == 1).count();
        (sig, noi)
    }).collect();
    let sig: f64 = counts.iter().map(|c| c.0 as f64).sum::<f64>() / reps as f64;
    let noi: f64 = counts.iter().map(|c| c.1 as f64).sum::<f64>() / reps as f64;
    println!("L={} theta0={} seed={}: signal={:.2} noise={:.2}", l, theta0, seed, sig, noi);
}

fn main() {
    for theta0 in [0.033, 0.1, 0.5] {
        run(300, theta0, 2024);
    }
    run(300, 0.1, 777);
}
