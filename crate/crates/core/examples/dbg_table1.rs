use bbem_core::data::gen_tibshirani;
use bbem_core::em::{run_em, EmConfig, GammaInit, HyperParams};
use bbem_core::rng::derive_u64;
use bbem_core::tuning::{tune_cv, EngineConfig, V0Grid};
use rayon::prelude::*;

fn cv_t1(n: usize, sigma: f64, seed: u64) -> (f64, f64) {
    let hp = HyperParams::with_v0(0.01);
    let grid = V0Grid::default_cv();
    let stats: Vec<Vec<u8>> = (0..100u64).into_par_iter().map(|rep| {
        let sim = gen_tibshirani(n, sigma, derive_u64(seed, &[6, rep, 0])).unwrap();
        let em = EmConfig { gamma_init: GammaInit::AllZeros, ..EmConfig::default() };
        let engine = EngineConfig::Em { em: em.clone() };
        let tuned = tune_cv(&sim.dataset, &hp, &grid, 5, derive_u64(seed, &[6, rep, 2]), &engine).unwrap();
        run_em(&sim.dataset, &hp.at_v0(tuned.best_v0), &em, None).unwrap().gamma
    }).collect();
    let nz: f64 = stats.iter().map(|g| [2usize,3,5,6,7].iter().filter(|&&j| g[j]==0).count() as f64).sum::<f64>()/100.0;
    let sz: f64 = stats.iter().map(|g| [0usize,1,4].iter().filter(|&&j| g[j]==0).count() as f64).sum::<f64>()/100.0;
    (nz, sz)
}

fn fixed_t2(n: usize, sigma: f64, seed: u64) -> (usize, usize) {
    let hp = HyperParams::with_v0(0.01);
    let stats: Vec<Vec<u8>> = (0..100u64).into_par_iter().map(|rep| {
        let sim = gen_tibshirani(n, sigma, derive_u64(seed, &[6, rep, 0])).unwrap();
        let em = EmConfig { gamma_init: GammaInit::AllZeros, ..EmConfig::default() };
        run_em(&sim.dataset, &hp, &em, None).unwrap().gamma
    }).collect();
    let mut counts = [0usize; 8];
    for g in &stats { for j in 0..8 { counts[j] += g[j] as usize; } }
    let mut sig = vec![counts[0], counts[1], counts[4]]; sig.sort();
    let mut noi = vec![counts[2], counts[3], counts[5], counts[6], counts[7]]; noi.sort();
    (sig[1], noi[2])
}

fn main() {
    for seed in [2024u64, 777, 555, 31] {
        let (nz, sz) = cv_t1(40, 3.0, seed);
        println!("T1 n=40 s=3 CV seed={}: nz={:.2} (>=4.05) sz={:.2} (0.09..0.39)", seed, nz, sz);
    }
    for seed in [2024u64, 777, 555, 31] {
        let (sm, nm) = fixed_t2(50, 6.0, seed);
        println!("T2 s=6 fixed v0=0.01 seed={}: sig_med={} (57..77) noise_med={} (5..15)", seed, sm, nm);
    }
}
