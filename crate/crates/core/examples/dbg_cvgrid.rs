use bbem_core::data::gen_tibshirani;
use bbem_core::em::{EmConfig, HyperParams};
use bbem_core::tuning::{tune_cv, EngineConfig, V0Grid, GridScale};

fn main() {
    let hp = HyperParams::with_v0(0.01);
    let engine = EngineConfig::Em { em: EmConfig::default() };
    let specgrid = V0Grid::default_cv();
    let wide = V0Grid::from_values(vec![0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1], GridScale::Log10).unwrap();
    for seed in 1u64..=6 {
        let sim = gen_tibshirani(40, 3.0, seed).unwrap();
        let a = tune_cv(&sim.dataset, &hp, &specgrid, 5, seed, &engine).unwrap();
        let b = tune_cv(&sim.dataset, &hp, &wide, 5, seed, &engine).unwrap();
        let fmt = |r: &bbem_core::tuning::TuneResult| r.scores.iter().map(|s| format!("{:.3}", s.score.unwrap())).collect::<Vec<_>>().join(" ");
        println!("seed {}: spec grid best={} rmse=[{}]", seed, a.best_v0, fmt(&a));
        println!("        wide grid best={} rmse=[{}]", b.best_v0, fmt(&b));
    }
}
