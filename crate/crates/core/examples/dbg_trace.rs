use bbem_core::data::gen_tibshirani;
use bbem_core::em::{run_em, EmConfig, EmState, HyperParams, threshold_r};
use bbem_core::posterior::{build_posterior, second_moments, expected_rss, PrecisionDiag};

fn main() {
    let sim = gen_tibshirani(40, 3.0, 1).unwrap();
    let ds = &sim.dataset;
    for v0 in [0.01, 0.02, 0.05] {
        let hp = HyperParams::with_v0(v0);
        let res = run_em(ds, &hp, &EmConfig::default(), None).unwrap();
        println!("v0={}: gamma={:?} sigma2={:.3} theta={:.3} iters={}", v0, res.gamma, res.state.sigma2, res.state.theta, res.trace.len());
        for (t, rec) in res.trace.iter().enumerate().take(8) {
            println!("  t={} flips={} sigma2={:.4} theta={:.4} lp={:.4}", t+1, rec.flips, rec.sigma2, rec.theta, rec.log_post);
        }
    }
    // manual first iterations at v0=0.02
    let hp = HyperParams::with_v0(0.02);
    let gamma = vec![1u8; 8];
    let prec = PrecisionDiag::from_gamma(&gamma, hp.v0, hp.v1).unwrap();
    let post = build_posterior(ds, &prec, None).unwrap();
    let e2 = second_moments(&post, 1.0);
    let erss = expected_rss(ds, &post, 1.0, None);
    let st = EmState { gamma: gamma.clone(), sigma2: 1.0, theta: 0.5, iter: 0 };
    println!("iter1: r={:.4} e2={:?} erss={:.2}", threshold_r(&st, &hp), e2.iter().map(|x| (x*1000.0).round()/1000.0).collect::<Vec<_>>(), erss);
}
