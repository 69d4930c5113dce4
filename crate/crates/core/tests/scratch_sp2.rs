use std::sync::Arc;

use ellbench::ellpack::EllpackEngine;
use ellbench::model::{generate, preset, SystemKind};
use ellbench::oracle;
use ellbench::perf::{AllocPolicy, ThreadPool};
use ellbench::sp2::{sp2_basic, Sp2Config};

#[test]
#[ignore]
fn sp2_preset_probe() {
    let engine = EllpackEngine::new(Arc::new(ThreadPool::serial()), AllocPolicy::tuned());
    for kind in [SystemKind::Semiconductor, SystemKind::SoftMatter] {
        for n in [128usize, 512] {
            let h = generate(n, &preset(kind)).unwrap();
            let ell = engine.from_dense(&h, 0.0, None).unwrap();
            let cfg = Sp2Config {
                idempotency_tol: 1e-10,
                ..Sp2Config::new(n / 2)
            };
            let t = std::time::Instant::now();
            let (d, report) = sp2_basic(&engine, &ell, &cfg).unwrap();
            let sp2_t = t.elapsed().as_secs_f64();
            let t = std::time::Instant::now();
            let d_oracle = oracle::exact_density_matrix(&h, n / 2).unwrap();
            let eigh_t = t.elapsed().as_secs_f64();
            let rel = d.to_dense().fnorm_diff(&d_oracle).unwrap() / d_oracle.frobenius();
            println!(
                "{kind} n={n}: iters={} relD={rel:.3e} trerr={:.3e} sp2={sp2_t:.2}s eigh={eigh_t:.2}s",
                report.iterations,
                (d.trace() - (n / 2) as f64).abs(),
            );
        }
    }
}
