//! Temporary diagnostic (deleted before finishing): config matrix study.

use safe_explore_core::agent::{run_policy, AgentConfig, Policy};
use safe_explore_core::env::{generate_random_env, EnvGenSpec};
use safe_explore_core::eval::{pooled_counts, run_metrics, PerRunMetrics};
use safe_explore_core::safesets::LipschitzParams;
use safe_explore_core::stgp::KernelSpec;

const FIELD_VAR: f64 = 0.015;

#[derive(Clone, Copy)]
enum Shape {
    PaperShares,
    FloorShares,
}

fn kernel_for(shape: Shape, policy: Policy) -> KernelSpec {
    let v = FIELD_VAR;
    match shape {
        Shape::PaperShares => match policy {
            Policy::IgnoreTime => KernelSpec::rbf_space(2.25 * v, 2.0),
            Policy::NoCrossCov => KernelSpec::sum(
                KernelSpec::rbf_space(1.125 * v, 2.0),
                KernelSpec::rbf_time(1.125 * v, 1.5),
            ),
            _ => KernelSpec::sum(
                KernelSpec::sum(KernelSpec::rbf_space(v, 2.0), KernelSpec::rbf_time(v, 1.5)),
                KernelSpec::product(
                    KernelSpec::rbf_space(0.25 * v, 4.0),
                    KernelSpec::rbf_time(1.0, 10.0),
                ),
            ),
        },
        Shape::FloorShares => match policy {
            Policy::IgnoreTime => KernelSpec::rbf_space(2.25 * v, 2.0),
            // Renormalized additive part of the full kernel: prior 2.25v.
            Policy::NoCrossCov => KernelSpec::sum(
                KernelSpec::sum(
                    KernelSpec::rbf_space(0.402 * v, 2.0),
                    KernelSpec::rbf_time(1.607 * v, 1.5),
                ),
                KernelSpec::rbf_time(0.241 * v, 0.5),
            ),
            _ => KernelSpec::sum(
                KernelSpec::sum(
                    KernelSpec::sum(
                        KernelSpec::rbf_space(0.25 * v, 2.0),
                        KernelSpec::rbf_time(v, 1.5),
                    ),
                    KernelSpec::rbf_time(0.15 * v, 0.5),
                ),
                KernelSpec::product(
                    KernelSpec::rbf_space(0.85 * v, 4.0),
                    KernelSpec::rbf_time(1.0, 10.0),
                ),
            ),
        },
    }
}

fn distinct_cells(trace: &safe_explore_core::agent::EpisodeTrace) -> usize {
    let mut seen: Vec<usize> = trace.steps.iter().map(|r| r.state).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

#[test]
#[ignore]
fn sweep() {
    let n_runs = 20;
    let n_steps = 50;
    for shape in [Shape::PaperShares, Shape::FloorShares] {
        let shape_name = match shape {
            Shape::PaperShares => "paper",
            Shape::FloorShares => "floor",
        };
        for h in [0.0, -0.05] {
            println!("==== shape {shape_name} h {h}");
            for policy in Policy::ALL {
                let mut metrics: Vec<PerRunMetrics> = Vec::new();
                let mut failures = 0;
                let mut rmse_sum = 0.0;
                let mut stuck = 0;
                let mut roam = 0;
                for run in 0..n_runs {
                    let mut spec = EnvGenSpec::new(1000 + run, 10, 10, n_steps, 0.1);
                    spec.h = h;
                    spec.kernel_variance = FIELD_VAR;
                    let w = generate_random_env(&spec).unwrap();
                    let cfg = AgentConfig {
                        policy,
                        beta: 2.0,
                        p: 3.0,
                        lipschitz: LipschitzParams::new(0.1, 0.1),
                        kernel: kernel_for(shape, policy),
                        noise_var: 1e-6,
                        seed: 7 * run + policy.id(),
                    };
                    let out = run_policy(&w, &cfg, n_steps).unwrap();
                    let m = run_metrics(&out, &w);
                    if m.failure {
                        failures += 1;
                    }
                    rmse_sum += m.rmse_raw;
                    stuck += m.stuck_steps;
                    roam += distinct_cells(&out.trace);
                    metrics.push(m);
                }
                let pooled = pooled_counts(&metrics);
                let (prec, rec) = pooled
                    .map(|c| {
                        (
                            c.precision().unwrap_or(f64::NAN),
                            c.recall().unwrap_or(f64::NAN),
                        )
                    })
                    .unwrap_or((f64::NAN, f64::NAN));
                let mean_rec: f64 = {
                    let rs: Vec<f64> = metrics
                        .iter()
                        .filter_map(|m| m.counts.and_then(|c| c.recall()))
                        .collect();
                    rs.iter().sum::<f64>() / rs.len().max(1) as f64
                };
                let mean_prec: f64 = {
                    let ps: Vec<f64> = metrics
                        .iter()
                        .filter_map(|m| m.counts.and_then(|c| c.precision()))
                        .collect();
                    ps.iter().sum::<f64>() / ps.len().max(1) as f64
                };
                println!(
                    "{:13} fail {failures:2}/{n_runs} stuck {stuck:4} roam {:4.1} rmse {:.3} prec(pool/mean) {prec:.3}/{mean_prec:.3} rec {rec:.3}/{mean_rec:.3}",
                    policy.name(),
                    roam as f64 / n_runs as f64,
                    rmse_sum / n_runs as f64,
                );
            }
        }
    }
}
