use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use proxsel::config::RunConfig;
use proxsel::eval::{evaluate_policy, EvalOptions, Policy};
use proxsel::pipeline::load_inputs;
use proxsel::selector::label_queries;
use proxsel::{Execution, RankerKind};

fn execution_strategies(c: &mut Criterion) {
    let config = RunConfig::default();
    let inputs = load_inputs(&config).expect("synthetic inputs");
    let params = config.scoring_params();
    let options = EvalOptions {
        measure_throughput: false,
        ..config.eval_options()
    };

    let mut group = c.benchmark_group("label_queries");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        for kind in RankerKind::ALL {
            group.bench_with_input(
                BenchmarkId::new(format!("{exec:?}"), kind),
                &kind,
                |b, &kind| {
                    b.iter(|| {
                        black_box(label_queries(
                            &inputs.index,
                            &inputs.queries,
                            &inputs.qrels,
                            kind,
                            &params,
                            &config.lengths(),
                            options.ap_depth,
                            exec,
                        ))
                    })
                },
            );
        }
    }
    group.finish();

    let mut group = c.benchmark_group("evaluate_tp_all");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| {
                black_box(evaluate_policy(
                    &inputs.index,
                    &inputs.queries,
                    &inputs.qrels,
                    RankerKind::Mrf,
                    Policy::TpAll,
                    &params,
                    &options,
                    exec,
                ))
            })
        });
    }
    group.finish();
}

criterion_group!(benches, execution_strategies);
criterion_main!(benches);
