use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use miniuuv::camera::{overhead_pose, tag_in_camera, CameraConfig, TagConfig};
use miniuuv::exec::Execution;
use miniuuv::harness::{builtin, run_batch, Scenario};
use miniuuv::link::{empirical_delivery_rate, ChannelConfig};
use miniuuv::tracking::{run_segments, DetectionSegment, PipelineConfig, TagDetection};
use miniuuv::vehicle::VehicleState;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

/// `n` independent 20 s circular segments seen by a noise-free camera.
fn segments(n: usize) -> Vec<DetectionSegment> {
    let cam = CameraConfig { pose: overhead_pose(2.0, 2.0, 3.0, 0.05, 0.0, 0.0), ..CameraConfig::default() }.noiseless();
    let tag = TagConfig::default();
    (0..n)
        .map(|k| {
            let radius = 0.8 + 0.05 * k as f64;
            let dets: Vec<TagDetection> = (0..600)
                .map(|i| {
                    let t = 100.0 * k as f64 + i as f64 / 30.0;
                    let a = 0.3 * t / radius;
                    let s = VehicleState { t, ..VehicleState::at_rest(2.0 + radius * a.sin(), 2.0 - radius * a.cos(), a) };
                    TagDetection { timestamp: t, tag_id: tag.tag_id, pose: tag_in_camera(&s, &cam, &tag) }
                })
                .collect();
            DetectionSegment::new(dets).expect("non-empty")
        })
        .collect()
}

fn pipeline(c: &mut Criterion) {
    let segs = segments(16);
    let cfg = PipelineConfig::default();
    let mut g = c.benchmark_group("run_segments");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, segs.len()), &segs, |b, segs| {
            b.iter(|| run_segments(black_box(segs), &cfg, exec))
        });
    }
    g.finish();
}

fn scenarios(c: &mut Criterion) {
    let batch: Vec<Scenario> = builtin::NAMES
        .iter()
        .filter_map(|n| builtin::builtin(n))
        .map(|mut s| {
            s.resolve().expect("built-ins resolve");
            s
        })
        .collect();
    let mut g = c.benchmark_group("run_batch");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| run_batch(black_box(&batch), exec)));
    }
    g.finish();
}

fn delivery(c: &mut Criterion) {
    let cfg = ChannelConfig::default();
    let mut g = c.benchmark_group("empirical_delivery_rate");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| empirical_delivery_rate(black_box(0.75), &cfg, 200_000, 1, exec)));
    }
    g.finish();
}

criterion_group!(benches, pipeline, scenarios, delivery);
criterion_main!(benches);
