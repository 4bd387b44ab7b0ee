//! Acceptance suite: one test per acceptance criterion, each printing a
//! single PASS line (or failing its asserts). Run with
//! `cargo test -p semreduce-core --test acceptance -- --nocapture` to see
//! the lines and per-criterion wall times.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use semreduce_core::analysis::{
    cam_from_activations, grad_cam, sensitivity_scan, AblationMode,
};
use semreduce_core::autodiff::gradcheck::{central_difference, max_relative_error};
use semreduce_core::autodiff::{Tape, Tensor};
use semreduce_core::models::{
    evaluate_modular, evaluate_steernet, steer_input, train_control, train_perception,
    train_steernet, Hyperparams, PerceptionConfig, SteerNet, SteerNetConfig,
};
use semreduce_core::rng::Rng;
use semreduce_core::scenegen::{
    generate_scene, steering_to_degrees, Dataset, DatasetConfig, GeneratorConfig, SceneParams,
    Split, Weather,
};
use semreduce_core::semantics::{Label, LabelSetKind, RemapTable, SemanticMap};

const FD_STEP: f64 = 1e-5;

/// The training-heavy criteria hold this lock so their wall-clock budgets
/// are measured with the machine to themselves; the cheap criteria still
/// run freely in parallel.
fn heavy_lock() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(std::sync::PoisonError::into_inner)
}

fn random_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

/// Analytic-vs-numeric max relative error for a scalar function of several
/// named tensors.
fn fd_error<F>(inputs: &[(&[usize], Vec<f64>)], f: F) -> f64
where
    F: Fn(&mut Tape, &[Tensor]) -> Tensor,
{
    let tensors: Vec<Tensor> =
        inputs.iter().map(|(shape, data)| Tensor::param(shape, data.clone()).unwrap()).collect();
    let mut tape = Tape::new();
    let loss = f(&mut tape, &tensors);
    tape.backward(&loss).unwrap();
    let analytic: Vec<f64> = tensors.iter().flat_map(|t| t.grad().unwrap()).collect();

    let point: Vec<f64> = inputs.iter().flat_map(|(_, data)| data.clone()).collect();
    let shapes: Vec<Vec<usize>> = inputs.iter().map(|(s, _)| s.to_vec()).collect();
    let numeric = central_difference(
        |flat: &[f64]| {
            let mut offset = 0;
            let rebuilt: Vec<Tensor> = shapes
                .iter()
                .map(|shape| {
                    let n: usize = shape.iter().product();
                    let t = Tensor::new(shape, flat[offset..offset + n].to_vec()).unwrap();
                    offset += n;
                    t
                })
                .collect();
            let mut tape = Tape::inference();
            f(&mut tape, &rebuilt).item()
        },
        &point,
        FD_STEP,
    );
    max_relative_error(&analytic, &numeric)
}

/// Criterion 1: autodiff gradients match central finite differences with
/// relative error < 1e-4 per op (over >= 100 seeds each) and < 1e-3 for the
/// full steering network on a 13x16x24 input.
#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let op_tol = 1e-4;
    // budget: < 2 min including the full-model sweep below
    let mut worst_op: f64 = 0.0;
    for seed in 0..110u64 {
        let mut rng = Rng::stream(seed, 0xac1);

        // conv2d over input, weight and bias
        let (cin, cout, k) = (rng.range(1, 2), rng.range(1, 2), rng.range(1, 3));
        let (h, w) = (rng.range(k, k + 2), rng.range(k, k + 2));
        let (stride, padding) = (rng.range(1, 2), rng.range(0, 1));
        let oh = (h + 2 * padding - k) / stride + 1;
        let ow = (w + 2 * padding - k) / stride + 1;
        let x = random_vec(&mut rng, cin * h * w, -1.0, 1.0);
        let wt = random_vec(&mut rng, cout * cin * k * k, -1.0, 1.0);
        let b = random_vec(&mut rng, cout, -0.5, 0.5);
        let target =
            Tensor::new(&[cout * oh * ow], random_vec(&mut rng, cout * oh * ow, -1.0, 1.0)).unwrap();
        let err = fd_error(
            &[(&[cin, h, w], x), (&[cout, cin, k, k], wt), (&[cout], b)],
            move |tape, ts| {
                let y = tape.conv2d(&ts[0], &ts[1], &ts[2], stride, padding).unwrap();
                let flat = tape.reshape(&y, &[y.len()]).unwrap();
                tape.mse(&flat, &target).unwrap()
            },
        );
        worst_op = worst_op.max(err);

        // maxpool + relu + linear + tanh + mse composition
        let x = random_vec(&mut rng, 16, -1.0, 1.0);
        let wt = random_vec(&mut rng, 8, -1.0, 1.0);
        let b = random_vec(&mut rng, 2, -0.5, 0.5);
        let target = Tensor::new(&[2], random_vec(&mut rng, 2, -1.0, 1.0)).unwrap();
        let err = fd_error(&[(&[1, 4, 4], x), (&[2, 4], wt), (&[2], b)], move |tape, ts| {
            let p = tape.maxpool2d(&ts[0], 2, 2).unwrap();
            let r = tape.relu(&p);
            let flat = tape.reshape(&r, &[4]).unwrap();
            let lin = tape.linear(&flat, &ts[1], &ts[2]).unwrap();
            let t = tape.tanh(&lin);
            tape.mse(&t, &target).unwrap()
        });
        worst_op = worst_op.max(err);

        // cross-entropy, upsample, concat, add, scale
        let c = rng.range(2, 4);
        let logits = random_vec(&mut rng, c * 2 * 2, -1.5, 1.5);
        let extra = random_vec(&mut rng, 2, -1.0, 1.0);
        let labels: Vec<u8> = (0..16).map(|_| rng.below(c) as u8).collect();
        let err = fd_error(&[(&[c, 2, 2], logits), (&[2], extra)], move |tape, ts| {
            let up = tape.upsample_nearest2(&ts[0]).unwrap();
            let ce = tape.cross_entropy_pixels(&up, &labels).unwrap();
            let doubled = tape.scale(&ts[1], 0.5);
            let summed = tape.add(&doubled, &ts[1]).unwrap();
            let joined = tape.concat(&[ce, summed]).unwrap();
            let target = Tensor::zeros(&[3]);
            tape.mse(&joined, &target).unwrap()
        });
        worst_op = worst_op.max(err);
    }
    assert!(worst_op < op_tol, "per-op FD error {worst_op}");

    // full model on a 13x16x24 input: d(loss)/d(input) fully, plus sampled
    // coordinates of every parameter tensor
    let model_tol = 1e-3;
    let mut worst_model: f64 = 0.0;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for seed in 0..100u64 {
        let mut rng = Rng::stream(seed, 0xac2);
        let config = SteerNetConfig::seg13(16, 24);
        let net = SteerNet::init(config, seed).unwrap();
        let x = Tensor::param(&[13, 16, 24], random_vec(&mut rng, 13 * 16 * 24, 0.0, 1.0)).unwrap();
        let target = Tensor::scalar(rng.uniform(-0.8, 0.8));

        let mut tape = Tape::new();
        let pred = net.forward(&mut tape, &x).unwrap();
        let loss = tape.mse(&pred, &target).unwrap();
        tape.backward(&loss).unwrap();

        let mut probes: Vec<(Tensor, usize)> = Vec::new();
        for _ in 0..6 {
            probes.push((x.clone(), rng.below(x.len())));
        }
        for p in net.params() {
            let len = p.len();
            for _ in 0..3 {
                probes.push((p.clone(), rng.below(len)));
            }
        }
        for (tensor, idx) in probes {
            let analytic = tensor.grad().expect("populated grad")[idx];
            let original = tensor.data()[idx];
            let eval_at = |v: f64| {
                let mut data = tensor.to_vec();
                data[idx] = v;
                tensor.set_data(data).unwrap();
                let mut tape = Tape::inference();
                let pred = net.forward(&mut tape, &x).unwrap();
                tape.mse(&pred, &target).unwrap().item()
            };
            let plus = eval_at(original + FD_STEP);
            let mid = eval_at(original);
            let minus = eval_at(original - FD_STEP);
            eval_at(original);
            // Central differences are only an oracle where the function is
            // differentiable. A probe that straddles a relu kink or flips a
            // maxpool argmax shows disagreeing one-sided slopes; skip it.
            let slope_plus = (plus - mid) / FD_STEP;
            let slope_minus = (mid - minus) / FD_STEP;
            let slope_scale = slope_plus.abs().max(slope_minus.abs()).max(1e-3);
            if (slope_plus - slope_minus).abs() / slope_scale > 1e-3 {
                skipped += 1;
                continue;
            }
            checked += 1;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst_model = worst_model.max(max_relative_error(&[analytic], &[numeric]));
        }
    }
    assert!(worst_model < model_tol, "full-model FD error {worst_model}");
    // the kink guard must only prune a small minority of probes
    assert!(
        skipped * 5 < checked,
        "too many kink-straddling probes skipped ({skipped} of {})",
        checked + skipped
    );
    println!(
        "criterion 1 PASS: gradient correctness (op err {worst_op:.2e} < 1e-4, model err {worst_model:.2e} < 1e-3) in {:.1?}",
        started.elapsed()
    );
}

fn flagship_config(seed: u64, n: usize) -> DatasetConfig {
    DatasetConfig { master_seed: seed, n, ..Default::default() }
}

fn steer_hp(seed: u64, epochs: usize) -> Hyperparams {
    // lr 0.02 with batch 8 converges reliably within the epoch budget on
    // this generator (larger batches occasionally stall on the plateau
    // where the model reads only the road mass)
    Hyperparams { learning_rate: 0.02, batch_size: 8, epochs, seed }
}

/// Criterion 2: on a 2000-scene 64x96 dataset, the 13-channel steering
/// model reaches test MSE < 0.25 x Var(test steering) within 30 epochs.
#[test]
fn criterion_2_training_viability() {
    let _guard = heavy_lock();
    let started = Instant::now();
    let dataset = Dataset::generate(flagship_config(20_000, 2000)).unwrap();
    let labels: Vec<f64> = dataset.split_scenes(Split::Test).iter().map(|s| s.steering).collect();
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let variance = labels.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / labels.len() as f64;

    let epochs = 10; // within the 30-epoch budget
    let (net, trace) =
        train_steernet(&SteerNetConfig::seg13(64, 96), &dataset, &steer_hp(0, epochs)).unwrap();
    assert_eq!(trace.len(), epochs);
    let test_mse = evaluate_steernet(&net, &dataset, Split::Test).unwrap();
    let threshold = 0.25 * variance;
    assert!(
        test_mse < threshold,
        "test MSE {test_mse:.5} not below 0.25 x var = {threshold:.5}"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 600, "training viability took {elapsed:.1?} (budget 10 min)");
    println!(
        "criterion 2 PASS: training viability (test MSE {test_mse:.5} < {threshold:.5}, {epochs} epochs) in {elapsed:.1?}"
    );
}

struct RankFixture {
    dataset: Dataset,
    checkpoint: semreduce_core::checkpoint::Checkpoint,
    build_time: std::time::Duration,
}

impl RankFixture {
    fn net(&self) -> SteerNet {
        SteerNet::from_checkpoint(&self.checkpoint).expect("fixture checkpoint loads")
    }
}

/// Shared trained model for criteria 3 and 6: seed 0 of the sensitivity
/// study (the other two seeds are trained inside criterion 3). Whichever
/// test arrives first builds it; the stored build time lets each criterion
/// account its own share of the work.
fn rank_fixture() -> &'static RankFixture {
    static FIXTURE: OnceLock<RankFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let build_started = Instant::now();
        let dataset = Dataset::generate(flagship_config(31_000, 560)).unwrap();
        let (net, _) =
            train_steernet(&SteerNetConfig::seg13(64, 96), &dataset, &steer_hp(0, 12)).unwrap();
        RankFixture {
            dataset,
            checkpoint: net.to_checkpoint(),
            build_time: build_started.elapsed(),
        }
    })
}

/// Criterion 3: over 3 independent training seeds, road lines rank in the
/// top 2 of 13 by delta-MSE, and vegetation/buildings/walls each stay below
/// 0.1 x the maximum delta.
#[test]
fn criterion_3_sensitivity_ordering() {
    let _guard = heavy_lock();
    let started = Instant::now();
    let fixture_call = Instant::now();
    let fixture = rank_fixture();
    let fixture_wait = fixture_call.elapsed();
    let mut summaries = Vec::new();
    for seed in 0..3u64 {
        // three independent training seeds over the shared dataset
        let report = if seed == 0 {
            sensitivity_scan(&fixture.net(), &fixture.dataset, Split::Test, AblationMode::Zero)
                .unwrap()
        } else {
            let (net, _) =
                train_steernet(&SteerNetConfig::seg13(64, 96), &fixture.dataset, &steer_hp(seed, 12))
                    .unwrap();
            sensitivity_scan(&net, &fixture.dataset, Split::Test, AblationMode::Zero).unwrap()
        };

        let rank = report.rank_of(Label::RoadLines.id()).unwrap();
        let max_delta = report.max_delta();
        assert!(
            rank < 2,
            "seed {seed}: road lines rank {} (deltas: {:?})",
            rank + 1,
            report
                .entries
                .iter()
                .map(|e| format!("{}={:.5}", e.label, e.delta_mse))
                .collect::<Vec<_>>()
        );
        for label in [Label::Vegetation, Label::Buildings, Label::Walls] {
            let delta = report.entry(label.id()).unwrap().delta_mse;
            assert!(
                delta < 0.1 * max_delta,
                "seed {seed}: {} delta {delta:.5} vs 0.1 x max {:.5}",
                label.name(),
                0.1 * max_delta
            );
        }
        summaries.push(format!(
            "seed {seed}: road_lines #{} (delta {:.4}, max {:.4})",
            rank + 1,
            report.entry(Label::RoadLines.id()).unwrap().delta_mse,
            max_delta
        ));
    }
    // one fixture build is always charged to this criterion, whether or not
    // another test happened to build it first
    let attributable = started.elapsed() - fixture_wait + fixture.build_time;
    assert!(
        attributable.as_secs() < 300,
        "sensitivity ordering took {attributable:.1?} (budget 5 min)"
    );
    println!(
        "criterion 3 PASS: sensitivity ordering [{}] in {attributable:.1?}",
        summaries.join("; ")
    );
}

/// Criterion 4: for a constructed net with nonzero weights only on the
/// road-lines channel, ablating any other label changes the error by
/// exactly zero and ablating road lines increases it.
#[test]
fn criterion_4_sensitivity_oracle() {
    let started = Instant::now();
    let dataset = Dataset::generate(flagship_config(40_000, 60)).unwrap();

    // the constructed net: conv1 reads only road lines as a local density,
    // conv2/conv3 pass through, and a +/- column readout (split across two
    // relu units) is calibrated against the test scenes
    let (h, w) = (64usize, 96usize);
    let config = SteerNetConfig { channels: 13, f1: 1, f2: 1, f3: 1, f4: 2, height: h, width: w };
    let net = SteerNet::init(config, 1).unwrap();
    let mut w1 = vec![0.0; net.conv1_w.len()];
    let plane = 25;
    let base = Label::RoadLines.id() as usize * plane;
    for i in 0..plane {
        w1[base + i] = 1.0 / 25.0;
    }
    net.conv1_w.set_data(w1).unwrap();
    net.conv1_b.set_data(vec![0.0]).unwrap();
    for (wt, bt) in [(&net.conv2_w, &net.conv2_b), (&net.conv3_w, &net.conv3_b)] {
        let mut wv = vec![0.0; wt.len()];
        wv[2 * 5 + 2] = 1.0;
        wt.set_data(wv).unwrap();
        bt.set_data(vec![0.0]).unwrap();
    }
    let (ph, pw) = (h / 8, w / 8);
    let mut f1 = vec![0.0; 2 * ph * pw];
    for y in 0..ph {
        for x in 0..pw {
            let v = x as f64 - (pw as f64 - 1.0) / 2.0;
            f1[y * pw + x] = v;
            f1[ph * pw + y * pw + x] = -v;
        }
    }
    net.fc1_w.set_data(f1).unwrap();
    net.fc1_b.set_data(vec![0.0, 0.0]).unwrap();
    net.fc2_b.set_data(vec![0.0]).unwrap();
    net.fc2_w.set_data(vec![1.0, -1.0]).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for scene in dataset.split_scenes(Split::Test) {
        let x = scene.semantic.one_hot().into_tensor();
        let s = net.predict(&x).unwrap().atanh();
        num += s * scene.steering;
        den += s * s;
    }
    let gain = num / den.max(1e-12);
    net.fc2_w.set_data(vec![gain, -gain]).unwrap();

    let report = sensitivity_scan(&net, &dataset, Split::Test, AblationMode::Zero).unwrap();
    let mut road_lines_delta = f64::NAN;
    for entry in &report.entries {
        if entry.label_id == Label::RoadLines.id() {
            road_lines_delta = entry.delta_mse;
            assert!(entry.delta_mse > 0.0, "road lines delta {}", entry.delta_mse);
        } else {
            assert_eq!(
                entry.delta_mse, 0.0,
                "{} delta must be exactly 0, got {}",
                entry.label, entry.delta_mse
            );
        }
    }
    println!(
        "criterion 4 PASS: sensitivity oracle (road lines delta {road_lines_delta:.5} > 0, all others exactly 0) in {:.1?}",
        started.elapsed()
    );
}

/// Criterion 5: over 3 paired runs on the same data and seeds, the remapped
/// 7-class modular pipeline's test MSE is at most 1.15 x the all-labels
/// pipeline's.
#[test]
fn criterion_5_remapping_parity() {
    let _guard = heavy_lock();
    let started = Instant::now();
    // a 32x48 geometry keeps six perception trainings inside the budget
    // while leaving the task identical in structure
    let dataset13 = Dataset::generate(DatasetConfig {
        master_seed: 50_000,
        n: 400,
        generator: GeneratorConfig {
            height: 32,
            width: 48,
            road_half_width: 6.0,
            road_width_jitter: 1.5,
            edge_wobble_amp: 1.0,
            edge_asym_amp: 3.5,
            sidewalk_width: 3.0,
            delta_max: 4.0,
            steer_gain_delta: 0.1125,
            ..Default::default()
        },
        ..Default::default()
    })
    .unwrap();
    let dataset7 = dataset13.remapped();
    let label_variance = {
        let test: Vec<f64> = dataset13.split_scenes(Split::Test).iter().map(|s| s.steering).collect();
        let mean = test.iter().sum::<f64>() / test.len() as f64;
        test.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / test.len() as f64
    };

    let mut ratios = Vec::new();
    let mut all_tests = Vec::new();
    let mut remapped_tests = Vec::new();
    for seed in 0..3u64 {
        let hp = Hyperparams { learning_rate: 0.1, batch_size: 8, epochs: 16, seed };
        let control_hp = Hyperparams { learning_rate: 0.02, epochs: 40, seed, ..Hyperparams::control() };

        let (perc13, _) =
            train_perception(&PerceptionConfig::new(13, 32, 48), &dataset13, &hp).unwrap();
        let (head13, _) = train_control(&perc13, &dataset13, &control_hp).unwrap();
        let mse13 = evaluate_modular(&perc13, &head13, &dataset13, Split::Test).unwrap();

        let (perc7, _) =
            train_perception(&PerceptionConfig::new(7, 32, 48), &dataset7, &hp).unwrap();
        let (head7, _) = train_control(&perc7, &dataset7, &control_hp).unwrap();
        let mse7 = evaluate_modular(&perc7, &head7, &dataset7, Split::Test).unwrap();

        // parity between two broken pipelines would be vacuous; a stalled
        // pipeline sits at ~1.0x the label variance, a learning one well
        // below 0.7x
        assert!(
            mse13 < 0.7 * label_variance && mse7 < 0.7 * label_variance,
            "seed {seed}: pipelines too weak for a meaningful comparison (mse13 {mse13:.4}, mse7 {mse7:.4}, var {label_variance:.4})"
        );

        ratios.push(mse7 / mse13);
        all_tests.push(mse13);
        remapped_tests.push(mse7);
    }
    let mean_all = all_tests.iter().sum::<f64>() / 3.0;
    let mean_remapped = remapped_tests.iter().sum::<f64>() / 3.0;
    let ratio = mean_remapped / mean_all;
    assert!(
        ratio <= 1.15,
        "remapped/all-labels test MSE ratio {ratio:.3} over 3 paired runs (per-run: {ratios:?})"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 1800, "remapping parity took {elapsed:.1?} (budget 30 min)");
    println!(
        "criterion 5 PASS: remapping parity (mean test MSE x1e-3: all {:.2}, remapped {:.2}, ratio {ratio:.3} <= 1.15) in {elapsed:.1?}",
        mean_all * 1e3,
        mean_remapped * 1e3
    );
}

/// Criterion 6: the trained model's Grad-CAM mass concentrates near road
/// lines (>= 2x the mean intensity over vegetation/building pixels across
/// 50 test scenes), and the analytic left-half construction keeps >= 95% of
/// its mass in the left half.
#[test]
fn criterion_6_grad_cam_attribution() {
    let _guard = heavy_lock();
    let started = Instant::now();
    let fixture_call = Instant::now();
    let fixture = rank_fixture();
    let fixture_wait = fixture_call.elapsed();
    let test = fixture.dataset.split_scenes(Split::Test);
    assert!(test.len() >= 50);

    let net = fixture.net();
    let mut line_sum = 0.0;
    let mut line_count = 0usize;
    let mut distractor_sum = 0.0;
    let mut distractor_count = 0usize;
    for scene in test.iter().take(50) {
        let x = steer_input(scene, 13).unwrap();
        let cam = grad_cam(&net, &x, 7, false).unwrap();
        let m = &scene.semantic;
        let (h, w) = (m.height(), m.width());
        // pixels within Chebyshev distance 2 of any road-line pixel
        let mut near_line = vec![false; h * w];
        for y in 0..h {
            for xx in 0..w {
                if m.get(y, xx) == Label::RoadLines.id() {
                    for dy in y.saturating_sub(2)..(y + 3).min(h) {
                        for dx in xx.saturating_sub(2)..(xx + 3).min(w) {
                            near_line[dy * w + dx] = true;
                        }
                    }
                }
            }
        }
        for y in 0..h {
            for xx in 0..w {
                let v = cam.get(y, xx);
                if near_line[y * w + xx] {
                    line_sum += v;
                    line_count += 1;
                } else {
                    let label = m.get(y, xx);
                    if label == Label::Vegetation.id() || label == Label::Buildings.id() {
                        distractor_sum += v;
                        distractor_count += 1;
                    }
                }
            }
        }
    }
    assert!(line_count > 0 && distractor_count > 0);
    let line_mean = line_sum / line_count as f64;
    let distractor_mean = distractor_sum / distractor_count as f64;
    assert!(
        line_mean >= 2.0 * distractor_mean,
        "near-line mean {line_mean:.4} vs distractor mean {distractor_mean:.4}"
    );

    // analytic construction: identity 1x1 conv, output = spatial mean
    let (h, w) = (8usize, 12);
    let x = Tensor::from_fn(&[1, h, w], |i| if i % w < w / 2 { 1.0 } else { 0.0 });
    let weight = Tensor::param(&[1, 1, 1, 1], vec![1.0]).unwrap();
    let bias = Tensor::param(&[1], vec![0.0]).unwrap();
    let mut tape = Tape::new();
    let maps = tape.conv2d(&x, &weight, &bias, 1, 0).unwrap();
    let flat = tape.reshape(&maps, &[h * w]).unwrap();
    let mean_w = Tensor::filled(&[1, h * w], 1.0 / (h * w) as f64);
    let mean_b = Tensor::zeros(&[1]);
    let y = tape.linear(&flat, &mean_w, &mean_b).unwrap();
    tape.backward(&y).unwrap();
    let cam = cam_from_activations(&maps, h, w).unwrap();
    let left: f64 = (0..h)
        .flat_map(|yy| (0..w / 2).map(move |xx| (yy, xx)))
        .map(|(yy, xx)| cam.get(yy, xx))
        .sum();
    let fraction = left / cam.total_mass();
    assert!(fraction >= 0.95, "left-half mass fraction {fraction}");

    // the shared fixture is charged to criterion 3; count only this
    // criterion's own scans against its 2-minute budget
    let own = started.elapsed() - fixture_wait;
    assert!(own.as_secs() < 120, "grad-cam attribution took {own:.1?} (budget 2 min)");
    println!(
        "criterion 6 PASS: grad-cam attribution (near-line/distractor ratio {:.2} >= 2, left-half mass {:.3} >= 0.95) in {own:.1?}",
        line_mean / distractor_mean,
        fraction
    );
}

/// Criterion 7: the invariant suites. One-hot/argmax inversion, remap
/// idempotence, camouflage validity, weather-invariant semantics, byte-exact
/// dataset and checkpoint round trips, deterministic reruns.
#[test]
fn criterion_7_invariant_suites() {
    let started = Instant::now();
    let mut rng = Rng::new(70_000);

    // one-hot / argmax inversion and camouflage validity on random maps
    for _ in 0..50 {
        let (h, w) = (rng.range(2, 6), rng.range(2, 8));
        let labels: Vec<u8> = (0..h * w).map(|_| rng.below(13) as u8).collect();
        let map = SemanticMap::new(h, w, LabelSetKind::Full13, labels).unwrap();
        assert_eq!(map.one_hot().argmax_map(), map);

        let once = map.remap(RemapTable::table1());
        assert_eq!(once.remap(RemapTable::table1()), once);

        let oh = map.one_hot();
        let camo = oh.camouflage_channel(Label::RoadLines.id(), Label::Roads.id()).unwrap();
        assert!(camo.is_valid_one_hot());
        let zeroed = oh.zero_channel(Label::Roads.id()).unwrap();
        assert_eq!(
            zeroed.zero_channel(Label::Roads.id()).unwrap().tensor().to_vec(),
            zeroed.tensor().to_vec()
        );
    }

    // weather invariance of semantics, exact
    let config = GeneratorConfig::default();
    for seed in 0..10u64 {
        let mut srng = Rng::stream(seed, 0x7e);
        let p = SceneParams {
            curvature: srng.uniform(-0.05, 0.05),
            offset: srng.uniform(-6.0, 6.0),
            seed,
            weather: Weather::Sunny,
            height: 64,
            width: 96,
        };
        let sunny = generate_scene(&p, &config).unwrap();
        let rainy =
            generate_scene(&SceneParams { weather: Weather::Rainy, ..p }, &config).unwrap();
        assert_eq!(sunny.semantic, rainy.semantic, "seed {seed}");
        assert_ne!(sunny.rgb, rainy.rgb, "seed {seed}");
    }

    // byte-exact dataset round trip and deterministic regeneration
    let dir = std::env::temp_dir().join("semreduce_acceptance_ds");
    let dir2 = std::env::temp_dir().join("semreduce_acceptance_ds2");
    let _ = std::fs::remove_dir_all(&dir);
    let _ = std::fs::remove_dir_all(&dir2);
    let ds = Dataset::generate(flagship_config(70_001, 8)).unwrap();
    ds.write(&dir).unwrap();
    let loaded = semreduce_core::scenegen::load_dataset(&dir).unwrap();
    loaded.write(&dir2).unwrap();
    let read_all = |d: &std::path::Path| -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        fn walk(dir: &std::path::Path, base: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
            for entry in std::fs::read_dir(dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    walk(&path, base, out);
                } else {
                    out.push((
                        path.strip_prefix(base).unwrap().to_string_lossy().into_owned(),
                        std::fs::read(&path).unwrap(),
                    ));
                }
            }
        }
        walk(d, d, &mut files);
        files.sort_by(|a, b| a.0.cmp(&b.0));
        files
    };
    assert_eq!(read_all(&dir), read_all(&dir2), "dataset write/load/write round trip");
    let regenerated = Dataset::generate(flagship_config(70_001, 8)).unwrap();
    for (a, b) in ds.scenes.iter().zip(&regenerated.scenes) {
        assert_eq!(a.semantic, b.semantic);
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.steering.to_bits(), b.steering.to_bits());
    }
    let _ = std::fs::remove_dir_all(&dir);
    let _ = std::fs::remove_dir_all(&dir2);

    // byte-exact checkpoint round trip and deterministic training rerun
    let tiny = DatasetConfig {
        master_seed: 70_002,
        n: 8,
        generator: GeneratorConfig {
            height: 16,
            width: 32,
            road_half_width: 5.0,
            road_width_jitter: 1.0,
            edge_wobble_amp: 0.5,
            edge_asym_amp: 1.0,
            sidewalk_width: 2.0,
            delta_max: 3.0,
            steer_gain_delta: 0.15,
            ..Default::default()
        },
        ..Default::default()
    };
    let tiny_ds = Dataset::generate(tiny).unwrap();
    let hp = Hyperparams { epochs: 2, ..Hyperparams::steer() };
    let (net_a, trace_a) = train_steernet(&SteerNetConfig::seg13(16, 32), &tiny_ds, &hp).unwrap();
    let (net_b, trace_b) = train_steernet(&SteerNetConfig::seg13(16, 32), &tiny_ds, &hp).unwrap();
    let bytes_a = net_a.to_checkpoint().to_bytes();
    assert_eq!(bytes_a, net_b.to_checkpoint().to_bytes(), "deterministic rerun");
    for (a, b) in trace_a.iter().zip(&trace_b) {
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
    }
    let back = semreduce_core::checkpoint::Checkpoint::from_bytes(&bytes_a).unwrap();
    assert_eq!(back.to_bytes(), bytes_a, "checkpoint bytes round trip");

    println!("criterion 7 PASS: invariant suites in {:.1?}", started.elapsed());
}

/// Criterion 8: steering 1.0 corresponds to exactly 70 degrees.
#[test]
fn criterion_8_degrees_contract() {
    let started = Instant::now();
    assert_eq!(steering_to_degrees(1.0).unwrap(), 70.0);
    assert_eq!(steering_to_degrees(-1.0).unwrap(), -70.0);
    assert_eq!(steering_to_degrees(0.0).unwrap(), 0.0);
    assert_eq!(steering_to_degrees(0.5).unwrap(), 35.0);
    assert!(steering_to_degrees(1.0 + 1e-12).is_err());
    println!("criterion 8 PASS: degrees contract (1.0 <-> 70 degrees, exact) in {:.1?}", started.elapsed());
}
