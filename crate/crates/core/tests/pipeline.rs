//! Modular-pipeline integration: the perception module's reconstruction
//! quality on both label sets, and the latent control head end to end.

use semreduce_core::models::{
    evaluate_modular, evaluate_perception, train_control, train_perception, Hyperparams,
    PerceptionConfig,
};
use semreduce_core::scenegen::{Dataset, DatasetConfig, GeneratorConfig, Split};

fn small_dataset(seed: u64) -> Dataset {
    Dataset::generate(DatasetConfig {
        master_seed: seed,
        n: 150,
        generator: GeneratorConfig {
            height: 32,
            width: 48,
            road_half_width: 6.0,
            road_width_jitter: 1.5,
            edge_wobble_amp: 1.0,
            edge_asym_amp: 3.0,
            sidewalk_width: 3.0,
            delta_max: 4.0,
            steer_gain_delta: 0.1125,
            ..Default::default()
        },
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn seven_class_reconstruction_is_no_worse_than_thirteen() {
    // the remapped task is strictly coarser: any confusion inside a merged
    // group becomes correct, so paired training must not lose accuracy
    let ds13 = small_dataset(90);
    let ds7 = ds13.remapped();
    let hp = Hyperparams { learning_rate: 0.05, epochs: 6, seed: 0, ..Hyperparams::perception() };
    let (m13, stats13) = train_perception(&PerceptionConfig::new(13, 32, 48), &ds13, &hp).unwrap();
    let (m7, stats7) = train_perception(&PerceptionConfig::new(7, 32, 48), &ds7, &hp).unwrap();
    assert_eq!(stats13.len(), 6);
    assert_eq!(stats7.len(), 6);
    let (_, acc13) = evaluate_perception(&m13, &ds13, Split::Val).unwrap();
    let (_, acc7) = evaluate_perception(&m7, &ds7, Split::Val).unwrap();
    assert!(
        acc7 >= acc13,
        "7-class val pixel accuracy {acc7:.4} below 13-class {acc13:.4}"
    );
}

#[test]
fn modular_pipeline_beats_predicting_zero() {
    let ds = small_dataset(91);
    let hp = Hyperparams { learning_rate: 0.05, epochs: 10, seed: 1, ..Hyperparams::perception() };
    let (perception, _) = train_perception(&PerceptionConfig::new(13, 32, 48), &ds, &hp).unwrap();
    let control_hp = Hyperparams { learning_rate: 0.02, epochs: 40, seed: 1, ..Hyperparams::control() };
    let (head, stats) = train_control(&perception, &ds, &control_hp).unwrap();
    assert_eq!(stats.len(), 40);

    let mse = evaluate_modular(&perception, &head, &ds, Split::Test).unwrap();
    let second_moment = ds
        .split_scenes(Split::Test)
        .iter()
        .map(|s| s.steering * s.steering)
        .sum::<f64>()
        / ds.split_scenes(Split::Test).len() as f64;
    assert!(
        mse < second_moment,
        "modular test MSE {mse:.4} does not beat the zero predictor ({second_moment:.4})"
    );

    // evaluating twice gives the identical value
    let again = evaluate_modular(&perception, &head, &ds, Split::Test).unwrap();
    assert_eq!(mse.to_bits(), again.to_bits());
}
