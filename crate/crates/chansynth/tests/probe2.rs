use chansynth::compressor::{cross_eval, CompressorConfig};
use chansynth::datasets::{generate_dataset, split, PathRange, ScenarioSpec};
use chansynth::genmodel::{sample_channels, train, VaeConfig};
use chansynth::ppgc::ArrayConfig;
use std::time::Instant;

fn spec_a(array: ArrayConfig, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        array,
        seed,
        paths: vec![
            PathRange { gain: (0.5, 1.0), theta_a: (0.5, 0.9), theta_d: (-0.9, -0.5) },
            PathRange { gain: (0.5, 1.0), theta_a: (-0.9, -0.5), theta_d: (0.5, 0.9) },
        ],
    }
}

fn spec_b(array: ArrayConfig, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        array,
        seed,
        paths: vec![
            PathRange { gain: (0.5, 1.0), theta_a: (-1.4, -1.0), theta_d: (-0.4, -0.05) },
            PathRange { gain: (0.5, 1.0), theta_a: (-0.4, -0.05), theta_d: (-1.4, -1.0) },
        ],
    }
}

#[test]
#[ignore]
fn probe_criterion7() {
    let t0 = Instant::now();
    let array = ArrayConfig::new(16, 16);
    let real_a = generate_dataset(&spec_a(array, 701), 2500).unwrap();
    let real_b = generate_dataset(&spec_b(array, 702), 2500).unwrap();
    let (train_a, test_a) = split(&real_a, 0.8, 1).unwrap();
    let (train_b, test_b) = split(&real_b, 0.8, 1).unwrap();

    let mut gen_config = VaeConfig::linearized(32, 71);
    gen_config.hidden = vec![256, 128];
    gen_config.latent_dim = 32;
    gen_config.batch_size = 16;
    gen_config.epochs = 30;

    let ckpt_a = train(&train_a, &gen_config).unwrap();
    let ckpt_b = train(&train_b, &gen_config).unwrap();
    println!("generators trained at {:.0}s", t0.elapsed().as_secs_f64());

    let gen_a_train = sample_channels(&ckpt_a, 2000, 11).unwrap().0;
    let gen_a_test = sample_channels(&ckpt_a, 500, 12).unwrap().0;
    let gen_b_train = sample_channels(&ckpt_b, 2000, 13).unwrap().0;
    let gen_b_test = sample_channels(&ckpt_b, 500, 14).unwrap().0;

    let comp_config = CompressorConfig {
        code_dim: 32,
        hidden: vec![256],
        epochs: 60,
        batch_size: 32,
        learning_rate: 1e-3,
        seed: 5,
    };
    let table = cross_eval(
        &[
            ("real_a".into(), train_a),
            ("real_b".into(), train_b),
            ("gen_a".into(), gen_a_train),
            ("gen_b".into(), gen_b_train),
        ],
        &[
            ("real_a".into(), test_a),
            ("real_b".into(), test_b),
            ("gen_a".into(), gen_a_test),
            ("gen_b".into(), gen_b_test),
        ],
        &comp_config,
    )
    .unwrap();
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
    print!("{}", table.to_csv());
}
