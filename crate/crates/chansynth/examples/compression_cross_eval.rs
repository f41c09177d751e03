//! Downstream check that generated data stands in for real data: train
//! channel compressors on real and generated sets from two scenarios and
//! cross-evaluate all pairs. Matching real/generated pairs should give the
//! low NMSE entries.
//!
//! ```bash
//! cargo run --release --example compression_cross_eval
//! ```

use chansynth::compressor::{cross_eval, CompressorConfig};
use chansynth::datasets::{generate_dataset, split, PathRange, ScenarioSpec};
use chansynth::genmodel::{sample_channels, train, VaeConfig};
use chansynth::ppgc::ArrayConfig;

fn scenario(sign: f64, seed: u64) -> ScenarioSpec {
    let band = ((sign * 0.3).min(sign * 1.1), (sign * 0.3).max(sign * 1.1));
    ScenarioSpec {
        array: ArrayConfig::new(8, 8),
        seed,
        paths: vec![PathRange {
            gain: (0.5, 1.0),
            theta_a: band,
            theta_d: band,
        }],
    }
}

fn main() -> Result<(), chansynth::Error> {
    // Scenario A lives in positive angles, scenario B in negative ones.
    let real_a = generate_dataset(&scenario(1.0, 1), 600)?;
    let real_b = generate_dataset(&scenario(-1.0, 2), 600)?;

    let mut gen_config = VaeConfig::linearized(32, 7);
    gen_config.hidden = vec![128, 64];
    gen_config.latent_dim = 16;
    gen_config.batch_size = 16;
    gen_config.epochs = 20;

    println!("training a generator per scenario ...");
    let (train_a, test_a) = split(&real_a, 0.8, 3)?;
    let (train_b, test_b) = split(&real_b, 0.8, 3)?;
    let gen_a = sample_channels(&train(&train_a, &gen_config)?, 600, 11)?.0;
    let gen_b = sample_channels(&train(&train_b, &gen_config)?, 600, 12)?.0;

    let compressor = CompressorConfig {
        code_dim: 16,
        hidden: vec![128],
        epochs: 40,
        batch_size: 32,
        learning_rate: 1e-3,
        seed: 0,
    };
    println!("cross-evaluating 4 compressors x 4 test sets ...\n");
    let table = cross_eval(
        &[
            ("real_a".into(), train_a),
            ("real_b".into(), train_b),
            ("gen_a".into(), gen_a),
            ("gen_b".into(), gen_b),
        ],
        &[
            ("real_a".into(), test_a),
            ("real_b".into(), test_b),
        ],
        &compressor,
    )?;
    print!("{}", table.to_csv());
    println!("\ncompressors trained on gen_a transfer to real_a but not real_b, and vice versa.");
    Ok(())
}
