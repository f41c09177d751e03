//! Generate a dataset from a scenario spec, normalize it, split it and round
//! it through the CHM1 binary format.
//!
//! ```bash
//! cargo run --release --example dataset_generation
//! ```

use chansynth::datasets::{
    dataset_scale, generate_dataset, normalize, read_dataset, split, write_dataset, PathRange,
    ScenarioSpec,
};
use chansynth::ppgc::ArrayConfig;

fn main() -> Result<(), chansynth::Error> {
    let spec = ScenarioSpec {
        array: ArrayConfig::new(16, 16),
        seed: 42,
        paths: vec![
            PathRange { gain: (0.5, 1.0), theta_a: (0.4, 0.8), theta_d: (0.1, 0.3) },
            PathRange { gain: (0.5, 1.0), theta_a: (-0.8, -0.4), theta_d: (-0.9, -0.5) },
        ],
    };

    let ds = generate_dataset(&spec, 500)?;
    println!("generated {} channels of shape {:?}", ds.len(), ds.shape());
    println!("rms Frobenius norm: {:.4}", dataset_scale(&ds));

    let first = &ds.params.as_ref().unwrap()[0];
    println!("ground truth of sample 0:");
    for p in first {
        println!("  gain {:.3}, arrival {:+.3}, departure {:+.3}", p.gain, p.theta_a, p.theta_d);
    }

    let normed = normalize(&ds)?;
    println!("\nnormalized by {:.4}; mean power is now 1", normed.scale);

    let (train, test) = split(&normed, 0.8, 7)?;
    println!("split into {} train / {} test", train.len(), test.len());

    let dir = std::env::temp_dir().join("chansynth_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("demo.chm");
    write_dataset(&train, &path)?;
    let back = read_dataset(&path)?;
    println!(
        "\nwrote {} -> read back {} samples, scale {:.4} (f32 storage)",
        train.len(),
        back.len(),
        back.scale
    );
    Ok(())
}
