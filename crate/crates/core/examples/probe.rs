use advgrad_core::data::synth_dataset;
use advgrad_core::train::{train, ArchPreset, TrainConfig};

fn main() {
    let ds = synth_dataset(10, 12, 784, 6.0, 5)
        .unwrap()
        .reshaped(&[1, 28, 28])
        .unwrap();
    for lr in [0.5, 0.1, 0.02] {
        for mom in [0.9, 0.0] {
            let cfg = TrainConfig {
                arch: ArchPreset::MlpSmall,
                seed: 2,
                epochs: 12,
                batch_size: 16,
                learning_rate: lr,
                momentum: mom,
                dataset: "blobs".into(),
            };
            let out = train(&ds, None, &cfg).unwrap();
            println!(
                "lr={lr} mom={mom}: acc={:.3} losses={:?}",
                out.train_accuracy,
                out.epoch_losses.iter().map(|l| (l * 100.0).round() / 100.0).collect::<Vec<_>>()
            );
        }
    }
}
