use gtce::trainer::{generate_dataset, train, SyntheticConfig, ToyModel};

#[test]
fn easy_preset_trains() {
    let cfg = SyntheticConfig::easy();
    let data = generate_dataset(2024, 16, &cfg).unwrap();
    let model = ToyModel::zeros(cfg.feature_dim(), cfg.vocab, cfg.num_transitions());
    let out = train(model, &data, 200, 0.1).unwrap();
    let first = out.log.first().unwrap();
    let last = out.log.last().unwrap();
    for r in out.log.iter().step_by(20) {
        eprintln!("{r:?}");
    }
    eprintln!("{last:?}");
    assert!(last.mean_loss < 0.1 * first.mean_loss);
    assert!(last.token_accuracy >= 0.9);
}
