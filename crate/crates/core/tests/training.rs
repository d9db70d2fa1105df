use resgene_core::geno_io::GenotypeDataset;
use resgene_core::net::{ModelConfig, Network};
use resgene_core::synth::{generate, SynthSpec};
use resgene_core::tensorize::{plan_layout, LayoutMode, SnpLayout};
use resgene_core::train::{predict_rows, train_fold, InputSet, TrainConfig};

fn setup() -> (GenotypeDataset, SnpLayout, ModelConfig) {
    let spec = SynthSpec {
        n: 64,
        d: 16,
        causal: 4,
        h2: 0.9,
        seed: 5,
        ..SynthSpec::default()
    };
    let ds = generate(&spec).unwrap().dataset;
    let layout = plan_layout(16, LayoutMode::Image2d, 1).unwrap();
    let mut cfg = ModelConfig::resnet18(1, layout.side);
    cfg.stage_widths = vec![8, 8, 16, 16];
    cfg.init_seed = 3;
    (ds, layout, cfg)
}

fn targets(ds: &GenotypeDataset) -> (Vec<usize>, Vec<f64>) {
    let view = ds.trait_view("PH").unwrap();
    (view.rows, view.targets)
}

#[test]
fn loss_falls_over_twenty_epochs() {
    let (ds, layout, cfg) = setup();
    let inputs = InputSet::<f64>::new(&ds, &layout).unwrap();
    let mut net = Network::new(cfg).unwrap();
    let (rows, y) = targets(&ds);
    let train = TrainConfig {
        batch_size: 16,
        learning_rate: 0.01,
        momentum: 0.9,
        epochs: 20,
        seed: 1,
        ..Default::default()
    };
    let out = train_fold(&mut net, &inputs, &rows, &y, &train).unwrap();
    assert_eq!(out.loss_trace.len(), 20);
    assert!(
        out.loss_trace[19] < out.loss_trace[0],
        "{:?}",
        out.loss_trace
    );
}

#[test]
fn zero_learning_rate_leaves_weights_untouched() {
    let (ds, layout, cfg) = setup();
    let inputs = InputSet::<f32>::new(&ds, &layout).unwrap();
    let mut net = Network::new(cfg).unwrap();
    let before = net.params().to_vec();
    let (rows, y) = targets(&ds);
    let train = TrainConfig {
        learning_rate: 0.0,
        momentum: 0.5,
        epochs: 2,
        ..Default::default()
    };
    train_fold(&mut net, &inputs, &rows, &y, &train).unwrap();
    assert_eq!(net.params(), &before[..]);
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let (ds, layout, cfg) = setup();
    let inputs = InputSet::<f32>::new(&ds, &layout).unwrap();
    let (rows, y) = targets(&ds);
    let train = TrainConfig {
        batch_size: 8,
        epochs: 3,
        seed: 11,
        ..Default::default()
    };
    let run = || {
        let mut net = Network::new(cfg.clone()).unwrap();
        let out = train_fold(&mut net, &inputs, &rows, &y, &train).unwrap();
        (
            out.loss_trace,
            predict_rows(&net, &inputs, &rows, &out.scaler, 16).unwrap(),
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn predictions_return_to_the_target_scale() {
    let (ds, layout, cfg) = setup();
    let inputs = InputSet::<f64>::new(&ds, &layout).unwrap();
    let (rows, y) = targets(&ds);
    let shifted: Vec<f64> = y.iter().map(|v| 1000.0 + 10.0 * v).collect();
    let mut net = Network::new(cfg).unwrap();
    let train = TrainConfig {
        batch_size: 16,
        learning_rate: 0.01,
        epochs: 5,
        ..Default::default()
    };
    let out = train_fold(&mut net, &inputs, &rows, &shifted, &train).unwrap();
    let pred = predict_rows(&net, &inputs, &rows, &out.scaler, 32).unwrap();
    let mean = pred.iter().sum::<f64>() / pred.len() as f64;
    assert!((mean - 1000.0).abs() < 50.0, "mean prediction {mean}");
}
