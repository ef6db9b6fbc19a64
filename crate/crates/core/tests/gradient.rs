use lob_uncertainty::lobdata::Movement;
use lob_uncertainty::neuralnet::{ConvBlock, DropoutMask, Example, InceptionBranch, ModelConfig, Network};
use lob_uncertainty::rng::CounterRng;

fn reduced() -> ModelConfig {
    ModelConfig {
        window: 8,
        input_features: 4,
        conv_blocks: vec![ConvBlock {
            kernel: (1, 2),
            stride: (1, 2),
            filters: 2,
        }],
        inception: vec![
            InceptionBranch::Conv {
                time_kernel: 1,
                filters: 2,
            },
            InceptionBranch::Conv {
                time_kernel: 3,
                filters: 2,
            },
            InceptionBranch::PoolConv { pool: 3, filters: 2 },
        ],
        dropout_rate: 0.2,
        recurrent_units: 4,
        leaky_slope: 0.01,
    }
}

/// Worst relative error `|a − n| / max(|a|, |n|, 1e-6)` over all parameters.
fn worst_error(net: &Network<f64>, batch: &[Example<'_, f64>]) -> (f64, String) {
    let (_, grad) = net.loss_and_grad(batch).unwrap();
    let h = 1e-5;
    let mut worst = (0.0, String::new());
    for (ti, t) in net.weights().tensors.iter().enumerate() {
        for k in 0..t.data.len() {
            let mut plus = net.weights().clone();
            plus.tensors[ti].data[k] += h;
            let mut minus = net.weights().clone();
            minus.tensors[ti].data[k] -= h;
            let lp = Network::new(net.config().clone(), plus).unwrap().loss(batch).unwrap();
            let lm = Network::new(net.config().clone(), minus).unwrap().loss(batch).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grad.tensors[ti].data[k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, format!("{}[{k}] analytic {analytic} numeric {numeric}", t.name));
            }
        }
    }
    worst
}

fn inputs(cfg: &ModelConfig, n: usize) -> Vec<Vec<f64>> {
    let mut rng = CounterRng::stream(21, "gradcheck");
    (0..n)
        .map(|_| (0..cfg.input_len()).map(|_| rng.normal()).collect())
        .collect()
}

#[test]
fn gradient_matches_finite_differences_without_dropout() {
    let cfg = reduced();
    let net = Network::<f64>::init(cfg.clone(), &mut CounterRng::from_key(31)).unwrap();
    let xs = inputs(&cfg, 3);
    let batch: Vec<_> = xs
        .iter()
        .zip(Movement::ALL)
        .map(|(x, l)| Example {
            input: x,
            label: l,
            mask: None,
        })
        .collect();
    let (err, at) = worst_error(&net, &batch);
    assert!(err < 1e-4, "{err} at {at}");
}

#[test]
fn gradient_matches_finite_differences_with_frozen_mask() {
    let cfg = reduced();
    let net = Network::<f64>::init(cfg.clone(), &mut CounterRng::from_key(32)).unwrap();
    let xs = inputs(&cfg, 3);
    let mut rng = CounterRng::from_key(33);
    let batch: Vec<_> = xs
        .iter()
        .zip(Movement::ALL)
        .map(|(x, l)| Example {
            input: x,
            label: l,
            mask: Some(DropoutMask::sample(net.mask_channels(), cfg.dropout_rate, &mut rng)),
        })
        .collect();
    assert!(batch
        .iter()
        .any(|e| e.mask.as_ref().unwrap().kept() < net.mask_channels()));
    let (err, at) = worst_error(&net, &batch);
    assert!(err < 1e-4, "{err} at {at}");
}
