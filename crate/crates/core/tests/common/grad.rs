//! Finite-difference suites for every layer type, shared by the gradient
//! tests and the acceptance run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_mia::butterfly::{select_min_param_chain, substitute_butterfly, ButterflyChain};
use sparse_mia::nn::gradcheck::check_gradients;
use sparse_mia::nn::layers::{BasicBlock, BatchNorm2d, Conv2d, Dense, Flatten, GlobalAvgPool, Relu};
use sparse_mia::nn::{
    bce_with_logits_grad, binary_cross_entropy, build_initialized, cross_entropy, cross_entropy_grad, init_params, sigmoid, ArchSpec,
    Layer, Model, WeightMatrix,
};
use sparse_mia::Tensor;

pub const TOL: f64 = 1e-4;
pub const STEP: f64 = 1e-3;
pub const INSTANCES: u64 = 20;

pub type Builder = fn(&mut ChaCha8Rng) -> (Model, Vec<usize>);

fn vec_arch(n: usize) -> ArchSpec {
    ArchSpec::Mlp {
        input_shape: vec![n],
        hidden: vec![],
        classes: 1,
    }
}

fn img_arch(c: usize, s: usize) -> ArchSpec {
    ArchSpec::ResNet {
        in_channels: c,
        image_size: s,
        width: 1,
        blocks_per_segment: 1,
        classes: 1,
    }
}

/// Draws every weight and bias with magnitude in `[0.5, 1.5]` and random
/// sign, batch-norm scale in `[0.5, 1.5]` and shift in `[-0.25, 0.25]`. Magnitudes bounded away
/// from zero keep per-channel batch statistics large relative to the
/// difference step, where the normalization is nearly linear.
fn randomize(model: &mut Model, rng: &mut ChaCha8Rng) {
    init_params(model, rng.random()).unwrap();
    for (name, p) in model.params_mut() {
        let (gamma, beta) = (name.ends_with("gamma"), name.ends_with("beta"));
        for v in p.value.data_mut() {
            *v = if gamma {
                rng.random_range(0.5..1.5)
            } else if beta {
                rng.random_range(-0.25..0.25)
            } else {
                let m = rng.random_range(0.5..1.5);
                if rng.random_bool(0.5) { m } else { -m }
            };
        }
    }
    model.apply_masks();
}

fn input(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Worst relative error over `INSTANCES` random instances, or a description
/// of the first instance above `TOL`.
pub fn run_suite(label: &str, make: Builder) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for i in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 * i + label.len() as u64);
        let (mut model, shape) = make(&mut rng);
        randomize(&mut model, &mut rng);
        let x = input(&shape, &mut rng);
        let r = check_gradients(&mut model, &x, STEP, 40, i).map_err(|e| e.to_string())?;
        if r.checked == 0 {
            return Err(format!("{label} #{i}: nothing checked"));
        }
        if r.max_rel_error > TOL {
            return Err(format!("{label} #{i}: relative error {:.3e} in {}", r.max_rel_error, r.worst));
        }
        worst = worst.max(r.max_rel_error);
    }
    Ok(worst)
}

fn butterfly_weight(rows: usize, cols: usize, depth: usize) -> WeightMatrix {
    let spec = select_min_param_chain(rows, cols, depth).unwrap();
    WeightMatrix::Butterfly(ButterflyChain::from_spec(&spec))
}

pub const SUITES: [(&str, Builder); 12] = [
    ("dense", dense),
    ("relu", relu),
    ("conv2d", conv2d),
    ("batchnorm_images", batchnorm_images),
    ("batchnorm_features", batchnorm_features),
    ("global_avg_pool", global_avg_pool),
    ("flatten", flatten),
    ("basic_block", basic_block),
    ("butterfly_dense", butterfly_dense),
    ("butterfly_conv", butterfly_conv),
    ("butterfly_resnet", substituted_mini_resnet),
    ("pruned_mlp", pruned_mlp),
];

fn dense(rng: &mut ChaCha8Rng) -> (Model, Vec<usize>) {
    let (i, o, n) = (rng.random_range(1..8), rng.random_range(1..6), rng.random_range(1..5));
    let m = Model::new(vec_arch(i), vec![Layer::Flatten(Flatten::default()), Layer::Dense(Dense::new(i, o))]);
    (m, vec![n, i])
}

fn relu(rng: &mut ChaCha8Rng) -> (Model, Vec<usize>) {
    let (i, h, n) = (rng.random_range(2..7), rng.random_range(2..9), rng.random_range(1..5));
    let m = Model::new(
        vec_arch(i),
        vec![
            Layer::Dense(Dense::new(i, h)),
            Layer::Relu(Relu::default()),
            Layer::Dense(Dense::new(h, 3)),
        ],
    );
    (m, vec![n, i])
}

fn conv2d(rng: &mut ChaCha8Rng) -> (Model, Vec<usize>) {
    let (c, o, s, n) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(3..7), rng.random_range(1..3));
    let k = [1, 3][rng.random_range(0..2)];
    let stride = rng.random_range(1..3);
    let pad = if k == 3 { rng.random_range(0..2) } else { 0 };
    let bias = rng.random_bool(0.5);
    let m = Model::new(
        img_arch(c, s),
        vec![
            Layer::Conv2d(Conv2d::new(c, o, k, stride, pad, bias)),
            Layer::Flatten(Flatten::default()),
        ],
    );
    (m, vec![n, c, s, s])
}

fn batchnorm_images(rng: &mut ChaCha8Rng) -> (Model, Vec<usize>) {
    let (c, s, n) = (rng.random_range(1..4), rng.random_range(2..5), rng.random_range(2..4));
    let m = Model::new(
        img_arch(c, s),
        vec![
            Layer::Conv2d(Conv2d::new(c, 2, 3, 1, 1, false)),
            Layer::BatchNorm(BatchNorm2d::new(2)),
            Layer::Flatten(Flatten::default()),
        ],
    );
    (m, vec![n, c, s, s])
}

fn batchnorm_features(rng: &mut ChaCha8Rng) -> (Model, Vec<usize>) {
    // batch statistics over fewer points make the loss too curved for step 1e-3
    let (i, h, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(5..9));
    let m = Model::new(
        vec_arch(i),
        vec![
            Layer::Dense(Dense::new(i, h)),
            Layer::BatchNorm(BatchNorm2d::new(h)),
            Layer::Dense(Dense::new(h, 2)),
        ],
    );
    (m, vec![n, i])
}

fn global_avg_pool(rng: &mut ChaCha8Rng) -> (Model, Vec<usize>) {
    let (c, s, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4));
    let m = Model::new(
        img_arch(c, s),
        vec![Layer::GlobalAvgPool(GlobalAvgPool::default()), Layer::Dense(Dense::new(c, 3))],
    );
    (m, vec![n, c, s, s])
}

fn flatten(rng: &mut ChaCha8Rng) -> (Model, Vec<usize>) {
    let (c, s, n) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
    let m = Model::new(
        img_arch(c, s),
        vec![Layer::Flatten(Flatten::default()), Layer::Dense(Dense::new(c * s * s, 2))],
    );
    (m, vec![n, c, s, s])
}

fn basic_block(rng: &mut ChaCha8Rng) -> (Model, Vec<usize>) {
    let c = rng.random_range(1..4);
    let o = if rng.random_bool(0.5) { c } else { rng.random_range(1..5) };
    let stride = if o == c { rng.random_range(1..3) } else { 1 };
    let (s, n) = (rng.random_range(3..6), rng.random_range(3..5));
    let m = Model::new(
        img_arch(c, s),
        vec![
            Layer::BasicBlock(BasicBlock::new(c, o, stride, 0)),
            Layer::GlobalAvgPool(GlobalAvgPool::default()),
            Layer::Dense(Dense::new(o, 2)),
        ],
    );
    (m, vec![n, c, s, s])
}

fn butterfly_dense(rng: &mut ChaCha8Rng) -> (Model, Vec<usize>) {
    let i = [2, 4, 6, 8, 12][rng.random_range(0..5)];
    let o = [2, 3, 4, 8][rng.random_range(0..4)];
    let depth = rng.random_range(1..4);
    let n = rng.random_range(1..4);
    let mut d = Dense::new(i, o);
    d.weight = butterfly_weight(o, i, depth);
    let m = Model::new(vec_arch(i), vec![Layer::Dense(d)]);
    (m, vec![n, i])
}

fn butterfly_conv(rng: &mut ChaCha8Rng) -> (Model, Vec<usize>) {
    let c = [1, 2, 4][rng.random_range(0..3)];
    let o = [2, 4][rng.random_range(0..2)];
    let depth = rng.random_range(2..4);
    let (s, n) = (rng.random_range(2..5), rng.random_range(1..3));
    let mut conv = Conv2d::new(c, o, 3, 1, 1, false);
    conv.weight = butterfly_weight(o, c * 9, depth);
    let m = Model::new(img_arch(c, s), vec![Layer::Conv2d(conv), Layer::Flatten(Flatten::default())]);
    (m, vec![n, c, s, s])
}

fn substituted_mini_resnet(rng: &mut ChaCha8Rng) -> (Model, Vec<usize>) {
    let arch = ArchSpec::ResNet {
        in_channels: 2,
        image_size: 8,
        width: 2,
        blocks_per_segment: 1,
        classes: 3,
    };
    let mut m = build_initialized(&arch, rng.random()).unwrap();
    substitute_butterfly(&mut m, rng.random_range(1..4), rng.random_range(2..4), rng.random()).unwrap();
    (m, vec![4, 2, 8, 8])
}

fn pruned_mlp(rng: &mut ChaCha8Rng) -> (Model, Vec<usize>) {
    let arch = ArchSpec::Mlp {
        input_shape: vec![5],
        hidden: vec![6],
        classes: 3,
    };
    let mut m = build_initialized(&arch, rng.random()).unwrap();
    for (_, p) in m.params_mut() {
        if p.prunable {
            p.mask = Some((0..p.len()).map(|_| rng.random_bool(0.6)).collect());
        }
    }
    (m, vec![3, 5])
}

/// Largest absolute deviation between the analytic cross-entropy gradient
/// and central differences over random logits.
pub fn cross_entropy_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let (n, c) = (rng.random_range(1..5), rng.random_range(2..6));
        let z = input(&[n, c], &mut rng);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let (_, g) = cross_entropy_grad(&z, &labels).unwrap();
        for i in 0..z.len() {
            let (mut p, mut m) = (z.clone(), z.clone());
            p.data_mut()[i] += STEP;
            m.data_mut()[i] -= STEP;
            let fd = (cross_entropy(&p, &labels).unwrap() - cross_entropy(&m, &labels).unwrap()) / (2.0 * STEP);
            worst = worst.max((g.data()[i] - fd).abs());
        }
    }
    worst
}

/// Same for binary cross-entropy on logits, against the loss on probabilities.
pub fn bce_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let n = rng.random_range(1..6);
        let z = input(&[n, 1], &mut rng);
        let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        let (_, g) = bce_with_logits_grad(&z, &y).unwrap();
        let loss = |t: &Tensor| -> f64 {
            let p: Vec<f64> = t.data().iter().map(|&v| sigmoid(v)).collect();
            binary_cross_entropy(&p, &y).unwrap()
        };
        for i in 0..n {
            let (mut p, mut m) = (z.clone(), z.clone());
            p.data_mut()[i] += STEP;
            m.data_mut()[i] -= STEP;
            let fd = (loss(&p) - loss(&m)) / (2.0 * STEP);
            worst = worst.max((g.data()[i] - fd).abs());
        }
    }
    worst
}
