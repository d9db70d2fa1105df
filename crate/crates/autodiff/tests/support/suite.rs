//! Finite-difference checks of every differentiable op over seeded random
//! instances. Each function returns the worst relative error it saw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resgene_autodiff::{
    BatchNormConfig, BatchNormStats, Conv2dOptions, Mode, Pool2dOptions, RunningStats, Tape,
    Tensor, Var,
};

use super::gradcheck::max_rel_error;

pub const INSTANCES: u64 = 25;
pub const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

fn target(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn mse_to(tape: &mut Tape<f64>, v: Var, t: &[f64]) -> Var {
    tape.mse_loss(v, t).unwrap()
}

#[derive(Default)]
struct Worst(f64);

impl Worst {
    fn check(&mut self, inputs: Vec<Tensor<f64>>, f: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
        self.0 = self.0.max(max_rel_error(&inputs, f));
    }
}

pub fn conv2d() -> f64 {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stride = 1 + (seed as usize % 2);
        let padding = seed as usize % 2;
        let x = random(&mut rng, &[1, 2, 5, 5]);
        let w = random(&mut rng, &[3, 2, 3, 3]);
        let b = random(&mut rng, &[3]);
        let opts = Conv2dOptions { stride, padding };
        let o = (5 + 2 * padding - 3) / stride + 1;
        let t = target(&mut rng, 3 * o * o);
        worst.check(vec![x, w, b], |tape, v| {
            let y = tape.conv2d(v[0], v[1], Some(v[2]), opts).unwrap();
            mse_to(tape, y, &t)
        });
    }
    worst.0
}

pub fn batch_norm() -> f64 {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = random(&mut rng, &[2, 3, 4, 4]);
        let g = Tensor::from_fn([3], |_| rng.random_range(0.5..1.5));
        let b = random(&mut rng, &[3]);
        let t = target(&mut rng, 96);
        worst.check(vec![x.clone(), g.clone(), b.clone()], |tape, v| {
            let mut stats = RunningStats::new(3);
            let y = tape
                .batch_norm2d(
                    v[0],
                    v[1],
                    v[2],
                    BatchNormStats::Train(&mut stats),
                    BatchNormConfig::default(),
                )
                .unwrap();
            mse_to(tape, y, &t)
        });
        let running = RunningStats {
            mean: vec![0.1, -0.2, 0.3],
            var: vec![0.5, 1.5, 2.0],
        };
        worst.check(vec![x, g, b], |tape, v| {
            let y = tape
                .batch_norm2d(
                    v[0],
                    v[1],
                    v[2],
                    BatchNormStats::Eval(&running),
                    BatchNormConfig::default(),
                )
                .unwrap();
            mse_to(tape, y, &t)
        });
    }
    worst.0
}

pub fn relu() -> f64 {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let x = random(&mut rng, &[2, 2, 4, 4]);
        let t = target(&mut rng, 64);
        worst.check(vec![x], |tape, v| {
            let y = tape.relu(v[0]).unwrap();
            mse_to(tape, y, &t)
        });
    }
    worst.0
}

pub fn max_pool2d() -> f64 {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let x = random(&mut rng, &[2, 2, 4, 4]);
        let t = target(&mut rng, 16);
        worst.check(vec![x.clone()], |tape, v| {
            let y = tape.max_pool2d(v[0], Pool2dOptions::new(2, 2)).unwrap();
            mse_to(tape, y, &t)
        });
        worst.check(vec![x], |tape, v| {
            let y = tape
                .max_pool2d(
                    v[0],
                    Pool2dOptions {
                        kernel: 3,
                        stride: 2,
                        padding: 1,
                    },
                )
                .unwrap();
            mse_to(tape, y, &t)
        });
    }
    worst.0
}

pub fn global_avg_pool() -> f64 {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let x = random(&mut rng, &[2, 2, 4, 4]);
        let t = target(&mut rng, 4);
        worst.check(vec![x], |tape, v| {
            let y = tape.global_avg_pool(v[0]).unwrap();
            mse_to(tape, y, &t)
        });
    }
    worst.0
}

pub fn add() -> f64 {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let x = random(&mut rng, &[2, 2, 4, 4]);
        let other = random(&mut rng, &[2, 2, 4, 4]);
        let t = target(&mut rng, 64);
        worst.check(vec![x, other], |tape, v| {
            let y = tape.add(v[0], v[1]).unwrap();
            mse_to(tape, y, &t)
        });
    }
    worst.0
}

pub fn reshape() -> f64 {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let x = random(&mut rng, &[2, 3, 2, 2]);
        let w = random(&mut rng, &[12, 2]);
        let t = target(&mut rng, 4);
        // Through a linear layer so a wrong element order would show up.
        worst.check(vec![x, w], |tape, v| {
            let y = tape.reshape(v[0], [2, 12]).unwrap();
            let y = tape.linear(y, v[1], None).unwrap();
            mse_to(tape, y, &t)
        });
    }
    worst.0
}

pub fn dropout() -> f64 {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let x = random(&mut rng, &[2, 2, 4, 4]);
        let t = target(&mut rng, 64);
        worst.check(vec![x], |tape, v| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
            let y = tape.dropout(v[0], 0.3, Mode::Train, &mut mask_rng).unwrap();
            mse_to(tape, y, &t)
        });
    }
    worst.0
}

pub fn linear() -> f64 {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let x = random(&mut rng, &[4, 6]);
        let w = random(&mut rng, &[6, 3]);
        let b = random(&mut rng, &[3]);
        let t = target(&mut rng, 12);
        worst.check(vec![x, w, b], |tape, v| {
            let y = tape.linear(v[0], v[1], Some(v[2])).unwrap();
            mse_to(tape, y, &t)
        });
    }
    worst.0
}

pub fn mse() -> f64 {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let p = random(&mut rng, &[7]);
        let t = target(&mut rng, 7);
        worst.check(vec![p], |tape, v| mse_to(tape, v[0], &t));
    }
    worst.0
}

/// conv -> batch norm -> relu -> max pool -> flatten -> linear -> mse, with
/// every parameter perturbed.
pub fn composed() -> f64 {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let inputs = vec![
            random(&mut rng, &[3, 2, 6, 6]),
            random(&mut rng, &[4, 2, 3, 3]),
            Tensor::from_fn([4], |_| rng.random_range(0.5..1.5)),
            random(&mut rng, &[4]),
            random(&mut rng, &[36, 1]),
            random(&mut rng, &[1]),
        ];
        let t = target(&mut rng, 3);
        worst.check(inputs, |tape, v| {
            let mut stats = RunningStats::new(4);
            let y = tape
                .conv2d(
                    v[0],
                    v[1],
                    None,
                    Conv2dOptions {
                        stride: 1,
                        padding: 1,
                    },
                )
                .unwrap();
            let y = tape
                .batch_norm2d(
                    y,
                    v[2],
                    v[3],
                    BatchNormStats::Train(&mut stats),
                    BatchNormConfig::default(),
                )
                .unwrap();
            let y = tape.relu(y).unwrap();
            let y = tape.max_pool2d(y, Pool2dOptions::new(2, 2)).unwrap();
            let y = tape.reshape(y, [3, 36]).unwrap();
            let y = tape.linear(y, v[4], Some(v[5])).unwrap();
            mse_to(tape, y, &t)
        });
    }
    worst.0
}

/// Op name and its check.
pub type Case = (&'static str, fn() -> f64);

// Only the acceptance suite iterates the whole table.
#[allow(dead_code)]
pub const ALL: [Case; 11] = [
    ("conv2d", conv2d),
    ("batch_norm2d", batch_norm),
    ("relu", relu),
    ("max_pool2d", max_pool2d),
    ("global_avg_pool", global_avg_pool),
    ("add", add),
    ("reshape", reshape),
    ("dropout", dropout),
    ("linear", linear),
    ("mse_loss", mse),
    ("conv-bn-relu-pool-linear", composed),
];
