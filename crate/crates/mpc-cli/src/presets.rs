//! Built-in named configs. `--config NAME` resolves here first, then
//! falls back to reading NAME as a file path.

/// Two overlapping Gaussian blobs (Bayes accuracy 0.97 by the analytic
/// oracle), meta-policy control.
pub const BLOBS_MPC: &str = "\
[run]
name = blobs_mpc
seed = 0

[data]
kind = blobs
classes = 2
per_class = 500
dim = 2
noise = 0.5316904500664282
radius = 1.0
seed = 100
val_fraction = 0.2

[train]
epochs = 50
batch_size = 64
mask_true_class = on
inner_lr = 2e-3
outer_lr = 1e-2
interval = 3
sigma = 0.1
mode = mpc
backbone = mlp
hidden = 64
";

/// Same data as blobs_mpc with a fixed (lambda, alpha0) baseline.
pub const BLOBS_FIXED: &str = "\
[run]
name = blobs_fixed
seed = 0

[data]
kind = blobs
classes = 2
per_class = 500
dim = 2
noise = 0.5316904500664282
radius = 1.0
seed = 100
val_fraction = 0.2

[train]
epochs = 50
batch_size = 64
mask_true_class = on
inner_lr = 2e-3
mode = fixed
lambda = 1.0
alpha0 = 1.0
backbone = mlp
hidden = 64
";

/// Four noisy blobs with real class overlap; the fixed-lambda sweep and
/// the meta-policy comparison run on this set.
pub const BLOBS4_MPC: &str = "\
[run]
name = blobs4_mpc
seed = 0

[data]
kind = blobs
classes = 4
per_class = 300
dim = 2
noise = 0.8
radius = 1.3
seed = 200
val_fraction = 0.25

[train]
epochs = 36
batch_size = 64
mask_true_class = on
inner_lr = 2e-3
outer_lr = 1e-2
interval = 3
sigma = 0.1
mode = mpc
backbone = mlp
hidden = 64

[sweep]
grid = lambda
lambda_values = 0.01, 0.1, 1, 10
";

pub const BLOBS4_FIXED: &str = "\
[run]
name = blobs4_fixed
seed = 0

[data]
kind = blobs
classes = 4
per_class = 300
dim = 2
noise = 0.8
radius = 1.3
seed = 200
val_fraction = 0.25

[train]
epochs = 36
batch_size = 64
mask_true_class = on
inner_lr = 2e-3
mode = fixed
lambda = 1.0
alpha0 = 1.0
backbone = mlp
hidden = 64

[sweep]
grid = lambda
lambda_values = 0.01, 0.1, 1, 10
";

/// MNIST desk-scale subset through the IDX parser, conv backbone.
pub const MNIST_MPC: &str = "\
[run]
name = mnist_mpc
seed = 0

[data]
kind = idx
train_images = data/mnist/train-images-idx3-ubyte
train_labels = data/mnist/train-labels-idx1-ubyte
val_images = data/mnist/t10k-images-idx3-ubyte
val_labels = data/mnist/t10k-labels-idx1-ubyte
train_limit = 10000
val_limit = 2000

[train]
epochs = 20
batch_size = 32
mask_true_class = on
inner_lr = 2e-3
outer_lr = 0.5
interval = 1
sigma = 0.3
reward = absolute
mode = mpc
backbone = conv
conv_c1 = 8
conv_c2 = 16
";

/// Projected-OGD regret experiment with the theory step size.
pub const REGRET_QUADRATIC: &str = "\
[run]
name = regret_quadratic
seed = 0

[regret]
family = quadratic
t_values = 100, 1000, 10000
seed = 0
";

pub fn lookup(name: &str) -> Option<&'static str> {
    match name {
        "blobs_mpc" => Some(BLOBS_MPC),
        "blobs_fixed" => Some(BLOBS_FIXED),
        "blobs4_mpc" => Some(BLOBS4_MPC),
        "blobs4_fixed" => Some(BLOBS4_FIXED),
        "mnist_mpc" => Some(MNIST_MPC),
        "regret_quadratic" => Some(REGRET_QUADRATIC),
        _ => None,
    }
}

pub const NAMES: &[&str] = &[
    "blobs_mpc",
    "blobs_fixed",
    "blobs4_mpc",
    "blobs4_fixed",
    "mnist_mpc",
    "regret_quadratic",
];
