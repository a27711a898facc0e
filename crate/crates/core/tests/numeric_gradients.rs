use eventgen::numeric::{finite_difference_check, Graph, NumericError, OpResult, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 100;
const TOL: f64 = 1e-5;
const EPS: f64 = 1e-6;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces an op output to a scalar through fixed random weights so that
/// every output coordinate contributes with a distinct sensitivity.
fn weighted_sum(g: &mut Graph, y: Var, w: &Tensor) -> OpResult {
    let wv = g.constant(w.reshaped(g.shape(y).to_vec()).unwrap());
    let p = g.mul(y, wv)?;
    g.sum(p)
}

fn check_unary(
    name: &str,
    in_shape: &[usize],
    out_numel: impl Fn(&[usize]) -> usize,
    op: impl Fn(&mut Graph, Var, &mut Vec<Var>) -> OpResult,
    consts: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64 * 7919);
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let x = uniform(&mut rng, in_shape);
        let cs = consts(&mut rng);
        let n_out = out_numel(in_shape);
        let w = uniform(&mut rng, &[n_out]);
        let err = finite_difference_check(
            |g, xv| {
                let mut cv: Vec<Var> = cs.iter().map(|c| g.constant(c.clone())).collect();
                let y = op(g, xv, &mut cv)?;
                weighted_sum(g, y, &w)
            },
            &x,
            EPS,
        )
        .unwrap();
        worst = worst.max(err);
    }
    assert!(worst < TOL, "{name}: max relative error {worst:e}");
}

#[test]
fn matmul_both_sides() {
    check_unary("matmul-left", &[3, 4], |_| 6, |g, x, c| g.matmul(x, c[0]), |r| vec![uniform(r, &[4, 2])]);
    check_unary("matmul-right", &[4, 2], |_| 6, |g, x, c| g.matmul(c[0], x), |r| vec![uniform(r, &[3, 4])]);
    check_unary("matmul_nt-left", &[3, 4], |_| 6, |g, x, c| g.matmul_nt(x, c[0]), |r| vec![uniform(r, &[2, 4])]);
    check_unary("matmul_nt-right", &[2, 4], |_| 6, |g, x, c| g.matmul_nt(c[0], x), |r| vec![uniform(r, &[3, 4])]);
    check_unary("transpose", &[2, 5], |_| 10, |g, x, _| g.transpose(x), |_| vec![]);
}

#[test]
fn elementwise_ops() {
    check_unary("add", &[2, 3], |_| 6, |g, x, c| g.add(x, c[0]), |r| vec![uniform(r, &[2, 3])]);
    check_unary("add_bias-input", &[4, 3], |_| 12, |g, x, c| g.add_bias(x, c[0]), |r| vec![uniform(r, &[3])]);
    check_unary("add_bias-bias", &[3], |_| 12, |g, x, c| g.add_bias(c[0], x), |r| vec![uniform(r, &[4, 3])]);
    check_unary("mul", &[2, 3], |_| 6, |g, x, c| g.mul(x, c[0]), |r| vec![uniform(r, &[2, 3])]);
    check_unary("mul-self", &[2, 3], |_| 6, |g, x, _| g.mul(x, x), |_| vec![]);
    check_unary("scale", &[5], |_| 5, |g, x, _| g.scale(x, -1.7), |_| vec![]);
    check_unary("gelu", &[2, 4], |_| 8, |g, x, _| g.gelu(x), |_| vec![]);
    check_unary("relu", &[2, 4], |_| 8, |g, x, _| g.relu(x), |_| vec![]);
}

#[test]
fn normalizations() {
    check_unary("softmax", &[3, 5], |_| 15, |g, x, _| g.softmax(x), |_| vec![]);
    check_unary("log_softmax", &[3, 5], |_| 15, |g, x, _| g.log_softmax(x), |_| vec![]);
    check_unary(
        "layernorm-x",
        &[3, 6],
        |_| 18,
        |g, x, c| g.layernorm(x, c[0], c[1], 1e-5),
        |r| vec![uniform(r, &[6]), uniform(r, &[6])],
    );
    check_unary(
        "layernorm-gamma",
        &[6],
        |_| 18,
        |g, x, c| g.layernorm(c[0], x, c[1], 1e-5),
        |r| vec![uniform(r, &[3, 6]), uniform(r, &[6])],
    );
    check_unary(
        "layernorm-beta",
        &[6],
        |_| 18,
        |g, x, c| g.layernorm(c[0], c[1], x, 1e-5),
        |r| vec![uniform(r, &[3, 6]), uniform(r, &[6])],
    );
}

#[test]
fn structural_ops() {
    check_unary("embedding", &[5, 3], |_| 12, |g, x, _| g.embedding(x, &[4, 0, 4, 2]), |_| vec![]);
    check_unary(
        "concat_rows",
        &[2, 3],
        |_| 15,
        |g, x, c| g.concat_rows(&[c[0], x, c[1]]),
        |r| vec![uniform(r, &[1, 3]), uniform(r, &[2, 3])],
    );
    check_unary(
        "concat_cols",
        &[2, 3],
        |_| 18,
        |g, x, c| g.concat_cols(&[x, c[0], x]),
        |r| vec![uniform(r, &[2, 3])],
    );
    check_unary("slice_rows", &[4, 3], |_| 6, |g, x, _| g.slice_rows(x, 1, 2), |_| vec![]);
    check_unary("slice_cols", &[3, 5], |_| 6, |g, x, _| g.slice_cols(x, 2, 2), |_| vec![]);
    check_unary("reshape", &[2, 6], |_| 12, |g, x, _| g.reshape(x, &[3, 4]), |_| vec![]);
}

#[test]
fn cross_entropy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let x = uniform(&mut rng, &[3, 5]);
        let targets: Vec<usize> = (0..3).map(|_| rng.random_range(0..5)).collect();
        let err = finite_difference_check(|g, xv| g.cross_entropy(xv, &targets), &x, EPS).unwrap();
        worst = worst.max(err);
    }
    assert!(worst < TOL, "cross_entropy: {worst:e}");
}

#[test]
fn softmax_cross_entropy_gradient_is_p_minus_onehot() {
    let logits = Tensor::row(vec![0.3, -1.2, 2.0, 0.5]);
    let mut g = Graph::new();
    let x = g.input(logits.clone().with_grad());
    let loss = g.cross_entropy(x, &[2]).unwrap();
    let grads = g.backward(loss).unwrap();
    let analytic = grads.get(x).unwrap().to_vec();
    // central differences, step 1e-6
    let f = |v: &[f64]| {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(v.to_vec()));
        let l = g.cross_entropy(x, &[2]).unwrap();
        g.value(l).data()[0]
    };
    let h = 1e-6;
    for i in 0..4 {
        let mut p = logits.data().to_vec();
        let mut m = logits.data().to_vec();
        p[i] += h;
        m[i] -= h;
        let numeric = (f(&p) - f(&m)) / (2.0 * h);
        assert!((numeric - analytic[i]).abs() < 1e-8, "coord {i}: {numeric} vs {}", analytic[i]);
    }
    let probs = eventgen::numeric::kernels::softmax_rows(logits.data(), 4);
    for i in 0..4 {
        let onehot = if i == 2 { 1.0 } else { 0.0 };
        assert!((analytic[i] - (probs[i] - onehot)).abs() < 1e-15);
    }
}

#[test]
fn layernorm_on_constant_input() {
    let x = Tensor::full(&[2, 4], 0.7);
    let gamma = Tensor::new(vec![4], vec![1.0, 0.5, -2.0, 1.5]).unwrap();
    let beta = Tensor::new(vec![4], vec![0.1, 0.0, -0.3, 0.2]).unwrap();
    let w = Tensor::new(vec![2, 4], vec![0.3, -0.2, 0.9, 0.4, -0.7, 0.5, 0.1, -0.6]).unwrap();
    let err = finite_difference_check(
        |g, xv| {
            let gm = g.constant(gamma.clone());
            let bt = g.constant(beta.clone());
            let y = g.layernorm(xv, gm, bt, 1e-5)?;
            weighted_sum(g, y, &w)
        },
        &x,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-6, "relative error {err:e}");
}

#[test]
fn sum_of_squares_and_constant_functions() {
    let x = Tensor::row(vec![1.0, 2.0]);
    let err = finite_difference_check(
        |g, xv| {
            let sq = g.mul(xv, xv)?;
            g.sum(sq)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-8, "{err:e}");

    let err = finite_difference_check(
        |g, _| Ok(g.constant(Tensor::scalar(3.0))),
        &x,
        1e-5,
    )
    .unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn backward_requires_scalar() {
    let mut g = Graph::new();
    let x = g.input(Tensor::row(vec![1.0, 2.0]).with_grad());
    let y = g.scale(x, 2.0).unwrap();
    assert!(matches!(g.backward(y), Err(NumericError::NonScalar { .. })));
}
