use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sleepcast_nn::numerics::{graph_grad_check, ConvSpec, SeqLayout, Tensor};

const H: f64 = 1e-5;

fn rand_t(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
}

fn check(name: &str, inputs: &[Tensor], tol: f64, build: impl Fn(&mut sleepcast_nn::numerics::Graph, &[sleepcast_nn::numerics::Var]) -> sleepcast_nn::Result<sleepcast_nn::numerics::Var>) {
    let err = graph_grad_check(inputs, build, H).unwrap();
    assert!(err < tol, "{name}: relative error {err:e} >= {tol:e}");
}

#[test]
fn linear_add_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ins = [rand_t(&mut rng, 4, 3), rand_t(&mut rng, 3, 5), rand_t(&mut rng, 1, 5), rand_t(&mut rng, 4, 5)];
    check("linear", &ins, 1e-6, |g, v| {
        let y = g.linear(v[0], v[1], Some(v[2]))?;
        let y = g.add(y, v[3])?;
        Ok(g.scale(y, -1.7))
    });
}

#[test]
fn gelu_mul_scale_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ins = [rand_t(&mut rng, 5, 4).mapv(|x| 3.0 * x)];
    let mask = rand_t(&mut rng, 5, 4);
    check("gelu", &ins, 1e-6, move |g, v| {
        let y = g.gelu(v[0]);
        let y = g.mul_const(y, mask.clone())?;
        g.scale_rows(y, vec![1.0, 0.0, 2.5, -1.0, 0.5])
    });
}

#[test]
fn add_tiled_and_reshape() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ins = [rand_t(&mut rng, 6, 4), rand_t(&mut rng, 3, 4)];
    check("add_tiled", &ins, 1e-6, |g, v| {
        let y = g.add_tiled(v[0], v[1])?;
        let y = g.reshape(y, 2, 12)?;
        Ok(g.gelu(y))
    });
}

#[test]
fn conv1d_variants() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let specs = [
        ConvSpec::valid(2),
        ConvSpec::same(3, 1),
        ConvSpec::same(4, 1),
        ConvSpec {
            stride: 2,
            ..ConvSpec::same(3, 2)
        },
    ];
    for spec in specs {
        let ins = [rand_t(&mut rng, 10, 3), rand_t(&mut rng, spec.kernel * 3, 2), rand_t(&mut rng, 1, 2)];
        check(&format!("conv1d {spec:?}"), &ins, 1e-6, move |g, v| {
            g.conv1d(v[0], v[1], Some(v[2]), SeqLayout { batch: 2, len: 5 }, spec)
        });
    }
}

#[test]
fn batch_norm_train_full_and_masked() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ins = [rand_t(&mut rng, 7, 3), rand_t(&mut rng, 1, 3), rand_t(&mut rng, 1, 3)];
    check("batch_norm", &ins, 1e-5, |g, v| Ok(g.batch_norm_train(v[0], v[1], v[2], None, 1e-5)?.0));
    let rows = [true, false, true, true, false, true, true];
    check("batch_norm masked", &ins, 1e-5, move |g, v| {
        Ok(g.batch_norm_train(v[0], v[1], v[2], Some(&rows), 1e-5)?.0)
    });
}

#[test]
fn batch_norm_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ins = [rand_t(&mut rng, 4, 3), rand_t(&mut rng, 1, 3), rand_t(&mut rng, 1, 3)];
    check("batch_norm eval", &ins, 1e-6, |g, v| {
        g.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2, 0.3], &[0.5, 1.5, 2.0], 1e-5)
    });
}

#[test]
fn attention_with_padding() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ins = [rand_t(&mut rng, 8, 4), rand_t(&mut rng, 8, 4), rand_t(&mut rng, 8, 4)];
    let valid = [true, true, false, true, true, false, false, true];
    check("attention", &ins, 1e-6, move |g, v| {
        g.attention(v[0], v[1], v[2], SeqLayout { batch: 2, len: 4 }, 2, &valid)
    });
}

#[test]
fn masked_mse() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ins = [rand_t(&mut rng, 3, 4)];
    let target = rand_t(&mut rng, 3, 4);
    let w = Array2::from_shape_fn((3, 4), |(i, j)| ((i + j) % 2) as f64);
    check("masked_mse", &ins, 1e-6, move |g, v| g.masked_mse(v[0], &target, w.clone()));
}
