use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robnet_core::linalg::Matrix;
use robnet_core::nn::{Activation, Layer, Network};

fn random_net(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [2usize, 8, 5, 2];
    let acts = [Activation::Relu, Activation::Clamp { lo: -0.5, hi: 1.5 }, Activation::Identity];
    let layers = (0..3)
        .map(|i| {
            let (rows, cols) = (dims[i + 1], dims[i]);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let bias: Vec<f64> = (0..rows).map(|_| rng.gen_range(-0.4..0.4)).collect();
            Layer::new(Matrix::from_flat(rows, cols, data), bias, acts[i]).unwrap()
        })
        .collect();
    Network::new(layers).unwrap()
}

#[test]
fn find_divergence() {
    let net = random_net(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    robnet_cli::model_io::save_model(&net, &path).unwrap();
    let back = robnet_cli::model_io::load_model(&path).unwrap();
    for (li, (a, b)) in net.layers().iter().zip(back.layers()).enumerate() {
        assert_eq!(a.activation(), b.activation(), "layer {li} activation");
        for (wi, (p, q)) in a.weights().data().iter().zip(b.weights().data()).enumerate() {
            if p.to_bits() != q.to_bits() {
                panic!(
                    "layer {li} weight {wi}: {p:?} ({:#x}) became {q:?} ({:#x}); serialized as {}",
                    p.to_bits(),
                    q.to_bits(),
                    crate_fmt(*p)
                );
            }
        }
        for (bi, (p, q)) in a.bias().iter().zip(b.bias()).enumerate() {
            if p.to_bits() != q.to_bits() {
                panic!("layer {li} bias {bi}: {p:?} became {q:?}; serialized as {}", crate_fmt(*p));
            }
        }
    }
    let x = vec![0.3, -0.7];
    assert_eq!(net.eval(&x), back.eval(&x), "weights equal yet outputs differ?!");
}

fn crate_fmt(v: f64) -> String {
    robnet_cli::fmt_f64(v)
}
