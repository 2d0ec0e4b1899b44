use dnnate::net::{train_mse, Activation, NeuralNet, TrainConfig};
use dnnate::rng::Stream;
use std::time::Instant;

fn main() {
    let n = 5000;
    let d = 51;
    let mut rng = Stream::new(1);
    let x: Vec<f64> = (0..n * d).map(|_| rng.uniform()).collect();
    let y: Vec<f64> = x.chunks(d).map(|r| r[0] * r[0] + r[1] + r[2] * r[2] + r[50]).collect();
    let net = NeuralNet::dense(&[51, 51, 51, 51, 1], Activation::Sigmoid, 3).unwrap();
    let cfg = TrainConfig { epochs: 20, ..Default::default() };
    let t = Instant::now();
    let _ = train_mse(&net, &x, &y, &cfg).unwrap();
    println!("20 epochs: {:?}", t.elapsed());
}
