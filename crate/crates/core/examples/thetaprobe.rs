use ndarray_linalg::{Eigh, UPLO};
use rlfcs::{C64, CMatrix};

fn main() {
    let n = 3;
    let mut h = CMatrix::zeros((n, n));
    h[[0, 0]] = C64::new(1.0, 0.0);
    h[[1, 1]] = C64::new(-0.5, 0.0);
    h[[2, 2]] = C64::new(0.2, 0.0);
    h[[0, 1]] = C64::new(0.3, 0.7);
    h[[1, 0]] = C64::new(0.3, -0.7);
    h[[0, 2]] = C64::new(-0.1, 0.2);
    h[[2, 0]] = C64::new(-0.1, -0.2);
    h[[1, 2]] = C64::new(0.4, -0.1);
    h[[2, 1]] = C64::new(0.4, 0.1);

    let (d, v) = h.eigh(UPLO::Lower).unwrap();
    for (name, vecs) in [
        ("columns", v.clone()),
        ("rows", v.t().to_owned()),
        ("conj columns", v.map(|z| z.conj())),
        ("conj rows", v.t().map(|z| z.conj()).to_owned()),
    ] {
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let col = vecs.column(j).to_owned();
            let hv = h.dot(&col);
            let dev: f64 = hv.iter().zip(col.iter()).map(|(a, b)| (a - b * d[j]).norm()).sum();
            worst = worst.max(dev);
        }
        println!("{name}: worst eigen residual {worst:.3e}");
    }
}
