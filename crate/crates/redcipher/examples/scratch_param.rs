// temporary diagnostic - deleted before ship
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use redcipher::control::{char_poly, poly_from_roots};
use redcipher::plant::{advance_sample, linearize, PlantParams};
use redcipher::sim::{FEEDBACK_GAIN, INITIAL_STATE, OBSERVER_POLES};

// Parametric observer placement: for each pole pick an output-space
// direction f_i, set w_i = (pole_i I - A^T)^{-1} C^T f_i; with
// W = [w_i], F = [f_i]: L = (F W^{-1})^T places eig(A - LC) at poles.
fn l_parametric(model: &redcipher::plant::LinearModel, f_dirs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = 5;
    let at = model.a.transpose();
    let ct = model.c.transpose();
    let mut w = DMatrix::zeros(n, n);
    for (i, pole) in OBSERVER_POLES.iter().enumerate() {
        let m = DMatrix::from_diagonal_element(n, n, *pole) - &at;
        let rhs = &ct * f_dirs.column(i);
        let wi = m.lu().solve(&rhs)?;
        w.view_mut((0, i), (n, 1)).copy_from(&wi);
    }
    let w_inv = w.try_inverse()?;
    let l = -(f_dirs * w_inv).transpose();
    let target = poly_from_roots(&OBSERVER_POLES);
    let got = char_poly(&(&model.a - &l * &model.c));
    let err = got.iter().zip(&target).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
    (err < 1e-8).then_some(l)
}

fn nonlinear_tail(model: &redcipher::plant::LinearModel, l: &DMatrix<f64>) -> (f64, f64) {
    let plant = PlantParams::demo();
    let k = -DMatrix::from_row_slice(1, 5, &FEEDBACK_GAIN);
    let f_a = &model.a - l * &model.c;
    let k_a = &k * &f_a;
    let k_b = &k * &model.b;
    let k_l = &k * l;
    let mut state = INITIAL_STATE;
    let mut xhat = DMatrix::zeros(5, 1);
    let mut u = 0.0f64;
    let mut pending: Option<(DMatrix<f64>, f64)> = None;
    let mut peak = 0.0f64;
    let mut tail = 0.0f64;
    for step in 0..1000 {
        let y = DMatrix::from_column_slice(2, 1, &[state.theta1, state.theta2]);
        if let Some((x2, u2)) = pending.take() {
            xhat = x2;
            u = u2;
        }
        let x_next = &f_a * &xhat + &model.b * u + l * &y;
        let u_next = (&k_a * &xhat + &k_b * u + &k_l * &y)[(0, 0)];
        pending = Some((x_next, u_next));
        match advance_sample(&state, u, 0.01, 100, &plant) {
            Ok(s) => state = s,
            Err(_) => return (f64::INFINITY, f64::INFINITY),
        }
        peak = peak.max(state.theta1.abs()).max(state.theta2.abs());
        if !peak.is_finite() || peak > 50.0 {
            return (f64::INFINITY, f64::INFINITY);
        }
        if step >= 500 {
            tail = tail.max(state.theta1.abs()).max(state.theta2.abs());
        }
    }
    (peak, tail)
}

fn main() {
    let model = linearize(&PlantParams::demo(), 0.01).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(0x0b5e47e5);
    let mut best: Option<(f64, DMatrix<f64>, f64, f64)> = None;
    let mut tried = 0;
    let mut valid = 0;
    for _ in 0..400 {
        tried += 1;
        let f_dirs = DMatrix::from_fn(2, 5, |_, _| rng.gen_range(-1.0..1.0));
        let Some(l) = l_parametric(&model, &f_dirs) else { continue };
        valid += 1;
        let norm = l.iter().map(|v| v * v).sum::<f64>().sqrt();
        if best.as_ref().map_or(true, |b| norm < b.0) {
            let (peak, tail) = nonlinear_tail(&model, &l);
            println!("|L|={norm:8.3} peak={peak:9.4} tail={tail:10.6}");
            if tail < 0.01 {
                best = Some((norm, l, peak, tail));
            }
        }
    }
    println!("tried {tried}, valid {valid}");
    if let Some((norm, l, peak, tail)) = best {
        println!("\nbest |L| = {norm:.4}, peak = {peak:.4}, tail = {tail:.2e}\nL = {l:.5}");
    } else {
        println!("no stabilizing parametric L found");
    }
}
