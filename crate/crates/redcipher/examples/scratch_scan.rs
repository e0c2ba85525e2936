// temporary diagnostic - deleted before ship
use nalgebra::DMatrix;
use redcipher::control::{char_poly, poly_from_roots};
use redcipher::plant::{advance_sample, linearize, PlantParams};
use redcipher::sim::{FEEDBACK_GAIN, INITIAL_STATE, OBSERVER_POLES};

fn l_for_direction(model: &redcipher::plant::LinearModel, phi: f64) -> Option<DMatrix<f64>> {
    let n = 5;
    let f = model.a.transpose();
    let g = model.c.transpose();
    let v = DMatrix::from_column_slice(2, 1, &[phi.cos(), phi.sin()]);
    let b = &g * &v;
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        ctrb.view_mut((0, j), (n, 1)).copy_from(&col);
        col = &f * &col;
    }
    let ctrb_inv = ctrb.try_inverse()?;
    let mut p_of_f = DMatrix::identity(n, n);
    for pole in OBSERVER_POLES {
        p_of_f = p_of_f * (&f - DMatrix::from_diagonal_element(n, n, pole));
    }
    let k_single = ctrb_inv.row(n - 1).into_owned() * p_of_f;
    let l = (v * k_single).transpose();
    let target = poly_from_roots(&OBSERVER_POLES);
    let got = char_poly(&(&model.a - &l * &model.c));
    let err = got.iter().zip(&target).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
    if err < 1e-8 {
        Some(l)
    } else {
        None
    }
}

fn nonlinear_peak(model: &redcipher::plant::LinearModel, l: &DMatrix<f64>) -> (f64, f64) {
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
    let mut final_theta = 0.0f64;
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
            final_theta = final_theta.max(state.theta1.abs()).max(state.theta2.abs());
        }
    }
    (peak, final_theta)
}

fn main() {
    let model = linearize(&PlantParams::demo(), 0.01).unwrap();
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for i in 0..180 {
        let phi = std::f64::consts::PI * (i as f64) / 180.0;
        let Some(l) = l_for_direction(&model, phi) else { continue };
        let norm = l.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 25.0 {
            let (peak, tail) = nonlinear_peak(&model, &l);
            let ok = tail < 0.01;
            if i % 10 == 0 || ok || norm < 3.0 {
                println!(
                    "phi={phi:6.3} |L|={norm:8.3} peak={peak:9.4} tail(t>5s)={tail:10.6} {}",
                    if ok { "STABILIZES" } else { "" }
                );
            }
            if ok && best.map_or(true, |b| norm < b.1) {
                best = Some((phi, norm, peak, tail));
            }
        }
    }
    match best {
        Some((phi, norm, peak, tail)) => println!(
            "\nbest: phi={phi:.4} |L|={norm:.3} peak={peak:.4} tail={tail:.2e}"
        ),
        None => println!("\nno direction stabilizes the nonlinear loop"),
    }
}
