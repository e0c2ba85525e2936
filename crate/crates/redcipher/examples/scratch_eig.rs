// temporary diagnostic - deleted before ship
use nalgebra::DMatrix;
use redcipher::control::place_observer;
use redcipher::plant::{linearize, PlantParams};
use redcipher::sim::{FEEDBACK_GAIN, OBSERVER_POLES};

fn main() {
    let p = PlantParams::demo();
    let model = linearize(&p, 0.01).unwrap();
    println!("A_d =\n{:.6}", model.a);
    println!("B_d =\n{:.6}", model.b);

    let k = DMatrix::from_row_slice(1, 5, &FEEDBACK_GAIN);
    let a_bk = &model.a + &model.b * &k;
    let eig = a_bk.complex_eigenvalues();
    println!("eig(A + BK):");
    for e in eig.iter() {
        println!("  {:.6} + {:.6}i  (|.| = {:.6})", e.re, e.im, e.norm());
    }

    let a_mbk = &model.a - &model.b * &k;
    println!("eig(A - BK):");
    for e in a_mbk.complex_eigenvalues().iter() {
        println!("  {:.6} + {:.6}i  (|.| = {:.6})", e.re, e.im, e.norm());
    }

    let l = place_observer(&model.a, &model.c, &OBSERVER_POLES).unwrap();
    println!("L =\n{:.6}", l);

    // Delayed-input augmented loop: states (x, xhat, u).
    for sign in [1.0f64, -1.0] {
        let ks = &k * sign;
        let mut m = DMatrix::zeros(11, 11);
        m.view_mut((0, 0), (5, 5)).copy_from(&model.a);
        m.view_mut((0, 10), (5, 1)).copy_from(&model.b);
        // xhat+ = (A-LC) xhat + B u + L C x
        m.view_mut((5, 0), (5, 5)).copy_from(&(&l * &model.c));
        m.view_mut((5, 5), (5, 5)).copy_from(&(&model.a - &l * &model.c));
        m.view_mut((5, 10), (5, 1)).copy_from(&model.b);
        // u+ = K xhat+
        let krow = &ks * m.view((5, 0), (5, 11)).into_owned();
        m.view_mut((10, 0), (1, 11)).copy_from(&krow);
        let rho = m
            .complex_eigenvalues()
            .iter()
            .map(|e| e.norm())
            .fold(0.0f64, f64::max);
        println!("sign {sign}: delayed-loop spectral radius = {rho:.6}");
    }
}
