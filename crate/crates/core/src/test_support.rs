use crate::velocity_model::{mirror_half_line, normalize_weights, VelocityModel};

pub const GAUSS_V: [f64; 9] = [
    0.0848, 0.2519, 0.4118, 0.5598, 0.6917, 0.8037, 0.8926, 0.9558, 0.9916,
];
pub const GAUSS_W: [f64; 9] = [
    0.0846, 0.0822, 0.0774, 0.0703, 0.0613, 0.0505, 0.0382, 0.0249, 0.0108,
];
pub const GRADED_V: [f64; 9] = [0.015, 0.03, 0.05, 0.08, 0.12, 0.16, 0.25, 0.5, 1.0];

fn build(half_v: &[f64], half_w: &[f64], chi_s: f64, chi_n: f64) -> VelocityModel {
    let mut v = vec![0.0];
    v.extend_from_slice(half_v);
    let mut w = vec![0.0];
    w.extend_from_slice(half_w);
    let (v, w) = mirror_half_line(&v, &w).unwrap();
    VelocityModel::new(v, normalize_weights(&w), chi_s, chi_n).unwrap()
}

pub fn gauss_model(chi_s: f64, chi_n: f64) -> VelocityModel {
    build(&GAUSS_V, &GAUSS_W, chi_s, chi_n)
}

pub fn graded_model() -> VelocityModel {
    build(&GRADED_V, &[1.0 / 18.0; 9], 0.5, 0.45)
}

pub fn two_velocity_model() -> VelocityModel {
    VelocityModel::new(vec![-1.0, 1.0], vec![0.5, 0.5], 0.3, 0.15).unwrap()
}
