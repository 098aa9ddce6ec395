//! Temporary API probe; removed once the real modules land.

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::FromPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn probe_realfield<T: RealField + Copy + FromPrimitive>(x: T) -> T {
    let a = x.abs();
    let b = a.sqrt() + a.exp() + a.ln().max(T::zero());
    let c = b.floor() + b.powi(2) + b.min(T::one());
    c + T::from_f64(0.5).unwrap()
}

pub fn probe_qr(n: usize, k: usize) -> (DVector<f64>, usize) {
    let x = DMatrix::<f64>::from_fn(n, k, |i, j| ((i * 7 + j * 3) % 11) as f64 + 1.0);
    let y = DVector::<f64>::from_fn(n, |i, _| i as f64);
    let qr = x.clone().col_piv_qr();
    let q = qr.q();
    let r = qr.r();
    let p = qr.p();
    let rank = (0..r.nrows().min(r.ncols()))
        .take_while(|&i| r[(i, i)].abs() > 1e-12)
        .count();
    let mut c = q.transpose() * &y;
    r.view((0, 0), (k, k)).solve_upper_triangular_mut(&mut c);
    p.inv_permute_rows(&mut c);
    (c, rank)
}

pub fn probe_rng() -> (f64, f64) {
    let mut r = ChaCha8Rng::seed_from_u64(42);
    r.set_stream(7);
    let z: f64 = StandardNormal.sample(&mut r);
    let u: f64 = r.random();
    (z, u)
}

pub fn probe_normal_generic<T>(seed: u64) -> T
where
    T: RealField + Copy,
    StandardNormal: Distribution<T>,
{
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    StandardNormal.sample(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probes_run() {
        let _ = probe_realfield(1.25f64);
        let _ = probe_realfield(1.25f32);
        let (beta, rank) = probe_qr(10, 3);
        assert_eq!(beta.len(), 3);
        assert_eq!(rank, 3);
        let _ = probe_rng();
        let _: f32 = probe_normal_generic(1);
    }
}
