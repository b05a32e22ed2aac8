//! Haar-random unitaries via QR of a complex Gaussian matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<Complex64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let z = DMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let norm = rjj.norm();
        let phase = if norm > 0.0 { rjj / norm } else { Complex64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::task_rng;

    #[test]
    fn unitary_to_machine_precision() {
        let mut rng = task_rng(1, 0);
        for d in [1, 2, 4, 8, 16] {
            let u = haar_unitary(d, &mut rng);
            let err = (u.adjoint() * &u - DMatrix::identity(d, d)).norm();
            assert!(err < 1e-12, "d={d} err={err}");
        }
    }

    #[test]
    fn first_moment_of_entry_modulus() {
        // E|U_11|^2 = 1/d and E|U_11|^4 = 2/(d(d+1)).
        let d = 4;
        let mut rng = task_rng(2, 0);
        let samples = 40_000;
        let (mut m2, mut m4) = (0.0, 0.0);
        for _ in 0..samples {
            let a = haar_unitary(d, &mut rng)[(0, 0)].norm_sqr();
            m2 += a;
            m4 += a * a;
        }
        m2 /= samples as f64;
        m4 /= samples as f64;
        assert!((m2 - 0.25).abs() < 0.005, "{m2}");
        assert!((m4 - 0.1).abs() < 0.004, "{m4}");
    }

    #[test]
    fn phase_is_uniform() {
        // Without the phase fix, the diagonal of Q is biased toward the real axis.
        let mut rng = task_rng(3, 0);
        let samples = 20_000;
        let mut mean = Complex64::new(0.0, 0.0);
        for _ in 0..samples {
            mean += haar_unitary(2, &mut rng)[(0, 0)];
        }
        mean /= samples as f64;
        assert!(mean.norm() < 0.02, "{mean}");
    }
}
