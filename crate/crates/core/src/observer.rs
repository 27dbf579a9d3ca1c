//! Full-state observer `x̂̇ = Ax̂ + Bu_f + L(y − Cx̂)` and single-output pole placement.

use crate::error::{dim_err, Error, Result};
use crate::numerics::{eigenvalues, is_hurwitz, Complex, Mat, Vector};
use crate::plant::{observability_matrix, LtiPlant};

/// Observer gain with its Hurwitz certificate on `A − LC`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGain {
    l: Mat,
}

impl ObserverGain {
    pub fn new(plant: &LtiPlant, l: Mat) -> Result<Self> {
        if l.shape() != (plant.states(), plant.outputs()) {
            return Err(dim_err(
                "observer gain L",
                format!("{}x{}", plant.states(), plant.outputs()),
                format!("{}x{}", l.nrows(), l.ncols()),
            ));
        }
        let error_dynamics = plant.a() - &l * plant.c();
        if !is_hurwitz(&error_dynamics)? {
            return Err(Error::Config("observer gain L does not make A - LC Hurwitz".into()));
        }
        Ok(Self { l })
    }

    pub fn matrix(&self) -> &Mat {
        &self.l
    }
}

pub fn observer_derivative(plant: &LtiPlant, l: &Mat, x_hat: &Vector, u_f: &Vector, y: &Vector) -> Result<Vector> {
    if x_hat.len() != plant.states() {
        return Err(dim_err("observer x_hat", plant.states(), x_hat.len()));
    }
    if u_f.len() != plant.inputs() {
        return Err(dim_err("observer u_f", plant.inputs(), u_f.len()));
    }
    if y.len() != plant.outputs() {
        return Err(dim_err("observer y", plant.outputs(), y.len()));
    }
    if l.shape() != (plant.states(), plant.outputs()) {
        return Err(dim_err("observer L", format!("{}x{}", plant.states(), plant.outputs()), format!("{}x{}", l.nrows(), l.ncols())));
    }
    let innovation = y - plant.c() * x_hat;
    Ok(plant.a() * x_hat + plant.b() * u_f + l * innovation)
}

/// `x_e = x − x̂`.
pub fn estimation_error(x: &Vector, x_hat: &Vector) -> Result<Vector> {
    if x.len() != x_hat.len() {
        return Err(dim_err("estimation_error", x.len(), x_hat.len()));
    }
    Ok(x - x_hat)
}

/// Ackermann placement of the eigenvalues of `A − LC` for a single-output plant.
pub fn place_observer_poles(plant: &LtiPlant, poles: &[Complex]) -> Result<Mat> {
    let n = plant.states();
    if plant.outputs() != 1 {
        return Err(Error::UnsupportedMultiOutput(plant.outputs()));
    }
    if poles.len() != n {
        return Err(dim_err("observer poles", n, poles.len()));
    }
    let coeffs = real_polynomial(poles)?;
    let a = plant.a();

    // φ(A) = Aⁿ + c₁Aⁿ⁻¹ + … + cₙI  (Horner)
    let mut phi = Mat::identity(n, n);
    for &c in &coeffs[1..] {
        phi = &phi * a + Mat::identity(n, n) * c;
    }
    let obs = observability_matrix(a, plant.c());
    let lu = obs.lu();
    let mut e_n = Vector::zeros(n);
    e_n[n - 1] = 1.0;
    let column = lu.solve(&e_n).ok_or(Error::NotObservable)?;
    let l = phi * column;
    Ok(Mat::from_column_slice(n, 1, l.as_slice()))
}

/// Monic polynomial coefficients (highest degree first) with the given roots,
/// which must be closed under conjugation.
fn real_polynomial(roots: &[Complex]) -> Result<Vec<f64>> {
    let mut remaining: Vec<Complex> = roots.to_vec();
    for r in roots {
        if r.im != 0.0 {
            let tol = 1e-9 * r.norm().max(1.0);
            let has_conj = roots.iter().any(|q| (q - r.conj()).norm() <= tol);
            if !has_conj {
                return Err(Error::InvalidArgument(format!("pole {r} has no conjugate partner")));
            }
        }
    }
    let mut coeffs: Vec<Complex> = vec![Complex::new(1.0, 0.0)];
    for r in remaining.drain(..) {
        let mut next = vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    Ok(coeffs.iter().map(|c| c.re).collect())
}

/// Spectrum of `A − LC`.
pub fn error_spectrum(plant: &LtiPlant, l: &Mat) -> Result<Vec<Complex>> {
    eigenvalues(&(plant.a() - l * plant.c()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn nominal_plant() -> LtiPlant {
        let a = Mat::from_row_slice(3, 3, &[-31.31, 0.0, -2.83e4, 0.0, -10.25, 8001.0, 1.0, -1.0, 0.0]);
        let b = Mat::from_column_slice(3, 1, &[28.06, 0.0, 0.0]);
        let c = Mat::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        LtiPlant::with_input_disturbance(a, b, c).unwrap()
    }

    fn nominal_l() -> Mat {
        Mat::from_column_slice(3, 1, &[0.52, 2.215, -0.245])
    }

    #[test]
    fn derivative_examples() {
        let p = nominal_plant();
        let l = nominal_l();
        let z = Vector::zeros(3);
        let u0 = Vector::zeros(1);
        assert_eq!(observer_derivative(&p, &l, &z, &u0, &u0).unwrap(), z);

        let x = Vector::from_vec(vec![0.1, -0.2, 0.003]);
        let u = Vector::from_element(1, 0.7);
        let y = p.output(&x).unwrap();
        let d = observer_derivative(&p, &l, &x, &u, &y).unwrap();
        assert_eq!(d, p.a() * &x + p.b() * &u);

        let d = observer_derivative(&p, &l, &z, &u0, &Vector::from_element(1, 1.0)).unwrap();
        assert_eq!(d.as_slice(), &[0.52, 2.215, -0.245]);
    }

    #[test]
    fn estimation_error_examples() {
        let x = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(estimation_error(&x, &x).unwrap(), Vector::zeros(3));
        assert_eq!(estimation_error(&x, &Vector::zeros(3)).unwrap(), x);
        let e = estimation_error(&Vector::from_vec(vec![1.0, 0.0, 0.0]), &Vector::from_vec(vec![0.0, 1.0, 0.0])).unwrap();
        assert_eq!(e.as_slice(), &[1.0, -1.0, 0.0]);
        assert!(estimation_error(&x, &Vector::zeros(2)).is_err());
    }

    #[test]
    fn nominal_gain_is_hurwitz() {
        let p = nominal_plant();
        assert!(ObserverGain::new(&p, nominal_l()).is_ok());
        let spectrum = error_spectrum(&p, &nominal_l()).unwrap();
        assert!(spectrum.iter().all(|l| l.re < -13.0));
    }

    #[test]
    fn destabilizing_gain_rejected() {
        let p = nominal_plant();
        let l = Mat::from_column_slice(3, 1, &[-1000.0, 0.0, 0.0]);
        assert!(matches!(ObserverGain::new(&p, l), Err(Error::Config(_))));
    }

    #[test]
    fn ackermann_double_integrator() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = Mat::from_column_slice(2, 1, &[0.0, 1.0]);
        let c = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let p = LtiPlant::with_input_disturbance(a, b, c).unwrap();
        let l = place_observer_poles(&p, &[Complex::new(-1.0, 0.0), Complex::new(-2.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(l, Mat::from_column_slice(2, 1, &[3.0, 2.0]), epsilon = 1e-12);
    }

    #[test]
    fn ackermann_scalar() {
        let one = Mat::from_element(1, 1, 1.0);
        let p = LtiPlant::with_input_disturbance(Mat::from_element(1, 1, -1.0), one.clone(), one).unwrap();
        let l = place_observer_poles(&p, &[Complex::new(-5.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(l[(0, 0)], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn ackermann_round_trip_on_nominal_gain() {
        let p = nominal_plant();
        let poles = error_spectrum(&p, &nominal_l()).unwrap();
        let l = place_observer_poles(&p, &poles).unwrap();
        let mut placed = error_spectrum(&p, &l).unwrap();
        let mut wanted = poles.clone();
        let key = |c: &Complex| (c.re, c.im);
        placed.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        wanted.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for (a, b) in placed.iter().zip(&wanted) {
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
        assert_abs_diff_eq!(l, nominal_l(), epsilon = 1e-6);
    }

    #[test]
    fn placement_errors() {
        let p = nominal_plant();
        let lonely = [Complex::new(-1.0, 2.0), Complex::new(-1.0, 3.0), Complex::new(-4.0, 0.0)];
        assert!(place_observer_poles(&p, &lonely).is_err());
        assert!(place_observer_poles(&p, &[Complex::new(-1.0, 0.0)]).is_err());
    }
}
