use frem_core::metrics::{estimate_gdp, estimate_mi_knn, DEFAULT_MI_NEIGHBORS};
use frem_core::{CounterRng, Matrix, SmoothingKernel};

fn correlated(n: usize, rho: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = CounterRng::new(seed);
    (0..n)
        .map(|_| {
            let (a, b) = (rng.normal(), rng.normal());
            (a, rho * a + (1.0 - rho * rho).sqrt() * b)
        })
        .unzip()
}

#[test]
fn mi_of_independent_variables_is_near_zero() {
    let (u, v) = correlated(2000, 0.0, 1);
    let mi = estimate_mi_knn(&u, &Matrix::column_vector(&v), DEFAULT_MI_NEIGHBORS).unwrap();
    assert!(mi.abs() < 0.06, "{mi}");
}

#[test]
fn mi_of_gaussian_pair_matches_closed_form() {
    for rho in [0.5, 0.8] {
        let (u, v) = correlated(3000, rho, 2);
        let mi = estimate_mi_knn(&u, &Matrix::column_vector(&v), DEFAULT_MI_NEIGHBORS).unwrap();
        let exact = -0.5 * (1.0 - rho * rho).ln();
        assert!((mi - exact).abs() < 0.05, "ρ={rho}: {mi} vs {exact}");
    }
}

#[test]
fn mi_is_roughly_invariant_to_monotone_maps() {
    let (u, v) = correlated(3000, 0.7, 3);
    let base = estimate_mi_knn(&u, &Matrix::column_vector(&v), DEFAULT_MI_NEIGHBORS).unwrap();
    let warped: Vec<f64> = v.iter().map(|x| x.powi(3) + x).collect();
    let mi = estimate_mi_knn(&u, &Matrix::column_vector(&warped), DEFAULT_MI_NEIGHBORS).unwrap();
    assert!((mi - base).abs() < 0.06, "{mi} vs {base}");
}

#[test]
fn mi_grows_with_dependence() {
    let values: Vec<f64> = [0.2, 0.5, 0.9]
        .iter()
        .map(|&rho| {
            let (u, v) = correlated(2000, rho, 4);
            estimate_mi_knn(&u, &Matrix::column_vector(&v), DEFAULT_MI_NEIGHBORS).unwrap()
        })
        .collect();
    assert!(values[0] < values[1] && values[1] < values[2], "{values:?}");
}

#[test]
fn multivariate_mi_sees_dependence_in_any_coordinate() {
    let (u, v) = correlated(2000, 0.8, 5);
    let mut rng = CounterRng::new(6);
    let v2 = Matrix::from_fn(2000, 2, |i, j| if j == 1 { v[i] } else { rng.normal() });
    let mi = estimate_mi_knn(&u, &v2, DEFAULT_MI_NEIGHBORS).unwrap();
    assert!(mi > 0.2, "{mi}");
}

#[test]
fn gdp_of_linear_predictor_matches_population_value() {
    // pred = S with S uniform on [0, 1]: E|E[pred|S] − E pred| = 1/4.
    let mut rng = CounterRng::new(7);
    let s: Vec<f64> = (0..4000).map(|_| rng.uniform()).collect();
    let gdp = estimate_gdp(&s, &s, &SmoothingKernel::rbf(0.02).unwrap()).unwrap();
    assert!((gdp - 0.25).abs() < 0.01, "{gdp}");
}
