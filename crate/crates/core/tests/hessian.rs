use nalgebra::{DMatrix, SymmetricEigen};
use roomwave_core::physics::loss_gradient;
use roomwave_core::{
    hessian_top_eigenvalue, init_glorot, sample, Activation, HelmholtzProblem, LossWeights,
    NetworkSpec, Sharpness,
};

#[test]
fn power_iteration_matches_dense_hessian() {
    let spec = NetworkSpec::uniform(2, 2, 8, Activation::SIN, 21).unwrap();
    let p = init_glorot(&spec);
    let problem = HelmholtzProblem::unit_box(2, 1.0, -0.04, Sharpness::INFINITE);
    let samples = sample(&problem, 6.0, 9).unwrap();
    let w = LossWeights::square_2d_complex();

    let n = p.len();
    let h = 1e-5;
    let mut hess = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut a = p.clone();
        let mut b = p.clone();
        a.values[j] += h;
        b.values[j] -= h;
        let ga = loss_gradient(&a, &spec, &problem, &samples, w).unwrap();
        let gb = loss_gradient(&b, &spec, &problem, &samples, w).unwrap();
        for i in 0..n {
            hess[(i, j)] = (ga[i] - gb[i]) / (2.0 * h);
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.max();

    let est =
        hessian_top_eigenvalue(&p, &spec, &problem, &samples, w, 500, 1e-6 * top.abs()).unwrap();
    assert!(
        (est.value - top).abs() < 0.01 * top.abs(),
        "power iteration {} vs dense {}",
        est.value,
        top
    );
}
