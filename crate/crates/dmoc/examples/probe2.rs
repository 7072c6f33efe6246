use dmoc::linalg::{Ldlt, Mat, inf_norm};
use dmoc::ocp;
use dmoc::problems;
use dmoc::sqp;

fn main() {
    let o = problems::two_link(&problems::TwoLinkParams::default(), 8);
    let nlp = ocp::transcribe(&o).unwrap();
    let guess = ocp::initial_guess(&o, &nlp);
    let opts = sqp::SqpOptions { max_major_iterations: 120, ..Default::default() };
    let res = sqp::solve(&nlp, &guess, &opts).unwrap();
    println!("status {:?} stat {:.2e} feas {:.2e}", res.status, res.stationarity, res.feasibility);

    // Inspect the KKT system at the final iterate with sigma = 0.
    let x = &res.solution;
    let g = nlp.objective_gradient(x);
    let c = nlp.constraints(x);
    let a = nlp.constraint_jacobian(x);
    let w = nlp.lagrangian_hessian(x, &res.multipliers, 1.0);
    let (n, m) = (nlp.dimension, nlp.constraint_count);
    let dim = n + m;
    let mut k = Mat::zeros(dim, dim);
    for i in 0..n {
        for j in 0..=i { k[(i, j)] = w[(i, j)]; }
    }
    for r in 0..m {
        for cc in 0..n { k[(n + r, cc)] = a[(r, cc)]; }
    }
    let f = Ldlt::factor(&k).unwrap();
    println!("inertia {:?} (want ({n}, {m}, 0))", f.inertia());
    let mut rhs = vec![0.0; dim];
    for i in 0..n { rhs[i] = -g[i]; }
    for r in 0..m { rhs[n + r] = -c[r]; }
    let z = f.solve(&rhs);
    // residual of the solve: K z - rhs (K symmetric: mirror lower)
    for i in 0..dim { for j in 0..i { k[(j, i)] = k[(i, j)]; } }
    let kz = k.mul_vec(&z);
    let mut resid = 0.0f64;
    for i in 0..dim { resid = resid.max((kz[i] - rhs[i]).abs()); }
    println!("solve residual {:.3e}, |z| {:.3e}, |rhs| {:.3e}", resid, inf_norm(&z), inf_norm(&rhs));
    println!("multiplier part |lam| {:.3e}", inf_norm(&z[n..]));
}
