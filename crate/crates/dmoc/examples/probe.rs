use dmoc::ocp;
use dmoc::problems;
use dmoc::sqp;

fn main() {
    for n in [8usize, 16, 32, 64] {
        let t0 = std::time::Instant::now();
        let o = problems::orbital_transfer(&problems::OrbitalParams::default(), n);
        let nlp = ocp::transcribe(&o).unwrap();
        let guess = ocp::initial_guess(&o, &nlp);
        let opts = sqp::SqpOptions { max_major_iterations: 800, ..Default::default() };
        let res = sqp::solve(&nlp, &guess, &opts).unwrap();
        println!(
            "orbital N={n}: status {:?} iters {} obj {:.8e} stat {:.2e} feas {:.2e} ({:.2?})",
            res.status, res.major_iterations, nlp.objective(&res.solution),
            res.stationarity, res.feasibility, t0.elapsed()
        );
    }
    for n in [8usize, 16, 32, 64] {
        let t0 = std::time::Instant::now();
        let o = problems::two_link(&problems::TwoLinkParams::default(), n);
        let nlp = ocp::transcribe(&o).unwrap();
        let guess = ocp::initial_guess(&o, &nlp);
        let opts = sqp::SqpOptions { max_major_iterations: 800, ..Default::default() };
        let res = sqp::solve(&nlp, &guess, &opts).unwrap();
        println!(
            "two-link N={n}: status {:?} iters {} obj {:.8e} stat {:.2e} feas {:.2e} ({:.2?})",
            res.status, res.major_iterations, nlp.objective(&res.solution),
            res.stationarity, res.feasibility, t0.elapsed()
        );
    }
}
