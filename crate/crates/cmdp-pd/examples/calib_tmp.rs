use cmdp_pd::cmdp::RegularizationParams;
use cmdp_pd::harness::{build_instance, preset};
use cmdp_pd::pgpd::*;

fn main() {
    let config = preset("nav-quadratic").unwrap();
    let instance = build_instance(&config).unwrap();
    for lam in [0.0, 5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0] {
        let params = RegularizationParams::new(config.tau, config.eta, 1e4).unwrap();
        let opts = ExactOptions { iterations: 1500, pin_lambda: Some(lam) };
        let out = run_exact_pd(&instance, &params, &opts, None, 0).unwrap();
        let last = out.rows.last().unwrap();
        println!("lambda={lam:7.1}: v_r={:9.3} v_g={:9.3} (V_u={:9.3})", last.v_r, last.v_g, last.v_g + instance.threshold);
    }
}
