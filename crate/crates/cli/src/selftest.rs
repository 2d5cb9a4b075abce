//! Reduced-size reference and oracle-equivalence suites. The report is
//! deterministic: it contains no timings and every generator is seeded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use secfpp::cluster::{
    decision_margin, plaintext_oracle, secpc_round, share_reduced, to_holders, AdaptiveConfig, ClusterAssignment,
    DecodeBounds,
};
use secfpp::field::{PrimeField, QuantConfig};
use secfpp::infotheory::special::{dawson, digamma, erfi, exp_integral_ei, hyp2f2, ln_gamma};
use secfpp::infotheory::{chi2_entropy, g_family, h_family, ksg_mi, ncx2_entropy, Samples};
use secfpp::lcc::{recon_robust, recon_vector, share_vector, LccParams};
use secfpp::protocol::{secure_aggregate, LeakInjection, RunConfig, Simulation};

use crate::Failure;

struct Suite {
    checks: usize,
    failures: Vec<String>,
}

impl Suite {
    fn new() -> Self {
        Self { checks: 0, failures: Vec::new() }
    }
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }
    fn close(&mut self, name: &str, got: f64, want: f64, rel: f64) {
        let ok = (got - want).abs() <= rel * want.abs().max(1.0);
        self.check(ok, || format!("{name}: got {got:.17e}, want {want:.17e}"));
    }
}

fn special_functions(s: &mut Suite) {
    let refs: [(&str, f64, f64); 20] = [
        ("digamma(0.1)", digamma(0.1).unwrap_or(f64::NAN), -10.423754940411076232),
        ("digamma(2.5)", digamma(2.5).unwrap_or(f64::NAN), 0.70315664064524318723),
        ("ln_gamma(12.5)", ln_gamma(12.5).unwrap_or(f64::NAN), 18.734347511936445702),
        ("Ei(-1)", exp_integral_ei(-1.0).unwrap_or(f64::NAN), -0.21938393439552027368),
        ("Ei(-10)", exp_integral_ei(-10.0).unwrap_or(f64::NAN), -4.1569689296853242774e-6),
        ("Ei(2.5)", exp_integral_ei(2.5).unwrap_or(f64::NAN), 7.0737658945786007119),
        ("erfi(1)", erfi(1.0), 1.650425758797542876),
        ("erfi(3)", erfi(3.0), 1629.9946226015656511),
        ("dawson(0.5)", dawson(0.5), 0.42443638350202229593),
        ("dawson(10)", dawson(10.0), 0.050253847187598528033),
        ("2F2(1,1;3/2,2;-5)", hyp2f2(1.0, 1.0, 1.5, 2.0, -5.0).unwrap_or(f64::NAN), 0.34482756929418524804),
        ("g_1(0.01)", g_family(1, 0.01).unwrap_or(f64::NAN), -0.56724060944997753604),
        ("g_2(0.7)", g_family(2, 0.7).unwrap_or(f64::NAN), 0.73625775102133458367),
        ("g_5(3)", g_family(5, 3.0).unwrap_or(f64::NAN), 1.9894857656805591859),
        ("g_40(25)", g_family(40, 25.0).unwrap_or(f64::NAN), 4.1636749837714373277),
        ("h_1(0.7)", h_family(1, 0.7).unwrap_or(f64::NAN), -0.83731775729760345153),
        ("h_3(3)", h_family(3, 3.0).unwrap_or(f64::NAN), 1.2864069165345084738),
        ("h_5(25)", h_family(5, 25.0).unwrap_or(f64::NAN), 3.2782674320576333187),
        ("h_9(60)", h_family(9, 60.0).unwrap_or(f64::NAN), 4.1514827449536633227),
        ("h(ncchi2(4, 10))", ncx2_entropy(4, 10.0).unwrap_or(f64::NAN), 3.29093795626498772),
    ];
    for (name, got, want) in refs {
        s.close(name, got, want, 1e-9);
    }
    s.close("chi2_entropy(2)", chi2_entropy(2).unwrap_or(f64::NAN), 1.0 + std::f64::consts::LN_2, 1e-12);
    for m in 1..=8 {
        s.close(&format!("g_{m}(0)"), g_family(m, 0.0).unwrap_or(f64::NAN), digamma(m as f64).unwrap_or(0.0), 1e-12);
        let n = 2 * m - 1;
        s.close(&format!("h_{n}(0)"), h_family(n, 0.0).unwrap_or(f64::NAN), digamma(n as f64 / 2.0).unwrap_or(0.0), 1e-12);
    }
}

fn lcc_roundtrip(s: &mut Suite) {
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let field = PrimeField::above(1 << 61).expect("field exists");
    for case in 0..100 {
        let ell = rng.random_range(1..=4);
        let t = rng.random_range(0..=5);
        let n = rng.random_range((2 * (ell + t)).min(31)..=31);
        let params = match LccParams::new(field, n, t, ell, 2) {
            Ok(p) => p,
            Err(e) => {
                s.check(false, || format!("case {case}: {e}"));
                continue;
            }
        };
        let dim = rng.random_range(1..=64);
        let secret: Vec<_> = (0..dim).map(|_| field.random(&mut rng)).collect();
        let shares = share_vector(&secret, &params, &mut rng).expect("valid shape");
        let degree = params.code_degree();
        let back = recon_vector(&shares, degree, &params, dim);
        s.check(back.as_ref().ok() == Some(&secret), || format!("case {case}: full reconstruction"));
        let kept: Vec<_> = shares[n - degree - 1..].to_vec();
        let back = recon_vector(&kept, degree, &params, dim);
        s.check(back.as_ref().ok() == Some(&secret), || format!("case {case}: reconstruction after erasures"));
        let errors = (n - degree - 1) / 2;
        let mut noisy = shares.clone();
        for b in noisy.iter_mut().take(errors) {
            b.share[0] = field.add(b.share[0], field.one());
        }
        let robust = recon_robust(&noisy, degree, &params).map(|r| secfpp::lcc::unslice(&r.secrets, dim));
        s.check(robust.as_ref().ok() == Some(&secret), || format!("case {case}: robust decoding of {errors} errors"));
    }
}

/// Clustered reduced prompts around a random assignment, resampled until
/// every decision has a margin well above quantization error.
pub fn oracle_instance(rng: &mut ChaCha20Rng, max_n: usize, max_r: usize) -> (Vec<Vec<f64>>, ClusterAssignment, AdaptiveConfig) {
    loop {
        let n = rng.random_range(4..=max_n);
        let r = rng.random_range(1..=max_r);
        let groups = rng.random_range(1..=3.min(n));
        let centers: Vec<Vec<f64>> = (0..groups).map(|_| (0..r).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
        let reduced: Vec<Vec<f64>> = (0..n)
            .map(|i| centers[i % groups].iter().map(|c| c + rng.random_range(-0.5..0.5)).collect())
            .collect();
        let k = rng.random_range(1..=3.min(n));
        let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        let s = ClusterAssignment::new(n, (0..k).map(|c| (0..n).filter(|&i| labels[i] == c).collect()).collect())
            .expect("every label used");
        let cfg = AdaptiveConfig::fixed(rng.random_range(1.0..20.0), rng.random_range(0.5..10.0));
        let (_, d, gaps) = plaintext_oracle(&reduced, &s, &cfg);
        if decision_margin(&d, &gaps, &cfg) > 0.05 * (r as f64).sqrt() {
            return (reduced, s, cfg);
        }
    }
}

fn secpc_oracle(s: &mut Suite) {
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    for case in 0..20 {
        let (reduced, start, cfg) = oracle_instance(&mut rng, 16, 8);
        let (n, r) = (reduced.len(), reduced[0].len());
        let t = LccParams::threshold(n, 1.0 / 3.0);
        let field = PrimeField::above(DecodeBounds::new(n, r, 1000, 5.0).min_modulus().max(1 << 40)).expect("field");
        let params = LccParams::new(field, n, t, LccParams::default_ell(n, t), 2).expect("params");
        let quant = QuantConfig::new(1000, 5.0).expect("quant");
        let holders = to_holders(&share_reduced(&reduced, &params, &quant, &mut rng).expect("shares"), n);
        let secure = secpc_round(&holders, &start, &params, &quant, &cfg).map(|o| o.assignment);
        let (plain, _, _) = plaintext_oracle(&reduced, &start, &cfg);
        s.check(secure.as_ref().ok() == Some(&plain), || format!("instance {case}: secure {secure:?} vs oracle {plain:?}"));
    }
}

fn aggregation(s: &mut Suite) {
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let n = 9;
    let field = PrimeField::above(1 << 40).expect("field");
    let params = LccParams::new(field, n, 3, LccParams::default_ell(n, 3), 2).expect("params");
    let quant = QuantConfig::new(1000, 8.0).expect("quant");
    let grads: Vec<Vec<f64>> = (0..n).map(|_| (0..10).map(|_| rng.random_range(-8.0..8.0)).collect()).collect();
    let holders = to_holders(&share_reduced(&grads, &params, &quant, &mut rng).expect("shares"), n);
    let assignment = ClusterAssignment::new(n, vec![vec![0, 3, 4, 8], vec![1, 2], vec![5, 6, 7]]).expect("partition");
    let means = secure_aggregate(&holders, &assignment, &params, &quant, 10).expect("aggregate decodes");
    for (c, members) in assignment.clusters().iter().enumerate() {
        for j in 0..10 {
            let want = members.iter().map(|&i| grads[i][j]).sum::<f64>() / members.len() as f64;
            s.check((means[c][j] - want).abs() <= 1e-3, || format!("cluster {c} coordinate {j}"));
        }
    }
}

fn ksg(s: &mut Suite) {
    use rand_distr_shim::gaussian_pair;
    let (x, y) = gaussian_pair(1000, 0.9, 404);
    let est = ksg_mi(&x, &y, 3).unwrap_or(f64::NAN);
    s.check((est - 0.8304).abs() < 0.1, || format!("rho = 0.9 estimate {est}"));
    let (x, y) = gaussian_pair(1000, 0.0, 405);
    let est = ksg_mi(&x, &y, 3).unwrap_or(f64::NAN);
    s.check(est.abs() < 0.05, || format!("independent estimate {est}"));
}

mod rand_distr_shim {
    use super::*;

    /// Unit normals via Box-Muller, so the suite needs no extra distribution crate.
    pub fn gaussian_pair(n: usize, rho: f64, seed: u64) -> (Samples, Samples) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut normal = move || {
            let (u, v): (f64, f64) = (rng.random::<f64>().max(f64::MIN_POSITIVE), rng.random());
            (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
        };
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let (a, b) = (normal(), normal());
            xs.push(vec![a]);
            ys.push(vec![rho * a + (1.0 - rho * rho).sqrt() * b]);
        }
        (Samples::from_rows(&xs).expect("finite"), Samples::from_rows(&ys).expect("finite"))
    }
}

fn protocol_audit(s: &mut Suite) {
    let mut cfg = RunConfig::with_seed(7);
    cfg.n = 8;
    cfg.rounds = 3;
    let outcome = Simulation::init(cfg.clone()).and_then(|mut sim| sim.run().map(|_| sim.audit()));
    s.check(outcome.as_ref().is_ok_and(|r| r.passed), || format!("nominal run: {outcome:?}"));
    cfg.inject_leak = Some(LeakInjection { user: 2 });
    let outcome = Simulation::init(cfg).and_then(|mut sim| sim.run().map(|_| sim.audit()));
    s.check(outcome.as_ref().is_ok_and(|r| !r.passed), || "leaking run passed the audit".to_string());
}

pub fn main() -> Result<(), Failure> {
    let suites: [(&str, fn(&mut Suite)); 6] = [
        ("special-functions", special_functions),
        ("lcc-roundtrip", lcc_roundtrip),
        ("secpc-oracle-equivalence", secpc_oracle),
        ("secure-aggregation", aggregation),
        ("ksg-calibration", ksg),
        ("protocol-audit", protocol_audit),
    ];
    let mut all_passed = true;
    for (name, run) in suites {
        let mut suite = Suite::new();
        run(&mut suite);
        let passed = suite.failures.is_empty();
        all_passed &= passed;
        println!(
            "{name}: {} ({}/{} checks)",
            if passed { "PASS" } else { "FAIL" },
            suite.checks - suite.failures.len(),
            suite.checks
        );
        for f in suite.failures.iter().take(5) {
            println!("  {f}");
        }
    }
    if all_passed {
        Ok(())
    } else {
        Err(Failure::Selftest)
    }
}
