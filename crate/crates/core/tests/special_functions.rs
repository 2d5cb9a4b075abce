//! Special functions and chi-squared quantities against high-precision
//! reference values (computed with mpmath at 30 digits).

use secfpp::infotheory::special::{digamma, dawson, erfi, exp_integral_ei, hyp2f2, ln_gamma};
use secfpp::infotheory::{g_family, h_family, ncx2_entropy};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn gamma_functions() {
    let cases = [
        (digamma(0.1).unwrap(), -10.423754940411076232),
        (digamma(2.5).unwrap(), 0.70315664064524318723),
        (digamma(250.0).unwrap(), 5.519459584531046417),
        (ln_gamma(0.1).unwrap(), 2.252712651734205902),
        (ln_gamma(12.5).unwrap(), 18.734347511936445702),
        (ln_gamma(1000.0).unwrap(), 5905.2204232091812118),
    ];
    for (got, want) in cases {
        assert!(rel(got, want) < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn exponential_integral() {
    let cases = [
        (-1.0, -0.21938393439552027368),
        (-0.001, -6.3315393641361493112),
        (-5.0, -0.0011482955912753257973),
        (-10.0, -4.1569689296853242774e-6),
        (-45.0, -6.2256908094623836431e-22),
        (0.2, -0.82176058790240024785),
        (2.5, 7.0737658945786007119),
        (30.0, 368973209407.27419706),
        (60.0, 1.9361822139292765388e24),
    ];
    for (x, want) in cases {
        let got = exp_integral_ei(x).unwrap();
        assert!(rel(got, want) < 1e-12, "Ei({x}) = {got}, want {want}");
    }
    assert!(exp_integral_ei(0.0).is_err());
}

#[test]
fn dawson_and_erfi() {
    for (x, want) in [(0.3, 0.3489493387589361667), (1.0, 1.650425758797542876), (3.0, 1629.9946226015656511), (5.5, 1432099172039.8328215)] {
        assert!(rel(erfi(x), want) < 1e-12, "erfi({x})");
    }
    for (x, want) in [
        (0.5, 0.42443638350202229593),
        (6.5, 0.077867818986069871389),
        (10.0, 0.050253847187598528033),
        (40.0, 0.012503909917843973199),
    ] {
        assert!(rel(dawson(x), want) < 1e-12, "dawson({x})");
    }
}

#[test]
fn hypergeometric_2f2() {
    for (z, want) in [(-0.5, 0.85337120859208961159), (-5.0, 0.34482756929418524804), (-20.0, 0.12333034918110900154)] {
        let got = hyp2f2(1.0, 1.0, 1.5, 2.0, z).unwrap();
        assert!(rel(got, want) < 1e-9, "2F2 at {z}: {got}");
    }
    let got = hyp2f2(0.5, 2.0, 3.0, 1.5, 2.25).unwrap();
    assert!(rel(got, 1.9182024823394370526) < 1e-12);
}

#[test]
fn even_family() {
    let cases = [
        (1, 0.01, -0.56724060944997753604),
        (1, 3.0, 1.1116606697623067288),
        (2, 0.7, 0.73625775102133458367),
        (5, 3.0, 1.9894857656805591859),
        (40, 0.01, 3.6765773435518767381),
        (40, 25.0, 4.1636749837714373277),
    ];
    for (m, xi, want) in cases {
        let got = g_family(m, xi).unwrap();
        assert!((got - want).abs() < 1e-9, "g_{m}({xi}) = {got}, want {want}");
    }
}

#[test]
fn odd_family() {
    let cases = [
        (1, 0.01, -1.943576515290588525),
        (1, 0.7, -0.83731775729760345153),
        (1, 60.0, 4.0859040338758123526),
        (3, 3.0, 1.2864069165345084738),
        (5, 25.0, 3.2782674320576333187),
        (9, 0.01, 1.3910911304496629401),
        (9, 60.0, 4.1514827449536633227),
    ];
    for (n, xi, want) in cases {
        let got = h_family(n, xi).unwrap();
        assert!((got - want).abs() < 1e-9, "h_{n}({xi}) = {got}, want {want}");
    }
}

#[test]
fn noncentral_entropy_by_quadrature() {
    let cases = [
        (1, 0.5, 1.21558691848225597),
        (4, 10.0, 3.29093795626498772),
        (16, 100.0, 4.44644805151182528),
        (7, 3.0, 2.96229845044034311),
        (2, 400.0, 5.10719101969783315),
    ];
    for (d, tau, want) in cases {
        let got = ncx2_entropy(d, tau).unwrap();
        assert!((got - want).abs() < 1e-8, "h(ncchi2({d}, {tau})) = {got}, want {want}");
    }
}
