mod common;

use common::{digamma_dd, Dd, MPMATH_DIGAMMA};
use esvi::special::{digamma, try_digamma};

#[test]
fn oracle_matches_mpmath() {
    for &(x, hi, lo) in &MPMATH_DIGAMMA {
        let got = digamma_dd(x);
        let diff = got.sub(Dd::new(hi, lo)).to_f64().abs();
        assert!(diff <= 1e-28 * hi.abs().max(1.0), "psi({x}): off by {diff:e}");
    }
}

#[test]
fn digamma_against_oracle_on_sparse_grid() {
    let n = 2_000;
    let (lo, hi) = (1e-3f64.ln(), 1e6f64.ln());
    for i in 0..n {
        let x = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
        let exact = digamma_dd(x).to_f64();
        let err = (digamma(x) - exact).abs() / exact.abs().max(1.0);
        assert!(err <= 1e-12, "psi({x}) = {} vs {exact}", digamma(x));
    }
}

#[test]
fn known_values() {
    let euler = 0.5772156649015329;
    assert!((digamma(1.0) + euler).abs() < 1e-13);
    assert!((digamma(0.5) + euler + 2.0 * 2f64.ln()).abs() < 1e-13);
    assert!(digamma(1.4616321449683622).abs() < 1e-13);
}

#[test]
fn domain() {
    assert!(digamma(0.0).is_nan());
    assert!(digamma(-2.5).is_nan());
    assert!(digamma(f64::NAN).is_nan());
    assert_eq!(digamma(f64::INFINITY), f64::INFINITY);
    assert!(try_digamma(-1.0).is_err());
    assert_eq!(try_digamma(3.0).unwrap(), digamma(3.0));
}

