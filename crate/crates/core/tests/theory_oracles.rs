use erglim_core::theory::{
    compute_w, digit_tail, gamma_n, inverse_tlogt, joint_tail_lebesgue, lebesgue_tail, mu_tail_a,
    phi_tail_lebesgue, wandering_rate,
};
use erglim_core::{MapId, Norming, ObservableKind, ObservableSpec, TailModel, TheoryError};
use proptest::prelude::*;
use statrs::function::gamma::digamma;

// densities written out again here, normalized so E has mass one
fn rho(map: MapId, x: f64) -> f64 {
    match map {
        MapId::Bcf => 1.0 / (x * 2f64.ln()),
        MapId::Ecf => 2.0 / (3f64.ln() * (1.0 - x * x)),
    }
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    fn go<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 1e-13 * (left + right).abs() {
            return left + right + diff / 15.0;
        }
        go(f, a, m, fa, flm, fm, left, depth - 1) + go(f, m, b, fm, frm, fb, right, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    go(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), 30)
}

fn mass(map: MapId, a: f64, b: f64) -> f64 {
    simpson(&|x| rho(map, x), a, b)
}

/// Points of E whose image lies within `1/(n+1)` of the parabolic fixed
/// point, i.e. that stay outside E for at least n steps.
fn a_tail_by_quadrature(map: MapId, n: u64) -> f64 {
    let a = 1.0 / (n as f64 + 1.0);
    const M: u64 = 4000;
    let mut s = 0.0;
    for m in 2..=M {
        let mf = m as f64;
        let (lo, hi) = match map {
            MapId::Bcf => (1.0 - 1.0 / mf, 1.0 - 1.0 / (mf + a)),
            MapId::Ecf if m % 2 == 1 => (1.0 / (mf + a), 1.0 / mf),
            MapId::Ecf => (1.0 / (mf + 1.0), 1.0 / (mf + 1.0 - a)),
        };
        s += mass(map, lo, hi);
    }
    // remaining pieces have length about a/m² at density value at the end
    let end = match map {
        MapId::Bcf => rho(map, 1.0 - 0.5 / M as f64),
        MapId::Ecf => rho(map, 0.5 / M as f64),
    };
    s + end * a / (M as f64 + 0.5)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

#[test]
fn e_has_unit_mass() {
    assert!(close(mass(MapId::Bcf, 0.5, 1.0), 1.0, 1e-12));
    assert!(close(mass(MapId::Ecf, 0.0, 0.5), 1.0, 1e-12));
    assert!(close(mu_tail_a(MapId::Bcf, 0), 1.0, 1e-15));
    assert!(close(mu_tail_a(MapId::Ecf, 0), 1.0, 1e-15));
}

#[test]
fn return_tail_matches_density_quadrature() {
    for map in MapId::ALL {
        for n in [1u64, 2, 3, 7, 30, 250, 10_000] {
            let want = a_tail_by_quadrature(map, n);
            let got = mu_tail_a(map, n);
            assert!(close(got, want, 2e-6), "{map} n={n}: {got} vs {want}");
        }
    }
}

#[test]
fn wandering_rate_is_the_partial_sum() {
    for map in MapId::ALL {
        let mut s = 0.0;
        for k in 0..100_000u64 {
            s += mu_tail_a(map, k);
            let n = k + 1;
            if [1, 2, 10, 1000, 100_000].contains(&n) {
                assert!(close(wandering_rate(map, n as f64), s, 1e-11), "{map} n={n}");
            }
        }
    }
}

#[test]
fn digit_tails_match_density_quadrature() {
    for n in [2u64, 3, 9, 100, 5000] {
        let want = mass(MapId::Bcf, 1.0 - 1.0 / n as f64, 1.0);
        assert!(close(digit_tail(&ObservableSpec::bcf_g(), n), want, 1e-10), "bcf n={n}");
    }
    for n in [1u64, 2, 3, 8, 101, 5000] {
        // cylinders m with base value above n
        for obs in [ObservableSpec::ecf_g(), ObservableSpec::ecf_gtilde()] {
            if obs.kind == ObservableKind::Digits && n < 2 {
                continue;
            }
            let first = (1..).find(|&m| obs.int_value(m).unwrap() > n).unwrap();
            let want = mass(MapId::Ecf, 0.0, 1.0 / first as f64);
            let got = digit_tail(&obs, n);
            assert!(close(got, want, 1e-10), "{} n={n}: {got} vs {want}", obs.kind);
        }
    }
    assert!(digit_tail(&ObservableSpec::bcf_g(), 1).is_infinite());
}

#[test]
fn kappa_is_the_tail_ratio() {
    let cases = [
        (ObservableSpec::bcf_g(), 1.0),
        (ObservableSpec::ecf_g(), 2.0),
        (ObservableSpec::ecf_gtilde(), 2.0),
    ];
    for (obs, k) in cases {
        let n = 10_000_000u64;
        let ratio = digit_tail(&obs, n) / mu_tail_a(obs.map, n);
        assert!((ratio - k).abs() < 1e-6, "{}-{}: {ratio}", obs.map, obs.kind);
        let model = TailModel::new(obs);
        assert_eq!(model.kappa, k);
    }
    let ecf = TailModel::new(ObservableSpec::ecf_g());
    assert_eq!(ecf.predicted_limit(), 4.0);
    assert_eq!(ecf.paper_claim(), Some(3.0));
    assert_eq!(TailModel::new(ObservableSpec::ecf_gtilde()).predicted_limit(), 3.0);
    assert_eq!(TailModel::new(ObservableSpec::bcf_g()).predicted_limit(), 3.0);
}

#[test]
fn lebesgue_tails() {
    for n in [2u64, 3, 17, 1000] {
        assert!(close(lebesgue_tail(&ObservableSpec::bcf_g(), n), 1.0 / n as f64, 1e-14));
        let obs = ObservableSpec::ecf_g();
        let first = (1..).find(|&m| obs.int_value(m).unwrap() > n).unwrap();
        assert!(close(lebesgue_tail(&obs, n), 1.0 / first as f64, 1e-14));
    }
}

fn bcf_phi_digamma(big_m: u64, first: u64) -> f64 {
    let a = 1.0 / (big_m as f64 + 1.0);
    digamma(first as f64 + a) - digamma(first as f64)
}

fn ecf_phi_digamma(big_m: u64) -> f64 {
    let t = big_m as f64 / (big_m as f64 + 1.0);
    0.5 * (digamma(2.0 - t / 2.0) - digamma(1.0 + t / 2.0))
}

#[test]
fn excursion_tails_match_digamma() {
    for m in [0u64, 1, 2, 5, 40, 1000, 100_000] {
        let b = phi_tail_lebesgue(MapId::Bcf, m);
        assert!(close(b, bcf_phi_digamma(m, 2), 1e-9), "bcf M={m}: {b}");
        let e = phi_tail_lebesgue(MapId::Ecf, m);
        assert!(close(e, ecf_phi_digamma(m), 1e-7), "ecf M={m}: {e}");
    }
    for (n, m) in [(2u64, 3u64), (5, 10), (50, 1), (1000, 1000)] {
        let j = joint_tail_lebesgue(&ObservableSpec::bcf_g(), n, m);
        assert!(close(j, bcf_phi_digamma(m, n), 1e-8), "n={n} M={m}");
    }
}

#[test]
fn ecf_joint_tail_by_summing_lengths() {
    let obs = ObservableSpec::ecf_g();
    for (n, big_m) in [(2u64, 1u64), (4, 9), (11, 100)] {
        let a = 1.0 / (big_m as f64 + 1.0);
        let mut s = 0.0;
        const END: u64 = 2_000_000;
        for m in 2..END {
            if obs.int_value(m).unwrap() <= n {
                continue;
            }
            let mf = m as f64;
            s += if m % 2 == 1 { 1.0 / mf - 1.0 / (mf + a) } else { 1.0 / (mf + 1.0 - a) - 1.0 / (mf + 1.0) };
        }
        // pieces beyond END have length about a/m²
        s += a / (END as f64 - 0.5);
        let j = joint_tail_lebesgue(&obs, n, big_m);
        assert!(close(j, s, 1e-9), "n={n} M={big_m}: {j} vs {s}");
    }
}

#[test]
fn norming_matches_direct_integration() {
    let model = TailModel::new(ObservableSpec::bcf_g());
    let nm = Norming::new(model).unwrap();
    for y in [3.0, 10.5, 200.0, 3000.0] {
        let mut s = 0.0;
        let mut t = model.y0;
        while t < y {
            let e = (t.floor() + 1.0).min(y);
            s += simpson(&|u| model.continuous_tail(u), t, e);
            t = e;
        }
        assert!(close(nm.integral(y), s, 1e-10), "y={y}");
        assert!(close(nm.a(y), y / s, 1e-10));
    }
}

#[test]
fn trimming_orders() {
    assert_eq!(compute_w(TailModel::new(ObservableSpec::bcf_g()), 64), Ok(1));
    assert_eq!(compute_w(TailModel::new(ObservableSpec::ecf_g()), 64), Ok(1));
    assert_eq!(compute_w(TailModel::new(ObservableSpec::ecf_gtilde()), 64), Ok(1));
    let sq = ObservableSpec::new(MapId::Bcf, ObservableKind::Power { s: 2.0 }).unwrap();
    assert_eq!(compute_w(TailModel::new(sq), 64), Err(TheoryError::ExceedsRmax(64)));
}

#[test]
fn gamma_n_formula() {
    for (s, u, n) in [(2.0f64, 1.5f64, 1e3f64), (1.5, 2.0, 1e6), (3.0, 1.1, 16.0)] {
        let l = n.ln();
        let want = 2f64.ln().powf(s) / (s - 1.0) * (n / l).powf(s) / l.ln().powf((s - 1.0) * u);
        assert!(close(gamma_n(s, u, n).unwrap(), want, 1e-13));
    }
    assert!(gamma_n(1.0, 2.0, 100.0).is_err());
    assert!(gamma_n(2.0, 1.0, 100.0).is_err());
    assert!(gamma_n(2.0, 2.0, 15.0).is_err());
}

proptest! {
    #[test]
    fn tlogt_inverse(x in 1.0f64..1e12) {
        let t = x * x.ln();
        prop_assert!(close(inverse_tlogt(t), x, 1e-10));
    }

    #[test]
    fn b_inverts_a(ln_n in 3.0f64..25.0) {
        let nm = Norming::new(TailModel::new(ObservableSpec::ecf_g())).unwrap();
        let n = ln_n.exp();
        let y = nm.b(n).unwrap();
        prop_assert!(close(nm.a(y), n, 1e-9));
    }
}
