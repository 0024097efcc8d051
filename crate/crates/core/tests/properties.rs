use dualaoi_core::cs::{cs_initial_vector, cs_packet_rate, cs_rmc_stationary};
use dualaoi_core::*;
use proptest::prelude::*;

fn rate() -> impl Strategy<Value = f64> {
    0.05f64..20.0
}

fn mask(max_len: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), 1..=max_len)
        .prop_filter("needs a serve slot", |m| m.iter().any(|&b| b))
}

fn spec_and_pmf(max_n: usize) -> impl Strategy<Value = (SystemSpec, Pmf)> {
    (1..=max_n)
        .prop_flat_map(|n| {
            (
                rate(),
                prop::collection::vec(rate(), n),
                prop::collection::vec(0.05f64..1.0, n),
                prop::collection::vec(0.0f64..1.0, n),
            )
        })
        .prop_map(|(mu, mu_n, w, raw)| {
            let spec = SystemSpec::relaxed(mu, mu_n, w).unwrap();
            let total: f64 = raw.iter().sum();
            let p = if total > 0.0 {
                raw.iter().map(|x| x / total).collect()
            } else {
                vec![1.0 / raw.len() as f64; raw.len()]
            };
            (spec, Pmf::new(p).unwrap())
        })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Mean AoI through explicit matrix inverses.
fn mean_aoi_by_inverse(chain: &AbsorbingChain) -> f64 {
    let inv = chain.u().clone().try_inverse().unwrap();
    let s = chain.sigma().transpose();
    let num = (&s * &inv * &inv * chain.theta())[(0, 0)];
    let den = (&s * &inv * chain.theta())[(0, 0)];
    -num / den
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ps_closed_form_matches_chain(mu_n in rate(), mu in rate(), p in 0.0f64..=1.0) {
        let closed = ps_closed_form(mu_n, mu, p).unwrap();
        let numeric = ps_mean_aoi_numeric(mu_n, mu, p).unwrap();
        prop_assert!(rel(numeric, closed) <= 1e-10, "{numeric} vs {closed}");
    }

    #[test]
    fn ps_aoi_decreases_in_p(mu_n in rate(), mu in rate(), p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let a = ps_closed_form(mu_n, mu, lo).unwrap();
        let b = ps_closed_form(mu_n, mu, hi).unwrap();
        prop_assert!(b <= a * (1.0 + 1e-12));
        prop_assert!(a <= 2.0 / mu_n * (1.0 + 1e-12));
    }

    #[test]
    fn ps_time_rescaling(mu_n in rate(), mu in rate(), p in 0.0f64..=1.0, c in 0.1f64..10.0) {
        let base = ps_mean_aoi_numeric(mu_n, mu, p).unwrap();
        let scaled = ps_mean_aoi_numeric(c * mu_n, c * mu, p).unwrap();
        prop_assert!(rel(scaled, base / c) <= 1e-10);
    }

    #[test]
    fn cs_rotation_and_replication_invariance(bits in mask(10), by in 0usize..10, mu_n in rate(), mu in rate()) {
        let p = BinaryPattern::from_mask(&bits).unwrap();
        let base = cs_mean_aoi(&p, mu_n, mu).unwrap();
        let rotated = cs_mean_aoi(&p.rotated(by), mu_n, mu).unwrap();
        let doubled = cs_mean_aoi(&p.repeated(2), mu_n, mu).unwrap();
        prop_assert!(rel(rotated, base) <= 1e-10, "{rotated} vs {base}");
        prop_assert!(rel(doubled, base) <= 1e-10, "{doubled} vs {base}");
    }

    #[test]
    fn cs_time_rescaling(bits in mask(8), mu_n in rate(), mu in rate(), c in 0.1f64..10.0) {
        let p = BinaryPattern::from_mask(&bits).unwrap();
        let base = cs_mean_aoi(&p, mu_n, mu).unwrap();
        let scaled = cs_mean_aoi(&p, c * mu_n, c * mu).unwrap();
        prop_assert!(rel(scaled, base / c) <= 1e-10);
    }

    #[test]
    fn cs_chain_is_well_formed(bits in mask(12), mu_n in rate(), mu in rate()) {
        let p = BinaryPattern::from_mask(&bits).unwrap();
        let chain = build_cs_amc(&p, mu_n, mu).unwrap();
        let report = validate_chain(&chain);
        prop_assert!(report.is_pass(), "{report:?}");
        let phi = cs_rmc_stationary(&p, mu_n, mu).unwrap();
        let mass: f64 = (0..p.len()).map(|i| phi.slot_mass(i)).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-12);
        let f_c = cs_packet_rate(&p, &phi, mu_n, mu).unwrap();
        let sigma = cs_initial_vector(&p, &phi, f_c, mu_n, mu).unwrap();
        prop_assert!((sigma.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(sigma.iter().all(|&s| s >= 0.0));
        let aoi = cs_mean_aoi(&p, mu_n, mu).unwrap();
        prop_assert!(aoi > 0.0 && aoi <= 2.0 / mu_n * (1.0 + 1e-10));
    }

    #[test]
    fn solve_matches_explicit_inverse(bits in mask(3), mu_n in rate(), mu in rate(), p in 0.0f64..=1.0) {
        let ps = build_ps_amc(mu_n, mu, p).unwrap();
        prop_assert!(rel(mean_aoi(&ps).unwrap(), mean_aoi_by_inverse(&ps)) <= 1e-9);
        let cs = build_cs_amc(&BinaryPattern::from_mask(&bits).unwrap(), mu_n, mu).unwrap();
        prop_assume!(cs.num_transient() <= 12);
        prop_assert!(rel(mean_aoi(&cs).unwrap(), mean_aoi_by_inverse(&cs)) <= 1e-9);
    }

    #[test]
    fn objective_matches_weighted_aoi((spec, pmf) in spec_and_pmf(6)) {
        let terms = objective_terms(&spec);
        let y: Vec<f64> = spec
            .mu_dedicated()
            .iter()
            .zip(pmf.probs())
            .map(|(m, p)| m + p * spec.mu_shared())
            .collect();
        let direct = ps_weighted_aoi(&spec, &pmf).unwrap();
        prop_assert!(rel(terms.value(&y), direct) <= 1e-10);
    }

    #[test]
    fn cubic_root_decreases_in_lambda(l1 in 1e-6f64..1e6, l2 in 1e-6f64..1e6, a in 0.0f64..50.0, b in 1e-3f64..50.0) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let y_lo = cardano_positive_root(lo, a, b).unwrap();
        let y_hi = cardano_positive_root(hi, a, b).unwrap();
        prop_assert!(y_hi <= y_lo * (1.0 + 1e-12));
        for (l, y) in [(lo, y_lo), (hi, y_hi)] {
            let resid = (l * y.powi(3) - a * y - 2.0 * b).abs();
            prop_assert!(resid <= 1e-9 * (l * y.powi(3) + a * y + 2.0 * b));
        }
    }

    #[test]
    fn optimizer_beats_random_pmfs((spec, pmf) in spec_and_pmf(6)) {
        let opt = optimize_ps(&spec, DEFAULT_EPSILON).unwrap();
        prop_assert!((opt.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(kkt_residual(&spec, &opt).unwrap() <= 1e-8);
        let best = ps_weighted_aoi(&spec, &opt).unwrap();
        prop_assert!(best <= ps_weighted_aoi(&spec, &pmf).unwrap() + 1e-9);
        prop_assert!(best <= ps_weighted_aoi(&spec, &Pmf::uniform(spec.num_sources()).unwrap()).unwrap() + 1e-9);
    }

    #[test]
    fn pac_counts_and_spreading((spec, pmf) in spec_and_pmf(8), max_period in 8usize..60) {
        let report = pac_build(&spec, &pmf, max_period).unwrap();
        let k = report.schedule.len();
        prop_assert!(k <= max_period);
        prop_assert_eq!(report.slot_counts.iter().sum::<usize>(), k);
        for (n, &p) in pmf.probs().iter().enumerate() {
            if p > 1e-6 {
                prop_assert!(report.slot_counts[n] >= 1);
            } else {
                prop_assert_eq!(report.slot_counts[n], 0);
            }
        }
        prop_assert_eq!(report.weighted_aoi, cs_weighted_aoi(&spec, &report.schedule).unwrap());
    }

    #[test]
    fn drr_matches_fractional_credit_rule(counts in prop::collection::vec(1usize..12, 1..8)) {
        let seq = drr_spread(&counts);
        let period = counts.iter().sum::<usize>();
        prop_assert_eq!(seq.len(), period);
        // credits start at 0; each slot adds K_n / K, the largest credit
        // (ties: smaller index) is served and pays 1
        let mut credit = vec![0.0f64; counts.len()];
        for &got in &seq {
            for (c, &k) in credit.iter_mut().zip(&counts) {
                *c += k as f64 / period as f64;
            }
            let max = credit.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let want = credit.iter().position(|&c| c >= max - 1e-9).unwrap();
            prop_assert_eq!(got, want);
            credit[want] -= 1.0;
        }
        for (i, &k) in counts.iter().enumerate() {
            prop_assert_eq!(seq.iter().filter(|&&s| s == i).count(), k);
        }
    }
}

#[test]
fn is_never_worse_than_round_robin_on_small_systems() {
    let cases = [
        (1.0, vec![1.0, 1.0], vec![0.5, 0.5]),
        (5.0, vec![1.0, 2.0, 3.0], vec![0.2, 0.5, 0.3]),
        (2.0, vec![0.5, 4.0], vec![0.8, 0.2]),
    ];
    for (mu, mu_n, w) in cases {
        let spec = SystemSpec::new(mu, mu_n, w).unwrap();
        let is = insertion_search(&spec, 6, 64).unwrap();
        let rr =
            cs_weighted_aoi(&spec, &round_robin_schedule(spec.num_sources()).unwrap()).unwrap();
        assert!(
            is.weighted_aoi <= rr * (1.0 + 1e-12),
            "{} > {rr}",
            is.weighted_aoi
        );
    }
}
