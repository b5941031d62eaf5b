//! Randomized invariants across the public API.

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rydberg_core::coarse::{build_partition, superatom_coupling};
use rydberg_core::dynamics::{
    blockaded_reference, enumerate_basis, propagate, truncated_dimension, Hamiltonian, Method, Model, PulseShape,
};
use rydberg_core::geometry::{pair_couplings, sample_positions};
use rydberg_core::observables::{
    excitation_observables, extract_collective_params, pair_correlation, pair_probabilities_with, DomainConvention,
};
use rydberg_core::oracle::{atom_probabilities, exact_evolve, oracle_options};
use rydberg_core::runner::{calibrate_interaction, run_ensemble, run_realization, ConfigBuilder, RunConfig};
use rydberg_core::{
    AtomEnsemble, ExactModel, ManyBodyState, PairCouplings, PropagationOptions, PulseSpec, SuperatomModel,
    SuperatomPartition,
};

fn cloud(n: usize, radius: f64, seed: u64) -> AtomEnsemble {
    sample_positions(n, radius, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn couplings(n: usize, radius: f64, c6: f64, seed: u64) -> (AtomEnsemble, PairCouplings) {
    let e = cloud(n, radius, seed);
    let k = pair_couplings(&e, c6).unwrap();
    (e, k)
}

fn final_amplitudes<M: Model<f64>>(model: &M, pulse: PulseSpec, opts: &PropagationOptions) -> ManyBodyState {
    let (t0, t1) = pulse.window();
    let ham = Hamiltonian::new(model, pulse, 0.0);
    let mut tr = propagate(&ham, &ManyBodyState::ground(model.dim(), t0), &[t1], opts).unwrap();
    tr.states.pop().unwrap()
}

fn shape() -> impl Strategy<Value = PulseShape> {
    prop_oneof![Just(PulseShape::Square), Just(PulseShape::Gaussian)]
}

fn toml_config(body: &str) -> RunConfig {
    ConfigBuilder::new().toml_str(body).unwrap().build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn positions_stay_inside_and_repeat(n in 1usize..60, radius in 0.1f64..20.0, seed in any::<u64>()) {
        let a = cloud(n, radius, seed);
        prop_assert_eq!(a.n_atoms(), n);
        for p in a.positions() {
            prop_assert!((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() <= radius * (1.0 + 1e-15));
        }
        let b = cloud(n, radius, seed);
        prop_assert_eq!(a.positions(), b.positions());
    }

    #[test]
    fn doubling_distances_divides_kappa_by_64(n in 2usize..30, c6 in -1e3f64..1e3, seed in any::<u64>()) {
        let (e, k) = couplings(n, 3.0, c6, seed);
        let k2 = pair_couplings(&e.scaled(2.0), c6).unwrap();
        for p in 0..n {
            prop_assert_eq!(k.get(p, p), 0.0);
            for q in 0..n {
                prop_assert_eq!(k.get(p, q), k.get(q, p));
                prop_assert_eq!(k2.get(p, q) * 64.0, k.get(p, q));
            }
        }
    }

    #[test]
    fn basis_ranking_is_a_bijection(n_sa in 1usize..14, m in 1usize..14) {
        let m = m.min(n_sa);
        let b = enumerate_basis(n_sa, m).unwrap();
        prop_assert_eq!(b.dimension() as u128, truncated_dimension(n_sa, m));
        prop_assert_eq!(b.state(0), 0);
        for (s, &mask) in b.states().iter().enumerate() {
            prop_assert!(mask.count_ones() as usize <= m);
            prop_assert_eq!(b.index_of(mask), Some(s));
            b.for_each_link(s, |unit, t, raised| {
                let other = b.state(t);
                assert_eq!(other ^ mask, 1u64 << unit);
                assert_eq!(raised, other & (1u64 << unit) != 0);
            });
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn superatom_couplings_are_cross_pair_means(
        n in 2usize..40,
        frac in 0.05f64..1.0,
        c6 in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0],
        seed in any::<u64>(),
    ) {
        let (_, k) = couplings(n, 2.0, c6, seed);
        let target = ((n as f64 * frac).ceil() as usize).clamp(1, n);
        let p = build_partition(&k, target).unwrap();
        prop_assert_eq!(p.n_superatoms(), target);
        let mut seen = vec![false; n];
        for (g, &c) in p.groups().iter().zip(&p.member_counts()) {
            prop_assert!(!g.is_empty());
            prop_assert_eq!(g.len(), c);
            for &a in g {
                prop_assert!(!seen[a]);
                seen[a] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        for i in 0..target {
            for j in 0..target {
                if i == j {
                    continue;
                }
                let brute = superatom_coupling(&p.groups()[i], &p.groups()[j], &k).unwrap();
                let got = p.coupling(i, j);
                prop_assert!((got - brute).abs() <= 1e-12 * brute.abs(), "{} vs {}", got, brute);
                prop_assert!(got * c6 > 0.0);
            }
        }
    }

    #[test]
    fn merging_removes_one_group_per_step(n in 3usize..30, seed in any::<u64>()) {
        let (_, k) = couplings(n, 2.0, 5.0, seed);
        let mut prev = build_partition(&k, n).unwrap();
        prop_assert!(prev.groups().iter().all(|g| g.len() == 1));
        for t in (1..n).rev() {
            let next = build_partition(&k, t).unwrap();
            prop_assert_eq!(next.n_superatoms(), t);
            // Exactly two groups of the previous step fused, the rest are untouched.
            let kept = prev.groups().iter().filter(|g| next.groups().contains(g)).count();
            prop_assert_eq!(kept, t - 1);
            let new: Vec<_> = next.groups().iter().filter(|g| !prev.groups().contains(g)).collect();
            prop_assert_eq!(new.len(), 1);
            let parts: Vec<_> = prev.groups().iter().filter(|g| !next.groups().contains(g)).collect();
            prop_assert_eq!(parts.len(), 2);
            let mut fused: Vec<usize> = parts.iter().flat_map(|g| g.iter().copied()).collect();
            fused.sort_unstable();
            prop_assert_eq!(&fused, new[0]);
            prev = next;
        }
    }

    #[test]
    fn relabelling_atoms_relabels_the_partition(n in 3usize..30, frac in 0.1f64..0.9, seed in any::<u64>()) {
        let e = cloud(n, 2.0, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        // Atom q of the relabelled sample is atom perm[q] of the original.
        let moved = AtomEnsemble::new(perm.iter().map(|&p| e.positions()[p]).collect(), e.radius()).unwrap();
        let target = ((n as f64 * frac).round() as usize).clamp(1, n);
        let a = build_partition(&pair_couplings(&e, 3.0).unwrap(), target).unwrap();
        let b = build_partition(&pair_couplings(&moved, 3.0).unwrap(), target).unwrap();
        let canon = |groups: Vec<Vec<usize>>| {
            let mut g: Vec<Vec<usize>> = groups.into_iter().map(|mut g| { g.sort_unstable(); g }).collect();
            g.sort();
            g
        };
        let mapped = b.groups().iter().map(|g| g.iter().map(|&q| perm[q]).collect()).collect();
        prop_assert_eq!(canon(a.groups().to_vec()), canon(mapped));
    }

    #[test]
    fn norm_is_conserved(n in 2usize..9, c6 in -20.0f64..20.0, area in 0.1f64..12.0, sh in shape(), seed in any::<u64>()) {
        let (_, k) = couplings(n, 1.5, c6, seed);
        let p = build_partition(&k, (n + 1) / 2).unwrap();
        let model = SuperatomModel::new(&p, p.n_superatoms()).unwrap();
        let pulse = PulseSpec::new(sh, area, 1.0);
        let (t0, t1) = pulse.window();
        let times: Vec<f64> = (1..=10).map(|i| t0 + (t1 - t0) * i as f64 / 10.0).collect();
        let ham = Hamiltonian::new(&model, pulse, 0.0);
        let tr = propagate(&ham, &ManyBodyState::ground(model.dim(), t0), &times, &PropagationOptions::default()).unwrap();
        for s in &tr.states {
            prop_assert!((s.norm_sqr() - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn kappa_sign_does_not_change_populations(n in 2usize..8, c6 in 0.1f64..30.0, sh in shape(), seed in any::<u64>()) {
        // Flipping every coupling conjugates the evolved state.
        let (_, k) = couplings(n, 1.5, c6, seed);
        prop_assume!(k.max_abs() < 1e4);
        let pulse = PulseSpec::new(sh, 4.0, 1.0);
        let opts = oracle_options();
        let pop = |k: &PairCouplings| {
            let model = SuperatomModel::new(&SuperatomPartition::singletons(k), n).unwrap();
            let s = final_amplitudes(&model, pulse, &opts);
            excitation_observables(&s.amplitudes, &model, n, 0.0).unit_probabilities
        };
        let (a, b) = (pop(&k), pop(&k.scaled(-1.0)));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn time_rescaling_preserves_area_curves(n in 2usize..9, c6 in 0.5f64..30.0, s in 0.25f64..4.0, sh in shape(), seed in any::<u64>()) {
        let (_, k) = couplings(n, 1.5, c6, seed);
        let p = build_partition(&k, (n + 1) / 2).unwrap();
        let opts = PropagationOptions { rtol: 1e-11, ..Default::default() };
        let run = |p: &SuperatomPartition, rabi: f64, tau: f64| {
            let model = SuperatomModel::new(p, p.n_superatoms()).unwrap();
            let st = final_amplitudes(&model, PulseSpec::new(sh, rabi, tau), &opts);
            excitation_observables(&st.amplitudes, &model, n, 0.0).p_exc
        };
        let a = run(&p, 3.0, 1.0);
        let b = run(&p.scaled(s), 3.0 * s, 1.0 / s);
        prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
    }

    #[test]
    fn observables_are_consistent(n in 2usize..8, c6 in -10.0f64..10.0, area in 0.1f64..8.0, seed in any::<u64>()) {
        let (e, k) = couplings(n, 1.5, c6, seed);
        let p = build_partition(&k, (n + 1) / 2).unwrap();
        let model = SuperatomModel::new(&p, p.n_superatoms()).unwrap();
        let st = final_amplitudes(&model, PulseSpec::square(area, 1.0), &PropagationOptions::default());
        let amps = &st.amplitudes;
        let r = excitation_observables(amps, &model, n, area);
        prop_assert!((0.0..=1.0).contains(&r.p_exc));
        prop_assert!((r.n_exc - n as f64 * r.p_exc).abs() < 1e-12);
        prop_assert!(r.mean_n2 >= r.mean_n * r.mean_n - 1e-12);
        let total: f64 = r.unit_probabilities.iter().sum();
        prop_assert!((total - r.mean_n).abs() < 1e-10);
        for i in 0..model.n_units() {
            let joint: f64 = pair_probabilities_with(amps, &model, i).iter().sum();
            let direct: f64 = amps
                .iter()
                .enumerate()
                .map(|(s, c)| {
                    let m = model.state_mask(s);
                    if m >> i & 1 == 1 { c.norm_sqr() * (m.count_ones() as f64 - 1.0) } else { 0.0 }
                })
                .sum();
            prop_assert!((joint - direct).abs() < 1e-12);
        }
        let owner = p.atom_to_group();
        for central in 0..n {
            for c in pair_correlation(amps, &model, &p, &e, central) {
                if let Some(v) = c.c_value {
                    prop_assert!(v >= 0.0);
                }
                if owner[c.atom_q] == owner[central] {
                    prop_assert_eq!(c.c_value, Some(0.0));
                }
            }
        }
    }

    #[test]
    fn product_states_are_uncorrelated(n in 2usize..9, area in 0.2f64..12.0, sh in shape(), seed in any::<u64>()) {
        let e = cloud(n, 2.0, seed);
        let k = PairCouplings::zeros(n);
        let p = SuperatomPartition::singletons(&k);
        let model = SuperatomModel::new(&p, n).unwrap();
        let opts = PropagationOptions { rtol: 1e-13, ..oracle_options() };
        let st = final_amplitudes(&model, PulseSpec::new(sh, area, 1.0), &opts);
        let r = excitation_observables(&st.amplitudes, &model, n, area);
        if let Some(v) = r.variance_ratio {
            prop_assert!((v - 1.0).abs() < 1e-8, "{}", v);
        }
        for c in pair_correlation(&st.amplitudes, &model, &p, &e, 0) {
            if let Some(v) = c.c_value {
                prop_assert!((v - 1.0).abs() < 1e-8, "{}", v);
            }
        }
    }

    #[test]
    fn exact_solver_is_norm_preserving_and_matches_singletons(n in 2usize..8, c6 in -5.0f64..5.0, sh in shape(), seed in any::<u64>()) {
        let (e, k) = couplings(n, 1.5, c6, seed);
        prop_assume!(k.max_abs() < 1e4);
        let pulse = PulseSpec::new(sh, 4.0, 1.0);
        let t1 = pulse.window().1;
        let exact = exact_evolve(&e, &k, &pulse, &[t1]).unwrap();
        let psi = &exact.states[0].amplitudes;
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-10);
        let em = ExactModel::new(&k).unwrap();
        let atoms = atom_probabilities(psi, &em);
        let model = SuperatomModel::new(&SuperatomPartition::singletons(&k), n).unwrap();
        let st = final_amplitudes(&model, pulse, &oracle_options());
        let units = excitation_observables(&st.amplitudes, &model, n, 0.0).unit_probabilities;
        for (a, b) in atoms.iter().zip(&units) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn averaging_beats_the_mean_distance() {
    // |⟨κ⟩| against κ at the mean cross-pair distance. Rounding aside this is
    // Jensen's inequality for r⁻⁶; the centroid distance gives no such bound.
    let (mut hold, mut total) = (0usize, 0usize);
    for seed in 0..40 {
        let (e, k) = couplings(30, 2.5, 1.0, seed);
        for target in [6, 10, 15] {
            let p = build_partition(&k, target).unwrap();
            for i in 0..target {
                for j in (i + 1)..target {
                    let (a, b) = (&p.groups()[i], &p.groups()[j]);
                    let mean_r = a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).map(|(x, y)| e.distance(x, y)).sum::<f64>()
                        / (a.len() * b.len()) as f64;
                    total += 1;
                    if p.coupling(i, j).abs() >= mean_r.powi(-6) * (1.0 - 1e-12) {
                        hold += 1;
                    }
                }
            }
        }
    }
    assert!(hold as f64 >= 0.95 * total as f64, "{hold} of {total}");
}

#[test]
fn collective_frequency_of_the_blockaded_curve() {
    for n in [2usize, 10, 70] {
        let curve: Vec<(f64, f64)> = (0..=4000)
            .map(|i| {
                let a = 4.0 * PI * i as f64 / 4000.0;
                (a, n as f64 * blockaded_reference(n, a))
            })
            .collect();
        let fit = extract_collective_params(&curve, n, DomainConvention::AtomsPerExcitation).unwrap();
        let sqrt_n = (n as f64).sqrt();
        assert!((fit.alpha - sqrt_n).abs() <= 0.01 * sqrt_n, "N={n}: α={}", fit.alpha);
        assert!(fit.f2.unwrap() > fit.f1 && fit.f1 > 0.0);
        assert!(fit.beta.unwrap() > 1.0);
    }
}

#[test]
fn truncation_converges_to_the_full_basis() {
    let (_, k) = couplings(8, 1.0, 50.0, 3);
    let p = build_partition(&k, 8).unwrap();
    let pulse = PulseSpec::square(6.0, 1.0);
    let opts = oracle_options();
    let p_exc = |m: usize| {
        let model = SuperatomModel::new(&p, m).unwrap();
        let st = final_amplitudes(&model, pulse, &opts);
        excitation_observables(&st.amplitudes, &model, 8, 0.0).p_exc
    };
    let values: Vec<f64> = (1..=8).map(p_exc).collect();
    let full = values[7];
    let changes: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in changes.windows(2) {
        assert!(w[1] <= w[0] || w[1] < 1e-9, "{changes:?}");
    }
    let em = ExactModel::new(&k).unwrap();
    let st = final_amplitudes(&em, pulse, &opts);
    let exact = excitation_observables(&st.amplitudes, &em, 8, 0.0).p_exc;
    assert!((full - exact).abs() < 1e-8);
}

#[test]
fn calibration_is_linear_and_scales_with_density_squared() {
    let cfg = |s: f64, rho: f64| toml_config(&format!("n_atoms = 20\ndensity_cm3 = {rho:e}\nscaled_strength = {s:e}\n"));
    let c = |s, rho| calibrate_interaction(&cfg(s, rho)).unwrap().c6_internal;
    assert_eq!(c(0.0, 1e11), 0.0);
    let base = c(7.0, 1e11);
    assert!((c(14.0, 1e11) / base - 2.0).abs() < 1e-12);
    assert!((base / c(7.0, 2e11) - 4.0).abs() < 1e-9);
}

#[test]
fn overrides_survive_a_round_trip() {
    let cfg = ConfigBuilder::new()
        .preset("5")
        .unwrap()
        .override_str("n_atoms=12")
        .unwrap()
        .override_str("pulse_shape=gaussian")
        .unwrap()
        .override_str("areas=[0.5, 1.0, 2.5]")
        .unwrap()
        .override_str("rtol=1e-8")
        .unwrap()
        .build()
        .unwrap();
    let text = toml::to_string(&cfg).unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
}

#[test]
fn realizations_depend_only_on_seed_and_index() {
    let body = "n_atoms = 8\nradius_um = 1.5\nscaled_strength = 20.0\nsuperatoms = 4\nmax_excited = 4\n\
                realizations = 6\nareas = [1.0, 2.0, 3.5]\nretain_curves = true\n";
    let cfg = toml_config(body);
    let backwards: Vec<_> = (0..6).rev().map(|k| run_realization(&cfg, k).unwrap()).collect();
    let ens = run_ensemble(&cfg).unwrap();
    let kept = ens.realizations.as_ref().unwrap();
    for r in &backwards {
        assert_eq!(&kept[r.index], r);
    }
    let serial = run_ensemble(&toml_config(&format!("{body}workers = 1\n"))).unwrap();
    let parallel = run_ensemble(&toml_config(&format!("{body}workers = 3\n"))).unwrap();
    for (k, p) in ens.curve.iter().enumerate() {
        let mean = kept.iter().map(|r| r.n_exc[k]).sum::<f64>() / kept.len() as f64;
        assert!((p.n_exc_mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        assert_eq!(p.n_exc_mean, serial.curve[k].n_exc_mean);
        assert_eq!(p.n_exc_mean, parallel.curve[k].n_exc_mean);
    }
}

#[test]
fn scan_axes_agree_under_full_blockade() {
    let n = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut m = vec![0.0; n * n];
    for p in 0..n {
        for q in (p + 1)..n {
            let v = rand::Rng::random_range(&mut rng, 2e3..4e3);
            m[p * n + q] = v;
            m[q * n + p] = v;
        }
    }
    let k = PairCouplings::from_matrix(n, m).unwrap();
    let model = SuperatomModel::new(&SuperatomPartition::singletons(&k), n).unwrap();
    let opts = PropagationOptions::default();
    for sh in ["square", "gaussian"] {
        let curve = |scan: &str| -> Vec<f64> {
            let cfg = toml_config(&format!(
                "n_atoms = {n}\nradius_um = 1.0\nscaled_strength = 1.0\narea_start = 0.2\narea_stop = 5.0\n\
                 area_points = 9\nscan = \"{scan}\"\npulse_shape = \"{sh}\"\n"
            ));
            rydberg_core::runner::scan_pulses(&cfg)
                .into_iter()
                .map(|pulse| {
                    let st = final_amplitudes(&model, pulse, &opts);
                    excitation_observables(&st.amplitudes, &model, n, 0.0).n_exc
                })
                .collect()
        };
        let (tau, omega) = (curve("tau_scan"), curve("omega_scan"));
        let peak = tau.iter().copied().fold(0.0, f64::max);
        for (x, y) in tau.iter().zip(&omega) {
            assert!((x - y).abs() <= 0.02 * peak, "{sh}: {tau:?} {omega:?}");
        }
    }
}

#[test]
fn method_choice_does_not_change_results() {
    let (_, k) = couplings(7, 1.2, 8.0, 11);
    let p = build_partition(&k, 4).unwrap();
    let model = SuperatomModel::new(&p, 4).unwrap();
    for sh in [PulseShape::Square, PulseShape::Gaussian] {
        let pulse = PulseSpec::new(sh, 5.0, 1.0);
        let runs: Vec<f64> = [Method::Auto, Method::RungeKutta, Method::Exponential]
            .iter()
            .map(|&method| {
                let st = final_amplitudes(&model, pulse, &PropagationOptions { method, rtol: 1e-11, ..Default::default() });
                excitation_observables(&st.amplitudes, &model, 7, 0.0).p_exc
            })
            .collect();
        for r in &runs {
            assert!((r - runs[0]).abs() < 1e-7, "{sh:?}: {runs:?}");
        }
    }
}
