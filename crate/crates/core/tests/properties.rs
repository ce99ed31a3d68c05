use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use strip_lab::aniso::rotate_pair;
use strip_lab::band::{step_band_ode, BandInputs, BandState};
use strip_lab::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use strip_lab::hydro::{compat_residual, enforce_compat, HydroSolver};
use strip_lab::lab::{fit_power, random_field};
use strip_lab::lp::DyadicFilterBank;
use strip_lab::ops::{ddx, ddxx, ddy, laplacian_eps, v_from_u};
use strip_lab::shear::ShearFlow;
use strip_lab::state::SolverParams;
use strip_lab::{ScalarField, StripGrid};

fn noise(g: StripGrid, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarField::from_vec(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn smooth(g: StripGrid, seed: u64) -> ScalarField {
    random_field(g, &mut ChaCha8Rng::seed_from_u64(seed), 6)
}

fn big() -> StripGrid {
    StripGrid::periodic(64, 63).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn transform_round_trip(seed in any::<u64>(), scale in 1e-6f64..1e6) {
        let g = StripGrid::periodic(32, 17).unwrap();
        let f = noise(g, seed).scale(scale);
        let back = f.to_spectral().to_physical();
        let err = (&back - &f).l2_norm();
        prop_assert!(err <= 10.0 * f64::EPSILON * f.l2_norm() * (g.nx as f64).log2());
    }

    #[test]
    fn spectrum_is_conjugate_symmetric(seed in any::<u64>()) {
        let g = StripGrid::periodic(16, 9).unwrap();
        let s = noise(g, seed).to_spectral();
        for i in 1..g.nx {
            for (a, b) in s.mode(i).iter().zip(s.mode(g.nx - i)) {
                prop_assert!((a - b.conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn second_x_derivative_is_minus_xi_squared(seed in any::<u64>()) {
        let g = StripGrid::periodic(16, 9).unwrap();
        let f = noise(g, seed);
        let twice = ddx(&ddx(&f)).to_spectral();
        let direct = ddxx(&f).to_spectral();
        let fs = f.to_spectral();
        for i in 0..g.nx {
            if g.is_nyquist(i) {
                continue;
            }
            let xi = g.wavenumber(i);
            for ((a, b), c) in twice.mode(i).iter().zip(direct.mode(i)).zip(fs.mode(i)) {
                let want = c * (-xi * xi);
                prop_assert!((a - want).norm() <= 1e-12 * (1.0 + want.norm()));
                prop_assert!((b - want).norm() <= 1e-12 * (1.0 + want.norm()));
            }
        }
    }

    #[test]
    fn vertical_velocity_is_divergence_free_to_second_order(seed in any::<u64>()) {
        let g = StripGrid::periodic(16, 63).unwrap();
        let (u, _) = enforce_compat(&smooth(g, seed));
        let v = v_from_u(&u, None).unwrap();
        prop_assert!(v.top.iter().all(|t| t.abs() < 1e-12));
        let div = (&ddx(&u) + &ddy(&v.v)).max_abs();
        // modes up to k = 7 in x and m = 5 in y
        let c = 7.0 * (5.0 * PI).powi(2);
        prop_assert!(div <= c * g.dy() * g.dy() * u.max_abs(), "div {div}");
    }

    #[test]
    fn laplacian_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, eps in 0.0f64..2.0) {
        let g = StripGrid::periodic(16, 15).unwrap();
        let (f, h) = (noise(g, s1), noise(g, s2));
        let mut comb = f.scale(a);
        comb.axpy(b, &h);
        let mut want = laplacian_eps(&f, eps).scale(a);
        want.axpy(b, &laplacian_eps(&h, eps));
        let got = laplacian_eps(&comb, eps);
        prop_assert!((&got - &want).max_abs() <= 1e-9 * (1.0 + want.max_abs()));
    }

    #[test]
    fn blocks_reconstruct_the_field(seed in any::<u64>()) {
        let g = big();
        let bank = DyadicFilterBank::new(&g);
        prop_assert!(bank.partition_defect() <= 1e-14);
        let f = noise(g, seed);
        let mut sum = ScalarField::zeros(g);
        for b in bank.blocks() {
            sum.axpy(1.0, &bank.block(&f, b));
        }
        prop_assert!((&sum - &f).max_abs() <= 1e-12);
    }

    #[test]
    fn bony_identity(s1 in any::<u64>(), s2 in any::<u64>()) {
        let g = big();
        let bank = DyadicFilterBank::new(&g);
        let (f, h) = (noise(g, s1), noise(g, s2));
        let parts = bank.bony_decompose(&f, &h);
        prop_assert!((&parts.sum() - &(&f * &h)).max_abs() <= 1e-12);
    }

    #[test]
    fn b0_norm_is_equivalent_to_l2(seed in any::<u64>()) {
        let g = big();
        let bank = DyadicFilterBank::new(&g);
        let f = noise(g, seed);
        let b0 = bank.besov_norm(&f, 0.0);
        let l2 = (g.lx * g.dy()).sqrt() * f.l2_norm();
        prop_assert!(l2 <= b0 * (1.0 + 1e-12));
        prop_assert!(b0 <= bank.len() as f64 * l2 * (1.0 + 1e-12));
    }

    #[test]
    fn bands_are_nondecreasing(c in -0.5f64..0.5, inputs in proptest::collection::vec(0.0f64..2.0, 20), dt in 1e-4f64..0.1) {
        let flow = ShearFlow::new(vec![(1, c), (2, c / 3.0)]).unwrap();
        let mut bands = [
            BandState::eta(0.5, 1.0, 0.01).unwrap(),
            BandState::theta(0.5, 1.0).unwrap(),
            BandState::zeta(0.5, 1.0).unwrap(),
        ];
        for w in inputs.windows(2) {
            for b in bands.iter_mut() {
                let next = step_band_ode(b, dt, &flow, BandInputs { start: w[0], end: w[1] });
                prop_assert!(next.value >= b.value);
                // weights e^{(a-λη)|ξ|} move at most λ·Δη·max|ξ| in log
                let xi_max = 32.0;
                let shift = ((next.width() - b.width()) * xi_max).abs();
                prop_assert!(shift <= b.rate_coeff * (next.value - b.value) * xi_max + 1e-12 * b.a * xi_max);
                *b = next;
            }
        }
        let theta_limit = bands[1].limit(&flow).unwrap();
        // Simpson error h⁴/180·∫|θ''''|
        let quad: f64 = [(1.0, c), (2.0, c / 3.0)]
            .iter()
            .map(|&(m, cm): &(f64, f64)| m * cm.abs() * (m * m * PI * PI).powi(3))
            .sum::<f64>()
            * dt.powi(4)
            / 180.0;
        prop_assert!(bands[1].value <= theta_limit + quad + 1e-12);
    }

    #[test]
    fn rotation_conserves_magnitude(seed in any::<u64>(), tau in 1e-4f64..10.0) {
        let g = StripGrid::periodic(16, 15).unwrap();
        let mut q1 = noise(g, seed);
        let mut q2 = noise(g, seed ^ 1);
        let kappa = noise(g, seed ^ 2).scale(100.0);
        let before = &(&q1 * &q1) + &(&q2 * &q2);
        rotate_pair(&mut q1, &mut q2, &kappa, tau);
        let after = &(&q1 * &q1) + &(&q2 * &q2);
        prop_assert!((&after - &before).max_abs() <= 1e-13 * (1.0 + before.max_abs()));
    }

    #[test]
    fn power_fit_recovers_exponent(c in 1e-3f64..1e3, p in 0.5f64..3.0) {
        let pairs: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025].iter().map(|&e: &f64| (e, c * e.powf(p))).collect();
        let fit = fit_power(&pairs).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-10);
        prop_assert!(fit.r2 > 1.0 - 1e-10 && fit.r2 <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hydro_step_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let g = StripGrid::periodic(16, 15).unwrap();
        let flow = ShearFlow::new(vec![(1, 0.2)]).unwrap();
        let (u1, _) = enforce_compat(&smooth(g, s1));
        let (u2, _) = enforce_compat(&smooth(g, s2));
        let advance = |u: &ScalarField| {
            let mut s = HydroSolver::new(u, flow.clone(), SolverParams::default()).unwrap();
            for _ in 0..5 {
                s.step(1e-2).unwrap();
            }
            s.state().u
        };
        let mut comb = u1.scale(a);
        comb.axpy(b, &u2);
        let mut want = advance(&u1).scale(a);
        want.axpy(b, &advance(&u2));
        let got = advance(&comb);
        prop_assert!((&got - &want).max_abs() <= 1e-12 * (1.0 + want.max_abs()));
        prop_assert!(compat_residual(&got) <= 1e-10);
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), t in 0.0f64..10.0) {
        let g = StripGrid::periodic(8, 7).unwrap();
        let ck = Checkpoint {
            grid: g,
            params: SolverParams::default(),
            eps: Some(0.1),
            t,
            fields: vec![("u".into(), noise(g, seed).scale(1e300)), ("q1".into(), noise(g, seed ^ 7).scale(1e-300))],
        };
        let dir = tempfile::tempdir().unwrap();
        let m = write_checkpoint(&dir.path().join("ck"), &ck).unwrap();
        let back = read_checkpoint(&m).unwrap();
        for ((_, a), (_, b)) in ck.fields.iter().zip(&back.fields) {
            prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        prop_assert_eq!(back.t.to_bits(), t.to_bits());
    }
}
