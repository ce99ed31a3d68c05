//! Fast invariant checks bundled with the binary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::aniso::{rotate_pair, rotation_rate, AnisoSolver};
use crate::dense::DenseHydroOracle;
use crate::error::Result;
use crate::field::ScalarField;
use crate::grid::StripGrid;
use crate::hydro::{compat_residual, HydroSolver};
use crate::lab::{random_field, InitialData};
use crate::lp::{bernstein_bounds, DyadicFilterBank};
use crate::shear::ShearFlow;
use crate::state::{FlowState, SolverParams, TermSwitches};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn check(name: &'static str, value: f64, tolerance: f64) -> Check {
    Check {
        name,
        value,
        tolerance,
        pass: value <= tolerance,
    }
}

fn lp_checks(out: &mut Vec<Check>) -> Result<()> {
    let g = StripGrid::periodic(64, 63)?;
    let bank = DyadicFilterBank::new(&g);
    out.push(check("partition_of_unity", bank.partition_defect(), 1e-14));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut recon, mut bony, mut bern) = (0.0f64, 0.0f64, 0.0f64);
    let (lo, hi) = bernstein_bounds();
    for _ in 0..10 {
        let f = random_field(g, &mut rng, 6);
        let h = random_field(g, &mut rng, 6);
        let mut sum = ScalarField::zeros(g);
        for b in bank.blocks() {
            sum.axpy(1.0, &bank.block(&f, b));
        }
        recon = recon.max((&sum - &f).max_abs());
        let parts = bank.bony_decompose(&f, &h);
        bony = bony.max((&parts.sum() - &(&f * &h)).max_abs());
        for e in bank.bernstein_check(&f).entries {
            bern = bern.max((lo - e.ratio).max(e.ratio - hi).max(0.0));
        }
    }
    out.push(check("block_reconstruction", recon, 1e-12));
    out.push(check("bony_identity", bony, 1e-12));
    out.push(check("bernstein_excess", bern, 0.0));
    Ok(())
}

fn aniso_checks(out: &mut Vec<Check>) -> Result<()> {
    let g = StripGrid::periodic(16, 15)?;
    let flow = ShearFlow::default_experiment();

    let mut rest = AnisoSolver::at_rest(
        g,
        0.1,
        SolverParams::default(),
        TermSwitches::default(),
        flow.clone(),
    )?;
    for _ in 0..100 {
        rest.step(1e-2)?;
    }
    out.push(check("shear_equilibrium", rest.state().max_abs(), 1e-10));

    let q0 = 0.1;
    let sw = TermSwitches {
        reaction: true,
        ..TermSwitches::none()
    };
    let q = ScalarField::from_fn(g, |_, _| q0);
    let z = ScalarField::zeros(g);
    let mut s = AnisoSolver::from_stream(
        &z,
        &q,
        &z,
        0.5,
        SolverParams::default(),
        sw,
        ShearFlow::none(),
    )?;
    for _ in 0..1000 {
        s.step_q(1e-3)?;
    }
    let e = (-2.0f64).exp();
    let want = (q0 * q0 * e / (1.0 + 2.0 * q0 * q0 * (1.0 - e))).sqrt();
    let err = s
        .state()
        .q1
        .data()
        .iter()
        .map(|v| (v - want).abs())
        .fold(0.0, f64::max);
    out.push(check("reaction_ode", err, 1e-6));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut st = FlowState {
        u: random_field(g, &mut rng, 4).scale(0.1),
        q1: random_field(g, &mut rng, 4),
        q2: random_field(g, &mut rng, 4),
        ..FlowState::zeros(g, 0.05)
    };
    let kappa = rotation_rate(&st, &ShearFlow::new(vec![(1, 0.5)])?, true);
    let mag = |s: &FlowState| &(&s.q1 * &s.q1) + &(&s.q2 * &s.q2);
    let mut drift = 0.0f64;
    for _ in 0..100 {
        let before = mag(&st);
        rotate_pair(&mut st.q1, &mut st.q2, &kappa, 5e-4);
        drift = drift.max((&mag(&st) - &before).max_abs());
    }
    out.push(check("rotation_conservation", drift, 1e-13));

    let init = InitialData {
        amplitude: 1e-2,
        q_amplitude: 1e-2,
        ..Default::default()
    };
    let (q1, q2) = init.q_pair(g);
    let mut s = AnisoSolver::from_stream(
        &init.stream(g),
        &q1,
        &q2,
        0.1,
        SolverParams::default(),
        TermSwitches::default(),
        flow,
    )?;
    let mut div = 0.0f64;
    for _ in 0..50 {
        s.step(5e-3)?;
        div = div.max(s.divergence());
    }
    out.push(check("divergence", div, 1e-10));
    Ok(())
}

fn hydro_checks(out: &mut Vec<Check>) -> Result<()> {
    let g = StripGrid::periodic(16, 17)?;
    let flow = ShearFlow::new(vec![(1, 0.3)])?;
    let u0 = InitialData {
        amplitude: 1.0,
        ..Default::default()
    }
    .velocity(g);
    let mut s = HydroSolver::new(&u0, flow.clone(), SolverParams::default())?;
    let mut compat = 0.0f64;
    let dt = 2.5e-4;
    for _ in 0..400 {
        s.step(dt)?;
        compat = compat.max(compat_residual(&s.state().u));
    }
    out.push(check("compatibility", compat, 1e-10));
    let oracle = DenseHydroOracle::new(&g, &flow)?;
    let want = oracle.evolve(&u0, 0.1, dt / 4.0);
    let rel = (&s.state().u - &want).l2_norm() / want.l2_norm();
    out.push(check("dense_oracle", rel, 1e-4));
    Ok(())
}

/// Runs every check; errors from the solvers surface as `Err`.
pub fn run_selftest() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    lp_checks(&mut out)?;
    aniso_checks(&mut out)?;
    hydro_checks(&mut out)?;
    Ok(out)
}
