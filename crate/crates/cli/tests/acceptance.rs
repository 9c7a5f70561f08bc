//! Acceptance gate: one test per release criterion, each printing a single
//! `[PASS]`/`[FAIL]` line (visible with `--nocapture`; failures carry the
//! same line in the panic message).
//!
//! Criteria 4 and 6 drive the compiled binary end to end; the rest exercise
//! the library directly against independently computed expectations.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use vma_cli::catalog::load_catalog;
use vma_cli::io;
use vma_cli::params::ParamFile;
use vma_core::analysis::{fit_ramp_velocity, segment_ramps};
use vma_core::fit::fit_sheath;
use vma_core::protocol::{build_protocol, ramp_schedule};
use vma_core::sim::simulate;
use vma_core::{
    dfv_asymptote, dfv_chain, dfv_single, fv_single, normalize_params, v_alpha_approx,
    ChainElement, ElementRole, FitObservation, FitOptions, FitProblem, NormalizedSlse,
    ProfileSegment, ProtocolConfig, RampDirection, RampSpec, SlseChain, SlseParams, StrainProfile,
    TraceMeta,
};

/// Control-2 geometry at 20 psi: the reference condition for round trips.
const LP_MM: f64 = 70.3;
const IL_MM: f64 = 94.3;
const EPS0: f64 = (IL_MM - LP_MM) / LP_MM;
const D_EPS: f64 = 2.0 / LP_MM;

fn report(criterion: &str, outcome: Result<String, String>) {
    let (ok, detail) = match &outcome {
        Ok(d) => (true, d.clone()),
        Err(d) => (false, d.clone()),
    };
    let line = format!("[{}] {criterion}: {detail}", if ok { "PASS" } else { "FAIL" });
    println!("{line}");
    assert!(ok, "{line}");
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn vma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vma"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_step(args: &[&str]) -> Result<(), String> {
    let out = vma(args);
    if out.status.code() == Some(0) {
        Ok(())
    } else {
        Err(format!(
            "`vma {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn catalog_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/actuators.csv")
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_1_simulated_peaks_match_closed_form() {
    let outcome = (|| {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut worst = 0.0f64;
        for i in 0..1000 {
            let k1 = log_uniform(&mut rng, 0.1, 10.0);
            let kappa = log_uniform(&mut rng, 0.05, 50.0);
            let gamma = log_uniform(&mut rng, 0.01, 100.0);
            let eps0 = rng.random_range(0.05..0.6);
            let d_eps = rng.random_range(0.005..0.1f64).min(0.8 * eps0);
            let v_mag = log_uniform(&mut rng, 1e-3, 10.0);
            let v_hat = if rng.random_bool(0.5) { v_mag } else { -v_mag };

            let p = SlseParams::new(k1, kappa * k1, kappa * k1 / gamma)
                .map_err(|e| format!("draw {i}: {e}"))?;
            let e = normalize_params(&p, k1).map_err(|e| format!("draw {i}: {e}"))?;
            let r = RampSpec::new(eps0, d_eps, v_hat).map_err(|e| format!("draw {i}: {e}"))?;
            let duration = d_eps / v_mag;
            let profile = StrainProfile::new(
                eps0,
                duration / 3.0,
                vec![ProfileSegment { duration, rate: v_hat }],
            )
            .map_err(|e| format!("draw {i}: {e}"))?;
            let meta = TraceMeta::new("draw", 100.0, 100.0, 0.0, duration / 3.0)
                .map_err(|e| format!("draw {i}: {e}"))?;
            let trace =
                simulate(&[p], &profile, &meta).map_err(|e| format!("draw {i}: {e}"))?;
            let f0 = trace.samples[0].force;
            let f_peak = trace.samples.last().expect("samples").force;
            let fv_ref = fv_single(&e, &r);
            let rel = (f_peak / f0 - fv_ref).abs() / fv_ref.abs().max(1e-12);
            worst = worst.max(rel);
        }
        let elapsed = start.elapsed().as_secs_f64();
        if worst > 1e-6 {
            return Err(format!("worst relative deviation {worst:.3e} exceeds 1e-6"));
        }
        if elapsed >= 10.0 {
            return Err(format!("took {elapsed:.2} s, limit 10 s"));
        }
        Ok(format!(
            "1000 draws, worst relative deviation {worst:.3e} (tol 1e-6) in {elapsed:.2} s"
        ))
    })();
    report("criterion 1: simulated peak force vs closed form", outcome);
}

#[test]
fn criterion_2_approximate_alpha_speed_within_five_percent() {
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let alphas = [0.75, 0.8, 0.85, 0.9, 0.95];
        let mut worst_by_alpha = [0.0f64; 5];
        for (slot, &alpha) in alphas.iter().enumerate() {
            for _ in 0..100 {
                let kappa = log_uniform(&mut rng, 0.05, 50.0);
                let gamma = log_uniform(&mut rng, 0.01, 100.0);
                let eps0 = rng.random_range(0.05..0.6);
                let d_eps = rng.random_range(0.005..0.1);
                let e = NormalizedSlse::control(kappa, gamma).map_err(|e| e.to_string())?;
                let v = v_alpha_approx(&e, d_eps, alpha).map_err(|e| e.to_string())?;
                let r = RampSpec::new(eps0, d_eps, v).map_err(|e| e.to_string())?;
                let achieved =
                    dfv_single(&e, &r) / dfv_asymptote(&e, d_eps, eps0).map_err(|e| e.to_string())?;
                let dev = (achieved - alpha).abs() / alpha;
                worst_by_alpha[slot] = worst_by_alpha[slot].max(dev);
            }
        }
        if let Some((slot, &w)) = worst_by_alpha
            .iter()
            .enumerate()
            .find(|(_, &w)| w > 0.05)
        {
            return Err(format!(
                "alpha = {}: worst deviation {w:.4} exceeds 5%",
                alphas[slot]
            ));
        }
        // At the validity boundary the deviation is a parameter-free
        // constant: (1 - e^{-1/2})/(1/2) reaches 78.69% instead of 75%.
        let boundary = worst_by_alpha[0];
        if !(0.048..=0.050).contains(&boundary) {
            return Err(format!(
                "alpha = 0.75 deviation {boundary:.4} is not the expected ~4.9%"
            ));
        }
        Ok(format!(
            "100 draws per alpha within 5%; boundary deviation at alpha = 0.75 is {:.2}%",
            100.0 * boundary
        ))
    })();
    report("criterion 2: 90%-speed approximation validity", outcome);
}

#[test]
fn criterion_3_chain_identity_and_asymptote() {
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let mut worst_identity = 0.0f64;
        let mut worst_asymptote = 0.0f64;
        for _ in 0..200 {
            let control =
                NormalizedSlse::control(log_uniform(&mut rng, 0.05, 50.0), log_uniform(&mut rng, 0.01, 100.0))
                    .map_err(|e| e.to_string())?;
            let mut elements = vec![ChainElement {
                params: control,
                role: ElementRole::Control,
            }];
            for _ in 0..rng.random_range(1..=3usize) {
                elements.push(ChainElement {
                    params: NormalizedSlse::new(
                        log_uniform(&mut rng, 0.05, 50.0),
                        log_uniform(&mut rng, 0.01, 100.0),
                        log_uniform(&mut rng, 0.05, 20.0),
                    )
                    .map_err(|e| e.to_string())?,
                    role: ElementRole::Sheath,
                });
            }
            let chain = SlseChain::new(elements.clone()).map_err(|e| e.to_string())?;
            let eps0 = rng.random_range(0.05..0.6);
            let d_eps = rng.random_range(0.005..0.1);
            let v_mag = log_uniform(&mut rng, 1e-3, 10.0);
            let v_hat = if rng.random_bool(0.5) { v_mag } else { -v_mag };
            let r = RampSpec::new(eps0, d_eps, v_hat).map_err(|e| e.to_string())?;

            // Weighted-average identity, summed independently here.
            let beta_sum: f64 = elements.iter().map(|el| el.params.beta).sum();
            let by_hand: f64 = elements
                .iter()
                .map(|el| el.params.beta / beta_sum * dfv_single(&el.params, &r))
                .sum();
            let chained = dfv_chain(&chain, &r);
            let rel = (chained - by_hand).abs() / by_hand.abs().max(1e-300);
            worst_identity = worst_identity.max(rel);

            // Asymptote reached at a vastly supra-physiological speed.
            let gamma_max = elements
                .iter()
                .map(|el| el.params.gamma)
                .fold(0.0f64, f64::max);
            let v_inf = 1e8 * gamma_max * d_eps;
            let r_inf = RampSpec::new(eps0, d_eps, v_inf).map_err(|e| e.to_string())?;
            let asy = chain.dfv_asymptote(d_eps, eps0).map_err(|e| e.to_string())?;
            let rel_asy = (dfv_chain(&chain, &r_inf) - asy).abs() / asy;
            worst_asymptote = worst_asymptote.max(rel_asy);
        }
        if worst_identity > 1e-12 {
            return Err(format!(
                "weighted-average identity off by {worst_identity:.3e} (want machine precision)"
            ));
        }
        if worst_asymptote > 1e-6 {
            return Err(format!(
                "asymptote mismatch {worst_asymptote:.3e} at 1e8*max(gamma)*d_eps (tol 1e-6)"
            ));
        }
        Ok(format!(
            "200 random chains: identity within {worst_identity:.3e}, asymptote within {worst_asymptote:.3e}"
        ))
    })();
    report("criterion 3: chain composition identities", outcome);
}

#[test]
fn criterion_4_noiseless_pipeline_round_trip() {
    let outcome = (|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let profile = dir.path().join("profile.csv");
        let params = dir.path().join("params.json");
        let trace = dir.path().join("trace.csv");
        let fv = dir.path().join("fv.csv");
        let fit = dir.path().join("fit.json");
        let catalog = catalog_path();

        run_step(&[
            "--quiet",
            "protocol",
            "--actuator",
            "control-2",
            "--pressure",
            "20",
            "--catalog",
            catalog.to_str().unwrap(),
            "--out",
            profile.to_str().unwrap(),
        ])?;

        let truth = NormalizedSlse::control(6.0, 2.0).map_err(|e| e.to_string())?;
        let chain = SlseChain::single(truth).map_err(|e| e.to_string())?;
        ParamFile::from_chain(&chain, EPS0, D_EPS)
            .map_err(|e| e.to_string())?
            .save(&params)
            .map_err(|e| e.to_string())?;

        run_step(&[
            "--quiet",
            "simulate",
            "--params",
            params.to_str().unwrap(),
            "--profile",
            profile.to_str().unwrap(),
            "--out",
            trace.to_str().unwrap(),
        ])?;
        run_step(&[
            "--quiet",
            "analyze",
            "--trace",
            trace.to_str().unwrap(),
            "--out",
            fv.to_str().unwrap(),
        ])?;

        let curve = io::read_fv_curve(&fv).map_err(|e| e.to_string())?;
        if curve.groups.len() != 10 {
            return Err(format!("expected 10 velocity groups, got {}", curve.groups.len()));
        }
        let mut worst_fv = 0.0f64;
        for group in &curve.groups {
            let sign = match group.direction {
                RampDirection::Extend => 1.0,
                RampDirection::Shorten => -1.0,
            };
            let v_hat = sign * group.nominal_speed_mm_s / LP_MM;
            let r = RampSpec::new(curve.eps0, curve.d_eps, v_hat).map_err(|e| e.to_string())?;
            let analytic = fv_single(&truth, &r);
            let rel = (group.fv_mean - analytic).abs() / analytic.abs();
            worst_fv = worst_fv.max(rel);
        }
        if worst_fv > 1e-6 {
            return Err(format!(
                "extracted FV deviates from analytic curve by {worst_fv:.3e} (tol 1e-6)"
            ));
        }

        run_step(&[
            "--quiet",
            "fit",
            "--fv",
            fv.to_str().unwrap(),
            "--stage",
            "control",
            "--out",
            fit.to_str().unwrap(),
        ])?;
        let fitted = ParamFile::load(&fit).map_err(|e| e.to_string())?;
        let kappa_err = (fitted.control_kappa - 6.0).abs() / 6.0;
        let gamma_err = (fitted.control_gamma - 2.0).abs() / 2.0;
        if kappa_err > 1e-4 || gamma_err > 1e-4 {
            return Err(format!(
                "fit errors kappa {kappa_err:.3e}, gamma {gamma_err:.3e} exceed 1e-4"
            ));
        }
        let r2 = fitted.fit_r_squared.ok_or("fit file lacks r_squared")?;
        if r2 < 1.0 - 1e-8 {
            return Err(format!("r_squared = {r2} below 1 - 1e-8"));
        }
        if fitted.fit_converged != Some(true) {
            return Err("fit did not report convergence".into());
        }
        Ok(format!(
            "10/10 FV points within {worst_fv:.3e}; fit errors kappa {kappa_err:.3e}, \
             gamma {gamma_err:.3e}, r_squared = {r2:.12}"
        ))
    })();
    report("criterion 4: noiseless pipeline round trip", outcome);
}

#[test]
fn criterion_5_two_stage_fit_round_trip() {
    let outcome = (|| {
        // Synthetic test-bench design. Recovering three sheath parameters
        // under noise needs data that actually resolves them: a velocity
        // grid spanning both elements' relaxation knees (the dimensionless
        // shape argument gamma*d_eps/|v| crosses 1 inside the grid for both
        // gamma values), a deep ramp for signal amplitude, and repeated
        // observations. On the 5-speed instrument grid the triple's
        // Cramer-Rao bounds exceed 50% at this noise level, so no optimizer
        // could meet the tolerance there.
        let eps0 = 0.3414;
        let d_eps = 0.10;
        let reps = 20;
        let control = NormalizedSlse::control(6.0, 2.0).map_err(|e| e.to_string())?;
        let sheath = NormalizedSlse::new(4.0, 0.5, 2.0).map_err(|e| e.to_string())?;
        let chain = SlseChain::control_and_sheath(control, sheath).map_err(|e| e.to_string())?;
        let speeds: Vec<f64> = (0..10)
            .map(|i| 0.001 * (2.0f64 / 0.001).powf(i as f64 / 9.0))
            .collect();
        let clean: Vec<FitObservation> = speeds
            .iter()
            .flat_map(|&s| [s, -s])
            .map(|v_hat| {
                let r = RampSpec::new(eps0, d_eps, v_hat)?;
                Ok(FitObservation {
                    v_hat,
                    fv: chain.fv(&r),
                    weight: 1.0,
                })
            })
            .collect::<vma_core::Result<_>>()
            .map_err(|e| e.to_string())?;

        // Noiseless recovery.
        let problem = FitProblem::from_observations(clean.clone(), d_eps, eps0)
            .map_err(|e| e.to_string())?
            .with_frozen_control(control);
        let fit = fit_sheath(&problem, &FitOptions::default()).map_err(|e| e.to_string())?;
        let noiseless_err = [
            (fit.element.kappa - sheath.kappa).abs() / sheath.kappa,
            (fit.element.gamma - sheath.gamma).abs() / sheath.gamma,
            (fit.element.beta - sheath.beta).abs() / sheath.beta,
        ]
        .into_iter()
        .fold(0.0f64, f64::max);
        if noiseless_err > 1e-3 {
            return Err(format!(
                "noiseless sheath recovery off by {noiseless_err:.3e} (tol 1e-3)"
            ));
        }

        // Force noise at 1% of the baseline force: FV is peak force over
        // baseline force, so sigma 0.01 on FV is sigma 0.01*F0 on the
        // measured force.
        let normal = Normal::new(0.0, 0.01).map_err(|e| e.to_string())?;
        let mut worst_seed_err = 0.0f64;
        let mut r2_sum = 0.0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut obs = Vec::with_capacity(reps * clean.len());
            for _ in 0..reps {
                for o in &clean {
                    obs.push(FitObservation {
                        fv: o.fv + normal.sample(&mut rng),
                        ..*o
                    });
                }
            }
            let problem = FitProblem::from_observations(obs, d_eps, eps0)
                .map_err(|e| e.to_string())?
                .with_frozen_control(control);
            let fit = fit_sheath(&problem, &FitOptions::default()).map_err(|e| e.to_string())?;
            let err = [
                (fit.element.kappa - sheath.kappa).abs() / sheath.kappa,
                (fit.element.gamma - sheath.gamma).abs() / sheath.gamma,
                (fit.element.beta - sheath.beta).abs() / sheath.beta,
            ]
            .into_iter()
            .fold(0.0f64, f64::max);
            worst_seed_err = worst_seed_err.max(err);
            r2_sum += fit.r_squared;
        }
        let mean_r2 = r2_sum / 100.0;
        if worst_seed_err > 0.15 {
            return Err(format!(
                "noisy recovery error {worst_seed_err:.3} exceeds 15% over 100 seeds"
            ));
        }
        if mean_r2 < 0.99 {
            return Err(format!("mean r_squared {mean_r2:.4} below 0.99"));
        }
        Ok(format!(
            "noiseless within {noiseless_err:.3e}; 100 noisy seeds within {:.1}%, mean r_squared {mean_r2:.4}",
            100.0 * worst_seed_err
        ))
    })();
    report("criterion 5: two-stage fit round trip", outcome);
}

#[test]
fn criterion_6_parameter_sweep_trends() {
    let outcome = (|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let run_sweep = |name: &str, body: &str| -> Result<vma_cli::sweep::SweepManifest, String> {
            let spec = dir.path().join(format!("{name}.toml"));
            let out_dir = dir.path().join(name);
            std::fs::write(&spec, body).map_err(|e| e.to_string())?;
            run_step(&[
                "--quiet",
                "sweep",
                "--spec",
                spec.to_str().unwrap(),
                "--out-dir",
                out_dir.to_str().unwrap(),
            ])?;
            let manifest = std::fs::read_to_string(out_dir.join("manifest.json"))
                .map_err(|e| e.to_string())?;
            serde_json::from_str(&manifest).map_err(|e| e.to_string())
        };

        // Height scales linearly with kappa.
        let kappa = run_sweep(
            "kappa",
            "parameter = \"kappa\"\nelement = \"control\"\nvalues = [1.0, 5.0, 10.0, 40.0]\n\
             eps0 = 0.3414\nd_eps = 0.02845\nv_min = 0.001\nv_max = 10.0\npoints_per_side = 8\n\n\
             [control]\nkappa = 6.0\ngamma = 2.0\n",
        )?;
        if !kappa.checks["asymptote_strictly_increasing"] {
            return Err("kappa sweep: asymptote ordering check failed".into());
        }
        let base = kappa.asymptote[0] / kappa.values[0];
        for (a, v) in kappa.asymptote.iter().zip(&kappa.values) {
            let ratio = a / v;
            if (ratio - base).abs() > 1e-12 * base {
                return Err(format!(
                    "kappa sweep: asymptote/kappa = {ratio} is not constant ({base})"
                ));
            }
        }

        // Steepness scales linearly with gamma across four decades.
        let gamma = run_sweep(
            "gamma",
            "parameter = \"gamma\"\nelement = \"control\"\nvalues = [0.02, 0.2, 2.0, 20.0, 200.0]\n\
             eps0 = 0.3414\nd_eps = 0.02845\nv_min = 0.0001\nv_max = 100.0\npoints_per_side = 8\n\n\
             [control]\nkappa = 6.0\ngamma = 2.0\n",
        )?;
        if !gamma.checks["v_alpha_90_strictly_increasing"] {
            return Err("gamma sweep: v_alpha(0.9) ordering check failed".into());
        }
        let base = gamma.v_alpha_90[0] / gamma.values[0];
        for (v90, v) in gamma.v_alpha_90.iter().zip(&gamma.values) {
            let ratio = v90 / v;
            if (ratio - base).abs() > 1e-12 * base {
                return Err(format!(
                    "gamma sweep: v_alpha_90/gamma = {ratio} is not constant ({base})"
                ));
            }
        }

        // A stiffer sheath amplifies its distance from the bare control curve.
        let beta = run_sweep(
            "beta",
            "parameter = \"beta\"\nelement = \"sheath\"\nvalues = [0.25, 0.5, 1.0, 2.0, 4.0]\n\
             eps0 = 0.3414\nd_eps = 0.02845\nv_min = 0.001\nv_max = 10.0\npoints_per_side = 8\n\n\
             [control]\nkappa = 6.0\ngamma = 2.0\n\n\
             [sheath]\nkappa = 3.0\ngamma = 0.7\nbeta = 0.8\n",
        )?;
        if !beta.checks["distance_to_control_strictly_increasing"] {
            return Err("beta sweep: distance ordering check failed".into());
        }
        let distance = beta
            .distance_to_control
            .as_ref()
            .ok_or("beta sweep manifest lacks distance_to_control")?;
        Ok(format!(
            "asymptote proportional to kappa over {:?}; v_alpha(0.9) proportional to gamma over 4 decades; \
             |chain - control| rises {:.4} -> {:.4} with beta",
            kappa.values,
            distance.first().unwrap(),
            distance.last().unwrap()
        ))
    })();
    report("criterion 6: parameter sweep trends", outcome);
}

#[test]
fn criterion_7_catalog_contraction_ratios() {
    let outcome = (|| {
        let catalog = load_catalog(&catalog_path()).map_err(|e| e.to_string())?;
        let printed: [(&str, f64); 12] = [
            ("control-1", 22.8),
            ("control-2", 25.4),
            ("control-3", 26.6),
            ("ecoflex-1", 17.9),
            ("ecoflex-2", 21.8),
            ("ecoflex-3", 23.4),
            ("urethane-1", 21.7),
            ("urethane-2", 22.6),
            ("urethane-3", 23.9),
            ("carbopol-1", 21.4),
            ("carbopol-2", 21.9),
            ("carbopol-3", 24.9),
        ];
        let mut failures = Vec::new();
        for (id, tabulated) in printed {
            let record = catalog
                .get(id)
                .ok_or_else(|| format!("catalog lacks {id}"))?;
            let computed = record.max_contraction_ratio().map_err(|e| e.to_string())?;
            if (computed - tabulated).abs() > 0.1 + 1e-9 {
                failures.push(format!(
                    "{id}: lengths {} -> {} mm give {computed:.4}%, table prints {tabulated}%",
                    record.initial_length_mm, record.min_length_mm
                ));
            }
        }
        if failures.is_empty() {
            Ok("all 12 tabulated contraction ratios reproduced to 0.1".into())
        } else {
            Err(format!(
                "{} of 12 rows disagree with their own printed lengths: {}",
                failures.len(),
                failures.join("; ")
            ))
        }
    })();
    report("criterion 7: tabulated contraction ratios", outcome);
}

/// Independently walks a generated profile and checks the published session
/// structure: settle, +/-amplitude preconditioning cycle at the slow rate,
/// settle, then per speed and direction a ramp, a hold, a slow return, and
/// a hold.
fn check_session_structure(
    profile: &StrainProfile,
    lp_mm: f64,
    velocities: &[f64],
    ramp_mm: f64,
    hold_s: f64,
    slow_mm_s: f64,
    precondition_mm: f64,
    settle_s: f64,
) -> Result<(), String> {
    let segs = &profile.segments;
    let expected_len = 5 + 8 * velocities.len();
    if segs.len() != expected_len {
        return Err(format!("expected {expected_len} segments, got {}", segs.len()));
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let expect = |i: usize, duration: f64, rate_mm_s: f64| -> Result<(), String> {
        let s = &segs[i];
        if !close(s.duration, duration) || !close(s.rate * lp_mm, rate_mm_s) {
            return Err(format!(
                "segment {i}: {} s at {} mm/s, expected {} s at {} mm/s",
                s.duration,
                s.rate * lp_mm,
                duration,
                rate_mm_s
            ));
        }
        Ok(())
    };
    expect(0, settle_s, 0.0)?;
    expect(1, precondition_mm / slow_mm_s, slow_mm_s)?;
    expect(2, 2.0 * precondition_mm / slow_mm_s, -slow_mm_s)?;
    expect(3, precondition_mm / slow_mm_s, slow_mm_s)?;
    expect(4, settle_s, 0.0)?;
    let mut i = 5;
    for &v in velocities {
        for sign in [1.0, -1.0] {
            expect(i, ramp_mm / v, sign * v)?;
            expect(i + 1, hold_s, 0.0)?;
            expect(i + 2, ramp_mm / slow_mm_s, -sign * slow_mm_s)?;
            expect(i + 3, hold_s, 0.0)?;
            i += 4;
        }
    }
    if (profile.end_strain() - profile.start_strain).abs() > 1e-12 {
        return Err("profile does not return to its start strain".into());
    }
    Ok(())
}

#[test]
fn criterion_8_protocol_structure_and_segmentation() {
    let outcome = (|| {
        // 20 psi: full 2 mm ramps.
        let cfg = ProtocolConfig::standard(20.0, IL_MM, LP_MM);
        let profile = build_protocol(&cfg).map_err(|e| e.to_string())?;
        check_session_structure(
            &profile,
            LP_MM,
            &[2.0, 4.0, 6.0, 8.0, 10.0],
            2.0,
            30.0,
            0.01,
            4.0,
            30.0,
        )
        .map_err(|e| format!("20 psi structure: {e}"))?;

        // 5 psi: the short-margin variant with 1 mm ramps.
        let lp5 = 88.3;
        let cfg5 = ProtocolConfig::standard(5.0, IL_MM, lp5);
        let profile5 = build_protocol(&cfg5).map_err(|e| e.to_string())?;
        check_session_structure(
            &profile5,
            lp5,
            &[2.0, 4.0, 6.0, 8.0, 10.0],
            1.0,
            30.0,
            0.01,
            4.0,
            30.0,
        )
        .map_err(|e| format!("5 psi structure: {e}"))?;

        // Segmentation of a noiseless trace recovers every commanded velocity.
        let meta = TraceMeta::new("control-2", IL_MM, LP_MM, 20.0, 0.01).map_err(|e| e.to_string())?;
        let chain = vec![SlseParams::new(1.0, 6.0, 3.0).map_err(|e| e.to_string())?];
        let trace = simulate(&chain, &profile, &meta).map_err(|e| e.to_string())?;
        let windows = segment_ramps(&trace, &cfg).map_err(|e| e.to_string())?;
        let schedule = ramp_schedule(&cfg).map_err(|e| e.to_string())?;
        if windows.len() != schedule.len() || windows.len() != 10 {
            return Err(format!(
                "expected 10 ramps, segmented {} of {} commanded",
                windows.len(),
                schedule.len()
            ));
        }
        let mut worst = 0.0f64;
        for (w, cmd) in windows.iter().zip(&schedule) {
            let fitted = fit_ramp_velocity(&trace, w).map_err(|e| e.to_string())?;
            let rel = (fitted - cmd.velocity_mm_s).abs() / cmd.velocity_mm_s.abs();
            worst = worst.max(rel);
        }
        if worst > 1e-9 {
            return Err(format!(
                "fitted ramp velocity deviates by {worst:.3e} (tol 1e-9)"
            ));
        }
        Ok(format!(
            "45-segment structure verified at 20 and 5 psi; 10/10 ramp velocities recovered within {worst:.3e}"
        ))
    })();
    report("criterion 8: session structure and segmentation", outcome);
}
