//! The five subcommands. Each reads a resolved [`Config`], runs the
//! computation, and writes its tables into the output directory.

use std::path::{Path, PathBuf};

use squeezeclock_core::analysis::fit_scaling;
use squeezeclock_core::clockloop::requires_trajectory;
use squeezeclock_core::lonoise::NoiseKind;
use squeezeclock_core::montecarlo::{run_experiment, slaved_psd};
use squeezeclock_core::spinstate::{kappa_for_xi, EnsembleSpec, StateMoments};
use squeezeclock_core::theory::{
    floor_coeff_theory, lo_phase_variance, optimal_gamma_t, predicted_exponent,
    predicted_improvement, sigma_y_theory, zeta, FeedbackKind, StateKind,
};

use crate::config::{Config, ResolvedState, StateRule};
use crate::error::CliError;
use crate::output::{write_table, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Moments,
    Theory,
    Run,
    Sweep,
    Psd,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Moments => "moments",
            Command::Theory => "theory",
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Psd => "psd",
        }
    }
}

pub fn execute(command: Command, config: &Config, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    config.check_common()?;
    match command {
        Command::Moments => cmd_moments(config, out),
        Command::Theory => cmd_theory(config, out),
        Command::Run => cmd_run(config, out),
        Command::Sweep => cmd_sweep(config, out),
        Command::Psd => cmd_psd(config, out),
    }
}

fn method_name(m: &StateMoments) -> &'static str {
    m.method.as_str()
}

pub fn cmd_moments(config: &Config, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut table = Table::new(&[
        "n_atoms", "kappa", "jz_mean", "dJy", "dJz", "dJx", "xi", "method",
    ]);
    for &n in &config.ensemble.n_atoms {
        let specs: Vec<EnsembleSpec> = if config.ensemble.kappa.is_empty() {
            vec![EnsembleSpec::uncorrelated(n)?]
        } else {
            config
                .ensemble
                .kappa
                .iter()
                .map(|&k| EnsembleSpec::gaussian(n, k))
                .collect::<Result<_, _>>()?
        };
        for spec in specs {
            let st = config.state_from_spec(spec)?;
            let m = st.moments;
            table.push(vec![
                n.into(),
                st.kappa().into(),
                m.jz_mean.into(),
                m.dj_y().into(),
                m.dj_z().into(),
                m.dj_x().into(),
                m.xi().into(),
                method_name(&m).into(),
            ]);
        }
    }
    Ok(vec![write_table(
        out,
        "moments.csv",
        "moments",
        config,
        &table,
    )?])
}

/// ⟨δφ_E^2⟩ and λ for the configured dephasing.
fn dephasing_terms(
    config: &Config,
    m: &StateMoments,
    ramsey_t: f64,
) -> Result<(f64, f64), CliError> {
    let lc = config.loop_config(ramsey_t, &config.servo.feedback)?;
    Ok(match lc.dephasing {
        Some(d) => (d.gamma_e * ramsey_t, d.lambda(m)),
        None => (0.0, 0.0),
    })
}

fn theory_floor(config: &Config, m: &StateMoments, ramsey_t: f64) -> Result<f64, CliError> {
    let kind = config.noise_kind()?;
    let gamma_t = if kind == NoiseKind::None {
        0.0
    } else {
        config.noise.gamma * ramsey_t
    };
    let (var_e, lambda) = dephasing_terms(config, m, ramsey_t)?;
    Ok(floor_coeff_theory(
        m,
        lo_phase_variance(kind, gamma_t),
        var_e,
        lambda,
        ramsey_t,
        config.servo.omega,
    ))
}

/// Floor coefficient in units of sqrt(γ)/ω.
fn normalized(config: &Config, c: f64) -> Option<f64> {
    (config.noise.gamma > 0.0).then(|| c * config.servo.omega / config.noise.gamma.sqrt())
}

fn state_kind(rule: StateRule) -> Option<StateKind> {
    match rule {
        StateRule::Uncorrelated => Some(StateKind::Uncorrelated),
        StateRule::Optimal => Some(StateKind::Squeezed),
        _ => None,
    }
}

pub fn cmd_theory(config: &Config, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let kind = config.noise_kind()?;
    let mut table = Table::new(&[
        "n_atoms",
        "feedback",
        "state",
        "kappa",
        "xi",
        "gamma_t_opt",
        "gamma_t",
        "ramsey_t",
        "zeta",
        "floor_coeff",
        "floor_norm",
        "sigma_y_tau",
        "predicted_exponent",
        "predicted_improvement",
    ]);
    for &n in &config.ensemble.n_atoms {
        for state in config.states() {
            let rule = StateRule::parse(&state)?;
            for fb in config.feedbacks() {
                let fk = FeedbackKind::from_law(&fb)?;
                let st = config.resolve_state(n, rule, &fb)?;
                let m = st.moments;
                let gt_opt = optimal_gamma_t(&m, fk, kind).ok();
                let explicit = config.servo.gamma_t.is_some() || config.servo.ramsey_t.is_some();
                let ramsey_t = if config.servo.optimize_t || !explicit {
                    match gt_opt {
                        Some(gt) if config.noise.gamma > 0.0 => gt / config.noise.gamma,
                        _ => config.ramsey_t(&m, &fb)?,
                    }
                } else {
                    config.ramsey_t(&m, &fb)?
                };
                let c = theory_floor(config, &m, ramsey_t)?;
                let (var_e, lambda) = dephasing_terms(config, &m, ramsey_t)?;
                let gamma_t = config.noise.gamma * ramsey_t;
                let sigma = sigma_y_theory(
                    &m,
                    lo_phase_variance(kind, gamma_t),
                    var_e,
                    lambda,
                    ramsey_t,
                    config.analysis.tau,
                    config.servo.omega,
                );
                let exponent = state_kind(rule).and_then(|s| predicted_exponent(fk, kind, s).ok());
                table.push(vec![
                    n.into(),
                    fb.as_str().into(),
                    state.as_str().into(),
                    st.kappa().into(),
                    m.xi().into(),
                    gt_opt.into(),
                    gamma_t.into(),
                    ramsey_t.into(),
                    zeta(&m).into(),
                    c.into(),
                    normalized(config, c).into(),
                    sigma.into(),
                    exponent.into(),
                    predicted_improvement(fk, kind).ok().into(),
                ]);
            }
        }
    }
    Ok(vec![write_table(
        out,
        "theory.csv",
        "theory",
        config,
        &table,
    )?])
}

/// Result of one simulated grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorRow {
    pub feedback: String,
    pub state: String,
    pub axis_value: f64,
    pub n_atoms: u64,
    pub kappa: Option<f64>,
    pub xi: f64,
    pub ramsey_t: f64,
    pub gamma_t: f64,
    pub floor_coeff: Option<f64>,
    pub floor_stderr: Option<f64>,
    pub flagged: bool,
    pub theory_floor: f64,
}

fn simulate_point(
    config: &Config,
    st: &ResolvedState,
    ramsey_t: f64,
    feedback: &str,
) -> Result<(squeezeclock_core::analysis::StabilityCurve, f64), CliError> {
    let exp = config.experiment(st, ramsey_t, feedback)?;
    if exp.config.fast && requires_trajectory(&exp.noise) {
        return Err(CliError::Config(format!(
            "fast mode cannot simulate {} noise; set loop.fast = false",
            exp.noise.kind.as_str()
        )));
    }
    let curve = run_experiment(&exp)?;
    Ok((curve, theory_floor(config, &st.moments, ramsey_t)?))
}

pub fn cmd_run(config: &Config, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let n = config.ensemble.n_atoms[0];
    let state = config.ensemble.state.clone();
    let fb = config.servo.feedback.clone();
    let st = config.resolve_state(n, StateRule::parse(&state)?, &fb)?;
    let ramsey_t = config.ramsey_t(&st.moments, &fb)?;
    let (curve, theory_c) = simulate_point(config, &st, ramsey_t, &fb)?;

    let omega = config.servo.omega;
    let gamma = config.noise.gamma;
    let mut points = Table::new(&[
        "tau",
        "sigma_y",
        "stderr",
        "samples",
        "sigma_y_norm",
        "theory_sigma_y",
    ]);
    for p in &curve.points {
        points.push(vec![
            p.tau.into(),
            p.sigma_y.into(),
            p.stderr.into(),
            p.samples.into(),
            (gamma > 0.0).then(|| p.sigma_y * omega / gamma).into(),
            (theory_c / p.tau.sqrt()).into(),
        ]);
    }
    let mut floor = Table::new(&[
        "n_atoms",
        "feedback",
        "state",
        "kappa",
        "xi",
        "ramsey_t",
        "gamma_t",
        "floor_coeff",
        "floor_stderr",
        "slope",
        "slope_stderr",
        "flagged",
        "fit_tau_min",
        "fit_tau_max",
        "floor_norm",
        "theory_floor_coeff",
        "ratio",
        "trials",
        "cycles",
    ]);
    let f = curve.floor;
    floor.push(vec![
        n.into(),
        fb.as_str().into(),
        state.as_str().into(),
        st.kappa().into(),
        st.moments.xi().into(),
        ramsey_t.into(),
        (gamma * ramsey_t).into(),
        f.map(|f| f.coeff).into(),
        f.map(|f| f.stderr).into(),
        f.map(|f| f.slope).into(),
        f.map(|f| f.slope_stderr).into(),
        f.map(|f| f.flagged).into(),
        f.map(|f| f.tau_min).into(),
        f.map(|f| f.tau_max).into(),
        f.and_then(|f| normalized(config, f.coeff)).into(),
        theory_c.into(),
        f.map(|f| f.coeff / theory_c).into(),
        config.servo.trials.into(),
        config.servo.n_cycles.into(),
    ]);
    Ok(vec![
        write_table(out, "stability.csv", "run", config, &points)?,
        write_table(out, "floor.csv", "run", config, &floor)?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    GammaT,
    Kappa,
    NAtoms,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gamma_t" | "t" => Ok(Axis::GammaT),
            "kappa" => Ok(Axis::Kappa),
            "n_atoms" | "n" => Ok(Axis::NAtoms),
            other => Err(CliError::Config(format!(
                "unknown sweep axis '{other}' (gamma_t, kappa, n_atoms)"
            ))),
        }
    }
}

/// Runs every grid point of every (feedback, state) curve.
pub fn sweep_rows(config: &Config) -> Result<Vec<FloorRow>, CliError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep needs a [sweep] table".into()))?;
    let axis = Axis::parse(&sweep.axis)?;
    if sweep.values.is_empty() {
        return Err(CliError::Config("sweep.values is empty".into()));
    }
    if axis == Axis::GammaT && (config.noise.gamma.is_nan() || config.noise.gamma <= 0.0) {
        return Err(CliError::Config(
            "a gamma_t sweep needs noise.gamma > 0".into(),
        ));
    }
    if config.servo.fast && config.noise_kind()? == NoiseKind::FlickerFm {
        return Err(CliError::Config(
            "fast mode cannot simulate flicker_fm noise; set loop.fast = false".into(),
        ));
    }
    let feedbacks = config.feedbacks();
    let states = config.states();
    for s in &states {
        StateRule::parse(s)?;
    }
    let mut rows = Vec::new();
    for fb in &feedbacks {
        for state in &states {
            let rule = StateRule::parse(state)?;
            for &v in &sweep.values {
                let (n, st) = match axis {
                    Axis::NAtoms => {
                        if !(v >= 2.0 && v.fract() == 0.0) {
                            return Err(CliError::Config(format!(
                                "N = {v} is not an integer >= 2"
                            )));
                        }
                        let n = v as u64;
                        (n, config.resolve_state(n, rule, fb)?)
                    }
                    Axis::Kappa => {
                        let n = config.ensemble.n_atoms[0];
                        (n, config.state_from_spec(EnsembleSpec::gaussian(n, v)?)?)
                    }
                    Axis::GammaT => {
                        let n = config.ensemble.n_atoms[0];
                        (n, config.resolve_state(n, rule, fb)?)
                    }
                };
                let ramsey_t = match axis {
                    Axis::GammaT => v / config.noise.gamma,
                    _ => config.ramsey_t(&st.moments, fb)?,
                };
                let (curve, theory_c) = simulate_point(config, &st, ramsey_t, fb)?;
                if curve.floor.is_none() {
                    eprintln!("warning: no floor fit at {} = {v}", sweep.axis);
                }
                rows.push(FloorRow {
                    feedback: fb.clone(),
                    state: if axis == Axis::Kappa {
                        "kappa".into()
                    } else {
                        state.clone()
                    },
                    axis_value: v,
                    n_atoms: n,
                    kappa: st.kappa(),
                    xi: st.moments.xi(),
                    ramsey_t,
                    gamma_t: config.noise.gamma * ramsey_t,
                    floor_coeff: curve.floor.map(|f| f.coeff),
                    floor_stderr: curve.floor.map(|f| f.stderr),
                    flagged: curve.floor.is_none_or(|f| f.flagged),
                    theory_floor: theory_c,
                });
            }
            if axis == Axis::Kappa {
                break;
            }
        }
    }
    Ok(rows)
}

/// One line of the sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub feedback: String,
    pub state: String,
    pub quantity: &'static str,
    pub value: f64,
    pub stderr: Option<f64>,
    pub predicted: Option<f64>,
    pub points: usize,
}

/// Exponent fits for N sweeps (plus squeezed-minus-uncorrelated
/// differences), or the best grid point for other axes.
pub fn summarize(config: &Config, rows: &[FloorRow]) -> Result<Vec<SummaryRow>, CliError> {
    let axis = Axis::parse(
        &config
            .sweep
            .as_ref()
            .map(|s| s.axis.clone())
            .unwrap_or_default(),
    )?;
    let kind = config.noise_kind()?;
    let mut curves: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.feedback.clone(), r.state.clone());
        if !curves.contains(&key) {
            curves.push(key);
        }
    }
    let mut out = Vec::new();
    for (fb, state) in &curves {
        let pts: Vec<&FloorRow> = rows
            .iter()
            .filter(|r| &r.feedback == fb && &r.state == state)
            .collect();
        match axis {
            Axis::NAtoms => {
                let data: Vec<(f64, f64)> = pts
                    .iter()
                    .filter_map(|r| r.floor_coeff.map(|c| (r.n_atoms as f64, c)))
                    .collect();
                match fit_scaling(&data) {
                    Ok(fit) => {
                        let predicted = StateRule::parse(state)
                            .ok()
                            .and_then(state_kind)
                            .zip(FeedbackKind::from_law(fb).ok())
                            .and_then(|(s, f)| predicted_exponent(f, kind, s).ok());
                        out.push(SummaryRow {
                            feedback: fb.clone(),
                            state: state.clone(),
                            quantity: "exponent",
                            value: fit.exponent,
                            stderr: Some(fit.stderr),
                            predicted,
                            points: data.len(),
                        });
                    }
                    Err(e) => eprintln!("warning: no exponent fit for {fb}/{state}: {e}"),
                }
            }
            _ => {
                let best = pts
                    .iter()
                    .filter_map(|r| r.floor_coeff.map(|c| (r.axis_value, c)))
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((v, _)) = best {
                    out.push(SummaryRow {
                        feedback: fb.clone(),
                        state: state.clone(),
                        quantity: "best_axis_value",
                        value: v,
                        stderr: None,
                        predicted: None,
                        points: pts.len(),
                    });
                }
            }
        }
    }
    if axis == Axis::NAtoms {
        let exps: Vec<SummaryRow> = out.clone();
        for base in exps.iter().filter(|r| r.state == "uncorrelated") {
            for sq in exps
                .iter()
                .filter(|r| r.feedback == base.feedback && r.state != "uncorrelated")
            {
                out.push(SummaryRow {
                    feedback: base.feedback.clone(),
                    state: sq.state.clone(),
                    quantity: "improvement",
                    value: sq.value - base.value,
                    stderr: sq.stderr.zip(base.stderr).map(|(a, b)| a.hypot(b)),
                    predicted: FeedbackKind::from_law(&base.feedback)
                        .ok()
                        .and_then(|f| predicted_improvement(f, kind).ok()),
                    points: sq.points.min(base.points),
                });
            }
        }
    }
    Ok(out)
}

fn sweep_table(config: &Config, rows: &[&FloorRow]) -> Table {
    let mut t = Table::new(&[
        "feedback",
        "state",
        "axis_value",
        "n_atoms",
        "kappa",
        "xi",
        "ramsey_t",
        "gamma_t",
        "floor_coeff",
        "floor_stderr",
        "floor_norm",
        "inv_floor_norm",
        "theory_floor_coeff",
        "theory_norm",
        "ratio",
        "flagged",
        "trials",
        "cycles",
    ]);
    for r in rows {
        let norm = r.floor_coeff.and_then(|c| normalized(config, c));
        t.push(vec![
            r.feedback.as_str().into(),
            r.state.as_str().into(),
            r.axis_value.into(),
            r.n_atoms.into(),
            r.kappa.into(),
            r.xi.into(),
            r.ramsey_t.into(),
            r.gamma_t.into(),
            r.floor_coeff.into(),
            r.floor_stderr.into(),
            norm.into(),
            norm.map(f64::recip).into(),
            r.theory_floor.into(),
            normalized(config, r.theory_floor).into(),
            r.floor_coeff.map(|c| c / r.theory_floor).into(),
            r.flagged.into(),
            config.servo.trials.into(),
            config.servo.n_cycles.into(),
        ]);
    }
    t
}

pub fn cmd_sweep(config: &Config, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rows = sweep_rows(config)?;
    if rows.len() == 1 {
        eprintln!("warning: single grid point; no fit");
    }
    let mut files = vec![write_table(
        out,
        "sweep.csv",
        "sweep",
        config,
        &sweep_table(config, &rows.iter().collect::<Vec<_>>()),
    )?];
    let mut curves: Vec<(String, String)> = Vec::new();
    for r in &rows {
        let key = (r.feedback.clone(), r.state.clone());
        if !curves.contains(&key) {
            curves.push(key);
        }
    }
    if curves.len() > 1 {
        for (fb, state) in &curves {
            let subset: Vec<&FloorRow> = rows
                .iter()
                .filter(|r| &r.feedback == fb && &r.state == state)
                .collect();
            let name = format!("sweep_{fb}_{state}.csv");
            files.push(write_table(
                out,
                &name,
                "sweep",
                config,
                &sweep_table(config, &subset),
            )?);
        }
    }
    let summary = summarize(config, &rows)?;
    let mut t = Table::new(&[
        "feedback",
        "state",
        "quantity",
        "value",
        "stderr",
        "predicted",
        "points",
    ]);
    for s in &summary {
        t.push(vec![
            s.feedback.as_str().into(),
            s.state.as_str().into(),
            s.quantity.into(),
            s.value.into(),
            s.stderr.into(),
            s.predicted.into(),
            s.points.into(),
        ]);
    }
    files.push(write_table(out, "summary.csv", "sweep", config, &t)?);
    Ok(files)
}

/// Free, locked-uncorrelated and locked-squeezed spectra on a common grid.
pub struct Spectra {
    pub freqs: Vec<f64>,
    pub free: Vec<f64>,
    pub unsqueezed: Vec<f64>,
    pub squeezed: Vec<f64>,
    pub ramsey_t: f64,
    pub squeezed_xi: f64,
}

pub fn spectra(config: &Config) -> Result<Spectra, CliError> {
    if config.servo.fast {
        return Err(CliError::Config(
            "psd needs trajectory mode; set loop.fast = false".into(),
        ));
    }
    let n = config.ensemble.n_atoms[0];
    let fb = config.servo.feedback.clone();
    let unsq = config.resolve_state(n, StateRule::Uncorrelated, &fb)?;
    let target = config.psd.squeezed_xi * (n as f64).powf(config.psd.squeezed_xi_power);
    let sq = config.state_from_spec(EnsembleSpec::gaussian(n, kappa_for_xi(n, target)?)?)?;
    let ramsey_t = config.ramsey_t(&unsq.moments, &fb)?;
    let noise = config.noise_model(ramsey_t)?;
    let locked = config.loop_config(ramsey_t, &fb)?;
    let free = config.loop_config(ramsey_t, "open")?;
    let seg = config.psd.segment_cycles;
    let ov = config.psd.overlap;
    let s_free = slaved_psd(&free, &noise, &unsq.moments, seg, ov)?;
    let s_unsq = slaved_psd(&locked, &noise, &unsq.moments, seg, ov)?;
    let s_sq = slaved_psd(&locked, &noise, &sq.moments, seg, ov)?;
    Ok(Spectra {
        freqs: s_free.freqs,
        free: s_free.psd,
        unsqueezed: s_unsq.psd,
        squeezed: s_sq.psd,
        ramsey_t,
        squeezed_xi: sq.moments.xi(),
    })
}

pub fn cmd_psd(config: &Config, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let s = spectra(config)?;
    let mut t = Table::new(&["f", "S_free", "S_locked_unsqueezed", "S_locked_squeezed"]);
    for i in 0..s.freqs.len() {
        t.push(vec![
            s.freqs[i].into(),
            s.free[i].into(),
            s.unsqueezed[i].into(),
            s.squeezed[i].into(),
        ]);
    }
    Ok(vec![write_table(out, "psd.csv", "psd", config, &t)?])
}
