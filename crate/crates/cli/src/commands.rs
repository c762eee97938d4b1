use std::path::{Path, PathBuf};

use apkinetic::acceptance::{CriterionResult, CRITERIA};
use apkinetic::experiments::{
    boundary_layer_ratio, compare_inflow, compare_periodic, space_convergence, time_convergence,
    time_convergence_inflow, time_convergence_vs_diffusion, Comparison, ConvergenceStudy, KINETIC_EPS_MIN,
};
use apkinetic::inflow::InflowData;
use apkinetic::periodic::step_count;
use apkinetic::tableau::DoubleButcherTableau;
use rayon::prelude::*;

use crate::config::{Config, Model, ReferenceChoice};
use crate::error::{CliError, CliResult};
use crate::output::{metadata, ConvergenceTable, MicroDump, Snapshots};

/// One point of a parameter sweep.
#[derive(Clone, Debug)]
struct Job {
    tableau: DoubleButcherTableau,
    eps: f64,
    dt: f64,
    nx: usize,
}

impl Job {
    fn stem(&self, model: Model) -> String {
        let name: String =
            self.tableau.name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
        format!("{}_{name}_eps{:e}_dt{:e}_nx{}", model.name(), self.eps, self.dt, self.nx)
    }

    fn keys(&self, model: Model) -> Vec<(&'static str, String)> {
        vec![
            ("model", model.name().into()),
            ("tableau", self.tableau.name.clone()),
            ("eps", format!("{:?}", self.eps)),
            ("dt", format!("{:?}", self.dt)),
            ("nx", self.nx.to_string()),
        ]
    }
}

/// Sweep points in config order: tableau, then eps, dt, nx.
fn jobs(cfg: &Config) -> CliResult<Vec<Job>> {
    let mut v = Vec::new();
    for name in &cfg.run.tableau {
        let tableau = cfg.tableau(name)?;
        for &eps in &cfg.run.eps {
            for &dt in &cfg.run.dt {
                for &nx in &cfg.space.nx {
                    v.push(Job { tableau: tableau.clone(), eps, dt, nx });
                }
            }
        }
    }
    Ok(v)
}

fn snap_warning(t_final: f64, dt: f64) -> CliResult<Option<String>> {
    let (n, snapped) = step_count(t_final, dt)?;
    Ok(snapped.then(|| {
        format!("t_final = {t_final} is not a multiple of dt = {dt}; snapped to {:?} ({n} steps)", n as f64 * dt)
    }))
}

fn finite(rho: &[f64], what: &str) -> CliResult<()> {
    if rho.iter().all(|r| r.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Solver(format!("{what}: density is not finite (unstable time step?)")))
    }
}

/// Steps `s0` to `t_final`, recording the density at t = 0, every
/// `every` steps and at the end.
#[allow(clippy::too_many_arguments)]
fn march<S>(
    s0: S,
    dt: f64,
    t_final: f64,
    every: usize,
    x: &[f64],
    step: impl Fn(&S) -> apkinetic::Result<S>,
    density: impl Fn(&S) -> Vec<f64>,
    mut extra: impl FnMut(f64, &S),
) -> CliResult<Snapshots> {
    let (n, _) = step_count(t_final, dt)?;
    let mut out = Snapshots::default();
    let mut rec = |t: f64, s: &S, out: &mut Snapshots| -> CliResult<()> {
        let rho = density(s);
        finite(&rho, &format!("t = {t}"))?;
        out.push(t, x, &rho);
        extra(t, s);
        Ok(())
    };
    rec(0.0, &s0, &mut out)?;
    let mut s = s0;
    for i in 1..=n {
        s = step(&s)?;
        if i == n || (every > 0 && i % every == 0) {
            rec(i as f64 * dt, &s, &mut out)?;
        }
    }
    Ok(out)
}

struct RunOutput {
    stem: String,
    snapshots: Snapshots,
    micro: Option<MicroDump>,
    warnings: Vec<String>,
}

fn micro_rows(
    rows: &mut Vec<(f64, usize, f64, usize, f64, f64)>,
    t: f64,
    xg: &[f64],
    v: &[f64],
    g: &nalgebra::DMatrix<f64>,
) {
    for (i, &x) in xg.iter().enumerate() {
        for (k, &vk) in v.iter().enumerate() {
            rows.push((t, i, x, k, vk, g[(i, k)]));
        }
    }
}

fn run_job(cfg: &Config, job: &Job) -> CliResult<RunOutput> {
    let model = cfg.run.model;
    let (t_final, every) = (cfg.run.t_final, cfg.run.snapshot_every);
    let mut warnings: Vec<String> = snap_warning(t_final, job.dt)?.into_iter().collect();
    let mut micro = Vec::new();
    let dump = cfg.run.dump_g;
    let snapshots = match model {
        Model::Inflow => {
            let sc = cfg.inflow(&job.tableau, job.eps, job.nx)?;
            let solver = sc.solver(job.dt)?;
            if job.eps >= KINETIC_EPS_MIN && solver.signal_reaches_right(t_final) {
                warnings.push(format!(
                    "signals from the left boundary can reach x = {} by t = {t_final} (speed v_max/eps = {})",
                    sc.length,
                    sc.v_max / job.eps
                ));
            }
            let xg = solver.mats.half_x();
            let v = solver.grid.v.clone();
            march(
                solver.zero_state(),
                job.dt,
                t_final,
                every,
                &solver.mats.interior_x(),
                |s| solver.step(s),
                |s| s.rho.as_slice().to_vec(),
                |t, s| {
                    if dump {
                        micro_rows(&mut micro, t, &xg, &v, &s.g_bar)
                    }
                },
            )?
        }
        _ => {
            let sc = cfg.periodic(&job.tableau, job.eps, job.nx)?;
            let solver = sc.solver(job.dt)?;
            let init = sc.initial(&solver);
            let x = solver.ops.rho_x();
            match model {
                Model::Bgk => {
                    if job.eps < KINETIC_EPS_MIN {
                        warnings.push(format!(
                            "the kinetic solver is not asymptotic preserving; eps = {} may need a very small dt",
                            job.eps
                        ));
                    }
                    let b = sc.bgk_reference(job.dt)?;
                    let f0 = sc.kinetic_initial(&solver, &init);
                    march(
                        f0,
                        job.dt,
                        t_final,
                        every,
                        &x,
                        |f| Ok(b.step(f)),
                        |f| b.density(f).as_slice().to_vec(),
                        |_, _| {},
                    )?
                }
                Model::Diffusion | Model::AdvdiffLimit => {
                    let d = sc.diffusion_reference(job.dt)?;
                    march(init.rho, job.dt, t_final, every, &x, |r| d.step(r), |r| r.as_slice().to_vec(), |_, _| {})?
                }
                _ => {
                    let xg = solver.ops.g_x();
                    let v = solver.grid.v.clone();
                    march(
                        init,
                        job.dt,
                        t_final,
                        every,
                        &x,
                        |s| solver.step(s),
                        |s| s.rho.as_slice().to_vec(),
                        |t, s| {
                            if dump {
                                micro_rows(&mut micro, t, &xg, &v, &s.g)
                            }
                        },
                    )?
                }
            }
        }
    };
    let micro_model = matches!(model, Model::Micromacro | Model::Advdiff | Model::Inflow);
    if dump && !micro_model {
        warnings.push(format!("run.dump_g ignored for model {}", model.name()));
    }
    let meta = metadata(cfg, "run", &job.keys(model));
    Ok(RunOutput {
        stem: job.stem(model),
        snapshots: Snapshots { meta: meta.clone(), ..snapshots },
        micro: (dump && micro_model).then_some(MicroDump { meta, rows: micro }),
        warnings,
    })
}

fn warn(context: &str, w: &[String]) {
    for w in w {
        eprintln!("warning: {context}: {w}");
    }
}

/// Writes one snapshot CSV per sweep point; returns the paths.
pub fn cmd_run(cfg: &Config) -> CliResult<Vec<PathBuf>> {
    let jobs = jobs(cfg)?;
    let outs: Vec<RunOutput> = jobs.par_iter().map(|j| run_job(cfg, j)).collect::<CliResult<_>>()?;
    let dir = cfg.output_dir();
    let mut paths = Vec::new();
    for o in outs {
        warn(&o.stem, &o.warnings);
        let p = dir.join(format!("{}.csv", o.stem));
        o.snapshots.write(&p)?;
        println!("{} ({} snapshot(s))", p.display(), o.snapshots.times().len());
        paths.push(p);
        if let Some(m) = o.micro {
            let p = dir.join(format!("{}_g.csv", o.stem));
            m.write(&p)?;
            paths.push(p);
        }
    }
    Ok(paths)
}

fn single_nx(cfg: &Config) -> CliResult<usize> {
    match cfg.space.nx.as_slice() {
        [n] => Ok(*n),
        _ => Err(CliError::Config(format!("time studies use one grid; space.nx = {:?}", cfg.space.nx))),
    }
}

fn summarize(studies: &[ConvergenceStudy]) {
    for s in studies {
        println!(
            "{:<10} eps={:<8e} slope L2 {:>5.2}  Linf {:>5.2}  (fit over {} of {} points, reference {})",
            s.scheme,
            s.eps,
            s.slope(),
            s.fit_linf.slope,
            s.fit_l2.used.len(),
            s.values.len(),
            s.reference
        );
    }
}

fn schemes_and_eps(cfg: &Config) -> CliResult<Vec<(DoubleButcherTableau, f64)>> {
    let mut v = Vec::new();
    for name in &cfg.run.tableau {
        let t = cfg.tableau(name)?;
        for &eps in &cfg.run.eps {
            v.push((t.clone(), eps));
        }
    }
    Ok(v)
}

/// Time-step refinement per `(scheme, eps)`; writes `convergence_time.csv`.
pub fn cmd_convergence_time(cfg: &Config) -> CliResult<PathBuf> {
    let nx = single_nx(cfg)?;
    let st = &cfg.study;
    let t_final = cfg.run.t_final;
    for &dt in &st.dt_list {
        if let Some(w) = snap_warning(t_final, dt)? {
            warn("convergence-time", &[w]);
        }
    }
    let model = cfg.run.model;
    let studies: Vec<ConvergenceStudy> = schemes_and_eps(cfg)?
        .par_iter()
        .map(|(tab, eps)| -> CliResult<ConvergenceStudy> {
            Ok(match (model, st.reference) {
                (Model::Micromacro | Model::Advdiff, ReferenceChoice::SelfRef) => {
                    time_convergence(&cfg.periodic(tab, *eps, nx)?, &st.dt_list, st.ref_dt, t_final)?
                }
                (Model::Micromacro | Model::Advdiff, ReferenceChoice::Diffusion) => {
                    time_convergence_vs_diffusion(&cfg.periodic(tab, *eps, nx)?, &st.dt_list, st.ref_dt, t_final)?
                }
                (Model::Inflow, ReferenceChoice::SelfRef) => {
                    time_convergence_inflow(&cfg.inflow(tab, *eps, nx)?, &st.dt_list, st.ref_dt, t_final)?
                }
                (Model::Inflow, ReferenceChoice::Diffusion) => {
                    return Err(CliError::Config("inflow time studies support study.reference = \"self\" only".into()))
                }
                (m, _) => {
                    return Err(CliError::Config(format!(
                        "convergence studies need a micro-macro model, not {}",
                        m.name()
                    )))
                }
            })
        })
        .collect::<CliResult<_>>()?;
    let meta = metadata(cfg, "convergence-time", &[("nx", nx.to_string())]);
    let mut table = ConvergenceTable::new("dt", meta);
    studies.iter().for_each(|s| table.add(s));
    let p = cfg.output_dir().join("convergence_time.csv");
    table.write(&p)?;
    summarize(&studies);
    println!("{}", p.display());
    Ok(p)
}

/// Grid refinement per `(scheme, eps)`; writes `convergence_space.csv`.
pub fn cmd_convergence_space(cfg: &Config) -> CliResult<PathBuf> {
    let st = &cfg.study;
    if !matches!(cfg.run.model, Model::Micromacro | Model::Advdiff) {
        return Err(CliError::Config(format!(
            "space studies need a periodic micro-macro model, not {}",
            cfg.run.model.name()
        )));
    }
    if let Some(w) = snap_warning(st.space_t_final, st.space_dt)? {
        warn("convergence-space", &[w]);
    }
    let studies: Vec<ConvergenceStudy> = schemes_and_eps(cfg)?
        .par_iter()
        .map(|(tab, eps)| -> CliResult<ConvergenceStudy> {
            let sc = cfg.periodic(tab, *eps, st.ref_nx)?;
            Ok(space_convergence(&sc, &st.nx_list, st.ref_nx, st.space_dt, st.space_t_final)?)
        })
        .collect::<CliResult<_>>()?;
    let meta = metadata(cfg, "convergence-space", &[("dt", format!("{:?}", st.space_dt))]);
    let mut table = ConvergenceTable::new("nx", meta);
    studies.iter().for_each(|s| table.add(s));
    let p = cfg.output_dir().join("convergence_space.csv");
    table.write(&p)?;
    summarize(&studies);
    println!("{}", p.display());
    Ok(p)
}

fn compare_job(cfg: &Config, job: &Job) -> CliResult<(Comparison, Vec<String>)> {
    let mut notes: Vec<String> = snap_warning(cfg.run.t_final, job.dt)?.into_iter().collect();
    let t = cfg.run.t_final;
    let cmp = match cfg.run.model {
        Model::Micromacro | Model::Advdiff => {
            compare_periodic(&cfg.periodic(&job.tableau, job.eps, job.nx)?, job.dt, t)?
        }
        Model::Inflow => {
            let sc = cfg.inflow(&job.tableau, job.eps, job.nx)?;
            if job.eps >= KINETIC_EPS_MIN && sc.solver(job.dt)?.signal_reaches_right(t) {
                notes.push(format!("signals from the left boundary can reach x = {} by t = {t}", sc.length));
            }
            compare_inflow(&sc, job.dt, t)?
        }
        m => return Err(CliError::Config(format!("compare needs a micro-macro model, not {}", m.name()))),
    };
    finite(&cmp.micro_macro, "micro-macro")?;
    Ok((cmp, notes))
}

/// Runs the micro-macro, kinetic and limit models on the same setup and
/// writes one snapshot CSV per model.
pub fn cmd_compare(cfg: &Config) -> CliResult<Vec<PathBuf>> {
    let jobs = jobs(cfg)?;
    let model = cfg.run.model;
    let results: Vec<(Comparison, Vec<String>)> =
        jobs.par_iter().map(|j| compare_job(cfg, j)).collect::<CliResult<_>>()?;
    let dir = cfg.output_dir();
    let mut paths = Vec::new();
    for (job, (cmp, notes)) in jobs.iter().zip(results) {
        let stem = format!("compare_{}", job.stem(model));
        warn(&stem, &notes);
        let mut profiles = vec![("mm", &cmp.micro_macro), ("diffusion", &cmp.diffusion)];
        if let Some(k) = &cmp.kinetic {
            profiles.insert(1, ("bgk", k));
        }
        for (tag, rho) in profiles {
            let mut keys = job.keys(model);
            keys.push(("profile", tag.into()));
            let mut s = Snapshots { meta: metadata(cfg, "compare", &keys), ..Default::default() };
            s.push(cmp.t_final, &cmp.x, rho);
            let p = dir.join(format!("{stem}_{tag}.csv"));
            s.write(&p)?;
            paths.push(p);
        }
        let mut line = format!("{stem}: MM vs diffusion rel L-inf {:.3e}", cmp.mm_vs_diffusion());
        match cmp.mm_vs_kinetic() {
            Some(d) => line.push_str(&format!(", MM vs BGK {d:.3e}")),
            None => line.push_str(&format!(", BGK skipped (eps < {KINETIC_EPS_MIN})")),
        }
        if model == Model::Inflow {
            let sc = cfg.inflow(&job.tableau, job.eps, job.nx)?;
            line.push_str(&format!(", limit boundary value {:.4}", sc.limit_boundary_value()?));
            if !matches!(sc.data, InflowData::Equilibrium(_)) {
                line.push_str(&format!(", boundary-layer ratio {:.2}", boundary_layer_ratio(&cmp, 0.3)));
            }
        }
        println!("{line}");
    }
    Ok(paths)
}

/// Runs the acceptance criteria (all when `ids` is empty).
pub fn cmd_check(ids: &[u8]) -> CliResult<Vec<CriterionResult>> {
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i as usize > CRITERIA.len()) {
        return Err(CliError::Config(format!("no criterion {bad}; valid ids are 1..={}", CRITERIA.len())));
    }
    let mut results = Vec::new();
    for (i, f) in CRITERIA.iter().enumerate() {
        let id = i as u8 + 1;
        if !ids.is_empty() && !ids.contains(&id) {
            continue;
        }
        let r = f().unwrap_or_else(|e| CriterionResult {
            id,
            title: "error",
            passed: false,
            details: vec![format!("[FAIL] error: {e}")],
        });
        println!("{r}");
        for d in &r.details {
            println!("      {d}");
        }
        results.push(r);
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if failed.is_empty() {
        println!("all {} criteria pass", results.len());
        Ok(results)
    } else {
        Err(CliError::Threshold(format!("{} of {} criteria fail: {failed:?}", failed.len(), results.len())))
    }
}

/// Path helper for tests and callers that want the run file of a sweep point.
pub fn run_path(cfg: &Config, tableau: &str, eps: f64, dt: f64, nx: usize) -> CliResult<PathBuf> {
    let job = Job { tableau: cfg.tableau(tableau)?, eps, dt, nx };
    Ok(Path::new(&cfg.run.output_dir).join(format!("{}.csv", job.stem(cfg.run.model))))
}
