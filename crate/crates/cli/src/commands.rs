use std::fs;
use std::path::Path;

use powerlaw::classify::{classify_grid, strict_min_margin, Classification, Witness};
use powerlaw::moment_inequality::{sharpness_counterexample, verify_batch, Variant};
use powerlaw::phase::{f_of_p, g_of_q, p_lower, p_star_scan, q_star};
use powerlaw::search::SearchReport;
use powerlaw::{
    classify_analytic, d_inf, d_lambda, energy, global_search, simulate, DiscreteMeasure, FlowOptions, MeasureFile,
    Potential, SearchOptions, Verdict,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{CliError, Command, Format, Lambda, MeasureSource, Output};

type Run = Result<Output, CliError>;

pub fn run(cmd: &Command, format: Option<Format>) -> Run {
    match cmd {
        Command::Energy { p, q, source } => energy(*p, *q, source, format),
        Command::Wasserstein { lambda, a, b } => wasserstein(*lambda, a, b, format),
        Command::Simulate { p, q, source, dt, tmax, residual_tol, snapshot_every, snapshots } => {
            let pot = Potential::new(*p, *q)?;
            let mut opts = FlowOptions::for_potential(&pot);
            if let Some(dt) = dt {
                opts.dt = *dt;
            }
            opts.max_time = *tmax;
            opts.residual_tol = *residual_tol;
            opts.snapshot_every = *snapshot_every;
            simulate_cmd(&pot, &load(source)?, &opts, snapshots.as_deref(), format)
        }
        Command::Minimize { p, q, atoms, starts, seed } => {
            only_json(format, "minimize")?;
            let pot = Potential::new(*p, *q)?;
            let found = global_search(&pot, *atoms, *starts, *seed, &SearchOptions::default())?;
            Ok(Output::Json(to_value(&SearchReport::from(&found))))
        }
        Command::Classify { p, q, m, ps, ms } => match (p, m, ps, ms) {
            (Some(p), Some(m), None, None) => {
                only_json(format, "classify at a single point")?;
                classify_one(*p, *q, *m)
            }
            (None, None, Some(ps), Some(ms)) => classify_table(*q, ps, ms, format),
            _ => Err(CliError::Usage("give either --p and --m, or --ps and --ms".into())),
        },
        Command::PropTest { n, big_m, trials, seed, weakened_c } => {
            only_json(format, "prop-test")?;
            prop_test(*n, *big_m, *trials, *seed, *weakened_c)
        }
        Command::PhaseScan { q, p_grid, atoms, starts, seed } => phase_scan(*q, p_grid, *atoms, *starts, *seed, format),
        Command::Thresholds { q, p } => {
            only_json(format, "thresholds")?;
            thresholds(*q, *p)
        }
    }
}

fn only_json(format: Option<Format>, what: &str) -> Result<(), CliError> {
    match format {
        Some(Format::Csv) => Err(CliError::Usage(format!("{what} has JSON output only"))),
        _ => Ok(()),
    }
}

fn to_value<S: Serialize>(s: &S) -> Value {
    serde_json::to_value(s).expect("results serialize")
}

fn read_measure(path: &Path) -> Result<DiscreteMeasure<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(DiscreteMeasure::from_json(&text)?)
}

fn load(source: &MeasureSource) -> Result<DiscreteMeasure<f64>, CliError> {
    match (&source.measure, source.two_dirac) {
        (Some(path), None) => read_measure(path),
        (None, Some(m)) => Ok(DiscreteMeasure::two_dirac(m)?),
        _ => Err(CliError::Usage("give exactly one of --measure and --two-dirac".into())),
    }
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

fn finite(x: f64, what: &'static str) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::NonFinite(what))
    }
}

fn energy(p: f64, q: f64, source: &MeasureSource, format: Option<Format>) -> Run {
    let pot = Potential::new(p, q)?;
    let mu = load(source)?;
    let r = energy::report(&pot, &mu);
    match format {
        Some(Format::Csv) => {
            let e = finite(r.energy, "energy")?;
            let res = finite(r.steady_residual, "steady residual")?;
            Ok(Output::Text(csv_text(&["energy", "steady_residual"], [vec![e.to_string(), res.to_string()]])?))
        }
        _ => Ok(Output::Json(json!({
            "energy": r.energy,
            "steady_residual": r.steady_residual,
            "position_gradient": r.position_gradient,
        }))),
    }
}

fn wasserstein(lambda: Lambda, a: &Path, b: &Path, format: Option<Format>) -> Run {
    let (mu, nu) = (read_measure(a)?, read_measure(b)?);
    let distance = match lambda {
        Lambda::Finite(l) => d_lambda(&mu, &nu, l)?,
        Lambda::Infinite => d_inf(&mu, &nu),
    };
    match format {
        Some(Format::Csv) => {
            let d = finite(distance, "distance")?;
            Ok(Output::Text(csv_text(&["distance"], [vec![d.to_string()]])?))
        }
        _ => Ok(Output::Json(json!({ "distance": distance }))),
    }
}

fn simulate_cmd(
    pot: &Potential<f64>,
    mu0: &DiscreteMeasure<f64>,
    opts: &FlowOptions<f64>,
    snapshots: Option<&Path>,
    format: Option<Format>,
) -> Run {
    let traj = simulate(pot, mu0, opts)?;
    if let Some(path) = snapshots {
        let file = fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        traj.write_snapshots_jsonl(std::io::BufWriter::new(file)).map_err(|e| CliError::Io(e.to_string()))?;
    }
    match format {
        Some(Format::Json) => Ok(Output::Json(json!({
            "terminated": traj.terminated,
            "steps": traj.steps,
            "merges": traj.merges,
            "final_residual": traj.final_residual,
            "final_energy": traj.energies.last(),
            "final_measure": MeasureFile::from(traj.final_measure()),
        }))),
        _ => {
            if traj.energies.iter().any(|e| !e.is_finite()) {
                return Err(CliError::NonFinite("trajectory energy"));
            }
            let mut buf = Vec::new();
            traj.write_csv(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
            Ok(Output::Text(String::from_utf8(buf).expect("CSV is UTF-8")))
        }
    }
}

fn witness_json(w: &Witness) -> Value {
    json!({
        "family": w.family,
        "measure": MeasureFile::from(&w.measure),
        "energy_drop": w.energy_drop,
    })
}

fn classification_json(c: &Classification) -> Value {
    let mut v = json!({
        "verdict": c.verdict,
        "case": c.case_id,
        "p": c.p,
        "q": c.q,
        "m": c.m,
        "margin": c.margin,
        "at_boundary": c.at_boundary,
    });
    if let Some(w) = &c.witness {
        v["witness"] = witness_json(w);
    }
    v
}

fn classify_one(p: f64, q: f64, m: f64) -> Run {
    let c = classify_analytic(p, q, m)?;
    let mut v = classification_json(&c);
    if c.verdict == Verdict::StrictLocalMin && c.case_id <= 2 {
        v["certificate"] = to_value(&strict_min_margin(p, q, m)?);
    }
    Ok(Output::Json(v))
}

fn classify_table(q: f64, ps: &[f64], ms: &[f64], format: Option<Format>) -> Run {
    let table = classify_grid(q, ps, ms)?;
    if format == Some(Format::Json) {
        return Ok(Output::Json(Value::Array(table.iter().map(classification_json).collect())));
    }
    let rows = table.iter().map(|c| {
        vec![
            c.p.to_string(),
            c.q.to_string(),
            c.m.to_string(),
            format!("{:?}", c.verdict),
            c.case_id.to_string(),
            c.margin.to_string(),
            c.at_boundary.to_string(),
            c.witness.as_ref().map_or(String::new(), |w| w.energy_drop.to_string()),
        ]
    });
    let header = ["p", "q", "m", "verdict", "case", "margin", "at_boundary", "witness_energy_drop"];
    Ok(Output::Text(csv_text(&header, rows)?))
}

fn prop_test(n: u32, big_m: f64, trials: usize, seed: u64, weakened_c: f64) -> Run {
    let batch = verify_batch(n, big_m, trials, seed)?;
    let mut v = to_value(&batch);
    if n == 1 {
        let variants = [Variant::ReplaceC(weakened_c), Variant::ReplaceFourthMoment];
        let found = variants
            .iter()
            .map(|&var| {
                sharpness_counterexample(var, 1, big_m).map(|ce| json!({ "variant": var, "counterexample": ce }))
            })
            .collect::<Result<Vec<_>, _>>()?;
        v["sharpness"] = Value::Array(found);
    }
    Ok(Output::Json(v))
}

fn phase_scan(q: f64, grid: &[f64], atoms: usize, starts: usize, seed: u64, format: Option<Format>) -> Run {
    let scan = p_star_scan(q, grid, atoms, starts, seed)?;
    if format == Some(Format::Json) {
        let points: Vec<Value> = scan
            .points
            .iter()
            .map(|pt| {
                json!({
                    "p": pt.p,
                    "q": pt.q,
                    "best_energy": pt.global_best_energy,
                    "two_dirac_energy": pt.two_dirac_energy,
                    "is_two_dirac_optimal": pt.is_two_dirac_optimal,
                    "distance_to_two_dirac": pt.distance_to_two_dirac,
                    "best_atoms": MeasureFile::from(&pt.atoms_of_best),
                })
            })
            .collect();
        let mut v = json!({ "q": q, "points": points });
        if let Some(t) = scan.threshold {
            v["threshold"] = json!({ "p": t.p, "lower": t.lower });
        }
        return Ok(Output::Json(v));
    }
    let mut rows = Vec::with_capacity(scan.points.len());
    for pt in &scan.points {
        let best = finite(pt.global_best_energy, "best energy")?;
        rows.push(vec![
            pt.q.to_string(),
            pt.p.to_string(),
            best.to_string(),
            pt.two_dirac_energy.to_string(),
            pt.is_two_dirac_optimal.to_string(),
            serde_json::to_string(&MeasureFile::from(&pt.atoms_of_best).atoms).expect("atoms serialize"),
        ]);
    }
    let header = ["q", "p", "best_energy", "two_dirac_energy", "is_two_dirac_optimal", "best_atoms_json"];
    Ok(Output::Text(csv_text(&header, rows)?))
}

fn thresholds(q: f64, p: Option<f64>) -> Run {
    if q.is_nan() || q <= 0.0 || q.is_infinite() {
        return Err(CliError::Usage("q must be positive".into()));
    }
    let mut v = json!({ "q": q, "g": g_of_q(q), "q_star": q_star::<f64>()? });
    if let Some(pl) = p_lower(q)? {
        v["p_lower"] = json!(pl);
    }
    if let Some(p) = p {
        if p.is_nan() || p <= q || p.is_infinite() {
            return Err(CliError::Usage("p must exceed q".into()));
        }
        v["f"] = json!(f_of_p(p, q));
    }
    Ok(Output::Json(v))
}
