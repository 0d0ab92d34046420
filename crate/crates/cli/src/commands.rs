use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use randlora::presets::{self, Preset};
use randlora::randbasis::{collinearity_monte_carlo, collinearity_probability};
use randlora::rng::Stream;
use randlora::spectral::fit_adapter;
use randlora::trainkit::landscape::{landscape_grid_on, linspace, ClampRef, ANCHOR_COORDS, DEFAULT_RANGE};
use randlora::trainkit::{
    cka_linear, make_teacher_student, make_two_layer_task, mse, train, train_dense, train_two_layer,
    train_two_layer_dense, TrainRun,
};
use randlora::{AdapterModel, AdapterSpec, BasisConfig, BasisSet, FitReport, Matrix};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::parse::{bases_for, distribution, load_features, optimizer, parse_specs, spectrum, target};
use crate::{Report, Table};

pub fn dispatch(cli: &Cli) -> Result<Report> {
    let seed = cli.seed;
    match &cli.command {
        Command::GenBases(a) => gen_bases(a, seed),
        Command::Budget(a) => budget(a),
        Command::Collinearity(a) => collinearity(a, seed),
        Command::Fit(a) => fit(a, seed),
        Command::Compare(a) => compare(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Landscape(a) => landscape(a, seed),
        Command::Cka(a) => cka(a, seed),
    }
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn gen_bases(a: &GenBasesArgs, seed: u64) -> Result<Report> {
    let dist = distribution(&a.basis, a.big_d);
    let mut cfg = BasisConfig::new(seed, dist, a.n_bases, a.rank, a.big_d, a.d);
    if a.per_term_a {
        cfg = cfg.per_term_a();
    }
    let set = BasisSet::generate(cfg.clone())?;
    let summary = json!({
        "b_stack": [a.n_bases, a.big_d, a.rank],
        "a_stack": [set.a_stack().len(), a.rank, a.d],
        "zero_fraction": set.zero_fraction(),
    });
    let mut table = Table::new(&["distribution", "n_bases", "r", "big_d", "d", "a_matrices", "zero_fraction"]);
    table.push(vec![
        serde_json::to_string(&dist)?,
        a.n_bases.to_string(),
        a.rank.to_string(),
        a.big_d.to_string(),
        a.d.to_string(),
        set.a_stack().len().to_string(),
        f(set.zero_fraction()),
    ]);
    let mut report = Report::new(summary, json!({ "basis": cfg }), table)?;
    report.bases = Some(set);
    Ok(report)
}

#[derive(Serialize)]
struct BudgetRow {
    name: String,
    big_d: usize,
    d: usize,
    spec: AdapterSpec,
    r: Option<usize>,
    n: usize,
    scaling: String,
    alpha: f64,
    params: usize,
    max_rank: usize,
}

fn budget_row(name: String, spec: AdapterSpec, big_d: usize, d: usize) -> BudgetRow {
    let r = match &spec.kind {
        randlora::AdapterKind::Lora { r } => Some(*r),
        _ => spec.basis_rank(),
    };
    BudgetRow {
        name,
        big_d,
        d,
        r,
        n: spec.terms(big_d, d),
        scaling: spec.scaling.describe(),
        alpha: spec.alpha(big_d, d),
        params: spec.param_count(big_d, d),
        max_rank: spec.effective_rank(big_d, d),
        spec,
    }
}

fn budget(a: &BudgetArgs) -> Result<Report> {
    let mut rows = Vec::new();
    if let Some(p) = &a.preset {
        rows.extend(presets::lookup(p)?.into_iter().map(|p: Preset| budget_row(p.name, p.spec, p.hidden, p.hidden)));
    }
    if let Some(s) = &a.specs {
        for spec in parse_specs(s, &a.adapter)? {
            spec.validate()?;
            rows.push(budget_row(spec.label(), spec, a.big_d, a.d));
        }
    }
    if a.preset.is_none() && a.specs.is_none() {
        rows.extend(presets::all().into_iter().map(|p| budget_row(p.name, p.spec, p.hidden, p.hidden)));
    }
    let mut table = Table::new(&["name", "big_d", "d", "r", "n", "scaling", "alpha", "params", "max_rank"]);
    for r in &rows {
        table.push(vec![
            r.name.clone(),
            r.big_d.to_string(),
            r.d.to_string(),
            r.r.map_or_else(String::new, |v| v.to_string()),
            r.n.to_string(),
            r.scaling.clone(),
            f(r.alpha),
            r.params.to_string(),
            r.max_rank.to_string(),
        ]);
    }
    Report::new(rows, json!({}), table)
}

fn collinearity(a: &CollinearityArgs, seed: u64) -> Result<Report> {
    let big_d = a.big_d.unwrap_or(a.d);
    let c = collinearity_probability(a.s, a.d, a.n_bases, big_d)?;
    let mc = match a.mc_pairs {
        Some(pairs) => {
            if a.s.fract() != 0.0 {
                bail!("collinearity: Monte-Carlo estimate needs an integer s, got {}", a.s);
            }
            let (est, se) = collinearity_monte_carlo(a.s as u64, a.d, pairs, seed)?;
            Some(json!({ "pairs": pairs, "estimate": est, "std_error": se, "within_3_sigma": (est - c.p).abs() <= 3.0 * se }))
        }
        None => None,
    };
    let mut table = Table::new(&["s", "d", "n_bases", "big_d", "p", "p2", "mc_estimate", "mc_std_error"]);
    let mc_cols = mc.as_ref().map_or((String::new(), String::new()), |m| (m["estimate"].to_string(), m["std_error"].to_string()));
    table.push(vec![f(a.s), a.d.to_string(), a.n_bases.to_string(), big_d.to_string(), f(c.p), f(c.p2), mc_cols.0, mc_cols.1]);
    let result = json!({ "s": a.s, "d": a.d, "n_bases": a.n_bases, "big_d": big_d, "p": c.p, "p2": c.p2, "monte_carlo": mc });
    Report::new(result, json!({ "big_d": big_d }), table)
}

fn run_fit(id: &str, m: &Matrix, spec: &AdapterSpec, basis: &BasisArgs, opt: &randlora::OptimizerConfig, seed: u64) -> Result<FitReport> {
    let (big_d, d) = m.shape();
    let bases = bases_for(spec, seed, distribution(basis, big_d), big_d, d)?;
    fit_adapter(m, id, spec, bases.as_ref(), opt).with_context(|| format!("fitting {} to {id}", spec.label()))
}

fn fit_table(reports: &[FitReport]) -> Table {
    let mut t = Table::new(&["target_id", "spec", "params", "final_sq_error", "bound_ey", "iterations"]);
    for r in reports {
        t.push(vec![
            r.target_id.clone(),
            r.spec.label(),
            r.param_count.to_string(),
            f(r.final_sq_error),
            f(r.bound_ey),
            r.iterations.to_string(),
        ]);
    }
    t
}

fn fit(a: &FitArgs, seed: u64) -> Result<Report> {
    let specs = parse_specs(&a.spec, &a.adapter)?;
    let [spec] = specs.as_slice() else {
        bail!("fit takes exactly one spec, got {}; use compare for several", specs.len());
    };
    let (id, m) = target(&a.target, seed)?;
    let opt = optimizer(&a.opt, seed);
    opt.validate()?;
    let rep = run_fit(&id, &m, spec, &a.basis, &opt, seed)?;
    let resolved = json!({ "spec": spec, "optimizer": opt, "distribution": distribution(&a.basis, m.nrows()) });
    Report::new(&rep, resolved, fit_table(std::slice::from_ref(&rep)))
}

fn compare(a: &CompareArgs, seed: u64) -> Result<Report> {
    let specs = parse_specs(&a.specs, &a.adapter)?;
    let targets = a.target.iter().map(|t| target(t, seed)).collect::<Result<Vec<_>>>()?;
    let opt = optimizer(&a.opt, seed);
    opt.validate()?;
    let jobs: Vec<(&(String, Matrix), &AdapterSpec)> = targets.iter().flat_map(|t| specs.iter().map(move |s| (t, s))).collect();
    let mut reports = jobs
        .par_iter()
        .map(|((id, m), spec)| run_fit(id, m, spec, &a.basis, &opt, seed))
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|x, y| (&x.target_id, x.spec.label()).cmp(&(&y.target_id, y.spec.label())));
    let resolved = json!({ "specs": specs, "optimizer": opt });
    let table = fit_table(&reports);
    Report::new(&reports, resolved, table)
}

#[derive(Serialize)]
struct TaskInfo {
    big_d: usize,
    d: usize,
    spectrum: Vec<f64>,
    samples: usize,
    noise: f64,
    frozen_loss: f64,
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<Report> {
    let t = &a.task;
    let sigma = spectrum(&t.spectrum, t.big_d.min(t.d))?;
    let task = make_teacher_student(seed, t.big_d, t.d, &sigma, t.samples, t.noise)?;
    let specs = parse_specs(&a.specs, &a.adapter)?;
    let opt = optimizer(&a.opt, seed);
    opt.validate()?;
    let dist = distribution(&a.basis, t.big_d);
    let runs = specs
        .par_iter()
        .map(|spec| {
            let bases = bases_for(spec, seed, dist, t.big_d, t.d)?;
            train(&task.w0, spec, bases.as_ref(), &task.data, Some(&task.w_star), &opt, a.log_every)
                .with_context(|| format!("training {}", spec.label()))
        })
        .collect::<Result<Vec<TrainRun>>>()?;
    let info = TaskInfo {
        big_d: t.big_d,
        d: t.d,
        spectrum: sigma,
        samples: t.samples,
        noise: t.noise,
        frozen_loss: mse(&task.data, &task.w0),
    };
    let mut table = Table::new(&["spec", "params", "step", "train_loss", "eval_metric"]);
    for run in &runs {
        let label = run.spec.as_ref().map_or_else(|| "full".to_owned(), AdapterSpec::label);
        for p in &run.history {
            table.push(vec![
                label.clone(),
                run.param_count.to_string(),
                p.step.to_string(),
                f(p.train_loss),
                p.eval_metric.map_or_else(String::new, f),
            ]);
        }
    }
    let resolved = json!({ "specs": specs, "optimizer": opt, "distribution": dist });
    Report::new(json!({ "task": info, "runs": runs }), resolved, table)
}

fn landscape(a: &LandscapeArgs, seed: u64) -> Result<Report> {
    let t = &a.task;
    let (big_d, d) = (t.big_d, t.d);
    let sigma = spectrum(&t.spectrum, big_d.min(d))?;
    let task = make_teacher_student(seed, big_d, d, &sigma, t.samples, t.noise)?;
    let opt = optimizer(&a.opt, seed);
    opt.validate()?;
    let dist = distribution(&a.basis, big_d);
    let lora = AdapterSpec::lora(a.adapter.rank);
    let rl = parse_specs("randlora", &a.adapter)?.remove(0);

    let delta_of = |spec: &AdapterSpec| -> Result<(Vec<f64>, f64)> {
        let bases = bases_for(spec, seed, dist, big_d, d)?;
        let run = train(&task.w0, spec, bases.as_ref(), &task.data, None, &opt, 0)?;
        let model = AdapterModel::bind(spec, bases.as_ref(), big_d, d)?;
        let dw = model.delta(&run.final_params)?;
        Ok((dw.transpose().iter().copied().collect(), run.final_loss()))
    };
    let (lora_dw, lora_loss) = delta_of(&lora)?;
    let (rl_dw, rl_loss) = delta_of(&rl)?;
    let ft = train_dense(&task.w0, &task.data, None, &opt, 0)?;

    let subset = task.data.fixed_fraction(a.subset, seed);
    let w0 = task.w0.clone();
    let eval = |p: &[f64]| mse(&subset, &(&w0 + Matrix::from_row_slice(big_d, d, p)));
    let axis = linspace(DEFAULT_RANGE.0, DEFAULT_RANGE.1, a.resolution);
    let grid = landscape_grid_on(
        [&lora_dw, &rl_dw, &ft.final_params],
        &ANCHOR_COORDS,
        &axis,
        &axis,
        eval,
        a.clamp_pct,
        ClampRef::Shallowest,
    )?;

    let values = if a.clamped { grid.clamped() } else { grid.grid.clone() };
    let mut table = Table::new(&std::iter::once("y\\x".to_owned()).chain(grid.xs.iter().map(|x| f(*x))).collect::<Vec<_>>());
    for (y, row) in grid.ys.iter().zip(&values) {
        table.push(std::iter::once(f(*y)).chain(row.iter().map(|v| f(*v))).collect());
    }
    let anchors = json!([
        { "label": lora.label(), "train_loss": lora_loss },
        { "label": rl.label(), "train_loss": rl_loss },
        { "label": "full", "train_loss": ft.final_loss() },
    ]);
    let resolved = json!({ "optimizer": opt, "distribution": dist, "subset_rows": subset.len(), "anchors": anchors });
    let mut report = Report::new(&grid, resolved, table.clone())?;
    report.side_csv = Some(table.render()?);
    Ok(report)
}

#[derive(Serialize)]
struct CkaRow {
    model: String,
    params: usize,
    final_loss: f64,
    cka_vs_full: f64,
}

fn cka(a: &CkaArgs, seed: u64) -> Result<Report> {
    if let (Some(pa), Some(pb)) = (&a.features_a, &a.features_b) {
        let fa = load_features(pa)?;
        let fb = load_features(pb)?;
        let v = cka_linear(&fa, &fb)?;
        let mut table = Table::new(&["features_a", "features_b", "cka"]);
        table.push(vec![pa.display().to_string(), pb.display().to_string(), f(v)]);
        return Report::new(json!({ "cka": v }), json!({}), table);
    }
    let sigma = spectrum(&a.spectrum, a.big_d.min(a.hidden))?;
    let (net, _, data) = make_two_layer_task(seed, a.big_d, a.hidden, a.d, &sigma, a.samples)?;
    let opt = optimizer(&a.opt, seed);
    opt.validate()?;
    let dist = distribution(&a.basis, a.big_d);
    let specs = parse_specs(&a.specs, &a.adapter)?;

    let mut s = Stream::new(seed).derive_str("cka/eval");
    let x_eval = Matrix::from_fn(a.samples, a.big_d, |_, _| s.next_normal());
    let full = train_two_layer_dense(&net, &data, &opt, 0)?;
    let full_delta = Matrix::from_row_slice(a.big_d, a.hidden, &full.final_params);
    let reference = net.hidden(&x_eval, Some(&full_delta));

    let mut rows = vec![CkaRow {
        model: "pretrained".into(),
        params: 0,
        final_loss: net.loss(&data, None),
        cka_vs_full: cka_linear(&net.hidden(&x_eval, None), &reference)?,
    }];
    let adapted = specs
        .par_iter()
        .map(|spec| {
            let bases = bases_for(spec, seed, dist, a.big_d, a.hidden)?;
            let run = train_two_layer(&net, spec, bases.as_ref(), &data, &opt, 0)?;
            let dw = AdapterModel::bind(spec, bases.as_ref(), a.big_d, a.hidden)?.delta(&run.final_params)?;
            Ok(CkaRow {
                model: spec.label(),
                params: run.param_count,
                final_loss: run.final_loss(),
                cka_vs_full: cka_linear(&net.hidden(&x_eval, Some(&dw)), &reference)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.extend(adapted);
    rows.push(CkaRow {
        model: "full".into(),
        params: full.param_count,
        final_loss: full.final_loss(),
        cka_vs_full: 1.0,
    });
    let mut table = Table::new(&["model", "params", "final_loss", "cka_vs_full"]);
    for r in &rows {
        table.push(vec![r.model.clone(), r.params.to_string(), f(r.final_loss), f(r.cka_vs_full)]);
    }
    let resolved = json!({ "specs": specs, "optimizer": opt, "distribution": dist });
    Report::new(rows, resolved, table)
}
