//! End-to-end acceptance checks. Runs as a plain binary so each criterion
//! prints exactly one PASS/FAIL line; any failure makes the target fail.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use gtebench::coefficients::CoefficientMatrix;
use gtebench::datagen::{
    default_removals, generate_equation_dataset, generate_loan, Dataset, Equation, GeneratorConfig,
};
use gtebench::evalmetrics::{build_report, zero_census, EvalOptions, EvalReport};
use gtebench::explainer::{Explainer, ExplainerConfig};
use gtebench::gte::{batch_gte, GteConfig};
use gtebench::model::{select_correct, train, Activation, Mlp, ModelConfig, TrainedModel};
use gtebench::numerics::{student_t_cdf, weighted_ridge, Rng};
use gtebench::pipeline::{load_toml, ModelFile};

const LOAN_RUNS: usize = 100;
const DESK_ROWS_PER_CLASS: usize = 2000;
const DESK_INSTANCES: usize = 500;
const DESK_RUNS: usize = 10;
const DESK_NUM_SAMPLES: usize = 100;

type Check = Result<(bool, String), String>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

struct LoanRun {
    dataset: Dataset,
    nn1: TrainedModel,
    nn2: TrainedModel,
    explainer: ExplainerConfig,
    /// NN1 explainer matrices at 5, 25 and 50 samples, NN2 at 25.
    exp: [CoefficientMatrix; 3],
    exp_nn2: CoefficientMatrix,
    gte: [CoefficientMatrix; 3],
    reports: Vec<EvalReport>,
    seconds: f64,
}

const SWEEP: [usize; 3] = [5, 25, 50];

fn loan_run() -> Result<LoanRun, String> {
    let start = Instant::now();
    let dataset = generate_loan(&default_removals()).map_err(err)?;
    let train_with = |file: &str| -> Result<TrainedModel, String> {
        let f = ModelFile::load(&configs().join(file)).map_err(err)?;
        train(&dataset, &f.model_config(&dataset), &f.training).map_err(err)
    };
    let nn1 = train_with("nn1.toml")?;
    let nn2 = train_with("nn2.toml")?;
    let explainer: ExplainerConfig = load_toml(&configs().join("explainer.toml")).map_err(err)?;
    let gte_base: GteConfig = load_toml(&configs().join("gte.toml")).map_err(err)?;

    let mut exp = Vec::new();
    let mut gte = Vec::new();
    for k in SWEEP {
        let ex = Explainer::new(&dataset, explainer.clone().with_num_samples(k)).map_err(err)?;
        exp.push(ex.batch_explain(&nn1, &dataset.instances, LOAN_RUNS).map_err(err)?);
        gte.push(
            batch_gte(&dataset, &dataset.instances, &gte_base.clone().with_num_samples(k), LOAN_RUNS).map_err(err)?,
        );
    }
    let ex25 = Explainer::new(&dataset, explainer.clone().with_num_samples(25)).map_err(err)?;
    let exp_nn2 = ex25.batch_explain(&nn2, &dataset.instances, LOAN_RUNS).map_err(err)?;

    let opts = EvalOptions::default();
    let mut reports = Vec::new();
    for i in 0..3 {
        let second = (SWEEP[i] == 25).then_some(&exp_nn2);
        reports.push(build_report("loan", &exp[i], &gte[i], second, &opts).map_err(err)?);
    }
    Ok(LoanRun {
        dataset,
        nn1,
        nn2,
        explainer,
        exp: exp.try_into().map_err(|_| "sweep size")?,
        exp_nn2,
        gte: gte.try_into().map_err(|_| "sweep size")?,
        reports,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn criterion_1(run: &LoanRun) -> Check {
    let report = &run.reports[1];
    let inv = report.invariance.as_ref().ok_or("no invariance test in the k=25 report")?;
    let (r, n, d) = run.exp[1].shape();
    let ok = run.dataset.len() == 54
        && run.nn1.train_accuracy == 1.0
        && run.nn2.train_accuracy == 1.0
        && (r, n, d) == (100, 54, 3)
        && run.exp_nn2.is_complete()
        && run.exp[1].is_complete()
        && inv.test.p_value > 0.1
        && run.seconds < 300.0;
    Ok((
        ok,
        format!(
            "{} instances, train acc NN1={:.3} NN2={:.3}, {r}x{n}x{d} at k=25, p={:.4}, C-of-ED={:.3}, {:.1}s",
            run.dataset.len(),
            run.nn1.train_accuracy,
            run.nn2.train_accuracy,
            inv.test.p_value,
            report.averages.c_of_ed,
            run.seconds
        ),
    ))
}

fn criterion_2(run: &LoanRun) -> Check {
    let g5 = zero_census(&run.gte[0], 0.0);
    let g50 = zero_census(&run.gte[2], 0.0);
    let e5 = zero_census(&run.exp[0], 0.0);
    let mut ok = true;
    for j in 0..3 {
        ok &= g5.rates[j] > 0.0 && g5.rates[j] >= 3.0 * g50.rates[j];
        ok &= e5.rates[j] <= 0.5 * g5.rates[j];
    }
    let per_run = |c: &gtebench::evalmetrics::ZeroCensus| -> Vec<String> {
        c.counts.iter().map(|v| format!("{:.1}", *v as f64 / LOAN_RUNS as f64)).collect()
    };
    Ok((
        ok,
        format!(
            "zeros per run of 54: GTE k=5 {:?}, GTE k=50 {:?}, explainer k=5 {:?} (clamp={})",
            per_run(&g5),
            per_run(&g50),
            per_run(&e5),
            run.explainer.clamp_to_schema
        ),
    ))
}

fn report_consistent(r: &EvalReport) -> bool {
    r.averages.all_correct <= r.averages.second_correct
        && (0.0..=1.0).contains(&r.averages.c_of_ed)
        && r.instances.iter().all(|s| {
            s.all_correct.mean <= s.second_correct.mean
                && (0.0..=1.0).contains(&s.c_of_ed.mean)
                && (0.0..=1.0).contains(&s.normalized_ed.mean)
        })
}

struct DeskRun {
    name: &'static str,
    test_nn1: f64,
    test_nn2: f64,
    report: EvalReport,
}

fn desk_run(equation: Equation) -> Result<DeskRun, String> {
    let ds = generate_equation_dataset(&GeneratorConfig::builtin(equation).with_rows_per_class(DESK_ROWS_PER_CLASS))
        .map_err(err)?;
    let train_with = |file: &str| -> Result<TrainedModel, String> {
        let f = ModelFile::load(&configs().join(file)).map_err(err)?;
        train(&ds, &f.model_config(&ds), &f.training).map_err(err)
    };
    let nn1 = train_with("nn1_desk.toml")?;
    let nn2 = train_with("nn2_desk.toml")?;
    let explain_cfg: ExplainerConfig = load_toml(&configs().join("explainer.toml")).map_err(err)?;
    let explain_cfg = explain_cfg.with_num_samples(DESK_NUM_SAMPLES);
    let picked = select_correct(&[&nn1, &nn2], &ds.instances, DESK_INSTANCES, &mut Rng::new(explain_cfg.seed))
        .map_err(err)?;
    let ex = Explainer::new(&ds, explain_cfg).map_err(err)?;
    let e1 = ex.batch_explain(&nn1, &picked, DESK_RUNS).map_err(err)?;
    let e2 = ex.batch_explain(&nn2, &picked, DESK_RUNS).map_err(err)?;
    let gte = batch_gte(&ds, &picked, &GteConfig::default().with_num_samples(DESK_NUM_SAMPLES), DESK_RUNS)
        .map_err(err)?;
    let report = build_report(ds.name(), &e1, &gte, Some(&e2), &EvalOptions::default()).map_err(err)?;
    Ok(DeskRun {
        name: if equation == Equation::Time { "time" } else { "distance" },
        test_nn1: nn1.test_accuracy.unwrap_or(0.0),
        test_nn2: nn2.test_accuracy.unwrap_or(0.0),
        report,
    })
}

fn criterion_3(reports: &[&EvalReport]) -> Check {
    let ok = reports.iter().all(|r| report_consistent(r));
    let rows: Vec<String> = reports
        .iter()
        .map(|r| {
            format!(
                "{} C-of-ED={:.3} Second={:.3} All={:.3}",
                r.dataset, r.averages.c_of_ed, r.averages.second_correct, r.averages.all_correct
            )
        })
        .collect();
    Ok((ok, format!("{} reports: {}", reports.len(), rows.join("; "))))
}

fn criterion_4(time: &DeskRun, distance: &DeskRun) -> Check {
    let worst_time = time.test_nn1.min(time.test_nn2);
    let ok = worst_time >= 0.90 && distance.test_nn1.max(distance.test_nn2) < worst_time;
    Ok((
        ok,
        format!(
            "test acc {} NN1={:.3} NN2={:.3}, {} NN1={:.3} NN2={:.3}",
            time.name, time.test_nn1, time.test_nn2, distance.name, distance.test_nn1, distance.test_nn2
        ),
    ))
}

/// Weighted least squares with an unpenalized intercept, via the augmented
/// normal equations and Gauss-Jordan elimination.
fn ridge_oracle(x: &[Vec<f64>], y: &[f64], w: &[f64], alpha: f64) -> Vec<f64> {
    let p = x[0].len() + 1;
    let mut a = vec![vec![0.0; p + 1]; p];
    for ((row, yi), wi) in x.iter().zip(y).zip(w) {
        let z: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
        for i in 0..p {
            for j in 0..p {
                a[i][j] += wi * z[i] * z[j];
            }
            a[i][p] += wi * z[i] * yi;
        }
    }
    for (i, row) in a.iter_mut().enumerate().skip(1) {
        row[i] += alpha;
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=p {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

fn criterion_5() -> Check {
    let mut rng = Rng::new(2024);
    let mut worst_ridge: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.int_inclusive(1, 4) as usize;
        let n = rng.int_inclusive(d as i64 + 2, 12) as usize;
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.uniform(-2.0, 2.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.uniform(0.1, 1.0)).collect();
        let alpha = if rng.uniform_open() < 0.2 { 0.0 } else { rng.uniform(0.0, 2.0) };
        let fit = weighted_ridge(&x, &y, &w, alpha).map_err(err)?;
        let oracle = ridge_oracle(&x, &y, &w, alpha);
        worst_ridge = worst_ridge.max((fit.intercept - oracle[0]).abs());
        for (a, b) in fit.coefficients.iter().zip(&oracle[1..]) {
            worst_ridge = worst_ridge.max((a - b).abs());
        }
    }

    let mut worst_grad: f64 = 0.0;
    for (seed, activation) in [(1, Activation::Relu), (2, Activation::Tanh)] {
        let mut rng = Rng::new(seed);
        let mut net = Mlp::init(ModelConfig::new(4, &[6, 5], activation, 3), &mut rng).map_err(err)?;
        let mut params = net.params();
        params.iter_mut().for_each(|v| *v += rng.uniform(-0.1, 0.1));
        net.set_params(&params);
        let xs: Vec<Vec<f64>> = (0..8).map(|_| (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
        let ys: Vec<usize> = (0..8).map(|i| i % 3).collect();
        let (_, grad) = net.loss_and_gradient(&xs, &ys);
        let h = 1e-5;
        for k in 0..params.len() {
            let mut probe = net.clone();
            let mut p = params.clone();
            p[k] = params[k] + h;
            probe.set_params(&p);
            let up = probe.loss_and_gradient(&xs, &ys).0;
            p[k] = params[k] - h;
            probe.set_params(&p);
            let down = probe.loss_and_gradient(&xs, &ys).0;
            let numeric = (up - down) / (2.0 * h);
            let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-6);
            worst_grad = worst_grad.max(rel);
        }
    }

    let table = [(1.812, 10.0, 0.95), (2.228, 10.0, 0.975), (1.0, 1.0, 0.75)];
    let mut worst_t: f64 = 0.0;
    for (t, df, want) in table {
        worst_t = worst_t.max((student_t_cdf(t, df).map_err(err)? - want).abs());
    }
    let ok = worst_ridge < 1e-8 && worst_grad < 1e-4 && worst_t < 1e-3;
    Ok((
        ok,
        format!("ridge max err {worst_ridge:.2e}, gradient max rel err {worst_grad:.2e}, t-table max err {worst_t:.2e}"),
    ))
}

fn loan_oracle(x1: f64, x2: f64, x3: f64) -> usize {
    let f = if x1 == 2.0 {
        3.0 * x2 * x2 * x2 + x3 * x3 * x3 * x3 + 12.0
    } else {
        8.0 * (x1 - 2.0) * (x1 - 2.0) + 3.0 * x2 * x2 * x2 - x3 * x3 * x3 * x3 + 4.0
    };
    // Accepted is class 0.
    usize::from(f < 32.0)
}

fn criterion_6() -> Check {
    let loan = generate_loan(&default_removals()).map_err(err)?;
    let mut grid_hits = 0;
    let mut label_errors = 0;
    for x1 in 2..=5 {
        for x2 in 0..=3 {
            for x3 in 0..=3 {
                let point = [x1 as f64, x2 as f64, x3 as f64];
                if let Some(inst) = loan.instances.iter().find(|i| i.features == point) {
                    grid_hits += 1;
                    if inst.label != loan_oracle(point[0], point[1], point[2]) {
                        label_errors += 1;
                    }
                }
            }
        }
    }
    let loan_ok = grid_hits == loan.len() && label_errors == 0;

    let mut worst: f64 = 0.0;
    let mut base_rows = 0;
    for (file, eq) in [("time_desk.toml", Equation::Time), ("distance_desk.toml", Equation::Distance)] {
        let cfg = GeneratorConfig::load(&configs().join(file)).map_err(err)?;
        let ds = generate_equation_dataset(&cfg).map_err(err)?;
        for inst in ds.instances.iter().filter(|i| i.variation_id == 0) {
            let f = &inst.features;
            let recomputed = match eq {
                Equation::Time => f[0] * f[1] * f[2],
                Equation::Distance => f[0] * (f[1] / f[2]) * f[3],
            };
            let stored = inst.energy.ok_or("base row without energy")?;
            worst = worst.max((recomputed - stored).abs() / stored.abs().max(1.0));
            base_rows += 1;
        }
    }
    let ok = loan_ok && base_rows > 0 && worst < 1e-9;
    Ok((
        ok,
        format!(
            "loan: {grid_hits}/{} instances on the grid, {label_errors} label mismatches; {base_rows} base rows, max energy residual {worst:.1e}",
            loan.len()
        ),
    ))
}

fn run_cli(args: &[&str], data_dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gtebench"))
        .args(args)
        .env("GTEBENCH_DATA_DIR", data_dir)
        .output()
        .map_err(err)?;
    if !out.status.success() {
        return Err(format!("gtebench {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn pipeline_once(dir: &Path) -> Result<(), String> {
    let cfg = configs();
    let p = |name: &str| dir.join(name).display().to_string();
    let c = |name: &str| cfg.join(name).display().to_string();
    run_cli(&["generate", "loan", "--out", &p("loan.csv")], dir)?;
    run_cli(&["generate", "time", "--config", &c("time_desk.toml"), "--out", &p("time.csv")], dir)?;
    run_cli(&["train", &p("loan.csv"), "--config", &c("nn1.toml"), "--out", &p("nn1.json")], dir)?;
    run_cli(
        &["explain", "--config", &c("explainer.toml"), "--dataset", &p("loan.csv"), "--model", &p("nn1.json"), "--runs", "5", "--out", &p("exp.csv")],
        dir,
    )?;
    run_cli(
        &["align", "--dataset", &p("loan.csv"), "--matching", &p("exp.csv"), "--num-samples", "5,25", "--out", &p("gte.csv")],
        dir,
    )?;
    for k in ["5", "25"] {
        run_cli(
            &["evaluate", "--explainer", &p("exp.csv"), "--gte", &p(&format!("gte_k{k}.csv")), "--out", &p(&format!("eval_k{k}"))],
            dir,
        )?;
    }
    run_cli(&["report", &p("eval_k5"), &p("eval_k25"), "--out", &p("report")], dir)
}

fn artifacts(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "manifest.json") {
                out.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_7() -> Check {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    pipeline_once(a.path())?;
    pipeline_once(b.path())?;
    // Rerun every stage in place as well.
    let first = artifacts(a.path())
        .into_iter()
        .map(|p| Ok((p.clone(), std::fs::read(a.path().join(&p)).map_err(err)?)))
        .collect::<Result<Vec<_>, String>>()?;
    pipeline_once(a.path())?;

    let files = artifacts(a.path());
    let mut differing = Vec::new();
    for (rel, bytes) in &first {
        let again = std::fs::read(a.path().join(rel)).map_err(err)?;
        let other = std::fs::read(b.path().join(rel)).map_err(err)?;
        if &again != bytes || &other != bytes {
            differing.push(rel.display().to_string());
        }
    }
    let csv_svg = files
        .iter()
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "svg")))
        .count();
    let ok = differing.is_empty() && files.len() == first.len() && csv_svg >= 8;
    Ok((
        ok,
        format!("{} artifacts ({csv_svg} CSV/SVG) compared across reruns, differing: {differing:?}", files.len()),
    ))
}

fn criterion_8(run: &LoanRun) -> Check {
    let mut all_perfect = true;
    let mut checked = 0;
    for m in run.exp.iter().chain(run.gte.iter()) {
        let report = build_report("self", m, m, None, &EvalOptions::default()).map_err(err)?;
        checked += report.instances.len();
        all_perfect &= report.instances.iter().all(|s| {
            s.c_of_ed.mean == 1.0 && s.second_correct.mean == 1.0 && s.all_correct.mean == 1.0
        });
    }
    Ok((all_perfect, format!("{checked} instance scores over 6 matrices compared with themselves")))
}

fn main() {
    let start = Instant::now();
    let loan = loan_run();
    let time = desk_run(Equation::Time);
    let distance = desk_run(Equation::Distance);

    let with_loan = |f: fn(&LoanRun) -> Check| match &loan {
        Ok(run) => f(run),
        Err(e) => Err(format!("loan pipeline failed: {e}")),
    };
    let c3 = match (&loan, &time, &distance) {
        (Ok(l), Ok(t), Ok(d)) => {
            let mut reports: Vec<&EvalReport> = l.reports.iter().collect();
            reports.push(&t.report);
            reports.push(&d.report);
            criterion_3(&reports)
        }
        _ => Err("an upstream pipeline failed".into()),
    };
    let c4 = match (&time, &distance) {
        (Ok(t), Ok(d)) => criterion_4(t, d),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    let results: Vec<(&str, Check)> = vec![
        ("loan end-to-end, invariance p > 0.1", with_loan(criterion_1)),
        ("zero-coefficient phenomenon", with_loan(criterion_2)),
        ("metric consistency", c3),
        ("time vs distance test accuracy", c4),
        ("oracle suites", criterion_5()),
        ("brute-force label equivalence", criterion_6()),
        ("byte-identical reruns", criterion_7()),
        ("self-comparison sanity", with_loan(criterion_8)),
    ];

    let mut failed = 0;
    for (i, (name, result)) in results.iter().enumerate() {
        let (pass, detail) = match result {
            Ok((pass, detail)) => (*pass, detail.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {} {}: {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    if let (Ok(t), Ok(d)) = (&time, &distance) {
        for r in [&t.report, &d.report] {
            println!(
                "  desk {}: C-of-ED={:.3} invariance {}",
                r.dataset,
                r.averages.c_of_ed,
                r.invariance_line().unwrap_or_default()
            );
        }
    }
    println!("acceptance: {} of {} criteria passed in {:.1}s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
