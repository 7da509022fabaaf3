//! Subcommand implementations. Each returns a [`Report`]; file output and
//! exit codes are handled by the caller.

use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use arbor_core::asymptotics::{
    check_supercritical_hypotheses, check_weak_hypotheses, ground_record, refine_onset, summarize_d2, summarize_supercritical,
    summarize_weak, sweep_record, weyl_check, GroundRecord, WeylReport,
};
use arbor_core::bs::{
    bargmann_bound, channel_threshold, cor1_bound, critical_case_eigenvalue, hs_convergence, solve_secular, solve_weak_eigenvalue,
    BsOptions,
};
use arbor_core::decomposition::{build_channels, choose_k_max, merge_reports, ChannelReport};
use arbor_core::direct::{build_graph_matrix, direct_negative_spectrum, SIZE_CAP};
use arbor_core::halfline::{solve_channel, Boundary, Channel, GridSpec, Numerics};
use arbor_core::potential::{moment, RadialFn, RadialPotential, Weight};
use arbor_core::special::weak_coupling_constants;
use arbor_core::tree::RegularTree;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::Config;
use crate::output::{cell, csv, Plot};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    TreeInfo,
    Spectrum,
    WeakSweep,
    BsSolve,
    Bounds,
    D2Sweep,
    Supercritical,
    Weyl,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::TreeInfo => "tree-info",
            Command::Spectrum => "spectrum",
            Command::WeakSweep => "weak-sweep",
            Command::BsSolve => "bs-solve",
            Command::Bounds => "bounds",
            Command::D2Sweep => "d2-sweep",
            Command::Supercritical => "supercritical",
            Command::Weyl => "weyl",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    pub compare_direct: bool,
    pub svg: bool,
}

pub struct Report {
    pub result: Value,
    pub csv: Option<String>,
    pub svg: Option<String>,
    pub pass: bool,
    pub verdict: String,
}

impl Report {
    fn ok(result: Value) -> Self {
        Report { result, csv: None, svg: None, pass: true, verdict: "ok".into() }
    }
}

pub fn run(cmd: Command, cfg: &Config, opts: &Options) -> Result<Report> {
    match cmd {
        Command::TreeInfo => tree_info(cfg),
        Command::Spectrum => spectrum(cfg, opts),
        Command::WeakSweep => weak_sweep(cfg, opts),
        Command::BsSolve => bs_solve(cfg),
        Command::Bounds => bounds(cfg),
        Command::D2Sweep => d2_sweep(cfg, opts),
        Command::Supercritical => supercritical(cfg, opts),
        Command::Weyl => weyl(cfg, opts),
    }
}

/// Counts that may exceed `u64` are written as strings.
fn big(n: u128) -> Value {
    u64::try_from(n).map(Value::from).unwrap_or_else(|_| Value::from(n.to_string()))
}

fn to_value<S: serde::Serialize>(x: &S) -> Result<Value> {
    serde_json::to_value(x).context("serialising report")
}

fn integral_g0(tree: &RegularTree<f64>, v: &RadialPotential<f64>) -> Result<f64> {
    Ok(moment(v, Weight::Branching(tree), false)?.value)
}

fn tree_info(cfg: &Config) -> Result<Report> {
    let tree = cfg.build_tree()?;
    let n = tree.generations();
    let ts = tree.vertex_distances();
    let estimate = if n >= 4 { tree.dimension_estimate(ts[0], ts[n - 1]).ok() } else { None };
    let d = cfg.dimension(&tree).ok();
    let shown = n.min(64);
    // channel 0 first, then k = 1..
    let multiplicities: Vec<Value> = std::iter::once(big(1)).chain((1..=shown).map(|k| big(tree.multiplicity(k)))).collect();
    let l_check = 2.0 * ts.last().copied().unwrap_or(1.0);
    let envelopes: Vec<Value> = match d {
        Some(d) => (0..=n.min(8))
            .map(|k| match tree.envelope_constants(k, d, l_check) {
                Ok(e) => json!({"k": k, "lower": e.lower, "upper": e.upper, "valid_from": e.valid_from, "checked_to": e.checked_to}),
                Err(err) => json!({"k": k, "error": err.to_string()}),
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(Report::ok(json!({
        "kind": format!("{:?}", tree.kind()),
        "generations": n,
        "vertex_distances": &ts[..shown],
        "branching_numbers": &tree.branching_numbers()[..shown],
        "declared_dimension": tree.declared_dimension(),
        "dimension_estimate": estimate,
        "multiplicities": multiplicities,
        "envelopes": envelopes,
    })))
}

fn solve_channels(channels: &[Channel<f64>], num: &Numerics<f64>) -> Result<Vec<ChannelReport<f64>>> {
    channels
        .par_iter()
        .map(|ch| Ok(ChannelReport { k: ch.k, multiplicity: ch.multiplicity, result: solve_channel(ch, num)? }))
        .collect()
}

fn spectrum(cfg: &Config, opts: &Options) -> Result<Report> {
    let tree = cfg.build_tree()?;
    let v = cfg.build_potential()?;
    let lambda = cfg.spectrum.lambda.ok_or_else(|| anyhow!("spectrum.lambda is required"))?;
    // without a dimension there is no trace bound, so every channel is solved
    let d = cfg.dimension(&tree).ok();
    let k_max = match (cfg.spectrum.k_max, d) {
        (Some(k), _) => k.min(tree.generations()),
        (None, Some(d)) => choose_k_max(&tree, &v, lambda, d, cfg.spectrum.k_cap.unwrap_or(tree.generations()))?,
        (None, None) => tree.generations(),
    };
    let mut num = cfg.numerics();
    if opts.compare_direct {
        // the direct solve uses one fixed uniform grid; match it channel by channel
        num = Numerics { length: Some(num.length.unwrap_or(v.extent() + 10.0)), auto_truncate: false, grading: 0.0, ..num };
    }
    let channels = build_channels(&tree, &v, lambda, k_max);
    let spec = merge_reports(solve_channels(&channels, &num)?);
    let rows: Vec<Vec<String>> = spec
        .entries
        .iter()
        .map(|e| {
            let ch: Vec<String> = e.channels.iter().map(|k| k.to_string()).collect();
            vec![cell(Some(e.value)), e.multiplicity.to_string(), ch.join(" ")]
        })
        .collect();
    let mut result = json!({
        "lambda": lambda,
        "d": d,
        "k_max": k_max,
        "numerics": num,
        "count": big(spec.count),
        "entries": spec.entries.iter().map(|e| json!({"value": e.value, "multiplicity": big(e.multiplicity), "channels": e.channels})).collect::<Vec<_>>(),
        "marginal": spec.marginal,
        "root_channel_only": spec.root_channel_only,
        "channels": spec.channels.iter().map(|c| json!({"k": c.k, "multiplicity": big(c.multiplicity), "result": c.result})).collect::<Vec<_>>(),
    });
    let mut report = Report::ok(Value::Null);
    if opts.compare_direct {
        let length = num.length.expect("set above");
        let grid = GridSpec { h: num.h, length, grading: 0.0, h_cap: None, right: Boundary::Dirichlet };
        let pot: Arc<dyn RadialFn<f64>> = Arc::new(v.clone());
        let m = build_graph_matrix(&tree, pot, lambda, &grid, cfg.spectrum.direct_cap.unwrap_or(SIZE_CAP))?;
        let direct = direct_negative_spectrum(&m, usize::MAX)?;
        if spec.count > 1_000_000 {
            bail!("spectrum too large to compare ({} eigenvalues)", spec.count);
        }
        let ours = spec.expanded(1_000_000);
        let max_rel = ours
            .iter()
            .zip(&direct.eigenvalues)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        let matched = ours.len() == direct.eigenvalues.len() && max_rel <= 1e-4;
        result["direct"] = to_value(&direct)?;
        result["match"] = json!(matched);
        result["max_rel_diff"] = json!(max_rel);
        report.pass = matched;
        report.verdict = format!("match: {matched}, max_rel_diff {max_rel:.3e}");
    }
    report.result = result;
    report.csv = Some(csv(&["value", "multiplicity", "channels"], &rows));
    Ok(report)
}

fn weak_sweep(cfg: &Config, opts: &Options) -> Result<Report> {
    let tree = cfg.build_tree()?;
    let v = cfg.build_potential()?;
    let d = cfg.dimension(&tree)?;
    check_weak_hypotheses(&v, d)?;
    let lambdas = cfg.lambdas(1e-3, 1e-2)?;
    let num = cfg.numerics();
    let integral = integral_g0(&tree, &v)?;
    let records = lambdas
        .par_iter()
        .map(|&l| sweep_record(&tree, &v, d, l, &num))
        .collect::<arbor_core::Result<Vec<_>>>()?;
    let rep = summarize_weak(records, d, integral);
    let rows: Vec<Vec<String>> = rep
        .records
        .iter()
        .map(|r| {
            vec![
                cell(Some(r.lambda)),
                cell(r.e1),
                cell(r.e_minus),
                cell(r.e_plus),
                r.n_minus.to_string(),
                cell(r.bound_cor1),
                r.certified_channels.to_string(),
            ]
        })
        .collect();
    let svg = opts.svg.then(|| {
        Plot {
            title: "lowest eigenvalue against coupling",
            x_label: "log10 λ",
            y_label: "log10 |E1|",
            points: rep.records.iter().filter_map(|r| r.e1.map(|e| (r.lambda.log10(), e.abs().log10()))).collect(),
            line: rep.fit.map(|f| (f.slope, f.intercept / std::f64::consts::LN_10)),
        }
        .render()
    });
    Ok(Report {
        result: json!({"numerics": num, "report": rep}),
        csv: Some(csv(&["lambda", "E1", "E_minus", "E_plus", "N_minus", "bound_cor1", "certified_channels"], &rows)),
        svg,
        pass: rep.pass,
        verdict: rep.verdict.clone(),
    })
}

fn bs_solve(cfg: &Config) -> Result<Report> {
    let v = cfg.build_potential()?;
    let lambda = cfg.bs.lambda.ok_or_else(|| anyhow!("bs.lambda is required"))?;
    let d = match cfg.bs.d {
        Some(d) => d,
        None => cfg.dimension(&cfg.build_tree()?)?,
    };
    let defaults = BsOptions::<f64>::default();
    let opts = BsOptions {
        panel_len: cfg.bs.panel.unwrap_or(defaults.panel_len),
        order: cfg.bs.order.unwrap_or(defaults.order),
        check_resolution: cfg.bs.check_resolution.unwrap_or(defaults.check_resolution),
    };
    let constants = weak_coupling_constants(d)?;
    let integral = moment(&v, Weight::OnePlus(d - 1.0), false)?.value;
    let scale = moment(&v, Weight::OnePlus(d - 1.0), true)?.value;
    let kappas = cfg.bs.kappas.clone().unwrap_or_else(|| vec![0.5, 0.1, 0.02]);
    let hs: Vec<Value> = hs_convergence(&v, d, &kappas, &opts)?
        .into_iter()
        .map(|(k, diff, base)| json!({"kappa": k, "diff": diff, "base": base}))
        .collect();
    let mut result = json!({
        "lambda": lambda,
        "d": d,
        "options": opts,
        "constants": constants,
        "integral": integral,
        "hs_convergence": hs,
    });
    let (pass, verdict) = if integral.abs() <= 1e-12 * scale {
        let est = critical_case_eigenvalue(&v, d, lambda, &opts)?;
        result["critical"] = to_value(&est)?;
        let sol = solve_secular(&v, d, lambda, est.kappa * 0.5, &opts)?;
        result["solution"] = to_value(&sol)?;
        (true, format!("critical case: E = {:.6e}, second-order prediction {:.6e}", sol.energy, est.energy))
    } else if integral > 0.0 {
        (true, "no negative eigenvalue at weak coupling".to_string())
    } else {
        let sol = solve_weak_eigenvalue(&v, d, lambda, &opts)?;
        result["solution"] = to_value(&sol)?;
        (true, format!("kappa = {:.10e}, E = {:.6e}, first order {:.6e}", sol.kappa, sol.energy, sol.first_order_energy))
    };
    Ok(Report { result, csv: None, svg: None, pass, verdict })
}

fn bounds(cfg: &Config) -> Result<Report> {
    let tree = cfg.build_tree()?;
    let v = cfg.build_potential()?;
    let lambda = cfg
        .bounds
        .lambda
        .or(cfg.spectrum.lambda)
        .ok_or_else(|| anyhow!("bounds.lambda is required"))?;
    let d = cfg.dimension(&tree)?;
    let num = cfg.numerics();
    let pot: Arc<dyn RadialFn<f64>> = Arc::new(v.clone());
    let root = solve_channel(&Channel::tree(&tree, 0, pot, lambda), &num)?;
    let mut result = json!({"lambda": lambda, "d": d, "root_channel_count": root.count});
    let (mut pass, mut verdict) = (true, "ok".to_string());
    if d < 2.0 {
        let bargmann = bargmann_bound(&v, d, lambda)?;
        let cor1 = cor1_bound(&v, &tree, d, lambda)?;
        let thresholds: Vec<(usize, f64)> = (1..=tree.generations())
            .filter(|&k| tree.multiplicity(k) > 0)
            .map(|k| Ok((k, channel_threshold(&tree, &v, d, k)?)))
            .collect::<arbor_core::Result<_>>()?;
        let lambda_c = thresholds.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        let certified: Vec<usize> = thresholds.iter().filter(|t| lambda < t.1).map(|t| t.0).collect();
        result["bargmann"] = json!(bargmann);
        result["cor1"] = to_value(&cor1)?;
        result["channel_thresholds"] = json!(thresholds
            .iter()
            .map(|&(k, l)| json!({"k": k, "lambda_c": if l.is_finite() { json!(l) } else { json!("inf") }, "ratio": lambda / l}))
            .collect::<Vec<_>>());
        result["root_channel_only_below"] = if lambda_c.is_finite() { json!(lambda_c) } else { json!("inf") };
        result["certified_empty_channels"] = json!(certified);
        if (root.count as f64) > cor1.bound.floor() {
            pass = false;
            verdict = format!("root channel count {} exceeds bound {:.4}", root.count, cor1.bound);
        } else {
            verdict = format!("root channel count {} within bound {:.4}", root.count, cor1.bound);
        }
    } else {
        result["note"] = json!("trace bounds need d < 2");
    }
    Ok(Report { result, csv: None, svg: None, pass, verdict })
}

fn ground_rows(records: &[GroundRecord<f64>]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| vec![cell(Some(r.lambda)), cell(r.e1), cell(r.marginal), r.reliable.to_string(), cell(Some(r.length))])
        .collect();
    csv(&["lambda", "E1", "marginal", "reliable", "length"], &rows)
}

fn ground_records(tree: &RegularTree<f64>, v: &RadialPotential<f64>, lambdas: &[f64], num: &Numerics<f64>) -> Result<Vec<GroundRecord<f64>>> {
    Ok(lambdas
        .par_iter()
        .map(|&l| ground_record(tree, v, l, num))
        .collect::<arbor_core::Result<Vec<_>>>()?)
}

fn d2_sweep(cfg: &Config, opts: &Options) -> Result<Report> {
    let tree = cfg.build_tree()?;
    let v = cfg.build_potential()?;
    let d = cfg.dimension(&tree)?;
    if (d - 2.0).abs() > 1e-9 {
        bail!("d2-sweep needs a tree of dimension 2, got {d}");
    }
    let num = cfg.numerics();
    let records = ground_records(&tree, &v, &cfg.lambdas(0.05, 0.4)?, &num)?;
    let rep = summarize_d2(records, integral_g0(&tree, &v)?);
    let svg = opts.svg.then(|| {
        Plot {
            title: "lowest eigenvalue against inverse coupling",
            x_label: "1/λ",
            y_label: "ln |E1|",
            points: rep.records.iter().filter_map(|r| r.e1.map(|e| (1.0 / r.lambda, e.abs().ln()))).collect(),
            line: rep.fit.map(|f| (f.slope, f.intercept)),
        }
        .render()
    });
    Ok(Report {
        result: json!({"numerics": num, "report": rep}),
        csv: Some(ground_rows(&rep.records)),
        svg,
        pass: rep.pass,
        verdict: rep.verdict.clone(),
    })
}

fn supercritical(cfg: &Config, opts: &Options) -> Result<Report> {
    let tree = cfg.build_tree()?;
    let v = cfg.build_potential()?;
    let d = cfg.dimension(&tree)?;
    check_supercritical_hypotheses(&tree, &v, d)?;
    let num = cfg.numerics();
    let records = ground_records(&tree, &v, &cfg.lambdas(1e-2, 1e2)?, &num)?;
    let mut rep = summarize_supercritical(records, d, None);
    if let Some(ls) = rep.lambda_star {
        if let Some(next) = rep.records.iter().find(|r| r.lambda > ls && !r.empty()).map(|r| r.lambda) {
            rep.onset = Some(refine_onset(&tree, &v, ls, next, &num)?);
        }
    }
    let svg = opts.svg.then(|| {
        Plot {
            title: "lowest eigenvalue against coupling",
            x_label: "log10 λ",
            y_label: "log10 |E1|",
            points: rep.records.iter().filter_map(|r| r.e1.map(|e| (r.lambda.log10(), e.abs().log10()))).collect(),
            line: None,
        }
        .render()
    });
    Ok(Report {
        result: json!({"numerics": num, "report": rep}),
        csv: Some(ground_rows(&rep.records)),
        svg,
        pass: rep.pass,
        verdict: rep.verdict.clone(),
    })
}

fn weyl(cfg: &Config, opts: &Options) -> Result<Report> {
    let tree = cfg.build_tree()?;
    let v = cfg.build_potential()?;
    let h = cfg.weyl.h.unwrap_or(0.002);
    let lambdas = cfg.weyl.lambdas.clone().unwrap_or_else(|| vec![1e2, 1e3, 1e4]);
    if lambdas.iter().any(|l| !l.is_finite() || *l <= 0.0) {
        bail!("weyl.lambdas: need positive couplings");
    }
    let run = |direct: bool| -> Result<WeylReport<f64>> {
        let parts = lambdas
            .par_iter()
            .map(|&l| weyl_check(&tree, &v, &[l], h, direct))
            .collect::<arbor_core::Result<Vec<_>>>()?;
        let first = parts.first().ok_or_else(|| anyhow!("no couplings"))?.clone();
        let records: Vec<_> = parts.iter().flat_map(|p| p.records.clone()).collect();
        let pass = parts.last().is_some_and(|p| p.pass);
        Ok(WeylReport { records, pass, ..first })
    };
    let channels = run(false)?;
    let direct = if opts.compare_direct { Some(run(true)?) } else { None };
    let agree = direct
        .as_ref()
        .is_none_or(|d| d.records.iter().zip(&channels.records).all(|(a, b)| a.count == b.count));
    let rows: Vec<Vec<String>> = channels
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![cell(Some(r.lambda)), r.count.to_string(), cell(Some(r.prediction)), cell(Some(r.ratio))];
            if let Some(d) = &direct {
                row.push(d.records[i].count.to_string());
            }
            row
        })
        .collect();
    let mut header = vec!["lambda", "count", "prediction", "ratio"];
    if direct.is_some() {
        header.push("direct_count");
    }
    let svg = opts.svg.then(|| {
        Plot {
            title: "negative eigenvalue count against Weyl term",
            x_label: "√λ",
            y_label: "N",
            points: channels.records.iter().map(|r| (r.lambda.sqrt(), r.count as f64)).collect(),
            line: Some((channels.constant * channels.weyl_integral, 0.0)),
        }
        .render()
    });
    let last = channels.records.last().map(|r| r.ratio).unwrap_or(f64::NAN);
    Ok(Report {
        result: json!({"h": h, "report": channels, "direct": direct, "routes_agree": agree}),
        csv: Some(csv(&header, &rows)),
        svg,
        pass: channels.pass && agree,
        verdict: format!("ratio at largest coupling {last:.4}{}", if agree { "" } else { "; direct count differs" }),
    })
}
