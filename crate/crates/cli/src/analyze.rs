//! Real-data analysis and per-group uniformity diagnostics.

use std::fmt::Write as _;

use serde::Serialize;
use sgbh::procedures::{GenericScope, ProcedureInput, ProcedureReport, ProcedureSpec};
use sgbh::selection::{select_groups, TestMethod};
use sgbh::{Estimator, Selector};

use crate::data::{Grouping, Table};
use crate::error::{CliError, CliResult};

/// Procedures that run without ground truth.
pub fn procedure_from_name(
    name: &str,
    estimator: Estimator,
    selector: Selector,
    lambda: f64,
    scope: GenericScope,
) -> CliResult<ProcedureSpec> {
    let spec = match name.replace('-', "_").as_str() {
        "bh" => ProcedureSpec::Bh,
        "plugin_sgbh" => ProcedureSpec::PluginSgbh { selector, estimator },
        "plugin_gbh" => ProcedureSpec::PluginGbh { estimator },
        "generic_sgbh" => ProcedureSpec::GenericSgbh { selector, lambda, scope },
        "generic_gbh" => ProcedureSpec::GenericGbh { lambda },
        "oracle_gbh" | "oracle_sgbh" | "variant_sgbh" | "quasi_adaptive_sgbh" | "qgbh" => {
            return Err(CliError::usage(format!(
                "procedure `{name}` needs the true null proportions and only runs in simulations"
            )))
        }
        _ => {
            return Err(CliError::usage(format!(
                "unknown procedure `{name}`; expected bh, plugin-sgbh, plugin-gbh, generic-sgbh or generic-gbh"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

pub fn run(
    table: &Table,
    grouping: &Grouping,
    spec: &ProcedureSpec,
    alpha: f64,
) -> CliResult<ProcedureReport> {
    let pvals = table.pvalues()?;
    let z = table.zscores()?;
    let input = ProcedureInput {
        pvals: &pvals,
        zscores: z.as_ref(),
        partition: &grouping.partition,
        truth: None,
    };
    Ok(spec.run(&input, alpha)?)
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        v.to_string()
    }
}

/// `id,group,pvalue,weight,weighted_pvalue,rejected`, one row per hypothesis.
pub fn hypothesis_csv(table: &Table, grouping: &Grouping, report: &ProcedureReport) -> CliResult<String> {
    let pvals = table.pvalues()?;
    let mut out = String::from("id,group,pvalue,weight,weighted_pvalue,rejected\n");
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for (i, id) in table.ids.iter().enumerate() {
        let g = grouping.partition.group_of(i);
        w.write_record([
            id.clone(),
            grouping.labels[g].clone(),
            fmt_f64(pvals.as_slice()[i]),
            fmt_f64(report.weights.get(g)),
            fmt_f64(report.rejections.weighted[i]),
            report.rejections.is_rejected(i).to_string(),
        ])
        .expect("writing to memory");
    }
    out.push_str(std::str::from_utf8(&w.into_inner().expect("in-memory writer")).expect("utf-8"));
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct GroupSummary {
    pub label: String,
    pub size: usize,
    pub selected: bool,
    pub test_statistic: Option<f64>,
    pub test_pvalue: Option<f64>,
    pub pi0_hat: Option<f64>,
    /// `None` stands for an infinite weight.
    pub weight: Option<f64>,
    pub rejections: usize,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub procedure: String,
    pub alpha: f64,
    pub m: usize,
    pub selection: Vec<String>,
    pub pooled_pi0_hat: Option<f64>,
    pub denominator: usize,
    pub rejections: usize,
    pub groups: Vec<GroupSummary>,
}

pub fn summarize(
    grouping: &Grouping,
    spec: &ProcedureSpec,
    alpha: f64,
    report: &ProcedureReport,
) -> Summary {
    let part = &grouping.partition;
    let mut per_group = vec![0; part.l()];
    for &i in &report.rejections.rejected {
        per_group[part.group_of(i)] += 1;
    }
    Summary {
        procedure: spec.name().to_string(),
        alpha,
        m: part.m(),
        selection: report.selection.iter().map(|j| grouping.labels[j].clone()).collect(),
        pooled_pi0_hat: report.pooled_estimate,
        denominator: report.denom,
        rejections: report.rejections.rejected.len(),
        groups: (0..part.l())
            .map(|j| {
                let test = report.selection_tests.get(j).copied().flatten();
                let w = report.weights.get(j);
                GroupSummary {
                    label: grouping.labels[j].clone(),
                    size: part.group(j).len(),
                    selected: report.selection.contains(j),
                    test_statistic: test.map(|t| t.statistic),
                    test_pvalue: test.map(|t| t.pvalue),
                    pi0_hat: report.group_estimates.get(j).copied().flatten(),
                    weight: w.is_finite().then_some(w),
                    rejections: per_group[j],
                }
            })
            .collect(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

impl Summary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "procedure   {}", self.procedure);
        let _ = writeln!(s, "alpha       {}", self.alpha);
        let _ = writeln!(s, "hypotheses  {}", self.m);
        let _ = writeln!(s, "selected    {{{}}}", self.selection.join(", "));
        let _ = writeln!(s, "pooled pi0  {}", opt(self.pooled_pi0_hat));
        let _ = writeln!(s, "denominator {}", self.denominator);
        let _ = writeln!(s, "rejections  {}", self.rejections);
        let _ = writeln!(s, "group  size  selected  statistic  test_p  pi0_hat  weight  rejected");
        for g in &self.groups {
            let _ = writeln!(
                s,
                "{:<6} {:>5} {:>9} {:>10} {:>7} {:>8} {:>7} {:>9}",
                g.label,
                g.size,
                if g.selected { "yes" } else { "no" },
                opt(g.test_statistic),
                opt(g.test_pvalue),
                opt(g.pi0_hat),
                g.weight.map_or_else(|| "inf".into(), |w| format!("{w:.4}")),
                g.rejections
            );
        }
        s
    }
}

/// `group,n,statistic,pvalue,reject` for every group.
pub fn uniformity_csv(
    table: &Table,
    grouping: &Grouping,
    method: TestMethod,
    level: f64,
) -> CliResult<String> {
    let report = select_groups(&table.pvalues()?, &grouping.partition, method, level)?;
    let mut out = String::from("group,n,statistic,pvalue,reject\n");
    for (j, test) in report.tests.iter().enumerate() {
        let t = test.ok_or_else(|| CliError::usage("selection test produced no outcome"))?;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            grouping.labels[j],
            grouping.partition.group(j).len(),
            t.statistic,
            t.pvalue,
            t.reject
        );
    }
    Ok(out)
}
