//! Plain-text reports. Every metric is one line of `key=value` fields so the
//! files can be diffed and grepped.

use rglue_core::metrics::{cnr, CnrHistogram, Window};
use rglue_core::{Error, Grid};
use rglue_core::solver::IterationDiagnostics;

use crate::config::Method;
use crate::failure::Failure;

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub metric: &'static str,
    /// `None` when the metric is undefined for the window (zero variance).
    pub value: Option<f64>,
    /// Window fields, already formatted, e.g. `window=rows:0-9,cols:0-4`.
    pub place: String,
}

impl Record {
    pub fn line(&self) -> String {
        format!("metric={} value={} {}", self.metric, fmt_value(self.value), self.place)
    }

    /// Identity of the record apart from its value.
    pub fn key(&self) -> String {
        format!("metric={} {}", self.metric, self.place)
    }
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

pub fn window(w: &Window) -> String {
    format!("rows:{}-{},cols:{}-{}", w.row_start, w.row_end, w.col_start, w.col_end)
}

pub fn metrics_text(records: &[Record]) -> String {
    records.iter().map(|r| r.line() + "\n").collect()
}

pub fn histogram_text(
    h: &CnrHistogram,
    img: &Grid,
    targets: &[Window],
    backgrounds: &[Window],
) -> Result<String, Failure> {
    let mut s = format!(
        "pairs={} excluded={} below={} above={} mean={}\n",
        targets.len() * backgrounds.len(),
        h.excluded,
        h.below,
        h.above,
        fmt_value(h.mean)
    );
    let edges = h.edges();
    for (k, count) in h.counts.iter().enumerate() {
        s.push_str(&format!("bin lo={} hi={} count={count}\n", edges[k], edges[k + 1]));
    }
    for t in targets {
        for b in backgrounds {
            let value = match cnr(img, t, b) {
                Ok(v) => Some(v),
                Err(Error::Undefined { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            s.push_str(&format!(
                "pair target={} background={} cnr={}\n",
                window(t),
                window(b),
                fmt_value(value)
            ));
        }
    }
    Ok(s)
}

pub fn diagnostics_text(method: Method, diagnostics: &[IterationDiagnostics], stall: Option<(usize, f64)>) -> String {
    let mut s = format!("method={}\n", method_name(method));
    s.push_str("iteration cost linearized_cost cg_iterations cg_residual mean_theta clamped max_update\n");
    for d in diagnostics {
        s.push_str(&format!(
            "{} {} {} {} {:e} {} {} {}\n",
            d.iteration, d.cost, d.linearized_cost, d.cg_iterations, d.cg_residual, d.mean_theta, d.clamped, d.max_update
        ));
    }
    if let Some((iteration, residual)) = stall {
        s.push_str(&format!("stalled iteration={iteration} cg_residual={residual:e}\n"));
    }
    s
}

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Glue => "glue",
        Method::Rglue => "rglue",
        Method::Dp => "dp",
    }
}

/// Side-by-side table of two metric runs keyed by metric and window.
pub fn compare_text(glue: &[Record], rglue: &[Record]) -> String {
    let mut s = String::new();
    for g in glue {
        let r = rglue.iter().find(|r| r.key() == g.key()).and_then(|r| r.value);
        let diff = match (g.value, r) {
            (Some(a), Some(b)) => (b - a).to_string(),
            _ => "undefined".into(),
        };
        s.push_str(&format!(
            "{} glue={} rglue={} rglue_minus_glue={diff}\n",
            g.key(),
            fmt_value(g.value),
            fmt_value(r)
        ));
    }
    s
}
