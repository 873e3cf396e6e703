//! Static SVG line plots of curve CSVs. Output depends only on the input
//! bytes and flags.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Curve CSV: first column is x, the rest are series.
    pub csv: PathBuf,
    /// Output SVG path.
    pub svg: PathBuf,
    /// Columns to draw (default: every column after the first except `true_lambda`).
    #[arg(long, value_delimiter = ',')]
    pub series: Option<Vec<String>>,
    /// Horizontal reference line; defaults to the `true_lambda` column if present.
    #[arg(long)]
    pub hline: Option<f64>,
    /// Logarithmic x axis.
    #[arg(long)]
    pub logx: bool,
    #[arg(long)]
    pub title: Option<String>,
}

#[derive(Debug)]
pub enum PlotError {
    Usage(String),
    Io(String),
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct Curve {
    pub x_label: String,
    pub xs: Vec<f64>,
    pub series: Vec<(String, Vec<f64>)>,
    pub hline: Option<f64>,
}

fn cell(s: &str) -> f64 {
    s.trim().parse().unwrap_or(f64::NAN)
}

pub fn read_curve(args: &PlotArgs) -> Result<Curve, PlotError> {
    let mut rdr = csv::Reader::from_path(&args.csv)
        .map_err(|e| PlotError::Usage(format!("cannot read {}: {e}", args.csv.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| PlotError::Usage(format!("bad CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| PlotError::Usage(format!("bad CSV row: {e}")))?;
    if header.len() < 2 || rows.is_empty() {
        return Err(PlotError::Usage(format!(
            "{} is empty: need a header `x,series...` and at least one row",
            args.csv.display()
        )));
    }
    let column = |j: usize| -> Vec<f64> { rows.iter().map(|r| cell(r.get(j).unwrap_or(""))).collect() };
    let names: Vec<String> = match &args.series {
        Some(s) => s.clone(),
        None => header[1..]
            .iter()
            .filter(|h| h.as_str() != "true_lambda")
            .cloned()
            .collect(),
    };
    let mut series = Vec::new();
    for name in names {
        let j = header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| PlotError::Usage(format!("no column named `{name}`")))?;
        series.push((name, column(j)));
    }
    let hline = args.hline.or_else(|| {
        header
            .iter()
            .position(|h| h == "true_lambda")
            .and_then(|j| column(j).into_iter().find(|v| v.is_finite()))
    });
    Ok(Curve {
        x_label: header[0].clone(),
        xs: column(0),
        series,
        hline,
    })
}

fn tick_label(v: f64) -> String {
    let r: f64 = format!("{v:.3e}").parse().unwrap_or(v);
    format!("{r}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn padded_range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return None;
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        Some((lo - 0.5, hi + 0.5))
    } else {
        let pad = 0.05 * (hi - lo);
        Some((lo - pad, hi + pad))
    }
}

pub fn render_svg(c: &Curve, logx: bool, title: Option<&str>) -> Result<String, PlotError> {
    let tx = |x: f64| if logx { x.log10() } else { x };
    if logx && c.xs.iter().any(|&x| x.is_finite() && x <= 0.0) {
        return Err(PlotError::Usage("--logx needs positive x values".into()));
    }
    let (x0, x1) = padded_range(c.xs.iter().map(|&x| tx(x)))
        .ok_or_else(|| PlotError::Usage("no numeric x values".into()))?;
    let (y0, y1) = padded_range(
        c.series
            .iter()
            .flat_map(|(_, ys)| ys.iter().copied())
            .chain(c.hline),
    )
    .ok_or_else(|| PlotError::Usage("no numeric series values".into()))?;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (tx(x) - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if let Some(t) = title {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let xlab = if logx { 10f64.powf(xv) } else { xv };
        let xp = LEFT + f * pw;
        let _ = writeln!(
            s,
            r#"<line x1="{xp:.2}" y1="{:.2}" x2="{xp:.2}" y2="{:.2}" stroke="black"/><text x="{xp:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            tick_label(xlab)
        );
        let yv = y0 + f * (y1 - y0);
        let yp = TOP + (1.0 - f) * ph;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{yp:.2}" x2="{LEFT}" y2="{yp:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            yp + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(&c.x_label)
    );
    if let Some(h) = c.hline {
        let _ = writeln!(
            s,
            r#"<line class="reference" x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="6 4"/>"#,
            LEFT + pw,
            y = py(h)
        );
    }
    for (k, (name, ys)) in c.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = c
            .xs
            .iter()
            .zip(ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            pts.join(" "),
            escape(name)
        );
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(name)
        );
    }
    if let Some(h) = c.hline {
        let ly = TOP + 10.0 + 18.0 * c.series.len() as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="black" stroke-dasharray="6 4"/><text x="{:.2}" y="{:.2}">reference {}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            tick_label(h)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn cmd_plot(args: &PlotArgs) -> Result<(), PlotError> {
    let curve = read_curve(args)?;
    let svg = render_svg(&curve, args.logx, args.title.as_deref())?;
    std::fs::write(&args.svg, svg)
        .map_err(|e| PlotError::Io(format!("cannot write {}: {e}", args.svg.display())))
}
