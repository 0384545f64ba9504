//! Minimal SVG line charts of tidy CSV files. Output depends only on the
//! input bytes, so plots are reproducible artifacts like everything else.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{usage, CliError};
use crate::manifest::{absolute, into_dir, manifest_for, write_atomic, Outcome, Recorded};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(clap::Args, Debug, Clone, Serialize, Deserialize)]
pub struct Plot {
    /// Tidy CSV with a header row
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    /// One line per distinct value of this column
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long)]
    pub log_x: bool,
    #[arg(long)]
    pub log_y: bool,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let t = |v: f64| if log { v.log10() } else { v };
        let (mut lo, mut hi) = values.map(t).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if hi - lo < 1e-12 * (1.0 + hi.abs()) {
            lo -= 0.5;
            hi += 0.5;
        } else if log {
            lo = lo.floor();
            hi = hi.ceil();
        } else {
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log }
    }

    /// Position in `[0, 1]`.
    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo as i32, self.hi as i32);
            let step = ((b - a) / 8 + 1).max(1);
            return (a..=b)
                .step_by(step as usize)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect();
        }
        let raw = (self.hi - self.lo) / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|k| k * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let mut v = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while v <= self.hi + 1e-9 * step {
            out.push((v, format!("{}", (v / step).round() * step)));
            v += step;
        }
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

type Series = BTreeMap<String, Vec<(f64, f64)>>;

fn read_series(p: &Plot) -> Result<Series, CliError> {
    let mut rdr = csv::Reader::from_path(&p.input)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            let known: Vec<&str> = headers.iter().collect();
            usage(format!("no column '{name}' in {} (columns: {})", p.input.display(), known.join(", ")))
        })
    };
    let (xi, yi) = (col(&p.x)?, col(&p.y)?);
    let gi = p.group.as_deref().map(col).transpose()?;
    let mut series = Series::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize, name: &str| -> Result<f64, CliError> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| usage(format!("row {}: '{}' in column '{name}' is not a number", row + 2, &rec[i])))
        };
        let (x, y) = (num(xi, &p.x)?, num(yi, &p.y)?);
        if (p.log_x && x <= 0.0) || (p.log_y && y <= 0.0) {
            return Err(usage(format!("row {}: non-positive value on a log axis", row + 2)));
        }
        let g = gi.map(|i| rec[i].to_string()).unwrap_or_default();
        series.entry(g).or_default().push((x, y));
    }
    if series.is_empty() {
        return Err(usage(format!("{} has no data rows", p.input.display())));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(series)
}

pub fn render(p: &Plot, series: &Series) -> String {
    let all = || series.values().flatten();
    let ax = Axis::new(all().map(|q| q.0), p.log_x);
    let ay = Axis::new(all().map(|q| q.1), p.log_y);
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + ax.unit(x) * pw;
    let py = |y: f64| MARGIN_T + (1.0 - ay.unit(y)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if let Some(t) = &p.title {
        let _ = writeln!(s, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#, MARGIN_L + pw / 2.0, escape(t));
    }
    let _ = writeln!(s, r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
    for (v, label) in ax.ticks() {
        let x = px(v);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, MARGIN_T, MARGIN_T + ph);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, MARGIN_T + ph + 18.0);
    }
    for (v, label) in ay.ticks() {
        let y = py(v);
        let _ = writeln!(s, r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, MARGIN_L + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, MARGIN_L - 6.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 12.0,
        escape(&p.x)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        escape(&p.y)
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        if p.group.is_some() {
            let ly = MARGIN_T + 14.0 + 18.0 * k as f64;
            let lx = MARGIN_L + pw + 14.0;
            let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
        }
    }
    s.push_str("</svg>\n");
    s
}

impl Recorded for Plot {
    const NAME: &'static str = "plot";

    fn execute(&self) -> Result<Outcome, CliError> {
        let series = read_series(self)?;
        let svg = render(self, &series);
        write_atomic(&self.out, svg.as_bytes())?;
        println!("series={} points={} out={}", series.len(), series.values().map(Vec::len).sum::<usize>(), self.out.display());
        Ok(Outcome {
            manifest: manifest_for(&self.out),
            artifacts: vec![self.out.clone()],
            seeds: Vec::new(),
            config: serde_json::json!({ "series": series.keys().collect::<Vec<_>>() }),
        })
    }

    fn absolutize(&mut self) -> std::io::Result<()> {
        absolute(&mut self.input)?;
        absolute(&mut self.out)
    }

    fn redirect(&mut self, dir: &Path) {
        into_dir(&mut self.out, dir);
    }
}
