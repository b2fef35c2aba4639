//! Static SVG charts drawn straight from the CSV files the commands write.
//! Every plotted value is the CSV's own text, echoed in a `<title>`.

use std::fmt::Write;

const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(text: &str) -> Result<Self, String> {
        let mut rd = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = rd
            .headers()
            .map_err(|e| format!("csv header: {e}"))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = rd
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| format!("csv: {e}"))?;
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize, String> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("csv has no {name:?} column"))
    }
}

fn number(s: &str, what: &str) -> Result<f64, String> {
    s.trim().parse().map_err(|_| format!("{what}: {s:?} is not a number"))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Plot area and axis scaling shared by both charts.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }

    fn open(&self, svg: &mut String, x_title: &str, y_title: &str, y_ticks: usize) {
        let _ = write!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
"#
        );
        for i in 0..=y_ticks {
            let v = self.y0 + (self.y1 - self.y0) * i as f64 / y_ticks as f64;
            let y = self.py(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"##,
                WIDTH - RIGHT,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r##"<rect x="{LEFT}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="#333333"/>"##,
            WIDTH - LEFT - RIGHT,
            HEIGHT - TOP - BOTTOM
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            HEIGHT - 12.0,
            escape(x_title)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (TOP + HEIGHT - BOTTOM) / 2.0,
            (TOP + HEIGHT - BOTTOM) / 2.0,
            escape(y_title)
        );
    }

    fn x_label(&self, svg: &mut String, x: f64, label: &str) {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 18.0,
            escape(label)
        );
    }

    fn legend(&self, svg: &mut String, names: &[String]) {
        for (i, n) in names.iter().enumerate() {
            let y = TOP + 14.0 + 20.0 * i as f64;
            let x = WIDTH - RIGHT + 16.0;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{}"/><text x="{:.2}" y="{y:.2}">{}</text>"#,
                y - 10.0,
                PALETTE[i % PALETTE.len()],
                x + 18.0,
                escape(n)
            );
        }
    }
}

/// Mean F1 against noise fraction, one line per aggregation mode.
pub fn sweep_line_chart(csv_text: &str) -> Result<String, String> {
    let table = Table::parse(csv_text)?;
    let (fc, mc, yc) = (table.column("fraction")?, table.column("mode")?, table.column("mean_f1")?);
    let mut series: Vec<(String, Vec<(f64, f64, &str, &str)>)> = Vec::new();
    for row in &table.rows {
        let (xs, ys) = (&row[fc], &row[yc]);
        let point = (number(xs, "fraction")?, number(ys, "mean_f1")?, xs.as_str(), ys.as_str());
        match series.iter_mut().find(|(m, _)| *m == row[mc]) {
            Some((_, pts)) => pts.push(point),
            None => series.push((row[mc].clone(), vec![point])),
        }
    }
    let points = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, _, _) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        lo = lo.min(y);
        hi = hi.max(y);
    }
    if series.is_empty() {
        return Err("csv has no data rows".into());
    }
    if x1 - x0 < 1e-9 {
        x0 -= 0.05;
        x1 += 0.05;
    }
    let y0 = ((lo * 10.0).floor() / 10.0).min(hi - 0.1).max(0.0);
    let y1 = ((hi * 10.0).ceil() / 10.0).max(y0 + 0.1);
    let frame = Frame { x0, x1, y0, y1 };

    let mut svg = String::new();
    frame.open(&mut svg, "noise fraction", "test mean F1", 5);
    let mut xs: Vec<(f64, &str)> = series.iter().flat_map(|(_, p)| p.iter().map(|q| (q.0, q.2))).collect();
    xs.sort_by(|a, b| a.0.total_cmp(&b.0));
    xs.dedup_by(|a, b| a.0 == b.0);
    for (x, label) in xs {
        frame.x_label(&mut svg, frame.px(x), label);
    }
    for (i, (mode, pts)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y, _, _)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y, xs, ys) in pts {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{colour}"><title>{} fraction={} mean_f1={}</title></circle>"#,
                frame.px(x),
                frame.py(y),
                escape(mode),
                escape(xs),
                escape(ys)
            );
        }
    }
    let names: Vec<String> = series.into_iter().map(|(m, _)| m).collect();
    frame.legend(&mut svg, &names);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Grouped bars of the attention weight per time step: the overall mean and
/// any per-class columns. Empty cells are skipped.
pub fn attention_bar_chart(csv_text: &str) -> Result<String, String> {
    let table = Table::parse(csv_text)?;
    let tc = table.column("t")?;
    let cols: Vec<usize> = (0..table.header.len()).filter(|&c| c != tc).collect();
    if cols.is_empty() || table.rows.is_empty() {
        return Err("csv has no weight columns or no rows".into());
    }
    let mut hi = 0.0f64;
    for row in &table.rows {
        for &c in &cols {
            if !row[c].is_empty() {
                hi = hi.max(number(&row[c], &table.header[c])?);
            }
        }
    }
    let step = 0.05;
    let y1 = ((hi / step).ceil() * step).max(step);
    let n = table.rows.len() as f64;
    let frame = Frame {
        x0: 0.0,
        x1: n,
        y0: 0.0,
        y1,
    };
    let mut svg = String::new();
    frame.open(&mut svg, "time step", "mean attention weight", 5);
    let slot = frame.px(1.0) - frame.px(0.0);
    let bar = slot * 0.8 / cols.len() as f64;
    for (i, row) in table.rows.iter().enumerate() {
        let left = frame.px(i as f64) + slot * 0.1;
        frame.x_label(&mut svg, left + slot * 0.4, &row[tc]);
        for (j, &c) in cols.iter().enumerate() {
            if row[c].is_empty() {
                continue;
            }
            let v = number(&row[c], &table.header[c])?;
            let top = frame.py(v);
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{top:.2}" width="{bar:.2}" height="{:.2}" fill="{}"><title>t={} {}={}</title></rect>"#,
                left + bar * j as f64,
                frame.py(0.0) - top,
                PALETTE[j % PALETTE.len()],
                escape(&row[tc]),
                escape(&table.header[c]),
                escape(&row[c])
            );
        }
    }
    let names: Vec<String> = cols
        .iter()
        .map(|&c| {
            let h = &table.header[c];
            match h.strip_prefix("alpha_class_") {
                Some(name) => name.to_string(),
                None if h == "alpha_mean" => "all patches".to_string(),
                None => h.clone(),
            }
        })
        .collect();
    frame.legend(&mut svg, &names);
    svg.push_str("</svg>\n");
    Ok(svg)
}
