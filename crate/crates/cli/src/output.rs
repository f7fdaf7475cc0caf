use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

#[derive(Clone, Debug, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Header {
    pub fn new(command: &str, config: &Value, seed: u64) -> Self {
        Header {
            tool: "sepnet",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_hash: config_hash(config),
            seed,
        }
    }

    pub fn comment_lines(&self) -> Vec<String> {
        vec![
            format!("tool {} {}", self.tool, self.version),
            format!("command {}", self.command),
            format!("config_hash {}", self.config_hash),
            format!("seed {}", self.seed),
        ]
    }
}

/// SHA-256 of the compact JSON text (object keys are kept sorted).
pub fn config_hash(config: &Value) -> String {
    let text = serde_json::to_string(config).expect("json");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn csv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            s.push_str("# ");
            s.push_str(c);
            s.push('\n');
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    Value::Object(
                        self.columns
                            .iter()
                            .zip(r)
                            .map(|(c, v)| (c.clone(), Value::String(v.clone())))
                            .collect(),
                    )
                })
                .collect(),
        )
    }
}

pub fn f(v: f64) -> String {
    format!("{v}")
}

const SVG_SIZE: f64 = 800.0;

fn svg_frame(bbox: [(f64, f64); 2], body: &str, comments: &[String]) -> String {
    let (w, h) = (bbox[0].1 - bbox[0].0, bbox[1].1 - bbox[1].0);
    let scale = SVG_SIZE / w.max(h).max(f64::MIN_POSITIVE);
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.3} {:.3}\">\n",
        w * scale,
        h * scale,
        w * scale,
        h * scale
    ));
    for c in comments {
        s.push_str(&format!("<!-- {} -->\n", c.replace("--", "-")));
    }
    s.push_str(&format!(
        "<g transform=\"translate(0,{:.6}) scale({:.9},{:.9}) translate({:.9},{:.9})\">\n",
        h * scale,
        scale,
        -scale,
        -bbox[0].0,
        -bbox[1].0
    ));
    s.push_str(body);
    s.push_str("</g>\n</svg>\n");
    s
}

pub fn svg_points(points: &[Vec<f64>], window: &[(f64, f64)], comments: &[String]) -> String {
    let bbox = [window[0], window[1]];
    let r = (bbox[0].1 - bbox[0].0).max(bbox[1].1 - bbox[1].0) / 400.0;
    let mut body = format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\" stroke-width=\"{}\"/>\n",
        bbox[0].0,
        bbox[1].0,
        bbox[0].1 - bbox[0].0,
        bbox[1].1 - bbox[1].0,
        r / 2.0
    );
    for p in points {
        body.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\"/>\n",
            p[0], p[1], r
        ));
    }
    svg_frame(bbox, &body, comments)
}

/// Rectangles `(x, y, w, h, level)`, coloured by level.
pub fn svg_rects(rects: &[(f64, f64, f64, f64, usize)], comments: &[String]) -> String {
    const COLOURS: [&str; 6] = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    ];
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for &(x, y, w, h, _) in rects {
        lo = [lo[0].min(x), lo[1].min(y)];
        hi = [hi[0].max(x + w), hi[1].max(y + h)];
    }
    if rects.is_empty() {
        lo = [0.0; 2];
        hi = [1.0; 2];
    }
    let sw = (hi[0] - lo[0]).max(hi[1] - lo[1]) / 1000.0;
    let mut body = String::new();
    for &(x, y, w, h, level) in rects {
        body.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{sw}\"/>\n",
            COLOURS[(level - 1) % COLOURS.len()]
        ));
    }
    svg_frame([(lo[0], hi[0]), (lo[1], hi[1])], &body, comments)
}
