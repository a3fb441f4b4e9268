//! Output bundle: files, path plots, manifest and timing report.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use ccp_core::geometry::{Circle, Point, Polyline, Rect};

use crate::config::RunConfig;

pub struct Bundle {
    dir: PathBuf,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes one file through `fill`.
    pub fn write<F>(&self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.path(name);
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        fill(&mut w).and_then(|_| w.flush()).with_context(|| format!("cannot write {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
}

/// Config echo, program version and seed; enough to repeat the run.
pub fn write_manifest(bundle: &Bundle, command: &str, cfg: &RunConfig) -> Result<()> {
    bundle.write_json("config.json", cfg)?;
    bundle.write_json(
        "manifest.json",
        &Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config: cfg,
        },
    )
}

/// Wall times in seconds and evaluation counts of one run.
#[derive(Debug, Default, Serialize)]
pub struct TimingReport {
    pub modeling_s: f64,
    pub optimization_s: f64,
    pub total_s: f64,
    pub full_solve_ms: f64,
    pub dur_solve_ms: f64,
    pub true_evals: usize,
    pub surrogate_evals: usize,
}

/// Plate outline, holes, key points and the crack path. Path vertices are
/// written with the same precision as the path table.
pub fn path_svg(domain: &Rect, holes: &[Circle], key_points: &[Point], crack: &Polyline) -> String {
    let scale = 8.0;
    let pad = 10.0;
    let w = domain.width() * scale + 2.0 * pad;
    let h = domain.height() * scale + 2.0 * pad;
    // y axis points up in the model
    let tx = |x: f64| pad + (x - domain.x_min) * scale;
    let ty = |y: f64| pad + (domain.y_max - y) * scale;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.3} {h:.3}">"#);
    let _ = writeln!(
        s,
        r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="black"/>"#,
        tx(domain.x_min),
        ty(domain.y_max),
        domain.width() * scale,
        domain.height() * scale
    );
    for c in holes {
        let _ = writeln!(s, r##"<circle cx="{:.3}" cy="{:.3}" r="{:.3}" fill="#ddd" stroke="black"/>"##, tx(c.center.x), ty(c.center.y), c.radius * scale);
    }
    for k in key_points {
        let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="blue"/>"#, tx(k.x), ty(k.y));
    }
    let _ = writeln!(s, r#"<g transform="translate({pad} {pad}) scale({scale} -{scale}) translate({} {})">"#, -domain.x_min, -domain.y_max);
    let pts: Vec<String> = crack.vertices().iter().map(|p| format!("{:.9},{:.9}", p.x, p.y)).collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="red" stroke-width="0.25"/>"#, pts.join(" "));
    let _ = writeln!(s, "</g>\n</svg>");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_holds_exactly_the_path_vertices() {
        let crack = Polyline::new(vec![Point::new(0.0, 60.0), Point::new(10.0, 60.0), Point::new(11.0, 60.123456789)]).unwrap();
        let svg = path_svg(&Rect::new(0.0, 60.0, 0.0, 120.0).unwrap(), &[], &[], &crack);
        let mut csv = Vec::new();
        ccp_core::simulate::write_path_csv(&mut csv, &crack).unwrap();
        let from_csv: Vec<String> = String::from_utf8(csv)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let c: Vec<&str> = l.split(',').collect();
                format!("{},{}", c[1], c[2])
            })
            .collect();
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let points = line.split('"').nth(1).unwrap();
        assert_eq!(points.split(' ').collect::<Vec<_>>(), from_csv);
    }
}
