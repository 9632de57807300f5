//! Forest plots and a plain-text summary of the estimated effects.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use disclosure_core::estimation::{read_effects, Direction};
use disclosure_core::matching::read_balance;
use disclosure_core::{BalanceReport, EffectReport, OutcomeKind, Term};

use crate::error::{io_context, Result};
use crate::stages::{create, Counts};

pub const SUMMARY_FILE: &str = "summary.txt";

const WIDTH: f64 = 760.0;
const LABEL_W: f64 = 230.0;
const RIGHT_PAD: f64 = 40.0;
const ROW_H: f64 = 22.0;
const TOP: f64 = 48.0;
const BOTTOM: f64 = 44.0;

fn colour(d: Direction) -> &'static str {
    match d {
        Direction::Positive => "#c0392b",
        Direction::Negative => "#2e6fbf",
        Direction::NotSignificant => "#8c8c8c",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick step of roughly `span / 5` rounded to 1, 2 or 5 times a power of ten.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

/// Percent effect with its interval for each identity of one outcome.
pub fn forest_svg(outcome: OutcomeKind, rows: &[&EffectReport]) -> String {
    let finite = |x: f64| if x.is_finite() { Some(x) } else { None };
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for r in rows {
        for v in [r.ci_low, r.ci_high, r.percent_effect].into_iter().filter_map(finite) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi - lo < 1e-9 {
        (lo, hi) = (-10.0, 10.0);
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_w = WIDTH - LABEL_W - RIGHT_PAD;
    let x = |v: f64| LABEL_W + (v.clamp(lo, hi) - lo) / (hi - lo) * plot_w;
    let height = TOP + BOTTOM + ROW_H * rows.len().max(1) as f64;
    let axis_y = height - BOTTOM + 8.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" font-size="14" font-weight="bold">{} (% change)</text>"#,
        LABEL_W,
        outcome.as_str()
    );
    if rows.is_empty() {
        let _ = writeln!(s, r#"<text x="{LABEL_W}" y="{}">no estimates</text>"#, TOP + 14.0);
    }

    let step = tick_step(hi - lo);
    let mut t = (lo / step).ceil() * step;
    while t <= hi {
        let tx = x(t);
        let _ = writeln!(
            s,
            r##"<line x1="{tx:.1}" y1="{TOP}" x2="{tx:.1}" y2="{axis_y}" stroke="#eeeeee"/><text x="{tx:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            axis_y + 16.0,
            format_tick(t)
        );
        t += step;
    }
    let zx = x(0.0);
    let _ = writeln!(s, r##"<line x1="{zx:.1}" y1="{TOP}" x2="{zx:.1}" y2="{axis_y}" stroke="#333333"/>"##);

    for (i, r) in rows.iter().enumerate() {
        let y = TOP + ROW_H * (i as f64 + 0.5);
        let c = colour(r.direction());
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LABEL_W - 10.0,
            y + 4.0,
            escape(&r.identity)
        );
        if let (Some(a), Some(b)) = (finite(r.ci_low), finite(r.ci_high)) {
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{c}" stroke-width="2"/>"#,
                x(a),
                x(b)
            );
        }
        if let Some(p) = finite(r.percent_effect) {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{y:.1}" r="4" fill="{c}"/>"#, x(p));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(t: f64) -> String {
    let t = if t.abs() < 1e-9 { 0.0 } else { t };
    if t.fract().abs() < 1e-9 {
        format!("{t:.0}")
    } else {
        format!("{t}")
    }
}

pub fn summary_text(effects: &[EffectReport], balance: &[(String, BalanceReport)]) -> String {
    let mut s = String::new();
    let mut by_outcome: BTreeMap<OutcomeKind, Vec<&EffectReport>> = BTreeMap::new();
    for r in effects {
        by_outcome.entry(r.outcome).or_default().push(r);
    }
    if by_outcome.is_empty() {
        s.push_str("no effects estimated\n");
    }
    for (outcome, rows) in &by_outcome {
        let _ = writeln!(s, "{outcome}");
        for r in rows {
            let _ = writeln!(
                s,
                "  {:<28} {:<20} {:>9.2}% [{:>9.2}, {:>9.2}]  p_holm {:.4}  {}{}",
                r.identity,
                r.term.as_str(),
                r.percent_effect,
                r.ci_low,
                r.ci_high,
                r.p_holm,
                r.direction().as_str(),
                if r.fallback_used { "  (poisson fallback)" } else { "" }
            );
        }
    }
    if !balance.is_empty() {
        s.push_str("\nbalance after matching\n");
    }
    for (name, b) in balance {
        let worst = b.rows.iter().map(|r| r.smd_after.abs()).fold(0.0, f64::max);
        let passing = b.rows.iter().filter(|r| r.pass).count();
        let _ = writeln!(
            s,
            "  {:<28} {}/{} covariates pass, max |smd| {:.4}",
            name,
            passing,
            b.rows.len(),
            worst
        );
    }
    s
}

/// Write one forest plot per outcome (treatment effect rows only) and the
/// summary into `out_dir`.
pub fn write_report(effects: &[EffectReport], balance: &[(String, BalanceReport)], out_dir: &Path) -> Result<Counts> {
    io_context(std::fs::create_dir_all(out_dir), out_dir)?;
    let mut by_outcome: BTreeMap<OutcomeKind, Vec<&EffectReport>> = BTreeMap::new();
    for r in effects.iter().filter(|r| r.term == Term::TreatPost) {
        by_outcome.entry(r.outcome).or_default().push(r);
    }
    for (outcome, rows) in &by_outcome {
        let mut w = create(&out_dir.join(format!("forest_{}.svg", outcome.as_str())))?;
        w.write_all(forest_svg(*outcome, rows).as_bytes())?;
        w.flush()?;
    }
    let mut w = create(&out_dir.join(SUMMARY_FILE))?;
    w.write_all(summary_text(effects, balance).as_bytes())?;
    w.flush()?;
    let mut c = Counts::new();
    c.insert("plots".into(), by_outcome.len() as u64);
    c.insert("effects".into(), effects.len() as u64);
    Ok(c)
}

/// Report from files; balance reports are labelled by file stem.
pub fn report_files(effects: &Path, balance: &[PathBuf], out_dir: &Path) -> Result<Counts> {
    let rows = read_effects(io_context(std::fs::File::open(effects), effects)?, &effects.display().to_string())?;
    let mut bal = Vec::new();
    for p in balance {
        let b = read_balance(io_context(std::fs::File::open(p), p)?, &p.display().to_string())?;
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        bal.push((stem, b));
    }
    write_report(&rows, &bal, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn effect(identity: &str, pct: f64, lo: f64, hi: f64, significant: bool) -> EffectReport {
        EffectReport {
            identity: identity.into(),
            outcome: OutcomeKind::IdentityTweets,
            term: Term::TreatPost,
            estimate: (1.0 + pct / 100.0).ln(),
            robust_se: 0.1,
            p_raw: 0.01,
            p_holm: 0.02,
            percent_effect: pct,
            ci_low: lo,
            ci_high: hi,
            significant,
            fallback_used: false,
        }
    }

    #[test]
    fn colours_follow_direction() {
        let rows = [
            effect("gender:women", 30.0, 10.0, 50.0, true),
            effect("religion:muslim", -20.0, -35.0, -5.0, true),
            effect("age:18-24", 5.0, -10.0, 20.0, false),
        ];
        let refs: Vec<&EffectReport> = rows.iter().collect();
        let svg = forest_svg(OutcomeKind::IdentityTweets, &refs);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        for c in ["#c0392b", "#2e6fbf", "#8c8c8c"] {
            assert!(svg.contains(c), "{c}");
        }
    }

    #[test]
    fn empty_report_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let c = write_report(&[], &[], dir.path()).unwrap();
        assert_eq!(c["plots"], 0);
        let s = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        assert!(s.contains("no effects"));
        let svg = forest_svg(OutcomeKind::OutDegree, &[]);
        assert!(svg.contains("no estimates"));
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(tick_step(100.0), 20.0);
        assert_eq!(tick_step(7.0), 2.0);
        assert_eq!(tick_step(0.3), 0.1);
    }
}
