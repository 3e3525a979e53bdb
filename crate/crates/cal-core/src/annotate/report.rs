use super::aggregate::FunctionPrediction;
use serde_json::json;

/// Per-file annotation output: every line that carries at least one node,
/// with its max probability, plus per-function verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationReport {
    pub source: String,
    pub threshold: f64,
    pub lines: Vec<LineRecord>,
    pub functions: Vec<FunctionPrediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineRecord {
    pub line: u32,
    pub code: String,
    pub prob: f32,
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<ReportFormat> {
        match s {
            "json" => Some(ReportFormat::Json),
            "text" => Some(ReportFormat::Text),
            _ => None,
        }
    }
}

/// Render a report. JSON output is key-sorted and byte-stable; the text
/// format lists `line  code  prob` rows with a flag marker on sensitive
/// functions.
pub fn render_report(report: &AnnotationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => render_json(report),
        ReportFormat::Text => render_text(report),
    }
}

fn render_json(report: &AnnotationReport) -> String {
    let doc = json!({
        "source": report.source,
        "threshold": report.threshold,
        "functions": report.functions.iter().map(|f| json!({
            "name": f.name,
            "start": f.start,
            "end": f.end,
            "flagged": f.flagged,
            "max_prob": f.max_prob,
        })).collect::<Vec<_>>(),
        "lines": report.lines.iter().map(|l| json!({
            "line": l.line,
            "code": l.code,
            "prob": l.prob,
            "flagged": l.flagged,
        })).collect::<Vec<_>>(),
    });
    serde_json::to_string_pretty(&doc).expect("report serialization cannot fail")
}

fn render_text(report: &AnnotationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("{}  (threshold {:.2})\n\n", report.source, report.threshold));
    for l in &report.lines {
        out.push_str(&format!("{}  {}  {:.4}\n", l.line, l.code, l.prob));
    }
    out.push_str("\nfunctions:\n");
    for f in &report.functions {
        let marker = if f.flagged { "\u{2726}" } else { " " };
        out.push_str(&format!(
            "{} {}  {}-{}  {:.4}\n",
            marker, f.name, f.start, f.end, f.max_prob
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_line_report() -> AnnotationReport {
        AnnotationReport {
            source: "t.c".into(),
            threshold: 0.5,
            lines: vec![LineRecord { line: 7, code: "x=1;".into(), prob: 0.9823, flagged: true }],
            functions: vec![FunctionPrediction {
                name: "f".into(),
                start: 6,
                end: 8,
                flagged: true,
                max_prob: 0.9823,
                flagged_lines: vec![7],
            }],
        }
    }

    #[test]
    fn text_row_format() {
        let text = render_report(&one_line_report(), ReportFormat::Text);
        assert!(text.contains("7  x=1;  0.9823"), "{text}");
        assert!(text.contains('\u{2726}'));
    }

    #[test]
    fn empty_report_is_valid_json() {
        let report = AnnotationReport {
            source: "e.c".into(),
            threshold: 0.5,
            lines: vec![],
            functions: vec![],
        };
        let v: serde_json::Value =
            serde_json::from_str(&render_report(&report, ReportFormat::Json)).unwrap();
        assert_eq!(v["functions"].as_array().unwrap().len(), 0);
        assert_eq!(v["lines"].as_array().unwrap().len(), 0);
        assert_eq!(v["source"], "e.c");
    }

    #[test]
    fn rendering_is_deterministic() {
        let r = one_line_report();
        assert_eq!(
            render_report(&r, ReportFormat::Json),
            render_report(&r, ReportFormat::Json)
        );
        assert_eq!(
            render_report(&r, ReportFormat::Text),
            render_report(&r, ReportFormat::Text)
        );
    }

    #[test]
    fn json_keys_are_sorted() {
        let s = render_report(&one_line_report(), ReportFormat::Json);
        let f = s.find("\"functions\"").unwrap();
        let l = s.find("\"lines\"").unwrap();
        let src = s.find("\"source\"").unwrap();
        let t = s.find("\"threshold\"").unwrap();
        assert!(f < l && l < src && src < t);
    }
}
