//! Node probabilities -> line and function verdicts. A line is flagged when
//! any node on it crosses the threshold; a function is flagged when any of
//! its lines is.

use super::report::{AnnotationReport, LineRecord};
use super::AnnotateError;
use crate::cpg::Cpg;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct LinePrediction {
    pub file: String,
    pub line: u32,
    /// Max node probability on this line.
    pub prob: f32,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionPrediction {
    pub name: String,
    pub start: u32,
    pub end: u32,
    pub flagged: bool,
    pub max_prob: f32,
    pub flagged_lines: Vec<u32>,
}

/// Aggregate per-node probabilities over a line-complete graph.
/// `probs` is indexed by node position.
pub fn aggregate(
    probs: &[f32],
    cpg: &Cpg,
    threshold: f64,
) -> Result<(Vec<LinePrediction>, Vec<FunctionPrediction>), AnnotateError> {
    if probs.len() != cpg.nodes.len() {
        return Err(AnnotateError::LengthMismatch { got: probs.len(), expected: cpg.nodes.len() });
    }
    let mut line_max: BTreeMap<u32, f32> = BTreeMap::new();
    for (pos, node) in cpg.nodes.iter().enumerate() {
        if let Some(line) = node.line {
            let entry = line_max.entry(line).or_insert(f32::MIN);
            if probs[pos] > *entry {
                *entry = probs[pos];
            }
        }
    }
    let lines: Vec<LinePrediction> = line_max
        .iter()
        .map(|(&line, &prob)| LinePrediction {
            file: cpg.source_path.clone(),
            line,
            prob,
            flagged: prob as f64 >= threshold,
        })
        .collect();

    let mut functions = Vec::new();
    for (name, &method_id) in &cpg.methods {
        let Some(method) = cpg.node_by_id(method_id) else { continue };
        let Some(start) = method.line else { continue };
        let mut end = start;
        let mut fn_lines: BTreeMap<u32, f32> = BTreeMap::new();
        for (pos, node) in cpg.nodes.iter().enumerate() {
            if node.enclosing_method != Some(method_id) {
                continue;
            }
            if let Some(line) = node.line {
                end = end.max(line);
                let entry = fn_lines.entry(line).or_insert(f32::MIN);
                if probs[pos] > *entry {
                    *entry = probs[pos];
                }
            }
        }
        let flagged_lines: Vec<u32> = fn_lines
            .iter()
            .filter(|(_, &p)| p as f64 >= threshold)
            .map(|(&l, _)| l)
            .collect();
        let max_prob = fn_lines.values().copied().fold(f32::MIN, f32::max);
        functions.push(FunctionPrediction {
            name: name.clone(),
            start,
            end,
            flagged: !flagged_lines.is_empty(),
            max_prob: if fn_lines.is_empty() { 0.0 } else { max_prob },
            flagged_lines,
        });
    }
    functions.sort_by_key(|f| (f.start, f.name.clone()));
    Ok((lines, functions))
}

/// Assemble the full per-file report from source text and predictions.
pub fn build_report(
    source_path: &str,
    source_text: &str,
    cpg: &Cpg,
    probs: &[f32],
    threshold: f64,
) -> Result<AnnotationReport, AnnotateError> {
    let (lines, functions) = aggregate(probs, cpg, threshold)?;
    let source_lines: Vec<&str> = source_text.lines().collect();
    let records = lines
        .into_iter()
        .map(|l| LineRecord {
            line: l.line,
            code: source_lines
                .get((l.line - 1) as usize)
                .map(|s| s.trim().to_string())
                .unwrap_or_default(),
            prob: l.prob,
            flagged: l.flagged,
        })
        .collect();
    Ok(AnnotationReport {
        source: source_path.to_string(),
        threshold,
        lines: records,
        functions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::assign_line_numbers;
    use crate::cpg::build_cpg;
    use crate::frontend::{parse, tokenize};

    fn lined_cpg(src: &str) -> Cpg {
        assign_line_numbers(&build_cpg(&parse(tokenize(src).unwrap()).unwrap(), "t.c")).unwrap()
    }

    #[test]
    fn line_takes_max_probability() {
        let cpg = lined_cpg("void f(){ a(); }");
        // two nodes on line 1 get 0.3 and 0.6
        let mut probs = vec![0.3f32; cpg.nodes.len()];
        probs[2] = 0.6;
        let (lines, _) = aggregate(&probs, &cpg, 0.5).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].prob, 0.6);
        assert!(lines[0].flagged);
    }

    #[test]
    fn one_flagged_line_flags_the_function() {
        let src = "void f(){\n  a();\n  b();\n}";
        let cpg = lined_cpg(src);
        let mut probs = vec![0.1f32; cpg.nodes.len()];
        // flag only nodes on line 3
        for (pos, n) in cpg.nodes.iter().enumerate() {
            if n.line == Some(3) {
                probs[pos] = 0.9;
            }
        }
        let (lines, functions) = aggregate(&probs, &cpg, 0.5).unwrap();
        assert!(lines.iter().any(|l| l.line == 3 && l.flagged));
        assert_eq!(functions.len(), 1);
        assert!(functions[0].flagged);
        assert_eq!(functions[0].flagged_lines, vec![3]);
        // span end is the max line of contained nodes, not the closing brace
        assert_eq!((functions[0].start, functions[0].end), (1, 3));
    }

    #[test]
    fn nothing_flagged_below_threshold() {
        let cpg = lined_cpg("void f(){ a(); }\nvoid g(){ b(); }");
        let probs = vec![0.49f32; cpg.nodes.len()];
        let (lines, functions) = aggregate(&probs, &cpg, 0.5).unwrap();
        assert!(lines.iter().all(|l| !l.flagged));
        assert!(functions.iter().all(|f| !f.flagged));
    }

    #[test]
    fn threshold_equality_counts_as_flagged() {
        let cpg = lined_cpg("void f(){ a(); }");
        let probs = vec![0.5f32; cpg.nodes.len()];
        let (lines, _) = aggregate(&probs, &cpg, 0.5).unwrap();
        assert!(lines[0].flagged);
    }

    #[test]
    fn aggregation_consistency_and_threshold_monotonicity() {
        use rand::{Rng, SeedableRng};
        let src = "int g;\nvoid f(int a){ if(a) { g = a; } }\nint main(){ f(1); return 0; }";
        let cpg = lined_cpg(src);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let probs: Vec<f32> = (0..cpg.nodes.len()).map(|_| rng.gen()).collect();
        let mut prev_lines = usize::MAX;
        let mut prev_funcs = usize::MAX;
        for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let (lines, functions) = aggregate(&probs, &cpg, t).unwrap();
            // flagged lines equal the union of flagged nodes' lines
            let expect: std::collections::BTreeSet<u32> = cpg
                .nodes
                .iter()
                .enumerate()
                .filter(|(pos, _)| probs[*pos] as f64 >= t)
                .filter_map(|(_, n)| n.line)
                .collect();
            let got: std::collections::BTreeSet<u32> =
                lines.iter().filter(|l| l.flagged).map(|l| l.line).collect();
            assert_eq!(got, expect);
            // flagged functions equal functions containing a flagged line
            for f in &functions {
                let has_flagged = f.flagged_lines.iter().any(|l| got.contains(l));
                assert_eq!(f.flagged, has_flagged);
            }
            let n_lines = got.len();
            let n_funcs = functions.iter().filter(|f| f.flagged).count();
            assert!(n_lines <= prev_lines && n_funcs <= prev_funcs, "not monotone");
            prev_lines = n_lines;
            prev_funcs = n_funcs;
        }
    }
}
