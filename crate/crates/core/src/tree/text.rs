//! Line-oriented text form of trees and skeletons.
//!
//! ```text
//! # marked-tree horizon=1 origin=0
//! ∅	0	0.3	2	0:0:1 0.3:-0.41:1
//! 1	0.3	inf	-	0.3:-0.41:1 1:0.2:1
//! ```
//!
//! Columns are tab separated: label, birth, death (`inf` if alive at the
//! horizon), offspring count (`-` if undecided), then the recorded path as
//! space separated `time:position:zeta` triples. Skeletons use the header
//! `# skeleton time=.. k=..`, a `# carriers` line listing the particle holding
//! each mark, and an extra mark-count column after the offspring count.

use std::fmt::Write as _;

use super::label::ParticleLabel;
use super::marked::{MarkedTree, MotionState, ParticleRecord, PathPoint};
use super::spine::SkeletonRealization;
use crate::error::{Error, Result};

fn write_record(out: &mut String, r: &ParticleRecord, marks: Option<u32>) {
    let children = r.children.map_or_else(|| "-".to_string(), |a| a.to_string());
    write!(out, "{}\t{}\t{}\t{}", r.label, r.birth, r.death, children).unwrap();
    if let Some(d) = marks {
        write!(out, "\t{d}").unwrap();
    }
    out.push('\t');
    for (i, p) in r.path.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{}:{}:{}", p.time, p.state.position, p.state.zeta).unwrap();
    }
    out.push('\n');
}

pub fn tree_to_text(tree: &MarkedTree) -> String {
    let mut out = format!("# marked-tree horizon={} origin={}\n", tree.horizon(), tree.origin());
    for r in tree.records() {
        write_record(&mut out, r, None);
    }
    out
}

pub fn skeleton_to_text(sk: &SkeletonRealization) -> String {
    let mut out = format!("# skeleton time={} k={}\n# carriers", sk.time(), sk.k());
    for c in sk.carriers() {
        write!(out, " {c}").unwrap();
    }
    out.push('\n');
    for (r, d) in sk.nodes().iter().zip(sk.mark_counts()) {
        write_record(&mut out, r, Some(*d));
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn num(line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| parse_err(line, format!("bad number `{s}`: {e}")))
}

fn header_value(line: usize, header: &str, key: &str) -> Result<f64> {
    let tok = header
        .split_whitespace()
        .find_map(|t| t.strip_prefix(&format!("{key}=")))
        .ok_or_else(|| parse_err(line, format!("header lacks `{key}=`")))?;
    num(line, tok)
}

fn parse_record(line: usize, text: &str, with_marks: bool) -> Result<ParticleRecord> {
    let cols: Vec<&str> = text.split('\t').collect();
    let expected = if with_marks { 6 } else { 5 };
    if cols.len() != expected {
        return Err(parse_err(line, format!("expected {expected} columns, got {}", cols.len())));
    }
    let label: ParticleLabel = cols[0].parse().map_err(|_| parse_err(line, "bad label"))?;
    let children = match cols[3] {
        "-" => None,
        s => Some(s.parse::<u32>().map_err(|e| parse_err(line, e.to_string()))?),
    };
    let path = cols[expected - 1]
        .split(' ')
        .map(|triple| {
            let parts: Vec<&str> = triple.split(':').collect();
            if parts.len() != 3 {
                return Err(parse_err(line, format!("bad path point `{triple}`")));
            }
            Ok(PathPoint {
                time: num(line, parts[0])?,
                state: MotionState::new(num(line, parts[1])?, num(line, parts[2])?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParticleRecord {
        label,
        birth: num(line, cols[1])?,
        death: num(line, cols[2])?,
        children,
        path,
    })
}

pub fn tree_from_text(text: &str) -> Result<MarkedTree> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    if !header.starts_with("# marked-tree") {
        return Err(parse_err(1, "missing `# marked-tree` header"));
    }
    let horizon = header_value(1, header, "horizon")?;
    let origin = header_value(1, header, "origin")?;
    let records = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_record(i + 1, l, false))
        .collect::<Result<Vec<_>>>()?;
    MarkedTree::from_records(records, horizon, origin)
}

pub fn skeleton_from_text(text: &str) -> Result<SkeletonRealization> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    if !header.starts_with("# skeleton") {
        return Err(parse_err(1, "missing `# skeleton` header"));
    }
    let time = header_value(1, header, "time")?;
    let (_, carrier_line) = lines.next().ok_or_else(|| parse_err(2, "missing carriers"))?;
    let carriers = carrier_line
        .strip_prefix("# carriers")
        .ok_or_else(|| parse_err(2, "missing `# carriers` line"))?
        .split_whitespace()
        .map(|s| s.parse::<ParticleLabel>())
        .collect::<Result<Vec<_>>>()?;
    let mut nodes = Vec::new();
    for (i, l) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let rec = parse_record(i + 1, l, true)?;
        nodes.push(rec);
    }
    SkeletonRealization::from_nodes(time, nodes, carriers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::marked::fixtures::*;
    use crate::tree::spine::{extract_skeleton, SpineAssignment};

    #[test]
    fn golden_tree_text() {
        let tree = one_binary_branch();
        let text = tree_to_text(&tree);
        let expected = "# marked-tree horizon=1 origin=0\n\
                        ∅\t0\t0.3\t2\t0:0:1 0.3:0:1\n\
                        1\t0.3\tinf\t-\t0.3:0:1 1:0:1\n\
                        2\t0.3\tinf\t-\t0.3:0:1 1:0:1\n";
        assert_eq!(text, expected);
        let back = tree_from_text(&text).unwrap();
        assert_eq!(back.records(), tree.records());
    }

    #[test]
    fn golden_skeleton_text() {
        let tree = one_binary_branch();
        let l = |p: &[u32]| ParticleLabel::from_path(p.to_vec()).unwrap();
        let sk = extract_skeleton(&tree, &SpineAssignment::new(vec![l(&[2]), l(&[1])]).unwrap(), 1.0).unwrap();
        let text = skeleton_to_text(&sk);
        assert!(text.starts_with("# skeleton time=1 k=2\n# carriers 2 1\n∅\t0\t0.3\t2\t2\t"));
        let back = skeleton_from_text(&text).unwrap();
        assert_eq!(back, sk);
    }

    #[test]
    fn reports_bad_lines() {
        let err = tree_from_text("# marked-tree horizon=1 origin=0\n∅\t0\tx\t-\t0:0:1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(tree_from_text("nonsense").is_err());
    }
}
