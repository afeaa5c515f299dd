use std::collections::HashMap;

use super::{parse_err, IngestError};
use crate::dag::{ComputeDag, NodeId, OpKind};

/// Parses the line-oriented PSDD format of the circuit model zoo.
///
/// * `c ...` comment, `psdd <count>` header
/// * `L <id> <vtree> <literal>` literal indicator, an input valued 1
/// * `T <id> <vtree> <var> <log theta>` true node; with both indicators
///   at 1 it evaluates to `theta + (1 - theta) = 1` and is kept as an
///   input valued 1
/// * `D <id> <vtree> <k> {<prime> <sub> <log theta>}*` decision node:
///   a sum over `prime * sub * theta` products (a lone element is just
///   the product)
///
/// Log-space parameters are exponentiated so the DAG runs in linear
/// space. Nodes without consumers become outputs.
pub fn parse_psdd(text: &str) -> Result<ComputeDag, IngestError> {
    let mut dag = ComputeDag::new();
    let mut ids: HashMap<u64, NodeId> = HashMap::new();
    let mut declared: Option<(usize, usize)> = None;
    let mut count = 0usize;

    for (i, raw) in text.lines().enumerate() {
        let lno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let kind = it.next().unwrap();
        let mut num = |what: &str| -> Result<&str, IngestError> {
            it.next().ok_or_else(|| parse_err(lno, format!("missing {what}")))
        };
        match kind {
            "c" => continue,
            "psdd" => {
                let n: usize = num("node count")?
                    .parse()
                    .map_err(|_| parse_err(lno, "bad node count"))?;
                declared = Some((n, lno));
                continue;
            }
            "L" | "T" | "D" => {}
            other => {
                return Err(IngestError::UnsupportedLineKind { line: lno, kind: other.to_string() })
            }
        }
        let pid: u64 = parse_num(num("node id")?, lno, "node id")?;
        let _vtree: u64 = parse_num(num("vtree id")?, lno, "vtree id")?;
        if ids.contains_key(&pid) {
            return Err(parse_err(lno, format!("duplicate node id {pid}")));
        }
        let node = match kind {
            "L" => {
                let lit: i64 = parse_num(num("literal")?, lno, "literal")?;
                if lit == 0 {
                    return Err(parse_err(lno, "literal 0 is not a variable"));
                }
                dag.add_input(Some(1.0))
            }
            "T" => {
                let _var: u64 = parse_num(num("variable")?, lno, "variable")?;
                let lp: f64 = parse_num(num("log probability")?, lno, "log probability")?;
                if lp.is_nan() || lp > 0.0 {
                    return Err(parse_err(lno, format!("bad log probability {lp}")));
                }
                dag.add_input(Some(1.0))
            }
            _ => {
                let k: usize = parse_num(num("element count")?, lno, "element count")?;
                if k == 0 {
                    return Err(parse_err(lno, "decision node without elements"));
                }
                let mut terms = Vec::with_capacity(k);
                for _ in 0..k {
                    let p: u64 = parse_num(num("prime id")?, lno, "prime id")?;
                    let s: u64 = parse_num(num("sub id")?, lno, "sub id")?;
                    let lp: f64 = parse_num(num("log probability")?, lno, "log probability")?;
                    if lp.is_nan() || lp > 1e-9 {
                        return Err(parse_err(lno, format!("bad log probability {lp}")));
                    }
                    let lookup = |x: u64| {
                        ids.get(&x)
                            .copied()
                            .ok_or_else(|| parse_err(lno, format!("reference to undefined node {x}")))
                    };
                    let (p, s) = (lookup(p)?, lookup(s)?);
                    let theta = dag.add_input(Some(lp.exp()));
                    terms.push(dag.add_op(OpKind::Product, vec![p, s, theta]));
                }
                if terms.len() == 1 {
                    terms[0]
                } else {
                    dag.add_op(OpKind::Sum, terms)
                }
            }
        };
        if it.next().is_some() {
            return Err(parse_err(lno, "trailing fields"));
        }
        ids.insert(pid, node);
        count += 1;
    }

    if let Some((n, lno)) = declared {
        if n != count {
            return Err(parse_err(lno, format!("header declares {n} nodes, found {count}")));
        }
    }
    if dag.is_empty() {
        return Err(parse_err(1, "no circuit nodes"));
    }
    let consumers = dag.consumers();
    for id in dag.ids().collect::<Vec<_>>() {
        if consumers[id as usize].is_empty() {
            dag.mark_output(id);
        }
    }
    Ok(dag)
}

fn parse_num<T: std::str::FromStr>(w: &str, lno: usize, what: &str) -> Result<T, IngestError> {
    w.parse().map_err(|_| parse_err(lno, format!("bad {what} `{w}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_literal() {
        let d = parse_psdd("c one literal\npsdd 1\nL 0 0 1\n").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.outputs(), &[0]);
        let d = parse_psdd("psdd 1\nT 0 0 1 -0.69\n").unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn decision_with_two_elements() {
        let text = "psdd 5\nL 0 0 1\nL 1 0 -1\nL 2 2 2\nL 3 2 -2\nD 4 1 2 0 2 -0.3566749439 1 3 -1.2039728043\n";
        let d = parse_psdd(text).unwrap();
        d.validate().unwrap();
        // 4 literals + 2 parameters + 2 products + 1 sum
        assert_eq!(d.len(), 9);
        let sums: Vec<_> = d.nodes().iter().filter(|n| n.op == OpKind::Sum).collect();
        assert_eq!(sums.len(), 1);
        assert_eq!(sums[0].operands.len(), 2);
        for &o in &sums[0].operands {
            assert_eq!(d.node(o).op, OpKind::Product);
        }
        let v = crate::dag::evaluate_reference(&d, &d.default_inputs().unwrap()).unwrap();
        assert!((v[d.outputs()[0] as usize] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn errors_are_positioned() {
        assert_eq!(
            parse_psdd("psdd 1\nX 0 0 1\n"),
            Err(IngestError::UnsupportedLineKind { line: 2, kind: "X".into() })
        );
        assert!(matches!(parse_psdd("L 0 0\n"), Err(IngestError::Parse { line: 1, .. })));
        assert!(matches!(parse_psdd("L 0 0 1\nD 1 0 1 0 7 0.0\n"), Err(IngestError::Parse { line: 2, .. })));
        assert!(matches!(parse_psdd("psdd 3\nL 0 0 1\n"), Err(IngestError::Parse { line: 1, .. })));
    }
}
