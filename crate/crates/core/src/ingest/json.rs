use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::dag::{ComputeDag, Node, NodeId, OpKind};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonDag {
    nodes: Vec<JsonNode>,
    #[serde(default)]
    outputs: Vec<i64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    values: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonNode {
    id: i64,
    op: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    operands: Vec<i64>,
}

/// Parses `{"nodes":[{"id","op","operands"}],"outputs":[...],"values":{...}}`.
/// Ids may be any unique integers; they are renumbered densely in order of
/// appearance.
pub fn parse_json_dag(text: &str) -> Result<ComputeDag, IngestError> {
    let doc: JsonDag = serde_json::from_str(text).map_err(|e| IngestError::Schema(e.to_string()))?;
    let mut remap: HashMap<i64, NodeId> = HashMap::with_capacity(doc.nodes.len());
    for (i, n) in doc.nodes.iter().enumerate() {
        if remap.insert(n.id, i as NodeId).is_some() {
            return Err(IngestError::Schema(format!("duplicate node id {}", n.id)));
        }
    }
    let lookup = |id: i64, ctx: &str| {
        remap
            .get(&id)
            .copied()
            .ok_or_else(|| IngestError::Schema(format!("{ctx} references unknown node {id}")))
    };
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for n in &doc.nodes {
        let op = match n.op.as_str() {
            "input" => OpKind::Input,
            "sum" => OpKind::Sum,
            "product" => OpKind::Product,
            other => return Err(IngestError::Schema(format!("unknown op `{other}` on node {}", n.id))),
        };
        let operands = n
            .operands
            .iter()
            .map(|&o| lookup(o, &format!("node {}", n.id)))
            .collect::<Result<Vec<_>, _>>()?;
        nodes.push(Node { op, operands });
    }
    let outputs = doc
        .outputs
        .iter()
        .map(|&o| lookup(o, "outputs"))
        .collect::<Result<Vec<_>, _>>()?;
    let mut values = BTreeMap::new();
    for (k, v) in &doc.values {
        let id: i64 = k
            .parse()
            .map_err(|_| IngestError::Schema(format!("values key `{k}` is not an integer")))?;
        values.insert(lookup(id, "values")?, *v);
    }
    Ok(ComputeDag::from_parts(nodes, outputs, values))
}

pub fn write_json_dag(dag: &ComputeDag) -> String {
    let doc = JsonDag {
        nodes: dag
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| JsonNode {
                id: i as i64,
                op: n.op.name().to_string(),
                operands: n.operands.iter().map(|&o| o as i64).collect(),
            })
            .collect(),
        outputs: dag.outputs().iter().map(|&o| o as i64).collect(),
        values: dag.values().iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    };
    serde_json::to_string(&doc).expect("DAG serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let d = parse_json_dag(r#"{"nodes":[{"id":0,"op":"input"}],"outputs":[0]}"#).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.outputs(), &[0]);
    }

    #[test]
    fn unknown_op_is_named() {
        let err = parse_json_dag(r#"{"nodes":[{"id":0,"op":"divide"}],"outputs":[0]}"#).unwrap_err();
        match err {
            IngestError::Schema(msg) => assert!(msg.contains("divide"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sparse_ids_are_renumbered() {
        let d = parse_json_dag(
            r#"{"nodes":[{"id":10,"op":"input"},{"id":3,"op":"sum","operands":[10,10]}],"outputs":[3],"values":{"10":2.5}}"#,
        )
        .unwrap();
        assert_eq!(d.node(1).operands, vec![0, 0]);
        assert_eq!(d.values()[&0], 2.5);
        assert_eq!(parse_json_dag(&write_json_dag(&d)).unwrap(), d);
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(parse_json_dag("{"), Err(IngestError::Schema(_))));
        assert!(matches!(
            parse_json_dag(r#"{"nodes":[{"id":0,"op":"sum","operands":[4]}]}"#),
            Err(IngestError::Schema(_))
        ));
        assert!(matches!(
            parse_json_dag(r#"{"nodes":[{"id":0,"op":"input"},{"id":0,"op":"input"}]}"#),
            Err(IngestError::Schema(_))
        ));
    }
}
