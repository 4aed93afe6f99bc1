//! File formats: `.packets.jsonl` (one `FramePacket` per line), `.graph.json`
//! and `.gt.json` (single documents).

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{FramePacket, SceneGraph};

fn parse_record<T: DeserializeOwned>(text: &str, record: usize) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse {
            record,
            field: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

/// Parses and validates one packet line. `record` is the zero-based line index.
pub fn parse_packet(line: &str, record: usize) -> Result<FramePacket> {
    let packet: FramePacket = parse_record(line, record)?;
    packet.validate().map_err(|e| Error::Parse {
        record,
        field: "<invariant>".into(),
        message: e.to_string(),
    })?;
    Ok(packet)
}

/// Reads a packet stream. Blank lines are skipped; record indices count them.
pub fn read_packets<R: BufRead>(reader: R) -> Result<Vec<FramePacket>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_packet(&line, i)?);
    }
    Ok(out)
}

pub fn read_packets_file(path: &Path) -> Result<Vec<FramePacket>> {
    let f = fs::File::open(path)?;
    read_packets(std::io::BufReader::new(f))
}

pub fn write_packets<W: Write>(mut w: W, packets: &[FramePacket]) -> Result<()> {
    for p in packets {
        serde_json::to_writer(&mut w, p).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn packets_to_string(packets: &[FramePacket]) -> String {
    let mut buf = Vec::new();
    write_packets(&mut buf, packets).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("domain types always serialize")
}

pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    parse_record(text, 0)
}

pub fn graph_from_json(text: &str) -> Result<SceneGraph> {
    let g: SceneGraph = from_json_str(text)?;
    Ok(g)
}

/// Writes `contents` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Graphviz description of a graph. Edges point from parent to child and are
/// labelled with their relation; nodes are grouped by kind.
pub fn to_dot(graph: &SceneGraph) -> String {
    use std::fmt::Write as _;

    use crate::model::{NodeKind, Relation};

    let mut out = String::from("digraph scene {\n  rankdir=TB;\n");
    for (kind, shape) in [
        (NodeKind::Object, "box"),
        (NodeKind::FunctionalCarrier, "ellipse"),
        (NodeKind::InteractiveUnit, "diamond"),
    ] {
        for n in graph.nodes.iter().filter(|n| n.kind == kind) {
            let label = n.category.replace('"', "\\\"");
            let _ = writeln!(
                out,
                "  n{} [label=\"{label} #{}\", shape={shape}];",
                n.id, n.id
            );
        }
    }
    for e in &graph.edges {
        let rel = match e.relation {
            Relation::Functional => "functional",
            Relation::CarrierOf => "carrier",
            Relation::UnitOf => "unit",
        };
        let _ = writeln!(out, "  n{} -> n{} [label=\"{rel}\"];", e.parent, e.child);
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn det(id: u32, kind: NodeKind, bbox: BBox2) -> Detection2D {
        Detection2D {
            id,
            frame_id: 4,
            bbox,
            category: "cabinet".into(),
            confidence: 0.9,
            kind,
            mask: Mask::from_rect(64, 48, &bbox),
            appearance: vec![0.25; 4],
            embedding: None,
            centroid3d: Some([0.1, 0.2, 1.5]),
            points: vec![[0.1, 0.2, 1.5]],
        }
    }

    fn packet() -> FramePacket {
        FramePacket {
            frame_id: 4,
            timestamp: 0.4,
            pose: Pose::identity(),
            intrinsics: Intrinsics {
                fx: 50.0,
                fy: 50.0,
                cx: 32.0,
                cy: 24.0,
                width: 64,
                height: 48,
            },
            detections: vec![
                det(0, NodeKind::Object, BBox2::new(2.0, 2.0, 40.0, 40.0)),
                det(
                    1,
                    NodeKind::InteractiveUnit,
                    BBox2::new(10.0, 10.0, 14.0, 12.0),
                ),
            ],
            edge_candidates: vec![EdgeCandidate2D {
                frame_id: 4,
                object_det: 0,
                fine_det: 1,
                s_det: 0.9,
                g_camc: 1.0,
                s_2d: Some(0.73),
            }],
            imap: InteractabilityMap::default(),
        }
    }

    #[test]
    fn empty_graph_roundtrips() {
        let g = SceneGraph::default();
        let back = graph_from_json(&to_json_string(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn packet_roundtrips() {
        let p = packet();
        let text = packets_to_string(std::slice::from_ref(&p));
        let back = read_packets(text.as_bytes()).unwrap();
        assert_eq!(back, vec![p]);
    }

    #[test]
    fn missing_detection_reference_is_a_parse_error() {
        let mut p = packet();
        p.edge_candidates[0].fine_det = 9;
        let text = packets_to_string(&[packet(), p]);
        match read_packets(text.as_bytes()) {
            Err(Error::Parse {
                record, message, ..
            }) => {
                assert_eq!(record, 1);
                assert!(message.contains("fine_det"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_names_field() {
        let mut v: serde_json::Value = serde_json::to_value(packet()).unwrap();
        v["detections"][1]["confidence"] = serde_json::json!("high");
        let line = v.to_string();
        match parse_packet(&line, 7) {
            Err(Error::Parse { record, field, .. }) => {
                assert_eq!(record, 7);
                assert_eq!(field, "detections[1].confidence");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
