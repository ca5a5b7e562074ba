//! Model checkpoints: the layer-stack format with a `concepts` line after the header.
//! Names are percent-encoded (`%` → `%25`, whitespace → `%20`/`%09`) so the line stays
//! space-separated.

use super::ConceptBottleneckModel;
use crate::nn::checkpoint::{write_layer_blocks, CheckpointLines, MAGIC};
use crate::Result;

pub fn encode_concept_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.chars() {
        match c {
            '%' => out.push_str("%25"),
            ' ' => out.push_str("%20"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            c => out.push(c),
        }
    }
    out
}

pub fn decode_concept_name(encoded: &str) -> Option<String> {
    let mut out = String::with_capacity(encoded.len());
    let mut rest = encoded;
    while let Some(pos) = rest.find('%') {
        out.push_str(&rest[..pos]);
        let code = rest.get(pos + 1..pos + 3)?;
        out.push(match code {
            "25" => '%',
            "20" => ' ',
            "09" => '\t',
            "0A" => '\n',
            "0D" => '\r',
            _ => return None,
        });
        rest = &rest[pos + 3..];
    }
    out.push_str(rest);
    Some(out)
}

pub(super) fn write(model: &ConceptBottleneckModel) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str("concepts");
    for name in model.concept_names() {
        out.push(' ');
        out.push_str(&encode_concept_name(name));
    }
    out.push('\n');
    let layers: Vec<_> = model.layers().cloned().collect();
    write_layer_blocks(&mut out, &layers);
    out
}

pub(super) fn read(text: &str, source: &str) -> Result<ConceptBottleneckModel> {
    let mut lines = CheckpointLines::new(text, source);
    lines.expect_magic()?;
    let (n, line) = lines.next_line()?;
    let names = match line.strip_prefix("concepts") {
        Some(rest) => rest
            .split_whitespace()
            .map(|t| {
                decode_concept_name(t).ok_or_else(|| lines.err(n, format!("bad concept name '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?,
        None => return Err(lines.err(n, "expected 'concepts ...' line")),
    };
    let mut layers = lines.read_layer_blocks()?;
    lines.expect_end()?;
    if layers.len() < 2 {
        return Err(lines.err(n, "model checkpoint needs explain and decision layers"));
    }
    let decision = layers.pop().expect("len >= 2");
    let explain = layers.pop().expect("len >= 2");
    ConceptBottleneckModel::from_parts(layers, explain, decision, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn names_with_spaces_survive() {
        for name in ["Suspicious Items", "100% odd", "tab\there", "plain"] {
            let enc = encode_concept_name(name);
            assert!(!enc.contains(' '));
            assert_eq!(decode_concept_name(&enc).unwrap(), name);
        }
        assert!(decode_concept_name("bad%ZZ").is_none());
        assert!(decode_concept_name("bad%2").is_none());
    }

    #[test]
    fn model_round_trip() {
        let names = vec!["Suspicious Items".to_string(), "Suspicious Payment".to_string()];
        let model =
            ConceptBottleneckModel::new(5, &[4, 3], Activation::ReLU, names, 2, 17).unwrap();
        let text = model.to_checkpoint_string();
        assert!(text.starts_with("CBX-CKPT v1\nconcepts Suspicious%20Items Suspicious%20Payment\n4\n"));
        let back = ConceptBottleneckModel::from_checkpoint_str(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_checkpoint_string(), text);
    }

    #[test]
    fn model_without_trunk_round_trips() {
        let model = ConceptBottleneckModel::new(
            3,
            &[],
            Activation::ReLU,
            vec!["a".into(), "b".into()],
            3,
            2,
        )
        .unwrap();
        let back = ConceptBottleneckModel::from_checkpoint_str(&model.to_checkpoint_string()).unwrap();
        assert_eq!(back, model);
    }
}
