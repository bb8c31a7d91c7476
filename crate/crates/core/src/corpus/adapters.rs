//! Record-level adapters for the benchmark dialogue datasets.
//!
//! Accepted record shapes (unknown fields are ignored everywhere):
//!
//! * `meddialog_cn`: an array of strings prefixed `病人：`/`患者：` or `医生：`,
//!   or an object with such an array under `dialogue`, `utterances` or
//!   `content` and an optional `id`. Unprefixed lines continue the previous
//!   speaker's message.
//! * `imcs_v2`: an object with `dialogue: [{speaker: "患者"|"医生", sentence}]`,
//!   an optional `self_report` (prepended as the opening patient message) and
//!   optional `diagnosis`. Usually keyed by example id at the top level.
//! * `chip_mdcfnpc`: an object with `dialog_id` and
//!   `dialog_info: [{sender: "患者"|"医生", text}]`.
//! * `meddg`: an array of `{id: "Patients"|"Doctor", Sentence}` or an object
//!   holding that array under `dialogue`/`dialog`.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::native::RawConversation;
use super::reader::{CorpusFormat, RawRecord};
use super::{Conversation, Speaker};

type Turns = Vec<(Speaker, String)>;

pub(crate) fn parse_record(
    format: CorpusFormat,
    record: RawRecord,
    index: usize,
) -> Result<Conversation, String> {
    if format == CorpusFormat::Native {
        let raw: RawConversation = match record {
            RawRecord::Line(line) => serde_json::from_str(&line),
            RawRecord::Value(_, value) => serde_json::from_value(value),
        }
        .map_err(|e| format!("invalid native record: {e}"))?;
        return raw.into_conversation().map_err(|e| e.to_string());
    }

    let (key, value) = match record {
        RawRecord::Line(line) => (
            None,
            serde_json::from_str::<Value>(&line).map_err(|e| format!("invalid JSON: {e}"))?,
        ),
        RawRecord::Value(key, value) => (key, value),
    };

    let mut meta = BTreeMap::new();
    let (id, turns) = match format {
        CorpusFormat::MeddialogCn => meddialog_cn(&value)?,
        CorpusFormat::ImcsV2 => imcs_v2(&value, &mut meta)?,
        CorpusFormat::ChipMdcfnpc => chip_mdcfnpc(&value)?,
        CorpusFormat::Meddg => meddg(&value)?,
        CorpusFormat::Native => unreachable!(),
    };
    let id = id
        .or(key)
        .unwrap_or_else(|| format!("{}-{index}", format.name()));
    let turns = turns
        .into_iter()
        .map(|(speaker, text)| (speaker, to_full_width_punct(&text)));
    Conversation::assemble(id, format.name(), turns, meta).map_err(|e| e.to_string())
}

fn id_field(obj: &Map<String, Value>, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| match obj.get(*k)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    })
}

fn str_field<'a>(obj: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| obj.get(*k)?.as_str())
}

fn array_field<'a>(value: &'a Value, keys: &[&str]) -> Option<&'a Vec<Value>> {
    match value {
        Value::Array(items) => Some(items),
        Value::Object(obj) => keys.iter().find_map(|k| obj.get(*k)?.as_array()),
        _ => None,
    }
}

fn speaker_label(label: &str) -> Option<Speaker> {
    match label.trim() {
        "患者" | "病人" | "病人：" | "患者：" | "Patient" | "Patients" | "patient" => {
            Some(Speaker::Patient)
        }
        "医生" | "医生：" | "Doctor" | "Doctors" | "doctor" => Some(Speaker::Doctor),
        _ => None,
    }
}

fn meddialog_cn(value: &Value) -> Result<(Option<String>, Turns), String> {
    let lines = array_field(value, &["dialogue", "utterances", "content"])
        .ok_or("expected an array of prefixed lines")?;
    let id = value.as_object().and_then(|o| id_field(o, &["id", "dialogue_id"]));
    let mut turns: Turns = Vec::new();
    for line in lines.iter().filter_map(Value::as_str) {
        match split_prefixed(line) {
            Some((speaker, text)) => turns.push((speaker, text.to_string())),
            None => {
                if let Some(last) = turns.last_mut() {
                    last.1.push(' ');
                    last.1.push_str(line);
                }
            }
        }
    }
    Ok((id, turns))
}

fn split_prefixed(line: &str) -> Option<(Speaker, &str)> {
    let line = line.trim_start();
    for (prefix, speaker) in [
        ("病人", Speaker::Patient),
        ("患者", Speaker::Patient),
        ("医生", Speaker::Doctor),
    ] {
        if let Some(rest) = line.strip_prefix(prefix) {
            if let Some(text) = rest.strip_prefix('：').or_else(|| rest.strip_prefix(':')) {
                return Some((speaker, text));
            }
        }
    }
    None
}

fn labelled_turns(items: &[Value], speaker_keys: &[&str], text_keys: &[&str]) -> Turns {
    items
        .iter()
        .filter_map(|item| {
            let obj = item.as_object()?;
            let speaker = speaker_label(str_field(obj, speaker_keys)?)?;
            let text = str_field(obj, text_keys)?;
            Some((speaker, text.to_string()))
        })
        .collect()
}

fn imcs_v2(value: &Value, meta: &mut BTreeMap<String, String>) -> Result<(Option<String>, Turns), String> {
    let obj = value.as_object().ok_or("expected an object")?;
    let dialogue = obj
        .get("dialogue")
        .and_then(Value::as_array)
        .ok_or("missing `dialogue` array")?;
    let mut turns = Vec::new();
    if let Some(report) = str_field(obj, &["self_report"]) {
        turns.push((Speaker::Patient, report.to_string()));
    }
    turns.extend(labelled_turns(dialogue, &["speaker"], &["sentence", "text"]));
    if let Some(diagnosis) = str_field(obj, &["diagnosis"]) {
        meta.insert("diagnosis".to_string(), diagnosis.to_string());
    }
    Ok((id_field(obj, &["example_id", "id"]), turns))
}

fn chip_mdcfnpc(value: &Value) -> Result<(Option<String>, Turns), String> {
    let obj = value.as_object().ok_or("expected an object")?;
    let info = obj
        .get("dialog_info")
        .and_then(Value::as_array)
        .ok_or("missing `dialog_info` array")?;
    Ok((
        id_field(obj, &["dialog_id", "id"]),
        labelled_turns(info, &["sender", "speaker"], &["text", "sentence"]),
    ))
}

fn meddg(value: &Value) -> Result<(Option<String>, Turns), String> {
    let items = array_field(value, &["dialogue", "dialog"]).ok_or("expected an array of turns")?;
    let id = value.as_object().and_then(|o| id_field(o, &["id", "dialog_id"]));
    Ok((id, labelled_turns(items, &["id", "speaker"], &["Sentence", "sentence", "text"])))
}

fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'
        | '\u{3400}'..='\u{4DBF}'
        | '\u{F900}'..='\u{FAFF}'
        | '\u{3000}'..='\u{303F}'
        | '\u{FF00}'..='\u{FFEF}')
}

/// Half-width punctuation directly after a CJK character becomes full-width.
/// ASCII context (URLs, decimals, English) is left alone.
pub(crate) fn to_full_width_punct(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev: Option<char> = None;
    for c in text.chars() {
        let mapped = match c {
            ',' => '，',
            '?' => '？',
            '!' => '！',
            ':' => '：',
            ';' => '；',
            '(' => '（',
            ')' => '）',
            _ => c,
        };
        let c = if mapped != c && prev.is_some_and(is_cjk) {
            mapped
        } else {
            c
        };
        out.push(c);
        prev = Some(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn parse(format: CorpusFormat, value: Value) -> Result<Conversation, String> {
        parse_record(format, RawRecord::Value(None, value), 7)
    }

    #[test]
    fn punctuation_is_widened_only_after_cjk() {
        assert_eq!(to_full_width_punct("有痰吗?"), "有痰吗？");
        assert_eq!(to_full_width_punct("头疼,发烧!"), "头疼，发烧！");
        assert_eq!(to_full_width_punct("see http://a.b, ok?"), "see http://a.b, ok?");
        assert_eq!(to_full_width_punct("体温38.5度"), "体温38.5度");
    }

    #[test]
    fn meddialog_prefixed_lines() {
        let conv = parse(
            CorpusFormat::MeddialogCn,
            json!({"id": "m1", "dialogue": ["病人：孩子咳嗽", "三天了", "医生:有痰吗?"]}),
        )
        .unwrap();
        assert_eq!(conv.id(), "m1");
        assert_eq!(conv.utterances()[0].text(), "孩子咳嗽 三天了");
        assert_eq!(conv.utterances()[1].text(), "有痰吗？");
        assert_eq!(conv.source(), "meddialog_cn");
    }

    #[test]
    fn imcs_self_report_opens_dialogue() {
        let conv = parse_record(
            CorpusFormat::ImcsV2,
            RawRecord::Value(
                Some("10001".into()),
                json!({
                    "self_report": "宝宝发烧两天",
                    "diagnosis": "上呼吸道感染",
                    "dialogue": [
                        {"speaker": "医生", "sentence": "体温多少?"},
                        {"speaker": "患者", "sentence": "38度"},
                        {"speaker": "医生", "sentence": "建议物理降温"}
                    ]
                }),
            ),
            0,
        )
        .unwrap();
        assert_eq!(conv.id(), "10001");
        assert_eq!(conv.utterances().len(), 4);
        assert_eq!(conv.meta()["diagnosis"], "上呼吸道感染");
    }

    #[test]
    fn imcs_without_self_report_starting_with_doctor_is_rejected() {
        let err = parse(
            CorpusFormat::ImcsV2,
            json!({"dialogue": [{"speaker": "医生", "sentence": "你好"}, {"speaker": "患者", "sentence": "嗯"}]}),
        );
        assert!(err.is_err());
    }

    #[test]
    fn chip_dialog_info() {
        let conv = parse(
            CorpusFormat::ChipMdcfnpc,
            json!({"dialog_id": 42, "dialog_info": [
                {"sender": "患者", "text": "胃疼", "ner": []},
                {"sender": "医生", "text": "多久了"}
            ]}),
        )
        .unwrap();
        assert_eq!(conv.id(), "42");
    }

    #[test]
    fn meddg_turn_array_gets_positional_id() {
        let conv = parse(
            CorpusFormat::Meddg,
            json!([
                {"id": "Patients", "Sentence": "肚子疼", "Symptom": ["腹痛"]},
                {"id": "Doctor", "Sentence": "拉肚子吗?"}
            ]),
        )
        .unwrap();
        assert_eq!(conv.id(), "meddg-7");
    }

    #[test]
    fn wrong_shape_is_an_error_not_a_panic() {
        for format in [
            CorpusFormat::MeddialogCn,
            CorpusFormat::ImcsV2,
            CorpusFormat::ChipMdcfnpc,
            CorpusFormat::Meddg,
        ] {
            assert!(parse(format, json!(3)).is_err());
            assert!(parse(format, json!({"x": null})).is_err());
        }
    }
}
