//! Benchmark per-figure JSON record format. Key spellings match the published
//! files exactly, including `2-2-advanced-euqation-bracket`.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::{
    text, CaptionVariant, FigureCaptionRecord, FigureSpec, HumanFeedbackEntry,
    NormalizedCaptions, OriginalCaption, QualityProfile,
};
use crate::error::{Error, Result};
use crate::feedback::{FeedbackMetric, FeedbackScores};

const CONTAINS_SUBFIGURE: &str = "contains-subfigure";
const PAPER_ID: &str = "paper-ID";
const FIGURE_ID: &str = "figure-ID";
const FIGURE_TYPE: &str = "figure-type";
const ORIGINAL: &str = "0-originally-extracted";
const LOWERCASE: &str = "1-lowercase-and-token-and-remove-figure-index";
const NORMALIZED: &str = "2-normalized";
const BASIC_NUM: &str = "2-1-basic-num";
const ADVANCED: &str = "2-2-advanced-euqation-bracket";
const IMG_TEXT: &str = "Img-text";
const HUMAN_FEEDBACK: &str = "human-feedback";
const SCORE: &str = "score";
const TOKEN: &str = "token";
const CAPTION_PREPEND: &str = "caption-prepend";

// Extension keys written by this crate; ignored by other readers of the format.
const SYNTH_FIGURE: &str = "synthetic-figure";
const SYNTH_QUALITY: &str = "synthetic-quality";
const ACTUAL_FEEDBACK: &str = "actual-human-feedback";

const KNOWN_KEYS: [&str; 12] = [
    CONTAINS_SUBFIGURE,
    PAPER_ID,
    FIGURE_ID,
    FIGURE_TYPE,
    ORIGINAL,
    LOWERCASE,
    NORMALIZED,
    IMG_TEXT,
    HUMAN_FEEDBACK,
    SYNTH_FIGURE,
    SYNTH_QUALITY,
    ACTUAL_FEEDBACK,
];

fn take<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::schema(join(path, key), "missing mandatory field"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn as_str(v: &Value, field: &str) -> Result<String> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::schema(field, "expected a string"))
}

fn as_string_list(v: &Value, field: &str) -> Result<Vec<String>> {
    v.as_array()
        .ok_or_else(|| Error::schema(field, "expected an array of strings"))?
        .iter()
        .map(|x| as_str(x, field))
        .collect()
}

fn as_object<'a>(v: &'a Value, field: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::schema(field, "expected an object"))
}

fn parse_variant(v: &Value, field: &str) -> Result<CaptionVariant> {
    let obj = as_object(v, field)?;
    let caption = as_str(take(obj, "caption", field)?, &join(field, "caption"))?;
    let sentence = match obj.get("sentence") {
        Some(s) => as_string_list(s, &join(field, "sentence"))?,
        None => Vec::new(),
    };
    let token = match obj.get(TOKEN) {
        Some(t) => as_string_list(t, &join(field, TOKEN))?,
        None => Vec::new(),
    };
    Ok(CaptionVariant {
        caption,
        sentence,
        token,
    })
}

fn variant_value(v: &CaptionVariant) -> Value {
    let mut m = Map::new();
    m.insert("caption".into(), Value::String(v.caption.clone()));
    m.insert("sentence".into(), string_list(&v.sentence));
    m.insert(TOKEN.into(), string_list(&v.token));
    Value::Object(m)
}

fn string_list(xs: &[String]) -> Value {
    Value::Array(xs.iter().cloned().map(Value::String).collect())
}

fn parse_feedback_block(
    v: &Value,
) -> Result<(BTreeMap<FeedbackMetric, HumanFeedbackEntry>, Map<String, Value>)> {
    let obj = as_object(v, HUMAN_FEEDBACK)?;
    let mut entries = BTreeMap::new();
    let mut extra = Map::new();
    for (key, val) in obj {
        let Ok(metric) = key.parse::<FeedbackMetric>() else {
            extra.insert(key.clone(), val.clone());
            continue;
        };
        let path = join(HUMAN_FEEDBACK, key);
        let e = as_object(val, &path)?;
        let score_path = join(&path, SCORE);
        let score = take(e, SCORE, &path)?
            .as_f64()
            .ok_or_else(|| Error::schema(&score_path, "score is not numeric"))?;
        let token = e
            .get(TOKEN)
            .map(|t| as_str(t, &join(&path, TOKEN)))
            .transpose()?;
        let caption_prepend = e
            .get(CAPTION_PREPEND)
            .map(|t| as_str(t, &join(&path, CAPTION_PREPEND)))
            .transpose()?;
        entries.insert(
            metric,
            HumanFeedbackEntry {
                score,
                token,
                caption_prepend,
            },
        );
    }
    Ok((entries, extra))
}

/// Parses one benchmark record. Unknown top-level keys are kept in `extra`.
pub fn parse_benchmark_record(json_text: &str) -> Result<FigureCaptionRecord> {
    let value: Value = serde_json::from_str(json_text)?;
    let obj = as_object(&value, "<root>")?;

    let contains_subfigure = take(obj, CONTAINS_SUBFIGURE, "")?
        .as_bool()
        .ok_or_else(|| Error::schema(CONTAINS_SUBFIGURE, "expected a boolean"))?;
    let paper_id = as_str(take(obj, PAPER_ID, "")?, PAPER_ID)?;
    let figure_id = as_str(take(obj, FIGURE_ID, "")?, FIGURE_ID)?;
    let figure_type = as_str(take(obj, FIGURE_TYPE, "")?, FIGURE_TYPE)?;
    let original = match take(obj, ORIGINAL, "")? {
        Value::String(s) => OriginalCaption::Text(s.clone()),
        other => OriginalCaption::Variant(parse_variant(other, ORIGINAL)?),
    };
    let lowercase = parse_variant(take(obj, LOWERCASE, "")?, LOWERCASE)?;
    let img_text = as_string_list(take(obj, IMG_TEXT, "")?, IMG_TEXT)?;

    let normalized = obj
        .get(NORMALIZED)
        .map(|v| -> Result<NormalizedCaptions> {
            let n = as_object(v, NORMALIZED)?;
            let mut out = NormalizedCaptions::default();
            for (k, val) in n {
                match k.as_str() {
                    BASIC_NUM => out.basic_num = Some(parse_variant(val, &join(NORMALIZED, k))?),
                    ADVANCED => {
                        out.advanced_equation_bracket =
                            Some(parse_variant(val, &join(NORMALIZED, k))?)
                    }
                    _ => {
                        out.extra.insert(k.clone(), val.clone());
                    }
                }
            }
            Ok(out)
        })
        .transpose()?;

    let (human_feedback, human_feedback_extra) = match obj.get(HUMAN_FEEDBACK) {
        Some(v) => parse_feedback_block(v)?,
        None => (BTreeMap::new(), Map::new()),
    };

    let figure: Option<FigureSpec> = obj
        .get(SYNTH_FIGURE)
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()
        .map_err(|e| Error::schema(SYNTH_FIGURE, e.to_string()))?;
    let profile: Option<QualityProfile> = obj
        .get(SYNTH_QUALITY)
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()
        .map_err(|e| Error::schema(SYNTH_QUALITY, e.to_string()))?;
    let actual_feedback: Option<FeedbackScores> = obj
        .get(ACTUAL_FEEDBACK)
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()
        .map_err(|e| Error::schema(ACTUAL_FEEDBACK, e.to_string()))?;

    let extra = obj
        .iter()
        .filter(|(k, _)| !KNOWN_KEYS.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    Ok(FigureCaptionRecord {
        caption_tokens: text::tokenize(&lowercase.caption),
        figure_id,
        paper_id,
        figure_type,
        contains_subfigure,
        original,
        lowercase,
        normalized,
        img_text,
        human_feedback,
        human_feedback_extra,
        figure,
        profile,
        actual_feedback,
        extra,
    })
}

pub(crate) fn record_value(rec: &FigureCaptionRecord) -> Value {
    let mut m = Map::new();
    m.insert(CONTAINS_SUBFIGURE.into(), Value::Bool(rec.contains_subfigure));
    m.insert(PAPER_ID.into(), Value::String(rec.paper_id.clone()));
    m.insert(FIGURE_ID.into(), Value::String(rec.figure_id.clone()));
    m.insert(FIGURE_TYPE.into(), Value::String(rec.figure_type.clone()));
    m.insert(
        ORIGINAL.into(),
        match &rec.original {
            OriginalCaption::Text(s) => Value::String(s.clone()),
            OriginalCaption::Variant(v) => variant_value(v),
        },
    );
    m.insert(LOWERCASE.into(), variant_value(&rec.lowercase));
    if let Some(n) = &rec.normalized {
        let mut nm = Map::new();
        if let Some(v) = &n.basic_num {
            nm.insert(BASIC_NUM.into(), variant_value(v));
        }
        if let Some(v) = &n.advanced_equation_bracket {
            nm.insert(ADVANCED.into(), variant_value(v));
        }
        for (k, v) in &n.extra {
            nm.insert(k.clone(), v.clone());
        }
        m.insert(NORMALIZED.into(), Value::Object(nm));
    }
    m.insert(IMG_TEXT.into(), string_list(&rec.img_text));
    if !rec.human_feedback.is_empty() || !rec.human_feedback_extra.is_empty() {
        let mut hf = Map::new();
        for (metric, e) in &rec.human_feedback {
            let mut em = Map::new();
            em.insert(SCORE.into(), serde_json::json!(e.score));
            if let Some(t) = &e.token {
                em.insert(TOKEN.into(), Value::String(t.clone()));
            }
            if let Some(c) = &e.caption_prepend {
                em.insert(CAPTION_PREPEND.into(), Value::String(c.clone()));
            }
            hf.insert(metric.as_str().into(), Value::Object(em));
        }
        for (k, v) in &rec.human_feedback_extra {
            hf.insert(k.clone(), v.clone());
        }
        m.insert(HUMAN_FEEDBACK.into(), Value::Object(hf));
    }
    if let Some(f) = &rec.figure {
        m.insert(SYNTH_FIGURE.into(), serde_json::to_value(f).expect("figure serializes"));
    }
    if let Some(p) = &rec.profile {
        m.insert(SYNTH_QUALITY.into(), serde_json::to_value(p).expect("profile serializes"));
    }
    if let Some(a) = &rec.actual_feedback {
        m.insert(ACTUAL_FEEDBACK.into(), serde_json::to_value(a).expect("scores serialize"));
    }
    for (k, v) in &rec.extra {
        m.insert(k.clone(), v.clone());
    }
    Value::Object(m)
}

pub fn serialize_benchmark_record(rec: &FigureCaptionRecord) -> String {
    serde_json::to_string_pretty(&record_value(rec)).expect("record serializes")
}
