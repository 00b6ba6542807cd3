//! Prompt construction and response parsing for the wire predictor.

use serde_json::Value;

use super::{
    CandidateRecord, InteractionCandidate, PastInteraction, PredictError, PredictorConfig,
};
use crate::scene::Granularity;

/// Version tag of the prompt template; recorded in run manifests.
pub const PROMPT_VERSION: &str = "v1";

const RESPONSE_SCHEMA: &str = r#"{"predictions": [{"object": string, "action": string, "probability": number in (0, 1], "duration_s": number > 0, "reasoning": string}]}"#;

/// Render the prediction prompt (template `v1`). Pure: identical inputs
/// give identical text.
pub fn build_prompt(
    scene_text: &str,
    past: &[PastInteraction],
    assumed_future: &[InteractionCandidate],
    config: &PredictorConfig,
) -> String {
    let mut p = String::new();
    p.push_str("You observe a single person in an indoor environment.\n");
    p.push_str(scene_text);
    p.push_str("\n\n");

    if past.is_empty() {
        p.push_str("There were no previous interactions observed.\n");
    } else {
        p.push_str("Previous interactions of the person with objects, oldest first:\n");
        for i in past {
            p.push_str(&format!(
                "- {}: {} ({:.1} s)\n",
                i.object, i.action, i.duration_s
            ));
        }
    }

    if !assumed_future.is_empty() {
        p.push_str("Assume the person will do these interactions next, in order:\n");
        for c in assumed_future {
            p.push_str(&format!(
                "- {}: {} ({:.1} s)\n",
                c.target.as_str(),
                c.action,
                c.duration_s
            ));
        }
    }

    let reference = match config.granularity {
        Granularity::Semantic => {
            "Refer to each object by its semantic class exactly as it is named in the environment description."
        }
        Granularity::Instance => {
            "Refer to each object by its unique instance label exactly as it is named in the environment description."
        }
    };
    p.push_str(&format!(
        "\nPredict the {} most likely interactions the person will engage in after that. {}\n\
         For each interaction give the probability of it happening next (a number in (0, 1]), \
         the estimated duration in seconds, and a short reasoning.\n\
         Respond with JSON only, matching this schema exactly:\n{}\n\
         List the predictions most likely first.\n",
        config.width, reference, RESPONSE_SCHEMA
    ));
    p
}

/// Follow-up prompt sent once after a malformed reply.
pub(super) fn repair_prompt(detail: &str) -> String {
    format!(
        "Your previous reply could not be parsed: {detail}. \
         Reply again with ONLY a JSON document matching this schema exactly:\n{RESPONSE_SCHEMA}"
    )
}

/// Parse a model reply into candidates.
///
/// Accepts the documented schema as either `{"predictions": [...]}` or a
/// bare candidate array, strips markdown code fences, and tolerates prose
/// around the JSON document. Anything violating the candidate invariants is
/// rejected.
pub fn parse_response(
    raw: &str,
    granularity: Granularity,
) -> Result<Vec<InteractionCandidate>, PredictError> {
    let body = extract_json_text(raw);
    let value: Value = serde_json::from_str(body.trim()).map_err(|e| PredictError::Format {
        detail: format!("not valid JSON: {e}"),
        raw: raw.to_string(),
    })?;
    let list = match &value {
        Value::Array(_) => value.clone(),
        Value::Object(map) => map
            .get("predictions")
            .cloned()
            .ok_or_else(|| PredictError::Format {
                detail: "missing 'predictions' array".to_string(),
                raw: raw.to_string(),
            })?,
        _ => {
            return Err(PredictError::Format {
                detail: "expected an object or array".to_string(),
                raw: raw.to_string(),
            })
        }
    };
    let records: Vec<CandidateRecord> =
        serde_json::from_value(list).map_err(|e| PredictError::Format {
            detail: format!("candidate list does not match schema: {e}"),
            raw: raw.to_string(),
        })?;
    let candidates: Vec<InteractionCandidate> = records
        .into_iter()
        .map(|r| r.into_candidate(granularity))
        .collect();
    super::validate_candidates(&candidates, raw)?;
    Ok(candidates)
}

/// Pull the JSON document out of a possibly fenced / chatty reply.
fn extract_json_text(raw: &str) -> &str {
    let trimmed = raw.trim();
    if let Some(fenced) = extract_fenced(trimmed) {
        return fenced;
    }
    // Fall back to the outermost braces/brackets (whichever opens first)
    // to drop surrounding commentary.
    let brace = trimmed.find('{');
    let bracket = trimmed.find('[');
    let (open, close) = match (brace, bracket) {
        (Some(b), Some(k)) if k < b => (Some(k), trimmed.rfind(']')),
        (_, Some(k)) if brace.is_none() => (Some(k), trimmed.rfind(']')),
        (Some(b), _) => (Some(b), trimmed.rfind('}')),
        _ => (None, None),
    };
    if let (Some(start), Some(end)) = (open, close) {
        if start < end {
            return &trimmed[start..=end];
        }
    }
    trimmed
}

fn extract_fenced(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    // Skip an optional language tag up to the first newline.
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(body[..end].trim())
}
