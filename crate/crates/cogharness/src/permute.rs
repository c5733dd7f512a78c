//! Prompt permutation: instruction paraphrases crossed with data formats.
//!
//! A prompt has two parts, varied independently. Instructions explain the
//! task and contain a single data slot marker (`<<DATA>>` by default); data
//! formats are templates that serialize a stimulus row, with placeholders of
//! the form `(|column_name|)` replaced by the row's values. Crossing the
//! instruction variants with the data formats gives the experiment's prompt
//! variants — 3 x 10 = 30 in the default configuration.
//!
//! Ten data formats ship by default. They carry identical content and differ
//! only in separators, whitespace, and letter casing; the exact templates
//! are frozen as golden files under `golden/formats/`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default data slot marker inside instruction texts.
pub const DATA_SLOT_MARKER: &str = "<<DATA>>";

#[derive(Debug, Error, PartialEq)]
pub enum PermuteError {
    #[error("instruction variant {index} contains the data slot marker {count} times (need exactly once)")]
    MarkerCount { index: usize, count: usize },
    #[error("data format {format_id} has no placeholders")]
    NoPlaceholders { format_id: usize },
    #[error("data format {format_id} references unknown column `{column}`")]
    UnknownColumn { format_id: usize, column: String },
    #[error("data format ids must be unique; {0} repeats")]
    DuplicateFormatId(usize),
    #[error("variants {a} and {b} render to identical text")]
    DuplicateVariant { a: VariantId, b: VariantId },
    #[error("no value for placeholder `{0}`")]
    UnresolvedPlaceholder(String),
    #[error("unterminated placeholder starting at byte {0}")]
    UnterminatedPlaceholder(usize),
    #[error("prompt template needs at least one instruction variant and one data format")]
    Empty,
}

/// One data-format template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFormat {
    /// 1-based format index.
    pub id: usize,
    /// Template text with `(|column|)` placeholders.
    pub template: String,
    /// Human-readable summary of the separator/casing/whitespace choice.
    pub descriptor: String,
}

/// Identifier of one (paraphrase, format) pairing, e.g. `p0-f3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VariantId {
    /// 0-based index into the instruction variants (0 = original).
    pub paraphrase: usize,
    /// The paired data format's id.
    pub format: usize,
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}-f{}", self.paraphrase, self.format)
    }
}

impl VariantId {
    pub fn parse(s: &str) -> Option<Self> {
        let rest = s.strip_prefix('p')?;
        let (p, f) = rest.split_once("-f")?;
        Some(Self { paraphrase: p.parse().ok()?, format: f.parse().ok()? })
    }
}

/// One concrete prompt variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptVariant {
    pub variant_id: VariantId,
    /// The paraphrase text, marker still in place.
    pub instruction: String,
    /// Instruction with the marker replaced by the data-format template
    /// (placeholders intact). Distinctness of variants is judged on this.
    pub rendered_instruction: String,
}

/// Instruction paraphrases plus data formats for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    /// Ordered: the original first, then paraphrases.
    pub instruction_variants: Vec<String>,
    pub data_formats: Vec<DataFormat>,
    pub data_slot_marker: String,
}

impl PromptTemplate {
    pub fn new(instruction_variants: Vec<String>, data_formats: Vec<DataFormat>) -> Self {
        Self { instruction_variants, data_formats, data_slot_marker: DATA_SLOT_MARKER.to_string() }
    }

    /// Check structural invariants against the stimuli columns: each
    /// instruction carries the marker exactly once, each format has at least
    /// one placeholder and references only known columns, format ids are
    /// unique.
    pub fn validate(&self, columns: &[String]) -> Result<(), PermuteError> {
        if self.instruction_variants.is_empty() || self.data_formats.is_empty() {
            return Err(PermuteError::Empty);
        }
        for (index, instruction) in self.instruction_variants.iter().enumerate() {
            let count = instruction.matches(&self.data_slot_marker).count();
            if count != 1 {
                return Err(PermuteError::MarkerCount { index, count });
            }
        }
        let mut seen = BTreeSet::new();
        for format in &self.data_formats {
            if !seen.insert(format.id) {
                return Err(PermuteError::DuplicateFormatId(format.id));
            }
            let placeholders = placeholders_in(&format.template)?;
            if placeholders.is_empty() {
                return Err(PermuteError::NoPlaceholders { format_id: format.id });
            }
            for column in placeholders {
                if !columns.iter().any(|c| c == &column) {
                    return Err(PermuteError::UnknownColumn { format_id: format.id, column });
                }
            }
        }
        Ok(())
    }

    /// The instruction text for dialogue use: marker removed, edges trimmed.
    /// Used as the system message when stimuli arrive as separate user turns.
    pub fn instruction_without_marker(&self, paraphrase: usize) -> String {
        self.instruction_variants[paraphrase].replace(&self.data_slot_marker, "").trim().to_string()
    }

    pub fn format(&self, id: usize) -> Option<&DataFormat> {
        self.data_formats.iter().find(|f| f.id == id)
    }
}

/// Cross instruction variants with data formats, paraphrase-major.
///
/// Every pairing must render to distinct text; a collision signals
/// degenerate templates (e.g. two identical paraphrases) and is an error.
pub fn enumerate_variants(template: &PromptTemplate) -> Result<Vec<PromptVariant>, PermuteError> {
    if template.instruction_variants.is_empty() || template.data_formats.is_empty() {
        return Err(PermuteError::Empty);
    }
    let mut variants = Vec::with_capacity(template.instruction_variants.len() * template.data_formats.len());
    let mut seen: BTreeMap<String, VariantId> = BTreeMap::new();
    for (p, instruction) in template.instruction_variants.iter().enumerate() {
        for format in &template.data_formats {
            let variant_id = VariantId { paraphrase: p, format: format.id };
            let rendered = instruction.replace(&template.data_slot_marker, &format.template);
            if let Some(&earlier) = seen.get(&rendered) {
                return Err(PermuteError::DuplicateVariant { a: earlier, b: variant_id });
            }
            seen.insert(rendered.clone(), variant_id);
            variants.push(PromptVariant { variant_id, instruction: instruction.clone(), rendered_instruction: rendered });
        }
    }
    Ok(variants)
}

/// Replace every `(|column|)` placeholder with the row's value.
pub fn render_data(format: &DataFormat, row: &BTreeMap<String, String>) -> Result<String, PermuteError> {
    substitute(&format.template, row)
}

/// Full single-message prompt: the variant's instruction with the data slot
/// filled by the rendered stimulus.
pub fn render_prompt(
    variant: &PromptVariant,
    format: &DataFormat,
    row: &BTreeMap<String, String>,
    marker: &str,
) -> Result<String, PermuteError> {
    debug_assert_eq!(variant.variant_id.format, format.id, "variant paired with wrong format");
    let data = render_data(format, row)?;
    Ok(variant.instruction.replace(marker, &data))
}

fn substitute(template: &str, row: &BTreeMap<String, String>) -> Result<String, PermuteError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    loop {
        match rest.find("(|") {
            None => {
                out.push_str(rest);
                return Ok(out);
            }
            Some(start) => {
                out.push_str(&rest[..start]);
                let after = &rest[start + 2..];
                let end = after
                    .find("|)")
                    .ok_or_else(|| PermuteError::UnterminatedPlaceholder(template.len() - rest.len() + start))?;
                let column = &after[..end];
                let value = row.get(column).ok_or_else(|| PermuteError::UnresolvedPlaceholder(column.to_string()))?;
                out.push_str(value);
                rest = &after[end + 2..];
            }
        }
    }
}

/// Column names referenced by a template, in order of first appearance.
pub fn placeholders_in(template: &str) -> Result<Vec<String>, PermuteError> {
    let mut out = Vec::new();
    let mut rest = template;
    let mut consumed = 0usize;
    while let Some(start) = rest.find("(|") {
        let after = &rest[start + 2..];
        let end = after.find("|)").ok_or(PermuteError::UnterminatedPlaceholder(consumed + start))?;
        let column = after[..end].to_string();
        if !out.contains(&column) {
            out.push(column);
        }
        consumed += start + 2 + end + 2;
        rest = &after[end + 2..];
    }
    Ok(out)
}

type StyleFn = fn(&[String]) -> String;

/// The ten default data formats over the given stimulus columns, varying
/// punctuation, whitespace, and letter casing. A trailing answer label with
/// an empty slot cues the model's reply.
pub fn default_data_formats(columns: &[String]) -> Vec<DataFormat> {
    let styles: [(&str, StyleFn); 10] = [
        ("Label: value, space-separated (original)", style_inline_colon),
        ("Label: value, newline-separated", style_colon_newline),
        ("Label: value with <sep> token", style_sep_token),
        ("Label - value. period-separated", style_dash_period),
        ("Label\\tvalue. tab after label", style_tab),
        ("UPPERCASE- value, newline-separated", style_uppercase),
        ("lowercase:: value -- double-dash-separated", style_double_colon),
        ("lowercase - value ,  comma-separated", style_comma),
        ("Label newline, indented value", style_indented),
        ("Label - value, newline-separated", style_dash_newline),
    ];
    styles
        .iter()
        .enumerate()
        .map(|(i, (descriptor, build))| DataFormat { id: i + 1, template: build(columns), descriptor: descriptor.to_string() })
        .collect()
}

const ANSWER_LABEL: &str = "Answer";

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

fn fields_with_answer(columns: &[String]) -> Vec<(String, Option<String>)> {
    let mut fields: Vec<(String, Option<String>)> =
        columns.iter().map(|c| (c.clone(), Some(format!("(|{c}|)")))).collect();
    fields.push((ANSWER_LABEL.to_string(), None));
    fields
}

fn join_fields(
    columns: &[String],
    joiner: &str,
    label_case: fn(&str) -> String,
    render: fn(&str, Option<&str>) -> String,
) -> String {
    fields_with_answer(columns)
        .iter()
        .map(|(label, value)| render(&label_case(label), value.as_deref()))
        .collect::<Vec<_>>()
        .join(joiner)
}

fn style_inline_colon(columns: &[String]) -> String {
    join_fields(columns, " ", capitalize, |l, v| match v {
        Some(v) => format!("{l}: {v}"),
        None => format!("{l}:"),
    })
}

fn style_colon_newline(columns: &[String]) -> String {
    join_fields(columns, "\n", capitalize, |l, v| match v {
        Some(v) => format!("{l}: {v}"),
        None => format!("{l}:"),
    })
}

fn style_sep_token(columns: &[String]) -> String {
    join_fields(columns, " <sep> ", capitalize, |l, v| match v {
        Some(v) => format!("{l}: {v}"),
        None => format!("{l}:"),
    })
}

fn style_dash_period(columns: &[String]) -> String {
    join_fields(columns, " ", capitalize, |l, v| match v {
        Some(v) => format!("{l} - {v}."),
        None => format!("{l} -"),
    })
}

fn style_tab(columns: &[String]) -> String {
    join_fields(columns, " ", capitalize, |l, v| match v {
        Some(v) => format!("{l}\t{v}."),
        None => format!("{l}\t"),
    })
}

fn style_uppercase(columns: &[String]) -> String {
    join_fields(columns, "\n", |s| s.to_uppercase(), |l, v| match v {
        Some(v) => format!("{l}- {v}"),
        None => format!("{l}-"),
    })
}

fn style_double_colon(columns: &[String]) -> String {
    join_fields(columns, " -- ", |s| s.to_lowercase(), |l, v| match v {
        Some(v) => format!("{l}:: {v}"),
        None => format!("{l}::"),
    })
}

fn style_comma(columns: &[String]) -> String {
    join_fields(columns, " ,  ", |s| s.to_lowercase(), |l, v| match v {
        Some(v) => format!("{l} - {v}"),
        None => format!("{l} -"),
    })
}

fn style_indented(columns: &[String]) -> String {
    join_fields(columns, "\n", capitalize, |l, v| match v {
        Some(v) => format!("{l}\n\t{v}"),
        None => format!("{l}\n\t"),
    })
}

fn style_dash_newline(columns: &[String]) -> String {
    join_fields(columns, "\n", capitalize, |l, v| match v {
        Some(v) => format!("{l} - {v}"),
        None => format!("{l} -"),
    })
}

/// Normalization used to check that formats differ only in separators,
/// whitespace, and casing: lowercase, drop the `<sep>` separator token, then
/// strip everything non-alphanumeric.
pub fn normalized_content(text: &str) -> String {
    text.to_lowercase().replace("<sep>", "").chars().filter(|c| c.is_alphanumeric()).collect()
}
