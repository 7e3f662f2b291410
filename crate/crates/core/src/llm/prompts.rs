use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    KeywordExtraction,
    ChargePrejudge,
    AuditorItem,
    AuditorFinal,
    SentencingJson,
    Verdict,
    /// Build-time: derive diagnostic checklist items from an article.
    ChecklistGeneration,
    /// Build-time: summarize the cases of one community.
    CommunitySummary,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::KeywordExtraction,
        TemplateId::ChargePrejudge,
        TemplateId::AuditorItem,
        TemplateId::AuditorFinal,
        TemplateId::SentencingJson,
        TemplateId::Verdict,
        TemplateId::ChecklistGeneration,
        TemplateId::CommunitySummary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::KeywordExtraction => "keyword_extraction",
            TemplateId::ChargePrejudge => "charge_prejudge",
            TemplateId::AuditorItem => "auditor_item",
            TemplateId::AuditorFinal => "auditor_final",
            TemplateId::SentencingJson => "sentencing_json",
            TemplateId::Verdict => "verdict",
            TemplateId::ChecklistGeneration => "checklist_generation",
            TemplateId::CommunitySummary => "community_summary",
        }
    }

    pub fn template(self) -> PromptTemplate {
        let (system, user) = match self {
            TemplateId::KeywordExtraction => (KEYWORD_SYSTEM, "Case: {case_text}"),
            TemplateId::ChargePrejudge => (PREJUDGE_SYSTEM, "Case: {case_text}"),
            TemplateId::AuditorItem => (
                AUDITOR_ITEM_SYSTEM,
                "law: {law_item}, related: {related}\nelement: {element}, case: {case}",
            ),
            TemplateId::AuditorFinal => (
                AUDITOR_FINAL_SYSTEM,
                "case: {case}, law: {law}\ntrue_list: {true_list}, false_list: {false_list}",
            ),
            TemplateId::SentencingJson => (
                SENTENCING_SYSTEM,
                "Context: {context_list}, Candidate charges: {candidate_charges}, Case: {case_description}",
            ),
            TemplateId::Verdict => (VERDICT_SYSTEM, "Context: {context_list}, Case: {case_description}"),
            TemplateId::ChecklistGeneration => (
                CHECKLIST_SYSTEM,
                "law: {law_item}, related: {related}",
            ),
            TemplateId::CommunitySummary => (SUMMARY_SYSTEM, "cases: {case_features}"),
        };
        PromptTemplate {
            id: self,
            system,
            user,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template}: slot {{{slot}}} is unbound")]
    UnboundSlot { template: TemplateId, slot: String },
    #[error("template {template}: no slot named {{{slot}}}")]
    UnknownSlot { template: TemplateId, slot: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub system: &'static str,
    pub user: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub template_id: TemplateId,
    pub system: String,
    pub user: String,
}

fn slot_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("valid slot regex"))
}

impl PromptTemplate {
    /// Slot names in order of first appearance.
    pub fn slots(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for text in [self.system, self.user] {
            for c in slot_pattern().captures_iter(text) {
                let name = c.get(1).expect("group").as_str();
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }

    /// Substitutes every `{slot}` in one pass; substituted values are not rescanned.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<RenderedPrompt, TemplateError> {
        let slots = self.slots();
        let bound: BTreeMap<&str, &str> = values.iter().copied().collect();
        if let Some((name, _)) = values.iter().find(|(k, _)| !slots.contains(k)) {
            return Err(TemplateError::UnknownSlot {
                template: self.id,
                slot: (*name).to_owned(),
            });
        }
        if let Some(missing) = slots.iter().find(|s| !bound.contains_key(*s)) {
            return Err(TemplateError::UnboundSlot {
                template: self.id,
                slot: (*missing).to_owned(),
            });
        }
        let fill = |text: &str| {
            slot_pattern()
                .replace_all(text, |c: &regex::Captures<'_>| bound[&c[1]].to_owned())
                .into_owned()
        };
        Ok(RenderedPrompt {
            template_id: self.id,
            system: fill(self.system),
            user: fill(self.user),
        })
    }
}

const KEYWORD_SYSTEM: &str = r#"Task Definitions: Extract legal keywords from a criminal case description and classify them into four categories: Defendant Attributes, Criminal Behaviors, Victim Characteristics, and Subjective Mental States. The output must be a strictly valid JSON object without additional text.

Keyword Definitions:
- Defendant Attributes: Legal traits (e.g., age group, criminal history, occupation). Avoid specific names or numbers.
- Criminal Behaviors: Legal types of acts and significant methods. Exclude specific time/location details.
- Victim Characteristics: Nature of the property or location. Generalize specific amounts (e.g., "large amount").
- Subjective Mental States: Legal descriptions of intent and remorse.

Output Example:
{
    "Defendant_Attribute": ["Adult", "Prior Criminal Record"],
    "Criminal_Behaviors": ["Theft", "Burglary"],
    "Victim_Characteristics": ["Private Residence", "Large Amount"],
    "Subjective_Mental_States": ["Direct Intent", "Voluntary Surrender"]
}"#;

const PREJUDGE_SYSTEM: &str = r#"Task Definitions: Act as a criminal law expert to analyze the provided case.
- Output reasonably possible charges (confidence >30%) sorted by probability (descending).
- If a dominant charge exists (confidence >70%), prioritize it; if it is the only certain charge, output it exclusively.
- Exclude charges with probability <10%.

Format Definitions:
- Output strictly as a Python list: ['Charge 1', 'Charge 2', ...].
- The output must start with [.
- Return an empty list [] if no charge matches.
- No additional explanations or text allowed."#;

const AUDITOR_ITEM_SYSTEM: &str = r#"Task Definitions: Act as a legal AI assistant to assess if the case facts strictly satisfy a specific constituent element of the law.
- Analyze the law_item and case facts.
- Focus exclusively on the target element (e.g., "intent"), using related materials (if provided) for interpretation.
- determine applicability based on facts and logic.

I/O Specifications:
- Input: law_item, related (supplementary materials), element, case.
- Output: Provide reasoning first, then enclose the final result strictly within tags: <answer>true</answer> or <answer>false</answer>."#;

const AUDITOR_FINAL_SYSTEM: &str = r#"Task Definitions: Act as a legal analysis assistant to determine if the provided law article applies to the specific case (i.e., verify violation or crime).
- Identify all relevant constituent elements from the law text.
- Verify critical elements independently; note that the provided true_list and false_list may be incomplete.

I/O Specifications:
- Input Variables: case, law, true_list (proven elements), false_list (disproven elements).
- Output: Provide reasoning first, then enclose the final result strictly within tags: <answer>true</answer> or <answer>false</answer>."#;

const SENTENCING_SYSTEM: &str = r#"Task Definitions: Act as a legal expert to adjudge the defendant based on candidate charges.
- 1. Final Charge Application: For concurrence, apply the "heavier penalty" rule; for multiple acts, apply combined punishment.
- 2. Sentencing: Predict the specific law article and a reasonable sentencing range based on facts and judicial practice.

Format Definitions:
{
  charge_name: [Charge A, ...],
  law_article: [Art. X, ...],
  term_of_imprisonment: {
    death_penalty: boolean,
    imprisonment: integer (months),
    life_imprisonment: boolean
  }
}"#;

const VERDICT_SYSTEM: &str = r#"Task Definitions: Act as a legal consultant to analyze the case using the provided Context documents.
- Step 1: Fact & Act Analysis: Analyze how many independent criminal acts exist. Explicitly cite the supporting evidence from the context using [1][2]....
- Step 2: Law Application: Resolve any legal concurrence (e.g., Imaginative Concurrence vs. Combined Punishment). Explain why specific articles apply over others.
- Step 3: Sentencing Prediction: comprehensive assessment of sentencing based on statutory rules.

Output Format:
- Structure: Output in two clear sections: Legal Analysis (reasoning with citations) and Final Verdict (conclusion).
- Requirement: You must mark the source of your facts or laws using brackets like [1]."#;

const CHECKLIST_SYSTEM: &str = r#"Task Definitions: Act as a criminal law expert to decompose the provided law article into its constituent elements.
- Write each element as a yes/no question about the case facts (e.g., "Did the defendant fabricate facts or conceal the truth?").
- Use the related interpretations (if provided) to refine the elements.
- Output at most 8 questions.

Format Definitions:
- Output strictly as a JSON list of strings: ["Question 1", "Question 2", ...].
- No additional explanations or text allowed."#;

const SUMMARY_SYSTEM: &str = r#"Task Definitions: Act as a criminal law expert to summarize a group of related criminal cases.
- Describe the shared criminal behaviors, defendant attributes, victim characteristics, and mental states.
- Keep the summary under 80 words and avoid names, dates, and amounts.

Format Definitions:
- Output the summary as plain text without additional explanations."#;
