//! Summary editing. The prompt accumulates every previously edited
//! (document, summary) pair so the model can pick up the user's style, and
//! the model's first sentence becomes the draft the user edits.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{field, is_button, not_in_schema, target, text_payload, QueryPlan, TaskConfig, TaskLogic, Transition};
use crate::banks::{Document, TaskBanks};
use crate::lm::{CompletionSet, DecodingParams};
use crate::survey::{SurveyForm, UnitKind};
use crate::trace::{ActionKind, EndReason, Fields, IllegalAction, Millis, UserAction};

pub const DOCUMENTS_PER_SESSION: usize = 10;
pub const PAIR_SEPARATOR: &str = "***";

pub const SEED_DOCUMENT: &str = "Fire crews and police were called to the property in Savile Road, Halifax, at 05:37 BST and the body of a man in his 50s was found inside. West Yorkshire Police said he had not yet been identified. Det Insp Craig Lord said: \"Inquiries are ongoing today with West Yorkshire Fire and Rescue Service to determine the cause of this fire which has sadly resulted in a man losing his life.\"";
pub const SEED_SUMMARY: &str = "A man has died in a fire at a flat in West Yorkshire.";

/// Tokens ending in a period that do not end a sentence. Changing this list
/// changes extracted summaries, so treat it as versioned data.
pub const ABBREVIATIONS: &[&str] = &[
    "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "Sr.", "Jr.", "St.", "Mt.", "Rev.", "Gen.", "Col.", "Lt.", "Sgt.",
    "Capt.", "Gov.", "Sen.", "Rep.", "Det.", "Insp.", "Supt.", "Cllr.", "No.", "vs.", "etc.", "e.g.", "i.e.",
    "U.S.", "U.K.", "U.N.", "E.U.", "a.m.", "p.m.", "Jan.", "Feb.", "Mar.", "Apr.", "Aug.", "Sept.", "Oct.",
    "Nov.", "Dec.", "Inc.", "Ltd.", "Co.", "Corp.",
];

pub fn decoding_params() -> DecodingParams {
    DecodingParams {
        temperature: 0.3,
        top_k: None,
        max_tokens: 64,
        stop_sequences: vec![PAIR_SEPARATOR.to_string()],
        num_completions: 1,
    }
}

/// Returns `text` up to and including the first sentence terminator that is
/// followed by whitespace or the end of text. Closing quotes and brackets
/// right after the terminator stay with the sentence.
pub fn postprocess_summary(text: &str) -> String {
    let text = text.trim();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(at, ch)) in chars.iter().enumerate() {
        if !matches!(ch, '.' | '!' | '?') {
            continue;
        }
        let mut j = k + 1;
        while j < chars.len() && matches!(chars[j].1, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}') {
            j += 1;
        }
        if j < chars.len() && !chars[j].1.is_whitespace() {
            continue;
        }
        if ch == '.' {
            let token_start = text[..at].rfind(char::is_whitespace).map_or(0, |p| p + 1);
            let token = &text[token_start..at + 1];
            let token = token.trim_start_matches(['"', '\'', '(', '[']);
            if ABBREVIATIONS.contains(&token) {
                continue;
            }
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        return text[..end].to_string();
    }
    text.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedExample {
    pub document: String,
    pub summary: String,
}

impl SeedExample {
    pub fn halifax() -> Self {
        Self { document: SEED_DOCUMENT.into(), summary: SEED_SUMMARY.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub index: usize,
    pub document_id: String,
    pub document: String,
    pub original: String,
    pub edited: String,
    pub generated_at: Millis,
    pub submitted_at: Millis,
    pub empty_completion: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingStart,
    Editing,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizationState {
    pub documents: Vec<Document>,
    pub current_index: usize,
    pub model_summary: String,
    pub edited_summary: String,
    pub history: Vec<SummaryRecord>,
    pub seed_example: Option<SeedExample>,
    pub phase: Phase,
    pub generated_at: Millis,
    pub empty_completion: bool,
}

fn pair(document: &str, summary: &str) -> String {
    format!("Document: {document}\nSummary: {summary}\n{PAIR_SEPARATOR}\n")
}

impl SummarizationState {
    pub fn new(banks: &TaskBanks, config: &TaskConfig, rng: &mut ChaCha8Rng) -> Self {
        let picks = sample(rng, banks.documents.len(), DOCUMENTS_PER_SESSION).into_vec();
        let documents = picks.into_iter().map(|i| banks.documents[i].clone()).collect();
        Self::with_documents(documents, config.summarization_seed_example)
    }

    pub fn with_documents(documents: Vec<Document>, seed_example: bool) -> Self {
        Self {
            documents,
            current_index: 0,
            model_summary: String::new(),
            edited_summary: String::new(),
            history: Vec::new(),
            seed_example: seed_example.then(SeedExample::halifax),
            phase: Phase::AwaitingStart,
            generated_at: 0,
            empty_completion: false,
        }
    }

    pub fn current_document(&self) -> Option<&Document> {
        self.documents.get(self.current_index)
    }

    /// Seed pair, then every edited pair so far, then the current document
    /// and an open summary cue.
    pub fn create_prompt(&self) -> String {
        let mut out = String::new();
        if let Some(seed) = &self.seed_example {
            out.push_str(&pair(&seed.document, &seed.summary));
        }
        for rec in &self.history {
            out.push_str(&pair(&rec.document, &rec.edited));
        }
        let doc = self.current_document().map_or("", |d| d.text.as_str());
        out.push_str(&format!("Document: {doc}\nSummary:"));
        out
    }

    fn summaries_generated(&self) -> usize {
        self.history.len() + usize::from(self.phase == Phase::Editing)
    }
}

impl TaskLogic for SummarizationState {
    fn visible(&self) -> Fields {
        Fields::from([
            ("document".into(), field(self.current_document().map(|d| &d.text))),
            ("document_index".into(), field(self.current_index)),
            ("document_count".into(), field(self.documents.len())),
            ("model_summary".into(), field(&self.model_summary)),
            ("edited_summary".into(), field(&self.edited_summary)),
            ("phase".into(), field(self.phase)),
        ])
    }

    fn hidden(&self) -> Fields {
        Fields::from([
            ("history".into(), field(&self.history)),
            ("seed_example".into(), field(&self.seed_example)),
            ("document_ids".into(), field(self.documents.iter().map(|d| &d.id).collect::<Vec<_>>())),
            ("empty_completion".into(), field(self.empty_completion)),
        ])
    }

    fn route(&self, action: &UserAction) -> Result<Transition, IllegalAction> {
        match (self.phase, action.kind) {
            (Phase::AwaitingStart, ActionKind::ClickButton) if is_button(action, "start") => Ok(Transition::Query),
            (Phase::Editing, ActionKind::TypeText) if target(action) == "edited_summary" => Ok(Transition::Update),
            (Phase::Editing, ActionKind::ClickButton) if is_button(action, "next") => {
                if self.current_index + 1 >= self.documents.len() {
                    Ok(Transition::Update)
                } else {
                    Ok(Transition::Query)
                }
            }
            _ => Err(not_in_schema(action)),
        }
    }

    fn update(&self, action: &UserAction, now: Millis) -> Result<Self, IllegalAction> {
        let mut next = self.clone();
        if action.kind == ActionKind::TypeText {
            next.edited_summary = text_payload(action)?.to_string();
        } else {
            next.commit(now);
            next.phase = Phase::Done;
        }
        Ok(next)
    }

    fn begin_query(&self, _action: &UserAction, now: Millis) -> Result<(Self, QueryPlan), IllegalAction> {
        let mut next = self.clone();
        if self.phase == Phase::Editing {
            next.commit(now);
            next.current_index += 1;
        }
        let plan = QueryPlan { prompt: next.create_prompt(), params: decoding_params(), unit: Some(next.current_index) };
        Ok((next, plan))
    }

    fn show_completions(mut self, _plan: &QueryPlan, set: &CompletionSet, now: Millis) -> Self {
        let (summary, empty) = match set.completions.first() {
            Some(c) if c.filtered => (c.text.clone(), true),
            Some(c) => {
                let s = postprocess_summary(&c.text);
                let empty = s.is_empty();
                (s, empty)
            }
            None => (String::new(), true),
        };
        self.model_summary = summary.clone();
        self.edited_summary = summary;
        self.empty_completion = empty;
        self.generated_at = now;
        self.phase = Phase::Editing;
        self
    }

    fn finish_allowed(&self) -> bool {
        self.phase == Phase::Done
    }

    fn completed(&self) -> Option<EndReason> {
        (self.phase == Phase::Done).then_some(EndReason::AllDocumentsSubmitted)
    }

    fn survey_units(&self, form: &SurveyForm) -> usize {
        match form.units {
            UnitKind::Summary => self.summaries_generated(),
            _ => 0,
        }
    }
}

impl SummarizationState {
    fn commit(&mut self, now: Millis) {
        let doc = &self.documents[self.current_index];
        self.history.push(SummaryRecord {
            index: self.current_index,
            document_id: doc.id.clone(),
            document: doc.text.clone(),
            original: std::mem::take(&mut self.model_summary),
            edited: std::mem::take(&mut self.edited_summary),
            generated_at: self.generated_at,
            submitted_at: now,
            empty_completion: self.empty_completion,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_sentence() {
        assert_eq!(postprocess_summary("A man died. Police said more."), "A man died.");
        assert_eq!(postprocess_summary("No terminator here"), "No terminator here");
        assert_eq!(postprocess_summary("Mr. Smith won. More text."), "Mr. Smith won.");
        assert_eq!(postprocess_summary("Prices rose 3.5% today. Then fell."), "Prices rose 3.5% today.");
        assert_eq!(postprocess_summary("He said \"stop.\" Then left."), "He said \"stop.\"");
        assert_eq!(postprocess_summary("  "), "");
    }

    #[test]
    fn first_prompt_has_seed_then_document() {
        let banks = TaskBanks::bundled();
        let s = SummarizationState::with_documents(banks.documents[..10].to_vec(), true);
        let p = s.create_prompt();
        assert!(p.starts_with(&format!("Document: {SEED_DOCUMENT}\nSummary: {SEED_SUMMARY}\n***\n")));
        assert!(p.ends_with(&format!("Document: {}\nSummary:", banks.documents[0].text)));
        assert_eq!(p.matches("***").count(), 1);
    }

    #[test]
    fn zero_shot_without_seed() {
        let banks = TaskBanks::bundled();
        let s = SummarizationState::with_documents(banks.documents[..10].to_vec(), false);
        assert_eq!(s.create_prompt(), format!("Document: {}\nSummary:", banks.documents[0].text));
    }
}
