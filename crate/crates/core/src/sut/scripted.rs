//! Deterministic, fault-injectable stand-in for a live model.
//!
//! With no faults it answers Yes exactly when the queried ancestor
//! relation holds in the ground-truth graph. Faults force an answer or
//! flip the truthful one with some probability, per relation, template
//! and position in the conversation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adapter::{ChatRequest, SutAdapter, SutError};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::testgen::{ConversationKind, Relation, TemplateId};

/// Where in a conversation a query is asked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultContext {
    Atomic,
    SeqFirst,
    SeqSecond,
}

impl FaultContext {
    pub const ALL: [FaultContext; 3] = [Self::Atomic, Self::SeqFirst, Self::SeqSecond];

    pub fn of(kind: ConversationKind, turn: usize) -> Self {
        if kind.is_atomic() {
            Self::Atomic
        } else if turn == 0 {
            Self::SeqFirst
        } else {
            Self::SeqSecond
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedAnswer {
    Yes,
    No,
    Invalid,
    /// The adapter reports a timeout.
    NoResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultAction {
    Answer(ScriptedAnswer),
    /// Negate the truthful answer with this probability.
    Flip(f64),
}

/// One fault rule. Unset selectors match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child: Option<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<FaultContext>,
    pub action: FaultAction,
}

impl FaultRule {
    /// A rule pinned to one relation, template and context.
    pub fn exact(relation: &Relation, template: TemplateId, context: FaultContext, action: FaultAction) -> Self {
        Self {
            child: Some(relation.child.clone()),
            parent: Some(relation.parent.clone()),
            kind: Some(relation.kind.clone()),
            template: Some(template),
            context: Some(context),
            action,
        }
    }

    /// A rule for every context and template of one relation.
    pub fn relation(relation: &Relation, action: FaultAction) -> Self {
        Self {
            child: Some(relation.child.clone()),
            parent: Some(relation.parent.clone()),
            kind: Some(relation.kind.clone()),
            template: None,
            context: None,
            action,
        }
    }

    fn matches(&self, r: &Relation, template: TemplateId, context: FaultContext) -> bool {
        self.child.as_ref().is_none_or(|c| *c == r.child)
            && self.parent.as_ref().is_none_or(|p| *p == r.parent)
            && self.kind.as_ref().is_none_or(|k| *k == r.kind)
            && self.template.is_none_or(|t| t == template)
            && self.context.is_none_or(|c| c == context)
    }
}

/// Ordered fault rules; the first matching rule applies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    #[serde(default)]
    pub rules: Vec<FaultRule>,
    /// Flip probability for slots no rule matches.
    #[serde(default)]
    pub default_flip: f64,
}

impl FaultSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty() && self.default_flip == 0.0
    }

    pub fn push(&mut self, rule: FaultRule) -> &mut Self {
        self.rules.push(rule);
        self
    }

    pub fn lookup(&self, r: &Relation, template: TemplateId, context: FaultContext) -> Option<FaultAction> {
        self.rules
            .iter()
            .find(|rule| rule.matches(r, template, context))
            .map(|rule| rule.action)
            .or((self.default_flip > 0.0).then_some(FaultAction::Flip(self.default_flip)))
    }
}

pub struct ScriptedSut {
    name: String,
    truth: Arc<KnowledgeGraph>,
    faults: FaultSpec,
    seed: u64,
    system_command: bool,
}

impl ScriptedSut {
    pub fn new(name: impl Into<String>, truth: Arc<KnowledgeGraph>, faults: FaultSpec, seed: u64) -> Self {
        Self {
            name: name.into(),
            truth,
            faults,
            seed,
            system_command: true,
        }
    }

    pub fn without_system_command(mut self) -> Self {
        self.system_command = false;
        self
    }

    /// The answer this SUT gives for one slot, independent of call order.
    pub fn answer(&self, r: &Relation, template: TemplateId, context: FaultContext) -> ScriptedAnswer {
        let truth = self.truth.reaches(&r.child, &r.parent, &r.kind);
        let truthful = if truth { ScriptedAnswer::Yes } else { ScriptedAnswer::No };
        match self.faults.lookup(r, template, context) {
            None => truthful,
            Some(FaultAction::Answer(a)) => a,
            Some(FaultAction::Flip(p)) => {
                let mut rng = self.slot_rng(r, template, context);
                if rng.gen_bool(p.clamp(0.0, 1.0)) {
                    if truth {
                        ScriptedAnswer::No
                    } else {
                        ScriptedAnswer::Yes
                    }
                } else {
                    truthful
                }
            }
        }
    }

    fn slot_rng(&self, r: &Relation, template: TemplateId, context: FaultContext) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for part in [r.child.as_str(), r.parent.as_str(), r.kind.as_str()] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        h.update([template.0, context as u8]);
        let digest: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }
}

/// Builds a scripted SUT over `truth` with the given faults and seed.
pub fn scripted_sut(truth: Arc<KnowledgeGraph>, faults: FaultSpec, seed: u64) -> ScriptedSut {
    ScriptedSut::new("scripted", truth, faults, seed)
}

impl SutAdapter for ScriptedSut {
    fn name(&self) -> &str {
        &self.name
    }

    fn supports_system_command(&self) -> bool {
        self.system_command
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, SutError> {
        let q = request.query;
        let context = FaultContext::of(request.conversation, request.turn);
        let label = |id: &EntityId| self.truth.label(id).unwrap_or(id.as_str()).to_owned();
        match self.answer(&q.relation, q.template, context) {
            ScriptedAnswer::Yes => Ok(format!(
                "Yes, {} is in {}.",
                label(&q.relation.child),
                label(&q.relation.parent)
            )),
            ScriptedAnswer::No => Ok("No.".to_owned()),
            ScriptedAnswer::Invalid => Ok("I am not able to answer that question.".to_owned()),
            ScriptedAnswer::NoResponse => Err(SutError::Timeout),
        }
    }
}
