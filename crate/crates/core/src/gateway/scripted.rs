//! Deterministic scripted backend.
//!
//! Replies come from a FIFO queue per state tag; when a queue is empty the
//! tag's responder closure (if any) is consulted. Every call is logged.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use super::{estimate_tokens, CompletionRequest, GatewayError, Provider, ProviderReply};

type Responder = Box<dyn Fn(&CompletionRequest) -> String + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub state_tag: String,
    pub model_id: String,
    pub prompt: String,
    /// `None` when the script had nothing left for this tag.
    pub reply: Option<String>,
    pub token_in: u64,
    pub token_out: u64,
}

#[derive(Default)]
pub struct ScriptedProvider {
    queues: Mutex<HashMap<String, VecDeque<String>>>,
    responders: HashMap<String, Responder>,
    log: Mutex<Vec<CallRecord>>,
}

impl std::fmt::Debug for ScriptedProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedProvider")
            .field("responders", &self.responders.keys().collect::<Vec<_>>())
            .field("calls", &self.log.lock().map(|l| l.len()).unwrap_or(0))
            .finish()
    }
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues one reply for `tag`.
    pub fn push(self, tag: &str, reply: impl Into<String>) -> Self {
        self.enqueue(tag, reply);
        self
    }

    pub fn push_many<S: Into<String>>(self, tag: &str, replies: impl IntoIterator<Item = S>) -> Self {
        for r in replies {
            self.enqueue(tag, r);
        }
        self
    }

    /// Same reply for every call on `tag` once its queue is empty.
    pub fn always(self, tag: &str, reply: impl Into<String>) -> Self {
        let reply = reply.into();
        self.respond(tag, move |_| reply.clone())
    }

    pub fn respond(mut self, tag: &str, f: impl Fn(&CompletionRequest) -> String + Send + Sync + 'static) -> Self {
        self.responders.insert(tag.to_string(), Box::new(f));
        self
    }

    /// Queues a reply on a provider that is already shared.
    pub fn enqueue(&self, tag: &str, reply: impl Into<String>) {
        self.queues
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .entry(tag.to_string())
            .or_default()
            .push_back(reply.into());
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn calls_for(&self, tag: &str) -> usize {
        self.log
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .iter()
            .filter(|c| c.state_tag == tag)
            .count()
    }

    pub fn clear_log(&self) {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).clear();
    }
}

impl Provider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<ProviderReply, GatewayError> {
        let queued = self
            .queues
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get_mut(&req.state_tag)
            .and_then(VecDeque::pop_front);
        let reply = queued.or_else(|| self.responders.get(&req.state_tag).map(|f| f(req)));
        let token_in = estimate_tokens(&req.system) + estimate_tokens(&req.prompt);
        let token_out = reply.as_deref().map_or(0, estimate_tokens);
        self.log.lock().unwrap_or_else(|p| p.into_inner()).push(CallRecord {
            state_tag: req.state_tag.clone(),
            model_id: req.binding.model_id.clone(),
            prompt: req.prompt.clone(),
            reply: reply.clone(),
            token_in,
            token_out,
        });
        match reply {
            Some(text) => Ok(ProviderReply {
                text,
                token_in,
                token_out,
            }),
            None => Err(GatewayError::provider(
                format!("script has no reply for state {:?}", req.state_tag),
                false,
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ModelRoleBinding, Role};

    fn req(tag: &str) -> CompletionRequest {
        CompletionRequest {
            state_tag: tag.into(),
            binding: ModelRoleBinding::new(Role::Judge, "m"),
            system: String::new(),
            prompt: "abcd".into(),
            vars: Default::default(),
        }
    }

    #[test]
    fn queue_then_responder() {
        let p = ScriptedProvider::new().push("t", "first").always("t", "rest");
        assert_eq!(p.complete(&req("t")).unwrap().text, "first");
        assert_eq!(p.complete(&req("t")).unwrap().text, "rest");
        assert_eq!(p.complete(&req("t")).unwrap().text, "rest");
        assert!(p.complete(&req("other")).is_err());
        assert_eq!(p.calls().len(), 4);
        assert_eq!(p.calls_for("t"), 3);
    }

    #[test]
    fn usage_is_deterministic() {
        let a = ScriptedProvider::new().push("t", "hello world");
        let b = ScriptedProvider::new().push("t", "hello world");
        assert_eq!(a.complete(&req("t")).unwrap(), b.complete(&req("t")).unwrap());
    }
}
