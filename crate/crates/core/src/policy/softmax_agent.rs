//! The learnable agent: featurize the state, sample (or argmax) a template
//! from the softmax policy, bind its arguments, and record the decision.

use super::actions::{self, GatheredState, ANSWER_TEMPLATE};
use super::{greedy_decision, pack_mask, sample_decision, DecisionRecord, PolicyParams};
use crate::domain::Query;
use crate::protocol::{Agent, AgentAction, AgentStep, Observation, Segment};
use rand_chacha::ChaCha8Rng;

pub struct SoftmaxPolicy {
    params: PolicyParams,
    rng: Option<ChaCha8Rng>,
    last_template: usize,
}

impl SoftmaxPolicy {
    /// Stochastic sampler over its own rng stream.
    pub fn sampler(params: PolicyParams, rng: ChaCha8Rng) -> SoftmaxPolicy {
        SoftmaxPolicy {
            params,
            rng: Some(rng),
            last_template: ANSWER_TEMPLATE,
        }
    }

    /// Greedy argmax decoder (used for evaluation).
    pub fn greedy(params: PolicyParams) -> SoftmaxPolicy {
        SoftmaxPolicy {
            params,
            rng: None,
            last_template: ANSWER_TEMPLATE,
        }
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }
}

impl Agent for SoftmaxPolicy {
    fn act(
        &mut self,
        query: &Query,
        segments: &[Segment],
        _turn: usize,
    ) -> Result<AgentStep, String> {
        let state = GatheredState::from_segments(query, segments);
        let features = actions::features(query, &state);
        let decision = match &mut self.rng {
            Some(rng) => sample_decision(&self.params, &features, rng),
            None => greedy_decision(&self.params, &features),
        };
        let template = decision.chosen as usize;
        self.last_template = template;
        let (thought, action) =
            actions::bind_template(template, query, &state).unwrap_or_else(|| {
                let (_, body) =
                    actions::build_answer(query, &state, actions::AnswerSelector::FirstListed);
                (String::new(), AgentAction::Answer(body))
            });
        Ok(AgentStep {
            thought,
            action,
            decision: Some(decision),
        })
    }

    fn observe(&mut self, query: &Query, segments: &[Segment], _turn: usize) -> Observation {
        let state = GatheredState::from_segments(query, segments);
        let features = actions::features(query, &state);
        Observation {
            decision: Some(DecisionRecord {
                bucket: features.bucket,
                valid: pack_mask(&features.valid),
                chosen: self.last_template as u8,
                log_prob: 0.0,
                masked: true,
            }),
            reflection: None,
        }
    }
}
