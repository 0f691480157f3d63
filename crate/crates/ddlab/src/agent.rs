//! Advantage actor-critic training over episodic rollouts.
//!
//! The critic regresses on the one-step bootstrapped target with a squared
//! loss, the actor ascends the advantage-weighted log-likelihood with the
//! one-step TD error as advantage, and an optional entropy bonus discourages
//! premature determinism. Targets and advantages are constants: no gradient
//! flows through the bootstrap term. One optimizer step is taken per episode
//! on the episode-mean loss.

use rand::Rng;

use crate::analysis::policy_entropy;
use crate::error::{Error, Result};
use crate::gridworld::{encode_state, Env, EnvConfig, Transition};
use crate::neural::{
    backward_into, forward, optimizer_step, softmax, NetworkParams, OptimizerState,
};

/// Which states feed the per-episode entropy metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyAveraging {
    /// Average over the states visited by the episode (on-policy).
    Visited,
    /// Average over every cell of the map, terminal cells included.
    AllStates,
}

/// Training hyperparameters for one run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub value_coef: f64,
    /// Weight of the entropy bonus. Nonzero values directly influence the
    /// logged entropy metric; every run manifest records it.
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub episodes: usize,
    pub entropy_averaging: EntropyAveraging,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.95,
            value_coef: 1.0,
            entropy_coef: 0.01,
            learning_rate: 3e-3,
            episodes: 5000,
            entropy_averaging: EntropyAveraging::Visited,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::usage(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err(Error::usage("loss coefficients must be >= 0"));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::usage("learning rate must be positive"));
        }
        if self.episodes == 0 {
            return Err(Error::usage("episodes must be >= 1"));
        }
        Ok(())
    }
}

/// One trajectory plus the per-step policy telemetry needed downstream.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub transitions: Vec<Transition>,
    /// Policy distribution at each visited state.
    pub probs: Vec<Vec<f64>>,
    /// Value estimate at each visited state.
    pub values: Vec<f64>,
    /// Log-probability of each chosen action.
    pub log_probs: Vec<f64>,
    /// True iff the horizon cut the episode short.
    pub truncated: bool,
    /// Value of the final state when truncated (the bootstrap target); 0 for
    /// terminal endings.
    pub bootstrap_value: f64,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// True iff the episode ended on the goal cell.
    pub fn success(&self) -> bool {
        self.transitions.last().map_or(false, |t| t.reward == 1.0)
    }
}

/// Loss components of one training step. `total` satisfies
/// `policy_loss + value_coef * value_loss - entropy_coef * entropy_term`
/// exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub value_loss: f64,
    pub policy_loss: f64,
    pub entropy_term: f64,
    pub total: f64,
}

/// One-step TD error `r + gamma * v_next - v_curr`, with the bootstrap
/// zeroed at terminal states. The result is used as a constant target and
/// advantage; no gradient flows through it.
pub fn td_error(reward: f64, gamma: f64, v_next: f64, v_curr: f64, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { v_next };
    reward + gamma * bootstrap - v_curr
}

/// Per-step critic loss, half the squared TD error.
pub fn value_loss(delta: f64) -> f64 {
    0.5 * delta * delta
}

/// Policy-gradient surrogate: minus the mean advantage-weighted
/// log-probability. Advantages are constants.
pub fn policy_loss(log_probs: &[f64], advantages: &[f64]) -> Result<f64> {
    if log_probs.len() != advantages.len() {
        return Err(Error::usage(format!(
            "policy_loss length mismatch: {} log-probs vs {} advantages",
            log_probs.len(),
            advantages.len()
        )));
    }
    if log_probs.is_empty() {
        return Err(Error::usage("policy_loss requires at least one step"));
    }
    let sum: f64 = log_probs
        .iter()
        .zip(advantages)
        .map(|(lp, adv)| lp * adv)
        .sum();
    Ok(-sum / log_probs.len() as f64)
}

fn one_hot(state: usize, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[state] = 1.0;
    v
}

/// Samples an action index from a probability vector by inverse CDF.
fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    probs.len() - 1
}

/// Rolls out one episode under the softmax policy, recording distributions,
/// values, and log-probabilities for every visited state. Truncated episodes
/// record the final state's value as the bootstrap target.
pub fn collect_episode<R: Rng + ?Sized>(
    params: &NetworkParams,
    env_config: &EnvConfig,
    rng: &mut R,
) -> Result<EpisodeRecord> {
    let mut env = Env::new(env_config.clone())?;
    let mut state = env.reset();
    let mut record = EpisodeRecord {
        transitions: Vec::new(),
        probs: Vec::new(),
        values: Vec::new(),
        log_probs: Vec::new(),
        truncated: false,
        bootstrap_value: 0.0,
    };
    while !env.done() {
        let input = encode_state(state, &env_config.map)?;
        let pass = forward(params, &input)?;
        let probs = softmax(&pass.policy_logits);
        let action_idx = sample_action(&probs, rng);
        let action = crate::gridworld::Action::from_index(action_idx)?;
        let outcome = env.step(action, rng)?;
        record.transitions.push(outcome.transition);
        record.log_probs.push(probs[action_idx].ln());
        record.probs.push(probs);
        record.values.push(pass.value);
        state = outcome.transition.next_state;
        if outcome.truncated {
            record.truncated = true;
            let input = encode_state(state, &env_config.map)?;
            record.bootstrap_value = forward(params, &input)?.value;
        }
    }
    Ok(record)
}

/// Trains on one recorded episode: recomputes the forward passes at the
/// current parameters, forms per-step TD errors, accumulates the gradient of
/// the episode-mean composite loss, and applies exactly one optimizer step.
///
/// Aborts with a numeric error when the loss leaves the finite range.
pub fn train_episode(
    params: &mut NetworkParams,
    opt: &mut OptimizerState,
    record: &EpisodeRecord,
    config: &AgentConfig,
) -> Result<LossBreakdown> {
    if record.is_empty() {
        return Err(Error::usage("cannot train on an empty episode"));
    }
    config.validate()?;
    let steps = record.len();
    let input_dim = params.backbone[0].in_dim;

    let mut passes = Vec::with_capacity(steps);
    for t in &record.transitions {
        passes.push(forward(params, &one_hot(t.state, input_dim))?);
    }
    let bootstrap = if record.truncated {
        let last = record.transitions[steps - 1].next_state;
        forward(params, &one_hot(last, input_dim))?.value
    } else {
        0.0
    };

    let mut deltas = Vec::with_capacity(steps);
    let mut log_probs = Vec::with_capacity(steps);
    let mut entropy_sum = 0.0;
    let mut value_loss_sum = 0.0;
    let mut grads = params.zeros_like();
    let inv_steps = 1.0 / steps as f64;

    for (t, transition) in record.transitions.iter().enumerate() {
        let pass = &passes[t];
        let probs = softmax(&pass.policy_logits);
        let entropy = policy_entropy(&probs)?;
        let v_next = if t + 1 < steps {
            passes[t + 1].value
        } else {
            bootstrap
        };
        let delta = td_error(
            transition.reward,
            config.gamma,
            v_next,
            pass.value,
            transition.terminal,
        );
        let action = transition.action.index();
        log_probs.push(probs[action].ln());
        deltas.push(delta);
        entropy_sum += entropy;
        value_loss_sum += value_loss(delta);

        // Upstream signals of the episode-mean loss for this step's pass.
        let mut d_logits = vec![0.0; probs.len()];
        for (j, &p) in probs.iter().enumerate() {
            let indicator = if j == action { 1.0 } else { 0.0 };
            let policy_term = -delta * (indicator - p);
            let entropy_term = if p > 0.0 {
                config.entropy_coef * p * (p.ln() + entropy)
            } else {
                0.0
            };
            d_logits[j] = (policy_term + entropy_term) * inv_steps;
        }
        let d_value = -config.value_coef * delta * inv_steps;
        backward_into(pass, params, &d_logits, d_value, &mut grads)?;
    }

    let value_loss_ep = value_loss_sum * inv_steps;
    let policy_loss_ep = policy_loss(&log_probs, &deltas)?;
    let entropy_ep = entropy_sum * inv_steps;
    let total =
        policy_loss_ep + config.value_coef * value_loss_ep - config.entropy_coef * entropy_ep;
    if !total.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite loss (policy {policy_loss_ep}, value {value_loss_ep}, entropy {entropy_ep})"
        )));
    }
    optimizer_step(params, &grads, opt)?;
    Ok(LossBreakdown {
        value_loss: value_loss_ep,
        policy_loss: policy_loss_ep,
        entropy_term: entropy_ep,
        total,
    })
}

/// Mean policy entropy over every cell of the map (the alternative averaging
/// mode; terminal cells included).
pub fn all_states_entropy(params: &NetworkParams, env_config: &EnvConfig) -> Result<f64> {
    let n = env_config.map.n_states();
    let mut sum = 0.0;
    for state in 0..n {
        let input = encode_state(state, &env_config.map)?;
        let pass = forward(params, &input)?;
        sum += policy_entropy(&softmax(&pass.policy_logits))?;
    }
    Ok(sum / n as f64)
}
