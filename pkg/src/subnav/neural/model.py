"""Agent forward operations and the matching hand-derived reverse pass.

One navigation step runs: soft attention over the active sub-instruction's
encoder states, soft attention over the candidate-direction features, a
recurrent policy cell whose incoming hidden state is the attended text,
action scoring against the projected candidate features, and a gated
shifting head that estimates the probability of moving to the next
sub-instruction.  ``backward_rollout`` walks recorded step traces in
reverse and accumulates exact parameter gradients, including through the
instruction encoder.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .ops import (AttentionCache, LstmCache, MlpCache, affine_backward,
                  affine_forward, attention_backward, attention_forward,
                  lstm_cell_backward, lstm_cell_forward, mlp_backward,
                  mlp_forward, sigmoid, softmax)
from .params import ModelParams

PROB_FLOOR = 1e-12

STOP_INDEX = 0  # candidate 0 is always the learned stop feature


class ShapeError(ValueError):
    pass


@dataclass
class AgentState:
    h: np.ndarray
    m: np.ndarray

    @classmethod
    def zero(cls, hidden_dim: int) -> "AgentState":
        return cls(h=np.zeros(hidden_dim), m=np.zeros(hidden_dim))


@dataclass
class AttentionResult:
    weights: np.ndarray
    attended: np.ndarray


# --------------------------------------------------------------------------
# instruction encoding
# --------------------------------------------------------------------------

@dataclass
class EncoderTrace:
    token_ids: list[int]
    caches: list[LstmCache]


def encode_instruction(params: ModelParams, token_ids: list[int]):
    """Run the embedding + recurrent encoder; one hidden state per token."""
    if not token_ids:
        raise ShapeError("cannot encode an empty token sequence")
    vocab_size = params["embed"].shape[0]
    for t in token_ids:
        if not 0 <= t < vocab_size:
            raise ShapeError(f"token id {t} outside vocabulary of {vocab_size}")
    hidden = params.config.hidden_dim
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    states = np.empty((len(token_ids), hidden))
    caches = []
    for pos, tid in enumerate(token_ids):
        x = params["embed"][tid]
        h, c, cache = lstm_cell_forward(x, h, c, params["enc_wx"],
                                        params["enc_wh"], params["enc_b"])
        states[pos] = h
        caches.append(cache)
    return states, EncoderTrace(token_ids=list(token_ids), caches=caches)


def encoder_backward(params: ModelParams, trace: EncoderTrace,
                     d_states: np.ndarray, grads: dict) -> None:
    """Backpropagate gradients on the encoder states into the embedding and
    encoder weights (accumulated into ``grads``)."""
    hidden = params.config.hidden_dim
    dh_next = np.zeros(hidden)
    dc_next = np.zeros(hidden)
    for pos in range(len(trace.caches) - 1, -1, -1):
        dh = d_states[pos] + dh_next
        dx, dh_next, dc_next, dwx, dwh, db = lstm_cell_backward(
            dh, dc_next, trace.caches[pos], params["enc_wx"], params["enc_wh"])
        grads["enc_wx"] += dwx
        grads["enc_wh"] += dwh
        grads["enc_b"] += db
        grads["embed"][trace.token_ids[pos]] += dx


# --------------------------------------------------------------------------
# single operations (exposed for unit-level verification)
# --------------------------------------------------------------------------

def text_attend(params: ModelParams, h_prev: np.ndarray,
                sub_states: np.ndarray) -> AttentionResult:
    """Soft attention restricted to the active sub-instruction's states."""
    if sub_states.ndim != 2 or sub_states.shape[0] == 0:
        raise ShapeError("sub-instruction states must be a non-empty matrix")
    query = params["text_attn_w"] @ h_prev
    attended, weights, _ = attention_forward(query, sub_states, sub_states)
    return AttentionResult(weights=weights, attended=attended)


def visual_attend(params: ModelParams, h_prev: np.ndarray,
                  candidate_feats: np.ndarray) -> AttentionResult:
    """Soft attention over candidate-direction features (projected keys,
    raw-feature values)."""
    if candidate_feats.ndim != 2 or candidate_feats.shape[0] == 0:
        raise ShapeError("candidate features must be a non-empty matrix")
    projected, _ = mlp_forward(candidate_feats, params["vis_mlp_w1"],
                               params["vis_mlp_b1"], params["vis_mlp_w2"],
                               params["vis_mlp_b2"])
    query = params["vis_attn_w"] @ h_prev
    attended, weights, _ = attention_forward(query, projected, candidate_feats)
    return AttentionResult(weights=weights, attended=attended)


def policy_step(params: ModelParams, v_hat: np.ndarray, a_prev: np.ndarray,
                u_hat: np.ndarray, state: AgentState) -> AgentState:
    """One recurrent policy step: input [attended visual; previous action],
    incoming hidden state = attended text, incoming memory = previous memory."""
    x = np.concatenate([v_hat, a_prev])
    h, m, _ = lstm_cell_forward(x, u_hat, state.m, params["pol_wx"],
                                params["pol_wh"], params["pol_b"])
    return AgentState(h=h, m=m)


def action_logits(params: ModelParams, h: np.ndarray, u_hat: np.ndarray,
                  candidate_feats: np.ndarray) -> np.ndarray:
    """Softmax policy over candidate directions (index 0 is STOP)."""
    projected, _ = mlp_forward(candidate_feats, params["vis_mlp_w1"],
                               params["vis_mlp_b1"], params["vis_mlp_w2"],
                               params["vis_mlp_b2"])
    query = params["action_w"] @ np.concatenate([h, u_hat])
    return softmax(projected @ query)


def shift_probability(params: ModelParams, state: AgentState,
                      v_selected: np.ndarray, x_hat: np.ndarray,
                      remaining: int) -> float:
    """Probability of advancing to the next sub-instruction.

    ``remaining`` counts the sub-instructions left after the active one and
    is clamped to the one-hot capacity.
    """
    if remaining < 0:
        raise ShapeError("remaining sub-instruction count must be >= 0")
    p_s, _ = _shift_forward(params, state.h, state.m, v_selected, x_hat,
                            remaining)
    return p_s


def count_one_hot(params: ModelParams, remaining: int) -> np.ndarray:
    capacity = params.config.count_capacity
    if remaining >= capacity:
        warnings.warn(
            f"{remaining} sub-instructions left exceeds one-hot capacity "
            f"{capacity}; clamping")
        remaining = capacity - 1
    e = np.zeros(capacity)
    e[remaining] = 1.0
    return e


@dataclass
class ShiftCache:
    h: np.ndarray
    m: np.ndarray
    v_selected: np.ndarray
    x_hat: np.ndarray
    one_hot: np.ndarray
    state_out: np.ndarray
    gate_in: np.ndarray
    gate: np.ndarray
    tanh_m: np.ndarray
    count_out: np.ndarray
    out_in: np.ndarray
    p_s: float


def _shift_forward(params: ModelParams, h, m, v_selected, x_hat, remaining):
    state_out = affine_forward(h, params["shift_state_w"],
                               params["shift_state_b"])
    gate_in = np.concatenate([state_out, v_selected, x_hat])
    gate = sigmoid(affine_forward(gate_in, params["shift_gate_w"],
                                  params["shift_gate_b"]))
    tanh_m = np.tanh(m)
    co_grounded = gate * tanh_m
    one_hot = count_one_hot(params, remaining)
    count_out = affine_forward(one_hot, params["shift_count_w"],
                               params["shift_count_b"])
    out_in = np.concatenate([count_out, co_grounded])
    logit = affine_forward(out_in, params["shift_out_w"],
                           params["shift_out_b"])
    p_s = float(sigmoid(logit[0]))
    cache = ShiftCache(h=h, m=m, v_selected=v_selected, x_hat=x_hat,
                       one_hot=one_hot, state_out=state_out, gate_in=gate_in,
                       gate=gate, tanh_m=tanh_m, count_out=count_out,
                       out_in=out_in, p_s=p_s)
    return p_s, cache


def _shift_backward(params: ModelParams, d_logit: float, cache: ShiftCache,
                    grads: dict):
    """Returns (dh, dm, dv_selected, dx_hat) for one shift evaluation."""
    d_out_in, dw_out, db_out = affine_backward(
        np.array([d_logit]), cache.out_in, params["shift_out_w"])
    grads["shift_out_w"] += dw_out
    grads["shift_out_b"] += db_out
    de = cache.count_out.shape[0]
    d_count_out = d_out_in[:de]
    d_co_grounded = d_out_in[de:]
    _, dw_count, db_count = affine_backward(
        d_count_out, cache.one_hot, params["shift_count_w"])
    grads["shift_count_w"] += dw_count
    grads["shift_count_b"] += db_count
    d_gate = d_co_grounded * cache.tanh_m
    dm = d_co_grounded * cache.gate * (1.0 - cache.tanh_m * cache.tanh_m)
    d_gate_pre = d_gate * cache.gate * (1.0 - cache.gate)
    d_gate_in, dw_gate, db_gate = affine_backward(
        d_gate_pre, cache.gate_in, params["shift_gate_w"])
    grads["shift_gate_w"] += dw_gate
    grads["shift_gate_b"] += db_gate
    dc = cache.state_out.shape[0]
    dv_dim = cache.v_selected.shape[0]
    d_state_out = d_gate_in[:dc]
    dv_selected = d_gate_in[dc:dc + dv_dim]
    dx_hat = d_gate_in[dc + dv_dim:]
    dh, dw_state, db_state = affine_backward(
        d_state_out, cache.h, params["shift_state_w"])
    grads["shift_state_w"] += dw_state
    grads["shift_state_b"] += db_state
    return dh, dm, dv_selected, dx_hat


# --------------------------------------------------------------------------
# full step: forward trace and reverse pass
# --------------------------------------------------------------------------

@dataclass
class StepTrace:
    """Everything needed to replay one step backwards."""

    sub_slice: tuple[int, int]          # [lo, hi) indices into encoder states
    candidate_feats: np.ndarray         # (n_cand, vis_dim); row 0 is STOP
    a_prev: np.ndarray
    h_prev: np.ndarray
    chosen: int
    action_probs: np.ndarray
    text_cache: AttentionCache
    vis_mlp_cache: MlpCache
    vis_cache: AttentionCache
    lstm_cache: LstmCache
    action_query: np.ndarray            # action_w @ [h, u_hat]
    projected: np.ndarray               # mlp output for the candidates
    u_hat: np.ndarray
    shift_cache: ShiftCache | None = None
    p_s: float | None = None


def forward_step(params: ModelParams, states: np.ndarray,
                 sub_slice: tuple[int, int], candidate_feats: np.ndarray,
                 a_prev: np.ndarray, state: AgentState):
    """Attend, advance the policy cell and score candidates.

    Returns (new_state, action_probs, trace); the shift head runs separately
    once the action has been chosen (it consumes the selected feature).
    """
    lo, hi = sub_slice
    sub_states = states[lo:hi]
    if sub_states.shape[0] == 0:
        raise ShapeError("active sub-instruction has no encoded states")
    t_query = params["text_attn_w"] @ state.h
    u_hat, _, text_cache = attention_forward(t_query, sub_states, sub_states)

    projected, vis_mlp_cache = mlp_forward(
        candidate_feats, params["vis_mlp_w1"], params["vis_mlp_b1"],
        params["vis_mlp_w2"], params["vis_mlp_b2"])
    v_query = params["vis_attn_w"] @ state.h
    v_hat, _, vis_cache = attention_forward(v_query, projected, candidate_feats)

    x = np.concatenate([v_hat, a_prev])
    h, m, lstm_cache = lstm_cell_forward(
        x, u_hat, state.m, params["pol_wx"], params["pol_wh"], params["pol_b"])

    action_query = params["action_w"] @ np.concatenate([h, u_hat])
    probs = softmax(projected @ action_query)

    trace = StepTrace(
        sub_slice=sub_slice, candidate_feats=candidate_feats, a_prev=a_prev,
        h_prev=state.h, chosen=-1, action_probs=probs, text_cache=text_cache,
        vis_mlp_cache=vis_mlp_cache, vis_cache=vis_cache,
        lstm_cache=lstm_cache, action_query=action_query, projected=projected,
        u_hat=u_hat)
    return AgentState(h=h, m=m), probs, trace


def forward_shift(params: ModelParams, trace: StepTrace, state: AgentState,
                  chosen: int, remaining: int) -> float:
    """Evaluate the shift head for the chosen candidate and record it."""
    trace.chosen = chosen
    p_s, cache = _shift_forward(params, state.h, state.m,
                                trace.candidate_feats[chosen], trace.u_hat,
                                remaining)
    trace.shift_cache = cache
    trace.p_s = p_s
    return p_s


def backward_rollout(params: ModelParams, traces: list[StepTrace],
                     encoder_trace: EncoderTrace, n_states: int,
                     d_action_logits: list[np.ndarray],
                     d_shift_logits: list[float]) -> dict:
    """Reverse pass over a recorded rollout; returns parameter gradients."""
    grads = params.zero_like()
    hidden = params.config.hidden_dim
    d_states = np.zeros((n_states, hidden))
    dh = np.zeros(hidden)   # gradient on the h output of the current step
    dm = np.zeros(hidden)   # gradient on the m output of the current step
    for t in range(len(traces) - 1, -1, -1):
        trace = traces[t]
        du_hat = np.zeros_like(trace.u_hat)
        d_projected = np.zeros_like(trace.projected)

        if trace.shift_cache is not None and d_shift_logits[t] != 0.0:
            dh_s, dm_s, dv_sel, dx_hat = _shift_backward(
                params, d_shift_logits[t], trace.shift_cache, grads)
            dh += dh_s
            dm += dm_s
            du_hat += dx_hat
            if trace.chosen == STOP_INDEX:
                grads["stop_feature"] += dv_sel

        d_logits = d_action_logits[t]
        if d_logits is not None:
            d_action_query = trace.projected.T @ d_logits
            d_projected += np.outer(d_logits, trace.action_query)
            grads["action_w"] += np.outer(
                d_action_query, np.concatenate([_lstm_h(trace), trace.u_hat]))
            d_concat = params["action_w"].T @ d_action_query
            dh += d_concat[:hidden]
            du_hat += d_concat[hidden:]

        dx, dh_in, dc_in, dwx, dwh, db = lstm_cell_backward(
            dh, dm, trace.lstm_cache, params["pol_wx"], params["pol_wh"])
        grads["pol_wx"] += dwx
        grads["pol_wh"] += dwh
        grads["pol_b"] += db
        du_hat += dh_in
        dm = dc_in
        vis_dim = params.config.vis_dim
        dv_hat = dx[:vis_dim]
        # a_prev is an environment feature or the start sentinel: constant

        dv_query, d_keys, d_values = attention_backward(dv_hat, trace.vis_cache)
        d_projected += d_keys
        grads["vis_attn_w"] += np.outer(dv_query, trace.h_prev)
        dh_prev = params["vis_attn_w"].T @ dv_query
        d_cand = d_values

        d_cand_from_mlp, dw1, db1, dw2, db2 = mlp_backward(
            d_projected, trace.vis_mlp_cache, params["vis_mlp_w1"],
            params["vis_mlp_w2"])
        grads["vis_mlp_w1"] += dw1
        grads["vis_mlp_b1"] += db1
        grads["vis_mlp_w2"] += dw2
        grads["vis_mlp_b2"] += db2
        d_cand = d_cand + d_cand_from_mlp
        grads["stop_feature"] += d_cand[STOP_INDEX]

        dt_query, d_keys_t, d_values_t = attention_backward(
            du_hat, trace.text_cache)
        lo, hi = trace.sub_slice
        d_states[lo:hi] += d_keys_t + d_values_t
        grads["text_attn_w"] += np.outer(dt_query, trace.h_prev)
        dh_prev = dh_prev + params["text_attn_w"].T @ dt_query

        # dh now carries the attention-query gradients into the previous
        # step's h output; dm already holds dc_in for its memory output
        dh = dh_prev

    encoder_backward(params, encoder_trace, d_states, grads)
    return grads


def _lstm_h(trace: StepTrace) -> np.ndarray:
    """The h output of the step's policy cell, recomputed from its cache."""
    cache = trace.lstm_cache
    return cache.o * np.tanh(cache.c)


# --------------------------------------------------------------------------
# joint loss
# --------------------------------------------------------------------------

@dataclass
class LossBreakdown:
    total: float
    action_term: float
    shift_term: float
    n_action_terms: int
    n_shift_terms: int
    sampled_steps: list[int] = field(default_factory=list)


def balanced_shift_sample(shift_targets: list[int], seed: int) -> list[int]:
    """Indices of an equal number of shift and do-not-shift steps.

    min(#positives, #negatives) steps are drawn from each class without
    replacement using the seeded generator; an empty class empties the
    sample entirely (with a warning).
    """
    rng = np.random.default_rng(seed)
    positives = [i for i, y in enumerate(shift_targets) if y == 1]
    negatives = [i for i, y in enumerate(shift_targets) if y == 0]
    take = min(len(positives), len(negatives))
    if take == 0:
        missing = "positive" if not positives else "negative"
        warnings.warn(f"no {missing} shift samples; shift loss term is empty")
        return []
    chosen_pos = rng.choice(len(positives), size=take, replace=False)
    chosen_neg = rng.choice(len(negatives), size=take, replace=False)
    sampled = [positives[i] for i in chosen_pos] + \
              [negatives[i] for i in chosen_neg]
    return sorted(sampled)


def joint_loss(action_probs: list[np.ndarray], action_targets: list[int],
               shift_probs: list[float], shift_targets: list[int],
               balance_seed: int):
    """Action cross-entropy plus class-balanced shift binary cross-entropy.

    Returns (breakdown, d_action_logits, d_shift_logits) where the gradient
    lists are aligned with the per-step inputs and expressed at the logit
    level (softmax and sigmoid respectively).
    """
    if len(action_probs) != len(action_targets):
        raise ShapeError("action probs/targets length mismatch")
    if len(shift_probs) != len(shift_targets):
        raise ShapeError("shift probs/targets length mismatch")

    action_term = 0.0
    d_action_logits: list[np.ndarray] = []
    for probs, target in zip(action_probs, action_targets):
        if not 0 <= target < probs.shape[0]:
            raise ShapeError(f"action target {target} out of range")
        action_term -= float(np.log(max(probs[target], PROB_FLOOR)))
        d = probs.copy()
        d[target] -= 1.0
        d_action_logits.append(d)

    sampled = balanced_shift_sample(shift_targets, balance_seed)
    shift_term = 0.0
    d_shift_logits = [0.0] * len(shift_probs)
    for idx in sampled:
        p = min(max(shift_probs[idx], PROB_FLOOR), 1.0 - PROB_FLOOR)
        y = shift_targets[idx]
        shift_term -= y * np.log(p) + (1 - y) * np.log(1.0 - p)
        d_shift_logits[idx] = p - y
    breakdown = LossBreakdown(
        total=action_term + float(shift_term),
        action_term=action_term,
        shift_term=float(shift_term),
        n_action_terms=len(action_probs),
        n_shift_terms=len(sampled),
        sampled_steps=sampled,
    )
    return breakdown, d_action_logits, d_shift_logits
