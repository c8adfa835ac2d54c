"""Belief encoders, stochastic action heads, and critics.

Every protocol variant shares the same actor/critic head structure and
differs only in how the recurrent belief is updated from the inbox:

* ``ours``     LSTM over the previous belief and a concatenation of
               per-neighbor encodings of states, fingerprints, and beliefs
               (no pre-averaging).
* ``ia2c``     LSTM over the own encoded state only.
* ``consenet`` same recurrence as ia2c; critics are consensus-averaged by
               the trainer after each update.
* ``fprint``   own encoded state concatenated with encoded neighbor
               fingerprints.
* ``commnet``  mean-aggregated neighbor beliefs (lossy by design) added to
               an encoding of the mean over own-plus-neighbor states.
* ``dial``     summation aggregation of encoded states, re-encoded own
               belief, and the previous own action one-hot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PolicyDims:
    """Static sizes shared by encoders, heads, and critics."""

    encoder_size: int
    hidden_size: int
    max_degree: int
    ma_count: int
    num_gts: int
    num_phases: int
    t_min: float
    t_max: float
    state_dim: int = 3
    num_headings: int = 5
    num_verticals: int = 3

    @property
    def fingerprint_dim(self) -> int:
        # four head distributions plus the squashed means of both continuous heads
        return self.num_headings + self.num_verticals + self.ma_count + self.num_gts + 2

    @property
    def discrete_action_dim(self) -> int:
        return self.num_headings + self.num_verticals + self.ma_count + self.num_gts

    @property
    def action_vector_dim(self) -> int:
        return self.discrete_action_dim + 1 + self.num_phases

    def lstm_input_dim(self, variant: str) -> int:
        e, d = self.encoder_size, self.max_degree
        if variant == "ours":
            return e * (1 + 3 * d)
        if variant in ("ia2c", "consenet", "commnet", "dial"):
            return e
        if variant == "fprint":
            return e * (1 + d)
        raise ValueError(f"unknown variant {variant!r}")


@dataclass
class BeliefState:
    hidden: Tensor
    cell: Tensor


def initial_belief(dims: PolicyDims) -> BeliefState:
    z = np.zeros(dims.hidden_size)
    return BeliefState(Tensor(z), Tensor(z.copy()))


def uniform_fingerprint(dims: PolicyDims) -> np.ndarray:
    """Bootstrap fingerprint for the first slot: uniform heads, centered means."""
    parts = [
        np.full(dims.num_headings, 1.0 / dims.num_headings),
        np.full(dims.num_verticals, 1.0 / dims.num_verticals),
        np.full(dims.ma_count, 1.0 / dims.ma_count),
        np.full(dims.num_gts, 1.0 / dims.num_gts),
        np.array([0.5, 0.5]),
    ]
    return np.concatenate(parts)


@dataclass
class PolicyOutput:
    probs: dict[str, Tensor]
    heading: int
    vertical: int
    ma: int  # 0-based head sample; body slot index is ma + 1
    gt_vote: int
    slot_time: float
    phases: np.ndarray
    log_prob: Tensor
    entropy: Tensor
    fingerprint: Tensor

    def action_vector(self, dims: PolicyDims) -> np.ndarray:
        """Flat one-hot/normalized encoding used as critic input."""
        vec = np.zeros(dims.action_vector_dim)
        off = 0
        for idx, k in (
            (self.heading, dims.num_headings),
            (self.vertical, dims.num_verticals),
            (self.ma, dims.ma_count),
            (self.gt_vote, dims.num_gts),
        ):
            vec[off + idx] = 1.0
            off += k
        vec[off] = (self.slot_time - dims.t_min) / (dims.t_max - dims.t_min)
        vec[off + 1 :] = self.phases / math.pi
        return vec


# ---------------------------------------------------------------------------
# parameters


def build_params(variant: str, dims: PolicyDims, rng: np.random.Generator) -> dict[str, Tensor]:
    """Actor parameter set for one agent; keys are stable across runs."""
    e, u, f = dims.encoder_size, dims.hidden_size, dims.fingerprint_dim
    p: dict[str, Tensor] = {}

    def add(name, shape, fan_in):
        p[name] = ad.uniform_init(rng, shape, fan_in, name=name)

    add("enc_s_w", (e, dims.state_dim), dims.state_dim)
    add("enc_s_b", (e,), dims.state_dim)
    if variant in ("ours", "fprint"):
        add("enc_p_w", (e, f), f)
        add("enc_p_b", (e,), f)
    if variant == "ours":
        add("enc_h_w", (e, u), u)
        add("enc_h_b", (e,), u)
    if variant == "commnet":
        add("comm_w", (e, u), u)
        add("comm_b", (e,), u)
    if variant == "dial":
        add("enc_hh_w", (e, u), u)
        add("enc_hh_b", (e,), u)
        add("enc_a_w", (e, dims.discrete_action_dim), dims.discrete_action_dim)
        add("enc_a_b", (e,), dims.discrete_action_dim)

    d_in = dims.lstm_input_dim(variant)
    add("lstm_wx", (4 * u, d_in), d_in)
    add("lstm_wh", (4 * u, u), u)
    add("lstm_b", (4 * u,), u)

    for head, k in (
        ("heading", dims.num_headings),
        ("vertical", dims.num_verticals),
        ("ma", dims.ma_count),
        ("gt", dims.num_gts),
    ):
        add(f"head_{head}_w", (k, u), u)
        add(f"head_{head}_b", (k,), u)
    add("t_mu_w", (1, u), u)
    add("t_mu_b", (1,), u)
    add("ph_mu_w", (dims.num_phases, u), u)
    add("ph_mu_b", (dims.num_phases,), u)
    p["t_log_std"] = Tensor(np.full(1, -0.5), requires_grad=True, name="t_log_std")
    p["ph_log_std"] = Tensor(
        np.full(dims.num_phases, -0.5), requires_grad=True, name="ph_log_std"
    )
    return p


def build_critic_params(dims: PolicyDims, rng: np.random.Generator) -> dict[str, Tensor]:
    width = dims.hidden_size + dims.max_degree * dims.action_vector_dim
    return {
        "v_w": ad.uniform_init(rng, (1, width), width, name="v_w"),
        "v_b": ad.uniform_init(rng, (1,), width, name="v_b"),
    }


# ---------------------------------------------------------------------------
# belief encoders


def _enc(p: dict[str, Tensor], prefix: str, x: Tensor) -> Tensor:
    return ad.relu(ad.linear(p[f"{prefix}_w"], p[f"{prefix}_b"], x))


def _pad(parts: list[Tensor], count: int, width: int) -> list[Tensor]:
    out = list(parts[:count])
    while len(out) < count:
        out.append(Tensor(np.zeros(width)))
    return out


def _lstm(p: dict[str, Tensor], x: Tensor, prev: BeliefState) -> BeliefState:
    h, c = ad.lstm_step(p["lstm_wx"], p["lstm_wh"], p["lstm_b"], x, prev.hidden, prev.cell)
    return BeliefState(h, c)


def mean_tensors(parts: list[Tensor], width: int) -> Tensor:
    """Elementwise mean of same-shape vectors; zeros when the list is empty."""
    if not parts:
        return Tensor(np.zeros(width))
    acc = parts[0]
    for t in parts[1:]:
        acc = ad.add(acc, t)
    return ad.scale(acc, 1.0 / len(parts))


def encode_belief_ours(
    p: dict[str, Tensor],
    dims: PolicyDims,
    prev: BeliefState,
    own_state: np.ndarray,
    nb_states: list[np.ndarray],
    nb_fingerprints: list[Tensor],
    nb_beliefs: list[Tensor],
) -> BeliefState:
    """Per-neighbor encoding, concatenation (no averaging), then the LSTM.

    Neighbor lists must be ordered by ascending agent id; slots beyond the
    configured max degree are dropped, missing ones are zero-padded after
    encoding so empty slots are inert.
    """
    e, d = dims.encoder_size, dims.max_degree
    state_parts = [_enc(p, "enc_s", Tensor(own_state))]
    state_parts += [_enc(p, "enc_s", Tensor(s)) for s in nb_states[:d]]
    fp_parts = [_enc(p, "enc_p", fp) for fp in nb_fingerprints[:d]]
    bel_parts = [_enc(p, "enc_h", b) for b in nb_beliefs[:d]]
    x = ad.concat(
        _pad(state_parts, 1 + d, e) + _pad(fp_parts, d, e) + _pad(bel_parts, d, e)
    )
    return _lstm(p, x, prev)


def encode_belief_baseline(
    variant: str,
    p: dict[str, Tensor],
    dims: PolicyDims,
    prev: BeliefState,
    own_state: np.ndarray,
    nb_states: list[np.ndarray],
    nb_fingerprints: list[Tensor],
    nb_beliefs: list[Tensor],
    prev_action_onehot: np.ndarray | None = None,
) -> BeliefState:
    """Baseline recurrences; each consumes exactly the inputs its variant lists."""
    if variant in ("ia2c", "consenet"):
        x = _enc(p, "enc_s", Tensor(own_state))
    elif variant == "fprint":
        own = _enc(p, "enc_s", Tensor(own_state))
        fp_parts = [_enc(p, "enc_p", fp) for fp in nb_fingerprints[: dims.max_degree]]
        x = ad.concat([own] + _pad(fp_parts, dims.max_degree, dims.encoder_size))
    elif variant == "commnet":
        members = [np.asarray(own_state, dtype=float)] + [np.asarray(s, float) for s in nb_states]
        mean_state = np.mean(members, axis=0)
        state_term = ad.tanh(ad.linear(p["enc_s_w"], p["enc_s_b"], Tensor(mean_state)))
        mean_belief = mean_tensors(list(nb_beliefs), dims.hidden_size)
        comm_term = ad.linear(p["comm_w"], p["comm_b"], mean_belief)
        x = ad.add(state_term, comm_term)
    elif variant == "dial":
        if prev_action_onehot is None:
            raise ValueError("dial needs the previous own action one-hot")
        summed_state = np.asarray(own_state, dtype=float).copy()
        for s in nb_states:
            summed_state += np.asarray(s, dtype=float)
        term_s = _enc(p, "enc_s", Tensor(summed_state))
        term_h = ad.relu(ad.linear(p["enc_hh_w"], p["enc_hh_b"], ad.relu(prev.hidden)))
        term_a = ad.linear(p["enc_a_w"], p["enc_a_b"], Tensor(prev_action_onehot))
        x = ad.add(ad.add(term_s, term_h), term_a)
    else:
        raise ValueError(f"unknown baseline variant {variant!r}")
    return _lstm(p, x, prev)


def encode_belief(
    variant: str,
    p: dict[str, Tensor],
    dims: PolicyDims,
    prev: BeliefState,
    own_state: np.ndarray,
    nb_states: list[np.ndarray],
    nb_fingerprints: list[Tensor],
    nb_beliefs: list[Tensor],
    prev_action_onehot: np.ndarray | None = None,
) -> BeliefState:
    if variant == "ours":
        return encode_belief_ours(p, dims, prev, own_state, nb_states, nb_fingerprints, nb_beliefs)
    return encode_belief_baseline(
        variant, p, dims, prev, own_state, nb_states, nb_fingerprints, nb_beliefs,
        prev_action_onehot,
    )


# ---------------------------------------------------------------------------
# action heads


def _tanh_correction(z: np.ndarray, half_range: float) -> float:
    """Constant log| d(half_range*tanh(z))/dz | summed over dimensions."""
    z = np.asarray(z, dtype=float)
    # log(1 - tanh(z)^2) = 2*(log 2 - z - softplus(-2z)), numerically stable
    log_sech2 = 2.0 * (math.log(2.0) - z - np.logaddexp(0.0, -2.0 * z))
    return float(np.sum(math.log(half_range) + log_sech2))


def _squash(z: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return lo + (hi - lo) * 0.5 * (np.tanh(z) + 1.0)


# tanh rounds to exactly 1.0 for |z| > ~19, which would put a phase at pi itself;
# the constraint interval is half-open so clamp to the float just below
_PHASE_MAX = float(np.nextafter(math.pi, 0.0))


def act(
    p: dict[str, Tensor],
    dims: PolicyDims,
    belief: BeliefState,
    rng: np.random.Generator,
    greedy: bool = False,
) -> PolicyOutput:
    """Sample the six action components from the current belief.

    Discrete heads are categorical; slot time and surface phases come from
    tanh-squashed Gaussians mapped into their constraint boxes, with the
    squash correction folded into the log-probability.
    """
    h = belief.hidden
    probs: dict[str, Tensor] = {}
    samples: dict[str, int] = {}
    log_prob_terms: list[Tensor] = []
    entropy_terms: list[Tensor] = []
    for head, k in (
        ("heading", dims.num_headings),
        ("vertical", dims.num_verticals),
        ("ma", dims.ma_count),
        ("gt", dims.num_gts),
    ):
        logits = ad.linear(p[f"head_{head}_w"], p[f"head_{head}_b"], h)
        prob = ad.softmax(logits)
        logp = ad.log_softmax(logits)
        pv = prob.data / np.sum(prob.data)
        idx = int(np.argmax(pv)) if greedy else int(rng.choice(k, p=pv))
        probs[head] = prob
        samples[head] = idx
        log_prob_terms.append(ad.take(logp, idx))
        entropy_terms.append(ad.neg(ad.dot(prob, logp)))

    # slot-time head
    t_mu = ad.linear(p["t_mu_w"], p["t_mu_b"], h)
    t_std = float(np.exp(p["t_log_std"].data[0]))
    z_t = t_mu.data.copy() if greedy else t_mu.data + t_std * rng.standard_normal(1)
    slot_time = float(_squash(z_t, dims.t_min, dims.t_max)[0])
    log_prob_terms.append(
        ad.add(
            ad.gaussian_log_prob(t_mu, p["t_log_std"], z_t),
            ad.constant(-_tanh_correction(z_t, 0.5 * (dims.t_max - dims.t_min))),
        )
    )
    entropy_terms.append(ad.tsum(ad.add(p["t_log_std"], ad.constant(np.full(1, 0.5 * (LOG_2PI + 1.0))))))

    # phase head
    ph_mu = ad.linear(p["ph_mu_w"], p["ph_mu_b"], h)
    ph_std = np.exp(p["ph_log_std"].data)
    z_ph = ph_mu.data.copy() if greedy else ph_mu.data + ph_std * rng.standard_normal(dims.num_phases)
    phases = np.clip(math.pi * np.tanh(z_ph), -math.pi, _PHASE_MAX)
    log_prob_terms.append(
        ad.add(
            ad.gaussian_log_prob(ph_mu, p["ph_log_std"], z_ph),
            ad.constant(-_tanh_correction(z_ph, math.pi)),
        )
    )
    entropy_terms.append(
        ad.tsum(ad.add(p["ph_log_std"], ad.constant(np.full(dims.num_phases, 0.5 * (LOG_2PI + 1.0)))))
    )

    log_prob = log_prob_terms[0]
    for term in log_prob_terms[1:]:
        log_prob = ad.add(log_prob, term)
    entropy = entropy_terms[0]
    for term in entropy_terms[1:]:
        entropy = ad.add(entropy, term)

    fingerprint = ad.concat(
        [
            probs["heading"],
            probs["vertical"],
            probs["ma"],
            probs["gt"],
            ad.scale(ad.add(ad.tanh(t_mu), ad.constant(np.ones(1))), 0.5),
            ad.scale(ad.add(ad.tmean(ad.tanh(ph_mu)), ad.constant(np.ones(()))), 0.5),
        ]
    )

    return PolicyOutput(
        probs=probs,
        heading=samples["heading"],
        vertical=samples["vertical"],
        ma=samples["ma"],
        gt_vote=samples["gt"],
        slot_time=slot_time,
        phases=phases,
        log_prob=log_prob,
        entropy=entropy,
        fingerprint=fingerprint,
    )


def value(critic: dict[str, Tensor], belief_hidden: Tensor, neighbor_actions: np.ndarray) -> Tensor:
    """Linear critic over the belief and the zero-padded neighbor-action block."""
    x = ad.concat([belief_hidden, Tensor(np.asarray(neighbor_actions, dtype=float))])
    return ad.take(ad.linear(critic["v_w"], critic["v_b"], x), 0)


def neighbor_action_block(
    dims: PolicyDims, neighbor_ids: tuple[int, ...], outputs: list[PolicyOutput]
) -> np.ndarray:
    """Fixed-width concatenation of neighbor action vectors, ascending id."""
    block = np.zeros(dims.max_degree * dims.action_vector_dim)
    for slot, nb in enumerate(neighbor_ids[: dims.max_degree]):
        vec = outputs[nb].action_vector(dims)
        block[slot * dims.action_vector_dim : (slot + 1) * dims.action_vector_dim] = vec
    return block
