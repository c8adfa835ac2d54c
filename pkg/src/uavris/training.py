"""Rollout collection, spatiotemporal return targets, actor/critic losses,
consensus critic averaging, and the training / evaluation loops.

Actors are trained with an advantage actor-critic whose return target mixes
a temporal discount with a spatial discount over communication-graph hop
distance, so distant agents' rewards are exponentially down-weighted.  One
autodiff tape spans an entire rollout batch, which lets actor gradients flow
through delivered messages into neighboring agents' encoders.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import policies
from .autodiff import Adam, Tape, Tensor
from .comm import CommGraph, build_graph, compose_message, deliver
from .config import ExperimentConfig, derive_seed
from .environment import Environment, EpisodeLog, JointAction, WorldState, global_reward
from .policies import BeliefState, PolicyDims, PolicyOutput

LOSS_GUARD = 1e6


class TrainingDiverged(RuntimeError):
    pass


def policy_dims(cfg: ExperimentConfig) -> PolicyDims:
    return PolicyDims(
        encoder_size=cfg.encoder_size,
        hidden_size=cfg.hidden_size,
        max_degree=cfg.effective_max_degree,
        ma_count=cfg.ma_count,
        num_gts=cfg.num_gts,
        num_phases=cfg.ris_rows * cfg.ris_cols,
        t_min=cfg.t_min,
        t_max=cfg.t_max,
    )


def local_state_vector(env: Environment, state: WorldState, j: int) -> np.ndarray:
    """Normalized (x, y, level) observation of one UAV's own pose."""
    cfg = env.cfg
    s = state.uav_states[j]
    return np.array(
        [
            s.cell[0] / max(1, cfg.grid_x - 1),
            s.cell[1] / max(1, cfg.grid_y - 1),
            (s.altitude_level - cfg.min_level) / max(1, cfg.max_level - cfg.min_level),
        ]
    )


def discrete_onehot(out: PolicyOutput, dims: PolicyDims) -> np.ndarray:
    vec = np.zeros(dims.discrete_action_dim)
    off = 0
    for idx, k in (
        (out.heading, dims.num_headings),
        (out.vertical, dims.num_verticals),
        (out.ma, dims.ma_count),
        (out.gt_vote, dims.num_gts),
    ):
        vec[off + idx] = 1.0
        off += k
    return vec


def _bootstrap_onehot(dims: PolicyDims) -> np.ndarray:
    vec = np.zeros(dims.discrete_action_dim)
    off = 0
    for k in (dims.num_headings, dims.num_verticals, dims.ma_count, dims.num_gts):
        vec[off] = 1.0
        off += k
    return vec


# ---------------------------------------------------------------------------
# returns, advantages, losses


def spatial_weights(alpha: float, hops: np.ndarray) -> np.ndarray:
    """alpha**hops with alpha**inf := 0 (also at alpha = 1) and 0**0 := 1."""
    w = np.zeros_like(hops, dtype=float)
    finite = np.isfinite(hops)
    if alpha == 0.0:
        w[hops == 0.0] = 1.0
    else:
        w[finite] = alpha ** hops[finite]
    return w


def spatiotemporal_return(
    rewards: np.ndarray,
    alpha: float,
    gamma: float,
    hop_matrices: list[np.ndarray],
    bootstrap_values: np.ndarray | None = None,
    tail_hops: np.ndarray | None = None,
) -> np.ndarray:
    """Per-agent discounted return over the batch.

    ``rewards`` is (T, J); entry (n, j) of the result sums
    gamma**(m-n) * sum_i alpha**d_ji[m] * rewards[m, i] over m >= n, plus a
    spatially weighted bootstrap tail when tail values are given.
    """
    rewards = np.asarray(rewards, dtype=float)
    t_len, j = rewards.shape
    out = np.zeros((t_len, j))
    if bootstrap_values is not None:
        tail = spatial_weights(alpha, tail_hops) @ np.asarray(bootstrap_values, dtype=float)
    else:
        tail = np.zeros(j)
    running = tail
    for n in range(t_len - 1, -1, -1):
        local_mix = spatial_weights(alpha, hop_matrices[n]) @ rewards[n]
        running = local_mix + gamma * running
        out[n] = running
    return out


def advantage(returns: np.ndarray, values: np.ndarray) -> np.ndarray:
    """returns - values, both detached from the graph (constants in the actor loss)."""
    return np.asarray(returns, dtype=float) - np.asarray(values, dtype=float)


@dataclass
class RolloutBatch:
    """Everything recorded over one on-tape segment of at most rollout_len slots."""

    log_probs: list[list[Tensor]] = field(default_factory=list)  # [t][j]
    entropies: list[list[Tensor]] = field(default_factory=list)
    values: list[list[Tensor]] = field(default_factory=list)
    env_rewards: list[np.ndarray] = field(default_factory=list)  # raw per-slot rewards
    scaled_rewards: list[np.ndarray] = field(default_factory=list)
    hop_matrices: list[np.ndarray] = field(default_factory=list)
    belief_snaps: list[list[np.ndarray]] = field(default_factory=list)
    action_blocks: list[list[np.ndarray]] = field(default_factory=list)
    last_graph: CommGraph | None = None
    bootstrap: np.ndarray | None = None
    tail_hops: np.ndarray | None = None

    @property
    def length(self) -> int:
        return len(self.log_probs)

    @property
    def num_agents(self) -> int:
        return len(self.log_probs[0])

    def value_array(self) -> np.ndarray:
        return np.array([[v.item() for v in row] for row in self.values])

    def reward_array(self) -> np.ndarray:
        return np.stack(self.scaled_rewards)


def actor_loss(
    batch: RolloutBatch, advantages: np.ndarray, beta: float, entropy_sign: str = "paper"
) -> tuple[Tensor, np.ndarray]:
    """Batch-mean policy-gradient loss summed over agents.

    The advantage enters as a constant; the entropy term is added with the
    sign given by ``entropy_sign`` ("paper" adds +beta*H to the minimized
    loss, "conventional" subtracts it).
    """
    t_len, j = batch.length, batch.num_agents
    sign = 1.0 if entropy_sign == "paper" else -1.0
    per_agent = np.zeros(j)
    total: Tensor | None = None
    for agent in range(j):
        acc: Tensor | None = None
        for t in range(t_len):
            term = ad.scale(batch.log_probs[t][agent], -float(advantages[t, agent]))
            if beta != 0.0:
                term = ad.add(term, ad.scale(batch.entropies[t][agent], sign * beta))
            acc = term if acc is None else ad.add(acc, term)
        loss_j = ad.scale(acc, 1.0 / t_len)
        per_agent[agent] = loss_j.item()
        total = loss_j if total is None else ad.add(total, loss_j)
    return total, per_agent


def critic_loss(batch: RolloutBatch, returns: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Batch-mean squared error between return targets and critic values."""
    t_len, j = batch.length, batch.num_agents
    per_agent = np.zeros(j)
    total: Tensor | None = None
    for agent in range(j):
        acc: Tensor | None = None
        for t in range(t_len):
            diff = ad.add(ad.constant(returns[t, agent]), ad.neg(batch.values[t][agent]))
            sq = ad.mul(diff, diff)
            acc = sq if acc is None else ad.add(acc, sq)
        loss_j = ad.scale(acc, 1.0 / t_len)
        per_agent[agent] = loss_j.item()
        total = loss_j if total is None else ad.add(total, loss_j)
    return total, per_agent


def consensus_update(critic_params: list[dict[str, Tensor]], graph: CommGraph) -> None:
    """Replace every agent's critic parameters by its closed-neighborhood mean."""
    means = []
    for j in range(len(critic_params)):
        group = [j] + list(graph.neighbors[j])
        means.append(
            {
                name: np.mean([critic_params[i][name].data for i in group], axis=0)
                for name in critic_params[j]
            }
        )
    for j, mean in enumerate(means):
        for name, data in mean.items():
            critic_params[j][name].data = data


# ---------------------------------------------------------------------------
# fleet controller: per-slot message passing, belief updates, and acting


class FleetController:
    """Holds per-agent parameters and the recurrent message-passing state."""

    def __init__(
        self,
        cfg: ExperimentConfig,
        dims: PolicyDims,
        params: list[dict[str, Tensor]],
        critics: list[dict[str, Tensor]],
    ):
        self.cfg = cfg
        self.dims = dims
        self.params = params
        self.critics = critics
        self.reset_memory()

    @classmethod
    def build(cls, cfg: ExperimentConfig, seed: int) -> "FleetController":
        dims = policy_dims(cfg)
        if cfg.share_parameters:
            shared = policies.build_params(cfg.variant, dims, np.random.default_rng(derive_seed(seed, "actor:0")))
            shared_c = policies.build_critic_params(dims, np.random.default_rng(derive_seed(seed, "critic:0")))
            params = [shared] * cfg.num_uavs
            critics = [shared_c] * cfg.num_uavs
        else:
            params = [
                policies.build_params(cfg.variant, dims, np.random.default_rng(derive_seed(seed, f"actor:{j}")))
                for j in range(cfg.num_uavs)
            ]
            critics = [
                policies.build_critic_params(dims, np.random.default_rng(derive_seed(seed, f"critic:{j}")))
                for j in range(cfg.num_uavs)
            ]
        return cls(cfg, dims, params, critics)

    def reset_memory(self) -> None:
        j = self.cfg.num_uavs
        self.beliefs = [policies.initial_belief(self.dims) for _ in range(j)]
        self.fingerprints: list[Tensor] = [
            Tensor(policies.uniform_fingerprint(self.dims)) for _ in range(j)
        ]
        self.prev_action_onehot = [_bootstrap_onehot(self.dims) for _ in range(j)]

    def detach_memory(self) -> None:
        """Cut the recurrence at a batch boundary (truncated backprop)."""
        self.beliefs = [BeliefState(b.hidden.detach(), b.cell.detach()) for b in self.beliefs]
        self.fingerprints = [fp.detach() for fp in self.fingerprints]

    def slot(
        self,
        env: Environment,
        state: WorldState,
        rngs: list[np.random.Generator],
        greedy: bool = False,
    ) -> tuple[CommGraph, list[PolicyOutput], JointAction]:
        """Synchronous compose/deliver/encode/act round for one slot."""
        cfg, dims = self.cfg, self.dims
        j = cfg.num_uavs
        graph = build_graph(env.positions(state), cfg.comm_radius)
        state_vecs = [local_state_vector(env, state, i) for i in range(j)]
        messages = [
            compose_message(i, state.slot_index, state_vecs[i], self.fingerprints[i], self.beliefs[i].hidden)
            for i in range(j)
        ]
        inboxes = deliver(graph, messages)

        outputs: list[PolicyOutput] = []
        new_beliefs: list[BeliefState] = []
        for i in range(j):
            inbox = inboxes[i]
            belief = policies.encode_belief(
                cfg.variant,
                self.params[i],
                dims,
                self.beliefs[i],
                state_vecs[i],
                [m.state for m in inbox],
                [m.fingerprint for m in inbox],
                [m.belief for m in inbox],
                self.prev_action_onehot[i],
            )
            new_beliefs.append(belief)
            outputs.append(policies.act(self.params[i], dims, belief, rngs[i], greedy=greedy))

        self.beliefs = new_beliefs
        self.fingerprints = [out.fingerprint for out in outputs]
        self.prev_action_onehot = [discrete_onehot(out, dims) for out in outputs]

        action = JointAction(
            heading=np.array([o.heading for o in outputs]),
            vertical=np.array([o.vertical for o in outputs]),
            ma=np.array([o.ma + 1 for o in outputs]),
            gt_vote=np.array([o.gt_vote for o in outputs]),
            slot_time=np.array([o.slot_time for o in outputs]),
            phases=np.stack([o.phases for o in outputs]),
        )
        return graph, outputs, action

    def tail_values(self, env: Environment, state: WorldState) -> tuple[np.ndarray, np.ndarray]:
        """Bootstrap critic values for the state after the last batch slot.

        Computed off-tape with an empty neighbor-action block; the belief
        recurrence itself is not advanced.
        """
        cfg, dims = self.cfg, self.dims
        j = cfg.num_uavs
        graph = build_graph(env.positions(state), cfg.comm_radius)
        state_vecs = [local_state_vector(env, state, i) for i in range(j)]
        messages = [
            compose_message(i, state.slot_index, state_vecs[i], self.fingerprints[i].detach(), self.beliefs[i].hidden.detach())
            for i in range(j)
        ]
        inboxes = deliver(graph, messages)
        values = np.zeros(j)
        zero_block = np.zeros(dims.max_degree * dims.action_vector_dim)
        for i in range(j):
            inbox = inboxes[i]
            belief = policies.encode_belief(
                cfg.variant,
                self.params[i],
                dims,
                BeliefState(self.beliefs[i].hidden.detach(), self.beliefs[i].cell.detach()),
                state_vecs[i],
                [m.state for m in inbox],
                [m.fingerprint for m in inbox],
                [m.belief for m in inbox],
                self.prev_action_onehot[i],
            )
            values[i] = policies.value(self.critics[i], belief.hidden.detach(), zero_block).item()
        return values, graph.hops


# ---------------------------------------------------------------------------
# training


@dataclass
class EpisodeMetrics:
    episode: int
    reward: float
    td_error: float
    adv_error: float
    actor_loss: float
    critic_loss: float


@dataclass
class TrainResult:
    metrics: list[EpisodeMetrics]
    controller: FleetController
    cfg: ExperimentConfig
    seed: int


def _collect_batch(
    env: Environment,
    controller: FleetController,
    state: WorldState,
    rngs: list[np.random.Generator],
    log: EpisodeLog,
) -> tuple[RolloutBatch, WorldState, bool]:
    cfg, dims = controller.cfg, controller.dims
    batch = RolloutBatch()
    for _ in range(cfg.rollout_len):
        graph, outputs, action = controller.slot(env, state, rngs)
        outcome = env.step(state, action)
        log.append(state, action, outcome)

        values_row: list[Tensor] = []
        blocks_row: list[np.ndarray] = []
        snaps_row: list[np.ndarray] = []
        for i in range(cfg.num_uavs):
            block = policies.neighbor_action_block(dims, graph.neighbors[i], outputs)
            hidden = controller.beliefs[i].hidden
            values_row.append(policies.value(controller.critics[i], hidden.detach(), block))
            blocks_row.append(block)
            snaps_row.append(hidden.data.copy())
        batch.log_probs.append([o.log_prob for o in outputs])
        batch.entropies.append([o.entropy for o in outputs])
        batch.values.append(values_row)
        batch.env_rewards.append(outcome.rewards.copy())
        batch.scaled_rewards.append(outcome.rewards * cfg.reward_scale)
        batch.hop_matrices.append(graph.hops.copy())
        batch.belief_snaps.append(snaps_row)
        batch.action_blocks.append(blocks_row)
        batch.last_graph = graph

        state = outcome.state
        if env.episode_done(state)[0]:
            return batch, state, True
    # batch boundary inside the episode: bootstrap from the critic
    batch.bootstrap, batch.tail_hops = controller.tail_values(env, state)
    return batch, state, False


def _recompute_values(critics, batch: RolloutBatch) -> np.ndarray:
    """Post-update critic values on the stored (belief, action-block) pairs."""
    t_len, j = batch.length, batch.num_agents
    out = np.zeros((t_len, j))
    for t in range(t_len):
        for i in range(j):
            x = np.concatenate([batch.belief_snaps[t][i], batch.action_blocks[t][i]])
            c = critics[i]
            out[t, i] = float((c["v_w"].data @ x)[0]) + float(c["v_b"].data[0])
    return out


def train(
    cfg: ExperimentConfig,
    seed: int,
    checkpoint_dir: Path | None = None,
    on_episode=None,
) -> TrainResult:
    """Full training run for one (config, seed); returns per-episode metrics.

    ``on_episode`` is called with each EpisodeMetrics as it completes, which
    lets the caller stream rows to disk.
    """
    env = Environment(cfg)
    controller = FleetController.build(cfg, seed)
    dims = controller.dims

    actor_opts = []
    critic_opts = []
    seen: set[int] = set()
    for i in range(cfg.num_uavs):
        if id(controller.params[i]) in seen:
            continue
        seen.add(id(controller.params[i]))
        actor_opts.append(Adam(controller.params[i], cfg.lr_actor))
        critic_opts.append(Adam(controller.critics[i], cfg.lr_critic))

    rngs = [np.random.default_rng(derive_seed(seed, f"sample:{i}")) for i in range(cfg.num_uavs)]
    env_seed = derive_seed(seed, "env")

    metrics: list[EpisodeMetrics] = []
    for episode in range(cfg.episodes):
        state = env.reset(env_seed)
        controller.reset_memory()
        log = EpisodeLog()
        done = False
        td_sum = adv_sum = 0.0
        aloss_sum = closs_sum = 0.0
        n_samples = 0
        n_batches = 0
        while not done:
            controller.detach_memory()
            with Tape() as tape:
                batch, state, done = _collect_batch(env, controller, state, rngs, log)
                returns = spatiotemporal_return(
                    batch.reward_array(),
                    cfg.alpha,
                    cfg.gamma,
                    batch.hop_matrices,
                    batch.bootstrap,
                    batch.tail_hops,
                )
                adv = advantage(returns, batch.value_array())
                a_total, a_per = actor_loss(batch, adv, cfg.beta, cfg.entropy_sign)
                c_total, c_per = critic_loss(batch, returns)
                if not (np.all(np.isfinite(a_per)) and np.all(np.isfinite(c_per))):
                    raise TrainingDiverged("non-finite loss")
                if np.max(np.abs(a_per)) > LOSS_GUARD or np.max(np.abs(c_per)) > LOSS_GUARD:
                    raise TrainingDiverged(
                        f"loss exceeded {LOSS_GUARD:g} at episode {episode}"
                    )
                for opt in actor_opts + critic_opts:
                    opt.zero_grad()
                tape.backward(ad.add(a_total, c_total))
            for opt in actor_opts + critic_opts:
                opt.step()
            if cfg.variant == "consenet" and not cfg.share_parameters:
                consensus_update(controller.critics, batch.last_graph)

            post_values = _recompute_values(controller.critics, batch)
            td_sum += float(np.sum(np.abs(returns - post_values)))
            adv_sum += float(np.sum((returns - post_values) ** 2))
            n_samples += batch.length * batch.num_agents
            aloss_sum += float(np.mean(a_per))
            closs_sum += float(np.mean(c_per))
            n_batches += 1

        ep_reward = float(np.mean([global_reward(r) for r in log.rewards]))
        episode_metrics = EpisodeMetrics(
            episode=episode,
            reward=ep_reward,
            td_error=td_sum / n_samples,
            adv_error=adv_sum / n_samples,
            actor_loss=aloss_sum / n_batches,
            critic_loss=closs_sum / n_batches,
        )
        metrics.append(episode_metrics)
        if on_episode is not None:
            on_episode(episode_metrics)
        if checkpoint_dir is not None and (
            (episode + 1) % cfg.checkpoint_every == 0 or episode + 1 == cfg.episodes
        ):
            save_checkpoint(Path(checkpoint_dir) / f"ckpt_ep{episode + 1}.npz", controller)
    return TrainResult(metrics=metrics, controller=controller, cfg=cfg, seed=seed)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalEpisode:
    seed: int
    episode: int
    log: EpisodeLog


def evaluate(
    controller: FleetController,
    cfg: ExperimentConfig,
    seeds: list[int],
    episodes_per_seed: int = 1,
    greedy: bool = True,
) -> list[EvalEpisode]:
    """Greedy (or sampled) rollouts without learning; returns per-episode logs."""
    env = Environment(cfg)
    results = []
    for seed in seeds:
        rngs = [
            np.random.default_rng(derive_seed(seed, f"eval-sample:{i}"))
            for i in range(cfg.num_uavs)
        ]
        for episode in range(episodes_per_seed):
            state = env.reset(derive_seed(seed, "env"))
            controller.reset_memory()
            log = EpisodeLog()
            done = False
            while not done:
                _, _, action = controller.slot(env, state, rngs, greedy=greedy)
                outcome = env.step(state, action)
                log.append(state, action, outcome)
                state = outcome.state
                done = env.episode_done(state)[0]
            results.append(EvalEpisode(seed=seed, episode=episode, log=log))
    return results


# ---------------------------------------------------------------------------
# checkpoints: flat npz of named arrays, one entry per parameter


def save_checkpoint(path: Path, controller: FleetController) -> None:
    arrays: dict[str, np.ndarray] = {}
    for i, params in enumerate(controller.params):
        for name, tensor in params.items():
            arrays[f"agent{i}.{name}"] = tensor.data
    for i, params in enumerate(controller.critics):
        for name, tensor in params.items():
            arrays[f"critic{i}.{name}"] = tensor.data
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)


def load_checkpoint(path: Path, cfg: ExperimentConfig) -> FleetController:
    controller = FleetController.build(cfg, seed=0)
    with np.load(path) as data:
        names = set(data.files)
        for i, params in enumerate(controller.params):
            for name, tensor in params.items():
                key = f"agent{i}.{name}"
                if key not in names:
                    raise ValueError(f"checkpoint is missing {key}; config mismatch?")
                if data[key].shape != tensor.data.shape:
                    raise ValueError(
                        f"checkpoint shape {data[key].shape} for {key} does not match "
                        f"configured {tensor.data.shape}"
                    )
                tensor.data = data[key].astype(np.float64)
        for i, params in enumerate(controller.critics):
            for name, tensor in params.items():
                key = f"critic{i}.{name}"
                if key not in names:
                    raise ValueError(f"checkpoint is missing {key}; config mismatch?")
                tensor.data = data[key].astype(np.float64)
    return controller
