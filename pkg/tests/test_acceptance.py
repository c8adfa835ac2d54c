"""Acceptance suite: every exit criterion at its stated tolerance.

Each test prints one PASS/FAIL line.  The training-based criteria share one
set of desk-scale runs (4 UAVs, 3 terminals, 20 slots, 300 episodes, 3
seeds) through a module-scoped fixture.
"""

import cmath
import math
import time

import numpy as np
import pytest

from chain_harness import first_divergence_slot, per_sample_cross_gradient
from uavris import autodiff as ad
from uavris import policies
from uavris.autodiff import Tensor, grad_check
from uavris.channel import (
    RisConfig,
    achievable_rate,
    blockage_prob,
    cascaded_gain,
    steering_rg,
    steering_ur,
)
from uavris.cli import main
from uavris.comm import build_graph
from uavris.config import ExperimentConfig
from uavris.environment import Environment, JointAction
from uavris.mobility import PowerConstants, propulsion_energy
from uavris.policies import PolicyDims
from uavris.training import spatiotemporal_return, train

SMOKE = dict(
    num_uavs=4, num_gts=3, num_slots=20, episodes=300,
    ris_rows=4, ris_cols=4, hidden_size=32, encoder_size=32,
    gamma=0.3, lr_actor=2e-2, lr_critic=2e-2, rollout_len=4, max_degree=1,
)
SEEDS = [0, 1, 2]


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# channel oracles


def _oracle_steering(ris, dx, dy, dz):
    r = math.hypot(dx, dy)
    d = math.sqrt(dx * dx + dy * dy + dz * dz)
    psi = r / d
    pr, pc = (dx / r) * psi, (dy / r) * psi
    k = 2.0 * math.pi / ris.wavelength
    vec = np.zeros(ris.rows * ris.cols, dtype=complex)
    for mr in range(ris.rows):
        for mc in range(ris.cols):
            phase = -(k * mr * ris.spacing_r / pr) - (k * mc * ris.spacing_c / pc)
            vec[mr * ris.cols + mc] = math.sqrt(ris.pathloss_ref) / d * cmath.exp(1j * phase)
    return vec, d


def test_channel_brute_force_oracles():
    ris = RisConfig(rows=16, cols=16, spacing_r=0.05, spacing_c=0.05,
                    position=(500.0, 500.0), height=100.0, wavelength=0.1)
    rng = np.random.default_rng(100)
    noise_psd = 10 ** (-16.9) * 1e-3
    t0 = time.monotonic()
    worst = 0.0
    for _ in range(100):
        uav = rng.uniform([0, 0, 60], [990, 990, 200])
        gt = rng.uniform([0, 0], [990, 990])
        if math.hypot(uav[0] - 500, uav[1] - 500) < 5 or math.hypot(*(gt - 500)) < 5:
            continue  # stay clear of the clamped degenerate cone

        vec, dist, clamped = steering_ur(ris, uav)
        exp_vec, exp_d = _oracle_steering(ris, uav[0] - 500, uav[1] - 500, uav[2] - 100)
        if not clamped:
            worst = max(worst, np.max(np.abs(vec - exp_vec) / np.abs(exp_vec)))
            worst = max(worst, abs(dist - exp_d) / exp_d)

        gvec, gdist, gclamped = steering_rg(ris, gt)
        horiz = math.hypot(gt[0] - 500, gt[1] - 500)
        exp_g = _oracle_rg(ris, gt)
        if not gclamped:
            worst = max(worst, np.max(np.abs(gvec - exp_g) / np.abs(exp_g)))

        theta = np.exp(1j * rng.uniform(-np.pi, np.pi, ris.num_elements))
        casc = cascaded_gain(gvec, theta, vec, 1.0)
        brute = 0j
        for i in range(ris.num_elements):
            brute += gvec[i] * theta[i] * vec[i]
        worst = max(worst, abs(casc - brute) / max(1e-300, abs(brute)))

        p = blockage_prob(uav[2], horiz, 9.61, 0.16)
        theta_deg = math.degrees(math.atan(uav[2] / horiz))
        p_direct = 1.0 - 1.0 / (1.0 + 9.61 * math.exp(-0.16 * (theta_deg - 9.61)))
        worst = max(worst, abs(p - p_direct) / p_direct)

        g = float(rng.uniform(0.1, 10.0)) * 1e-12
        r = achievable_rate(1, g, 0.5, 2e6, noise_psd)
        r_direct = 2e6 * math.log2(1.0 + g * 0.5 / (2e6 * noise_psd))
        worst = max(worst, abs(r - r_direct) / r_direct)
    elapsed = time.monotonic() - t0
    report(
        "channel oracles: 100 random geometries vs scalar brute force",
        worst < 1e-9 and elapsed < 10.0,
        f"max rel err {worst:.2e}, {elapsed:.1f}s",
    )


def _oracle_rg(ris, gt):
    dx, dy = gt[0] - ris.position[0], gt[1] - ris.position[1]
    horiz = math.hypot(dx, dy)
    d = math.sqrt(ris.height**2 + horiz**2)
    psi = horiz / d
    pr, pc = (dx / horiz) * psi, (dy / horiz) * psi
    k = 2.0 * math.pi / ris.wavelength
    vec = np.zeros(ris.rows * ris.cols, dtype=complex)
    for mr in range(ris.rows):
        for mc in range(ris.cols):
            phase = -(k * mr * ris.spacing_r / pr) - (k * mc * ris.spacing_c / pc)
            vec[mr * ris.cols + mc] = math.sqrt(ris.pathloss_ref) / d * cmath.exp(1j * phase)
    return vec


def test_hover_energy_closed_form():
    consts = PowerConstants()
    e = propulsion_energy(0.0, 0.0, 1.0, consts)
    expected = consts.profile_power + consts.induced_power
    rel = abs(e - expected) / expected
    ok = rel < 1e-6 and abs(expected - 168.49) < 0.01
    report("hover energy equals profile+induced power", ok, f"{e:.4f} J, rel err {rel:.1e}")


# ---------------------------------------------------------------------------
# gradients


def test_gradient_suite():
    t0 = time.monotonic()
    dims = PolicyDims(encoder_size=6, hidden_size=6, max_degree=1, ma_count=4,
                      num_gts=2, num_phases=3, t_min=1.0, t_max=3.0)
    worst = {"linear": 0.0, "lstm": 0.0, "softmax_heads": 0.0, "actor": 0.0, "critic": 0.0}
    for seed in range(10):
        rng = np.random.default_rng(seed)

        w = ad.uniform_init(rng, (4, 3), 3)
        b = ad.uniform_init(rng, (4,), 3)
        x = rng.normal(size=3)
        worst["linear"] = max(
            worst["linear"],
            grad_check(lambda: ad.tsum(ad.linear(w, b, Tensor(x))), [w, b], 1e-6),
        )

        u = 4
        w_x = ad.uniform_init(rng, (4 * u, 3), 3)
        w_h = ad.uniform_init(rng, (4 * u, u), u)
        bias = ad.uniform_init(rng, (4 * u,), u)
        xin, h0, c0 = rng.normal(size=3), rng.normal(size=u), rng.normal(size=u)

        def lstm_fn():
            h, c = ad.lstm_step(w_x, w_h, bias, Tensor(xin), Tensor(h0), Tensor(c0))
            return ad.dot(h, c)

        worst["lstm"] = max(worst["lstm"], grad_check(lstm_fn, [w_x, w_h, bias], 1e-5))

        wh = ad.uniform_init(rng, (5, 6), 6)
        bh = ad.uniform_init(rng, (5,), 6)
        hvec = rng.normal(size=6)

        def head_fn():
            logits = ad.linear(wh, bh, Tensor(hvec))
            p = ad.softmax(logits)
            return ad.add(ad.neg(ad.take(ad.log_softmax(logits), 1)), ad.dot(p, p))

        worst["softmax_heads"] = max(worst["softmax_heads"], grad_check(head_fn, [wh, bh], 1e-6))

        # actor-loss composite: encoder -> belief -> pinned-sample log-prob
        params = policies.build_params("ours", dims, rng)
        own = rng.normal(size=3)
        nb_state = rng.normal(size=3)
        nb_fp = Tensor(rng.uniform(0, 1, dims.fingerprint_dim))
        nb_bel = Tensor(rng.normal(size=dims.hidden_size))
        z_t = rng.normal(size=1)
        z_ph = rng.normal(size=dims.num_phases)
        delta, beta = 0.7, 0.005
        actor_params = [params[k] for k in ("enc_s_w", "lstm_wx", "head_heading_w", "t_log_std", "ph_mu_w")]

        def actor_fn():
            belief = policies.encode_belief_ours(
                params, dims, policies.initial_belief(dims), own, [nb_state], [nb_fp], [nb_bel]
            )
            logits = ad.linear(params["head_heading_w"], params["head_heading_b"], belief.hidden)
            logp = ad.take(ad.log_softmax(logits), 2)
            t_mu = ad.linear(params["t_mu_w"], params["t_mu_b"], belief.hidden)
            logp = ad.add(logp, ad.gaussian_log_prob(t_mu, params["t_log_std"], z_t))
            ph_mu = ad.linear(params["ph_mu_w"], params["ph_mu_b"], belief.hidden)
            logp = ad.add(logp, ad.gaussian_log_prob(ph_mu, params["ph_log_std"], z_ph))
            p = ad.softmax(logits)
            ent = ad.neg(ad.dot(p, ad.log_softmax(logits)))
            return ad.add(ad.scale(logp, -delta), ad.scale(ent, beta))

        worst["actor"] = max(worst["actor"], grad_check(actor_fn, actor_params, 1e-5))

        critic = policies.build_critic_params(dims, rng)
        bel = rng.normal(size=dims.hidden_size)
        block = rng.normal(size=dims.max_degree * dims.action_vector_dim)
        target = 1.3

        def critic_fn():
            v = policies.value(critic, Tensor(bel), block)
            diff = ad.add(ad.constant(target), ad.neg(v))
            return ad.mul(diff, diff)

        worst["critic"] = max(worst["critic"], grad_check(critic_fn, list(critic.values()), 1e-6))
    elapsed = time.monotonic() - t0
    ok = all(v < 1e-4 for v in worst.values()) and elapsed < 60.0
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f}s"
    report("gradient suite: all composites < 1e-4 over 10 seeds", ok, detail)


# ---------------------------------------------------------------------------
# message latency and gradient reach


def test_latency_and_gradient_reach():
    ok = True
    details = []
    for n_agents in (2, 3, 4):
        n_slots = n_agents + 4
        for sender in range(n_agents):
            firsts, hops = first_divergence_slot(n_agents, n_slots, sender, perturb_slot=1)
            for j in range(n_agents):
                if j == sender:
                    continue
                earliest = 1 + int(hops[j, sender]) - 1
                if firsts[j] is None or firsts[j] < earliest:
                    ok = False
                    details.append(f"belief chain{n_agents} {sender}->{j}: first={firsts[j]} earliest={earliest}")
        for source in range(n_agents):
            for target in range(n_agents):
                if source == target:
                    continue
                mags = per_sample_cross_gradient(n_agents, n_slots, source, target)
                d = abs(source - target)
                if any(mags[n] != 0.0 for n in range(d - 1)):
                    ok = False
                    details.append(f"grad chain{n_agents} {source}->{target}: early nonzero")
                if not any(m != 0.0 for m in mags):
                    ok = False
                    details.append(f"grad chain{n_agents} {source}->{target}: never nonzero")
    report(
        "latency: payload perturbations and cross-agent gradients respect hop delay",
        ok,
        "; ".join(details) if details else "chains 2-4, all ordered pairs",
    )


# ---------------------------------------------------------------------------
# spatial discount


def test_spatial_discount_oracle():
    rng = np.random.default_rng(55)
    t_len, j = 6, 4
    rewards = rng.normal(size=(t_len, j))
    hops_list = []
    for _ in range(t_len):
        pos = rng.uniform(0, 30, size=(j, 3))
        hops_list.append(build_graph(pos, 14.0).hops)
    worst = 0.0
    for alpha in (0.0, 0.8, 0.9, 1.0):
        got = spatiotemporal_return(rewards, alpha, 0.97, hops_list)
        expected = np.zeros((t_len, j))
        for n in range(t_len):
            for agent in range(j):
                acc = 0.0
                for m in range(n, t_len):
                    for other in range(j):
                        dist = hops_list[m][agent, other]
                        if np.isinf(dist):
                            w = 0.0
                        elif alpha == 0.0:
                            w = 1.0 if dist == 0 else 0.0
                        else:
                            w = alpha**dist
                        acc += 0.97 ** (m - n) * w * rewards[m, other]
                expected[n, agent] = acc
        worst = max(worst, float(np.max(np.abs(got - expected))))
        if alpha == 0.0:
            local = np.zeros((t_len, j))
            for agent in range(j):
                acc = 0.0
                for n in range(t_len - 1, -1, -1):
                    acc = rewards[n, agent] + 0.97 * acc
                    local[n, agent] = acc
            worst = max(worst, float(np.max(np.abs(got - local))))
    report("spatial discount matches nested-loop oracle", worst < 1e-12, f"max abs err {worst:.1e}")


# ---------------------------------------------------------------------------
# voting and constraints in bulk


def test_voting_and_constraints_bulk():
    total_slots = 100_000
    cfg = ExperimentConfig(
        num_uavs=4, num_gts=3, ris_rows=3, ris_cols=3, num_slots=total_slots,
    )
    env = Environment(cfg)
    rng = np.random.default_rng(77)
    state = env.reset(seed=0)
    t0 = time.monotonic()
    violations = 0
    for _ in range(total_slots):
        votes = rng.integers(0, cfg.num_gts, size=cfg.num_uavs)
        action = JointAction(
            heading=rng.integers(0, 5, size=cfg.num_uavs),
            vertical=rng.integers(0, 3, size=cfg.num_uavs),
            ma=rng.integers(1, cfg.ma_count + 1, size=cfg.num_uavs),
            gt_vote=votes,
            slot_time=rng.uniform(cfg.t_min, cfg.t_max, size=cfg.num_uavs),
            phases=rng.uniform(-math.pi, math.pi - 1e-12, size=(cfg.num_uavs, 9)),
        )
        out = env.step(state, action)
        if int(np.sum(out.rates > 0)) > 1:
            violations += 1
        counts = np.bincount(votes, minlength=cfg.num_gts)
        oracle = int(np.flatnonzero(counts == counts.max())[0])
        if out.scheduled_gt != oracle:
            violations += 1
        state = out.state

    # policy-sampled actions: every draw inside the constraint boxes
    dims = PolicyDims(encoder_size=8, hidden_size=8, max_degree=1, ma_count=cfg.ma_count,
                      num_gts=cfg.num_gts, num_phases=9, t_min=cfg.t_min, t_max=cfg.t_max)
    params = policies.build_params("ours", dims, np.random.default_rng(5))
    belief = policies.initial_belief(dims)
    sample_rng = np.random.default_rng(6)
    bound_violations = 0
    for _ in range(10_000):
        out = policies.act(params, dims, belief, sample_rng)
        if not (cfg.t_min <= out.slot_time <= cfg.t_max):
            bound_violations += 1
        if np.any(out.phases < -math.pi) or np.any(out.phases >= math.pi):
            bound_violations += 1
    elapsed = time.monotonic() - t0
    ok = violations == 0 and bound_violations == 0
    report(
        "voting and constraints over 1e5 slots",
        ok,
        f"{violations} scheduling violations, {bound_violations} bound violations, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# training smoke


@pytest.fixture(scope="module")
def smoke_runs():
    t0 = time.monotonic()
    runs = {"ours": [], "ia2c": [], "random": []}
    for seed in SEEDS:
        runs["ours"].append(train(ExperimentConfig(**SMOKE), seed=seed))
        runs["ia2c"].append(train(ExperimentConfig(**{**SMOKE, "variant": "ia2c"}), seed=seed))
        runs["random"].append(
            train(
                ExperimentConfig(**{**SMOKE, "episodes": 50, "lr_actor": 0.0, "lr_critic": 0.0}),
                seed=seed,
            )
        )
    runs["elapsed"] = time.monotonic() - t0
    return runs


def _final_mean(result, window=50):
    return float(np.mean([m.reward for m in result.metrics[-window:]]))


def test_smoke_beats_frozen_random(smoke_runs):
    ours = np.mean([_final_mean(r) for r in smoke_runs["ours"]])
    random_mean = np.mean([np.mean([m.reward for m in r.metrics]) for r in smoke_runs["random"]])
    ratio = ours / random_mean
    ok = ratio >= 1.2 and smoke_runs["elapsed"] < 1800
    report(
        "training smoke: final-50 mean beats frozen random by >= 20%",
        ok,
        f"ratio {ratio:.3f}, total train time {smoke_runs['elapsed']:.0f}s",
    )


def test_smoke_td_error_decreases(smoke_runs):
    q1s, q4s = [], []
    for r in smoke_runs["ours"]:
        td = [m.td_error for m in r.metrics]
        q = len(td) // 4
        q1s.append(np.mean(td[:q]))
        q4s.append(np.mean(td[-q:]))
    ok = float(np.mean(q4s)) < float(np.mean(q1s))
    report(
        "training smoke: eval-time TD error final quartile below first quartile",
        ok,
        f"q1 {np.mean(q1s):.3f} -> q4 {np.mean(q4s):.3f}",
    )


def test_smoke_ours_vs_ia2c(smoke_runs):
    ours = np.mean([_final_mean(r) for r in smoke_runs["ours"]])
    ia2c = np.mean([_final_mean(r) for r in smoke_runs["ia2c"]])
    report(
        "comparative sanity: ours >= ia2c on the 3-seed mean",
        ours >= ia2c,
        f"ours {ours:.4g} vs ia2c {ia2c:.4g}",
    )


def test_metrics_byte_determinism(tmp_path):
    args = [
        "train", "--seed", "3", "--out", str(tmp_path),
        "--set", "num_uavs=3", "--set", "num_gts=3", "--set", "num_slots=6",
        "--set", "ris_rows=3", "--set", "ris_cols=3", "--set", "hidden_size=8",
        "--set", "encoder_size=8", "--set", "episodes=3", "--set", "rollout_len=6",
    ]
    assert main(args) == 0
    run = next(tmp_path.iterdir())
    first = (run / "metrics.csv").read_bytes()
    assert main(args + ["--force"]) == 0
    second = (run / "metrics.csv").read_bytes()
    report("determinism: identical (config, seed) gives byte-identical metrics", first == second)
