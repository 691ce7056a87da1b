"""Acceptance suite: ten end-to-end criteria at their stated tolerances.

Each criterion is a function returning (passed, detail).  Under pytest every
criterion is one test and a PASS/FAIL line is printed in the terminal
summary; `python tests/test_acceptance.py [n ...]` runs them directly.

The trained policy used by criteria 7-9 is cached under `.cache/` in the
repository root, keyed by the scenario and training configuration.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

sys.path.insert(0, str(Path(__file__).parent))

from oracles import central_diff, max_rel_err, p2_oracle  # noqa: E402

from mecoffload.association import calibrate_duty_cycle, enumerate_candidates, exhaustive_p2  # noqa: E402
from mecoffload.cli import main as cli_main  # noqa: E402
from mecoffload.compute import computed_units  # noqa: E402
from mecoffload.energy import ap_energy, es_dynamic_power, es_energy, ue_energy  # noqa: E402
from mecoffload.marl import PolicyNetwork, TrainConfig, load_checkpoint, save_checkpoint, train  # noqa: E402
from mecoffload.marl.nn import DotProductAttention, Linear, ReLU, Sequential  # noqa: E402
from mecoffload.marl.policy import MEC_DIM, LearnedSolver, ObsBatch, radio_dim  # noqa: E402
from mecoffload.marl.ppo import PPOConfig, ppo_loss  # noqa: E402
from mecoffload.objectives import SlotContext, eval_G1, eval_G2  # noqa: E402
from mecoffload.queues import QueueSet, step_local_queue, step_server_queue, step_virtual_queue  # noqa: E402
from mecoffload.radio import (LinkGeometry, SlotLinks, draw_channels, shannon_rate,  # noqa: E402
                              uplink_units)
from mecoffload.scenario import ScenarioConfig, delay_to_queue_bound, generate_deployment  # noqa: E402
from mecoffload.scheduler import brute_force_p1, solve_p1  # noqa: E402
from mecoffload.sim import ExhaustiveSolver, MaxSnrSolver, run, sweep_omega  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CACHE = Path(os.environ.get("MECOFFLOAD_CACHE", ROOT / ".cache"))
RESULTS: dict[int, tuple[bool, str]] = {}

# Evaluation sizes.  Criteria 5 and 7 fix theirs; the others are chosen so the
# whole suite stays within about an hour on one desktop core (plus training).
C5_SLOTS, C5_DEPLOYMENTS = 10_000, 20
C6_OMEGAS, C6_SLOTS, C6_DEPLOYMENTS = (1e6, 1e7, 1e8, 1e9), 3000, 4
C7_DEPLOYMENTS, C7_SLOTS = 50, 2000
HELD_OUT_SEED = 20_241_014
# Episodes are capped by the wall-clock budget, which keeps training inside two hours.
TRAIN = TrainConfig(episodes=20_000, episode_len=200, hidden=128, seed=0, val_every=100, val_deployments=4,
                    val_slots=1000, time_budget_s=1.9 * 3600)


def _record(n, passed, detail):
    RESULTS[n] = (bool(passed), detail)
    return bool(passed), detail


# ---- 1. exact arithmetic --------------------------------------------------------------------

def criterion_1():
    c = ScenarioConfig()
    one = ScenarioConfig(n_ues=1, n_aps=1)

    def ctx(local=0, server=0, omega=None):
        q = QueueSet(np.array([local]), np.array([server]), np.zeros(1), np.array([500.0]))
        return SlotContext(q, one, omega)

    cases = {
        "E_u active 0.1 W": (ue_energy([True], [0.1], c), 0.0099),
        "E_u asleep": (ue_energy([False], [0.0], c), 0.004014),
        "E_a active": (ap_energy([True], c), 0.022),
        "E_a asleep": (ap_energy([False], c), 0.004702),
        "P_dyn(1 GHz)": (float(es_dynamic_power(1e9, c)), 1.0),
        "E_s(1 GHz)": (es_energy(1e9, c), 0.209),
        "E_s(0)": (es_energy(0.0, c), 0.11),
        "E_s(1 GHz, kappa=0)": (es_energy(1e9, c.replace(switched_capacitance=0.0)), 0.200),
        "idle network slot": (6 * ue_energy([False], [0.0], c) + 3 * ap_energy([False], c) + es_energy(0.0, c),
                              6 * 0.004014 + 3 * 0.004702 + 0.11),
        "R at 15 dB": (float(shannon_rate(10 ** 1.5, c)), 1e7 * math.log2(1 + 10 ** 1.5)),
        "N^u at 15 dB": (uplink_units(shannon_rate(c.target_snr, c), c), 301),
        "N^c(1e8)": (computed_units(1e8, c), 900),
        "N^c(1e9)": (computed_units(1e9, c), 9000),
        "Q^l(10,4,3)": (int(step_local_queue(10, 4, 3)), 9),
        "Q^l(10,20,7)": (int(step_local_queue(10, 20, 7)), 7),
        "Q^s(5,3,10,4)": (int(step_server_queue(5, 3, 10, 4)), 6),
        "Z(5,520,500)": (float(step_virtual_queue(5, 520, 500)), 25.0),
        "Z(100,0,500)": (float(step_virtual_queue(100, 0, 500)), 0.0),
        "Q_avg(0.1 s, 5000/s)": (delay_to_queue_bound(0.1, 5000.0), 500.0),
        "Q_avg(0.2 s, 5000/s)": (delay_to_queue_bound(0.2, 5000.0), 1000.0),
        "G1 sleep": (eval_G1(ctx(omega=1.0), 0.0, [0.0]), 0.11 / 3),
        "G1 full core": (eval_G1(ctx(omega=1.0), 1e9, [1e9]), 0.209 / 3),
        "G1 queue term": (eval_G1(ctx(server=1000, omega=0.0), 1e8, [1e8]), -2e6),
        "G2 hand value": (eval_G2(ctx(10, 2, 0.0), [1], [4], [0.05]), -52.0),
    }
    bad = []
    for name, (got, want) in cases.items():
        rel = abs(got - want) / max(abs(want), 1e-300) if want != 0 else abs(got)
        if rel > 1e-12:
            bad.append(f"{name}: {got!r} vs {want!r}")
    return _record(1, not bad, f"{len(cases) - len(bad)}/{len(cases)} values within 1e-12" + (
        "; " + "; ".join(bad) if bad else ""))


# ---- 2. P1 optimality -----------------------------------------------------------------------

def criterion_2(n=1000):
    rng = np.random.default_rng(2)
    worst, violations = 0.0, 0
    for _ in range(n):
        K = int(rng.integers(1, 4))
        c = ScenarioConfig(n_ues=K)
        q = QueueSet(np.zeros(K, np.int64), rng.integers(0, 5000, K), rng.uniform(0, 2000, K), np.full(K, 500.0))
        omega = float(10 ** rng.uniform(0, 10))
        g = solve_p1(q, c, omega=omega).objective
        b = brute_force_p1(q, c, omega=omega).objective
        rel = (g - b) / max(abs(b), 1e-12)
        worst = max(worst, rel)
        if g > b + 1e-6 * abs(b):
            violations += 1
    passed = violations == 0 and len(c.cpu_freqs) == 11
    return _record(2, passed, f"{n} instances, {violations} above oracle+1e-6 rel, worst (solve-brute)/|brute|={worst:.2e}")


# ---- 3. exhaustive P2 vs independent enumerator ---------------------------------------------

def criterion_3(n=200):
    rng = np.random.default_rng(3)
    mismatches, worst_ulps = 0, 0.0
    for i in range(n):
        K, N = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        c = ScenarioConfig(n_ues=K, n_aps=N, ap_capacity=int(rng.integers(1, 3)))
        dep = generate_deployment(c, int(rng.integers(1 << 31)))
        snap = draw_channels(dep, c, rng)
        ql, qs = rng.integers(0, 3000, K), rng.integers(0, 3000, K)
        z = rng.uniform(0, 1e5, K)
        omega = float(10 ** rng.uniform(5, 10))
        q = QueueSet(ql, qs, z, np.full(K, 500.0))
        res = exhaustive_p2(SlotContext(q, c, omega), SlotLinks(LinkGeometry(dep, c), snap, c),
                            enumerate_candidates(dep, c))
        want, acts = p2_oracle(ql.tolist(), qs.tolist(), z.tolist(), snap, dep, c, omega)
        # Same argmin, and the value may differ only by summation-order rounding.
        ulps = abs(res.value - want) / np.spacing(abs(want))
        worst_ulps = max(worst_ulps, ulps)
        if tuple(int(a) for a in res.association.actions) != acts or ulps > 4:
            mismatches += 1
    return _record(3, mismatches == 0, f"{n} slots, {mismatches} differ from the oracle "
                                       f"(argmin or > 4 ulp); worst {worst_ulps:.0f} ulp")


# ---- 4. gradients ---------------------------------------------------------------------------

def criterion_4():
    rng = np.random.default_rng(4)
    errs = {}
    net = Sequential(Linear(5, 4, rng), ReLU(), Linear(4, 3, rng))
    x, w = rng.normal(size=(3, 5)), rng.normal(size=(3, 3))
    f = lambda: float((net.forward(x) * w).sum())  # noqa: E731
    f()
    net.backward(w)
    errs["mlp"] = max(max_rel_err(l.grads[k], central_diff(f, l.params[k])) for l in net.linears() for k in l.params)

    att = DotProductAttention()
    q, key, val = (rng.normal(size=(2, 4, 4)) for _ in range(3))
    mask = (rng.random((2, 4, 4)) < 0.6) | np.eye(4, dtype=bool)
    wo = rng.normal(size=(2, 4, 4))
    f = lambda: float((att.forward(q, key, val, mask)[0] * wo).sum())  # noqa: E731
    f()
    dq, dk, dv = att.backward(wo)
    errs["attention"] = max(max_rel_err(dq, central_diff(f, q)), max_rel_err(dk, central_diff(f, key)),
                            max_rel_err(dv, central_diff(f, val)))

    N, S, K = 3, 2, 3
    pol = PolicyNetwork(N, m=4, seed=4)
    amask = np.concatenate([np.ones((S, K, 1), bool), rng.random((S, K, N)) < 0.7], axis=-1)
    obs = ObsBatch(rng.normal(size=(S, K, radio_dim(N))), rng.normal(size=(S, K, MEC_DIM)),
                   np.ones((S, K, K), bool), amask)
    actions = np.array([[rng.choice(np.flatnonzero(amask[s, k])) for k in range(K)] for s in range(S)])
    out = pol.forward(obs)
    ii = np.meshgrid(np.arange(S), np.arange(K), indexing="ij")
    logp_old = out.logp[ii[0], ii[1], actions] + rng.normal(0, 0.3, (S, K))
    adv, ret = rng.normal(size=(S, K)), rng.normal(size=(S, K))
    hp = PPOConfig()
    f = lambda: ppo_loss(pol, obs, actions, logp_old, adv, ret, hp, backward=False)["loss"]  # noqa: E731
    pol.zero_grad()
    ppo_loss(pol, obs, actions, logp_old, adv, ret, hp)
    for name, p, g in pol.parameters():
        errs[name] = max_rel_err(g, central_diff(f, p), floor=1e-5)
    worst = max(errs.values())
    return _record(4, worst < 1e-4, f"{len(errs)} components, worst max relative error {worst:.2e}")


# ---- 5. Lyapunov constraint ---------------------------------------------------------------

def criterion_5(slots=C5_SLOTS, deployments=C5_DEPLOYMENTS):
    c = ScenarioConfig(omega=1e9)
    res = run(c, ExhaustiveSolver(), slots, seed=5, deployments=deployments)
    delay = res.mean("delay")
    z_worst = max(m.z_ratio_max for m in res.per_deployment)
    passed = delay <= 0.110 and z_worst < 0.05
    return _record(5, passed, f"{deployments}x{slots} slots: mean delay {delay * 1e3:.1f} ms (<=110), "
                              f"max_k Z(T)/(T Q_avg) = {z_worst:.4f} (<0.05)")


# ---- 6. energy-delay trade-off ----------------------------------------------------------------

def criterion_6():
    c = ScenarioConfig()
    rows = sweep_omega(c, C6_OMEGAS, ExhaustiveSolver(), C6_SLOTS, seed=6, deployments=C6_DEPLOYMENTS)
    e = [r["energy_w"] for r in rows]
    d = [r["delay"] for r in rows]
    rho_e = spearmanr(np.log10(C6_OMEGAS), e)[0]
    rho_d = spearmanr(np.log10(C6_OMEGAS), d)[0]
    passed = e[0] > e[-1] and rho_e <= -0.8 and rho_d >= 0.8
    table = ", ".join(f"{o:.0e}: {ei:.4f} J/{di * 1e3:.1f} ms" for o, ei, di in zip(C6_OMEGAS, e, d))
    return _record(6, passed, f"rho(E)={rho_e:.2f}, rho(delay)={rho_d:.2f}; {table}")


# ---- 7-9. learned policy ----------------------------------------------------------------------

def _train_key(c: ScenarioConfig, tc: TrainConfig) -> str:
    import hashlib
    blob = json.dumps({"config": c.to_dict(), "train": tc.to_dict()}, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def trained_policy():
    """Train once (<= 2 h budget) and reuse the checkpoint afterwards."""
    c = ScenarioConfig(omega=1e9)
    path = CACHE / f"policy_{_train_key(c, TRAIN)}.npz"
    if path.exists():
        policy, meta = load_checkpoint(path)
        return policy, meta["extra"]
    t0 = time.monotonic()
    res = train(c, TRAIN)
    info = {"train_seconds": time.monotonic() - t0, "episodes": len(res.curve),
            "curve": [r["mean_reward"] for r in res.curve], "best_score": list(res.best_score)}
    save_checkpoint(path, res.policy, extra=info)
    return res.policy, info


_EVAL: dict = {}


def _evaluate(name, solver, config=None, deployments=C7_DEPLOYMENTS, slots=C7_SLOTS):
    key = (name, None if config is None else config.digest(), deployments, slots)
    if key not in _EVAL:
        c = config or ScenarioConfig(omega=1e9)
        _EVAL[key] = run(c, solver, slots, seed=HELD_OUT_SEED, deployments=deployments).summary()
    return _EVAL[key]


def criterion_7():
    policy, info = trained_policy()
    learned = _evaluate("learned", LearnedSolver(policy, "greedy"))
    exh = _evaluate("exhaustive", ExhaustiveSolver())
    ratio = learned["energy_w"] / exh["energy_w"]
    within = ratio <= 1.15
    delay_ok = learned["delay"] <= exh["delay"]
    hours = info.get("train_seconds", float("nan")) / 3600
    curve = np.asarray(info.get("curve", []))
    head = curve[: max(2, len(curve) // 5)]
    rho = spearmanr(np.arange(len(head)), head)[0] if len(head) > 2 else float("nan")
    passed = within and delay_ok and hours <= 2.0
    return _record(7, passed, f"E_w learned/exhaustive = {ratio:.3f} (<=1.15); delay {learned['delay'] * 1e3:.1f} ms "
                              f"vs {exh['delay'] * 1e3:.1f} ms; training {hours:.2f} h; "
                              f"first-20% reward trend rho={rho:.2f}")


def criterion_8():
    policy, _ = trained_policy()
    c = ScenarioConfig(omega=1e9)
    p_star, probes = calibrate_duty_cycle(c, c.delay_target, slots=5000, deployments=4, seed=8)
    maxsnr = _evaluate(f"max-snr@{p_star}", MaxSnrSolver(p_star))
    learned = _evaluate("learned", LearnedSolver(policy, "greedy"))
    gap = 100 * (maxsnr["energy_w"] - learned["energy_w"]) / maxsnr["energy_w"]
    passed = learned["energy_w"] <= maxsnr["energy_w"]
    return _record(8, passed, f"p*={p_star:.2f}; E_w learned {learned['energy_w']:.4f} vs Max-SNR "
                              f"{maxsnr['energy_w']:.4f} (learned saves {gap:.1f}%); delays "
                              f"{learned['delay'] * 1e3:.1f} / {maxsnr['delay'] * 1e3:.1f} ms")


def criterion_9(deployments=10, slots=2000):
    policy, _ = trained_policy()
    shapes = policy.shapes()
    parts, passed = [], True
    for K in (9, 12):
        c = ScenarioConfig(n_ues=K, omega=1e9)
        s = _evaluate(f"learned-K{K}", LearnedSolver(policy, "greedy"), config=c, deployments=deployments,
                      slots=slots)
        ok = s["failure_rate"] < 0.5 and policy.shapes() == shapes
        passed &= ok
        parts.append(f"K={K}: failure rate {s['failure_rate']:.2f}, delay {s['delay'] * 1e3:.1f} ms")
    return _record(9, passed, "; ".join(parts) + "; weight shapes unchanged")


# ---- 10. determinism ----------------------------------------------------------------------------

def criterion_10(tmp: Path | None = None):
    import tempfile
    tmp = Path(tempfile.mkdtemp()) if tmp is None else tmp
    cfg_path = tmp / "cfg.json"
    cfg_path.write_text(json.dumps(ScenarioConfig().to_dict()))
    base = ["--config", str(cfg_path), "--seed", "10", "--jobs", "1", "--slots", "60", "--deployments", "2"]
    runs = {
        "simulate": ["simulate", *base, "--solver", "exhaustive"],
        "sweep": ["sweep-omega", *base, "--solver", "exhaustive", "--omega-list", "1e6,1e9"],
    }
    same = True
    for name, args in runs.items():
        outs = []
        for i in range(2):
            out = tmp / f"{name}{i}"
            if cli_main(args + ["--out", str(out)]) != 0:
                return _record(10, False, f"{name} exited non-zero")
            outs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        same &= outs[0] == outs[1] and len(outs[0]) > 0
    return _record(10, same, "simulate and sweep-omega CSVs byte-identical across reruns")


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


SLOW = {5, 6, 7, 8, 9}


@pytest.mark.parametrize("n", [pytest.param(i, marks=pytest.mark.slow) if i in SLOW else i for i in CRITERIA])
def test_acceptance(n):
    passed, detail = CRITERIA[n]()
    assert passed, detail


if __name__ == "__main__":
    chosen = [int(a) for a in sys.argv[1:]] or list(CRITERIA)
    for n in chosen:
        t0 = time.monotonic()
        ok, detail = CRITERIA[n]()
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} ({time.monotonic() - t0:.0f} s) {detail}", flush=True)
