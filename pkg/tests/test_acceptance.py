"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured quantity
and runtime, then asserts. Run ``pytest tests/test_acceptance.py -v -s`` to
see the lines inline, or ``python tests/test_acceptance.py`` for just the
summary.
"""
import time

import numpy as np
import pytest
from scipy.special import log_softmax

from trail_il.baselines import evaluate, policy_actor, vanilla_bc
from trail_il.cli import ExperimentConfig, build_env
from trail_il.data import generate_expert, generate_offline
from trail_il.envs import build_redundant_gridworld, default_grid
from trail_il.mdp_core import (
    chi2,
    policy_diff,
    random_mdp,
    random_policy,
    state_visitation,
    transition_err,
    tv,
    value_iteration,
)
from trail_il.nn import Mlp, forward, gradient_check
from trail_il.theory import (
    decode_marginal,
    empirical_tv,
    loglog_slope,
    marginalize_policy,
    optimal_decoder,
    random_phi,
    random_theorem1_instance,
    random_theorem3_instance,
    realized_latents,
    tabular_latent_bc,
    theorem1_report,
    theorem2_sweep,
)
from trail_il.trail import (
    EbmConfig,
    EnergyModel,
    GaussianDecoder,
    GaussianHead,
    GaussianLatent,
    DeterministicLatent,
    RffMap,
    TabularDecoder,
    TabularLatent,
    contrastive_loss,
    decoder_loss,
    fit_tabular_decoder,
    compose,
    group_distance_ratio,
    latent_bc_nll,
    latent_mse_loss,
    rff_features,
    tabular_reparametrize,
    train_transition_ebm,
)

pytestmark = pytest.mark.acceptance


def report(capsys, label, ok, detail, t0):
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}  ({time.perf_counter() - t0:.1f}s)"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


def test_c1_theorem1_bound(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    reports = [random_theorem1_instance(rng).report() for _ in range(100)]
    held = sum(r.lhs <= r.rhs + 1e-9 for r in reports)
    worst = max(r.lhs / r.rhs for r in reports if r.rhs > 0)
    elapsed = time.perf_counter() - t0
    ok = held == 100 and elapsed < 60
    report(capsys, "C1 bound on random tabular instances", ok, f"{held}/100 hold, max lhs/rhs {worst:.3f}", t0)
    assert ok


def test_c2_equality_case(capsys):
    t0 = time.perf_counter()
    g = build_redundant_gridworld(default_grid())
    pi = value_iteration(g.mdp, g.reward)
    d_off = np.full(g.mdp.n_states, 1.0 / g.mdp.n_states)
    dec = optimal_decoder(np.outer(d_off, np.full(g.mdp.n_actions, 1.0 / g.mdp.n_actions)), g.phi_star, 4)
    rep = theorem1_report(g.mdp, pi, d_off, g.phi_star, g.mdp.transition[:, :4], dec,
                          marginalize_policy(pi, g.phi_star, 4))
    vals = (rep.j_t, rep.j_de_max, rep.j_bc_kl, rep.lhs)
    ok = max(vals) <= 1e-10
    report(capsys, "C2 ground-truth equality case", ok,
           "J_T {:.1e}, decoding {:.1e}, BC {:.1e}, lhs {:.1e}".format(*vals), t0)
    assert ok


def _inequality_instance(rng):
    n_s, n_a = int(rng.integers(1, 11)), int(rng.integers(1, 7))
    return random_mdp(rng, n_s, n_a, float(rng.choice([0.5, 0.9]))), random_policy(rng, n_s, n_a), \
        random_policy(rng, n_s, n_a)


def test_c3_inequality_suite(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    fails = {}

    def check(name, cond):
        fails[name] = fails.get(name, 0) + (not cond)

    for _ in range(100):
        mdp, p1, p2 = _inequality_instance(rng)
        g = mdp.gamma
        err = transition_err(state_visitation(mdp, p1), p1, p2, mdp.transition)
        check("visitation gap", policy_diff(mdp, p2, p1) <= g / (1 - g) * err + 1e-12)

        tbar = rng.dirichlet(np.ones(mdp.n_states), size=(mdp.n_states, mdp.n_actions))
        d = rng.dirichlet(np.ones(mdp.n_states))
        gap = 0.5 * np.abs(mdp.transition - tbar).sum(-1).mean(axis=1)
        check("model swap", transition_err(d, p1, p2, mdp.transition)
              <= mdp.n_actions * float(d @ gap) + transition_err(d, p1, p2, tbar) + 1e-12)

        n_s, n_a = mdp.n_states, mdp.n_actions
        k = int(rng.integers(1, n_a + 1))
        phi = random_phi(rng, n_s, n_a, k)
        dj = rng.dirichlet(np.ones(n_s * n_a)).reshape(n_s, n_a)
        lat = TabularLatent(random_policy(rng, n_s, k).probs)
        opt = optimal_decoder(dj, phi, k)
        check("decoder identity", np.max(np.abs(decode_marginal(opt, lat, phi).table - lat.table)) <= 1e-12)

        dec = TabularDecoder(random_policy(rng, n_s * k, n_a).probs.reshape(n_s, k, n_a))
        got = decode_marginal(dec, lat, phi)
        real = realized_latents(phi, k)
        check("decoding gap", all(
            tv(lat.table[s], got.table[s])
            <= max(tv(opt.table[s, z], dec.table[s, z]) for z in np.flatnonzero(real[s])) + 1e-12
            for s in range(n_s)))

        m = int(rng.integers(1, 12))
        r1, r2 = rng.dirichlet(np.ones(m), size=2)
        h = rng.random(m) * rng.choice([1.0, 10.0])
        check("off-policy Cauchy-Schwarz", float(r1 @ h) <= (1 + np.sqrt(chi2(r1, r2))) * np.sqrt(float(r2 @ h**2)) + 1e-12)

    for m in (2, 8):
        rho = rng.dirichlet(np.ones(m))
        for n in (10, 100):
            check("empirical-TV", empirical_tv(rng, rho, n, 500) <= 0.5 * np.sqrt(m / n))
    elapsed = time.perf_counter() - t0
    ok = not any(fails.values()) and elapsed < 120
    detail = ", ".join(f"{k} {'ok' if v == 0 else f'{v} failures'}" for k, v in fails.items())
    report(capsys, "C3 supporting inequalities", ok, detail, t0)
    assert ok


def test_c4_theorem2_rate(capsys):
    t0 = time.perf_counter()
    world, expert, d_off = build_env(ExperimentConfig())
    mdp, phi = world.mdp, world.phi_star
    dec = optimal_decoder(np.outer(d_off, np.full(mdp.n_actions, 1.0 / mdp.n_actions)), phi, 4)
    ns = [100, 1000, 10_000]
    rows = theorem2_sweep(mdp, expert, d_off, phi, mdp.transition[:, :4], dec, ns, 200, seed=0)
    slope = loglog_slope(ns, [r["mean_diff"] for r in rows])
    elapsed = time.perf_counter() - t0
    ok = all(r["holds"] for r in rows) and -0.7 <= slope <= -0.3 and elapsed < 300
    diffs = ", ".join(f"n={r['n']}: {r['mean_diff']:.4f} <= {r['bound']:.3f}" for r in rows)
    report(capsys, "C4 sample-complexity sweep", ok, f"{diffs}; slope {slope:.3f}", t0)
    assert ok


def test_c5_theorem3_bound(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    reports = [random_theorem3_instance(rng).report() for _ in range(100)]
    held = sum(r.lhs <= r.rhs + 1e-9 for r in reports)
    means = [random_theorem3_instance(rng, theta="mean").report() for _ in range(100)]
    worst_grad = max(r.grad_term for r in means)
    elapsed = time.perf_counter() - t0
    ok = held == 100 and worst_grad <= 1e-10 and elapsed < 60
    report(capsys, "C5 linear-model bound", ok,
           f"{held}/100 hold, max gradient term at conditional mean {worst_grad:.1e}", t0)
    assert ok


def _vector_model(rng, pool_n):
    phi = Mlp.init((4, 8, 3), rng)
    psi = Mlp.init((2, 8, 3), rng)
    return EnergyModel(phi, psi, rng.standard_normal((pool_n, 2)))


def test_c6_contrastive_oracle_and_gradients(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        m = _vector_model(rng, int(rng.integers(1, 65)))
        x_sa = rng.standard_normal((int(rng.integers(1, 17)), 4))
        pos = rng.integers(len(m.pool), size=len(x_sa))
        loss, _, _ = contrastive_loss(m, x_sa, m.pool[pos], m.pool)
        e, q = forward(m.phi, x_sa), forward(m.psi, m.pool)
        logits = -0.5 * ((e[:, None] - q[None]) ** 2).sum(-1)
        oracle = -log_softmax(logits, axis=1)[np.arange(len(e)), pos].mean() - np.log(len(m.pool))
        worst = max(worst, abs(loss - oracle))

    errs = {}
    m = _vector_model(rng, 5)
    x_sa, sp, neg = rng.standard_normal((5, 4)), rng.standard_normal((5, 2)), rng.standard_normal((7, 2))
    n_phi = len(m.phi.params)

    def f_con(p):
        m.phi.params, m.psi.params = p[:n_phi], p[n_phi:]
        loss, gp, gq = contrastive_loss(m, x_sa, sp, neg)
        return loss, gp + gq

    errs["contrastive"] = gradient_check(f_con, m.phi.params + m.psi.params).max_rel_err

    head = GaussianHead.init(5, 4, (8, 8), rng)
    s, z, a = rng.standard_normal((6, 2)), rng.standard_normal((6, 3)), rng.standard_normal((6, 4))

    def f_dec(p):
        head.net.params = p
        loss, grads, _ = decoder_loss(None, a, z, GaussianDecoder(head), state_features=s)
        return loss, grads

    errs["decoder NLL"] = gradient_check(f_dec, head.net.params).max_rel_err

    lhead = GaussianHead.init(2, 3, (8,), rng)

    def f_lat(p):
        lhead.net.params = p
        return latent_bc_nll(None, z, GaussianLatent(lhead), state_features=s)

    errs["latent NLL"] = gradient_check(f_lat, lhead.net.params).max_rel_err

    theta = DeterministicLatent(net=Mlp.init((2, 8, 3), rng))

    def f_mse(p):
        theta.net.params = p
        loss, grads, _ = latent_mse_loss(None, z, theta, state_features=s)
        return loss, grads

    errs["latent MSE"] = gradient_check(f_mse, theta.net.params).max_rel_err
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and max(errs.values()) <= 1e-4 and elapsed < 60
    detail = f"oracle gap {worst:.1e}; " + ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    report(capsys, "C6 contrastive oracle and gradient checks", ok, detail, t0)
    assert ok


def test_c7_rff_kernel(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    x, y = rng.uniform(-1, 1, (2, 100, 8))
    exact = np.exp(-0.5 * ((x - y) ** 2).sum(1))

    def err(dim):
        rff = RffMap.sample(8, dim, 7)
        return float(np.mean(np.abs((rff_features(x, rff) * rff_features(y, rff)).sum(1) - exact)))

    big, small = err(4096), err(256)
    ok = big <= 0.05 and big < small
    report(capsys, "C7 random Fourier features", ok, f"error {big:.4f} at 4096, {small:.4f} at 256", t0)
    assert ok


def _success(world, policy, seed):
    return evaluate(world.mdp, policy_actor(policy), world.goal_state, episodes=10, seeds=1,
                    horizon=50, base_seed=seed).success_rate


def test_c8_latent_vs_raw_bc(capsys):
    t0 = time.perf_counter()
    cfg = ExperimentConfig()
    world, expert, d_off = build_env(cfg)
    n_s, n_a = world.mdp.n_states, world.mdp.n_actions
    trail, bc = [], []
    for seed in range(10):
        seeds = np.random.SeedSequence(seed).spawn(2)
        offline = generate_offline(world.mdp, d_off, 50_000, seeds[0])
        demos = generate_expert(world.mdp, expert, 50, seeds[1])
        fac = tabular_reparametrize(offline.counts(n_s, n_a), d_off, 4, seed=seed, counts=True)
        dec = fit_tabular_decoder(offline.s, offline.a, fac.phi[offline.s, offline.a], n_s, 4, n_a, fac.phi)
        trail.append(_success(world, compose(dec, tabular_latent_bc(demos, fac.phi, 4, n_s)), seed))
        bc.append(_success(world, vanilla_bc(demos, n_states=n_s, n_actions=n_a), seed))
    t, b = float(np.mean(trail)), float(np.mean(bc))
    elapsed = time.perf_counter() - t0
    ok = t >= 2 * b and elapsed < 300
    report(capsys, "C8 latent BC vs raw BC on the gridworld", ok,
           f"success {t:.3f} vs {b:.3f} (ratio {t / max(b, 1e-12):.2f}, need >= 2)", t0)
    assert ok


@pytest.mark.slow
def test_c9_ebm_group_recovery(capsys):
    t0 = time.perf_counter()
    world = build_redundant_gridworld(default_grid())
    n_s, n_a = world.mdp.n_states, world.mdp.n_actions
    d_off = np.full(n_s, 1.0 / n_s)
    ratios = []
    for seed in range(4):
        offline = generate_offline(world.mdp, d_off, 50_000, seed)
        # narrower trunk than the training default to keep the run under ten minutes
        cfg = EbmConfig(embed_dim=8, hidden=(64, 64), steps=20_000, seed=seed)
        model, _ = train_transition_ebm(offline, cfg, n_s, n_a)
        ratios.append(group_distance_ratio(model.phi_table(), world.phi_star)[0])
    elapsed = time.perf_counter() - t0
    ok = max(ratios) < 0.5 and elapsed < 600
    report(capsys, "C9 learned embeddings recover duplicate groups", ok,
           "within/across ratio per seed " + ", ".join(f"{r:.3f}" for r in ratios), t0)
    assert ok


if __name__ == "__main__":
    checks = [v for k, v in sorted(globals().items()) if k.startswith("test_c")]
    passed = 0
    for fn in checks:
        try:
            fn(None)
            passed += 1
        except AssertionError:
            pass
    print(f"{passed}/{len(checks)} criteria pass")
