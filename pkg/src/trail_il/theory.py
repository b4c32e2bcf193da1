"""Exact evaluation of the reparametrised-imitation performance bounds.

All quantities are computed on tabular instances with dense linear algebra:
no sampling enters a bound term except where a sweep explicitly resamples
expert datasets.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import nnls

from .data import generate_expert
from .mdp_core import (
    SupportError,
    TabularMdp,
    TabularPolicy,
    chi2,
    kl,
    policy_diff,
    random_mdp,
    random_policy,
    state_visitation,
)
from .trail import TabularDecoder, TabularLatent, compose

BOUND_SLACK = 1e-9


class CoverageError(ValueError):
    """Expert visitation puts mass where the offline distribution has none."""


class BoundViolation(AssertionError):
    pass


def realized_latents(phi, n_latent):
    """Boolean (|S|, |Z|) mask: does some action map to z at s."""
    mask = np.zeros((phi.shape[0], n_latent), dtype=bool)
    mask[np.arange(phi.shape[0])[:, None], phi] = True
    return mask


def optimal_decoder(d_joint, phi, n_latent):
    """Bayes decoder ``d(s, a) 1[z = phi(s, a)] / sum_a' d(s, a') 1[z = phi(s, a')]``.

    Rows with a zero denominator fall back to uniform over the actions that
    map to z, or to uniform over all actions when z is not realised at s.
    """
    d_joint = np.asarray(d_joint, dtype=np.float64)
    n_s, n_a = d_joint.shape
    member = phi[:, None, :] == np.arange(n_latent)[None, :, None]  # (S, Z, A)
    num = np.where(member, d_joint[:, None, :], 0.0)
    den = num.sum(-1, keepdims=True)
    n_member = member.sum(-1, keepdims=True)
    fallback = np.where(n_member > 0, member / np.maximum(n_member, 1), 1.0 / n_a)
    table = np.where(den > 0, num / np.where(den > 0, den, 1.0), fallback)
    return TabularDecoder(table)


def marginalize_policy(pi, phi, n_latent):
    """``pi_Z(z | s) = sum_{a: phi(s, a) = z} pi(a | s)``."""
    probs = pi.probs if isinstance(pi, TabularPolicy) else np.asarray(pi)
    out = np.zeros((probs.shape[0], n_latent))
    np.add.at(out, (np.arange(probs.shape[0])[:, None], phi), probs)
    return TabularLatent(out)


def _kl_at(p, q, where):
    try:
        return kl(p, q)
    except SupportError as exc:
        raise SupportError(f"{exc} (at {where})", where) from None


@dataclass
class BoundReport:
    j_t: float
    j_de_max: float
    j_de: float
    j_bc_kl: float
    chi2: float
    c1: float
    c2: float
    c3: float
    term_transition: float
    term_decoding: float
    term_bc: float
    lhs: float
    rhs: float
    holds: bool

    def __post_init__(self):
        for k, v in asdict(self).items():
            setattr(self, k, bool(v) if isinstance(v, (bool, np.bool_)) else float(v))

    def to_dict(self):
        return asdict(self)


def constants(gamma, n_actions, chi2_value):
    shift = 1.0 + np.sqrt(chi2_value)
    c3 = gamma / (1.0 - gamma)
    return c3 * n_actions * shift, c3 * shift, c3


def transition_term(mdp, d_off, phi, t_z):
    """``J_T = E_{s~d_off, a~Unif}[KL(T(s, a) || T_Z(s, phi(s, a)))]``."""
    n_s, n_a = phi.shape
    total = 0.0
    for s in range(n_s):
        if d_off[s] == 0:
            continue
        acc = 0.0
        for a in range(n_a):
            acc += _kl_at(mdp.transition[s, a], t_z[s, phi[s, a]], (s, a))
        total += d_off[s] * acc / n_a
    return total


def decoding_terms(d_off, phi, decoder, n_actions):
    """Return ``(E_{d_off}[max_z KL(opt || dec)], J_DE)`` over realised latents."""
    n_latent = decoder.n_latent
    d_joint = np.outer(d_off, np.full(n_actions, 1.0 / n_actions))
    opt = optimal_decoder(d_joint, phi, n_latent)
    realized = realized_latents(phi, n_latent)
    max_term = 0.0
    for s in np.flatnonzero(d_off > 0):
        worst = max(
            _kl_at(opt.table[s, z], decoder.table[s, z], (s, z))
            for z in np.flatnonzero(realized[s])
        )
        max_term += d_off[s] * worst
    probs = decoder.table[np.arange(phi.shape[0])[:, None], phi, np.arange(n_actions)[None, :]]
    with np.errstate(divide="ignore"):
        nll = -np.log(probs)
    j_de = float(np.sum(d_joint * np.where(d_joint > 0, nll, 0.0)))
    return max_term, j_de


def theorem1_report(mdp, pi_star, d_off, phi, t_z, decoder, latent):
    """Every term of the tabular reparametrised-imitation bound, computed exactly."""
    d_off = np.asarray(d_off, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.int64)
    n_latent = decoder.n_latent
    d_star = state_visitation(mdp, pi_star)
    uncovered = np.flatnonzero((d_star > 0) & (d_off <= 0))
    if uncovered.size:
        raise CoverageError(f"d_off has no mass on expert-visited states {uncovered.tolist()}")
    chi = chi2(d_star, d_off)
    c1, c2, c3 = constants(mdp.gamma, mdp.n_actions, chi)

    j_t = transition_term(mdp, d_off, phi, t_z)
    j_de_max, j_de = decoding_terms(d_off, phi, decoder, mdp.n_actions)
    star_z = marginalize_policy(pi_star, phi, n_latent)
    j_bc = 0.0
    for s in np.flatnonzero(d_star > 0):
        j_bc += d_star[s] * _kl_at(star_z.table[s], latent.table[s], (s,))

    t1 = c1 * np.sqrt(j_t / 2.0)
    t2 = c2 * np.sqrt(j_de_max / 2.0)
    t3 = c3 * np.sqrt(j_bc / 2.0)
    lhs = policy_diff(mdp, compose(decoder, latent), pi_star)
    rhs = t1 + t2 + t3
    return BoundReport(
        j_t=j_t, j_de_max=j_de_max, j_de=j_de, j_bc_kl=j_bc, chi2=chi,
        c1=c1, c2=c2, c3=c3, term_transition=t1, term_decoding=t2, term_bc=t3,
        lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs + BOUND_SLACK),
    )


# --- sample complexity --------------------------------------------------------

def tabular_latent_bc(expert, phi, n_latent, n_states):
    """Count-based ``pi_Z(z | s)``; unseen states get the uniform row."""
    z = phi[expert.s, expert.a]
    counts = np.zeros((n_states, n_latent))
    np.add.at(counts, (expert.s, z), 1.0)
    tot = counts.sum(1, keepdims=True)
    return TabularLatent(np.where(tot > 0, counts / np.maximum(tot, 1.0), 1.0 / n_latent))


def cell_seed(seed, *cell):
    """Deterministic per-cell seed so parallel sweeps match serial ones."""
    return np.random.SeedSequence([int(seed), *map(int, cell)])


def _sweep_cell(job):
    mdp, pi_star, phi, decoder, seed, i, r, n = job
    ds = generate_expert(mdp, pi_star, n, cell_seed(seed, i, r))
    latent = tabular_latent_bc(ds, phi, decoder.n_latent, mdp.n_states)
    return policy_diff(mdp, compose(decoder, latent), pi_star)


def theorem2_sweep(mdp, pi_star, d_off, phi, t_z, decoder, n_grid, resamples, seed, workers=1):
    """Average exact ``Diff`` of count-based latent BC over resampled expert data.

    For each ``n`` the bound is the two pretraining terms plus
    ``C3 sqrt(|Z| |S| / n)``. Rows are dicts with keys
    ``n, mean_diff, stderr, bound, holds``. Every (n, resample) cell has its
    own seed, so ``workers > 1`` gives the same numbers as a serial run.
    """
    n_latent = decoder.n_latent
    base = theorem1_report(
        mdp, pi_star, d_off, phi, t_z, decoder,
        marginalize_policy(pi_star, phi, n_latent),
    )
    pre = base.term_transition + base.term_decoding
    jobs = [(mdp, pi_star, phi, decoder, seed, i, r, int(n))
            for i, n in enumerate(n_grid) for r in range(resamples)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            diffs = list(pool.map(_sweep_cell, jobs, chunksize=max(1, resamples // workers)))
    else:
        diffs = [_sweep_cell(job) for job in jobs]
    diffs = np.asarray(diffs).reshape(len(n_grid), resamples)
    rows = []
    for i, n in enumerate(n_grid):
        bound = pre + base.c3 * np.sqrt(n_latent * mdp.n_states / n)
        mean = float(diffs[i].mean())
        rows.append({
            "n": int(n),
            "mean_diff": mean,
            "stderr": float(diffs[i].std(ddof=1) / np.sqrt(resamples)) if resamples > 1 else 0.0,
            "bound": float(bound),
            "holds": bool(mean <= bound + BOUND_SLACK),
        })
    return rows


def loglog_slope(ns, values):
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


# --- linear transition models ---------------------------------------------------

@dataclass(frozen=True)
class LinearMdpSpec:
    """``T(s' | s, a) = sum_j W[s', j] Phi[s, a, j]`` with stochastic columns of W."""

    W: np.ndarray  # (|S|, d)
    Phi: np.ndarray  # (|S|, |A|, d), rows on the simplex

    @property
    def d(self):
        return self.W.shape[1]

    @property
    def w_inf(self):
        return float(np.max(np.abs(self.W)))

    @property
    def c4(self):
        return 0.25 * self.W.shape[0] * self.w_inf

    def transition(self):
        return np.einsum("pj,saj->sap", self.W, self.Phi)


def build_linear_mdp(n_states, n_actions, d, seed, gamma=0.9):
    rng = np.random.default_rng(seed)
    W = rng.dirichlet(np.ones(n_states), size=d).T
    Phi = rng.dirichlet(np.ones(d), size=(n_states, n_actions))
    spec = LinearMdpSpec(W, Phi)
    t = spec.transition()
    t /= t.sum(axis=2, keepdims=True)  # absorb 1-ulp drift
    mdp = TabularMdp(t, rng.dirichlet(np.ones(n_states)), gamma)
    return mdp, spec


class LinearLatentDecoder:
    """Decoder for vector latents over tabular states.

    ``embeddings`` is an (|S|, |A|, d) table or a :class:`LinearMdpSpec`.

    A latent equal to a realised embedding ``Phi[s, a]`` decodes with the
    Bayes decoder for ``d_joint``. Any other latent decodes to the action
    mixture whose expected embedding is closest to it (``mode="hull"``,
    non-negative least squares), or to the nearest single embedding
    (``mode="nearest"``, ties to the lowest action).
    """

    def __init__(self, embeddings, d_joint=None, mode="hull", match_tol=1e-12):
        if mode not in ("hull", "nearest"):
            raise ValueError(f"unknown decoding mode {mode!r}")
        self.Phi = embeddings.Phi if isinstance(embeddings, LinearMdpSpec) else np.asarray(embeddings)
        n_s, n_a, _ = self.Phi.shape
        self.d_joint = np.full((n_s, n_a), 1.0 / (n_s * n_a)) if d_joint is None else d_joint
        self.mode = mode
        self.match_tol = match_tol

    def probs(self, s, z):
        emb = self.Phi[s]
        n_a = emb.shape[0]
        gap = np.abs(emb - z).max(axis=1)
        match = gap <= self.match_tol
        if match.any():
            w = np.where(match, self.d_joint[s], 0.0)
            return w / w.sum() if w.sum() > 0 else match / match.sum()
        if self.mode == "nearest":
            out = np.zeros(n_a)
            out[int(np.argmin(((emb - z) ** 2).sum(axis=1)))] = 1.0
            return out
        lam, _ = nnls(np.vstack([emb.T, np.ones(n_a)]), np.append(z, 1.0))
        return lam / lam.sum()

    def policy(self, theta):
        return TabularPolicy(np.array([self.probs(s, theta[s]) for s in range(len(theta))]))


@dataclass
class Theorem3Report:
    term2: float  # transition representation term
    term3: float  # decoding term
    grad_l1: float
    c4: float
    grad_term: float
    lhs: float
    rhs: float
    holds: bool

    def __post_init__(self):
        for k, v in asdict(self).items():
            setattr(self, k, bool(v) if isinstance(v, (bool, np.bool_)) else float(v))

    def to_dict(self):
        return asdict(self)


def expert_mean_embedding(linear, pi_star):
    probs = pi_star.probs if isinstance(pi_star, TabularPolicy) else np.asarray(pi_star)
    return np.einsum("sa,saj->sj", probs, linear.Phi)


def mse_population_grad(linear, mdp, pi_star, theta):
    """Gradient of ``E_{s~d*, a~pi*}[||theta_s - Phi(s, a)||^2]`` w.r.t. theta."""
    d_star = state_visitation(mdp, pi_star)
    return 2.0 * d_star[:, None] * (theta - expert_mean_embedding(linear, pi_star))


def theorem3_report(linear, mdp, pi_star, theta, decoder, d_off):
    """Bound for a deterministic latent policy under a linear transition model.

    ``rhs = term2 + term3 + C4 * ||grad||_1`` where the gradient is that of
    the population MSE between ``theta_s`` and the expert's embeddings.
    """
    d_off = np.asarray(d_off, dtype=np.float64)
    n_a = mdp.n_actions
    d_star = state_visitation(mdp, pi_star)
    uncovered = np.flatnonzero((d_star > 0) & (d_off <= 0))
    if uncovered.size:
        raise CoverageError(f"d_off has no mass on expert-visited states {uncovered.tolist()}")
    c1, c2, _ = constants(mdp.gamma, n_a, chi2(d_star, d_off))

    j_t = 0.0
    lin_t = linear.transition()
    for s in np.flatnonzero(d_off > 0):
        j_t += d_off[s] * sum(_kl_at(mdp.transition[s, a], lin_t[s, a], (s, a)) for a in range(n_a)) / n_a

    d_joint = np.outer(d_off, np.full(n_a, 1.0 / n_a))
    dec_max = 0.0
    for s in np.flatnonzero(d_off > 0):
        worst = 0.0
        for a in range(n_a):
            z = linear.Phi[s, a]
            match = np.abs(linear.Phi[s] - z).max(axis=1) <= 1e-12
            opt = np.where(match, d_joint[s], 0.0)
            opt = opt / opt.sum()
            worst = max(worst, _kl_at(opt, decoder.probs(s, z), (s, a)))
        dec_max += d_off[s] * worst

    grad = mse_population_grad(linear, mdp, pi_star, theta)
    grad_l1 = float(np.abs(grad).sum())
    grad_term = linear.c4 * grad_l1
    term2 = c1 * np.sqrt(j_t / 2.0)
    term3 = c2 * np.sqrt(dec_max / 2.0)
    lhs = policy_diff(mdp, decoder.policy(theta), pi_star)
    rhs = term2 + term3 + grad_term
    return Theorem3Report(term2, term3, grad_l1, linear.c4, grad_term, lhs, rhs,
                          bool(lhs <= rhs + BOUND_SLACK))


# --- random instances ---------------------------------------------------------

def random_phi(rng, n_states, n_actions, n_latent):
    """Random grouping that realises every latent at every state (needs k <= |A|)."""
    phi = np.empty((n_states, n_actions), dtype=np.int64)
    for s in range(n_states):
        labels = np.concatenate([np.arange(n_latent), rng.integers(n_latent, size=n_actions - n_latent)])
        phi[s] = rng.permutation(labels)
    return phi


@dataclass
class Theorem1Instance:
    mdp: TabularMdp
    pi_star: TabularPolicy
    d_off: np.ndarray
    phi: np.ndarray
    t_z: np.ndarray
    decoder: TabularDecoder
    latent: TabularLatent

    def report(self):
        return theorem1_report(self.mdp, self.pi_star, self.d_off, self.phi,
                               self.t_z, self.decoder, self.latent)


def _mix(rng, base, eta, min_prob=1e-3):
    noise = rng.dirichlet(np.ones(base.shape[-1]), size=base.shape[:-1])
    out = (1.0 - eta) * base + eta * noise
    out = np.maximum(out, min_prob)
    return out / out.sum(-1, keepdims=True)


def random_theorem1_instance(rng, max_states=10, max_actions=6, max_latent=4, gammas=(0.5, 0.9),
                             near_optimal=False):
    """Random tabular instance with full-support models.

    ``near_optimal`` builds T_Z, decoder and latent as small perturbations of
    their ideal values so that the right-hand side is small and the bound is
    tested where it is tight rather than vacuous.
    """
    n_s = int(rng.integers(2, max_states + 1))
    n_a = int(rng.integers(2, max_actions + 1))
    k = int(rng.integers(1, min(max_latent, n_a) + 1))
    gamma = float(rng.choice(gammas))
    mdp = random_mdp(rng, n_s, n_a, gamma)
    pi_star = random_policy(rng, n_s, n_a)
    d_off = rng.dirichlet(np.ones(n_s))
    phi = random_phi(rng, n_s, n_a, k)
    if near_optimal:
        eta = float(10 ** rng.uniform(-4, -1))
        t_z = np.stack([
            np.stack([mdp.transition[s, phi[s] == z].mean(axis=0) for z in range(k)])
            for s in range(n_s)
        ])
        t_z = _mix(rng, t_z, eta, min_prob=1e-9)
        d_joint = np.outer(d_off, np.full(n_a, 1.0 / n_a))
        decoder = TabularDecoder(_mix(rng, optimal_decoder(d_joint, phi, k).table, eta))
        latent = TabularLatent(_mix(rng, marginalize_policy(pi_star, phi, k).table, eta))
    else:
        t_z = rng.dirichlet(np.ones(n_s), size=(n_s, k))
        decoder = TabularDecoder(random_policy(rng, n_s * k, n_a).probs.reshape(n_s, k, n_a))
        latent = TabularLatent(random_policy(rng, n_s, k).probs)
    return Theorem1Instance(mdp, pi_star, d_off, phi, t_z, decoder, latent)


@dataclass
class Theorem3Instance:
    mdp: TabularMdp
    linear: LinearMdpSpec
    pi_star: TabularPolicy
    theta: np.ndarray
    d_off: np.ndarray
    decoder: LinearLatentDecoder

    def report(self):
        return theorem3_report(self.linear, self.mdp, self.pi_star, self.theta,
                               self.decoder, self.d_off)


def random_theorem3_instance(rng, max_states=8, max_actions=6, max_d=4, gammas=(0.5, 0.9),
                             theta="random"):
    """Random exact-linear instance.

    ``theta="random"`` draws each ``theta_s`` as a random mixture of the
    realised embeddings at s; ``theta="mean"`` uses the expert's conditional
    mean embedding (the MSE minimiser).
    """
    n_s = int(rng.integers(2, max_states + 1))
    n_a = int(rng.integers(2, max_actions + 1))
    d = int(rng.integers(1, min(max_d, n_a) + 1))
    gamma = float(rng.choice(gammas))
    mdp, linear = build_linear_mdp(n_s, n_a, d, int(rng.integers(2**31)), gamma)
    pi_star = random_policy(rng, n_s, n_a)
    d_off = rng.dirichlet(np.ones(n_s))
    if theta == "mean":
        th = expert_mean_embedding(linear, pi_star)
    else:
        lam = rng.dirichlet(np.ones(n_a), size=n_s)
        th = np.einsum("sa,saj->sj", lam, linear.Phi)
    decoder = LinearLatentDecoder(linear, np.outer(d_off, np.full(n_a, 1.0 / n_a)))
    return Theorem3Instance(mdp, linear, pi_star, th, d_off, decoder)


# --- helpers for the supporting inequalities ---------------------------------

def model_mismatch(mdp, tbar, d):
    """``E_{s~d, a~Unif}[TV(T(s, a) || tbar(s, a))]``."""
    n_a = mdp.n_actions
    per = 0.5 * np.abs(mdp.transition - tbar).sum(axis=2)
    return float(np.sum(d[:, None] * per) / n_a)


def empirical_tv(rng, rho, n, resamples):
    """Monte-Carlo ``E[TV(rho || rho_hat_n)]``."""
    counts = rng.multinomial(n, rho, size=resamples)
    return float(np.mean(0.5 * np.abs(counts / n - rho).sum(axis=1)))


def decode_marginal(decoder, latent, phi):
    """Marginalise ``pi_alpha o pi_Z`` back onto the latent space."""
    return marginalize_policy(compose(decoder, latent), phi, decoder.n_latent)


__all__ = [name for name in dir() if not name.startswith("_")]
