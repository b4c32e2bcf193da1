"""Transition-reparametrized actions: pretraining, latent imitation, inference.

Pretraining fits a factored transition model on offline ``(s, a, s')``
triples. The energy-based form scores a successor by
``-0.5 * ||phi(s, a) - psi(s')||^2`` and is trained contrastively against
successors drawn from the offline pool. ``phi`` then defines the latent
action space in which expert actions are cloned, and an action decoder maps
latent actions back to raw ones at inference time.

Tabular pieces (count tables, k-medoid reparametrisation) live next to the
neural ones so both paths share one interface.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .mdp_core import kl, TabularPolicy
from .nn import Adam, Mlp, NonFiniteError, forward, forward_backward

log = logging.getLogger(__name__)

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
PROB_FLOOR = 1e-12
LOG_2PI = np.log(2.0 * np.pi)


def one_hot(idx, n):
    idx = np.asarray(idx, dtype=np.int64)
    out = np.zeros((idx.size, n))
    out[np.arange(idx.size), idx.reshape(-1)] = 1.0
    return out


# --- energy model ---------------------------------------------------------------

@dataclass
class EnergyModel:
    """Encoder pair ``phi(s, a)`` and ``psi(s')`` plus the candidate pool.

    For tabular data states and actions are one-hot encoded; ``pool`` then
    holds successor indices, otherwise successor vectors.
    """

    phi: Mlp
    psi: Mlp
    pool: np.ndarray
    n_states: int | None = None
    n_actions: int | None = None

    def __post_init__(self):
        if self.phi.sizes[-1] != self.psi.sizes[-1]:
            raise ValueError("phi and psi must share the embedding width")
        if len(self.pool) == 0:
            raise ValueError("candidate pool is empty")

    @property
    def embed_dim(self):
        return self.phi.sizes[-1]

    @property
    def tabular(self):
        return self.n_states is not None

    def encode_sa(self, s, a):
        if self.tabular:
            return np.hstack([one_hot(s, self.n_states), one_hot(a, self.n_actions)])
        return np.hstack([np.atleast_2d(s), np.atleast_2d(a)])

    def encode_s(self, s):
        if self.tabular:
            return one_hot(s, self.n_states)
        return np.atleast_2d(s)

    def embed_sa(self, s, a):
        return forward(self.phi, self.encode_sa(s, a))

    def embed_s(self, s):
        return forward(self.psi, self.encode_s(s))

    def phi_table(self):
        """All tabular embeddings as an (|S|, |A|, d) array."""
        s, a = np.divmod(np.arange(self.n_states * self.n_actions), self.n_actions)
        return self.embed_sa(s, a).reshape(self.n_states, self.n_actions, -1)

    def transition_probs(self, s, a, candidates=None):
        """Model next-state distribution over ``candidates`` (default: the pool).

        Candidates are weighted by multiplicity, which is how ``rho`` enters.
        """
        cand = self.pool if candidates is None else candidates
        e = self.embed_sa(s, a)
        q = self.embed_s(cand)
        logits = -0.5 * _sq_dists(e, q)
        return softmax(logits, axis=1)


def _sq_dists(x, y):
    return (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * x @ y.T


def contrastive_loss(model, x_sa, x_sp, x_neg, include_positive=False):
    """Contrastive transition loss and its gradients.

    ``L = mean_i[0.5 ||phi_i - psi(s'_i)||^2 + log mean_j exp(-0.5 ||phi_i - psi(neg_j)||^2)]``

    Inputs are already encoded. Passing the whole candidate pool as
    ``x_neg`` gives the full-enumeration loss. With ``include_positive`` each
    row's own successor joins its candidate set, which keeps the sampled loss
    bounded below. Returns ``(loss, phi_grads, psi_grads)``.
    """
    x_neg = np.atleast_2d(x_neg)
    if len(x_neg) == 0:
        raise ValueError("no negatives: candidate pool is empty")
    n = len(x_sa)
    if n == 0:
        raise ValueError("empty batch")
    e = forward(model.phi, x_sa)
    psi_in = np.vstack([x_sp, x_neg])
    pq = forward(model.psi, psi_in)
    p, q = pq[:n], pq[n:]
    diff = e - p
    pos = 0.5 * (diff * diff).sum(1)
    logits = -0.5 * _sq_dists(e, q)
    if include_positive:
        lse = logsumexp(np.hstack([-pos[:, None], logits]), axis=1)
        w_pos = np.exp(-pos - lse)
        n_cand = len(q) + 1
    else:
        lse = logsumexp(logits, axis=1)
        w_pos = np.zeros(n)
        n_cand = len(q)
    loss = float(np.mean(pos + lse - np.log(n_cand)))
    w = np.exp(logits - lse[:, None])  # softmax weights of the negatives
    qbar = w @ q + w_pos[:, None] * p
    g_e = (qbar - p) / n
    g_p = (1.0 - w_pos)[:, None] * (p - e) / n
    g_q = (w.T @ e - w.sum(0)[:, None] * q) / n
    _, phi_grads, _ = forward_backward(model.phi, x_sa, g_e)
    _, psi_grads, _ = forward_backward(model.psi, psi_in, np.vstack([g_p, g_q]))
    return loss, phi_grads, psi_grads


@dataclass
class EbmConfig:
    embed_dim: int = 8
    hidden: tuple = (256, 256)
    steps: int = 20_000
    batch: int = 256
    negatives: int = 64
    lr: float = 3e-4
    seed: int = 0
    eval_every: int = 1000
    negatives_from: str = "batch"  # or "pool"
    include_positive: bool = True


def _philox(seed, stream=0):
    return np.random.Generator(np.random.Philox(key=[int(seed), int(stream)]))


def train_transition_ebm(offline, cfg, n_states=None, n_actions=None, continuous_dims=None):
    """Fit the energy-based transition model on an offline dataset.

    Tabular datasets need ``n_states``/``n_actions``; continuous ones need
    ``continuous_dims=(state_dim, action_dim)``. Returns ``(model, log)``
    where ``log`` lists ``(step, mean loss since last entry)``.
    """
    init_rng = _philox(cfg.seed, 0)
    batch_rng = _philox(cfg.seed, 1)
    if n_states is not None:
        sa_in, s_in = n_states + n_actions, n_states
        pool = np.asarray(offline.sp)
    else:
        sdim, adim = continuous_dims
        sa_in, s_in = sdim + adim, sdim
        pool = np.asarray(offline.sp, dtype=np.float64)
    phi = Mlp.init((sa_in, *cfg.hidden, cfg.embed_dim), init_rng)
    psi = Mlp.init((s_in, *cfg.hidden, cfg.embed_dim), init_rng)
    model = EnergyModel(phi, psi, pool, n_states, n_actions)
    opt = Adam(lr=cfg.lr)
    params = phi.params + psi.params
    m = len(offline)
    history, running = [], []
    for step in range(1, cfg.steps + 1):
        idx = batch_rng.integers(m, size=min(cfg.batch, m))
        s, a, sp = offline.s[idx], offline.a[idx], offline.sp[idx]
        src = sp if cfg.negatives_from == "batch" else pool
        neg = src[batch_rng.integers(len(src), size=cfg.negatives)]
        loss, gphi, gpsi = contrastive_loss(
            model, model.encode_sa(s, a), model.encode_s(sp), model.encode_s(neg),
            include_positive=cfg.include_positive,
        )
        if not np.isfinite(loss):
            raise NonFiniteError(f"contrastive loss diverged at step {step}", step=step)
        opt.step(params, gphi + gpsi)
        running.append(loss)
        if step % cfg.eval_every == 0 or step == cfg.steps:
            history.append((step, float(np.mean(running))))
            log.debug("ebm step %d loss %.5f", step, history[-1][1])
            running = []
    return model, history


def group_distance_ratio(phi_table, groups):
    """Mean within-group over mean across-group embedding distance.

    Pairs are only compared at the same state. ``groups[s, a]`` is the
    reference latent index.
    """
    within, across = [], []
    n_s, n_a, _ = phi_table.shape
    iu, ju = np.triu_indices(n_a, k=1)
    for s in range(n_s):
        e = phi_table[s]
        dist = np.sqrt(np.maximum(_sq_dists(e, e), 0.0))[iu, ju]
        same = groups[s][iu] == groups[s][ju]
        within.append(dist[same])
        across.append(dist[~same])
    w = float(np.mean(np.concatenate(within)))
    x = float(np.mean(np.concatenate(across)))
    return w / x, w, x


# --- random Fourier features ------------------------------------------------

@dataclass(frozen=True)
class RffMap:
    """Frozen map ``sqrt(2/D) cos(W x + b)`` approximating exp(-||x - y||^2 / 2)."""

    W: np.ndarray
    b: np.ndarray
    seed: int | None = None

    @classmethod
    def sample(cls, in_dim, n_features, seed):
        rng = np.random.default_rng(seed)
        W = rng.standard_normal((n_features, in_dim))
        b = rng.uniform(0.0, 2.0 * np.pi, size=n_features)
        W.setflags(write=False)
        b.setflags(write=False)
        return cls(W, b, seed)

    @property
    def n_features(self):
        return self.W.shape[0]


def rff_features(x, rff):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("rff_features received non-finite input")
    return np.sqrt(2.0 / rff.n_features) * np.cos(x @ rff.W.T + rff.b)


def linear_transition_probs(phi_bar, psi_bar):
    """Normalised linear scores ``psi_bar_j . phi_bar`` (negatives clipped to 0)."""
    scores = np.maximum(np.atleast_2d(phi_bar) @ psi_bar.T, 0.0)
    total = scores.sum(axis=1, keepdims=True)
    uniform = np.full_like(scores, 1.0 / scores.shape[1])
    return np.where(total > 0, scores / np.where(total > 0, total, 1.0), uniform)


# --- k-medoids and tabular reparametrisation --------------------------------

def k_medoids(dist, k, rng, rounds=50):
    """Partition points given a distance matrix.

    Farthest-point initialisation from a random first medoid, then
    alternating assignment / medoid update for at most ``rounds`` rounds.
    Ties go to the lowest index. Returns ``(labels, medoids)``.
    """
    n = dist.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    medoids = [int(rng.integers(n))]
    while len(medoids) < k:
        gap = dist[:, medoids].min(axis=1)
        gap[medoids] = -1.0
        medoids.append(int(np.argmax(gap)))
    medoids = np.array(medoids)

    def assign(meds):
        labels = np.argmin(dist[:, meds], axis=1)
        labels[meds] = np.arange(len(meds))  # a medoid always owns its cluster
        return labels

    labels = assign(medoids)
    for _ in range(rounds):
        new = medoids.copy()
        for c in range(k):
            members = np.flatnonzero(labels == c)
            cost = dist[np.ix_(members, members)].sum(axis=1)
            best = members[np.argmin(cost)]
            if cost[members == medoids[c]][0] > cost.min():
                new[c] = best
        if np.array_equal(new, medoids):
            break
        medoids = new
        labels = assign(medoids)
    return labels, medoids


def empirical_rows(counts):
    """Normalise ``N[s, a, s']``; unseen pairs fall back to the state's pooled row."""
    counts = np.asarray(counts, dtype=np.float64)
    n_s = counts.shape[0]
    tot = counts.sum(axis=2, keepdims=True)
    pooled = counts.sum(axis=1)
    pooled_tot = pooled.sum(axis=1, keepdims=True)
    pooled = np.where(pooled_tot > 0, pooled / np.where(pooled_tot > 0, pooled_tot, 1), 1.0 / n_s)
    return np.where(tot > 0, counts / np.where(tot > 0, tot, 1), pooled[:, None, :])


@dataclass
class TabularFactorization:
    phi: np.ndarray  # (|S|, |A|) latent index
    t_z: np.ndarray  # (|S|, k, |S|)
    j_t: float


def transition_rep_error(rows, d_off, phi, t_z):
    """``E_{s~d_off, a~Unif}[KL(T(s, a) || T_Z(s, phi(s, a)))]``."""
    n_s, n_a, _ = rows.shape
    total = 0.0
    for s in range(n_s):
        if d_off[s] == 0:
            continue
        row_kl = sum(kl(rows[s, a], t_z[s, phi[s, a]]) for a in range(n_a))
        total += d_off[s] * row_kl / n_a
    return total


def group_mean(rows):
    """Mean of ``rows`` that is bitwise exact when all rows are identical."""
    base = rows[0]
    return base + (rows - base).mean(axis=0)


def tabular_reparametrize(rows, d_off, k, seed=0, rounds=50, counts=False):
    """Cluster each state's action rows into ``k`` latent actions.

    ``rows`` is the transition tensor, or raw counts when ``counts=True``.
    Clustering is k-medoids under TV distance; ``T_Z(s, z)`` is the average
    of the member rows (actions are uniformly weighted in the offline data).
    """
    rows = empirical_rows(rows) if counts else np.asarray(rows, dtype=np.float64)
    n_s, n_a, _ = rows.shape
    if not 1 <= k <= n_a:
        raise ValueError(f"k={k} must lie in [1, |A|={n_a}]")
    rng = np.random.default_rng(seed)
    phi = np.zeros((n_s, n_a), dtype=np.int64)
    t_z = np.zeros((n_s, k, n_s))
    for s in range(n_s):
        r = rows[s]
        dist = 0.5 * np.abs(r[:, None, :] - r[None, :, :]).sum(-1)
        labels, _ = k_medoids(dist, k, rng, rounds)
        phi[s] = labels
        for z in range(k):
            t_z[s, z] = group_mean(r[labels == z])
    j_t = transition_rep_error(rows, np.asarray(d_off), phi, t_z)
    return TabularFactorization(phi, t_z, j_t)


def cluster_embeddings(phi_table, k, seed=0):
    """Per-state k-medoids on learned embeddings (Euclidean) -> latent index table."""
    rng = np.random.default_rng(seed)
    n_s, n_a, _ = phi_table.shape
    phi = np.zeros((n_s, n_a), dtype=np.int64)
    for s in range(n_s):
        e = phi_table[s]
        dist = np.sqrt(np.maximum(_sq_dists(e, e), 0.0))
        phi[s], _ = k_medoids(dist, k, rng)
    return phi


# --- decoders and latent policies -------------------------------------------

@dataclass
class TabularDecoder:
    """``table[s, z, a] = pi_alpha(a | s, z)``."""

    table: np.ndarray

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.float64)
        if np.any(np.abs(self.table.sum(-1) - 1.0) > 1e-9) or np.any(self.table < 0):
            raise ValueError("decoder rows must be probability vectors")

    @property
    def n_latent(self):
        return self.table.shape[1]


@dataclass
class TabularLatent:
    """``table[s, z] = pi_Z(z | s)``."""

    table: np.ndarray

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.float64)
        if np.any(np.abs(self.table.sum(-1) - 1.0) > 1e-9) or np.any(self.table < 0):
            raise ValueError("latent policy rows must be probability vectors")


@dataclass
class GaussianHead:
    """MLP emitting the mean and clamped log-std of a diagonal Gaussian."""

    net: Mlp
    out_dim: int

    @classmethod
    def init(cls, in_dim, out_dim, hidden, rng):
        return cls(Mlp.init((in_dim, *hidden, 2 * out_dim), rng), out_dim)

    def dist(self, x):
        out = forward(self.net, x)
        mean, raw = out[..., : self.out_dim], out[..., self.out_dim:]
        return mean, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)


def gaussian_nll(head, x, target):
    """Mean NLL of ``target`` under ``head(x)``; returns (loss, param_grads, input_grads)."""
    x = np.atleast_2d(x)
    target = np.atleast_2d(target)
    n = len(x)
    out = forward(head.net, x)
    k = head.out_dim
    mean, raw = out[:, :k], out[:, k:]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    inv_var = np.exp(-2.0 * log_std)
    r = target - mean
    per = 0.5 * r * r * inv_var + log_std + 0.5 * LOG_2PI
    loss = float(per.sum() / n)
    g_mean = -r * inv_var / n
    g_log_std = (1.0 - r * r * inv_var) / n
    g_raw = np.where((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX), g_log_std, 0.0)
    _, grads, g_in = forward_backward(head.net, x, np.hstack([g_mean, g_raw]))
    g_target = r * inv_var / n
    return loss, grads, g_in, g_target


@dataclass
class GaussianLatent:
    head: GaussianHead


@dataclass
class DeterministicLatent:
    """``theta_s``: an (|S|, d) table for tabular states or an MLP for vectors."""

    table: np.ndarray | None = None
    net: Mlp | None = None

    def __call__(self, s):
        if self.table is not None:
            return self.table[np.asarray(s)]
        return forward(self.net, s)


@dataclass
class GaussianDecoder:
    head: GaussianHead


# --- losses -----------------------------------------------------------------

@dataclass
class NllResult:
    loss: float
    floored: int = 0


def tabular_nll(table_rows):
    """Mean ``-log p`` with probabilities floored at 1e-12; reports floored count."""
    p = np.asarray(table_rows, dtype=np.float64)
    floored = int(np.sum(p < PROB_FLOOR))
    return NllResult(float(-np.mean(np.log(np.maximum(p, PROB_FLOOR)))), floored)


def decoder_loss(s, a, z, decoder, state_features=None):
    """Action decoding NLL ``E[-log pi_alpha(a | s, z)]`` with ``z = phi(s, a)``.

    Tabular decoders return an :class:`NllResult`. Gaussian decoders take
    ``state_features`` (the encoded states) and return
    ``(loss, param_grads, grad_wrt_z)``; ``z`` is a float array there.
    """
    if isinstance(decoder, TabularDecoder):
        res = tabular_nll(decoder.table[s, z, a])
        if res.floored:
            log.warning("decoder assigned zero probability to %d observed actions", res.floored)
        return res
    x = np.hstack([np.atleast_2d(state_features), np.atleast_2d(z)])
    loss, grads, g_in, _ = gaussian_nll(decoder.head, x, a)
    return loss, grads, g_in[:, -np.atleast_2d(z).shape[1]:]


def latent_bc_nll(s, z, latent, state_features=None):
    """Latent behavioural cloning NLL ``E[-log pi_Z(z | s)]`` with ``z = phi(s, a)`` fixed."""
    if isinstance(latent, TabularLatent):
        return tabular_nll(latent.table[s, z])
    loss, grads, _, _ = gaussian_nll(latent.head, state_features, z)
    return loss, grads


def latent_mse_loss(s, z, theta, state_features=None):
    """``E[||theta_s - z||^2]`` against frozen targets ``z = phi_bar(s, a)``.

    Returns ``(loss, grads, grad_l1)``. For a tabular ``theta`` the gradient
    is with respect to the table; ``grad_l1`` is its L1 norm. MLP thetas
    return parameter gradients and ``grad_l1`` over those.
    """
    z = np.atleast_2d(z)
    n = len(z)
    if theta.table is not None:
        pred = theta.table[s]
        r = pred - z
        loss = float((r * r).sum() / n)
        if not np.isfinite(loss):
            raise NonFiniteError("latent MSE is not finite")
        grad = np.zeros_like(theta.table)
        np.add.at(grad, s, 2.0 * r / n)
        return loss, grad, float(np.abs(grad).sum())
    pred = forward(theta.net, state_features)
    r = pred - z
    loss = float((r * r).sum() / n)
    if not np.isfinite(loss):
        raise NonFiniteError("latent MSE is not finite")
    _, grads, _ = forward_backward(theta.net, state_features, 2.0 * r / n)
    return loss, grads, float(sum(np.abs(g).sum() for g in grads))


# --- training of decoders / latent policies ---------------------------------

@dataclass
class HeadConfig:
    hidden: tuple = (256, 256)
    steps: int = 5000
    batch: int = 256
    lr: float = 3e-4
    seed: int = 0
    joint_phi: bool = False


def fit_tabular_decoder(s, a, z, n_states, n_latent, n_actions, phi=None):
    """Count-based maximum-likelihood decoder.

    Unseen ``(s, z)`` rows are uniform over the actions mapped to ``z`` by
    ``phi`` when any exist, else uniform over all actions.
    """
    counts = np.zeros((n_states, n_latent, n_actions))
    np.add.at(counts, (s, z, a), 1.0)
    tot = counts.sum(-1, keepdims=True)
    if phi is not None:
        members = (phi[:, None, :] == np.arange(n_latent)[None, :, None]).astype(float)
        nonempty = members.sum(-1, keepdims=True) > 0
        fallback = np.where(nonempty, members / np.maximum(members.sum(-1, keepdims=True), 1), 1.0 / n_actions)
    else:
        fallback = np.full_like(counts, 1.0 / n_actions)
    table = np.where(tot > 0, counts / np.maximum(tot, 1), fallback)
    return TabularDecoder(table)


def train_action_decoder(offline, phi, cfg=None, n_states=None, n_actions=None, n_latent=None,
                         model=None):
    """Fit ``pi_alpha`` on offline data with ``z = phi(s, a)``.

    Tabular: ``phi`` is an (|S|, |A|) index table and the fit is by counts.
    Continuous: ``model`` is an :class:`EnergyModel` whose ``phi`` encoder is
    used (and co-trained when ``cfg.joint_phi``); returns a GaussianDecoder.
    """
    if n_states is not None:
        z = phi[offline.s, offline.a]
        return fit_tabular_decoder(offline.s, offline.a, z, n_states, n_latent, n_actions, phi)
    cfg = cfg or HeadConfig()
    rng = _philox(cfg.seed, 2)
    sdim = np.atleast_2d(offline.s).shape[1]
    adim = np.atleast_2d(offline.a).shape[1]
    d = model.embed_dim
    head = GaussianHead.init(sdim + d, adim, cfg.hidden, rng)
    opt = Adam(lr=cfg.lr)
    params = head.net.params + (model.phi.params if cfg.joint_phi else [])
    dec = GaussianDecoder(head)
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(len(offline), size=min(cfg.batch, len(offline)))
        s, a = offline.s[idx], offline.a[idx]
        x_sa = model.encode_sa(s, a)
        z = forward(model.phi, x_sa)
        loss, grads, g_z = decoder_loss(s, a, z, dec, state_features=s)
        if not np.isfinite(loss):
            raise NonFiniteError(f"decoder loss diverged at step {step}", step=step)
        if cfg.joint_phi:
            _, phi_grads, _ = forward_backward(model.phi, x_sa, g_z)
            grads = grads + phi_grads
        opt.step(params, grads)
    return dec


def train_gaussian_latent(states, z, cfg=None):
    """Fit a Gaussian latent policy to frozen latent targets by NLL."""
    cfg = cfg or HeadConfig()
    rng = _philox(cfg.seed, 3)
    states = np.atleast_2d(states)
    head = GaussianHead.init(states.shape[1], z.shape[1], cfg.hidden, rng)
    latent = GaussianLatent(head)
    opt = Adam(lr=cfg.lr)
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(len(states), size=min(cfg.batch, len(states)))
        loss, grads = latent_bc_nll(None, z[idx], latent, state_features=states[idx])
        if not np.isfinite(loss):
            raise NonFiniteError(f"latent NLL diverged at step {step}", step=step)
        opt.step(head.net.params, grads)
    return latent


def train_deterministic_latent(states, z, cfg=None):
    """Fit ``theta`` (an MLP over states) by the latent MSE."""
    cfg = cfg or HeadConfig()
    rng = _philox(cfg.seed, 4)
    states = np.atleast_2d(states)
    theta = DeterministicLatent(net=Mlp.init((states.shape[1], *cfg.hidden, z.shape[1]), rng))
    opt = Adam(lr=cfg.lr)
    for _ in range(cfg.steps):
        idx = rng.integers(len(states), size=min(cfg.batch, len(states)))
        _, grads, _ = latent_mse_loss(None, z[idx], theta, state_features=states[idx])
        opt.step(theta.net.params, grads)
    return theta


# --- inference ----------------------------------------------------------------

def compose(decoder, latent):
    """Exact tabular composition ``sum_z pi_alpha(a | s, z) pi_Z(z | s)``."""
    probs = np.einsum("sz,sza->sa", latent.table, decoder.table)
    return TabularPolicy(probs / probs.sum(axis=1, keepdims=True))


def infer_action(s, latent, decoder, rng):
    """Sample ``z ~ pi_Z(s)`` (or take ``theta_s``) and then ``a ~ pi_alpha(s, z)``."""
    tab_latent = isinstance(latent, TabularLatent)
    tab_decoder = isinstance(decoder, TabularDecoder)
    if isinstance(latent, DeterministicLatent) and latent.table is not None:
        # tabular states, vector latent: the decoder maps (s, theta_s) to action probs
        if not hasattr(decoder, "probs"):
            raise TypeError("a vector theta over tabular states needs a decoder with .probs(s, z)")
        p = decoder.probs(int(s), latent.table[int(s)])
        return int(rng.choice(len(p), p=p))
    if tab_latent != tab_decoder:
        raise TypeError("latent policy and decoder modes do not match")
    if tab_latent:
        z = rng.choice(latent.table.shape[1], p=latent.table[s])
        return int(rng.choice(decoder.table.shape[2], p=decoder.table[s, z]))
    s_vec = np.atleast_2d(s)
    if isinstance(latent, DeterministicLatent):
        z = np.atleast_2d(latent(s_vec if latent.net is not None else s))
    else:
        mean, log_std = latent.head.dist(s_vec)
        z = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    mean, log_std = decoder.head.dist(np.hstack([s_vec, z]))
    return (mean + np.exp(log_std) * rng.standard_normal(mean.shape))[0]
