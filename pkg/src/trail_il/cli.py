"""Command-line driver: data generation, pretraining, imitation, evaluation,
bound verification, sample-size sweeps and reports.

All stages share one output directory. Each run appends an entry (command,
config hash, artifact digests) to ``<out>/manifest.json``; passing that
manifest back as ``--config`` replays the run with the same config.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import evaluate, policy_actor, vanilla_bc
from .data import DatasetError, generate_expert, generate_offline, load_dataset, save_dataset
from .envs import GridSpec, build_redundant_gridworld, default_grid
from .mdp_core import TabularPolicy, soften, value_iteration
from .nn import load_mlp, save_mlp
from .plots import bar_chart, line_chart
from .theory import (
    LinearLatentDecoder,
    optimal_decoder,
    random_theorem1_instance,
    random_theorem3_instance,
    tabular_latent_bc,
    theorem2_sweep,
)
from .trail import (
    EbmConfig,
    EnergyModel,
    RffMap,
    cluster_embeddings,
    compose,
    empirical_rows,
    fit_tabular_decoder,
    group_mean,
    rff_features,
    tabular_reparametrize,
    train_transition_ebm,
    transition_rep_error,
)

log = logging.getLogger("trail_il")

METHODS = ("trail-ebm", "trail-linear", "trail-tabular", "bc")
EXIT_CONFIG = 2
EXIT_VIOLATION = 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    env: dict = field(default_factory=lambda: default_grid().to_dict())
    m_offline: int = 50_000
    n_expert: int = 50
    method: str = "trail-tabular"
    n_latent: int = 4
    expert_eps: float = 0.2
    embed_dim: int = 8
    hidden: list = field(default_factory=lambda: [256, 256])
    rff_dim: int = 4096
    negatives: int = 64
    steps: int = 20_000
    lr: float = 3e-4
    batch: int = 256
    seed: int = 0
    joint_phi: bool = False
    finetune_decoder: bool = False
    episodes: int = 10
    eval_seeds: int = 4
    horizon: int = 50

    def validate(self):
        pos_int = ("m_offline", "n_expert", "n_latent", "embed_dim", "rff_dim", "negatives",
                   "steps", "batch", "episodes", "eval_seeds", "horizon")
        for name in pos_int:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"field '{name}': must be a positive integer, got {v!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"field 'seed': must be a non-negative integer, got {self.seed!r}")
        if self.method not in METHODS:
            raise ConfigError(f"field 'method': must be one of {', '.join(METHODS)}, got {self.method!r}")
        if not isinstance(self.lr, (int, float)) or isinstance(self.lr, bool) or not self.lr > 0:
            raise ConfigError(f"field 'lr': must be a positive number, got {self.lr!r}")
        if not isinstance(self.expert_eps, (int, float)) or not 0.0 <= self.expert_eps <= 1.0:
            raise ConfigError(f"field 'expert_eps': must lie in [0, 1], got {self.expert_eps!r}")
        for name in ("joint_phi", "finetune_decoder"):
            if not isinstance(getattr(self, name), bool):
                raise ConfigError(f"field '{name}': must be true or false")
        if not isinstance(self.hidden, list) or not self.hidden or not all(
            isinstance(h, int) and not isinstance(h, bool) and h > 0 for h in self.hidden
        ):
            raise ConfigError(f"field 'hidden': must be a non-empty list of positive integers, got {self.hidden!r}")
        if not isinstance(self.env, dict):
            raise ConfigError("field 'env': must be an object")
        known = {f.name for f in dataclasses.fields(GridSpec)}
        for key in self.env:
            if key not in known:
                raise ConfigError(f"field 'env.{key}': unknown key")
        try:
            spec = GridSpec.from_dict(self.env)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field 'env': {exc}") from None
        if self.n_latent > spec.n_actions:
            raise ConfigError(f"field 'n_latent': {self.n_latent} exceeds the {spec.n_actions} raw actions")
        return self

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigError(f"field '{key}': unknown key")
        return cls(**doc).validate()

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


FLAG_FIELDS = {
    "embed_dim": int, "rff_dim": int, "negatives": int, "steps": int, "lr": float,
    "batch": int, "seed": int, "episodes": int, "eval_seeds": int, "method": str,
}


def load_config(args):
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if isinstance(doc, dict) and "config_hash" in doc and "config" in doc:
            doc = doc["config"]  # a manifest
    doc = dict(doc) if isinstance(doc, dict) else doc
    if isinstance(doc, dict):
        for name in FLAG_FIELDS:
            v = getattr(args, name, None)
            if v is not None:
                doc[name] = v
        for name in ("joint_phi", "finetune_decoder"):
            if getattr(args, name, False):
                doc[name] = True
    return ExperimentConfig.from_dict(doc)


# --- artifacts ------------------------------------------------------------------

def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, cfg, args, artifacts, extra=None):
    path = out / "manifest.json"
    doc = json.loads(path.read_text()) if path.exists() else {}
    # top-level config is the latest run's; every run also keeps its own copy
    doc["config"] = cfg.to_dict()
    doc["config_hash"] = cfg.digest()
    doc["seed"] = cfg.seed
    doc["version"] = __version__
    runs = doc.setdefault("runs", [])
    flags = {k: v for k, v in vars(args).items()
             if k not in ("command", "config", "verbose") and v not in (None, False)}
    entry = {
        "command": args.command,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "flags": flags,
        "artifacts": {Path(p).name: {"path": str(p), "sha256": _sha256(p)} for p in artifacts},
    }
    if extra:
        entry.update(extra)
    runs.append(entry)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _write_csv(path, rows):
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        names = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(fh, fieldnames=names, restval="")
        w.writeheader()
        w.writerows(rows)
    return path


def _need(path):
    if not Path(path).exists():
        raise FileNotFoundError(f"missing artifact {path}; run the earlier stage first")
    return path


def build_env(cfg):
    world = build_redundant_gridworld(GridSpec.from_dict(cfg.env))
    expert = soften(value_iteration(world.mdp, world.reward), cfg.expert_eps)
    d_off = np.full(world.mdp.n_states, 1.0 / world.mdp.n_states)
    return world, expert, d_off


# --- subcommands ----------------------------------------------------------------

def cmd_gen_data(cfg, args, out):
    world, expert, d_off = build_env(cfg)
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    offline = generate_offline(world.mdp, d_off, cfg.m_offline, seeds[0])
    demos = generate_expert(world.mdp, expert, cfg.n_expert, seeds[1])
    save_dataset(out / "offline.jsonl", offline)
    save_dataset(out / "expert.jsonl", demos)
    paths = [
        out / "offline.jsonl",
        out / "expert.jsonl",
        _write_json(out / "env.json", {"spec": world.spec.to_dict(), "mdp": world.mdp.to_json()}),
    ]
    write_manifest(out, cfg, args, paths)
    print(f"wrote {len(offline)} offline triples and {len(demos)} expert pairs to {out}")
    return 0


def _load_data(cfg, out):
    world, expert, d_off = build_env(cfg)
    n_s, n_a = world.mdp.n_states, world.mdp.n_actions
    offline = load_dataset(_need(out / "offline.jsonl"), n_s, n_a)
    demos = load_dataset(_need(out / "expert.jsonl"), n_s, n_a)
    return world, expert, d_off, offline, demos


def _factor_from_phi(counts, d_off, phi, k):
    rows = empirical_rows(counts)
    n_s = rows.shape[0]
    t_z = np.zeros((n_s, k, n_s))
    for s in range(n_s):
        for z in range(k):
            member = phi[s] == z
            t_z[s, z] = group_mean(rows[s, member] if member.any() else rows[s])
    return t_z, transition_rep_error(rows, d_off, phi, t_z)


def cmd_pretrain(cfg, args, out):
    world, _, d_off, offline, _ = _load_data(cfg, out)
    n_s, n_a = world.mdp.n_states, world.mdp.n_actions
    counts = offline.counts(n_s, n_a)
    paths = []
    if cfg.method == "bc":
        write_manifest(out, cfg, args, [])
        print("bc has no pretraining stage")
        return 0
    if cfg.method == "trail-tabular":
        fac = tabular_reparametrize(counts, d_off, cfg.n_latent, seed=cfg.seed, counts=True)
        phi, t_z, j_t = fac.phi, fac.t_z, fac.j_t
    else:
        ecfg = EbmConfig(embed_dim=cfg.embed_dim, hidden=tuple(cfg.hidden), steps=cfg.steps,
                         batch=cfg.batch, negatives=cfg.negatives, lr=cfg.lr, seed=cfg.seed)
        model, history = train_transition_ebm(offline, ecfg, n_s, n_a)
        paths += [out / "ebm_phi.bin", out / "ebm_psi.bin"]
        save_mlp(paths[0], model.phi)
        save_mlp(paths[1], model.psi)
        paths.append(_write_json(out / "ebm.json", {
            "embed_dim": cfg.embed_dim, "hidden": cfg.hidden, "mode": "tabular",
            "n_states": n_s, "n_actions": n_a, "rff_dim": cfg.rff_dim, "rff_seed": cfg.seed,
            "joint_phi": cfg.joint_phi, "history": history,
        }))
        phi = cluster_embeddings(model.phi_table(), cfg.n_latent, cfg.seed)
        t_z, j_t = _factor_from_phi(counts, d_off, phi, cfg.n_latent)
    paths.append(_write_json(out / "factorization.json", {
        "phi": phi.tolist(), "t_z": t_z.tolist(), "j_t": float(j_t), "n_latent": cfg.n_latent,
    }))
    write_manifest(out, cfg, args, paths, {"j_t": float(j_t)})
    print(f"pretrained {cfg.method}: J_T = {j_t:.6g}")
    return 0


def _rff_table(cfg, out):
    meta = json.loads(_need(out / "ebm.json").read_text())
    phi_net = load_mlp(_need(out / "ebm_phi.bin"))
    psi_net = load_mlp(out / "ebm_psi.bin")
    model = EnergyModel(phi_net, psi_net, np.zeros(1, dtype=np.int64), meta["n_states"], meta["n_actions"])
    table = model.phi_table()
    rff = RffMap.sample(table.shape[-1], meta["rff_dim"], meta["rff_seed"])
    return rff_features(table.reshape(-1, table.shape[-1]), rff).reshape(*table.shape[:2], -1)


def cmd_imitate(cfg, args, out):
    world, _, d_off, offline, demos = _load_data(cfg, out)
    n_s, n_a = world.mdp.n_states, world.mdp.n_actions
    if cfg.method == "bc":
        policy = vanilla_bc(demos, "tabular", n_states=n_s, n_actions=n_a)
    elif cfg.method == "trail-linear":
        # the latent MSE is minimised in closed form by the per-state mean embedding
        emb = _rff_table(cfg, out)
        theta = emb.mean(axis=1)
        sums = np.zeros_like(theta)
        np.add.at(sums, demos.s, emb[demos.s, demos.a])
        seen = np.bincount(demos.s, minlength=n_s)
        theta = np.where(seen[:, None] > 0, sums / np.maximum(seen, 1)[:, None], theta)
        dec = LinearLatentDecoder(emb, np.outer(d_off, np.full(n_a, 1.0 / n_a)))
        policy = dec.policy(theta)
    else:
        fac = json.loads(_need(out / "factorization.json").read_text())
        phi = np.asarray(fac["phi"], dtype=np.int64)
        s, a = offline.s, offline.a
        if cfg.finetune_decoder:
            s, a = np.concatenate([s, demos.s]), np.concatenate([a, demos.a])
        dec = fit_tabular_decoder(s, a, phi[s, a], n_s, cfg.n_latent, n_a, phi)
        policy = compose(dec, tabular_latent_bc(demos, phi, cfg.n_latent, n_s))
    path = _write_json(out / "policy.json", {"method": cfg.method, "probs": policy.probs.tolist()})
    write_manifest(out, cfg, args, [path])
    print(f"wrote {cfg.method} policy to {path}")
    return 0


def cmd_eval(cfg, args, out):
    world, _, _ = build_env(cfg)
    doc = json.loads(_need(out / "policy.json").read_text())
    policy = TabularPolicy(np.asarray(doc["probs"]))
    summary = evaluate(world.mdp, policy_actor(policy), world.goal_state, cfg.episodes,
                       cfg.eval_seeds, cfg.horizon, base_seed=cfg.seed)
    res = {"method": doc["method"], "episodes": cfg.episodes, "eval_seeds": cfg.eval_seeds,
           **summary.to_dict()}
    path = _write_json(out / "eval.json", res)
    write_manifest(out, cfg, args, [path])
    print(f"{doc['method']}: success {summary.success_rate:.3f} +- {summary.stderr_success:.3f}, "
          f"return {summary.mean_return:.3f} +- {summary.stderr_return:.3f}")
    return 0


def cmd_verify_bound(cfg, args, out):
    rows = []
    theorems = ("1", "3") if args.theorem == "all" else (args.theorem,)
    for thm in theorems:
        for i in range(args.instances):
            rng = np.random.default_rng([cfg.seed, int(thm), i])
            if thm == "1":
                rep = random_theorem1_instance(rng, near_optimal=i % 2 == 1).report()
            else:
                rep = random_theorem3_instance(rng, theta="mean" if i % 2 else "random").report()
            rows.append({"theorem": int(thm), "instance": i, **rep.to_dict()})
    bad = [r for r in rows if not r["holds"]]
    paths = [_write_json(out / "bounds.json", {"rows": rows, "violations": len(bad)}),
             _write_csv(out / "bounds.csv", rows)]
    write_manifest(out, cfg, args, paths, {"violations": len(bad)})
    print(f"{len(rows) - len(bad)}/{len(rows)} instances satisfy the bound")
    for r in bad:
        print(f"violation: theorem {r['theorem']} instance {r['instance']}: "
              f"lhs {r['lhs']:.6g} > rhs {r['rhs']:.6g}", file=sys.stderr)
    return EXIT_VIOLATION if bad else 0


def cmd_sweep(cfg, args, out):
    world, expert, d_off = build_env(cfg)
    mdp, phi, k = world.mdp, world.phi_star, world.n_latent
    d_joint = np.outer(d_off, np.full(mdp.n_actions, 1.0 / mdp.n_actions))
    decoder = optimal_decoder(d_joint, phi, k)
    t_z = mdp.transition[:, :k, :]  # exact factorization: duplicates share rows
    rows = theorem2_sweep(mdp, expert, d_off, phi, t_z, decoder, args.n_grid, args.resamples,
                          cfg.seed, workers=args.workers)
    paths = [_write_csv(out / "sweep.csv", rows), _write_json(out / "sweep.json", {"rows": rows})]
    write_manifest(out, cfg, args, paths)
    for r in rows:
        print(f"n={r['n']:>7d}  mean Diff {r['mean_diff']:.5f} +- {r['stderr']:.5f}  bound {r['bound']:.5f}")
    return 0 if all(r["holds"] for r in rows) else EXIT_VIOLATION


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(cfg, args, out):
    dirs = [Path(d) for d in args.runs] or [out]
    paths = []
    evals = []
    for d in dirs:
        if (d / "eval.json").exists():
            evals.append((d.name, json.loads((d / "eval.json").read_text())))
        if (d / "sweep.csv").exists():
            rows = _read_csv(d / "sweep.csv")
            ns = [float(r["n"]) for r in rows]
            svg = line_chart(
                {"mean Diff": (ns, [float(r["mean_diff"]) for r in rows]),
                 "bound": (ns, [float(r["bound"]) for r in rows])},
                title=f"{d.name}: Diff vs expert samples", xlabel="n", ylabel="Diff",
                logx=True, logy=True,
            )
            paths.append(out / f"sweep_{d.name}.svg")
            paths[-1].write_text(svg)
        if (d / "bounds.csv").exists():
            rows = sorted(_read_csv(d / "bounds.csv"), key=lambda r: float(r["rhs"]))
            idx = list(range(len(rows)))
            svg = line_chart(
                {"lhs": (idx, [float(r["lhs"]) + 1e-12 for r in rows]),
                 "rhs": (idx, [float(r["rhs"]) + 1e-12 for r in rows])},
                title=f"{d.name}: bound check", xlabel="instance (sorted by rhs)",
                ylabel="value", logy=True,
            )
            paths.append(out / f"bounds_{d.name}.svg")
            paths[-1].write_text(svg)
    if evals:
        summary = [{"run": name, "method": e["method"], "success_rate": e["success_rate"],
                    "stderr_success": e["stderr_success"], "mean_return": e["mean_return"],
                    "stderr_return": e["stderr_return"]} for name, e in evals]
        paths.append(_write_csv(out / "summary.csv", summary))
        svg = bar_chart([f"{r['run']} ({r['method']})" for r in summary],
                        [r["success_rate"] for r in summary],
                        [r["stderr_success"] for r in summary],
                        title="goal-reaching success", ylabel="success rate")
        paths.append(out / "success.svg")
        paths[-1].write_text(svg)
    if not paths:
        print("nothing to report: no eval.json, sweep.csv or bounds.csv found", file=sys.stderr)
        return 1
    write_manifest(out, cfg, args, paths)
    for p in paths:
        print(f"wrote {p}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_pretrain,
    "imitate": cmd_imitate,
    "eval": cmd_eval,
    "verify-bound": cmd_verify_bound,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def _int_list(text):
    try:
        vals = [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be positive")
    return vals


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (or a run manifest)")
    common.add_argument("--out", default="runs/default", help="artifact directory")
    common.add_argument("--method", choices=METHODS)
    common.add_argument("--embed-dim", dest="embed_dim", type=int)
    common.add_argument("--rff-dim", dest="rff_dim", type=int)
    common.add_argument("--negatives", type=int)
    common.add_argument("--steps", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--batch", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--joint-phi", dest="joint_phi", action="store_true")
    common.add_argument("--finetune-decoder", dest="finetune_decoder", action="store_true")
    common.add_argument("--episodes", type=int)
    common.add_argument("--eval-seeds", dest="eval_seeds", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="trail-il", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-data", "pretrain", "imitate", "eval"):
        sub.add_parser(name, parents=[common])
    vb = sub.add_parser("verify-bound", parents=[common])
    vb.add_argument("--instances", type=int, default=100)
    vb.add_argument("--theorem", choices=("1", "3", "all"), default="1")
    sw = sub.add_parser("sweep", parents=[common])
    sw.add_argument("--n-grid", dest="n_grid", type=_int_list, default=[100, 1000, 10000])
    sw.add_argument("--resamples", type=int, default=200)
    sw.add_argument("--workers", type=int, default=1)
    rp = sub.add_parser("report", parents=[common])
    rp.add_argument("runs", nargs="*", help="run directories to aggregate (default: --out)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, args, out)
    except (FileNotFoundError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
