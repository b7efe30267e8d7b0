"""Benchmark commands: sweep drivers, CSV emission, and plot scripts.

Each command reads a validated key-value config, runs its experiment,
and writes a header-first CSV whose leading comment line records the
artifact version and a config fingerprint.  Plots are emitted as
standalone matplotlib scripts that read the CSVs, keeping the library
itself free of plotting dependencies.

Determinism: given (config, seed) every command is deterministic in
single-threaded mode; wallclock columns (pareto only) are the one
exception and are excluded from the train/instability/eigs schemas.
"""

from __future__ import annotations

import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, ConfigError, fingerprint, parse_config, validate_keys
from .envs import (
    EnvSpec,
    diffdrive_make,
    electric_make,
    lqr_appendix_env,
    lqr_make,
    lqr_optimal_gain,
    point_sampler,
    random_linear_env,
)
from .gradients import (
    bptt_gradient,
    ctpg_gradient,
    fd_discrete_gradient,
    fd_gradient_oracle,
    node_gradient,
    reverse_jacobian_eigs,
    spectrum_pairing_residual,
)
from .policy import MlpArch, MlpPolicy, ScalarGainPolicy, init_params, load_params, mlp_policy_for, save_params
from .solvers import SolverConfig
from .training import (
    AdamParams,
    BpttSettings,
    CtpgSettings,
    NodeSettings,
    TrainConfig,
    train_policy,
)

ENV_KEYS = {
    "env.name", "env.horizon",
    "lqr.A", "lqr.B", "lqr.Q", "lqr.R", "lqr.x0",
    "diffdrive.wheelbase", "diffdrive.cost_weight",
    "electric.k_e", "electric.charge", "electric.mass",
    "electric.softening", "electric.control_cost",
    "random_linear.dim", "random_linear.seed",
}
POLICY_KEYS = {
    "policy.type", "policy.hidden", "policy.last_layer_scale",
    "policy.seed", "policy.gain", "policy.params_file",
}

ORACLE_NORM_FLOOR = 1e-12  # relative-error denominator floor


def build_env(cfg: Config) -> EnvSpec:
    name = cfg.str("env.name", "lqr")
    horizon = cfg.float("env.horizon")
    if name == "lqr":
        A = cfg.matrix("lqr.A", np.zeros((2, 2)))
        B = cfg.matrix("lqr.B", np.eye(2))
        Q = cfg.matrix("lqr.Q", np.eye(2))
        R = cfg.matrix("lqr.R", np.eye(2))
        x0 = cfg.vector("lqr.x0", np.ones(A.shape[0]))
        return lqr_make(A, B, Q, R, horizon if horizon is not None else 25.0,
                        point_sampler(x0))
    if name == "diffdrive":
        return diffdrive_make(
            L=cfg.float("diffdrive.wheelbase", 0.5),
            torque_cost_weight=cfg.float("diffdrive.cost_weight", 0.1),
            T=horizon if horizon is not None else 3.0)
    if name == "electric":
        return electric_make(
            k_e=cfg.float("electric.k_e", 1.0),
            q=cfg.float("electric.charge", 1.0),
            m=cfg.float("electric.mass", 1.0),
            T=horizon if horizon is not None else 2.0,
            softening=cfg.float("electric.softening", 1e-4),
            control_cost=cfg.float("electric.control_cost", 0.1))
    if name == "random-linear":
        env = random_linear_env(cfg.int("random_linear.dim", 3),
                                cfg.int("random_linear.seed", 0),
                                T=horizon if horizon is not None else 1.0)
        return env
    raise ConfigError(f"env.name: unknown environment {name!r}")


def build_policy(cfg: Config, env: EnvSpec, seed: int):
    kind = cfg.str("policy.type", "mlp")
    if kind == "linear-optimal":
        if env.name != "lqr":
            raise ConfigError("policy.type=linear-optimal needs env.name=lqr")
        A = cfg.matrix("lqr.A", np.zeros((2, 2)))
        B = cfg.matrix("lqr.B", np.eye(2))
        Q = cfg.matrix("lqr.Q", np.eye(2))
        R = cfg.matrix("lqr.R", np.eye(2))
        K = lqr_optimal_gain(A, B, Q, R)
        arch = MlpArch((env.dim_x, env.dim_u))
        params = np.concatenate([(-K).ravel(), np.zeros(env.dim_u)])
        return MlpPolicy(arch, params, env.feature_map, env.feature_jac)
    if kind == "scalar-gain":
        return ScalarGainPolicy(cfg.float("policy.gain", 1.0))
    if kind == "mlp":
        path = cfg.str("policy.params_file")
        if path is not None:
            params, arch, _ = load_params(path)
            return MlpPolicy(arch, params, env.feature_map, env.feature_jac)
        hidden = tuple(cfg.int_list("policy.hidden", [32]))
        scale = cfg.float("policy.last_layer_scale", 0.1)
        pol_seed = cfg.int("policy.seed", seed)
        return mlp_policy_for(env, hidden, pol_seed, scale)
    raise ConfigError(f"policy.type: unknown policy {kind!r}")


def _fmt(v) -> str:
    if isinstance(v, float):
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def write_csv(path: str | Path, columns: list[str], rows: list[tuple],
              fp: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# artifact=ctpg-{__version__} fingerprint={fp}"]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_plot_script(out_csv: Path, kind: str) -> None:
    """Standalone matplotlib script next to the CSV (not executed here)."""
    body = {
        "pareto": """\
ax = plt.gca()
for est, marker in (("bptt", "s"), ("ctpg", "o"), ("node", "^")):
    sub = df[df.estimator == est]
    if len(sub):
        ax.loglog(sub.total_calls, sub.grad_error_rel, marker, label=est)
ax.set_xlabel("oracle calls (n_f + n_dfdx + n_dfdu)")
ax.set_ylabel("relative gradient error")
ax.legend()
""",
        "instability": """\
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for ax, series in zip(axes, ("node", "ctpg")):
    sub = df[df.series == series]
    ax.semilogy(sub.iteration, sub.loss, label="loss")
    if series == "node":
        ax.semilogy(sub.iteration, sub.aux, label="reconstruction |x(0)-x~(0)|^2")
    ax.set_title(series)
    ax.set_xlabel("iteration")
    ax.legend()
""",
        "train": """\
ax = plt.gca()
for seed in sorted(df.seed.unique()):
    sub = df[df.seed == seed]
    ax.plot(sub.cum_total_calls, sub.mean_loss, label=f"seed {seed}")
ax.set_xlabel("cumulative oracle calls")
ax.set_ylabel("mean loss")
ax.legend()
""",
        "eigs": """\
ax = plt.gca()
ax.scatter(df.real, df.imag, s=14)
ax.axvline(0.0, color="k", lw=0.5)
ax.set_xlabel("Re")
ax.set_ylabel("Im")
""",
    }[kind]
    script = (
        "#!/usr/bin/env python3\n"
        f'"""Plot {kind} results from {out_csv.name} (auto-generated)."""\n'
        "import pandas as pd\n"
        "import matplotlib.pyplot as plt\n\n"
        f'df = pd.read_csv("{out_csv.name}", comment="#")\n'
        + body +
        f'plt.tight_layout()\nplt.savefig("{out_csv.stem}.png", dpi=150)\n'
        f'print("wrote {out_csv.stem}.png")\n'
    )
    Path(str(out_csv) + ".plot.py").write_text(script)


def _oracle_cached(env, policy, x0, fine_h, eps, cache_dir: Path, key: str):
    cache_dir.mkdir(parents=True, exist_ok=True)
    cache = cache_dir / f"oracle_{key}.npy"
    if cache.exists():
        return np.load(cache)
    g = fd_gradient_oracle(env, policy, x0, fine_h=fine_h, eps=eps)
    np.save(cache, g)
    return g


PARETO_KEYS = ENV_KEYS | POLICY_KEYS | {
    "bptt.h_values", "ctpg.tolerances", "node.tolerances",
    "oracle.fine_h", "oracle.eps", "seeds",
}
PARETO_COLUMNS = ["experiment", "estimator", "fingerprint", "seed",
                  "grad_error_rel", "grad_error_abs", "n_f", "n_dfdx",
                  "n_dfdu", "total_calls", "wallclock_s", "loss", "aux"]


def cmd_pareto(config_path: str, out_csv: str, seed_override: int | None = None,
               threads: int = 0) -> int:
    raw = parse_config(config_path)
    validate_keys(raw, PARETO_KEYS, "pareto")
    cfg = Config(raw)
    env = build_env(cfg)
    policy = build_policy(cfg, env, seed=0)
    h_values = cfg.float_list("bptt.h_values", [0.5, 0.25, 0.1, 0.05, 0.02, 0.01])
    tols = cfg.float_list("ctpg.tolerances",
                          [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8])
    node_tols = cfg.float_list("node.tolerances", [1e-3, 1e-6])
    fine_h = cfg.float("oracle.fine_h", 1e-4)
    eps = cfg.float("oracle.eps", 1e-6)
    seeds = [seed_override] if seed_override is not None \
        else cfg.int_list("seeds", [0, 1, 2, 3, 4])
    fp = fingerprint(dict(raw, _cmd="pareto"))
    out_csv = Path(out_csv)

    points = [("bptt", f"bptt:h={h:g}", h) for h in h_values]
    points += [("ctpg", f"ctpg:tol={t:g}", t) for t in tols]
    points += [("node", f"node:tol={t:g}", t) for t in node_tols]

    def run_point(args):
        estimator, point_fp, value, seed = args
        x0 = env.sample_x0(np.random.default_rng(seed))
        x0_key = fingerprint({"x0": x0.tobytes().hex()})
        oracle = _oracle_cached(env, policy, x0, fine_h, eps,
                                out_csv.parent / "oracle_cache",
                                f"{fp}_{x0_key}")
        denom = max(float(np.linalg.norm(oracle)), ORACLE_NORM_FLOOR)
        if estimator == "bptt":
            est = bptt_gradient(env, policy, x0, value)
        elif estimator == "ctpg":
            sc = SolverConfig("adaptive", abstol=value, reltol=value)
            est = ctpg_gradient(env, policy, x0, sc, sc)
        else:
            sc = SolverConfig("adaptive", abstol=value, reltol=value)
            est = node_gradient(env, policy, x0, sc)
        if est.diverged or not np.all(np.isfinite(est.grad)):
            err_abs = err_rel = float("inf")
        else:
            err_abs = float(np.linalg.norm(est.grad - oracle))
            err_rel = err_abs / denom
        aux = est.aux if est.aux is not None else ""
        return (estimator, point_fp, seed, err_rel, err_abs,
                est.nfe.n_f, est.nfe.n_dfdx, est.nfe.n_dfdu, est.nfe.total,
                est.wallclock, est.loss, aux)

    tasks = [(e, pfp, v, s) for (e, pfp, v) in points for s in seeds]
    if threads > 0:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_point, tasks))
    else:
        results = [run_point(t) for t in tasks]

    rows = [("pareto", *r) for r in results]
    rows.sort(key=lambda r: (r[1], r[2], r[3]))
    write_csv(out_csv, PARETO_COLUMNS, rows, fp)
    write_plot_script(out_csv, "pareto")

    # dominance gate: aggregate per sweep point over seeds
    def aggregate(estimator):
        agg = {}
        for r in results:
            if r[0] != estimator or not np.isfinite(r[3]):
                continue
            agg.setdefault(r[1], []).append((r[3], r[8]))
        return {k: (float(np.mean([e for e, _ in v])),
                    float(np.mean([c for _, c in v]))) for k, v in agg.items()}

    bptt_pts = aggregate("bptt")
    ctpg_pts = aggregate("ctpg")
    failures = []
    for name, (err, calls) in sorted(bptt_pts.items()):
        if not any(ce <= err and cc < calls for ce, cc in ctpg_pts.values()):
            failures.append(name)
    if failures:
        print(f"pareto: dominance FAILED for {', '.join(failures)}",
              file=sys.stderr)
        return 1
    print(f"pareto: wrote {out_csv} ({len(rows)} rows); "
          f"ctpg dominates all {len(bptt_pts)} bptt points")
    return 0


INSTABILITY_KEYS = ENV_KEYS | POLICY_KEYS | {
    "train.iterations", "train.step_size", "train.batch_size",
    "train.grad_clip", "node.tol", "ctpg.tol", "seed",
}
INSTABILITY_COLUMNS = ["series", "iteration", "loss", "aux", "grad_norm",
                       "cum_n_f", "cum_n_dfdx", "cum_n_dfdu"]


def cmd_instability(config_path: str, out_csv: str,
                    seed_override: int | None = None, threads: int = 0) -> int:
    raw = parse_config(config_path)
    validate_keys(raw, INSTABILITY_KEYS, "instability")
    cfg = Config(raw)
    env = build_env(cfg)
    iterations = cfg.int("train.iterations", 1000)
    lr = cfg.float("train.step_size", 0.0002)
    batch = cfg.int("train.batch_size", 1)
    clip = cfg.float("train.grad_clip", 1.0)
    seed = seed_override if seed_override is not None else cfg.int("seed", 0)
    hidden = tuple(cfg.int_list("policy.hidden", [32]))
    scale = cfg.float("policy.last_layer_scale", 0.1)
    node_tol = cfg.float("node.tol", 1e-6)
    ctpg_tol = cfg.float("ctpg.tol", 1e-6)
    fp = fingerprint(dict(raw, _cmd="instability"))

    def factory(param_seed):
        return mlp_policy_for(env, hidden, param_seed, scale)

    rows = []
    for series, train_cfg in (
        ("node", TrainConfig(
            "node", NodeSettings(SolverConfig("adaptive", abstol=node_tol,
                                              reltol=node_tol)),
            batch, iterations, AdamParams(lr), grad_clip=clip, seed=seed)),
        ("ctpg", TrainConfig(
            "ctpg", CtpgSettings(
                SolverConfig("adaptive", abstol=ctpg_tol, reltol=ctpg_tol),
                SolverConfig("adaptive", abstol=ctpg_tol, reltol=ctpg_tol)),
            batch, iterations, AdamParams(lr), grad_clip=clip, seed=seed)),
    ):
        _, hist = train_policy(env, factory, train_cfg)
        for r in hist.records:
            rows.append((series, r.iteration, r.mean_loss,
                         r.aux_mean if r.aux_mean is not None else "",
                         r.grad_norm, r.cum_nfe.n_f, r.cum_nfe.n_dfdx,
                         r.cum_nfe.n_dfdu))
    rows.sort(key=lambda r: (r[0], r[1]))
    write_csv(out_csv, INSTABILITY_COLUMNS, rows, fp)
    write_plot_script(Path(out_csv), "instability")
    print(f"instability: wrote {out_csv} ({len(rows)} rows)")
    return 0


TRAIN_KEYS = ENV_KEYS | POLICY_KEYS | {
    "estimator", "train.iterations", "train.step_size", "train.batch_size",
    "train.grad_clip", "seeds",
    "ctpg.fwd_abstol", "ctpg.fwd_reltol", "ctpg.bwd_abstol", "ctpg.bwd_reltol",
    "ctpg.tol", "bptt.h", "node.tol",
    "dump.trajectories", "dump.grid_n", "dump.seed",
}
TRAIN_COLUMNS = ["seed", "iteration", "mean_loss", "grad_norm", "aux_mean",
                 "n_failed", "cum_n_f", "cum_n_dfdx", "cum_n_dfdu",
                 "cum_total_calls"]


def estimator_settings(cfg: Config, estimator: str):
    if estimator == "ctpg":
        tol = cfg.float("ctpg.tol", 1e-4)
        fwd = SolverConfig("adaptive",
                           abstol=cfg.float("ctpg.fwd_abstol", tol),
                           reltol=cfg.float("ctpg.fwd_reltol", tol))
        bwd = SolverConfig("adaptive",
                           abstol=cfg.float("ctpg.bwd_abstol", tol),
                           reltol=cfg.float("ctpg.bwd_reltol", tol))
        return CtpgSettings(fwd, bwd)
    if estimator == "bptt":
        return BpttSettings(cfg.float("bptt.h", 0.01))
    if estimator == "node":
        tol = cfg.float("node.tol", 1e-6)
        return NodeSettings(SolverConfig("adaptive", abstol=tol, reltol=tol))
    raise ConfigError(f"estimator: unknown estimator {estimator!r}")


def cmd_train(config_path: str, out_csv: str, out_params: str | None = None,
              seed_override: int | None = None, threads: int = 0) -> int:
    raw = parse_config(config_path)
    validate_keys(raw, TRAIN_KEYS, "train")
    cfg = Config(raw)
    env = build_env(cfg)
    estimator = cfg.str("estimator", "ctpg")
    settings = estimator_settings(cfg, estimator)
    seeds = [seed_override] if seed_override is not None \
        else cfg.int_list("seeds", [0])
    hidden = tuple(cfg.int_list("policy.hidden", [32]))
    scale = cfg.float("policy.last_layer_scale", 0.1)
    fp = fingerprint(dict(raw, _cmd="train"))

    rows = []
    finals = {}
    for seed in seeds:
        train_cfg = TrainConfig(
            estimator, settings,
            batch_size=cfg.int("train.batch_size", 16),
            iterations=cfg.int("train.iterations", 200),
            adam=AdamParams(cfg.float("train.step_size", 0.01)),
            grad_clip=cfg.float("train.grad_clip", 1.0),
            seed=seed)

        if cfg.str("policy.type", "mlp") == "scalar-gain":
            gain0 = cfg.float("policy.gain", 0.2)

            def factory(param_seed, g0=gain0):
                return ScalarGainPolicy(g0)
        else:
            def factory(param_seed):
                return mlp_policy_for(env, hidden, param_seed, scale)

        policy, hist = train_policy(env, factory, train_cfg)
        finals[seed] = policy
        for r in hist.records:
            rows.append((seed, r.iteration, r.mean_loss, r.grad_norm,
                         r.aux_mean if r.aux_mean is not None else "",
                         r.n_failed, r.cum_nfe.n_f, r.cum_nfe.n_dfdx,
                         r.cum_nfe.n_dfdu, r.cum_nfe.total))
    rows.sort(key=lambda r: (r[0], r[1]))
    write_csv(out_csv, TRAIN_COLUMNS, rows, fp)
    write_plot_script(Path(out_csv), "train")

    if out_params is not None:
        for seed, policy in finals.items():
            path = Path(out_params) if len(finals) == 1 \
                else Path(f"{out_params}.s{seed}")
            if isinstance(policy, MlpPolicy):
                save_params(path, policy.params, policy.arch, seed=seed)
            else:
                path.write_text(f"gain = {float(policy.params[0])!r}\n")

    if cfg.bool("dump.trajectories", False):
        _dump_trajectories(cfg, env, finals, Path(out_csv))
    print(f"train: wrote {out_csv} ({len(rows)} rows)")
    return 0


def _dump_trajectories(cfg: Config, env, finals: dict, out_csv: Path) -> None:
    grid_n = cfg.int("dump.grid_n", 9)
    rng = np.random.default_rng(cfg.int("dump.seed", 0))
    sc = SolverConfig("adaptive", abstol=1e-6, reltol=1e-6)
    from .gradients import rollout_loss

    rows = []
    for seed, policy in finals.items():
        for j in range(grid_n):
            x0 = env.sample_x0(rng)
            _, traj = rollout_loss(env, policy, x0, sc)
            ts = np.linspace(0.0, env.horizon, 101)
            for t in ts:
                x = traj.eval(float(t))[:env.dim_x]
                rows.append((seed, j, float(t), *[float(v) for v in x]))
    cols = ["seed", "traj", "t"] + [f"x{i}" for i in range(env.dim_x)]
    write_csv(Path(str(out_csv) + ".trajectories.csv"), cols, rows, "trajdump")


EIGS_KEYS = ENV_KEYS | POLICY_KEYS | {"probes.count", "probes.seed"}
EIGS_COLUMNS = ["probe", "eig_index", "real", "imag", "pairing_residual",
                "pairing_ok"]


def cmd_eigs(config_path: str, out_csv: str, seed_override: int | None = None,
             threads: int = 0) -> int:
    raw = parse_config(config_path)
    validate_keys(raw, EIGS_KEYS, "eigs")
    cfg = Config(raw)
    env = build_env(cfg)
    policy = build_policy(cfg, env, seed=0)
    count = cfg.int("probes.count", 5)
    seed = seed_override if seed_override is not None else cfg.int("probes.seed", 0)
    rng = np.random.default_rng(seed)
    fp = fingerprint(dict(raw, _cmd="eigs"))

    rows = []
    for p in range(count):
        x = env.sample_x0(rng)
        alpha = rng.normal(size=env.dim_x)
        eigs = reverse_jacobian_eigs(env, policy, x, alpha)
        res = spectrum_pairing_residual(eigs)
        ok = int(res < 1e-6)
        order = np.lexsort((eigs.imag, eigs.real))
        for i, ev in enumerate(eigs[order]):
            rows.append((p, i, float(ev.real), float(ev.imag), res, ok))
    rows.sort(key=lambda r: (r[0], r[1]))
    write_csv(out_csv, EIGS_COLUMNS, rows, fp)
    write_plot_script(Path(out_csv), "eigs")
    n_fail = sum(1 for r in rows if not r[5])
    print(f"eigs: wrote {out_csv}; pairing check "
          f"{'passed' if n_fail == 0 else 'FAILED'} on all probes")
    return 0 if n_fail == 0 else 1


GRADCHECK_KEYS = {"check.rel_tol", "debug.drop_policy_chain"}


def cmd_gradcheck(config_path: str | None = None) -> int:
    raw = parse_config(config_path) if config_path else {}
    validate_keys(raw, GRADCHECK_KEYS, "gradcheck")
    cfg = Config(raw)
    rel_tol = cfg.float("check.rel_tol", 1e-3)
    drop_chain = cfg.bool("debug.drop_policy_chain", False)

    checks = []

    # bptt exactness: reverse-mode of the Euler graph vs FD of the same
    # discrete loss, across three environments and three seeds
    for seed in (0, 1, 2):
        for env_name, env, policy, x0 in _gradcheck_cases(seed):
            est = bptt_gradient(env, policy, x0, h=0.02)
            fd = fd_discrete_gradient(env, policy, x0, h=0.02, eps=1e-6)
            rel = float(np.linalg.norm(est.grad - fd)
                        / max(np.linalg.norm(fd), 1e-12))
            checks.append((f"bptt-exact[{env_name},seed{seed}]", rel,
                           max(1e-5, rel_tol * 1e-2)))

    # estimator agreement on a short-horizon smooth problem; the ctpg
    # check is the one that fails if the policy chain term is dropped
    env = diffdrive_make(T=1.0)
    policy = mlp_policy_for(env, (6,), seed=4, last_layer_scale=0.5)
    x0 = env.sample_x0(np.random.default_rng(3))
    sc = SolverConfig("adaptive", abstol=1e-8, reltol=1e-8)
    g_ctpg = ctpg_gradient(env, policy, x0, sc, sc,
                           include_policy_chain=not drop_chain).grad
    g_bptt = bptt_gradient(env, policy, x0, h=3e-4).grad
    g_fd = fd_gradient_oracle(env, policy, x0, fine_h=1e-3, eps=1e-6)
    denom = float(np.linalg.norm(g_fd))
    checks.append(("adjoint-vs-oracle[ctpg,diffdrive]",
                   float(np.linalg.norm(g_ctpg - g_fd)) / denom, rel_tol))
    checks.append(("agreement[bptt-vs-oracle,diffdrive]",
                   float(np.linalg.norm(g_bptt - g_fd)) / denom, rel_tol))
    checks.append(("agreement[ctpg-vs-bptt,diffdrive]",
                   float(np.linalg.norm(g_ctpg - g_bptt)) / denom, rel_tol))

    width = max(len(name) for name, _, _ in checks)
    ok = True
    print(f"{'check':<{width}}  {'value':>12}  {'tolerance':>10}  status")
    for name, value, tol in checks:
        passed = value <= tol
        ok = ok and passed
        print(f"{name:<{width}}  {value:12.3e}  {tol:10.1e}  "
              f"{'PASS' if passed else 'FAIL'}")
    return 0 if ok else 1


def _gradcheck_cases(seed: int):
    dd = diffdrive_make(T=0.5)
    yield "diffdrive", dd, mlp_policy_for(dd, (4,), seed=seed), \
        dd.sample_x0(np.random.default_rng(seed))
    lqr = lqr_appendix_env(T=1.0)
    arch = MlpArch((2, 3, 2))
    yield "lqr", lqr, MlpPolicy(arch, init_params(arch, seed)), \
        np.array([1.0, 1.0])
    rl = random_linear_env(3, seed=seed, T=0.5)
    arch3 = MlpArch((3, 3))
    yield "random-linear", rl, MlpPolicy(arch3, init_params(arch3, seed)), \
        np.ones(3)
