"""Command-line interface: estimate, analyze, simulate, and the toy workflow.

Exit codes: 0 on success, 1 on user error (bad flags, files, config, data),
2 on internal error.
"""

from __future__ import annotations

import collections
import json
import sys
from typing import List, Optional

import click
import numpy as np
import pandas as pd

from . import analysis, io, simulate, store
from .core import Dataset, IngestionError, ModelConfig, TreevarError, fit_scaler
from .sampler import SamplerPlan, run_core_mcmc, run_mcmc
from .trees import Tree

__all__ = ["cli", "main"]


# ---------------------------------------------------------------------------
# helpers


def _load_store(path: str):
    return store.load_draws(path)


def _read_flags(path: str, dates: List[str]) -> np.ndarray:
    """Binary recession flags aligned to the draw store's dates."""
    try:
        df = pd.read_csv(path)
    except Exception as exc:
        raise IngestionError(f"cannot parse flags file {path}: {exc}") from exc
    if df.shape[1] < 2:
        raise IngestionError("flags file needs date and flag columns")
    keys = [str(pd.Timestamp(str(d)).date()) for d in df.iloc[:, 0]]
    mapping = dict(zip(keys, pd.to_numeric(df.iloc[:, 1], errors="coerce")))
    flags = np.empty(len(dates))
    for i, d in enumerate(dates):
        key = str(pd.Timestamp(str(d)).date()) if "-" in str(d) else str(d)
        if key not in mapping or not np.isfinite(mapping[key]):
            raise IngestionError(f"flags file is missing date {d}")
        flags[i] = mapping[key]
    return (flags > 0).astype(float)


def _target_indices(draws, output: str, unemployment: str):
    names = list(draws.variable_names)
    for label, name in (("output", output), ("unemployment", unemployment)):
        if name not in names:
            raise TreevarError(
                f"{label} variable {name!r} not in store (have {names})")
    return names.index(output), names.index(unemployment)


def _identified_shocks(draws, flags_path, output, unemployment):
    flags = _read_flags(flags_path, list(draws.dates))
    targets = _target_indices(draws, output, unemployment)
    return analysis.identify_all_draws(draws, flags, targets), targets


def _resolve_time(value: str, dates: List[str]) -> Optional[np.ndarray]:
    if value == "all":
        return None
    try:
        t = int(value)
    except ValueError:
        dates = [str(d) for d in dates]
        if value not in dates:
            raise TreevarError(f"--time {value!r}: not an index or known date")
        t = dates.index(value)
    if not 0 <= t < len(dates):
        raise TreevarError(f"--time {t} outside 0..{len(dates) - 1}")
    return np.array([t])


def _anchor_rows(dates: List[str], window: Optional[str]) -> np.ndarray:
    """Indices of the periods an --anchor-window START:END selects."""
    if window is None:
        return np.arange(len(dates))
    try:
        start, end = window.split(":")
    except ValueError:
        raise TreevarError("--anchor-window must be START:END")
    dates = [str(d) for d in dates]
    try:
        lo, hi = int(start), int(end)
    except ValueError:
        sel = [i for i, d in enumerate(dates) if start <= d <= end]
        if not sel:
            raise TreevarError(f"anchor window {window!r} selects no dates")
        return np.asarray(sel)
    if not (0 <= lo <= hi < len(dates)):
        raise TreevarError(f"anchor window {window!r} outside the sample")
    return np.arange(lo, hi + 1)


def _quarterly_dates(T: int) -> List[str]:
    stamps = pd.date_range("1960-01-01", periods=T, freq="QS")
    return [str(s.date()) for s in stamps]


# ---------------------------------------------------------------------------
# command group


@click.group(name="treevar")
def cli():
    """Tree-driven time-varying-parameter VAR: estimation and analysis."""


@cli.command()
@click.option("--endog", required=True, type=click.Path(exists=True),
              help="CSV of endogenous variables (date first column).")
@click.option("--modifiers", required=True, type=click.Path(exists=True),
              help="CSV of effect modifiers (date first column).")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="Flat JSON config; defaults apply when omitted.")
@click.option("--transforms", "transforms_path", type=click.Path(exists=True),
              help="JSON mapping column names to none|yoy|yoy_pct|diff|log.")
@click.option("--out", required=True, type=click.Path(),
              help="Directory for the draw store and manifest.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker threads for the per-equation blocks.")
def estimate(endog, modifiers, config_path, transforms_path, out, seed, threads):
    """Estimate the model and write a reproducible draw store."""
    config = io.load_config(config_path) if config_path else ModelConfig()
    if seed is not None:
        config = config.replace(seed=seed)
    transforms = None
    if transforms_path:
        with open(transforms_path) as f:
            transforms = json.load(f)
    data = io.load_panel(endog, modifiers, transforms)
    plan = SamplerPlan.from_config(config, n_threads=threads)
    draws = run_mcmc(config, data, plan=plan)
    manifest = store.save_draws(
        draws, out,
        input_hashes={"endog": store.file_sha256(endog),
                      "modifiers": store.file_sha256(modifiers)})
    acc, prop = draws.tree_accept["mean"]
    click.echo(f"retained {draws.n_retained} draws on T={draws.T}, "
               f"M={len(draws.variable_names)} "
               f"(mean-tree acceptance {acc / max(prop, 1):.2f})")
    click.echo(f"store written to {out} (content {manifest.content_hash[:12]})")


@cli.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--flags", "flags_path", required=True, type=click.Path(exists=True),
              help="CSV of date,flag (1 = recession period).")
@click.option("--output", required=True, help="Output-growth variable name.")
@click.option("--unemployment", required=True, help="Unemployment variable name.")
@click.option("--horizons", type=int, default=16, show_default=True)
@click.option("--time", "time_value", default="all", show_default=True,
              help="'all', a time index, or a date.")
@click.option("--out", "out_prefix", required=True, type=click.Path(),
              help="Prefix for <prefix>_draws.csv and <prefix>_summary.csv.")
def irf(store_path, flags_path, output, unemployment, horizons, time_value,
        out_prefix):
    """Time-varying impulse responses to the identified business-cycle shock."""
    draws = _load_store(store_path)
    shocks, _ = _identified_shocks(draws, flags_path, output, unemployment)
    times = _resolve_time(time_value, list(draws.dates))
    result = analysis.time_varying_irf(draws, shocks, horizons=horizons,
                                       times=times)
    dates = [str(draws.dates[t]) for t in result.times]
    D, n_times, H, M = result.responses.shape
    tidy = pd.DataFrame({
        "draw": np.repeat(np.arange(D), n_times * H * M),
        "date": np.tile(np.repeat(dates, H * M), D),
        "horizon": np.tile(np.repeat(np.arange(1, H + 1), M), D * n_times),
        "variable": np.tile(draws.variable_names, D * n_times * H),
        "response": result.responses.ravel(),
    })
    tidy.to_csv(f"{out_prefix}_draws.csv", index=False)
    q = analysis.average_irf(result)
    summary = pd.DataFrame({
        "horizon": np.repeat(np.arange(1, H + 1), M),
        "variable": np.tile(draws.variable_names, H),
        "q16": q[0].ravel(), "q50": q[1].ravel(), "q84": q[2].ravel(),
    })
    summary.to_csv(f"{out_prefix}_summary.csv", index=False)
    click.echo(f"wrote {out_prefix}_draws.csv and {out_prefix}_summary.csv "
               f"({D} draws, {n_times} periods, {H} horizons; "
               f"{result.n_explosive} explosive)")


@cli.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--flags", "flags_path", required=True, type=click.Path(exists=True))
@click.option("--output", required=True)
@click.option("--unemployment", required=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Optional CSV of the identified factor's share trajectories.")
def identify(store_path, flags_path, output, unemployment, out_path):
    """Label the business-cycle shock per draw and report variance shares."""
    draws = _load_store(store_path)
    shocks, (i_out, i_un) = _identified_shocks(draws, flags_path, output,
                                               unemployment)
    D = len(shocks)
    counts = collections.Counter(s.factor for s in shocks)
    click.echo(f"draws: {D}")
    for j in sorted(counts):
        click.echo(f"factor {j}: chosen in {counts[j]} draws "
                   f"({100.0 * counts[j] / D:.1f}%)")
    click.echo(f"negative-output sign share: "
               f"{100.0 * np.mean([s.sign == -1 for s in shocks]):.1f}%")
    click.echo(f"sign-conflict share: "
               f"{100.0 * np.mean([s.conflict for s in shocks]):.1f}%")
    click.echo(f"median shock scale: "
               f"{float(np.median([s.scale for s in shocks])):.6g}")
    if out_path:
        share = np.empty((D, draws.T, 2))
        for d, s in enumerate(shocks):
            z = analysis.variance_share(draws.Gamma[d], draws.R[d],
                                        draws.sigma2[d], s.factor)
            share[d] = z[:, [i_out, i_un]]
        q = np.percentile(share, [16, 50, 84], axis=0)
        rows = []
        for v, name in enumerate((output, unemployment)):
            for t, date in enumerate(draws.dates):
                rows.append({"date": date, "variable": name,
                             "q16": q[0, t, v], "q50": q[1, t, v],
                             "q84": q[2, t, v]})
        pd.DataFrame(rows).to_csv(out_path, index=False)
        click.echo(f"share trajectories written to {out_path}")


@cli.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--flags", "flags_path", required=True, type=click.Path(exists=True))
@click.option("--output", required=True)
@click.option("--unemployment", required=True)
@click.option("--vary", required=True, help="Modifier to sweep over percentiles.")
@click.option("--percentiles", default="0,25,50,75,100", show_default=True)
@click.option("--anchor-window", default=None,
              help="START:END dates (or indices) whose mean anchors the "
                   "other modifiers; full sample when omitted.")
@click.option("--horizons", type=int, default=16, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def scenario(store_path, flags_path, output, unemployment, vary, percentiles,
             anchor_window, horizons, out_path):
    """IRFs with modifiers pinned: one swept over percentiles, rest anchored."""
    draws = _load_store(store_path)
    shocks, _ = _identified_shocks(draws, flags_path, output, unemployment)
    mods = list(draws.modifier_names)
    if vary not in mods:
        raise TreevarError(f"--vary {vary!r} not in modifiers {mods}")
    j = mods.index(vary)
    try:
        levels = [float(p) for p in percentiles.split(",")]
    except ValueError:
        raise TreevarError(f"--percentiles {percentiles!r} is not a number list")
    rows = _anchor_rows(list(draws.dates), anchor_window)
    anchor = draws.Z[rows].mean(axis=0)
    frames = []
    total_explosive = 0
    for p in levels:
        z_star = anchor.copy()
        z_star[j] = np.percentile(draws.Z[:, j], p)
        resp, n_exp = analysis.scenario_irf(draws, shocks, z_star,
                                            horizons=horizons)
        total_explosive += n_exp
        q = np.percentile(resp, [16, 50, 84], axis=0)       # (3, H, M)
        H, M = q.shape[1:]
        frames.append(pd.DataFrame({
            "percentile": p,
            "horizon": np.repeat(np.arange(1, H + 1), M),
            "variable": np.tile(draws.variable_names, H),
            "q16": q[0].ravel(), "q50": q[1].ravel(), "q84": q[2].ravel(),
        }))
    pd.concat(frames, ignore_index=True).to_csv(out_path, index=False)
    click.echo(f"wrote {out_path} ({len(levels)} percentiles x {horizons} "
               f"horizons x {len(draws.variable_names)} variables; "
               f"{total_explosive} explosive draws across scenarios)")


@cli.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--subset", default=None,
              help="Comma-separated variable names to score jointly.")
def waic(store_path, subset):
    """Widely applicable information criterion of a draw store."""
    draws = _load_store(store_path)
    if subset is None:
        ll = draws.loglik
    else:
        names = list(draws.variable_names)
        wanted = [s.strip() for s in subset.split(",")]
        unknown = [w for w in wanted if w not in names]
        if unknown:
            raise TreevarError(f"--subset names unknown variables: {unknown}")
        mask = np.array([n in wanted for n in names])
        ll = analysis.subset_loglik(draws, mask)
    w, lpd, p = analysis.waic(ll)
    click.echo(f"waic={w:.6g} lpd={lpd:.6g} p_eff={p:.6g}")


@cli.command(name="simulate")
@click.option("--dgp", type=click.Choice(["constant", "step-beta",
                                          "step-variance"]),
              default="constant", show_default=True)
@click.option("--T", "T", type=int, default=250, show_default=True)
@click.option("--M", "M", type=int, default=3, show_default=True)
@click.option("--P", "P", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--endog", "endog_path", required=True, type=click.Path())
@click.option("--modifiers", "modifiers_path", required=True, type=click.Path())
def simulate_cmd(dgp, T, M, P, seed, endog_path, modifiers_path):
    """Simulate a test panel from a canned data-generating process."""
    spec = _canned_spec(dgp, M=M, P=P, T=T)
    data, _ = simulate.simulate_dgp(spec, seed=seed)
    data = Dataset(Y=data.Y, Z=data.Z, variable_names=data.variable_names,
                   modifier_names=data.modifier_names,
                   dates=_quarterly_dates(T))
    io.save_panel(data, endog_path, modifiers_path)
    click.echo(f"wrote {endog_path} and {modifiers_path} "
               f"(T={T}, M={M}, dgp={dgp}, seed={seed})")


def _canned_spec(dgp: str, M: int, P: int, T: int) -> simulate.DgpSpec:
    K = 1 + M * P
    A = np.zeros((M, K))
    for m in range(M):
        A[m, 1 + m] = 0.5
    Gamma = np.full((M, 2), 0.3)
    Gamma[0, 0] = 1.0
    Gamma[0, 1] = 0.0
    if M > 1:
        Gamma[1, 1] = 1.0
    beta_law = None
    r_law = None
    if dgp == "step-beta":
        def beta_law(Z):
            B = np.zeros((Z.shape[0], M, K))
            B[:, 0, 1] = np.where(Z[:, 0] > 0.5, 0.25, -0.25)
            return B
    elif dgp == "step-variance":
        def r_law(Z):
            r = np.full((Z.shape[0], 2), 0.25)
            r[Z[:, 0] > 0.5] = 4.0
            return r
    return simulate.DgpSpec(M=M, P=P, T=T, A=A, Gamma=Gamma,
                            beta_law=beta_law, r_law=r_law)


# ---------------------------------------------------------------------------
# toy single-equation workflow


@cli.command(name="toy-phillips")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True),
              help="CSV with a date column, the dependent series, and one "
                   "regressor (in that order).")
@click.option("--trees", type=int, default=1, show_default=True,
              help="Trees in the coefficient-factor ensemble.")
@click.option("--draws", type=int, default=2000, show_default=True)
@click.option("--burn", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def toy_phillips(data_path, trees, draws, burn, seed):
    """Single-equation illustration: one tree-driven slope on a time trend.

    Fits y_t = c_t + beta_t x_t with beta_t driven by trees over z_t = t, then
    prints the modal tree as regimes: each leaf's posterior-mean slope (raw
    units) and its share of observations.
    """
    df = io._read_csv(data_path)
    if df.shape[1] != 2:
        raise IngestionError("toy data needs exactly two series after the date")
    if df.isna().any().any():
        raise IngestionError("toy data has missing values")
    dates = [str(d.date()) for d in df.index]
    y_raw = df.iloc[:, 0].to_numpy(dtype=float)
    x_raw = df.iloc[:, 1].to_numpy(dtype=float)
    sy, sx = fit_scaler(y_raw), fit_scaler(x_raw)
    T = len(y_raw)
    X = np.column_stack([np.ones(T), sx.forward(x_raw)])
    Z = ((np.arange(T) + 1.0) / T).reshape(-1, 1)
    config = ModelConfig(P=1, Q_beta=1, Q_q=1, S_beta=trees, S_q=1,
                         n_draws=draws, n_burn=burn, seed=seed)
    plan = SamplerPlan.from_config(config)
    out = run_core_mcmc(sy.forward(y_raw)[:, None], X, Z, config, plan)
    unscale = sy.range / sx.range
    slope = out.A[:, 0, 1, None] + out.Beta[:, :, 0, 1]      # (D, T) scaled
    slope_path = unscale * slope.mean(axis=0)
    click.echo(f"posterior-mean slope path (raw units): "
               f"first={slope_path[0]:.3f} min={slope_path.min():.3f} "
               f"max={slope_path.max():.3f} last={slope_path[-1]:.3f}")
    if trees == 1:
        _print_modal_tree(out, Z, dates, unscale)
    else:
        click.echo("(tree diagram is printed for --trees 1)")


def _tree_signature(tree: Tree) -> tuple:
    sig = []

    def rec(node):
        if node.is_leaf:
            sig.append("leaf")
        else:
            sig.append((int(node.var), round(float(node.threshold), 12)))
            rec(node.left)
            rec(node.right)

    rec(tree.root)
    return tuple(sig)


def _print_modal_tree(out, Z, dates, unscale):
    """Print the most frequent single-tree structure with regime summaries."""
    D = out.n_retained
    sigs = []
    tree_objs = []
    for d in range(D):
        tree = Tree.from_node_list(out.mean_trees[d][0][0]["trees"][0])
        tree_objs.append(tree)
        sigs.append(_tree_signature(tree))
    modal, n_modal = collections.Counter(sigs).most_common(1)[0]
    idx = [d for d, s in enumerate(sigs) if s == modal]
    template = tree_objs[idx[0]]
    # per-leaf slope = a + lambda * mu averaged over draws sharing the structure
    leaf_sums = None
    for d in idx:
        mus = np.array([node.mu for node, _ in tree_objs[d].leaves()])
        vals = out.A[d, 0, 1] + out.Lambda[d, 0, 1, 0] * mus
        leaf_sums = vals if leaf_sums is None else leaf_sums + vals
    leaf_means = unscale * leaf_sums / len(idx)
    shares = [100.0 * m.mean() for _, m in template.leaf_masks(Z)]
    click.echo(f"modal tree structure ({n_modal}/{D} draws):")
    lines = []
    counter = {"leaf": 0}

    def rec(node, prefix, tail):
        branch = "└─ " if tail else "├─ "
        if node.is_leaf:
            i = counter["leaf"]
            counter["leaf"] += 1
            lines.append(f"{prefix}{branch}slope {leaf_means[i]:+.3f} "
                         f"({shares[i]:.0f}% of observations)")
            return
        t_idx = int(np.searchsorted(Z[:, 0], node.threshold, side="right")) - 1
        date = dates[max(t_idx, 0)]
        lines.append(f"{prefix}{branch}time <= {date} "
                     f"(trend <= {node.threshold:.4f})")
        ext = "   " if tail else "│  "
        rec(node.left, prefix + ext, False)
        rec(node.right, prefix + ext, True)

    if template.root.is_leaf:
        lines.append(f"└─ slope {leaf_means[0]:+.3f} (100% of observations)")
    else:
        rec(template.root, "", True)
    for line in lines:
        click.echo(line)


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False, prog_name="treevar")
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (TreevarError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # noqa: BLE001 - report and exit 2, never traceback
        click.echo(f"internal error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
