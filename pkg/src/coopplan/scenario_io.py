"""Scenario files (JSON) and result emission: CSV trajectories, metrics JSON, SVG plots."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .model import HyperParams, ScenarioError, ScenarioSpec, validate_scenario
from .planner import PlanResult
from .scenarios import sample_polyline


def load_schema() -> dict:
    return json.loads(resources.files("coopplan").joinpath("scenario.schema.json").read_text())


def _line_of(text: str, path) -> str:
    """Best-effort line hint for a JSON pointer like ['vehicles', 1, 'reference']."""
    keys = [k for k in path if isinstance(k, str)]
    if not keys:
        return ""
    needle = f'"{keys[-1]}"'
    idx = [k for k in path if isinstance(k, int)]
    lines = text.splitlines()
    hits = [n for n, line in enumerate(lines, 1) if needle in line]
    if not hits:
        return ""
    pick = hits[min(idx[0], len(hits) - 1)] if idx else hits[0]
    return f" (line {pick})"


def scenario_from_dict(doc: dict, text: str = "") -> tuple[ScenarioSpec, HyperParams]:
    errors = sorted(jsonschema.Draft202012Validator(load_schema()).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        raise ScenarioError([
            f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
            f"{_line_of(text, list(e.absolute_path))}" for e in errors])
    T = doc.get("T", 100)
    tau_s = doc.get("tau_s", 0.1)
    refs, x0 = [], []
    for i, veh in enumerate(doc["vehicles"]):
        if "reference" in veh:
            ref = np.asarray(veh["reference"], dtype=float)
        else:
            ref = sample_polyline(veh["path"], veh["speed"], tau_s, T)
        refs.append(ref)
        x0.append(veh.get("x0", ref[0] if len(ref) else np.zeros(4)))
    bounds = doc.get("bounds", {})
    spec = ScenarioSpec(
        x0=np.asarray(x0, dtype=float), references=refs, horizon=T, tau_s=tau_s,
        wheelbase=doc.get("wheelbase", 1.7),
        u_lower=bounds.get("lower", [-0.6, -3.0]), u_upper=bounds.get("upper", [0.6, 1.5]),
        q_diag=doc.get("Q", [1.0, 1.0, 0.0, 0.0]), r_diag=doc.get("R", [1.0, 1.0]),
        beta=doc.get("beta", 1.44), d_safe=doc.get("d_safe", 5.5),
        name=doc.get("name", "scenario"),
    )
    diags = check_diagnostics(spec, text)
    if diags:
        raise ScenarioError(diags)
    hyper = HyperParams(**doc.get("hyper", {}))
    return spec, hyper


def check_diagnostics(spec: ScenarioSpec, text: str) -> list[str]:
    out = []
    for d in validate_scenario(spec):
        hint = ""
        if d.startswith("vehicle "):
            k = int(d.split()[1].rstrip(":"))
            hint = _line_of(text, ["vehicles", k, "reference"])
        out.append(d + hint)
    return out


def load_scenario(path) -> tuple[ScenarioSpec, HyperParams]:
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"]) from exc
    try:
        return scenario_from_dict(doc, text)
    except ScenarioError as exc:
        raise ScenarioError([f"{path}: {d}" for d in exc.diagnostics]) from None


def scenario_to_dict(spec: ScenarioSpec, hyper: HyperParams | None = None) -> dict:
    doc = {
        "name": spec.name,
        "T": spec.T,
        "tau_s": spec.tau_s,
        "wheelbase": spec.wheelbase,
        "beta": spec.beta,
        "d_safe": spec.d_safe,
        "Q": spec.q_diag.tolist(),
        "R": spec.r_diag.tolist(),
        "bounds": {"lower": spec.u_lower.tolist(), "upper": spec.u_upper.tolist()},
        "vehicles": [{"x0": np.asarray(spec.x0[i]).tolist(),
                      "reference": np.asarray(spec.references[i]).tolist()}
                     for i in range(spec.N)],
    }
    if hyper is not None:
        h = asdict(hyper)
        h["alpha_schedule"] = list(h["alpha_schedule"])
        doc["hyper"] = h
    return doc


def save_scenario(spec: ScenarioSpec, path, hyper: HyperParams | None = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(scenario_to_dict(spec, hyper), indent=1))
    return path


def specs_equal(a: ScenarioSpec, b: ScenarioSpec) -> bool:
    same_refs = len(a.references) == len(b.references) and all(
        np.array_equal(x, y) for x, y in zip(a.references, b.references))
    return (same_refs and np.array_equal(a.x0, b.x0) and a.horizon == b.horizon
            and a.tau_s == b.tau_s and a.wheelbase == b.wheelbase and a.beta == b.beta
            and a.d_safe == b.d_safe and np.array_equal(a.u_lower, b.u_lower)
            and np.array_equal(a.u_upper, b.u_upper) and np.array_equal(a.q_diag, b.q_diag)
            and np.array_equal(a.r_diag, b.r_diag) and a.name == b.name)


# -- results -----------------------------------------------------------------

def result_to_dict(result: PlanResult, spec: ScenarioSpec | None = None,
                   hyper: HyperParams | None = None) -> dict:
    doc = {
        "solver": result.solver,
        "converged": result.converged,
        "outer_iters": result.outer_iters,
        "final_cost": result.final_cost,
        "min_distance": result.min_distance,
        "cost_history": list(result.cost_history),
        "variance_history": list(result.variance_history),
        "alpha_indices": list(result.alpha_indices),
        "timings": dict(result.timings),
        "exchange": result.exchange,
        "lqr_times": list(result.lqr_times),
        "wall_time": result.wall_time,
        "states": result.states.tolist(),
        "inputs": result.inputs.tolist(),
    }
    params = {}
    if spec is not None:
        params.update(scenario=spec.name, N=spec.N, T=spec.T, beta=spec.beta,
                      d_safe=spec.d_safe, tau_s=spec.tau_s, wheelbase=spec.wheelbase)
    if hyper is not None:
        params.update(sigma=hyper.sigma, rho=hyper.rho, inner_iters=hyper.inner_iters,
                      alpha_schedule=list(hyper.alpha_schedule), outer_tol=hyper.outer_tol,
                      max_outer_iters=hyper.max_outer_iters)
    doc["params"] = params
    return doc


def result_from_dict(doc: dict) -> PlanResult:
    return PlanResult(
        states=np.asarray(doc["states"], dtype=float),
        inputs=np.asarray(doc["inputs"], dtype=float),
        cost_history=list(doc["cost_history"]),
        variance_history=list(doc["variance_history"]),
        min_distance=doc["min_distance"],
        outer_iters=doc["outer_iters"],
        converged=doc["converged"],
        solver=doc["solver"],
        alpha_indices=list(doc["alpha_indices"]),
        timings=dict(doc["timings"]),
        exchange=doc["exchange"],
        lqr_times=list(doc["lqr_times"]),
        wall_time=doc["wall_time"],
    )


def write_trajectories_csv(result: PlanResult, path) -> Path:
    path = Path(path)
    N, T1, _ = result.states.shape
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["agent", "tau", "px", "py", "theta", "v", "delta", "a"])
        for i in range(N):
            for t in range(T1):
                u = [repr(float(x)) for x in result.inputs[i, t]] if t < T1 - 1 else ["", ""]
                w.writerow([i, t, *(repr(float(x)) for x in result.states[i, t]), *u])
    return path


def read_trajectories_csv(path):
    """Inverse of write_trajectories_csv: returns states (N, T+1, 4), inputs (N, T, 2)."""
    rows = list(csv.DictReader(Path(path).open()))
    N = max(int(r["agent"]) for r in rows) + 1
    T1 = max(int(r["tau"]) for r in rows) + 1
    states = np.empty((N, T1, 4))
    inputs = np.empty((N, T1 - 1, 2))
    for r in rows:
        i, t = int(r["agent"]), int(r["tau"])
        states[i, t] = [float(r[k]) for k in ("px", "py", "theta", "v")]
        if t < T1 - 1:
            inputs[i, t] = [float(r["delta"]), float(r["a"])]
    return states, inputs


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def trajectory_figure(result: PlanResult, spec: ScenarioSpec):
    """Planned paths (solid) over their references (dotted), start marked."""
    fig, ax = _pyplot().subplots(figsize=(6, 6))
    for i in range(result.N):
        ref = np.asarray(spec.references[i])
        line, = ax.plot(result.states[i, :, 0], result.states[i, :, 1], lw=1.5, label=f"vehicle {i}")
        ax.plot(ref[:, 0], ref[:, 1], ":", color=line.get_color(), lw=0.8)
        ax.plot(*result.states[i, 0, :2], "o", color=line.get_color(), ms=3)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(fontsize=6, loc="best")
    return fig


def inputs_figure(result: PlanResult, spec: ScenarioSpec):
    fig, (a1, a2) = _pyplot().subplots(2, 1, sharex=True, figsize=(7, 5))
    tt = np.arange(result.inputs.shape[1]) * spec.tau_s
    for i in range(result.N):
        a1.plot(tt, result.inputs[i, :, 0], lw=1)
        a2.plot(tt, result.inputs[i, :, 1], lw=1)
    for a, k, name in ((a1, 0, "steering [rad]"), (a2, 1, "acceleration [m/s^2]")):
        a.axhline(spec.u_lower[k], color="k", ls="--", lw=0.6)
        a.axhline(spec.u_upper[k], color="k", ls="--", lw=0.6)
        a.set_ylabel(name)
    a2.set_xlabel("time [s]")
    return fig


def distance_figure(result: PlanResult, spec: ScenarioSpec):
    fig, ax = _pyplot().subplots(figsize=(7, 3))
    ax.plot(np.arange(result.states.shape[1]) * spec.tau_s, result.distance_profile())
    ax.axhline(spec.d_safe, color="r", ls="--", lw=0.8, label="d_safe")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("min center distance [m]")
    ax.legend()
    return fig


def variance_figure(result: PlanResult):
    fig, ax = _pyplot().subplots(figsize=(6, 3.5))
    k = np.arange(1, len(result.variance_history) + 1)
    ax.plot(k, result.variance_history, "o-")
    ax.set_yscale("log")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("mean variance of y across agents")
    return fig


def write_plots(result: PlanResult, spec: ScenarioSpec, outdir) -> list[Path]:
    outdir = Path(outdir)
    figures = {"trajectories.svg": trajectory_figure(result, spec),
               "inputs.svg": inputs_figure(result, spec),
               "min_distance.svg": distance_figure(result, spec)}
    if result.variance_history:
        figures["consensus_variance.svg"] = variance_figure(result)
    paths = []
    for name, fig in figures.items():
        fig.tight_layout()
        fig.savefig(outdir / name, format="svg")
        _pyplot().close(fig)
        paths.append(outdir / name)
    return paths


def emit(result: PlanResult, outdir, spec: ScenarioSpec | None = None,
         hyper: HyperParams | None = None, plots: bool = True) -> list[Path]:
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        files = [write_trajectories_csv(result, outdir / "trajectories.csv")]
        metrics = outdir / "metrics.json"
        metrics.write_text(json.dumps(result_to_dict(result, spec, hyper), indent=1))
        files.append(metrics)
        if plots and spec is not None:
            files += write_plots(result, spec, outdir)
    except OSError as exc:
        raise OSError(f"could not write results to {outdir}: {exc}") from exc
    return files
