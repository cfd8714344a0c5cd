"""Named, reproducible experiments that write CSV tables, SVG plots and a manifest.

An experiment is split into independent cells (one per network size or
parameter value).  Cells run on a bounded thread pool whose size comes from
``CONSENSUS_LAB_THREADS``; their outputs are collected in cell order and
written by a single writer so that every file and the manifest are
byte-for-byte reproducible.  Wall-clock timings go to ``timings.json``, kept
apart from ``manifest.json`` for the same reason.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .control import FixedT, ScaledT, cost_scaling_study, COST_HEADER
from .dynamics import (
    STABILITY_FACTOR,
    Constant,
    Indicator,
    RationalDecay,
    lambda_max,
    random_state,
    simulate_linear,
)
from .errors import LabError, OutputError, ValidationError
from .io import write_csv
from .limits import (
    PROFILES,
    Alignment,
    IndicatorBand,
    get_profile,
    graph_limit_convergence,
    meanfield_convergence,
    solve_nonlocal_diffusion,
    subordination_residual,
    to_distribution,
)
from .network import Family, _parse_family, build_model, neighbour_count
from .plot import line_plot
from .spectral import GapReport, compute_spectrum, gap_report

__all__ = [
    "Experiment",
    "ExperimentConfig",
    "RunManifest",
    "validate",
    "run",
    "preset",
    "PRESETS",
    "load_config",
    "parse_influence",
    "worker_count",
]


class Experiment(str, enum.Enum):
    BUILD = "build"
    SPECTRUM = "spectrum"
    GAP_STUDY = "gap-study"
    SIMULATE = "simulate"
    CONTROL_COST = "control-cost"
    GRAPH_LIMIT = "graph-limit"
    MEAN_FIELD = "mean-field"
    SUBORDINATION = "subordination"


_NETWORK_EXPERIMENTS = {Experiment.BUILD, Experiment.SPECTRUM, Experiment.GAP_STUDY,
                        Experiment.SIMULATE, Experiment.CONTROL_COST, Experiment.GRAPH_LIMIT}


@dataclass
class ExperimentConfig:
    experiment: str = "spectrum"
    family: str = "path"
    n_list: tuple = (10,)
    r: Optional[float] = None
    alpha: Optional[float] = None
    c_alpha: float = 1.0
    scaled: bool = False
    T: float = 1.0
    dt: float = 0.01
    seed: Optional[int] = None
    output_dir: str = "out"
    profile: str = "sin"
    influence: str = "constant:1"
    x0: str = "profile"
    time_policy: str = "fixed"
    time_scale: float = 1.0 / 16.0
    m_ref: Optional[int] = None
    n_ref: Optional[int] = None
    test_polys: tuple = (1, 2, 3)
    label: str = ""
    plot: bool = True

    def params(self):
        fam = _parse_family(self.family)
        if fam is Family.DENSE_PERIODIC:
            return {"r": self.r}
        if fam is Family.FRACTIONAL:
            return {"alpha": self.alpha, "c_alpha": self.c_alpha}
        return {}

    def echo(self):
        """JSON-ready copy of the configuration (tuples become lists)."""
        d = dataclasses.asdict(self)
        d.pop("output_dir")  # where files go is not part of what they contain
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(d.items())}


@dataclass
class RunManifest:
    config: dict
    outputs: list  # [{"path": relative path, "sha256": hex}]
    version: dict
    timings: dict = field(default_factory=dict)

    def to_json(self):
        body = {"config": self.config, "outputs": self.outputs, "version": self.version}
        return json.dumps(body, sort_keys=True, indent=2) + "\n"


# -- configuration ----------------------------------------------------------

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name, value):
    if value is None:
        return None
    kind = _FIELD_TYPES[name]
    if isinstance(value, str):
        text = value.strip()
        if text.lower() in ("", "none") and "Optional" in kind:
            return None
    else:
        text = value
    try:
        if name in ("n_list", "test_polys"):
            if isinstance(text, str):
                text = [t for t in text.replace(",", " ").split() if t]
            return tuple(int(float(t)) for t in text)
        if kind in ("float", "Optional[float]"):
            return float(_fraction(text)) if isinstance(text, str) else float(text)
        if kind in ("int", "Optional[int]"):
            return int(text)
        if kind == "bool":
            if isinstance(text, str):
                if text.lower() in ("1", "true", "yes", "on"):
                    return True
                if text.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(text)
            return bool(text)
    except (TypeError, ValueError):
        raise ValidationError(f"cannot read {name} = {value!r}") from None
    return str(text)


def _fraction(text):
    if "/" in text:
        a, b = text.split("/", 1)
        return float(a) / float(b)
    return float(text)


def make_config(**values) -> ExperimentConfig:
    unknown = sorted(set(values) - set(_FIELD_TYPES))
    if unknown:
        raise ValidationError(f"unknown configuration keys: {', '.join(unknown)}")
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in values.items()})


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a ``key = value`` file (an optional ``[run]`` header is allowed)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise OutputError(f"cannot read config {path}: {exc}") from exc
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config {path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        for key, val in parser.items(section):
            values[key.replace("-", "_")] = val
    values.update({k: v for k, v in overrides.items() if v is not None})
    return make_config(**values)


def parse_influence(text):
    """``constant:v``, ``rational:beta`` or ``indicator:radius``."""
    kind, _, arg = str(text).partition(":")
    kind = kind.strip().lower()
    try:
        val = float(arg) if arg else 1.0
    except ValueError:
        raise ValidationError(f"bad influence parameter in {text!r}") from None
    if kind == "constant":
        return Constant(val)
    if kind in ("rational", "rational_decay", "rationaldecay"):
        return RationalDecay(val)
    if kind == "indicator":
        return Indicator(val)
    raise ValidationError(f"unknown influence function {text!r}")


def worker_count():
    raw = os.environ.get("CONSENSUS_LAB_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"CONSENSUS_LAB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError("CONSENSUS_LAB_THREADS must be >= 1")
    return n


# -- validation -------------------------------------------------------------

_MIN_N = {Family.PATH: 2, Family.GRID: 2, Family.DENSE_PERIODIC: 3, Family.FRACTIONAL: 2}


def validate(config: ExperimentConfig) -> list:
    """Every precondition violation of ``config``; empty when the run may start."""
    v = []
    try:
        exp = Experiment(config.experiment)
    except ValueError:
        return [f"unknown experiment {config.experiment!r}; choose from "
                + ", ".join(e.value for e in Experiment)]
    ns = list(config.n_list)
    if not ns:
        v.append("n_list is empty")
    elif any(b <= a for a, b in zip(ns, ns[1:])):
        v.append("n_list must be strictly ascending")
    if not (config.T > 0 and math.isfinite(config.T)):
        v.append("T must be positive")
    if not (config.dt > 0 and math.isfinite(config.dt)):
        v.append("dt must be positive")
    if config.profile not in PROFILES:
        v.append(f"unknown profile {config.profile!r}")
    if config.x0 not in ("profile", "random", "sign"):
        v.append(f"unknown x0 policy {config.x0!r}")
    if config.x0 == "random" and config.seed is None:
        v.append("random initial data needs a seed")
    if exp in (Experiment.MEAN_FIELD, Experiment.SUBORDINATION):
        try:
            parse_influence(config.influence)
        except LabError as exc:
            v.append(str(exc))
    if exp is Experiment.SUBORDINATION:
        if any(n < 32 for n in ns):
            v.append("subordination needs m_quad >= 32 cells")
        if any(p <= 0 for p in config.test_polys):
            v.append("test polynomial degrees must be positive")
    if exp is Experiment.MEAN_FIELD and config.n_ref is not None and ns \
            and config.n_ref < 8 * max(ns):
        v.append("n_ref must be >= 8 max(n_list)")
    if exp not in _NETWORK_EXPERIMENTS:
        return v

    try:
        fam = _parse_family(config.family)
    except LabError as exc:
        return v + [str(exc)]
    if any(n < _MIN_N[fam] for n in ns):
        v.append(f"{fam.value} needs n >= {_MIN_N[fam]}")
    if fam is Family.DENSE_PERIODIC:
        r = config.r
        if r is None:
            v.append("r is required for the dense periodic family")
        elif r > 0.5:
            v.append("r > 1/2")
        elif r < 0:
            v.append("r < 0")
        else:
            bad = [n for n in ns if neighbour_count(n, r) < 1]
            if bad:
                v.append(f"[r n] = 0 for n in {bad}")
        if config.scaled:
            v.append("the dense periodic family has no scaled version")
    if fam is Family.FRACTIONAL:
        if config.alpha is None or not 0 < config.alpha < 1:
            v.append("alpha must lie in (0, 1)")
        if not config.c_alpha > 0:
            v.append("c_alpha must be positive")
    if exp is Experiment.CONTROL_COST:
        if any(n > 64 for n in ns):
            v.append("control-cost sweeps are limited to n <= 64")
        if config.time_policy not in ("fixed", "scaled"):
            v.append("time_policy must be 'fixed' or 'scaled'")
    if exp is Experiment.GRAPH_LIMIT and fam not in (Family.DENSE_PERIODIC, Family.PATH):
        v.append(f"no one-dimensional graph limit for {fam.value}")
    if exp is Experiment.SIMULATE and not v:
        for n in ns:
            lim = STABILITY_FACTOR / lambda_max(_model(config, n))
            if config.dt > lim:
                v.append(f"dt = {config.dt:g} exceeds the stability bound for n = {n}; "
                         f"suggested dt <= {lim:.6g}")
    return v


# -- cells ------------------------------------------------------------------

def _model(config, n):
    return build_model(config.family, n, scaled=config.scaled, **config.params())


def _initial(config, n):
    if config.x0 == "random":
        return random_state(n, config.seed)
    if config.x0 == "sign":
        return np.sign(np.arange(1, n + 1) - n / 2.0)
    return get_profile(config.profile).cell_averages(n)


def _prefix(config):
    return f"{config.label}_" if config.label else ""


def _build_cell(config, n):
    model = _model(config, n)
    header = [f"c{j + 1}" for j in range(model.n_agents)]
    tag = _prefix(config) + model.tag
    return [("table", f"{tag}_laplacian.csv", header, model.laplacian),
            ("text", f"{tag}_descriptor.json", model.descriptor_json() + "\n")]


def _spectrum_cell(config, n):
    model = _model(config, n)
    spectrum = compute_spectrum(model)
    k = np.arange(1, spectrum.n + 1)
    tag = _prefix(config) + model.tag
    out = [("table", f"{tag}_eigenvalues.csv", ["k", "lambda"], list(zip(k, spectrum.eigenvalues))),
           ("table", f"{tag}_gaps.csv", ["k", "gap"], list(zip(k[:-1], spectrum.gaps)))]
    if config.plot:
        top = min(20, spectrum.n)
        out.append(("svg", f"{tag}_spectrum.svg",
                    [("lambda_k", k[:top], spectrum.eigenvalues[:top])],
                    dict(title=f"{tag}: first {top} eigenvalues", xlabel="k", ylabel="lambda",
                         markers=True)))
    return out


def _gap_cell(config, n):
    return gap_report(compute_spectrum(_model(config, n)))


def _simulate_cell(config, n):
    model = _model(config, n)
    traj = simulate_linear(model, _initial(config, n), config.T, config.dt)
    tag = _prefix(config) + model.tag
    header = ["time"] + [f"x_{i + 1}" for i in range(model.n_agents)]
    out = [("table", f"{tag}_trajectory.csv", header,
            np.column_stack((traj.times, traj.states)))]
    if model.family is not Family.GRID:
        field_ = to_distribution(traj)
        out.append(("table", f"{tag}_final_field.csv", ["s_mid", "value"],
                    list(zip(field_.midpoints, field_.values[-1]))))
        if config.plot:
            picks = sorted({0, traj.n_steps // 4, traj.n_steps // 2, traj.n_steps})
            series = [(f"t={traj.times[m]:.3g}", field_.midpoints, field_.values[m])
                      for m in picks]
            out.append(("svg", f"{tag}_snapshots.svg", series,
                        dict(title=f"{tag}: x^N(s, t)", xlabel="s", ylabel="x")))
    return out


def _control_cell(config, n):
    policy = FixedT(config.T) if config.time_policy == "fixed" else ScaledT(config.time_scale)
    return cost_scaling_study(config.family, [n], policy, scaled=config.scaled,
                              **config.params())[0]


def _subordination_cell(config, m):
    a = parse_influence(config.influence)
    fld = solve_nonlocal_diffusion(IndicatorBand(0.5), config.profile, m, config.T, config.dt,
                                   psi=Alignment(a))
    tab = subordination_residual(fld, a, config.test_polys, fld.dt)
    header = ["t"] + [f"residual_{p}" for p in tab.labels]
    return [("table", f"{_prefix(config)}subordination_m{m}.csv", header,
             np.column_stack((tab.times, tab.values)))]


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _outputs(config, workers, timings):
    exp = Experiment(config.experiment)
    ns = list(config.n_list)
    t0 = time.perf_counter()
    fam_name = _parse_family(config.family).value if exp in _NETWORK_EXPERIMENTS else ""
    if exp is Experiment.BUILD:
        outs = [o for cell in _map(lambda n: _build_cell(config, n), ns, workers) for o in cell]
    elif exp is Experiment.SPECTRUM:
        outs = [o for cell in _map(lambda n: _spectrum_cell(config, n), ns, workers) for o in cell]
    elif exp is Experiment.SIMULATE:
        outs = [o for cell in _map(lambda n: _simulate_cell(config, n), ns, workers) for o in cell]
    elif exp is Experiment.SUBORDINATION:
        outs = [o for cell in _map(lambda m: _subordination_cell(config, m), ns, workers)
                for o in cell]
    elif exp is Experiment.GAP_STUDY:
        reports = _map(lambda n: _gap_cell(config, n), ns, workers)
        name = f"{_prefix(config)}{fam_name}_gap_study"
        outs = [("table", f"{name}.csv", list(GapReport.header), [g.row() for g in reports])]
        if config.plot:
            outs.append(("svg", f"{name}.svg",
                         [("min gap", ns, [g.min_gap for g in reports]),
                          ("inverse sum", ns, [g.inverse_sum for g in reports])],
                         dict(title=name, xlabel="N", ylabel="value", logy=True, markers=True)))
    elif exp is Experiment.CONTROL_COST:
        rows = _map(lambda n: _control_cell(config, n), ns, workers)
        name = f"{_prefix(config)}{fam_name}_cost_{config.time_policy}"
        outs = [("table", f"{name}.csv", COST_HEADER, rows)]
        if config.plot:
            outs.append(("svg", f"{name}.svg", [("cost proxy", ns, [10.0 ** r[2] for r in rows])],
                         dict(title=name, xlabel="N", ylabel="cost proxy", logy=True,
                              markers=True)))
    elif exp is Experiment.GRAPH_LIMIT:
        rows = graph_limit_convergence(config.family, ns, T=config.T, dt=config.dt,
                                       g=config.profile, m_ref=config.m_ref, **config.params())
        outs = [("table", f"{_prefix(config)}{fam_name}_graph_limit.csv", ["n", "distance"], rows)]
    else:  # mean field
        rows = meanfield_convergence(parse_influence(config.influence), config.profile, ns,
                                     T=config.T, dt=config.dt, n_ref=config.n_ref)
        outs = [("table", f"{_prefix(config)}mean_field.csv", ["n", "distance"], rows)]
    key = f"compute:{exp.value}{':' + config.label if config.label else ''}"
    timings[f"{key}#{sum(k.startswith(key + '#') for k in timings) + 1}"] = \
        time.perf_counter() - t0
    return outs


def _write(out_dir, item):
    kind, rel = item[0], item[1]
    path = os.path.join(out_dir, rel)
    if kind == "table":
        write_csv(path, item[2], item[3])
    elif kind == "svg":
        line_plot(item[2], path, **item[3])
    else:
        try:
            with open(path, "w") as fh:
                fh.write(item[2])
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc}") from exc
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    return {"path": rel, "sha256": digest}


def _prepare_dir(out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise OutputError(f"output directory {out_dir} is not writable")


def _version():
    import scipy

    return {"consensus_lab": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _finish(out_dir, configs_echo, outputs, timings):
    manifest = RunManifest(configs_echo, outputs, _version(), timings)
    try:
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            fh.write(manifest.to_json())
        with open(os.path.join(out_dir, "timings.json"), "w") as fh:
            json.dump({k: round(v, 6) for k, v in timings.items()}, fh, sort_keys=True, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise OutputError(f"cannot write manifest in {out_dir}: {exc}") from exc
    return manifest


def run(config: ExperimentConfig) -> RunManifest:
    """Validate, compute and write one experiment; returns its manifest."""
    problems = validate(config)
    if problems:
        raise ValidationError("; ".join(problems))
    _prepare_dir(config.output_dir)
    timings = {}
    outs = _outputs(config, worker_count(), timings)
    t0 = time.perf_counter()
    written = [_write(config.output_dir, o) for o in outs]
    timings["write"] = time.perf_counter() - t0
    return _finish(config.output_dir, config.echo(), written, timings)


# -- presets ----------------------------------------------------------------

def _preset_configs(name, out):
    c = dict(output_dir=out, plot=True)
    if name == "fig4":
        # path network, N = 50, T = 0.2, consensus and PDE scaling
        return [make_config(experiment="simulate", family="path", n_list=(50,), T=0.2, dt=0.002,
                            profile="cos", label="fig4_consensus", **c),
                make_config(experiment="simulate", family="path", n_list=(50,), T=0.2,
                            dt=1.6e-4, profile="cos", scaled=True, label="fig4_pde", **c)]
    if name == "fig5":
        return [make_config(experiment="spectrum", family="path", n_list=(100,),
                            label="fig5", **c),
                make_config(experiment="spectrum", family="path", n_list=(100,), scaled=True,
                            label="fig5", **c)]
    if name == "fig7":
        return [make_config(experiment="spectrum", family="dense_periodic", r=0.25,
                            n_list=(7, 40), label="fig7", **c),
                make_config(experiment="spectrum", family="path", n_list=(7, 40),
                            label="fig7", **c)]
    if name == "fig8":
        return [make_config(experiment="spectrum", family="dense_periodic", r=r, n_list=(45,),
                            label="fig8", **c) for r in (0.1, 0.2, 0.3, 0.4, 0.5)]
    if name == "fig9":
        return [make_config(experiment="spectrum", family="fractional", alpha=a, scaled=True,
                            n_list=(64, 128), label="fig9", **c)
                for a in (0.25, 0.5, 0.75)]
    if name == "fig10":
        return [make_config(experiment="gap-study", family="fractional", alpha=a, scaled=True,
                            n_list=(16, 32, 64, 128, 256), label=f"fig10_alpha{a:g}", **c)
                for a in (0.25, 0.5, 0.75)]
    if name == "fig11":
        return [make_config(experiment="gap-study", family="fractional", alpha=0.75,
                            n_list=(16, 32, 64, 128, 256), label="fig11", **c)]
    if name == "fixed-time":
        # control cost of the path family acting on one end agent, T = 1
        return [make_config(experiment="control-cost", family="path", n_list=(4, 6, 8, 10, 12),
                            T=1.0, time_policy="fixed", label="fixed_time", **c)]
    if name == "scaled-time":
        # same, with the diffusive horizon T = N^2 / 16
        return [make_config(experiment="control-cost", family="path", n_list=(4, 8, 12),
                            time_policy="scaled", time_scale=1.0 / 16.0, label="scaled_time", **c)]
    raise ValidationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


PRESETS = ("fig4", "fig5", "fig7", "fig8", "fig9", "fig10", "fig11", "fixed-time", "scaled-time")


def preset(name: str, output_dir: str) -> RunManifest:
    """Run every configuration of a figure preset into one directory and manifest."""
    configs = _preset_configs(name, output_dir)
    for cfg in configs:
        problems = validate(cfg)
        if problems:
            raise ValidationError("; ".join(problems))
    _prepare_dir(output_dir)
    timings, written = {}, []
    workers = worker_count()
    for cfg in configs:
        outs = _outputs(cfg, workers, timings)
        written += [_write(output_dir, o) for o in outs]
    echo = {"preset": name, "runs": [cfg.echo() for cfg in configs]}
    return _finish(output_dir, echo, written, timings)
