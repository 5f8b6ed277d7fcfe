"""Experiment orchestration: configuration, Monte Carlo batches and outputs.

Configuration files are INI-style::

    [experiment]   scenario, algorithms, runs, instants, nodes, seed,
                   preconditioner, topology, radius, batch_size, workers, output
    [scenario]     M, sigma_x2, sigma_n2 (parameter) or
                   n_basis, n_freq, n_active, active_power, f_min, f_max,
                   sigma_n2 (spectrum)
    [params]       J, lam_f, eta, eta_policy, delta, mu, lam,
                   rls_neighborhood_data, metropolis_include_self
    [algorithm:NAME]  per-algorithm overrides of any [params] key

An algorithm entry ``name@kind`` pins the preconditioner of that entry;
plain CG entries use ``[experiment] preconditioner``, baselines always run
untransformed.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, scenarios, strategies
from . import topology as topo
from .adaptation import Diagnostics, InvalidEta
from .metrics import steady_state, to_db
from .preconditioning import KINDS as PRECONDITIONERS

log = logging.getLogger(__name__)

PRESETS = {"incremental": "incremental.ini", "diffusion": "diffusion.ini", "spectrum": "spectrum.ini"}
SCENARIOS = ("parameter", "spectrum")
TOPOLOGIES = ("auto", "ring", "geometric", "full")

_PARAM_TYPES = {f.name: f.type for f in dataclasses.fields(strategies.AlgorithmParams)}
_SCENARIO_KEYS = {
    "parameter": {"M": int, "sigma_x2": float, "sigma_n2": float},
    "spectrum": {
        "n_basis": int,
        "n_freq": int,
        "n_active": int,
        "active_power": float,
        "f_min": float,
        "f_max": float,
        "sigma_n2": float,
    },
}


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str = "parameter"
    algorithms: tuple = ("idmcg",)
    runs: int = 100
    instants: int = 1000
    nodes: int = 20
    seed: int = 0
    preconditioner: str = "none"
    topology: str = "auto"
    radius: float = 0.4
    scenario_params: dict = field(default_factory=dict)
    params: strategies.AlgorithmParams = field(default_factory=strategies.AlgorithmParams)
    overrides: dict = field(default_factory=dict)
    batch_size: int = 25
    workers: int = 1
    output: str | None = None

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.instants < 1 or self.nodes < 1:
            raise ConfigError("instants and nodes must be >= 1")
        if self.batch_size < 1 or self.workers < 1:
            raise ConfigError("batch_size and workers must be >= 1")
        if self.preconditioner not in PRECONDITIONERS:
            raise ConfigError(f"preconditioner must be one of {PRECONDITIONERS}, got {self.preconditioner!r}")
        if not self.algorithms:
            raise ConfigError("no algorithms selected")
        unknown = set(self.scenario_params) - set(_SCENARIO_KEYS[self.scenario])
        if unknown:
            raise ConfigError(f"unknown [scenario] keys for {self.scenario}: {sorted(unknown)}")
        for tag, name, params in self.entries():
            try:
                params.validate(name)
            except InvalidEta as exc:
                raise ConfigError(
                    f"{tag}: {exc}; the admissible band is lam_f - 0.5 <= eta <= lam_f "
                    f"(set eta_policy = record to run out-of-band values)"
                ) from exc
            except ValueError as exc:
                msg = str(exc)
                raise ConfigError(msg if msg.startswith(name) else f"{tag}: {msg}") from exc
        try:
            self.build_scenario()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def entries(self):
        """``(tag, algorithm, params)`` for every requested algorithm entry."""
        out = []
        for token in self.algorithms:
            name, _, kind = token.partition("@")
            if name not in strategies.ALGORITHMS:
                raise ConfigError(f"unknown algorithm {name!r}; expected one of {strategies.ALGORITHMS}")
            if kind and kind not in PRECONDITIONERS:
                raise ConfigError(f"{token}: unknown preconditioner {kind!r}")
            params = self.params
            for key in (name, token):
                if key in self.overrides:
                    params = dataclasses.replace(params, **self.overrides[key])
            if kind:
                pre = kind
            elif name in strategies.CG_ALGORITHMS:
                pre = self.preconditioner
            else:
                pre = "none"
            params = dataclasses.replace(params, preconditioner=pre)
            out.append((token.replace("@", "_"), name, params))
        tags = [t for t, _, _ in out]
        if len(set(tags)) != len(tags):
            raise ConfigError(f"duplicate algorithm entries: {tags}")
        return out

    def build_scenario(self):
        kw = dict(self.scenario_params)
        if self.scenario == "parameter":
            return scenarios.ParameterScenario(N=self.nodes, instants=self.instants, seed=self.seed, **kw)
        return scenarios.SpectrumScenario(N=self.nodes, instants=self.instants, seed=self.seed, **kw)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["algorithms"] = list(self.algorithms)
        d["scenario_params"] = dataclasses.asdict(self.build_scenario())
        d["scenario_params"].pop("seed", None)
        return _jsonable(d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _convert(key, raw, types, where):
    typ = types[key]
    if isinstance(typ, str):
        typ = {"int": int, "float": float, "str": str, "bool": bool}[typ]
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"[{where}] {key} = {raw!r}: expected {typ.__name__}") from exc


def _parse_params(section, where):
    out = {}
    for key, raw in section.items():
        if key not in _PARAM_TYPES:
            raise ConfigError(f"[{where}] unknown key {key!r}; known keys: {sorted(_PARAM_TYPES)}")
        out[key] = _convert(key, raw, _PARAM_TYPES, where)
    return out


_EXPERIMENT_TYPES = {
    "scenario": str,
    "runs": int,
    "instants": int,
    "nodes": int,
    "seed": int,
    "preconditioner": str,
    "topology": str,
    "radius": float,
    "batch_size": int,
    "workers": int,
    "output": str,
}


def parse_config(text, source="<string>"):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    cfg = {}
    if cp.has_section("experiment"):
        for key, raw in cp["experiment"].items():
            if key == "algorithms":
                cfg["algorithms"] = tuple(a.strip() for a in raw.replace("\n", ",").split(",") if a.strip())
            elif key in _EXPERIMENT_TYPES:
                cfg[key] = _convert(key, raw, _EXPERIMENT_TYPES, "experiment")
            else:
                raise ConfigError(f"[experiment] unknown key {key!r}")
    scenario = cfg.get("scenario", "parameter")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    if cp.has_section("scenario"):
        types = _SCENARIO_KEYS[scenario]
        sp = {}
        for key, raw in cp["scenario"].items():
            if key not in types:
                raise ConfigError(f"[scenario] unknown key {key!r} for {scenario}; known keys: {sorted(types)}")
            sp[key] = _convert(key, raw, types, "scenario")
        cfg["scenario_params"] = sp
    if cp.has_section("params"):
        cfg["params"] = strategies.AlgorithmParams(**_parse_params(cp["params"], "params"))
    overrides = {}
    for name in cp.sections():
        if name.startswith("algorithm:"):
            overrides[name.split(":", 1)[1].strip()] = _parse_params(cp[name], name)
        elif name not in ("experiment", "scenario", "params"):
            raise ConfigError(f"unknown section [{name}]")
    cfg["overrides"] = overrides
    return ExperimentConfig(**cfg).validate()


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def preset_text(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return resources.files("distcg.presets").joinpath(PRESETS[name]).read_text()


def load_preset(name):
    return parse_config(preset_text(name), f"preset:{name}")


# -- execution -------------------------------------------------------------------


def build_topologies(config):
    """Incremental and diffusion topologies for the configuration.

    ``auto`` uses a ring for incremental algorithms and a seeded random
    geometric graph for diffusion ones.  Anything else that is not a known
    kind is read as a 1-indexed edge-list path with natural cycle order.
    """
    N = config.nodes
    kind = config.topology
    if kind == "ring":
        t = topo.ring(N)
        return t, t
    if kind == "full":
        t = topo.fully_connected(N)
        return t, t
    if kind in ("geometric", "auto"):
        g, _ = topo.random_geometric(N, config.radius, scenarios.topology_rng(config.seed))
        if kind == "auto":
            return topo.ring(N), g
        return g.with_cycle(range(N)), g
    t = topo.load_edge_list(kind, N=N, cycle=range(N))
    if t.N != N:
        raise ConfigError(f"edge list {kind} has {t.N} nodes, config expects {N}")
    return t, t


def _chunks(runs, size):
    return [list(range(s, min(s + size, runs))) for s in range(0, runs, size)]


def _run_chunk(config, run_ids, topologies):
    scen = config.build_scenario()
    if config.scenario == "parameter":
        data = scenarios.gen_parameter_data(scen, run_ids)
    else:
        data = scenarios.gen_spectrum_data(scen, run_ids)
    inc_topo, diff_topo = topologies
    out = {}
    for tag, name, params in config.entries():
        t = inc_topo if name in strategies.INCREMENTAL else diff_topo
        res = strategies.run_algorithm(name, t, data, params)
        final = res.global_estimate if res.global_estimate is not None else res.final.mean(axis=1)
        out[tag] = (res.msd, res.mse, final, res.diagnostics)
    return out


@dataclass
class AlgorithmResult:
    tag: str
    algorithm: str
    params: strategies.AlgorithmParams
    msd: np.ndarray  # (runs, instants)
    mse: np.ndarray
    final: np.ndarray  # (runs, M): global or node-averaged final estimate
    diagnostics: Diagnostics

    @property
    def msd_curve(self):
        return self.msd.mean(axis=0)

    @property
    def mse_curve(self):
        return self.mse.mean(axis=0)

    def steady_msd_db(self):
        return float(to_db(steady_state(self.msd_curve)))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    results: dict
    w0: np.ndarray
    topologies: tuple
    elapsed: float = 0.0
    files: list = field(default_factory=list)


def simulate(config):
    """Run every configured algorithm over all Monte Carlo runs (no file output)."""
    config.validate()
    topologies = build_topologies(config)
    for t, needed in zip(topologies, (strategies.INCREMENTAL, strategies.DIFFUSION)):
        if any(n in needed for _, n, _ in config.entries()) and needed is strategies.INCREMENTAL:
            problems = topo.validate_cycle(t)
            if problems:
                raise ConfigError(f"incremental topology has an invalid cycle: {problems}")
    chunks = _chunks(config.runs, config.batch_size)
    start = time.perf_counter()
    if config.workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(_run_chunk, [config] * len(chunks), chunks, [topologies] * len(chunks)))
    else:
        parts = [_run_chunk(config, ids, topologies) for ids in chunks]

    results = {}
    for tag, name, params in config.entries():
        diag = Diagnostics(config.instants, config.nodes)
        for part in parts:
            diag.merge(part[tag][3])
        results[tag] = AlgorithmResult(
            tag,
            name,
            params,
            np.concatenate([p[tag][0] for p in parts]),
            np.concatenate([p[tag][1] for p in parts]),
            np.concatenate([p[tag][2] for p in parts]),
            diag,
        )
    w0 = config.build_scenario().true_weights()
    return ExperimentResult(config, results, w0, topologies, time.perf_counter() - start)


def _fmt(x):
    return repr(float(x))


def curve_csv(result):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["instant", "msd_linear", "msd_db", "mse_linear", "mse_db"])
    msd_c, mse_c = result.msd_curve, result.mse_curve
    msd_db, mse_db = to_db(msd_c), to_db(mse_c)
    for i in range(msd_c.shape[0]):
        wr.writerow([i + 1, _fmt(msd_c[i]), _fmt(msd_db[i]), _fmt(mse_c[i]), _fmt(mse_db[i])])
    return buf.getvalue()


def psd_csv(experiment):
    scen = experiment.config.build_scenario()
    grid = scen.grid()
    true_psd = scenarios.psd_from_weights(experiment.w0, grid, scen.f_min, scen.f_max)
    tags = list(experiment.results)
    est = {
        t: np.real(scenarios.psd_from_weights(r.final.mean(axis=0), grid, scen.f_min, scen.f_max))
        for t, r in experiment.results.items()
    }
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["frequency", "true_psd"] + [f"estimated_psd_{t}" for t in tags])
    for j, f in enumerate(grid):
        wr.writerow([_fmt(f), _fmt(true_psd[j])] + [_fmt(est[t][j]) for t in tags])
    return buf.getvalue()


def check_finite(experiment, outdir=None):
    bad = [
        tag
        for tag, r in experiment.results.items()
        if not (np.all(np.isfinite(r.msd)) and np.all(np.isfinite(r.mse)) and np.all(np.isfinite(r.final)))
    ]
    if not bad:
        return
    dump = {
        tag: {
            "first_nonfinite_instant": int(np.argmax(~np.isfinite(r.msd).all(axis=0))) + 1,
            "nonfinite_runs": np.flatnonzero(~np.isfinite(r.msd).all(axis=1)).tolist(),
            "diagnostics": r.diagnostics.totals(),
            "params": dataclasses.asdict(r.params),
        }
        for tag, r in experiment.results.items()
        if tag in bad
    }
    where = ""
    if outdir is not None:
        path = Path(outdir) / "nonfinite_dump.json"
        path.write_text(json.dumps(dump, indent=2))
        where = f" (dump written to {path})"
    raise NumericalError(f"non-finite values in {bad}{where}")


def metadata(experiment):
    cfg = experiment.config
    inc, diff = experiment.topologies
    return {
        "package": "distcg",
        "version": __version__,
        "config": cfg.to_dict(),
        "seeds": {
            "master": cfg.seed,
            "derivation": "numpy SeedSequence(master, spawn_key=...): (0,) scenario, (1, run) per run, (2,) topology",
        },
        "true_weights": _jsonable(experiment.w0),
        "topology": {
            "incremental_edges": [[k + 1, l + 1] for k, l in inc.edges()],
            "incremental_cycle": [k + 1 for k in inc.cycle] if inc.cycle is not None else None,
            "diffusion_edges": [[k + 1, l + 1] for k, l in diff.edges()],
        },
        "algorithms": {
            tag: {
                "algorithm": r.algorithm,
                "params": dataclasses.asdict(r.params),
                "steady_state_msd_db": r.steady_msd_db(),
                "steady_state_mse_db": float(to_db(steady_state(r.mse_curve))),
                "diagnostics": r.diagnostics.totals(),
                "curve_file": f"curves_{tag}.csv",
            }
            for tag, r in experiment.results.items()
        },
        "elapsed_seconds": experiment.elapsed,
    }


def write_outputs(experiment, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    check_finite(experiment, outdir)
    files = []
    for tag, r in experiment.results.items():
        path = outdir / f"curves_{tag}.csv"
        path.write_text(curve_csv(r))
        files.append(path)
    if experiment.config.scenario == "spectrum":
        path = outdir / "psd.csv"
        path.write_text(psd_csv(experiment))
        files.append(path)
    inc, diff = experiment.topologies
    topo.write_edge_list(diff, outdir / "topology.txt")
    path = outdir / "metadata.json"
    path.write_text(json.dumps(metadata(experiment), indent=2, sort_keys=True))
    files += [outdir / "topology.txt", path]
    experiment.files = files
    return files


def run_experiment(config, output=None):
    """Simulate and, if an output directory is configured, write the outputs."""
    experiment = simulate(config)
    outdir = output or config.output
    if outdir is not None:
        write_outputs(experiment, outdir)
    else:
        check_finite(experiment)
    for tag, r in experiment.results.items():
        log.info("%s: steady-state MSD %.2f dB", tag, r.steady_msd_db())
    return experiment

