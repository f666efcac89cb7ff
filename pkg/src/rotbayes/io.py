"""Configuration files, run records, replay pools and result tables.

Configs are YAML mappings whose keys mirror ``CampaignConfig`` fields. Run
records are line oriented: ``# key=value`` header lines followed by one
``s,basis,outcome`` line per photon. Everything tabular is CSV with floats
written by ``repr`` so that reading back is lossless.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .calibration import load_si_table
from .design import PARAM_NAMES, WeightMatrix
from .exceptions import ConfigError, PoolExhaustedError, RotbayesError
from .harness import CampaignConfig, CampaignResult
from .model import S_VALUES, Basis, ControlSetting, ExperimentRecord, ParameterPoint, RunRecord

_INT_FIELDS = ("seed", "M", "n_p", "N_max", "K_max", "cluster_width", "cluster_min_n",
               "bootstrap_resamples", "workers")
_FLOAT_FIELDS = ("confidence", "shrinkage", "resample_threshold")
_KNOWN = {"G", "true_points", "s_values", "J", "bound_visibilities", *_INT_FIELDS, *_FLOAT_FIELDS}


class RecordFormatError(RotbayesError, ValueError):
    pass


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def parse_weight_matrix(spec, n_controls: int = 4) -> WeightMatrix:
    """G from a selector string (``"theta"``, ``"theta+V4"``, ``"all"``), a list
    of names, a list of diagonal numbers, or a mapping name -> weight."""
    names = PARAM_NAMES[: n_controls + 1]
    if isinstance(spec, str):
        parts = [t.strip() for t in spec.replace("+", ",").split(",") if t.strip()]
        return WeightMatrix.select(*parts, n_controls=n_controls)
    if isinstance(spec, dict):
        diag = [0.0] * (n_controls + 1)
        for k, v in spec.items():
            if k not in names:
                raise ValueError(f"unknown parameter {k!r}; expected one of {names}")
            diag[names.index(k)] = float(v)
        return WeightMatrix(tuple(diag))
    if isinstance(spec, (list, tuple)):
        if all(isinstance(v, str) for v in spec):
            return WeightMatrix.select(*spec, n_controls=n_controls)
        if len(spec) != n_controls + 1:
            raise ValueError(f"need {n_controls + 1} diagonal entries, got {len(spec)}")
        return WeightMatrix(tuple(float(v) for v in spec))
    raise ValueError(f"cannot interpret {spec!r} as a weight matrix")


def _table_points(rows=None, visibilities="table"):
    points, mean = load_si_table()
    idx = range(1, len(points) + 1) if rows is None else rows
    out = []
    for r in idx:
        if not isinstance(r, int) or not 1 <= r <= len(points):
            raise ValueError(f"table row {r!r} outside 1..{len(points)}")
        p = points[r - 1]
        if visibilities == "mean":
            p = ParameterPoint(p.theta, mean)
        elif visibilities != "table":
            raise ValueError(f"visibilities must be 'table' or 'mean', got {visibilities!r}")
        out.append(p)
    return out


def parse_true_points(spec, J: int | None = None):
    """Truth values: ``"si_table"``, ``{source: si_table, rows: [...], visibilities:
    table|mean}``, or an explicit list of ``[theta, V1, ...]`` / ``{theta, visibilities}``."""
    if spec == "si_table":
        pts = _table_points()
        return pts if J is None else pts[:J]
    if isinstance(spec, dict):
        extra = set(spec) - {"source", "rows", "visibilities"}
        if extra or spec.get("source", "si_table") != "si_table":
            raise ValueError(f"unsupported true_points mapping {spec!r}")
        pts = _table_points(spec.get("rows"), spec.get("visibilities", "table"))
        return pts if J is None or "rows" in spec else pts[:J]
    if isinstance(spec, list):
        out = []
        for item in spec:
            if isinstance(item, dict):
                out.append(ParameterPoint(item["theta"], tuple(item["visibilities"])))
            else:
                out.append(ParameterPoint.from_array([float(v) for v in item]))
        return out
    raise ValueError(f"cannot interpret {spec!r} as true points")


def config_from_dict(raw) -> CampaignConfig:
    """Validated CampaignConfig; every problem is reported with its field name."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = sorted(set(raw) - _KNOWN)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if "G" not in raw:
        raise ConfigError("G: required")
    errors = []
    kw = {}

    def field(name, conv):
        if name not in raw:
            return
        val = raw[name]
        try:
            if isinstance(val, bool) or val is None:
                raise ValueError(f"bad value {val!r}")
            if conv is int and isinstance(val, float) and not val.is_integer():
                raise ValueError(f"expected an integer, got {val!r}")
            kw[name] = conv(val)
        except (TypeError, ValueError) as exc:
            errors.append(f"{name}: {exc}")

    for name in _INT_FIELDS:
        field(name, int)
    for name in _FLOAT_FIELDS:
        field(name, float)
    field("s_values", lambda v: tuple(int(s) for s in v))
    m = len(kw.get("s_values", S_VALUES))
    field("G", lambda v: parse_weight_matrix(v, m))
    J = raw.get("J")
    if J is not None and (isinstance(J, bool) or not isinstance(J, int) or J < 1):
        errors.append(f"J: expected a positive integer, got {J!r}")
        J = None
    field("true_points", lambda v: tuple(parse_true_points(v, J)))
    if "true_points" not in raw and not errors:
        try:
            kw["true_points"] = tuple(parse_true_points("si_table", J))
        except ValueError as exc:
            errors.append(f"true_points: {exc}")
    bv = raw.get("bound_visibilities")
    if bv == "si_mean":
        kw["bound_visibilities"] = load_si_table()[1]
    elif bv is not None:
        field("bound_visibilities", lambda v: tuple(float(x) for x in v))
    if errors:
        raise ConfigError("; ".join(errors))
    if J is not None and len(kw["true_points"]) != J:
        raise ConfigError(f"J: {J} does not match the {len(kw['true_points'])} true points given")
    try:
        return CampaignConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path) -> CampaignConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such config file")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from None
    try:
        return config_from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_to_dict(config: CampaignConfig) -> dict:
    """Plain mapping that ``config_from_dict`` turns back into an equal config."""
    out = {}
    for f in dataclasses.fields(config):
        val = getattr(config, f.name)
        if f.name == "G":
            val = list(val.diag)
        elif f.name == "true_points":
            val = [[p.theta, *p.visibilities] for p in val]
        elif isinstance(val, tuple):
            val = list(val)
        if val is not None:
            out[f.name] = val
    return out


def config_hash(config: CampaignConfig) -> str:
    blob = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_config(config: CampaignConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(config), sort_keys=True))


# --------------------------------------------------------------------------
# run records
# --------------------------------------------------------------------------


def _format_meta(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(_format_meta(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_run_record(run: RunRecord, sink, s_values: Sequence[int] = S_VALUES) -> None:
    """Header lines ``# key=value`` then ``s,basis,outcome`` per record."""
    lines = [f"# s_values={_format_meta(tuple(s_values))}"]
    for key, val in run.metadata.items():
        lines.append(f"# {key}={_format_meta(val)}")
    if run.true_point is not None:
        lines.append(f"# truth={_format_meta((run.true_point.theta, *run.true_point.visibilities))}")
    lines += [f"{r.setting.s},{r.setting.basis.name},{r.outcome}" for r in run.records]
    text = "\n".join(lines) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        Path(sink).write_text(text)


def _meta_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_run_record(source) -> RunRecord:
    text = source.read() if hasattr(source, "read") else Path(source).read_text()
    name = getattr(source, "name", str(source))
    meta = {}
    s_values = S_VALUES
    truth = None
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            if line.startswith("#"):
                key, eq, val = line[1:].strip().partition("=")
                if not eq:
                    raise ValueError("header lines must read '# key=value'")
                if key == "s_values":
                    s_values = tuple(int(v) for v in val.split(","))
                elif key == "truth":
                    truth = ParameterPoint.from_array([float(v) for v in val.split(",")])
                else:
                    meta[key] = _meta_value(val)
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"expected 's,basis,outcome', got {line!r}")
            setting = ControlSetting.from_s(int(parts[0]), Basis.parse(parts[1]), s_values)
            records.append(ExperimentRecord(setting, int(parts[2])))
        except ValueError as exc:
            raise RecordFormatError(f"{name}:{lineno}: {exc}") from None
    return RunRecord(records, truth, meta)


# --------------------------------------------------------------------------
# replay pools
# --------------------------------------------------------------------------


class ReplayPool:
    """Outcome queues keyed by (angle_id, s, basis), consumed strictly in order.

    A pool is meant for one consumer; ``partition`` splits a shared pool into
    one pool per run index before a campaign starts.
    """

    def __init__(self, queues=None, run_ids=None):
        self._queues = {k: list(v) for k, v in (queues or {}).items()}
        # optional run index per entry, used by partition
        self._run_ids = {k: list(v) for k, v in (run_ids or {}).items()}
        self._cursor = defaultdict(int)

    @staticmethod
    def _key(angle_id, setting_or_s, basis=None):
        if basis is None:
            return int(angle_id), int(setting_or_s.s), Basis(setting_or_s.basis)
        return int(angle_id), int(setting_or_s), Basis.parse(basis)

    def add(self, angle_id, s, basis, outcome, run_id=None):
        if outcome not in (-1, 1):
            raise ValueError(f"outcome must be +1 or -1, got {outcome}")
        key = self._key(angle_id, s, basis)
        self._queues.setdefault(key, []).append(int(outcome))
        if run_id is not None:
            self._run_ids.setdefault(key, []).append(int(run_id))

    def next_outcome(self, angle_id, setting) -> int:
        key = self._key(angle_id, setting)
        queue = self._queues.get(key, ())
        pos = self._cursor[key]
        if pos >= len(queue):
            raise PoolExhaustedError(
                f"no outcomes left for angle {key[0]}, s={key[1]}, {key[2].name}"
            )
        self._cursor[key] = pos + 1
        return queue[pos]

    def remaining(self, angle_id, s, basis) -> int:
        key = self._key(angle_id, s, basis)
        return len(self._queues.get(key, ())) - self._cursor[key]

    def keys(self):
        return sorted(self._queues)

    def partition(self, M: int) -> dict[int, "ReplayPool"]:
        """One pool per run index 0..M-1.

        Entries carrying a run index go to that run; otherwise each queue is
        split into M contiguous blocks of near-equal length.
        """
        parts = {r: ReplayPool() for r in range(M)}
        for key, queue in self._queues.items():
            ids = self._run_ids.get(key)
            if ids is not None and len(ids) == len(queue):
                for rid, out in zip(ids, queue):
                    if rid in parts:
                        parts[rid]._queues.setdefault(key, []).append(out)
            else:
                for rid, block in enumerate(np.array_split(np.asarray(queue, dtype=int), M)):
                    parts[rid]._queues[key] = [int(v) for v in block]
        return parts

    @classmethod
    def from_runs(cls, runs) -> "ReplayPool":
        """Pool holding the outcomes of RunResults, tagged with their run index."""
        pool = cls()
        for r in runs:
            for rec in r.record.records:
                pool.add(r.angle_id, rec.setting.s, rec.setting.basis, rec.outcome, r.run_id)
        return pool

    @classmethod
    def from_csv(cls, path) -> "ReplayPool":
        """CSV with header angle_id,s,basis,outcome and an optional run_id column."""
        pool = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"angle_id", "s", "basis", "outcome"} - set(reader.fieldnames or ())
            if missing:
                raise RecordFormatError(f"{path}: missing column(s) {sorted(missing)}")
            has_run = "run_id" in reader.fieldnames
            for lineno, row in enumerate(reader, start=2):
                try:
                    pool.add(int(row["angle_id"]), int(row["s"]), row["basis"], int(row["outcome"]),
                             int(row["run_id"]) if has_run else None)
                except (TypeError, ValueError) as exc:
                    raise RecordFormatError(f"{path}:{lineno}: {exc}") from None
        return pool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            tagged = all(len(self._run_ids.get(k, ())) == len(q) for k, q in self._queues.items())
            wr.writerow(["angle_id", "s", "basis", "outcome"] + (["run_id"] if tagged else []))
            for key in self.keys():
                ids = self._run_ids.get(key) if tagged else None
                for j, out in enumerate(self._queues[key]):
                    row = [key[0], key[1], key[2].name, out]
                    wr.writerow(row + ([ids[j]] if tagged else []))


# --------------------------------------------------------------------------
# result tables
# --------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if np.isnan(v) else repr(v)


def write_curve_csv(result: CampaignResult, path) -> None:
    c = result.curve
    flagged = len(result.failures)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["n_center", "median", "ci_low", "ci_high", "count", "flagged"])
        for row in zip(c.n_center, c.median, c.ci_low, c.ci_high, c.count):
            wr.writerow([_fmt(v) for v in row] + [flagged])


def write_usage_csv(result: CampaignResult, path) -> None:
    s_values = result.config.s_values
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["n_center"] + [f"share_s{s}" for s in s_values])
        for n, shares in zip(result.curve.n_center, result.usage):
            wr.writerow([_fmt(n)] + [_fmt(v) for v in shares])


def read_csv_table(path) -> dict[str, np.ndarray]:
    """Columns of a numeric CSV as float arrays (empty cells become NaN)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) if v else np.nan for v in r] for r in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {h: data[:, j] for j, h in enumerate(header)}


def write_manifest(path, command: str, config: CampaignConfig | None, seed, extra=None) -> None:
    from . import __version__
    from ._accel import backend_name

    manifest = {
        "command": command,
        "version": __version__,
        "backend": backend_name(),
        "seed": seed,
        "config_sha256": None if config is None else config_hash(config),
        "config": None if config is None else config_to_dict(config),
    }
    manifest.update(extra or {})
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
