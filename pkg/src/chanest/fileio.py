"""File formats: scenario container, estimate-result tables, flat configs.

Scenario files are self-describing binary: an 8-byte magic, a length-
prefixed JSON header (config, seeds, ground truth, array directory) and a
raw little-endian complex128 payload -- interleaved re/im 64-bit floats --
so the generate and estimate stages can run as separate processes or
machines.  Estimate results and sweep manifests are flat ``key = value``
structured text.
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct

import numpy as np

from .model import PathParams, Scenario, ScenarioConfig
from .optimizer import EstimateResult

SCENARIO_MAGIC = b"CHSCEN1\n"


class FileFormatError(ValueError):
    """Input bytes are not a valid scenario container."""


# -- scenario container ----------------------------------------------------


def _params_to_row(p: PathParams):
    return [p.b.real, p.b.imag, p.omega1, p.omega2, p.phi, p.theta]


def _row_to_params(row):
    return PathParams(
        b=complex(row[0], row[1]), omega1=row[2], omega2=row[3],
        phi=row[4], theta=row[5],
    )


def scenario_to_bytes(scenario: Scenario) -> bytes:
    cfg = scenario.config
    arrays = [("received", scenario.received)]
    arrays += [(f"pilots{k}", scenario.pilots[k]) for k in range(cfg.K)]
    directory = []
    offset = 0
    payload = io.BytesIO()
    for name, arr in arrays:
        data = np.ascontiguousarray(arr, dtype="<c16").tobytes()
        directory.append(
            {"name": name, "shape": list(arr.shape), "dtype": "c16le",
             "offset": offset, "nbytes": len(data)}
        )
        payload.write(data)
        offset += len(data)
    header = {
        "config": config_to_dict(cfg),
        "noise_seed": scenario.noise_seed,
        "channels": [
            [_params_to_row(p) for p in paths] for paths in scenario.channels
        ],
        "arrays": directory,
    }
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    return SCENARIO_MAGIC + struct.pack("<I", len(hdr)) + hdr + payload.getvalue()


def scenario_from_bytes(blob: bytes) -> Scenario:
    if blob[:8] != SCENARIO_MAGIC:
        raise FileFormatError("bad magic; not a scenario file")
    (hdr_len,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12 : 12 + hdr_len].decode("utf-8"))
    base = 12 + hdr_len
    cfg = config_from_dict(header["config"])
    arrays = {}
    for entry in header["arrays"]:
        start = base + entry["offset"]
        arr = np.frombuffer(
            blob[start : start + entry["nbytes"]], dtype="<c16"
        ).reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(complex)
    channels = [
        [_row_to_params(r) for r in rows] for rows in header["channels"]
    ]
    return Scenario(
        config=cfg,
        channels=channels,
        pilots=[arrays[f"pilots{k}"] for k in range(cfg.K)],
        received=arrays["received"],
        noise_seed=header["noise_seed"],
    )


def save_scenario(scenario: Scenario, path):
    with open(path, "wb") as f:
        f.write(scenario_to_bytes(scenario))


def load_scenario(path) -> Scenario:
    with open(path, "rb") as f:
        return scenario_from_bytes(f.read())


def config_to_dict(cfg: ScenarioConfig):
    d = dataclasses.asdict(cfg)
    d["L"] = list(cfg.L)
    d["tx_powers"] = list(cfg.tx_powers)
    return d


def config_from_dict(d):
    d = dict(d)
    d["L"] = tuple(d["L"])
    d["tx_powers"] = tuple(d["tx_powers"])
    return ScenarioConfig(**d)


# -- estimate result tables --------------------------------------------------

_RESULT_COLUMNS = "abs_b angle_b omega1 omega2 phi theta"


def result_to_text(result: EstimateResult) -> str:
    lines = ["# chanest estimate result"]
    lines.append(f"users = {len(result.users)}")
    lines.append(f"L_est = {', '.join(str(v) for v in result.L_est)}")
    lines.append(f"objective = {result.objective!r}")
    for key in sorted(result.counters):
        lines.append(f"counter_{key} = {result.counters[key]}")
    for k, paths in enumerate(result.users):
        lines.append(f"[user {k + 1}]")
        lines.append(f"# {_RESULT_COLUMNS}")
        for p in paths:
            vals = [abs(p.b), np.angle(p.b), p.omega1, p.omega2, p.phi, p.theta]
            lines.append(" ".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def result_from_text(text: str) -> EstimateResult:
    users, L_est, objective, counters = [], (), 0.0, {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[user"):
            current = []
            users.append(current)
            continue
        if "=" in line and current is None:
            key, _, val = (s.strip() for s in line.partition("="))
            if key == "L_est":
                L_est = tuple(int(v) for v in val.split(","))
            elif key == "objective":
                objective = float(val)
            elif key.startswith("counter_"):
                counters[key[len("counter_"):]] = int(val)
            continue
        row = [float(v) for v in line.split()]
        current.append(
            PathParams(
                b=row[0] * np.exp(1j * row[1]), omega1=row[2], omega2=row[3],
                phi=row[4], theta=row[5],
            )
        )
    return EstimateResult(
        users=users, L_est=L_est, objective=objective, counters=counters
    )


def save_result(result: EstimateResult, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(result_to_text(result))


def load_result(path) -> EstimateResult:
    with open(path, encoding="utf-8") as f:
        return result_from_text(f.read())


# -- flat key = value documents ----------------------------------------------


def _format_value(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        if len(v) == 1:
            return f"{_format_value(v[0])},"
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_scalar(s):
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def render_keyvalues(d, title=None) -> str:
    lines = [f"# {title}"] if title else []
    for key, v in d.items():
        lines.append(f"{key} = {_format_value(v)}")
    return "\n".join(lines) + "\n"


def parse_keyvalues(text) -> dict:
    """Flat ``key = value`` text; '#' comments, comma lists, '' -> None."""
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FileFormatError(f"expected 'key = value', got {line!r}")
        key, _, val = (s.strip() for s in line.partition("="))
        if val == "":
            out[key] = None
        elif "," in val:
            # a trailing comma marks a single-element list ("L = 3,")
            parts = [v.strip() for v in val.split(",")]
            if parts[-1] == "":
                parts.pop()
            if not parts or any(p == "" for p in parts):
                raise FileFormatError(f"malformed list in {line!r}")
            out[key] = [_parse_scalar(v) for v in parts]
        else:
            out[key] = _parse_scalar(val)
    return out
