"""
QSDA: Data Files
Long-format CSV tables (pandas) with a schema comment line, and JSON
sidecars holding scalar summaries. Infinite times are written as null with
an `e_t_infinite` flag.
"""

import json
import math
import sys
import os
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import SCHEMAS, VERSION
from agents.sprt_model import SprtModel
from engine.decision_profile import DecisionProfile, HypothesisProfile
from utils.errors import ProfileError

PROFILE_COLUMNS = ["t", "p0_h0", "p1_h0", "p0_h1", "p1_h1"]


# ═══════════════════════════════════════════════════════════════════════════════
# GENERIC CSV / JSON
# ═══════════════════════════════════════════════════════════════════════════════


def schema_header(kind: str, manifest_name: str | None = None) -> str:
    line = f"# schema: {SCHEMAS[kind]}"
    if manifest_name:
        line += f" manifest: {manifest_name}"
    return line


def frame_to_csv(frame: pd.DataFrame, kind: str, manifest_name: str | None = None) -> str:
    """CSV text with the schema comment line first."""
    body = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    return schema_header(kind, manifest_name) + "\n" + body


def write_csv(frame: pd.DataFrame, path, kind: str, manifest_name: str | None = None) -> Path:
    path = Path(path)
    path.write_text(frame_to_csv(frame, kind, manifest_name), encoding="utf-8")
    return path


def read_csv(path) -> tuple[pd.DataFrame, str | None]:
    """Load a data file; returns the frame and its schema tag (None if absent)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
    schema = None
    if first.startswith("# schema:"):
        schema = first.split()[2]
    frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    return frame, schema


def jsonable(value):
    """Plain JSON types; non-finite floats become None."""
    if is_dataclass(value) and not isinstance(value, type):
        return jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps(payload) -> str:
    return json.dumps(jsonable(payload), indent=2, sort_keys=False)


def write_json(payload, path) -> Path:
    path = Path(path)
    path.write_text(dumps(payload) + "\n", encoding="utf-8")
    return path


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def time_fields(e_t: float, prefix: str = "e_t") -> dict:
    return {prefix: e_t if math.isfinite(e_t) else None, f"{prefix}_infinite": math.isinf(e_t)}


# ═══════════════════════════════════════════════════════════════════════════════
# DECISION PROFILES
# ═══════════════════════════════════════════════════════════════════════════════


def profile_frame(profile: DecisionProfile) -> pd.DataFrame:
    return pd.DataFrame({
        "t": np.arange(1, profile.t_max + 1),
        "p0_h0": profile.under_h0.p_say0,
        "p1_h0": profile.under_h0.p_say1,
        "p0_h1": profile.under_h1.p_say0,
        "p1_h1": profile.under_h1.p_say1,
    })


def profile_summary(profile: DecisionProfile) -> dict:
    summary = {"schema": SCHEMAS["profile"], "version": VERSION, "t_max": profile.t_max}
    for name, h in (("h0", profile.under_h0), ("h1", profile.under_h1)):
        summary[f"p_nd_{name}"] = h.p_nd
        summary[f"tail_mass_{name}"] = h.tail_mass
    meta = dict(profile.meta)
    if isinstance(meta.get("model"), SprtModel):
        meta["model"] = asdict(meta["model"])
    summary["meta"] = meta
    return summary


def save_profile(profile: DecisionProfile, path, manifest_name: str | None = None,
                 summary: dict | None = None) -> list[Path]:
    """Write the profile CSV and its sidecar (profile_summary unless given); returns both paths."""
    csv_path = write_csv(profile_frame(profile), path, "profile", manifest_name)
    json_path = write_json(summary if summary is not None else profile_summary(profile), sidecar_path(path))
    return [csv_path, json_path]


def load_profile(path) -> DecisionProfile:
    """
    Read a profile CSV. p_nd comes from the sidecar when present; otherwise
    the mass missing after T_max is folded into p_nd.
    """
    frame, schema = read_csv(path)
    if schema is not None and schema != SCHEMAS["profile"]:
        raise ProfileError(f"{path} holds schema {schema}, expected {SCHEMAS['profile']}")
    missing = [c for c in PROFILE_COLUMNS if c not in frame.columns]
    if missing:
        raise ProfileError(f"{path} is missing columns {missing}")
    frame = frame.sort_values("t")
    if not np.array_equal(frame["t"].to_numpy(), np.arange(1, len(frame) + 1)):
        raise ProfileError(f"{path}: t must run 1..T_max without gaps")

    summary = {}
    side = sidecar_path(path)
    if side.exists():
        summary = json.loads(side.read_text(encoding="utf-8"))
        if summary.get("t_max", len(frame)) != len(frame):
            raise ProfileError(f"{side}: t_max={summary['t_max']} but {path} has {len(frame)} rows")

    branches = []
    for name in ("h0", "h1"):
        p0 = frame[f"p0_{name}"].to_numpy(dtype=float)
        p1 = frame[f"p1_{name}"].to_numpy(dtype=float)
        if f"p_nd_{name}" in summary:
            branches.append(HypothesisProfile(p0, p1, summary[f"p_nd_{name}"],
                                              summary.get(f"tail_mass_{name}") or 0.0))
        else:
            branches.append(HypothesisProfile.from_truncated(p0, p1))
    meta = {"source": "file", "path": str(path)}
    return DecisionProfile(branches[0], branches[1], meta=meta)


# ═══════════════════════════════════════════════════════════════════════════════
# GROUP & EMPIRICAL OUTCOMES
# ═══════════════════════════════════════════════════════════════════════════════


def group_frame(outcome) -> pd.DataFrame:
    return pd.DataFrame({
        "t": np.arange(1, outcome.t_max + 1),
        "p0_group": outcome.p_say0,
        "p1_group": outcome.p_say1,
    })


def group_summary(outcome) -> dict:
    summary = {
        "schema": SCHEMAS["group"],
        "n": outcome.n,
        "q": outcome.q,
        "hypothesis": outcome.hypothesis,
        "p_c": outcome.p_c,
        "p_w": outcome.p_w,
        "p_nd": outcome.p_nd_group,
        "e_t_conditional": outcome.conditional_expected_T,
        "diagnostics": outcome.diagnostics,
    }
    summary.update(time_fields(outcome.expected_T))
    return summary


def empirical_frame(outcome) -> pd.DataFrame:
    return pd.DataFrame({
        "t": np.arange(1, outcome.counts_say0.size + 1),
        "count_say0": outcome.counts_say0,
        "count_say1": outcome.counts_say1,
        "freq_say0": outcome.freq_say0,
        "freq_say1": outcome.freq_say1,
        "se_say0": outcome.se_say0,
        "se_say1": outcome.se_say1,
    })


def empirical_summary(outcome) -> dict:
    return {
        "schema": SCHEMAS["empirical"],
        "n": outcome.n,
        "q": outcome.q,
        "hypothesis": outcome.hypothesis,
        "replicates": outcome.replicates,
        "count_nd": outcome.count_nd,
        "freq_nd": outcome.freq_nd,
        "p_c": outcome.p_c,
        "p_w": outcome.p_w,
        "mean_time": outcome.mean_time,
        "mean_time_se": outcome.mean_time_se,
    }
