"""On-disk formats: JSON-Lines datasets, JSON models, CSV reports and an SVG bar chart."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .choice_core import Dataset
from .embed_net import HiddenLayer, NetworkParams

DATASET_FORMAT = "pareto-choice/dataset"
MODEL_FORMAT = "pareto-choice/model"
VERSION = 1

LOG_COLUMNS = ["epoch", "loss_total", "loss_po", "loss_dom", "loss_mds", "loss_l2", "val_a_mean"]
EVAL_COLUMNS = ["problem", "split", "repetition", "n_tasks", "mean_a_mean", "std_a_mean", "tp", "fp", "tn", "fn"]
SUMMARY_COLUMNS = ["problem", "arm", "reps", "n_tasks", "mean_a_mean", "std_a_mean", "rep_a_means"]


class FormatError(ValueError):
    """Malformed or unsupported file content."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def _dumps(obj) -> str:
    # repr-based float formatting is the shortest round-trip representation
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def atomic_write(path: str | os.PathLike, data: str | bytes) -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# datasets


def dataset_to_jsonl(data: Dataset) -> str:
    header = {
        "format": DATASET_FORMAT,
        "version": VERSION,
        "problem": data.problem,
        "seed": data.seed,
        "m": data.m,
        "d": data.d,
    }
    lines = [_dumps(header)]
    for i in range(len(data)):
        lines.append(_dumps({
            "task_id": data.task_ids[i],
            "features": data.features[i].tolist(),
            "choice": data.choices[i].astype(int).tolist(),
        }))
    return "\n".join(lines) + "\n"


def fingerprint_text(text: str | bytes) -> str:
    raw = text.encode("utf-8") if isinstance(text, str) else text
    return hashlib.blake2b(raw, digest_size=8).hexdigest()


def dataset_fingerprint(data: Dataset) -> str:
    """64-bit hash of the canonical JSON-Lines serialization."""
    return fingerprint_text(dataset_to_jsonl(data))


def save_dataset(data: Dataset, path) -> str:
    text = dataset_to_jsonl(data)
    atomic_write(path, text)
    return fingerprint_text(text)


def parse_dataset(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty dataset file", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"header is not valid JSON ({exc.msg})", 1) from None
    if not isinstance(header, dict) or header.get("format") != DATASET_FORMAT:
        raise FormatError(f"not a {DATASET_FORMAT} file", 1)
    if header.get("version") != VERSION:
        raise FormatError(f"unsupported dataset version {header.get('version')!r}", 1)
    m, d = header.get("m"), header.get("d")
    feats, choices, ids = [], [], []
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            x = np.asarray(rec["features"], dtype=np.float64)
            c = np.asarray(rec["choice"])
            tid = str(rec["task_id"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed task record ({exc})", no) from None
        if x.ndim != 2 or x.shape != (m, d):
            raise FormatError(f"features shape {x.shape} does not match header (m={m}, d={d})", no)
        if c.shape != (m,) or not np.all((c == 0) | (c == 1)):
            raise FormatError("choice must be a 0/1 list of length m", no)
        if not np.all(np.isfinite(x)):
            raise FormatError("non-finite feature value", no)
        feats.append(x)
        choices.append(c)
        ids.append(tid)
    if not feats:
        raise FormatError("dataset contains no tasks", len(lines))
    return Dataset(np.stack(feats), np.stack(choices), ids, problem=str(header.get("problem", "")),
                   seed=header.get("seed"))


def load_dataset(path) -> tuple[Dataset, str]:
    """Load a dataset and return it with the fingerprint of the file bytes."""
    raw = Path(path).read_bytes()
    return parse_dataset(raw.decode("utf-8")), fingerprint_text(raw)


# ---------------------------------------------------------------------------
# models


def _array(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unarray(d: dict, name: str) -> np.ndarray:
    try:
        data = np.asarray(d["data"], dtype=np.float64)
        return data.reshape(d["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad array {name!r}: {exc}") from None


def model_to_dict(params: NetworkParams, metadata: dict | None = None) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": VERSION,
        "architecture": {
            "input_dim": params.input_dim,
            "hidden_layers": len(params.hidden),
            "hidden_units": [layer.W.shape[1] for layer in params.hidden],
            "output_dim": params.output_dim,
            "norm_position": params.norm_position,
            "momentum": params.momentum,
            "eps": params.eps,
        },
        "output_dim": params.output_dim,
        **(metadata or {}),
        "params": {k: _array(v) for k, v in params.state().items()},
    }


def model_from_dict(doc: dict) -> NetworkParams:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"not a {MODEL_FORMAT} document")
    if doc.get("version") != VERSION:
        raise FormatError(f"unsupported model version {doc.get('version')!r}")
    arch = doc["architecture"]
    arrays = doc["params"]
    hidden = []
    for i in range(arch["hidden_layers"]):
        get = lambda n: _unarray(arrays[f"hidden.{i}.{n}"], f"hidden.{i}.{n}")  # noqa: E731
        hidden.append(HiddenLayer(get("W"), get("b"), get("gamma"), get("beta"),
                                  get("running_mean"), get("running_var")))
    return NetworkParams(hidden, _unarray(arrays["out.W"], "out.W"), _unarray(arrays["out.b"], "out.b"),
                         momentum=arch["momentum"], eps=arch["eps"], norm_position=arch["norm_position"])


def save_model(params: NetworkParams, path, metadata: dict | None = None) -> None:
    atomic_write(path, json.dumps(model_to_dict(params, metadata), allow_nan=False) + "\n")


def load_model(path) -> tuple[NetworkParams, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"model file is not valid JSON ({exc.msg})") from None
    params = model_from_dict(doc)
    meta = {k: v for k, v in doc.items() if k != "params"}
    return params, meta


# ---------------------------------------------------------------------------
# tables


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    atomic_write(path, csv_text(columns, rows))


def training_log_rows(report) -> list[dict]:
    return [
        {
            "epoch": r.epoch,
            "loss_total": r.loss.total,
            "loss_po": r.loss.po,
            "loss_dom": r.loss.dom,
            "loss_mds": r.loss.mds,
            "loss_l2": r.loss.l2,
            "val_a_mean": r.val_a_mean,
        }
        for r in report.epochs
    ]


def eval_row(report, problem: str | None = None) -> dict:
    return {
        "problem": problem if problem is not None else report.problem,
        "split": report.split,
        "repetition": report.repetition,
        "n_tasks": report.n_tasks,
        "mean_a_mean": report.mean,
        "std_a_mean": report.std,
        "tp": report.tp,
        "fp": report.fp,
        "tn": report.tn,
        "fn": report.fn,
    }


# ---------------------------------------------------------------------------
# figure


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def bar_chart_svg(bars: Sequence[dict], title: str = "A-mean by problem", reference: float = 0.5) -> str:
    """Bars ``{"label", "group", "value", "std"}`` on a fixed [0, 1] axis with a reference line.

    Bars sharing a label are drawn side by side, coloured by group.
    """
    palette = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"]
    labels = list(dict.fromkeys(b["label"] for b in bars))
    groups = list(dict.fromkeys(b.get("group", "") for b in bars))
    left, right, top, bottom = 60, 20, 40, 90
    slot = 28 * max(1, len(groups)) + 16
    width = left + right + slot * max(1, len(labels))
    height = 360
    plot_h = height - top - bottom

    def y(v: float) -> float:
        return top + plot_h * (1.0 - min(max(v, 0.0), 1.0))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<g id="y-axis" data-min="0" data-max="1">',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
    ]
    for t in np.linspace(0, 1, 6):
        out.append(f'<line x1="{left - 4}" y1="{y(t):.1f}" x2="{left}" y2="{y(t):.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{y(t) + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
    out.append("</g>")
    out.append(f'<line x1="{left}" y1="{top + plot_h}" x2="{width - right}" y2="{top + plot_h}" stroke="black"/>')
    for li, label in enumerate(labels):
        x0 = left + li * slot + 8
        for b in (b for b in bars if b["label"] == label):
            gi = groups.index(b.get("group", ""))
            x = x0 + 28 * gi
            v, s = float(b["value"]), float(b.get("std", 0.0))
            out.append(
                f'<rect class="bar" data-label="{label}" data-group="{b.get("group", "")}" data-value="{v!r}" '
                f'x="{x}" y="{y(v):.1f}" width="22" height="{y(0) - y(v):.1f}" fill="{palette[gi % len(palette)]}"/>'
            )
            cx = x + 11
            out.append(
                f'<line class="error" x1="{cx}" y1="{y(v + s):.1f}" x2="{cx}" y2="{y(v - s):.1f}" stroke="black"/>'
            )
        cx = x0 + 14 * len(groups)
        out.append(
            f'<text x="{cx}" y="{top + plot_h + 12}" text-anchor="end" '
            f'transform="rotate(-45 {cx} {top + plot_h + 12})">{label}</text>'
        )
    out.append(
        f'<line id="reference-line" data-value="{reference!r}" x1="{left}" y1="{y(reference):.1f}" '
        f'x2="{width - right}" y2="{y(reference):.1f}" stroke="grey" stroke-dasharray="4 3"/>'
    )
    if len(groups) > 1:
        for gi, g in enumerate(groups):
            out.append(f'<rect x="{width - right - 90}" y="{top + 14 * gi}" width="10" height="10" '
                       f'fill="{palette[gi % len(palette)]}"/>')
            out.append(f'<text x="{width - right - 76}" y="{top + 14 * gi + 9}">{g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
