"""ADE/FDE metrics at 1-4 s horizons and best-of-K report generation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_HORIZONS = {"1s": 10, "2s": 20, "3s": 30, "4s": 40}

EVAL_MODES = ("top1", "best_of_k")


def _pair(pred, gt, horizon_steps: int):
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.ndim != 2 or g.ndim != 2 or p.shape[1] != 2 or g.shape[1] != 2:
        raise ValueError("trajectories must be (T, 2)")
    if horizon_steps < 1:
        raise ValueError("horizon_steps must be >= 1")
    if len(p) < horizon_steps or len(g) < horizon_steps:
        raise ValueError(f"need >= {horizon_steps} points, got {len(p)}/{len(g)}")
    return p, g


def ade(pred, gt, horizon_steps: int) -> float:
    """Mean L2 error in meters over steps 1..horizon_steps."""
    p, g = _pair(pred, gt, horizon_steps)
    d = p[:horizon_steps] - g[:horizon_steps]
    return float(np.sqrt((d ** 2).sum(axis=1)).mean())


def fde(pred, gt, horizon_steps: int) -> float:
    """L2 error in meters at exactly step horizon_steps."""
    p, g = _pair(pred, gt, horizon_steps)
    d = p[horizon_steps - 1] - g[horizon_steps - 1]
    return float(np.sqrt((d ** 2).sum()))


@dataclass
class EvalReport:
    """Aggregated ADE/FDE per horizon, plus the worst offenders.

    Best-of-K picks the minimum over predictions independently per metric
    and horizon (the common convention); metrics are means over samples.
    """

    mode: str
    sample_count: int
    ade: dict[str, float]
    fde: dict[str, float]
    worst: list[tuple[str, float]] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "sample_count": self.sample_count,
            "ade": dict(self.ade),
            "fde": dict(self.fde),
            "worst": [[sid, val] for sid, val in self.worst],
            "errors": [[sid, msg] for sid, msg in self.errors],
            "notes": self.notes,
        }

    def to_text(self) -> str:
        horizons = list(self.ade.keys())
        lines = [
            f"mode: {self.mode}   samples: {self.sample_count}"
            + (f"   errors: {len(self.errors)}" if self.errors else ""),
        ]
        if self.notes:
            lines.append(self.notes)
        header = "metric " + " ".join(f"{h:>8}" for h in horizons)
        lines.append(header)
        lines.append("-" * len(header))
        lines.append("ADE    " + " ".join(f"{self.ade[h]:8.3f}" for h in horizons))
        lines.append("FDE    " + " ".join(f"{self.fde[h]:8.3f}" for h in horizons))
        if self.worst:
            lines.append("worst samples (FDE at max horizon):")
            for sid, val in self.worst[:20]:
                lines.append(f"  {sid}: {val:.3f}")
        return "\n".join(lines)


def evaluate(predictions: dict, ground_truths: dict, mode: str = "top1",
             horizons: dict[str, int] | None = None,
             worst_k: int = 20, notes: str = "") -> EvalReport:
    """Score per-sample prediction sets against the first ground-truth future.

    ``predictions`` maps sample id -> list of K (T, 2) trajectories;
    ``ground_truths`` maps sample id -> list of futures (only the first is
    scored; real data has a single one). Samples whose shapes do not line
    up produce error entries instead of failing the whole report.
    """
    if mode not in EVAL_MODES:
        raise ValueError(f"unknown eval mode {mode!r}")
    horizons = dict(horizons or DEFAULT_HORIZONS)
    max_h = max(horizons.values())
    ade_acc = {h: [] for h in horizons}
    fde_acc = {h: [] for h in horizons}
    worst = []
    errors = []
    count = 0
    for sid in sorted(ground_truths):
        if sid not in predictions:
            errors.append((str(sid), "missing prediction"))
            continue
        gt = np.asarray(ground_truths[sid][0], dtype=np.float64)
        preds = predictions[sid]
        if mode == "top1":
            preds = preds[:1]
        try:
            sample_ade = {h: min(ade(p, gt, steps) for p in preds)
                          for h, steps in horizons.items()}
            sample_fde = {h: min(fde(p, gt, steps) for p in preds)
                          for h, steps in horizons.items()}
        except ValueError as exc:
            errors.append((str(sid), str(exc)))
            continue
        count += 1
        for h in horizons:
            ade_acc[h].append(sample_ade[h])
            fde_acc[h].append(sample_fde[h])
        max_label = max(horizons, key=horizons.get)
        worst.append((str(sid), sample_fde[max_label]))
    worst.sort(key=lambda kv: -kv[1])
    return EvalReport(
        mode=mode,
        sample_count=count,
        ade={h: float(np.mean(v)) if v else float("nan") for h, v in ade_acc.items()},
        fde={h: float(np.mean(v)) if v else float("nan") for h, v in fde_acc.items()},
        worst=worst[:worst_k],
        errors=errors,
        notes=notes,
    )
