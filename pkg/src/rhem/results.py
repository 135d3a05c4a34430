"""Coefficient tables shared by the RHEM and RHOM fitters (JSON and aligned TSV)."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = ["FitResult", "stars"]


def stars(p):
    if p is None or math.isnan(p):
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    if p < 0.1:
        return "+"
    return ""


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


@dataclass
class FitResult:
    """Estimates of one fitted model.

    ``stat_label`` is ``"z"`` for the partial-likelihood fit and ``"t"`` for OLS;
    ``model`` holds the footer block (log-likelihood and AIC, or R^2 and RMSE,
    plus observation counts).
    """

    kind: str
    names: list
    estimates: np.ndarray
    se: np.ndarray
    stat: np.ndarray
    p: np.ndarray
    stat_label: str
    model: dict
    standardization: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def coef(self, name):
        return float(self.estimates[self.names.index(name)])

    def stderr(self, name):
        return float(self.se[self.names.index(name)])

    def to_dict(self):
        rows = [
            {"name": n, "estimate": e, "se": s, self.stat_label: z, "p": p, "stars": stars(p)}
            for n, e, s, z, p in zip(self.names, self.estimates, self.se, self.stat, self.p)
        ]
        return _clean({
            "kind": self.kind,
            "coefficients": rows,
            "model": self.model,
            "standardization": self.standardization,
            "meta": self.meta,
        })

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d):
        rows = d["coefficients"]
        label = "z" if rows and "z" in rows[0] else "t"
        nan = lambda v: math.nan if v is None else v  # noqa: E731
        return cls(
            kind=d["kind"],
            names=[r["name"] for r in rows],
            estimates=np.array([nan(r["estimate"]) for r in rows], dtype=float),
            se=np.array([nan(r["se"]) for r in rows], dtype=float),
            stat=np.array([nan(r[label]) for r in rows], dtype=float),
            p=np.array([nan(r["p"]) for r in rows], dtype=float),
            stat_label=label,
            model=d.get("model", {}),
            standardization=d.get("standardization", {}),
            meta=d.get("meta", {}),
        )

    @classmethod
    def read_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_tsv(self):
        head = ["name", "estimate", "se", self.stat_label, "p", "stars"]
        body = [
            [n, f"{e:.6f}", f"{s:.6f}", f"{z:.3f}", f"{p:.4g}", stars(p)]
            for n, e, s, z, p in zip(self.names, self.estimates, self.se, self.stat, self.p)
        ]
        footer = [[k, _fmt(v), "", "", "", ""] for k, v in self.model.items()
                  if not isinstance(v, (dict, list))]
        table = [head] + body + footer
        widths = [max(len(r[i]) for r in table) for i in range(len(head))]
        lines = ["\t".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table]
        return "\n".join(lines) + "\n"

    def write_tsv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_tsv())

    def summary(self):
        return self.to_tsv()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def as_plain(obj):
    """JSON-safe copy of a dataclass or mapping."""
    if hasattr(obj, "__dataclass_fields__"):
        obj = asdict(obj)
    return _clean(obj)
