"""Run configuration: flat dotted-key text files.

Format: one `key.path = value` per line, `#` comments, blank lines ignored.
Values parse as bool/int/float when unambiguous, comma-separated lists when a
comma is present, strings otherwise.  Example::

    dgp.variant = skewed
    dgp.n = 1000
    chain.n_sim = 4000
    predictor.1.variant = np_r
    predictor.2.variant = flat
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

import numpy as np

from panelmix.panel import PanelSchema
from panelmix.priors import Hyperparameters, PredictorSpec

__all__ = ["ConfigError", "parse_config", "dump_config", "RunConfig", "apply_hyper_overrides"]


class ConfigError(ValueError):
    """Raised on malformed or inconsistent run configuration."""


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if "," in raw:
        return tuple(_parse_value(part) for part in raw.split(","))
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config(text: str) -> dict:
    """Parse dotted-key text into a nested dict."""
    root: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        parts = [p.strip() for p in key.strip().split(".")]
        if not all(parts):
            raise ConfigError(f"line {lineno}: empty key segment")
        node = root
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {lineno}: key {key.strip()!r} collides with a value")
        node[parts[-1]] = _parse_value(raw)
    return root


def _flatten(node, prefix=""):
    items = []
    for k, v in node.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            items.extend(_flatten(v, key + "."))
        else:
            if isinstance(v, (tuple, list)):
                sval = ",".join(str(x) for x in v)
            else:
                sval = str(v)
            items.append((key, sval))
    return items


def dump_config(tree: dict) -> str:
    return "\n".join(f"{k} = {v}" for k, v in sorted(_flatten(tree))) + "\n"


def config_hash(text: str) -> str:
    canon = dump_config(parse_config(text))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def apply_hyper_overrides(hyper: Hyperparameters, overrides: dict) -> Hyperparameters:
    """Override elicited hyperparameters by dotted key.

    Top-level numeric fields replace directly; 'lam.<field>' and 'l.<field>'
    reach into the mixture-block priors; 'K' sets both blocks' truncation.
    """
    if not overrides:
        return hyper
    top = dict(overrides)
    lam = hyper.lam
    lblk = hyper.l
    if "K" in top:
        K = int(top.pop("K"))
        lam = dataclasses.replace(lam, K=K)
        if lblk is not None:
            lblk = dataclasses.replace(lblk, K=K)
    for blk_name in ("lam", "l"):
        sub = top.pop(blk_name, None)
        if sub is None:
            continue
        target = lam if blk_name == "lam" else lblk
        if target is None:
            raise ConfigError(f"hyper.{blk_name} overridden but block is absent")
        fields = {}
        for k, v in sub.items():
            if k in ("K",):
                fields[k] = int(v)
            elif k in ("psi0", "nu0", "a0_alpha", "b0_alpha", "tau"):
                fields[k] = float(v)
            elif k == "m0":
                fields[k] = np.full(target.d, float(v))
            elif k == "Psi0":
                fields[k] = float(v) * np.eye(target.d)
            else:
                raise ConfigError(f"unknown hyper override {blk_name}.{k}")
        target = dataclasses.replace(target, **fields)
        if blk_name == "lam":
            lam = target
        else:
            lblk = target
    fields = {}
    for k, v in top.items():
        if not hasattr(hyper, k):
            raise ConfigError(f"unknown hyper override {k!r}")
        fields[k] = float(v)
    return dataclasses.replace(hyper, lam=lam, l=lblk, **fields)


def _as_tuple(v) -> tuple:
    if v is None:
        return ()
    if isinstance(v, (tuple, list)):
        return tuple(v)
    return (v,)


@dataclass
class RunConfig:
    """Everything a command needs, resolved from the config file."""

    raw: dict
    text: str
    data: dict | None
    dgp: dict | None
    predictors: list = field(default_factory=list)  # (PredictorSpec, hyper_overrides)
    chain: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    out_dir: str = "."
    diagnostics: bool = False

    @property
    def hash(self) -> str:
        return config_hash(self.text)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        tree = parse_config(text)
        data = tree.get("data")
        dgp = tree.get("dgp")
        if (data is None) == (dgp is None):
            raise ConfigError("config must set exactly one of data.* or dgp.*")
        predictors = []
        pred_tree = tree.get("predictor", {})
        for key in sorted(pred_tree, key=lambda s: (len(str(s)), str(s))):
            sub = pred_tree[key]
            if not isinstance(sub, dict) or "variant" not in sub:
                raise ConfigError(f"predictor.{key} needs a variant")
            overrides = sub.get("hyper", {})
            spec = PredictorSpec(
                variant=str(sub["variant"]),
                heteroskedastic=bool(sub.get("heteroskedastic", False)),
                conditioning=tuple(str(t) for t in _as_tuple(sub.get("conditioning"))),
                standardize=bool(sub.get("standardize", True)),
                label=sub.get("label"),
                truth="pending" if sub["variant"] == "oracle" else None,
            )
            predictors.append((spec, overrides))
        chain = dict(tree.get("chain", {}))
        chain.setdefault("n_sim", 4000)
        chain.setdefault("burn_in", chain["n_sim"] // 2)
        chain.setdefault("thin", 1)
        chain.setdefault("chains", 1)
        chain.setdefault("seed", int(dgp.get("seed", 0)) if dgp else 0)
        mc = dict(tree.get("mc", {}))
        out = tree.get("output", {}).get("dir", ".")
        diag = bool(tree.get("output", {}).get("diagnostics", False))
        return cls(
            raw=tree,
            text=text,
            data=data,
            dgp=dgp,
            predictors=predictors,
            chain=chain,
            mc=mc,
            out_dir=str(out),
            diagnostics=diag,
        )

    def schema(self) -> PanelSchema:
        d = self.data or {}
        return PanelSchema(
            id_col=str(d.get("id", "id")),
            time_col=str(d.get("time", "time")),
            y_col=str(d.get("y", "y")),
            x_exog=tuple(str(c) for c in _as_tuple(d.get("x_exog"))),
            x_pred=tuple(str(c) for c in _as_tuple(d.get("x_pred"))),
            lag_outcome=bool(d.get("lag_outcome", True)),
            w_agg=tuple(str(c) for c in _as_tuple(d.get("w_agg"))),
            w_ind=tuple(str(c) for c in _as_tuple(d.get("w_ind"))),
            missing=str(d.get("missing", "")),
            layout=str(d.get("layout", "long")),
        )

    def dgp_spec(self):
        from panelmix.simlab import DGPSpec

        d = self.dgp or {}
        return DGPSpec(
            variant=str(d.get("variant", "skewed")),
            N=int(d.get("n", 1000)),
            T=int(d.get("t", 6)),
            seed=int(d.get("seed", 0)),
        )
