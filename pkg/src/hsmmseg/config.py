"""Run configuration: flat ``key = value`` files plus CLI overrides."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import Hyperparams
from .distributions import DurationPrior, MVEmissionPrior, ScalarEmissionPrior

_SCALAR_KEYS = {
    "gamma": float,
    "alpha": float,
    "k_max": int,
    "tau": float,
    "burn_in": int,
    "thin": int,
    "max_iter": int,
    "gr_threshold": float,
    "estimate_window_frac": float,
    "duration_prior_shape": float,
    "duration_prior_scale": float,
    "seed": int,
}
_STRING_KEYS = {"model", "emission", "d_max"}
_EMISSION_PREFIX = "emission_prior_"

MODELS = ("baseline", "robust")
EMISSIONS = ("scalar", "multivariate")


def parse_config_file(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file with ``#`` comments."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or not value:
                raise ValueError(f"{path}:{lineno}: empty key or value")
            if key in out:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            if key not in _SCALAR_KEYS and key not in _STRING_KEYS and not key.startswith(_EMISSION_PREFIX):
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = value
    return out


def _float_list(raw: str, p: int, name: str) -> np.ndarray:
    parts = [float(v) for v in raw.split(",")] if "," in raw else [float(raw)]
    if len(parts) == 1:
        return np.full(p, parts[0])
    if len(parts) != p:
        raise ValueError(f"{name} expects 1 or {p} comma-separated values, got {len(parts)}")
    return np.array(parts)


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs: sampler settings plus paths and the seed."""

    gamma: float = 6.0
    alpha: float = 6.0
    k_max: int = 20
    d_max: int | None = None
    tau: float = 1.5
    burn_in: int = 100
    thin: int = 5
    max_iter: int = 10000
    gr_threshold: float = 1.1
    estimate_window_frac: float = 0.2
    model: str = "robust"
    emission: str | None = None  # None: scalar for 1 channel, multivariate otherwise
    duration_prior_shape: float = 1.0
    duration_prior_scale: float = 7.0
    emission_prior_raw: dict[str, str] = field(default_factory=dict)
    seed: int = 0
    input: str | None = None
    output: str = "."

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.emission is not None and self.emission not in EMISSIONS:
            raise ValueError(f"emission must be one of {EMISSIONS}, got {self.emission!r}")

    @classmethod
    def from_sources(cls, config_path=None, **overrides) -> "RunConfig":
        """Build from an optional config file, then apply non-None overrides."""
        kwargs = {}
        if config_path is not None:
            raw = parse_config_file(config_path)
            emission_prior_raw = {}
            for key, value in raw.items():
                if key.startswith(_EMISSION_PREFIX):
                    emission_prior_raw[key[len(_EMISSION_PREFIX):]] = value
                elif key == "d_max":
                    kwargs["d_max"] = None if value == "full" else int(value)
                elif key in _STRING_KEYS:
                    kwargs[key] = value
                else:
                    kwargs[key] = _SCALAR_KEYS[key](value)
            if emission_prior_raw:
                kwargs["emission_prior_raw"] = emission_prior_raw
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    def emission_family(self, p: int) -> str:
        return self.emission if self.emission is not None else ("scalar" if p == 1 else "multivariate")

    def hyperparams(self, p: int) -> Hyperparams:
        """Materialize sampler hyperparameters for ``p``-channel data."""
        raw = self.emission_prior_raw
        family = self.emission_family(p)
        if family == "scalar":
            if p != 1:
                raise ValueError("scalar emission requires 1-channel data")
            emission_prior = ScalarEmissionPrior(
                mu0=float(raw.get("mu0", 0.0)),
                sigma0_sq=float(raw.get("sigma0_sq", 4.0)),
                a0=float(raw.get("a0", 2.0)),
                b0=float(raw.get("b0", 2.0)),
            )
        else:
            emission_prior = MVEmissionPrior(
                mu0=_float_list(raw.get("mu0", "0"), p, "emission_prior_mu0"),
                sigma0=np.diag(_float_list(raw.get("sigma0_diag", "1"), p, "emission_prior_sigma0_diag")),
                nu0=float(raw.get("nu0", p + 2)),
                psi0=np.diag(_float_list(raw.get("psi0_diag", "1"), p, "emission_prior_psi0_diag")),
            )
        return Hyperparams(
            gamma=self.gamma,
            alpha=self.alpha,
            emission_prior=emission_prior,
            duration_prior=DurationPrior(shape=self.duration_prior_shape, scale=self.duration_prior_scale),
            tau=self.tau,
            k_max=self.k_max,
            d_max=self.d_max,
            burn_in=self.burn_in,
            thin=self.thin,
            max_iter=self.max_iter,
            gr_threshold=self.gr_threshold,
            estimate_window_frac=self.estimate_window_frac,
            robust=self.model == "robust",
        )

    def with_model(self, model: str) -> "RunConfig":
        return replace(self, model=model)
