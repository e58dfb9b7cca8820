"""Self-describing JSON archive of posterior draws.

The archive embeds the (sorted, transformed) data, the model and sampler
echo, and the draw matrices as nested lists.  Floats are written with
``repr`` precision, keys are sorted and nothing time-dependent is stored, so
the same run always produces the same bytes and a read-write cycle is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .basis import LinkFunction, SmootherBasis
from .densities import density_from_echo
from .errors import InputError
from .induced import ModelSpec, TwoSampleData
from .mcmc import PosteriorDraws, PriorSpec, SamplerConfig

__all__ = ["ARCHIVE_FORMAT", "ARCHIVE_VERSION", "DrawArchive", "read_archive", "write_archive"]

ARCHIVE_FORMAT = "gqte-draws"
ARCHIVE_VERSION = 1


def _finite_or_none(x: float):
    return float(x) if math.isfinite(x) else None


@dataclass
class DrawArchive:
    f1_init: dict
    f1_last: dict
    link: str
    basis: dict
    config: dict
    y1: np.ndarray
    y2: np.ndarray
    beta: np.ndarray
    eta: np.ndarray
    eta_names: list[str]
    accepted: dict[str, int]
    proposed: dict[str, int]
    prior: dict = field(default_factory=dict)
    power: float | None = None
    chosen_df: int | None = None
    df_scores: dict[str, float | None] | None = None
    warnings: list[str] = field(default_factory=list)

    @classmethod
    def from_run(cls, draws: PosteriorDraws, spec: ModelSpec, data: TwoSampleData,
                 prior: PriorSpec | dict | None = None, power: float | None = None,
                 chosen_df: int | None = None, df_scores: dict | None = None) -> DrawArchive:
        if isinstance(prior, PriorSpec):
            prior = {"beta_mean": prior.beta_mean.tolist(),
                     "beta_variance_scale": prior.beta_variance_scale}
        scores = None
        if df_scores is not None:
            scores = {str(k): _finite_or_none(v) for k, v in sorted(df_scores.items())}
        return cls(
            f1_init=dict(draws.f1_init), f1_last=dict(draws.f1_last),
            link=spec.link.kind, basis=spec.basis.echo(), config=asdict(draws.config),
            y1=np.array(data.y1), y2=np.array(data.y2),
            beta=np.array(draws.beta), eta=np.array(draws.eta), eta_names=list(draws.eta_names),
            accepted=dict(draws.accepted), proposed=dict(draws.proposed),
            prior=dict(prior or {}), power=power, chosen_df=chosen_df, df_scores=scores,
            warnings=list(draws.warnings),
        )

    # reconstruction --------------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    @property
    def acceptance(self) -> dict[str, float]:
        return {k: (self.accepted[k] / self.proposed[k] if self.proposed[k] else 0.0)
                for k in sorted(self.proposed)}

    def data(self) -> TwoSampleData:
        return TwoSampleData(self.y1, self.y2)

    def spec(self) -> ModelSpec:
        basis = SmootherBasis(self.basis["family"], self.basis["df"], tuple(self.basis["boundary"]))
        return ModelSpec(density_from_echo(self.f1_init), LinkFunction(self.link), basis)

    def draws(self) -> PosteriorDraws:
        return PosteriorDraws(beta=self.beta, eta=self.eta, eta_names=list(self.eta_names),
                              accepted=dict(self.accepted), proposed=dict(self.proposed),
                              config=SamplerConfig(**self.config), f1_init=dict(self.f1_init),
                              f1_last=dict(self.f1_last), warnings=list(self.warnings))

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": ARCHIVE_FORMAT,
            "format_version": ARCHIVE_VERSION,
            "model": {"f1_init": self.f1_init, "f1_last": self.f1_last, "link": self.link,
                      "basis": self.basis, "power_transform": self.power,
                      "chosen_df": self.chosen_df, "df_scores": self.df_scores},
            "config": self.config,
            "seed": self.seed,
            "prior": self.prior,
            "data": {"y1": self.y1.tolist(), "y2": self.y2.tolist()},
            "draws": {"beta": self.beta.tolist(), "eta": self.eta.tolist(),
                      "eta_names": self.eta_names},
            "acceptance": {"accepted": self.accepted, "proposed": self.proposed,
                           "rate": self.acceptance},
            "warnings": self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                          allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> DrawArchive:
        if doc.get("format") != ARCHIVE_FORMAT:
            raise InputError("not a draw archive")
        if doc.get("format_version") != ARCHIVE_VERSION:
            raise InputError(f"unsupported archive version {doc.get('format_version')!r}")
        try:
            model, draws, acc = doc["model"], doc["draws"], doc["acceptance"]
            k = int(model["basis"]["df"]) + 1
            beta = np.array(draws["beta"], dtype=float).reshape(-1, k)
            eta = np.array(draws["eta"], dtype=float).reshape(-1, len(draws["eta_names"]))
            return cls(
                f1_init=model["f1_init"], f1_last=model["f1_last"], link=model["link"],
                basis=model["basis"], config=doc["config"],
                y1=np.array(doc["data"]["y1"], dtype=float),
                y2=np.array(doc["data"]["y2"], dtype=float),
                beta=beta, eta=eta, eta_names=list(draws["eta_names"]),
                accepted=acc["accepted"], proposed=acc["proposed"], prior=doc.get("prior", {}),
                power=model.get("power_transform"), chosen_df=model.get("chosen_df"),
                df_scores=model.get("df_scores"), warnings=doc.get("warnings", []),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"corrupt draw archive: {exc}") from None


def write_archive(archive: DrawArchive, path) -> None:
    Path(path).write_text(archive.to_json())


def read_archive(path) -> DrawArchive:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read archive {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"archive is not valid JSON: {exc.msg}", line=exc.lineno) from None
    return DrawArchive.from_dict(doc)
