"""Plain-text ``key=value`` run configuration.

Every key has a default; a config file and ``--set key=value`` overrides are
layered on top. The effective configuration is written next to each command's
outputs and can be fed back in to reproduce the run.
"""

from __future__ import annotations

from pathlib import Path

from .forward import ElasticClassStats, ForwardModel, NoiseModel, read_wavelet, ricker
from .lattice import GridDims
from .mesh_prior import MeshPrior, load_appendix_prior, read_prior_file
from .profile_prior import ProfilePrior, load_table1, read_table_file
from .sampler import SamplerConfig

__all__ = ["ConfigError", "DEFAULTS", "RunConfig", "parse_config_text", "load_config"]


class ConfigError(ValueError):
    """Bad key, value or file reference (a usage error)."""


DEFAULTS: dict[str, str] = {
    # lattice and prior
    "m": "105",
    "n": "51",
    "prior": "mesh",
    "prior_file": "",
    "profile_sweeps": "500",
    # forward model
    "mu0": "6960,2.25",
    "mu1": "5670,1.80",
    "sigma0": "32400,0,0,0.0036",
    "sigma1": "32400,0,0,0.0036",
    "corr_v_range": "3",
    "corr_v_support": "12",
    "corr_h_range": "10",
    "aki_near": "",
    "aki_far": "",
    "sd_near": "0.02",
    "sd_far": "0.02",
    "noise_corr_range": "0",
    "wavelet_near_file": "",
    "wavelet_far_file": "",
    "ricker_near": "0.14,21",
    "ricker_far": "0.12,21",
    # seeds
    "seed": "0",
    "truth_seed": "11",
    "data_seed": "12",
    # simulate-prior
    "count": "4",
    # sampler
    "nu": "8",
    "sweeps": "1000",
    "burn_in": "",
    "thin": "1",
    "scan": "systematic",
    "proposal": "linearized",
    "audit_every": "100",
    "chains": "1",
    # tune
    "nu_grid": "2,4,6,8",
    "tune_sweeps": "20",
    "tune_target": "0.3",
    # analysis
    "trace_columns": "15,30,45",
    "contact_seeds": "",
    "top_k": "0",
    "connectivity_draws": "1",
    "connectivity": "4",
}


def parse_config_text(text: str, source: str = "config") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path=None, overrides=()) -> "RunConfig":
    values = dict(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        values.update(parse_config_text(p.read_text(encoding="utf-8"), str(p)))
    for item in overrides:
        values.update(parse_config_text(item, "--set"))
    return RunConfig(values)


def _floats(key: str, text: str, count: int | None = None) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise ConfigError(f"{key}: expected {count} numbers, got {len(vals)}")
    return vals


def _ints(key: str, text: str) -> list[int]:
    if not text.strip():
        return []
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {text!r}") from None


def _existing(key: str, text: str) -> Path:
    p = Path(text)
    if not p.is_file():
        raise ConfigError(f"{key}: file {text} not found")
    return p


class RunConfig:
    """Typed accessors over the raw string map; all errors are :class:`ConfigError`."""

    def __init__(self, values: dict[str, str]):
        self.values = dict(values)
        self.dims  # validate early
        if self.get("prior") not in ("mesh", "profile"):
            raise ConfigError(f"prior: expected 'mesh' or 'profile', got {self.get('prior')!r}")

    def get(self, key: str) -> str:
        return self.values[key]

    def int(self, key: str) -> int:
        try:
            return int(self.values[key])
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {self.values[key]!r}") from None

    def float(self, key: str) -> float:
        try:
            return float(self.values[key])
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {self.values[key]!r}") from None

    def text(self) -> str:
        """The effective configuration, one ``key=value`` per line, sorted."""
        return "".join(f"{k}={self.values[k]}\n" for k in sorted(self.values))

    def write(self, path) -> None:
        Path(path).write_text(self.text(), encoding="utf-8", newline="\n")

    # -- assembled objects --------------------------------------------------

    @property
    def dims(self) -> GridDims:
        try:
            return GridDims(self.int("m"), self.int("n"))
        except ValueError as exc:
            raise ConfigError(f"m/n: {exc}") from None

    def prior(self):
        kind = self.get("prior")
        path = self.get("prior_file")
        try:
            if kind == "mesh":
                spec = read_prior_file(_existing("prior_file", path)) if path else load_appendix_prior()
                return MeshPrior(spec)
            table = read_table_file(_existing("prior_file", path)) if path else load_table1()
            return ProfilePrior(table, prior_sweeps=self.int("profile_sweeps"))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"prior_file: {exc}") from None

    def _wavelet(self, side: str):
        path = self.get(f"wavelet_{side}_file")
        if path:
            return read_wavelet(_existing(f"wavelet_{side}_file", path))
        freq, length = _floats(f"ricker_{side}", self.get(f"ricker_{side}"), 2)
        return ricker(freq, int(length))

    def forward_model(self) -> ForwardModel:
        try:
            s0 = _floats("sigma0", self.get("sigma0"), 4)
            s1 = _floats("sigma1", self.get("sigma1"), 4)
            support = self.get("corr_v_support")
            elastic = ElasticClassStats(
                mu0=tuple(_floats("mu0", self.get("mu0"), 2)),
                mu1=tuple(_floats("mu1", self.get("mu1"), 2)),
                sigma0=((s0[0], s0[1]), (s0[2], s0[3])),
                sigma1=((s1[0], s1[1]), (s1[2], s1[3])),
                corr_v_range=self.float("corr_v_range"),
                corr_h_range=self.float("corr_h_range"),
                corr_v_support=int(support) if support else None,
            )
            aki = None
            if self.get("aki_near") or self.get("aki_far"):
                aki = (_floats("aki_near", self.get("aki_near"), 2),
                       _floats("aki_far", self.get("aki_far"), 2))
            noise = NoiseModel(self.float("sd_near"), self.float("sd_far"),
                               self.float("noise_corr_range"))
            return ForwardModel(elastic, self._wavelet("near"), self._wavelet("far"), aki, noise)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def sampler(self, seed: int | None = None, nu: int | None = None) -> SamplerConfig:
        burn = self.get("burn_in")
        try:
            return SamplerConfig(
                nu=self.int("nu") if nu is None else nu,
                sweeps=self.int("sweeps"),
                burn_in=int(burn) if burn else None,
                thin=self.int("thin"),
                seed=self.int("seed") if seed is None else seed,
                scan=self.get("scan"),
                proposal=self.get("proposal"),
                audit_every=self.int("audit_every"),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def nu_grid(self) -> list[int]:
        return _ints("nu_grid", self.get("nu_grid"))

    def trace_columns(self) -> list[int]:
        return _ints("trace_columns", self.get("trace_columns"))

    def contact_seeds(self) -> list[tuple[int, int]]:
        text = self.get("contact_seeds").strip()
        if not text:
            return []
        seeds = []
        for part in text.split(";"):
            pair = _ints("contact_seeds", part)
            if len(pair) != 2:
                raise ConfigError(f"contact_seeds: expected 'i,j;i,j;...', got {text!r}")
            seeds.append((pair[0], pair[1]))
        return seeds

    def connectivity_draws(self):
        text = self.get("connectivity_draws")
        if text == "all":
            return "all"
        value = self.int("connectivity_draws")
        if value < 1:
            raise ConfigError("connectivity_draws must be >= 1 or 'all'")
        return value
