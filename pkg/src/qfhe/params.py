"""Scheme parameters and the shipped presets."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

from .errors import ConfigurationError
from .ringmod import check_modulus


@dataclass(frozen=True)
class Params:
    """Parameter set for Dual / DualHE / QHE.

    ``eta_c`` is the per-level classical noise depth and ``eta`` the extra
    log-factor reserved for quantum capability.  ``claw_width`` overrides
    the Gaussian width B_D of the encrypted-CNOT distribution (defaults to
    beta_f); the tiny presets need it because beta_f exceeds their
    inversion radius.
    """

    q: int
    n: int
    m: int
    beta_init: int
    lam: int = 4
    L: int = 2
    L_c: int = 1
    eta: int = 1
    eta_c: int = 1
    claw_width: float | None = None
    name: str = "custom"

    def __post_init__(self):
        check_modulus(self.q)
        if self.n < 1 or self.m < 1 or self.beta_init < 1:
            raise ConfigurationError("n, m and beta_init must be positive")
        if self.m < self.n * self.k:
            raise ConfigurationError(
                f"m={self.m} < n*log2(q)={self.n * self.k}: the gadget trapdoor needs m >= n log q")

    @property
    def k(self) -> int:
        return self.q.bit_length() - 1

    @property
    def N(self) -> int:
        return (self.m + 1) * self.k

    @property
    def trap_rows(self) -> int:
        """Rows of the uniform block Abar (m - n log q)."""
        return self.m - self.n * self.k

    @property
    def beta_f(self) -> int:
        return self.beta_init * (self.N + 1) ** (self.eta_c + self.eta)

    @property
    def claw_bound(self) -> float:
        return float(self.beta_f if self.claw_width is None else self.claw_width)

    @property
    def register_width(self) -> int:
        """w = 1 + n log q + (m+1) log q, the bit length of (mu, s, e)."""
        return 1 + self.n * self.k + (self.m + 1) * self.k

    @property
    def decrypt_threshold(self) -> float:
        """q / (4(m+1)): the bound on ||E||_inf that guarantees decryption."""
        return self.q / (4 * (self.m + 1))

    def noise_bound(self, depth: int) -> int:
        return self.beta_init * (self.N + 1) ** depth

    @property
    def depth_budget(self) -> int:
        """Largest d with beta_init (N+1)^d < q/(4(m+1)); -1 if even fresh noise is unsafe."""
        limit = self.q  # compare 4(m+1) * bound < q exactly in integers
        d = -1
        while 4 * (self.m + 1) * self.noise_bound(d + 1) < limit:
            d += 1
        return d

    @property
    def inversion_radius(self) -> int:
        """Worst-case (over R) inf-norm error radius that the trapdoor always decodes."""
        return (self.q // 4 - 1) // (1 + self.trap_rows)

    @property
    def inversion_radius_l2(self) -> float:
        return (self.q / 4) / math.sqrt(1 + self.trap_rows)

    @property
    def trapdoor_constant(self) -> float:
        """C_T such that q / (C_T sqrt(n log q)) equals the l2 radius."""
        return self.q / (self.inversion_radius_l2 * math.sqrt(self.n * self.k))

    def with_(self, **changes) -> "Params":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Preset:
    name: str
    params: Params
    exact_capable: bool
    faithful_capable: bool
    trapdoor_constant: float
    eta_c_measured: int
    report: dict = field(default_factory=dict)


def _load_raw() -> dict:
    text = resources.files("qfhe").joinpath("presets.json").read_text()
    return json.loads(text)


def preset_names() -> list[str]:
    return list(_load_raw()["presets"].keys())


def load_preset(name: str) -> Preset:
    raw = _load_raw()["presets"]
    if name not in raw:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(raw)}")
    entry = raw[name]
    params = Params(name=name, **entry["params"])
    return Preset(
        name=name,
        params=params,
        exact_capable=entry["exact_capable"],
        faithful_capable=entry["faithful_capable"],
        trapdoor_constant=entry["trapdoor_constant"],
        eta_c_measured=entry["eta_c_measured"],
        report=entry["report"],
    )


def get_params(name: str) -> Params:
    return load_preset(name).params


# Source values for presets.json; the file itself is regenerated by
# ``python3 -m qfhe presets rebuild`` so that the stored report always comes
# from the validator.
PRESET_SOURCES = {
    "nano": dict(q=8, n=1, m=3, beta_init=2, lam=2, L=1, L_c=1, eta=0, eta_c=0, claw_width=1.0),
    "nano-plus": dict(q=16, n=1, m=5, beta_init=2, lam=2, L=1, L_c=1, eta=0, eta_c=0, claw_width=1.0),
    "desk": dict(q=2**32, n=1, m=40, beta_init=2, lam=4, L=2, L_c=1, eta=1, eta_c=1),
    "desk40": dict(q=2**40, n=4, m=168, beta_init=4, lam=4, L=2, L_c=1, eta=1, eta_c=1),
}


def build_preset_entries(names=None, measure_depth: bool = True) -> dict:
    """Validate every source preset and return the presets.json payload."""
    from .dualfhe import validate_params

    entries = {}
    for name in names or PRESET_SOURCES:
        params = Params(name=name, **PRESET_SOURCES[name])
        report = validate_params(params, measure_depth=measure_depth)
        entries[name] = {
            "params": PRESET_SOURCES[name],
            "exact_capable": report.exact_capable,
            "faithful_capable": bool(report.trapdoor_ok and report.classical_ok and report.quantum_ok and report.claw_within_radius),
            "trapdoor_constant": params.trapdoor_constant,
            "eta_c_measured": report.pipeline_depth,
            "report": report.as_dict(),
        }
    return {"presets": entries}


def write_presets(path=None, measure_depth: bool = True) -> str:
    target = path or str(resources.files("qfhe").joinpath("presets.json"))
    payload = build_preset_entries(measure_depth=measure_depth)
    with open(target, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=False)
        fh.write("\n")
    return target
