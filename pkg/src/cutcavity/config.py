"""Case configuration: physical dials, tolerances, and output selection."""

from __future__ import annotations

from dataclasses import dataclass, field, fields


@dataclass
class CaseConfig:
    D: float = 1.0
    U: float = 1.0
    nu: float | None = None
    re: float | None = None
    n: int = 20
    dt: float | None = None          # default 0.2*(D/U)/n, set in finalize()
    steady_tol: float = 1e-8
    inner_tol_factor: float = 1e-7   # inner tol = factor * (U/D) * max cell volume
    lin_tol: float = 1e-12
    max_inner: int = 4
    max_steps: int = 200000
    alpha_p: float = 0.7
    out_dir: str = "out"
    sweep: tuple[int, ...] = ()
    emit_profiles: bool = True
    emit_fields: bool = True
    emit_metrics: bool = True
    emit_residuals: bool = True
    quiet: bool = False

    def finalize(self) -> "CaseConfig":
        if (self.nu is None) == (self.re is None):
            raise ValueError("exactly one of nu or re must be given")
        if self.nu is None:
            if self.re <= 0:
                raise ValueError("re must be positive")
            self.nu = self.U * self.D / self.re if self.U != 0 else self.D / self.re
        else:
            self.re = self.U * self.D / self.nu if self.nu > 0 else float("inf")
        if self.n % 2 != 0:
            raise ValueError(f"n must be even, got {self.n}")
        for name in ("steady_tol", "inner_tol_factor", "lin_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.dt is None:
            uref = abs(self.U) if self.U != 0 else 1.0
            self.dt = 0.2 * (self.D / uref) / self.n
        return self

    # flat key=value round-trip (CLI config format)
    def to_text(self) -> str:
        lines = ["# cutcavity case configuration"]
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "CaseConfig":
        kw = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            kw[key] = val
        return CaseConfig.from_mapping(kw)

    @staticmethod
    def from_mapping(kw: dict) -> "CaseConfig":
        cfg = CaseConfig()
        for f in fields(cfg):
            if f.name not in kw:
                continue
            raw = kw[f.name]
            if f.name == "sweep":
                val = tuple(int(x) for x in str(raw).split(",") if str(x).strip())
            elif f.name in ("n", "max_inner", "max_steps"):
                val = int(raw)
            elif f.name == "out_dir":
                val = str(raw)
            elif f.name.startswith("emit_") or f.name == "quiet":
                val = str(raw).lower() in ("1", "true", "yes", "on")
            else:
                val = float(raw)
            setattr(cfg, f.name, val)
        return cfg
