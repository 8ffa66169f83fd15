"""Parameter schema and the versioned calibration file.

Every physics quantity the experiment leaves unstated lives in one INI file
(``data/calibration.ini`` by default).  Frequencies are in Hz, times in s,
lengths in m.  Scenario files and ``--override`` flags address entries as
``section.key``.
"""

from __future__ import annotations

import configparser
import hashlib
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..core import AtomFieldParams
from ..errors import ConfigError, RangeError, UnknownKeyError
from ..propagation import MediumGrid, StorageProtocol
from ..spectral import AbsorptionLine, EtalonParams, TransmissionModel, VelocityDistribution
from .parsing import error_line, locate, nearest, parse_bool

logger = logging.getLogger(__name__)


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit(x):
    return 0 <= x <= 1


def _open_unit(x):
    return 0 < x < 1


# section -> key -> (type, check, description)
SCHEMA = {
    "calibration": {
        "version": (str, None, "calibration file version tag"),
    },
    "atom": {
        "omega_p": (float, _positive, "probe coupling per unit field (Hz)"),
        "omega_c": (float, _nonneg, "control coupling per unit field (Hz)"),
        "alpha": (float, _nonneg, "virtual-state coupling strength (Hz)"),
        "omega43": (float, _positive, "virtual-state splitting (Hz)"),
        "gamma31": (float, _nonneg, "decay coefficient |3> -> |1> (Hz)"),
        "gamma32": (float, _nonneg, "decay coefficient |3> -> |2> (Hz)"),
        "gamma41": (float, _nonneg, "decay coefficient |4> -> |1> (Hz)"),
        "gamma42": (float, _nonneg, "decay coefficient |4> -> |2> (Hz)"),
        "gamma12": (float, _nonneg, "ground-state decoherence (Hz)"),
        "symmetric_ground_decay": (bool, None, "add the |2> -> |1> companion term"),
    },
    "medium": {
        "optical_depth": (float, _nonneg, "resonant two-level optical depth of the cold column"),
        "length": (float, _positive, "cell length (m)"),
        "n_slices": (int, _positive, "number of z slices"),
        "stokes_ratio": (float, _nonneg, "Stokes coupling relative to the probe coupling"),
        "collection": (float, _nonneg, "detected fraction of spontaneous emission"),
    },
    "protocol": {
        "storage_time": (float, _positive, "edge midpoint to edge midpoint (s)"),
        "pulse_fwhm": (float, _positive, "probe intensity FWHM (s)"),
        "retrieval_window": (float, _positive, "region of interest after read-out (s)"),
        "dt": (float, _positive, "output time step (s)"),
        "edge": (float, _nonneg, "control switching time (s)"),
        "write_offset": (float, None, "write switch-off relative to the probe peak (s)"),
        "photons": (float, _positive, "mean photon number of the input pulse"),
        "control_amplitude": (float, _nonneg, "normalised control amplitude when on"),
    },
    "room_temperature": {
        "w_d": (float, _positive, "velocity/pressure distribution width (Hz)"),
        "splitting": (float, _nonneg, "excited-state splitting (Hz)"),
        "eta_weight2": (float, _nonneg, "weight of the second excited line in efficiency"),
        "background_weight2": (float, _nonneg, "weight of the second excited line in background"),
        "line1_od": (float, _nonneg, "warm-cell optical depth of the F'=1 line"),
        "line2_od": (float, _nonneg, "warm-cell optical depth of the F'=2 line"),
        "line_width": (float, _positive, "warm-cell absorption line width (Hz)"),
        "cold_step": (float, _positive, "detuning step of the cold-atom efficiency scan (Hz)"),
        "fine_step": (float, _positive, "step of the broadening grid and of the background scan (Hz)"),
        "floor_fraction": (float, _nonneg, "technical floor as a fraction of the on-resonance background"),
        "operating_point": (float, None, "detuning of the operating point (Hz)"),
        "dual_rail": (bool, None, "double the background for two-rail qubits"),
        "transmission_table": (str, None, "optional measured transmission table (path or empty)"),
    },
    "filter": {
        "r": (float, _open_unit, "etalon mirror reflectivity"),
        "a": (float, lambda x: 0 <= x < 1, "etalon loss"),
        "fsr": (float, _positive, "free spectral range of etalon 1 (Hz)"),
        "fsr2": (float, _positive, "free spectral range of etalon 2 (Hz)"),
        "stokes_offset": (float, None, "Stokes carrier offset from the probe (Hz)"),
        "scatter_linewidth": (float, _positive, "emission linewidth of the scatter field (Hz)"),
        "stokes_linewidth": (float, _positive, "emission linewidth of the Stokes field (Hz)"),
        "resolution": (float, _positive, "photon-frequency grid step (Hz)"),
        "span": (float, _positive, "half-width of each emission line window (Hz)"),
        "scan_delta": (float, None, "laser detuning used by the etalon scan (Hz)"),
    },
    "qubit": {
        "intrinsic_fidelity": (float, lambda x: 0.5 <= x <= 1, "background-free fidelity"),
        "sbr": (float, None, "signal-to-background ratio; negative means use the model"),
        "noise_free_suppression": (float, lambda x: x >= 1, "background suppression of the noise-free window"),
        "mean_photons": (float, _positive, "mean photon number for the classical thresholds"),
        "efficiency": (float, _unit, "efficiency for the classical thresholds"),
        "rotation_deg": (float, None, "polarisation rotation of the simulated channel (deg)"),
        "noise": (float, _nonneg, "standard deviation of Stokes measurement noise"),
    },
    "lifetime": {
        "points": (str, None, "comma-separated time:efficiency pairs"),
    },
}


def parse_value(section: str, key: str, raw: str, line=None):
    kind, check, _ = SCHEMA[section][key]
    try:
        if kind is bool:
            value = parse_bool(raw)
        elif kind is int:
            f = float(raw)
            if f != int(f):
                raise ValueError(raw)
            value = int(f)
        elif kind is float:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(raw)
        else:
            value = raw.strip()
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {kind.__name__}", line) from None
    if check is not None and not check(value):
        raise RangeError(f"{section}.{key} = {raw!r} is out of range ({SCHEMA[section][key][2]})", line)
    return value


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def all_keys() -> list:
    return [f"{s}.{k}" for s, keys in SCHEMA.items() for k in keys]


def check_key(section: str, key: str, line=None) -> None:
    if section not in SCHEMA:
        hint = nearest(section, list(SCHEMA))
        raise UnknownKeyError(f"unknown section [{section}]" + (f"; did you mean [{hint}]?" if hint else ""), line)
    if key not in SCHEMA[section]:
        hint = nearest(key, list(SCHEMA[section])) or nearest(f"{section}.{key}", all_keys())
        raise UnknownKeyError(
            f"unknown key {key!r} in [{section}]" + (f"; did you mean {hint!r}?" if hint else ""), line
        )


DEFAULT_CALIBRATION = "calibration.ini"


@dataclass(frozen=True)
class Calibration:
    """Validated calibration values plus provenance (path, version, hash)."""

    values: dict
    source: str
    sha256: str

    @property
    def version(self) -> str:
        return self.values["calibration"]["version"]

    def get(self, dotted: str):
        section, key = dotted.split(".", 1)
        return self.values[section][key]

    def with_overrides(self, overrides) -> "Calibration":
        values = {s: dict(v) for s, v in self.values.items()}
        for dotted, value in overrides:
            section, key = dotted.split(".", 1)
            values[section][key] = value
        return Calibration(values, self.source, self.sha256)

    # -- derived objects --------------------------------------------------

    def atom(self) -> AtomFieldParams:
        a = dict(self.values["atom"])
        sym = a.pop("symmetric_ground_decay")
        try:
            return AtomFieldParams.from_hz(symmetric_ground_decay=sym, **a)
        except ValueError as exc:
            raise RangeError(str(exc)) from None

    def medium(self, params: AtomFieldParams | None = None) -> MediumGrid:
        m = self.values["medium"]
        params = params or self.atom()
        return MediumGrid.from_optical_depth(m["optical_depth"], params, m["length"], m["n_slices"],
                                             m["stokes_ratio"], m["collection"])

    def protocol(self) -> StorageProtocol:
        p = self.values["protocol"]
        try:
            return StorageProtocol.standard(
                storage_time=p["storage_time"], pulse_fwhm=p["pulse_fwhm"],
                retrieval_window=p["retrieval_window"], dt=p["dt"], edge=p["edge"],
                write_offset=p["write_offset"], control_amplitude=p["control_amplitude"],
                photons=p["photons"],
            )
        except ValueError as exc:
            raise RangeError(f"protocol: {exc}") from None

    def velocity(self) -> VelocityDistribution:
        return VelocityDistribution(self.values["room_temperature"]["w_d"])

    def transmission_model(self):
        rt = self.values["room_temperature"]
        table = rt["transmission_table"]
        if table:
            from ..spectral import load_transmission_table
            return load_transmission_table(table)
        return TransmissionModel((
            AbsorptionLine(0.0, rt["line1_od"], rt["line_width"]),
            AbsorptionLine(-rt["splitting"], rt["line2_od"], rt["line_width"]),
        ))

    def cascade(self, swap_fsr: float | None = None) -> list:
        f = self.values["filter"]
        second = f["fsr2"] if swap_fsr is None else swap_fsr
        return [EtalonParams(f["r"], f["a"], f["fsr"]), EtalonParams(f["r"], f["a"], second)]


def _read_text(path) -> tuple:
    if path is None:
        text = resources.files("eitmemory.data").joinpath(DEFAULT_CALIBRATION).read_text(encoding="utf-8")
        return text, f"<package>/{DEFAULT_CALIBRATION}"
    p = Path(path)
    try:
        return p.read_text(encoding="utf-8"), str(p)
    except OSError as exc:
        raise ConfigError(f"cannot read calibration file {p}: {exc.strerror or exc}") from None


def load_calibration(path=None) -> Calibration:
    """Read and validate a calibration file; every schema key must be present."""
    text, source = _read_text(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}", error_line(exc)) from None
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            check_key(section, key, locate(text, section, key))
            values.setdefault(section, {})[key] = parse_value(section, key, raw, locate(text, section, key))
    missing = [f"{s}.{k}" for s, keys in SCHEMA.items() for k in keys if k not in values.get(s, {})]
    if missing:
        raise ConfigError(f"{source}: calibration is missing {', '.join(missing)}")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return Calibration(values, source, digest)
