"""Store and retrieve a single-photon-level pulse in a cold (motionless) column.

Runs one propagation at the calibrated settings, then repeats it with the
control switched off, and prints where the light ends up.

    python3 demos/cold_storage.py
"""

import numpy as np

from eitmemory.core import TWO_PI
from eitmemory.harness.params import load_calibration
from eitmemory.propagation import propagate

cal = load_calibration()
params = cal.atom()
medium = cal.medium(params)
protocol = cal.protocol()
start, stop = protocol.roi
print(f"calibration {cal.version}: {medium.n_slices} slices, retrieval window {start * 1e9:.0f}-{stop * 1e9:.0f} ns")

for delta in (0.0, 250e6, 600e6):
    res = propagate(protocol, medium, params.detuned(TWO_PI * delta))
    leak = res.probe_out.energy(None, protocol.control.write_end) / res.probe_in.energy()
    print(f"delta {delta / 1e6:+5.0f} MHz  eta {res.efficiency:.4f}  leaked {leak:.4f}  "
          f"scatter {res.background_photons['scatter']:.2e}  stokes {res.background_photons['stokes']:.2e}")

# without the control there is no transparency and nothing comes back
off = propagate(protocol.without_control(), medium, params)
print(f"control off: eta {off.efficiency:.1e}")

# coarse picture of the output intensity on resonance
res = propagate(protocol, medium, params)
t = res.probe_out.times
i_out = res.probe_out.intensity
for lo in np.arange(t[0], t[-1], 200e-9):
    sel = (t >= lo) & (t < lo + 200e-9)
    bar = "#" * int(60 * i_out[sel].mean() / i_out.max())
    print(f"{lo * 1e9:7.0f} ns |{bar}")
