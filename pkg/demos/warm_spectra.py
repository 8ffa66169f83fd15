"""Doppler broadening, line composition and etalon filtering on toy spectra.

    python3 demos/warm_spectra.py
"""

import numpy as np

from eitmemory import spectral
from eitmemory.spectral import EtalonParams, SpectralCurve, VelocityDistribution

dist = VelocityDistribution(960e6)
step = 25e6
deltas = np.arange(-6e9, 6e9 + step / 2, step)

# a narrow cold feature at +300 MHz smeared out by the velocity distribution
cold = SpectralCurve.from_grid(deltas, np.exp(-0.5 * ((deltas - 300e6) / 50e6) ** 2))
warm = spectral.broaden(cold, dist)
print(f"cold FWHM {spectral.fwhm(cold) / 1e6:.0f} MHz -> warm FWHM {spectral.fwhm(warm) / 1e6:.0f} MHz")
print(f"area kept: {warm.integral() / cold.integral():.4f}")

# the same response, now with a second hyperfine line 814.5 MHz below
both = spectral.room_temperature_values(cold, [0.0, 300e6, -514.5e6], dist, splitting=814.5e6, weight2=1.0)
print("two-line response at 0, +300, -514.5 MHz:", np.round(both, 5))

# vapour transmission of the default two-line model
model = spectral.TransmissionModel()
for d in (-814.5e6, 0.0, 250e6, 600e6, 1500e6):
    print(f"T_RT({d / 1e6:+7.1f} MHz) = {float(model(np.array([d]))[0]):.3f}")

# the filter etalon
e = EtalonParams(r=0.9955, a=2e-4, fsr=13.6e9)
print(f"etalon FWHM {spectral.etalon_fwhm(e) / 1e6:.2f} MHz, peak {spectral.etalon_transmission(0.0, e):.6f}")
matched = spectral.cascade_transmission([e, e], 13.6e9)
detuned = spectral.cascade_transmission([e, EtalonParams(0.9955, 2e-4, 13.6e9 / 1.5)], 13.6e9)
print(f"Stokes line through the cascade: {matched:.3f} with equal FSRs, "
      f"{detuned:.2e} with the second FSR at 9.07 GHz")
