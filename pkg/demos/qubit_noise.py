"""Polarisation-qubit fidelity under unpolarised background, and the storage lifetime.

    python3 demos/qubit_noise.py
"""

import numpy as np

from eitmemory import noise

for sbr in (1.0, 2.9, 3.7, 10.0, 25.0):
    f = noise.sbr_to_fidelity(sbr)
    report = noise.fidelity_report(round(f, 3))
    print(f"SBR {sbr:5.1f}: F = {f:.4f}  margin over intercept-resend {report.vs_intercept_resend:+.3f}, "
          f"over the non-unitary bound {report.vs_nonunitary_bound:+.3f}")

# a stored basis state with background, then measured in a rotated frame
rng = np.random.default_rng(1)
rot = noise.rotation_matrix([1, 1, 1], np.deg2rad(35))
inputs = list(noise.BASIS_STATES.values())
outputs = []
for s in inputs:
    v = rot @ noise.depolarize(s, 2.9).as_array() + rng.normal(scale=0.01, size=3)
    outputs.append(noise.StokesVector.from_array(v / max(1.0, np.linalg.norm(v))))
raw = np.mean([noise.fidelity(a, b) for a, b in zip(inputs, outputs)])
aligned = noise.align_frames(inputs, outputs)
print(f"mean fidelity before frame alignment {raw:.3f}, after {aligned.mean_fidelity:.3f}")

fit = noise.lifetime_fit([(1e-6, 0.11), (14e-6, 0.056), (28e-6, 0.031), (42e-6, 0.011)])
print(f"coherence time {fit.tau_c * 1e6:.1f} us, extrapolated eta(0) = {fit.eta0:.3f}")
