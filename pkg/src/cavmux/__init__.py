"""Simulator for cavity-enhanced spectroscopy of single dopants in a thin membrane.

Modules: ``cavity`` (resonator arithmetic), ``emitters`` (ensemble sampling),
``noise`` (spectral diffusion and cavity jitter), ``dynamics`` (Bloch
propagation), ``detection`` (click streams), ``analysis`` (estimators and
fits), ``protocols`` (end-to-end experiments) and ``cli`` (``simtool``).
"""

__version__ = "0.1.0"
