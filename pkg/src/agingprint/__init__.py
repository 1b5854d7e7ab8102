"""Aging fingerprints of lithium-ion cells from routine discharge logs.

Pipeline: parse and resample discharge segments (:mod:`ingest`), identify the
per-cycle resistances ``(R_dyn, R_W)`` of a fractional-order circuit model
(:mod:`physics`, :mod:`identify`), estimate SoH with a recurrent network
(:mod:`soh`) and map the fingerprints onto monotone SoH curves with a lookup
table (:mod:`mapping`). :mod:`synth` generates labelled test data.
"""

__version__ = "0.1.0"
