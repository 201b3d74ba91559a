"""Weighted-sum quantum walk oracle on top of QAOA, simulated exactly.

Modules:

* :mod:`qawa.simcore` -- statevector engine, gates, measurement, seeded RNG
* :mod:`qawa.problem` -- price ingestion, portfolio QUBO and Ising mapping
* :mod:`qawa.qaoa` -- QAOA ansatz and parameter optimization
* :mod:`qawa.arith` -- weighted-sum blocks, cascades, SELU encoding, angle recovery
* :mod:`qawa.oracle` -- coin-mixed oracle, training, posterior and post-selected energy
* :mod:`qawa.copula` -- empirical and Gaussian copulas, KL and grid distances
* :mod:`qawa.distlearn` -- local inversions and partitioned correlation learning
* :mod:`qawa.metrics` -- fidelity metrics, resource counts, validation report
* :mod:`qawa.experiments` -- scripted experiments and CSV emission
* :mod:`qawa.cli` -- the ``qawa`` command
"""

from .errors import InputError, NumericalError, QawaError
from .simcore import RngStream, StateVector

__version__ = "0.1.0"

__all__ = ["InputError", "NumericalError", "QawaError", "RngStream", "StateVector", "__version__"]
