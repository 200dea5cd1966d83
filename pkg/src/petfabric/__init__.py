"""petfabric: a configurable privacy layer for broker-based IoT telemetry.

Fixed-point encoding, local/global differential privacy, (m, m) additive
secret sharing, adversary simulations, and a latency-modeled in-process
pub/sub fabric for reproducing privacy/utility/latency trade-off benchmarks.
"""

from . import adversary, ass, codec, dp, fabric, scenarios

__version__ = "0.1.0"

__all__ = ["adversary", "ass", "codec", "dp", "fabric", "scenarios", "__version__"]
