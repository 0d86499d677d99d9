"""riosim: a deterministic simulator of ordered writes over a storage fabric."""

from .cluster import Cluster, ClusterConfig, rio_setup
from .core import OrderingAttribute, WriteRequest, decode_attr, encode_attr
from .sequencer import ConnectionLost, SetupError

__all__ = [
    "Cluster",
    "ClusterConfig",
    "ConnectionLost",
    "OrderingAttribute",
    "SetupError",
    "WriteRequest",
    "decode_attr",
    "encode_attr",
    "rio_setup",
]

__version__ = "0.1.0"
