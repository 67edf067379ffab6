"""Flow-level SDN network simulator with federated deep-RL routing."""

__version__ = "0.1.0"

from .topology import (  # noqa: F401
    Link,
    Path,
    Topology,
    TopologyError,
    builtin_topology,
    enumerate_paths,
    load_topology,
    save_topology,
    shortest_path,
)
