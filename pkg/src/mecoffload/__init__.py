"""Delay-constrained, energy-minimal computation offloading in a multi-AP edge network."""

from .scenario import ScenarioConfig, generate_deployment, load_config

__version__ = "0.1.0"
__all__ = ["ScenarioConfig", "generate_deployment", "load_config", "__version__"]
