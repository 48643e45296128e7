"""Scanner and locator agents: interfaces, oracles, remote backends and replay."""

from scanloc.agents.base import (
    AgentError,
    BackendError,
    ConfigurationError,
    ImagePayload,
    LocatorAgent,
    LocatorError,
    ScannerAgent,
)
from scanloc.agents.oracle import (
    ORACLE_PRESETS,
    OracleConfig,
    OracleError,
    OracleLocator,
    OracleScanner,
    oracle_agents,
)
from scanloc.agents.remote import BackendConfig, ChatClient, RemoteLocator, RemoteScanner, TokenBucket
from scanloc.agents.replay import ReplayError, ReplayLocator, ReplayScanner

__all__ = [
    "AgentError",
    "BackendConfig",
    "BackendError",
    "ChatClient",
    "ConfigurationError",
    "ImagePayload",
    "LocatorAgent",
    "LocatorError",
    "ORACLE_PRESETS",
    "OracleConfig",
    "OracleError",
    "OracleLocator",
    "OracleScanner",
    "RemoteLocator",
    "RemoteScanner",
    "ReplayError",
    "ReplayLocator",
    "ReplayScanner",
    "ScannerAgent",
    "TokenBucket",
    "oracle_agents",
]
