"""HTTP bindings: FastAPI apps for the registry and broker, and httpx
clients that mirror the in-process method signatures."""

from .api import create_broker_app, create_registry_app
from .clients import BrokerClient, RegistryClient

__all__ = ["create_broker_app", "create_registry_app",
           "BrokerClient", "RegistryClient"]
