"""Service layer: wire schemas, request handlers, and the HTTP app."""

from .handlers import ServiceError

__all__ = ["ServiceError"]
