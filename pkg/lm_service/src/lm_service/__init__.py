"""Masked-LM scoring service speaking the ontocloze wire protocol."""

from lm_service.service import MaskedLmService, ServiceConfig, ServiceError

__all__ = ["MaskedLmService", "ServiceConfig", "ServiceError"]

__version__ = "0.1.0"
