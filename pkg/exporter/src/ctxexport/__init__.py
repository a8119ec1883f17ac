"""CTXV1 context-vector export from pretrained masked-language models."""

from .export import ExportError, ExportJob, run_export

__all__ = ["ExportError", "ExportJob", "run_export"]
