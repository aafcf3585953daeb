"""Artifact backends for qlaplab reports and tables."""
from ..base import ArtifactBackend
from .artifacts import ArtifactStore, SCHEMA_VERSION, report_envelope, versions

__all__ = [
    'ArtifactBackend',
    'ArtifactStore',
    'SCHEMA_VERSION',
    'report_envelope',
    'versions',
]
