"""Self-training experiments: configuration, orchestration, manifests, reports and the toy task."""

from . import pipeline_config, pipeline_manifest, pipeline_report, pipeline_service, toy_task

__all__ = ["pipeline_config", "pipeline_manifest", "pipeline_report", "pipeline_service", "toy_task"]
