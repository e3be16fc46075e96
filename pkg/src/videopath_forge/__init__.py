"""videopath-forge: pathology video curation, instruction generation,
stage-plan compilation, and LLM-judge evaluation."""

__version__ = "0.1.0"
