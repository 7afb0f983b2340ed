"""Goal-planned multi-type dialog: a planner that decides when to push the
conversation toward a recommendation, plus retrieval and generation
responders grounded in a knowledge graph."""

__version__ = "0.1.0"
