"""gazegoal: decode text-specific information-seeking goals from eye
movements in reading.

Pipeline: ingest fixation reports -> build leakage-safe 10-fold splits ->
embed stimuli -> run similarity baselines or train candidate-question
scorers -> evaluate goal selection and goal reconstruction -> export
analysis tables.
"""

__version__ = "0.1.0"
