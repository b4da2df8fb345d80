"""Change-level defect prediction lab.

Pipeline: mine a git history, link issues to bug-fixing changes, trace
candidate bug-introducing changes via blame, compute change properties,
apply curated labels and corpus filters, fit spline logistic models per
period, and evaluate discrimination/calibration/importance over time.
"""

__version__ = "0.1.0"
