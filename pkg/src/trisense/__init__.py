"""trisense: tri-modal (visual / audio / olfactory) rendering-budget toolkit.

Subpackages:
  psychometric  psychometric-function families, ML fitting, bootstrap, GOF
  staircase     adaptive 2IFC discrimination protocol and Weber-law planning
  transport     finite-volume odour transport simulation and cost ratios
  costs         quality ladders, budget catalogue, smell cost tables
  allocation    budget-to-allocation regression models
  session       allocation-trial state machine, event log, persistence
  service       HTTP+JSON API over sessions for the browser UI
"""

__version__ = "0.1.0"

from . import allocation, costs, psychometric, session, staircase, transport

__all__ = ["allocation", "costs", "psychometric", "session", "staircase",
           "transport", "__version__"]
