from .categories import Decision, Priority, RuleProfile
from .errors import GovernanceError

__version__ = "0.1.0"
__all__ = ["Decision", "GovernanceError", "Priority", "RuleProfile", "__version__"]
