"""kappaselect: a kappa-gated dual-review workbench for study selection.

Two reviewers screen batches of studies in parallel until their chance-
corrected agreement (Cohen's kappa) exceeds a gate, refining the selection
criteria after every round; from then on the remaining studies are split and
reviewed singly, roughly halving the remaining effort.
"""

from .agreement import (
    AgreementBand,
    AgreementReport,
    ContingencyTable,
    Verdict,
    agreement_report,
    cohen_kappa,
    tabulate,
)
from .errors import DomainError, KappaSelectError, StoreCorruption
from .protocol import Phase, ReviewSession, SessionConfig, Study

__version__ = "0.1.0"

__all__ = [
    "AgreementBand",
    "AgreementReport",
    "ContingencyTable",
    "DomainError",
    "KappaSelectError",
    "Phase",
    "ReviewSession",
    "SessionConfig",
    "StoreCorruption",
    "Study",
    "Verdict",
    "__version__",
    "agreement_report",
    "cohen_kappa",
    "tabulate",
]
