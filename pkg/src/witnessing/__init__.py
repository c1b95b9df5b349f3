"""On-demand witnessing of wireless sensor data.

Witnesses that overhear a sensor commit its packets into bloom-filter
statements; the healthcare provider buys statements from a budgeted
selection of witnesses through a smart contract and checks the data it
received against them.
"""

from .bloom import BloomFilter, BloomParams, MembershipResult, params_from_error, theoretical_fpr
from .errors import (
    CapacityError,
    CoverageError,
    DomainError,
    SpecError,
    StatementNotFound,
    TraceFormatError,
    WitnessingError,
)
from .ledger import GasSchedule, Ledger, Phase, Role, gas_cost_cents
from .select import (
    SelectionResult,
    TwoClassMarket,
    WitnessOffer,
    budget_sweep,
    select_general,
    select_max_spend,
    select_two_class,
    witness_cost,
)
from .statement import WitnessStatement, build_statements, plan_statements, statement_covering
from .verify import verification_probability, verify_epoch, verify_packet

__version__ = "0.1.0"

__all__ = [
    "BloomFilter", "BloomParams", "MembershipResult", "params_from_error", "theoretical_fpr",
    "CapacityError", "CoverageError", "DomainError", "SpecError", "StatementNotFound",
    "TraceFormatError", "WitnessingError",
    "GasSchedule", "Ledger", "Phase", "Role", "gas_cost_cents",
    "SelectionResult", "TwoClassMarket", "WitnessOffer", "budget_sweep", "select_general",
    "select_max_spend", "select_two_class", "witness_cost",
    "WitnessStatement", "build_statements", "plan_statements", "statement_covering",
    "verification_probability", "verify_epoch", "verify_packet",
]
