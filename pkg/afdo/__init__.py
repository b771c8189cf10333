# The MIT License (MIT)
#
# Copyright (c) 2026 The afdo developers
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in
# all copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN
# THE SOFTWARE.
"""
`afdo`
================================================================================

Autonomous FAIR Digital Objects: typed records carrying their own policies,
event interfaces and trust state, a trimmed weighted consensus for
conflicting interpretations, and the analysis tooling around them.

Implementation Notes
--------------------

**Software and Dependencies:**

* numpy for seeded random streams
* scipy for the two-sample Kolmogorov-Smirnov statistic
* rdflib for reading Turtle policy documents
"""

import logging

from afdo.consensus import ConsensusConfig, ConsensusOutcome, aggregate, trimmed_weighted_mean
from afdo.core_model import (
    AFDOError,
    AFDORecord,
    Classification,
    ConflictRecord,
    FDORecord,
    Submission,
    SubmitterCategory,
)
from afdo.events import Event, EventBus, EventKind, SubscriptionFilter
from afdo.policy import Policy, PolicyEngine, parse_policy, serialise_policy
from afdo.trust import AuditLog, TrustParameters, TrustState, apply_trust_event

__version__ = "0.0.0-auto.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
