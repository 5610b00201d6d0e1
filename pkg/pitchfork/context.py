"""Context-Local state.

.. data:: tolerances

   Current tolerances.
"""

from __future__ import annotations

from contextvars import ContextVar
import typing

if typing.TYPE_CHECKING:
    from .criteria import Tolerances

tolerances: ContextVar[Tolerances] = ContextVar('tolerances')
