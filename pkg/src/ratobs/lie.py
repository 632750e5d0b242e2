"""Lie derivatives along the system field and the chain s_1, s_2, ...

Entry ``k`` (0-based) of a chain is ``L_f^(k // m_y) h_(k % m_y)``: the
outputs first, then their first derivatives along f, and so on.
"""

from dataclasses import dataclass

from .errors import ResourceExceeded

DEFAULT_TERM_CEILING = 20_000


def lie_derivative(g, sys, term_ceiling=DEFAULT_TERM_CEILING):
    """``sum_j dg/dx_j * f_j``, exact and normalized."""
    total = g * 0
    for xj, fj in zip(sys.state_vars, sys.f):
        if xj not in g.variables():
            continue
        total = total + g.partial(xj) * fj
        if total.term_count() > term_ceiling:
            raise ResourceExceeded(
                f"Lie derivative exceeds {term_ceiling} terms")
    return total


@dataclass(frozen=True)
class SChain:
    """The first ``m`` blocks of output derivatives, flattened."""

    sys: object
    entries: tuple
    term_ceiling: int = DEFAULT_TERM_CEILING

    @property
    def m(self):
        return len(self.entries) // self.sys.m_y

    @property
    def n_o(self):
        return len(self.entries)

    def block(self, k):
        """Entries of block ``k`` (1-based): L_f^(k-1) h."""
        my = self.sys.m_y
        return self.entries[(k - 1) * my:k * my]

    def extended(self, m):
        """A chain of order ``m`` reusing the entries computed so far."""
        my = self.sys.m_y
        entries = list(self.entries[:m * my])
        while len(entries) < m * my:
            entries.append(lie_derivative(entries[len(entries) - my], self.sys,
                                          self.term_ceiling))
        return SChain(self.sys, tuple(entries), self.term_ceiling)

    def next_block(self):
        """The block after the last one, i.e. L_f applied to the last block."""
        return self.extended(self.m + 1).block(self.m + 1)


def build_s_chain(sys, m, prior=None, term_ceiling=DEFAULT_TERM_CEILING):
    """Chain of order ``m`` for ``sys``; ``prior`` (same system) is reused."""
    if m < 1:
        raise ValueError("chain order must be at least 1")
    if prior is None:
        prior = SChain(sys, tuple(sys.h), term_ceiling)
    elif prior.sys is not sys:
        raise ValueError("prior chain belongs to a different system")
    return prior.extended(m)


def chain_text(chain):
    """Stable text listing, one ``s_k = ...`` line per entry."""
    return "\n".join(f"s{k} = {g}" for k, g in enumerate(chain.entries, 1))
