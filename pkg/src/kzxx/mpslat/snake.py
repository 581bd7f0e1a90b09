"""Row-major boustrophedon ordering of a finite square lattice onto a chain."""
from __future__ import annotations

from dataclasses import dataclass

from ..model import Lattice


@dataclass(frozen=True)
class SnakeMap:
    """Chain order: row 0 left to right, row 1 right to left, and so on.

    Horizontal bonds become chain neighbours; vertical bonds span up to
    ``2 * cols - 1`` chain sites.
    """

    lattice: Lattice

    def chain_index(self, y: int, x: int) -> int:
        cols = self.lattice.cols
        return y * cols + (x if y % 2 == 0 else cols - 1 - x)

    def chain_of_site(self, j: int) -> int:
        return self.chain_index(*self.lattice.coords(j))

    def site_of_chain(self, c: int) -> int:
        cols = self.lattice.cols
        y, r = divmod(c, cols)
        x = r if y % 2 == 0 else cols - 1 - r
        return self.lattice.site(y, x)

    def bond_pairs(self) -> list:
        """Chain pairs ``(i, j)``, ``i < j``, one per lattice bond."""
        out = []
        for a, b in self.lattice.bonds():
            i, j = self.chain_of_site(a), self.chain_of_site(b)
            out.append((min(i, j), max(i, j)))
        return out

    def staggering(self) -> list:
        """Staggered field sign of each chain site."""
        return [self.lattice.stagger(self.site_of_chain(c)) for c in range(self.lattice.n_sites)]
