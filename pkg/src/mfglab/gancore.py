"""Two-sample minimax objectives on finite grids, computed exactly.

Everything here works with densities supported on finitely many atoms
(arbitrary hashable labels), where the classifier game has closed-form
answers: the optimal discriminator is the likelihood ratio pr/(pr+pg),
the value at the optimum is -log 4 plus twice the Jensen-Shannon
divergence, and with matched samples the empirical game value is exactly
-log 4.  Natural logarithms throughout.
"""

from dataclasses import dataclass

import numpy as np

MASS_TOL = 1e-12
LOG4 = float(np.log(4.0))


@dataclass(frozen=True)
class GridDensity:
    """Probability masses on a finite atom set.

    Atoms are hashable labels; masses must be nonnegative and sum to one
    within 1e-12 (zero-mass atoms are allowed and kept).
    """

    atoms: tuple
    masses: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        masses = np.asarray(self.masses, dtype=np.float64)
        object.__setattr__(self, "masses", masses)
        if len(self.atoms) != masses.shape[0] or masses.ndim != 1:
            raise ValueError("atoms and masses must have matching length")
        if len(set(self.atoms)) != len(self.atoms):
            raise ValueError("duplicate atoms")
        if np.any(masses < 0.0):
            raise ValueError("negative mass")
        if abs(masses.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {masses.sum()!r}, not 1")

    def mass(self, atom):
        try:
            return float(self.masses[self.atoms.index(atom)])
        except ValueError:
            return 0.0

    @classmethod
    def uniform(cls, atoms):
        atoms = tuple(atoms)
        n = len(atoms)
        return cls(atoms, np.full(n, 1.0 / n))

    @classmethod
    def from_weights(cls, atoms, weights):
        """Normalize nonnegative weights into a density."""
        w = np.asarray(weights, dtype=np.float64)
        total = w.sum()
        if total <= 0.0:
            raise ValueError("weights must have positive total mass")
        return cls(tuple(atoms), w / total)

    @classmethod
    def from_samples(cls, samples):
        """Empirical density: counts over the sample multiset."""
        samples = list(samples)
        if not samples:
            raise ValueError("empty sample")
        atoms = sorted(set(samples), key=repr)
        counts = np.array([samples.count(a) for a in atoms], dtype=np.float64)
        return cls(tuple(atoms), counts / len(samples))


@dataclass(frozen=True)
class DiscriminatorTable:
    """Classifier scores in [0, 1] per atom, with an optional off-table default."""

    scores: dict
    default: float | None = None

    def __post_init__(self):
        scores = dict(self.scores)
        object.__setattr__(self, "scores", scores)
        for atom, s in scores.items():
            if not (0.0 <= s <= 1.0):
                raise ValueError(f"score {s!r} at atom {atom!r} outside [0, 1]")
        if self.default is not None and not (0.0 <= self.default <= 1.0):
            raise ValueError("default score outside [0, 1]")

    def score(self, atom):
        if atom in self.scores:
            return self.scores[atom]
        if self.default is None:
            raise KeyError(f"discriminator has no score for atom {atom!r}")
        return self.default


def _support_union(pr, pg):
    atoms = list(pr.atoms)
    seen = set(pr.atoms)
    for a in pg.atoms:
        if a not in seen:
            atoms.append(a)
            seen.add(a)
    return atoms


def gan_value(disc, pr, pg):
    """Exact game value sum_x pr(x) log d(x) + pg(x) log(1 - d(x)).

    Zero-mass terms contribute nothing (0 log 0 = 0); positive mass
    hitting log 0 is an error because the value is -infinity there.
    """
    total = 0.0
    for atom in _support_union(pr, pg):
        d = disc.score(atom)
        wr = pr.mass(atom)
        wg = pg.mass(atom)
        if wr > 0.0:
            if d == 0.0:
                raise ValueError(f"d=0 on atom {atom!r} with pr>0: value is -inf")
            total += wr * np.log(d)
        if wg > 0.0:
            if d == 1.0:
                raise ValueError(f"d=1 on atom {atom!r} with pg>0: value is -inf")
            total += wg * np.log1p(-d)
    return float(total)


def optimal_discriminator(pr, pg):
    """Likelihood-ratio classifier pr/(pr+pg); 1/2 where both masses vanish."""
    scores = {}
    for atom in _support_union(pr, pg):
        wr, wg = pr.mass(atom), pg.mass(atom)
        scores[atom] = 0.5 if wr + wg == 0.0 else wr / (wr + wg)
    return DiscriminatorTable(scores, default=0.5)


def js_divergence(pr, pg):
    """Jensen-Shannon divergence in nats, with the 0 log 0 = 0 convention."""
    total = 0.0
    for atom in _support_union(pr, pg):
        wr, wg = pr.mass(atom), pg.mass(atom)
        mid = 0.5 * (wr + wg)
        if wr > 0.0:
            total += 0.5 * wr * np.log(wr / mid)
        if wg > 0.0:
            total += 0.5 * wg * np.log(wg / mid)
    return float(total)


def empirical_discriminator(real_samples, gen_samples):
    """Count-ratio classifier from two sample multisets.

    Score at x is (c_r/M) / (c_r/M + c_g/N) with c_r, c_g the occurrence
    counts; atoms seen in neither sample get the uninformative 1/2.
    """
    real = list(real_samples)
    gen = list(gen_samples)
    if not real or not gen:
        raise ValueError("both samples must be nonempty")
    scores = {}
    for atom in set(real) | set(gen):
        fr = real.count(atom) / len(real)
        fg = gen.count(atom) / len(gen)
        scores[atom] = fr / (fr + fg)
    return DiscriminatorTable(scores, default=0.5)


def nplayer_cost(real_samples, gen_samples):
    """Generator-side cost of the finite-sample game at the best response.

    The empirical discriminator is plugged into the game value over the
    two empirical measures; terms with zero mass are dropped, so atoms
    private to one sample contribute that sample's log term only.  The
    cost equals -log 4 exactly iff the two multisets coincide, and exceeds
    it otherwise (by twice the Jensen-Shannon divergence between the
    empirical measures).
    """
    pr = GridDensity.from_samples(real_samples)
    pg = GridDensity.from_samples(gen_samples)
    return gan_value(empirical_discriminator(real_samples, gen_samples), pr, pg)
