"""
Translation Edit Rate with block shifts.

Hypothesis tokens are edited into the reference. Link kinds follow the
hypothesis side: ``ins`` marks a hypothesis token with no reference
counterpart, ``del`` a reference token missing from the hypothesis.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Set, Tuple
import heapq
import itertools

MATCH = "match"
SUB = "sub"
INS = "ins"
DEL = "del"

# tercom search limits
MAX_SHIFT_SIZE = 10
MAX_SHIFT_DIST = 50


@dataclass(frozen=True)
class Link:
    """One alignment link; ``hyp``/``ref`` are None on the gap side."""
    hyp: Optional[int]
    ref: Optional[int]
    kind: str


@dataclass
class EditTrace:
    """Result of a TER alignment; ``moves`` lists the applied shifts as (start, size, dest)."""
    insertions: int
    deletions: int
    substitutions: int
    shifts: int
    alignment: List[Link] = field(default_factory=list)
    moves: List[Tuple[int, int, int]] = field(default_factory=list)
    ref_len: int = 0

    @property
    def num_edits(self) -> int:
        return self.insertions + self.deletions + self.substitutions + self.shifts

    @property
    def score(self) -> float:
        return self.num_edits / self.ref_len

    def link_tallies(self) -> Dict[str, int]:
        """Count links per kind."""
        tallies = {MATCH: 0, SUB: 0, INS: 0, DEL: 0}
        for link in self.alignment:
            tallies[link.kind] += 1
        return tallies


def _distance_table(hyp: Sequence[str], ref: Sequence[str]) -> List[List[int]]:
    n, m = len(hyp), len(ref)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        table[i][0] = i
    for j in range(1, m + 1):
        table[0][j] = j
    for i in range(1, n + 1):
        row, prev = table[i], table[i - 1]
        h = hyp[i - 1]
        for j in range(1, m + 1):
            cost = 0 if h == ref[j - 1] else 1
            row[j] = min(prev[j - 1] + cost, prev[j] + 1, row[j - 1] + 1)
    return table


def edit_distance(hyp: Sequence[str], ref: Sequence[str]) -> int:
    """Plain Levenshtein distance over tokens."""
    if not hyp:
        return len(ref)
    if not ref:
        return len(hyp)
    prev = list(range(len(ref) + 1))
    for i, h in enumerate(hyp, 1):
        row = [i] + [0] * len(ref)
        for j, r in enumerate(ref, 1):
            row[j] = min(prev[j - 1] + (h != r), prev[j] + 1, row[j - 1] + 1)
        prev = row
    return prev[-1]


def levenshtein(hyp: Sequence[str], ref: Sequence[str]) -> Tuple[int, List[Link]]:
    """Levenshtein distance with a deterministic alignment.

    The backtrace runs from the end and prefers a hypothesis-side gap, then a
    reference-side gap, then the diagonal, so that of two equal candidate
    tokens the leftmost one is matched.

    Args:
        hyp: Hypothesis tokens
        ref: Reference tokens

    Returns:
        Tuple of (distance, links in left-to-right order)
    """
    table = _distance_table(hyp, ref)
    links: List[Link] = []
    i, j = len(hyp), len(ref)
    while i > 0 or j > 0:
        here = table[i][j]
        if i > 0 and table[i - 1][j] + 1 == here:
            links.append(Link(i - 1, None, INS))
            i -= 1
        elif j > 0 and table[i][j - 1] + 1 == here:
            links.append(Link(None, j - 1, DEL))
            j -= 1
        else:
            kind = MATCH if hyp[i - 1] == ref[j - 1] else SUB
            links.append(Link(i - 1, j - 1, kind))
            i -= 1
            j -= 1
    links.reverse()
    return table[len(hyp)][len(ref)], links


def _ref_spans(ref: Sequence[str], max_size: int) -> Set[Tuple[str, ...]]:
    spans = set()
    for start in range(len(ref)):
        for size in range(1, min(max_size, len(ref) - start) + 1):
            spans.add(tuple(ref[start:start + size]))
    return spans


def _move(tokens: List, start: int, size: int, dest: int) -> List:
    """Move tokens[start:start+size] so it begins at ``dest`` of the remainder."""
    block = tokens[start:start + size]
    rest = tokens[:start] + tokens[start + size:]
    return rest[:dest] + block + rest[dest:]


def _best_shift(hyp: List[str], ref: Sequence[str], dist: int, links: List[Link],
                ref_spans: Set[Tuple[str, ...]]) -> Optional[Tuple[int, int, int, int]]:
    misaligned = {link.hyp for link in links if link.hyp is not None and link.kind != MATCH}
    if not misaligned:
        return None
    best_key = None
    best = None
    n = len(hyp)
    for start in range(n):
        for size in range(1, min(MAX_SHIFT_SIZE, n - start) + 1):
            span = tuple(hyp[start:start + size])
            if span not in ref_spans:
                break
            if not any(pos in misaligned for pos in range(start, start + size)):
                continue
            for dest in range(n - size + 1):
                if dest == start or abs(dest - start) > MAX_SHIFT_DIST:
                    continue
                candidate = _move(hyp, start, size, dest)
                gain = dist - edit_distance(candidate, ref)
                if gain <= 0:
                    continue
                key = (-gain, -size, start, abs(dest - start), dest)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (start, size, dest, gain)
    return best


def ter(hyp: Sequence[str], ref: Sequence[str]) -> Tuple[float, EditTrace]:
    """Compute TER with greedy block shifts.

    Shifts are applied one at a time, always the move that most reduces the
    edit distance (ties: longest span, leftmost start, shortest move). The
    search stops when no move reduces the distance.

    Args:
        hyp: Hypothesis tokens
        ref: Reference tokens, non-empty

    Returns:
        Tuple of (score, trace); hypothesis indices in the trace refer to the
        original, unshifted hypothesis.
    """
    if not ref:
        raise ValueError("TER is undefined for an empty reference")

    current = list(hyp)
    order = list(range(len(hyp)))
    spans = _ref_spans(ref, MAX_SHIFT_SIZE)
    dist, links = levenshtein(current, ref)
    moves: List[Tuple[int, int, int]] = []
    while True:
        best = _best_shift(current, ref, dist, links, spans)
        if best is None:
            break
        start, size, dest, _ = best
        current = _move(current, start, size, dest)
        order = _move(order, start, size, dest)
        dist, links = levenshtein(current, ref)
        moves.append((start, size, dest))

    alignment = [
        Link(order[link.hyp] if link.hyp is not None else None, link.ref, link.kind)
        for link in links
    ]
    trace = EditTrace(
        insertions=sum(1 for link in alignment if link.kind == INS),
        deletions=sum(1 for link in alignment if link.kind == DEL),
        substitutions=sum(1 for link in alignment if link.kind == SUB),
        shifts=len(moves),
        alignment=alignment,
        ref_len=len(ref),
        moves=moves,
    )
    return trace.score, trace


def _moves(state: Tuple[str, ...], spans: Set[Tuple[str, ...]]):
    n = len(state)
    for s in range(n):
        for size in range(1, n - s + 1):
            if state[s:s + size] not in spans:
                continue
            for dest in range(n - size + 1):
                if dest != s:
                    yield tuple(_move(list(state), s, size, dest))


@lru_cache(maxsize=None)
def _reorder_costs(tokens: Tuple[str, ...], ref: Tuple[str, ...]) -> Dict[Tuple[str, ...], int]:
    """Least shifts-plus-edits cost from every reordering of ``tokens``.

    A move and its reverse shift the same span, so costs are the distances
    of a multi-source search seeded with each reordering's edit distance.
    """
    spans = _ref_spans(ref, len(ref))
    cost = {state: edit_distance(state, ref) for state in set(itertools.permutations(tokens))}
    heap = [(c, state) for state, c in cost.items()]
    heapq.heapify(heap)
    while heap:
        c, state = heapq.heappop(heap)
        if c > cost[state]:
            continue
        for nxt in _moves(state, spans):
            if c + 1 < cost[nxt]:
                cost[nxt] = c + 1
                heapq.heappush(heap, (c + 1, nxt))
    return cost


def optimal_edits(hyp: Sequence[str], ref: Sequence[str], max_len: int = 6) -> int:
    """Exact minimum of shifts plus Levenshtein edits, for testing only.

    Any span equal to some reference span may move to any position, any
    number of times. Results are cached per (token multiset, reference).
    """
    if not ref:
        raise ValueError("TER is undefined for an empty reference")
    if len(hyp) > max_len or len(ref) > max_len:
        raise ValueError(f"brute-force TER limited to {max_len} tokens per side")
    costs = _reorder_costs(tuple(sorted(hyp)), tuple(ref))
    return costs[tuple(hyp)]


def brute_force_ter(hyp: Sequence[str], ref: Sequence[str], max_len: int = 6) -> float:
    """Exact TER over exhaustive shift sequences; see :func:`optimal_edits`."""
    return optimal_edits(hyp, ref, max_len) / len(ref)


BLOCKED = "blocked"
DETOUR = "detour"
PLATEAU = "plateau"
GAP_CLASSES = (BLOCKED, DETOUR, PLATEAU)


def greedy_gap(hyp: Sequence[str], ref: Sequence[str], max_len: int = 6) -> Optional[str]:
    """Name the reason greedy TER misses the exact optimum, for testing only.

    Follows the greedy shift path to the first state from which the optimum
    is out of reach and classifies that state:

    - ``blocked``: moving a span with no misaligned token would have kept the optimum
    - ``detour``: the chosen shift leaves every optimal shift sequence
    - ``plateau``: greedy stopped, yet a non-improving shift starts an optimal sequence

    Returns:
        None when greedy reaches the optimum, else one of GAP_CLASSES
    """
    _, trace = ter(hyp, ref)
    if trace.num_edits == optimal_edits(hyp, ref, max_len):
        return None
    costs = _reorder_costs(tuple(sorted(hyp)), tuple(ref))
    spans = _ref_spans(ref, len(ref))
    state = tuple(hyp)
    for move in trace.moves + [None]:
        following = None if move is None else tuple(_move(list(state), *move))
        if following is not None and 1 + costs[following] == costs[state]:
            state = following
            continue
        _, links = levenshtein(state, ref)
        misaligned = {link.hyp for link in links if link.hyp is not None and link.kind != MATCH}
        n = len(state)
        for start in range(n):
            for size in range(1, n - start + 1):
                if state[start:start + size] not in spans or misaligned.intersection(range(start, start + size)):
                    continue
                for dest in range(n - size + 1):
                    if dest != start and 1 + costs[tuple(_move(list(state), start, size, dest))] == costs[state]:
                        return BLOCKED
        return PLATEAU if move is None else DETOUR
    raise RuntimeError("greedy path never left the optimum")
