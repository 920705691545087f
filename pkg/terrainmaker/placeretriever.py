"""
Place retrieval: ranking map keyframes by descriptor similarity to a query.

Descriptors are 256-bit codes packed in 32 bytes. Two codes match when they
are mutual nearest neighbors in Hamming distance, the distance is within a
cap, and the best distance is clearly below the second best (ratio test).

"""
import abc

import numpy as np

from terrainmaker.exceptions import EmptyInputError


def hamming_distances(a, b):
    """Pairwise Hamming distances between packed descriptor sets ``(n, 32)`` and ``(m, 32)``."""
    A = np.unpackbits(np.asarray(a, dtype=np.uint8), axis=1).astype(np.int32)
    B = np.unpackbits(np.asarray(b, dtype=np.uint8), axis=1).astype(np.int32)
    return A.sum(axis=1)[:, None] + B.sum(axis=1)[None, :] - 2 * (A @ B.T)


def match_descriptors(query, reference, ratio=0.8, max_distance=64):
    """Index pairs ``(i_query, i_reference)`` of accepted matches, sorted by query index."""
    if len(query) == 0 or len(reference) == 0:
        return np.zeros((0, 2), dtype=int)
    D = hamming_distances(query, reference)
    best = np.argmin(D, axis=1)
    best_d = D[np.arange(D.shape[0]), best]
    mutual = np.argmin(D, axis=0)[best] == np.arange(D.shape[0])
    if D.shape[1] > 1:
        second = np.partition(D, 1, axis=1)[:, 1]
        distinct = best_d < ratio * second
    else:
        distinct = np.ones(D.shape[0], dtype=bool)
    keep = mutual & distinct & (best_d <= max_distance)
    qi = np.flatnonzero(keep)
    return np.stack([qi, best[qi]], axis=1)


class PlaceRetriever(metaclass=abc.ABCMeta):
    """Ranks stored keyframes against a query keyframe."""

    def retrieve(self, query, map_keyframes, k=3, query_room=None, node_rooms=None):
        """Top ``k`` ``(node_id, score)`` pairs with a positive score.

        Ranking is by score, ties broken by ascending node id. When
        ``query_room`` is given, only keyframes whose node room class
        (``node_rooms[node_id]``) equals it are considered.

        :raises EmptyInputError: if the map holds no keyframe.
        """
        map_keyframes = list(map_keyframes)
        if not map_keyframes:
            raise EmptyInputError("PlaceRetriever.retrieve - the map has no keyframes")
        assert k >= 1, "PlaceRetriever.retrieve - 'k' must be >= 1"
        if query_room is not None and node_rooms is not None:
            map_keyframes = [kf for kf in map_keyframes if node_rooms.get(kf.node_id) == query_room]
        scored = [(kf.node_id, self.similarity(query, kf)) for kf in map_keyframes]
        scored = [s for s in scored if s[1] > 0]
        scored.sort(key=lambda s: (-s[1], s[0]))
        return scored[:k]

    @abc.abstractmethod
    def similarity(self, query, keyframe):
        raise NotImplementedError('derived class must define method similarity')
