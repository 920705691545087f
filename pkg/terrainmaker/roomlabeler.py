import abc
import logging

import numpy as np

from terrainmaker.posegraph import PoseGraph

logger = logging.getLogger(__name__)


class RoomLabeler(metaclass=abc.ABCMeta):
    """Source of per-node room-class distributions.

    A concrete labeler maps node positions to ``{class name: score}``
    distributions; :meth:`label_graph` stores them on the graph.
    """

    def label_graph(self, graph, smooth_window=0):
        assert isinstance(graph, PoseGraph), \
            "RoomLabeler.label_graph - 'graph' should be an instance of PoseGraph"
        if len(graph) == 0:
            return graph
        positions = np.array([node.position for node in graph])
        for node, distribution in zip(graph, self.distributions(positions, graph.class_names)):
            graph.assign_room_label(node.id, distribution)
        if smooth_window and smooth_window > 1:
            changed = graph.smooth_room_labels(smooth_window)
            logger.debug("RoomLabeler.label_graph - smoothing relabeled %d nodes", changed)
        logger.info("RoomLabeler.label_graph - labeled %d nodes", len(graph))
        return graph

    @abc.abstractmethod
    def distributions(self, positions, class_names):
        raise NotImplementedError('derived class must define method distributions')
