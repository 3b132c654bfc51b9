"""Structure-based unlearning: edit the graph, leave the model alone."""

from ..graph import Graph, UnlearnRequest, apply_request, incident_edges, make_request


def utu_unlearn(g: Graph, request) -> Graph:
    """Unlink the requested edges; inference afterwards runs on the returned graph.

    ``request`` may be an UnlearnRequest or a plain edge list. Node requests
    unlink every incident edge (the node stays, isolated); feature requests
    mask the inference-time features.
    """
    if not isinstance(request, UnlearnRequest):
        request = make_request("edge", request)
    if request.kind == "node":
        edges = incident_edges(g, request.delta_v)
        if len(edges) == 0:
            return g
        request = make_request("edge", [tuple(e) for e in edges])
    return apply_request(g, request)[0]
