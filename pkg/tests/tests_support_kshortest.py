"""Brute-force loopless path enumeration used as the routing oracle."""


def brute_force_paths(g, src, dst, weights):
    """All simple src->dst paths sorted by (cost, hops, node sequence)."""
    adj = {}
    for (a, b), _ch in g.links:
        adj.setdefault(a, []).append(b)
    out = []

    def walk(path, cost):
        node = path[-1]
        if node == dst:
            out.append((cost, len(path) - 1, tuple(path)))
            return
        for nxt in adj.get(node, ()):
            if nxt not in path:
                walk(path + [nxt], cost + weights[(node, nxt)])

    walk([src], 0.0)
    return [p for _cost, _hops, p in sorted(out)]
