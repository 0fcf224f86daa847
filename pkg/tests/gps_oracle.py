"""Fluid GPS reference used by the scheduler tests.

Water-filling over piecewise-constant backlog sets; shares nothing with the
packet scheduler under test.
"""


def gps_service(arrivals, weights, rate, query_times):
    """Cumulative bits served per class at each query time.

    arrivals: iterable of (time_s, cls, bits), any order.
    """
    events = sorted(arrivals, key=lambda a: a[0])
    backlog = {c: 0.0 for c in weights}
    served = {c: 0.0 for c in weights}
    out = []
    t = 0.0
    i = 0
    for q in sorted(query_times):
        while True:
            next_arrival = events[i][0] if i < len(events) else float("inf")
            horizon = min(next_arrival, q)
            while t < horizon:
                active = [c for c in weights if backlog[c] > 1e-9]
                if not active:
                    t = horizon
                    break
                wsum = sum(weights[c] for c in active)
                # time until the first active class empties
                drain = min(backlog[c] / (rate * weights[c] / wsum) for c in active)
                step = min(drain, horizon - t)
                for c in active:
                    amount = rate * weights[c] / wsum * step
                    amount = min(amount, backlog[c])
                    backlog[c] -= amount
                    served[c] += amount
                t += step
            if next_arrival <= q and i < len(events):
                _, c, bits = events[i]
                backlog[c] += bits
                i += 1
            else:
                break
        out.append(dict(served))
    return out
