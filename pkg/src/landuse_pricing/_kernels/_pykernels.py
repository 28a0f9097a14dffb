"""Numpy implementations of the network-loading kernels.

Segments are given CSR-style by a pointer array; every segment is non-empty.
"""

from __future__ import annotations

import numpy as np


def route_costs(link_cost, route_ptr, route_links):
    counts = np.diff(route_ptr)
    owner = np.repeat(np.arange(len(counts)), counts)
    return np.bincount(owner, weights=link_cost[route_links], minlength=len(counts))


def link_loads(f, route_ptr, route_links, n_links):
    counts = np.diff(route_ptr)
    return np.bincount(route_links, weights=np.repeat(f, counts), minlength=n_links)


def segment_sums(values, seg_ptr):
    return np.add.reduceat(values, seg_ptr[:-1])


def segment_softmin(values, seg_ptr, theta):
    """Smoothed minimum ``-(1/theta) ln sum exp(-theta c)`` and logit shares per segment."""
    starts = seg_ptr[:-1]
    counts = np.diff(seg_ptr)
    low = np.minimum.reduceat(values, starts)
    e = np.exp(-theta * (values - np.repeat(low, counts)))
    total = np.add.reduceat(e, starts)
    shares = e / np.repeat(total, counts)
    return low - np.log(total) / theta, shares


def nested_logit(link_cost, dest_util, demand, route_ptr, route_links, od_ptr, alpha, gamma):
    """One evaluation of the nested destination/route logit.

    Returns route costs, expected OD times, OD demands (flat, origin-major) and
    path flows.
    """
    n_dest = len(dest_util)
    c = route_costs(link_cost, route_ptr, route_links)
    v, route_share = segment_softmin(c, od_ptr, alpha)
    n_orig = len(demand)
    dest_ptr = np.arange(0, n_orig * n_dest + 1, n_dest)
    _, dest_share = segment_softmin(v - np.tile(dest_util, n_orig), dest_ptr, gamma)
    q = dest_share * np.repeat(demand, n_dest)
    f = route_share * np.repeat(q, np.diff(od_ptr))
    return c, v, q, f
