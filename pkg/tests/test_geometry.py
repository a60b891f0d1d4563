import math

import numpy as np
import pytest
from scipy.integrate import quad

from heatctl import geometry as g
from heatctl.control import observability_quotient
from heatctl.errors import HypothesisViolation, InvalidInput
from heatctl.grid import GridDomain, box_domain, check_connected

CYLINDER = {"kind": "capped_inverse", "cap": 0.5, "scale": 2.0}


def cylinder_spec(**kw):
    spec = {"kind": "rod-shrinking-cylinder-control", "h": 0.2, "section_radius": 1.0,
            "truncation": 1100, "profile": CYLINDER}
    spec.update(kw)
    return spec


def lshape(h):
    x = np.arange(int(round(1 / h)) + 1) * h
    X, Y = np.meshgrid(x, x, indexing="ij")
    mask = (X > 0) & (X < 1) & (Y > 0) & (Y < 1) & ~((X >= 0.5) & (Y >= 0.5))
    return GridDomain(h, [0.0, 0.0], mask, np.zeros(mask.shape))


# ------------------------------------------------------------ scenarios


def test_strip_area():
    dom = g.build_scenario({"kind": "strip", "L": 1.0, "h": 0.05, "truncation": 10})
    perimeter = 2 * 20 + 2 * 1
    assert abs(dom.measure - 20.0) <= perimeter * dom.h
    assert dom.truncation == {"axis": 1, "lo": -10.0, "hi": 10.0}
    assert dom.omega_measure == 0.0


def test_slabs_excluded_exactly():
    slabs = [[2.0**k, 2.0 ** (k - 1)] for k in range(1, 5)]
    dom = g.build_scenario({"kind": "rod-with-slabs", "h": 0.25, "section_radius": 1.0,
                            "truncation": [-4, 30], "omega_z": [[-4, 30]], "slabs": slabs})
    z = dom.axis(2)
    covered = dom.omega_mask.any(axis=(0, 1))
    in_slab = np.zeros(z.size, dtype=bool)
    for c, w in slabs:
        in_slab |= np.abs(z - c) <= w
    np.testing.assert_array_equal(covered, ~in_slab)
    # away from the slabs the whole section is controlled
    assert np.array_equal(dom.omega_mask[:, :, 0], dom.mask[:, :, 0])


def test_cylinder_measure_matches_profile_integral():
    dom = g.build_scenario(cylinder_spec())
    prof = g.RProfile.from_spec(CYLINDER)
    ref = 2 * quad(lambda z: math.pi * float(prof(z)) ** 2, 0, 1100, points=[3], limit=500)[0]
    assert dom.omega_measure == pytest.approx(ref, rel=0.05)
    grid_sum = float(np.sum(math.pi * prof(dom.axis(2)) ** 2 * dom.h))
    assert dom.omega_measure == pytest.approx(grid_sum, rel=1e-12)
    assert dom.mask.size <= 2_000_000


def test_interior_rod_omega():
    dom = g.build_scenario({"kind": "rod-with-interior-rod", "h": 0.1, "section_radius": 1.0,
                            "truncation": 2, "omega_radius": 0.3, "omega_center": [0.4, 0.0]})
    xs = dom.axis(0)
    sl = dom.omega_mask[:, :, 0]
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    r2 = (X - 0.4) ** 2 + Y**2
    differ = sl != ((r2 < 0.09) & dom.mask[:, :, 0])
    assert np.all(np.abs(r2[differ] - 0.09) < 1e-12)  # only rounding on the rim


def test_scenario_rejections():
    with pytest.raises(InvalidInput):
        g.build_scenario(cylinder_spec(truncation=100, points=[[0, 0, 1024.0]]))
    with pytest.raises(InvalidInput):
        g.build_scenario(cylinder_spec(section_radius=0.4, truncation=5))
    with pytest.raises(InvalidInput):
        g.build_scenario({"kind": "moebius", "h": 0.1})
    with pytest.raises(InvalidInput):
        g.build_scenario({"kind": "strip", "L": 1.0, "h": -0.1, "truncation": 1})


def test_connectivity_count():
    m = np.zeros((7, 7), dtype=bool)
    m[1:3, 1:3] = True
    m[4:6, 4:6] = True
    assert check_connected(m) == 2


# ------------------------------------------------------------ distances


def test_convex_diagonal():
    dom = box_domain([1, 1], 1 / 100)
    fd = g.geodesic_distance_field(dom, [0.1, 0.1])
    assert fd.distance[dom.nearest_index([0.9, 0.9])] == pytest.approx(0.8 * math.sqrt(2), rel=g.METRICATION[2])
    assert fd.distance[dom.nearest_index([0.1, 0.1])] == 0.0


def test_lshape_taut_path():
    dom = lshape(1 / 400)
    fd = g.geodesic_distance_field(dom, [0.75, 0.4])
    taut = 2 * math.hypot(0.25, 0.1)  # around the notch corner (0.5, 0.5)
    got = fd.distance[dom.nearest_index([0.4, 0.75])]
    assert taut <= got <= taut * 1.03


@pytest.mark.parametrize("edges,h", [([1, 1], 1 / 50), ([1, 1, 1], 1 / 20)])
def test_geodesic_vs_euclidean_on_convex_domain(edges, h):
    dom = box_domain(edges, h)
    y = [0.5] * len(edges)
    e = g.geodesic_distance_field(dom, y, metric="euclidean").distance
    d = g.geodesic_distance_field(dom, y).distance
    sel = dom.mask & (e > 0)
    ratio = d[sel] / e[sel]
    assert ratio.min() >= 1 - 1e-12
    assert ratio.max() <= 1 + g.METRICATION[dom.n]


def test_triangle_inequality():
    dom = lshape(1 / 60)
    rng = np.random.default_rng(0)
    nodes = np.argwhere(dom.mask)
    for _ in range(10):
        a, b, c = (dom.coords(nodes[i]) for i in rng.integers(0, len(nodes), 3))
        da = g.geodesic_distance_field(dom, a).distance
        db = g.geodesic_distance_field(dom, b).distance
        ib, ic = dom.nearest_index(b), dom.nearest_index(c)
        assert da[ic] <= da[ib] + db[ic] + 1e-12


def test_distance_finite_only_on_component():
    mask = np.zeros((12, 12), dtype=bool)
    mask[1:5, 1:11] = True
    mask[7:11, 1:11] = True
    dom = GridDomain(0.1, [0, 0], mask, np.zeros(mask.shape))
    d = g.geodesic_distance_field(dom, [0.2, 0.2]).distance
    assert np.all(np.isfinite(d[1:5, 1:11])) and np.all(np.isinf(d[7:11, 1:11]))


def test_limited_field_is_exact_inside_limit():
    dom = lshape(1 / 80)
    full = g.geodesic_distance_field(dom, [0.7, 0.3]).distance
    part = g.geodesic_distance_field(dom, [0.7, 0.3], limit=0.3).distance
    sel = full <= 0.3
    np.testing.assert_array_equal(part[sel], full[sel])
    assert np.all(np.isinf(part[full > 0.3 + 1e-12]))


def test_outside_point_rejected():
    with pytest.raises(InvalidInput):
        g.geodesic_distance_field(lshape(0.1), [0.8, 0.8])


def test_boundary_distance_examples():
    strip = g.build_scenario({"kind": "strip", "L": 1.0, "h": 0.05, "truncation": 5})
    assert abs(g.boundary_distance(strip, [0.5, 0.0]) - 0.5) <= strip.h
    assert g.boundary_distance(strip, [0.05, 3.0]) <= strip.h
    rod = g.build_scenario({"kind": "rod-with-interior-rod", "h": 0.05, "section_radius": 1.0,
                            "truncation": 1, "omega_radius": 0.2})
    assert abs(g.boundary_distance(rod, [0, 0, 0]) - 1.0) <= rod.h
    # truncated axis ends are not boundary
    assert abs(g.boundary_distance(rod, [0, 0, 1.0]) - 1.0) <= rod.h
    assert g.boundary_distance(strip, [0.5, 0.0], half_cell=False) == pytest.approx(0.5)


# ------------------------------------------------------------ averaged distance


def test_averaged_constant_distance():
    mask = np.ones(21, dtype=bool)
    mask[[0, -1]] = False
    w = np.zeros(21)
    w[[4, 16]] = 0.1  # both at distance 0.6 from the center node
    dom = GridDomain(0.1, [0.0], mask, w)
    T = 0.3
    a = g.averaged_distance(dom, [1.0], T)
    assert a.value == pytest.approx(0.36 - 2 * T * math.log(0.2), rel=1e-13)
    assert a.value == pytest.approx(a.lower_bound, rel=1e-13)


def test_averaged_empty_and_vanishing_omega():
    dom = box_domain([1.0], 0.01)
    assert g.averaged_distance(dom, [0.5], 0.1).empty
    w = np.zeros(dom.shape)
    vals = []
    for m in (1e-2, 1e-8, 1e-30):
        w[10] = m
        vals.append(g.averaged_distance(dom.with_omega(w), [0.5], 0.1).value)
    assert vals[0] < vals[1] < vals[2] and vals[2] > 10


def test_averaged_slab_matches_closed_form():
    # full-section control on z in [-1, 1], y on the axis at the slab center,
    # Euclidean metric: the mass factors into a disk and an axial Gaussian integral
    T = 0.5
    for d in (1.0, 2.0, 3.0):
        disk = 2 * math.pi * T * (1 - math.exp(-1 / (2 * T)))
        axial = math.sqrt(math.pi * T / 2) * (math.erf((d + 2) / math.sqrt(2 * T)) - math.erf(d / math.sqrt(2 * T)))
        ref = -2 * T * math.log(disk * axial)
        vals = []
        for h in (0.1, 0.05):
            spec = {"kind": "rod-with-slabs", "h": h, "section_radius": 1.0, "truncation": [-3, 3 + 2 * d],
                    "omega_z": [[-1, 1]], "slabs": [[1 + d, d]]}
            dom = g.build_scenario(spec)
            vals.append(g.averaged_distance(dom, [0, 0, 1 + d], T, metric="euclidean").value)
        err = [v - ref for v in vals]
        assert 1.7 < err[0] / err[1] < 2.3  # first order in h
        assert 2 * vals[1] - vals[0] == pytest.approx(ref, rel=0.02)


def test_averaged_monotone_in_omega():
    dom = lshape(1 / 40)
    small = np.where(dom.mask & (np.arange(dom.shape[0])[:, None] > 25), dom.h**2, 0.0)
    large = np.where(dom.mask & (np.arange(dom.shape[0])[:, None] > 15), dom.h**2, 0.0)
    y = [0.2, 0.8]
    a = g.averaged_distance(dom.with_omega(small), y, 0.05).value
    b = g.averaged_distance(dom.with_omega(large), y, 0.05).value
    assert b <= a


def test_averaged_inequality_random_domains():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(30, 50))
        mask = np.zeros((n, n), dtype=bool)
        mask[1:-1, 1:-1] = True
        for _ in range(3):
            i, j = rng.integers(5, n - 10, 2)
            mask[i:i + 5, j:j + 5] = False
        if check_connected(mask) != 1:
            continue
        om = mask & (rng.random(mask.shape) < 0.05)
        dom = GridDomain(1 / n, [0, 0], mask, np.where(om, (1 / n) ** 2, 0.0))
        y = dom.coords(np.argwhere(mask)[rng.integers(0, mask.sum())])
        T = float(rng.uniform(0.01, 0.5))
        a = g.averaged_distance(dom, y, T)
        assert a.value >= a.lower_bound - 1e-3 * abs(a.lower_bound)


def test_bounded_distance_examples():
    assert g.bounded_distance(5.0, 1.0, 3) == 5.0
    assert g.bounded_distance(10.0, 1.0, 2) == pytest.approx(math.pi**2 / 2)
    assert g.bounded_distance(10.0, 1e-6, 3) < 1e-5


# ------------------------------------------------------------ GNC


def test_gnc_rejects_small_kappa():
    dom = g.build_scenario({"kind": "strip", "L": 1.0, "h": 0.1, "truncation": 5, "omega": [0.2, 0.4]})
    with pytest.raises(HypothesisViolation):
        g.gnc_evaluate(dom, [[0.5, 0.0]], 1.0, 0.5)


def test_gnc_cylinder_increasing():
    pts = [[0, 0, 2.0**k] for k in range(3, 11)]
    dom = g.build_scenario(cylinder_spec(points=pts))
    rep = g.gnc_evaluate(dom, pts, 1.0, 2.0)
    assert np.all(np.diff(rep.values) > 0)
    assert rep.values[-1] - rep.values[0] > 10
    np.testing.assert_allclose(rep.values_corrected - rep.values_published,
                               -2.0 * 0.75 * math.pi**2 * 9 * (1.0 / rep.bounded) ** 2)
    assert rep.variant == "corrected" and rep.epsilon == 0.5


def test_gnc_finite_measure_far_points_diverge():
    dom = g.build_scenario({"kind": "strip", "L": 1.0, "h": 0.05, "truncation": [-1, 12], "omega": [0.2, 0.8]})
    dom = dom.with_omega(np.where(dom.omega_mask & (np.abs(dom.axis(1)) <= 0.5)[None, :], dom.h**2, 0.0))
    pts = [[0.5, y] for y in (2.0, 4.0, 6.0, 8.0, 10.0)]
    rep = g.gnc_evaluate(dom, pts, 0.5, 1.5, threshold=20.0)
    assert np.all(np.diff(rep.values) > 0)
    assert rep.satisfied and "numerical evidence" in rep.verdict


def test_gnc_fixed_slabs_bounded():
    spec = {"kind": "rod-with-slabs", "h": 0.2, "section_radius": 1.0, "truncation": [-2, 40],
            "omega_z": [[-2, 40]], "slabs": [[4.0 * k, 1.0] for k in range(1, 9)]}
    dom = g.build_scenario(spec)
    rep = g.gnc_evaluate(dom, [[0, 0, 4.0 * k] for k in range(1, 9)], 1.0, 2.0, threshold=0.0)
    # identical local geometry away from the truncated ends
    assert np.ptp(rep.values[1:-1]) < 1e-9
    assert np.ptp(rep.values) < 1e-2
    assert not rep.satisfied


def test_gnc_translation_invariant():
    dom = lshape(1 / 40).with_omega(None or np.where(lshape(1 / 40).mask & (np.arange(41)[None, :] < 8), 1 / 1600, 0.0))
    pts = np.array([[0.3, 0.8], [0.8, 0.3], [0.45, 0.45]])
    shift = np.array([3.0, -2.0])
    a = g.gnc_evaluate(dom, pts, 0.2, 1.5)
    b = g.gnc_evaluate(dom.translated(shift), pts + shift, 0.2, 1.5)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.s_values, b.s_values)


def test_gnc_split_parameters():
    dom = lshape(1 / 20).with_omega(np.where(lshape(1 / 20).mask & (np.arange(21)[None, :] < 5), 1 / 400, 0.0))
    rep = g.gnc_evaluate(dom, [[0.3, 0.8]], 1.2, 3.0, epsilon=0.2, control_time=0.5)
    assert rep.kappa_prime == pytest.approx(2.5)
    assert rep.alpha == pytest.approx(1.0)
    assert rep.Tdbar == pytest.approx(1.0)
    with pytest.raises(HypothesisViolation):
        g.gnc_evaluate(dom, [[0.3, 0.8]], 1.2, 3.0, epsilon=0.2, control_time=1.1)


# ------------------------------------------------------------ rod examples


def test_rod_iii_examples():
    assert g.rod_iii_upper({"kind": "zero"}, 1.0, 5.0).value == 0.0
    v = g.rod_iii_upper({"kind": "constant", "r0": 0.3}, 0.7, 2.0).value
    assert v == pytest.approx(math.pi * 0.09 * math.sqrt(2 * math.pi * 0.7), rel=1e-10)
    vals = [g.rod_iii_upper(CYLINDER, 1.0, 2.0**k).value for k in range(0, 11)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_rod_iii_bounds_grid_mass():
    dom = g.build_scenario(cylinder_spec(truncation=80))
    for k in (2, 3, 4, 5):
        up = g.rod_iii_upper(CYLINDER, 1.0, 2.0**k).value
        assert g.omega_gaussian_mass(dom, [0, 0, 2.0**k], 1.0) <= up * (1 + 1e-9)


def test_shrinkrod_constant_profile():
    r = g.shrinkrod_check({"kind": "constant", "r0": 0.5}, np.arange(1, 8) * 10.0, np.arange(1, 8), 2.0, 0.1)
    np.testing.assert_allclose(np.diff(r.sequence), np.diff(np.arange(1, 8) ** 2))
    assert r.divergent


def test_shrinkrod_inverse_log_diverges():
    d = 2.0 ** np.arange(1, 12)
    r = g.shrinkrod_check({"kind": "inverse_log", "scale": 1.0}, d, d, 1.5, 1.0, increasing_from=3)
    assert r.divergent and np.all(np.diff(r.sequence[3:]) > 0)


def test_shrinkrod_exponential_fails():
    k = np.arange(1, 10, dtype=float)
    r = g.shrinkrod_check({"kind": "exponential", "scale": 1.0, "rate": 1.0}, k, k, 1.5, 1.0)
    assert not r.divergent and r.sequence[-1] < -1e6


def test_shrinkrod_grid_reductions():
    prof = {"kind": "inverse_log", "scale": 1.0}
    d = np.array([2.0, 4.0, 8.0])
    z = 1 + d
    dom = g.build_scenario({"kind": "shrinking-rod", "h": 0.1, "profile": prof, "truncation": [-3, 30],
                            "omega_z": [[-3, 30]], "slabs": [[zk, dk] for zk, dk in zip(z, d)]})
    r = g.shrinkrod_check(prof, z, d, 1.5, 0.5, domain=dom)
    assert r.grid_ok.all() and r.width_ok.all()
    assert r.warnings == []


def test_shrinkrod_flags_hypotheses():
    r = g.shrinkrod_check({"kind": "constant", "r0": 3.0}, [5.0], [1.0], 0.9, 1.0)
    assert len(r.warnings) == 2


def test_rod_model_quotient_grows_with_slab():
    ds = [1.0, 2.0, 3.0]
    spec = {"kind": "rod-with-slabs", "h": 0.25, "section_radius": 1.0, "truncation": [-10, 20],
            "omega_z": [[-1, 1]], "slabs": [[1 + d, d] for d in ds]}
    m = g.rod_model(spec, z_modes=60, section_modes=12)
    assert m.product.assembled.modes == 60 * 12
    q = [observability_quotient(m.product.assembled, 0.5, g.rod_kernel_datum(m, 1 + d, 0.5)) for d in ds]
    assert q[0] < q[1] < q[2]
