import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jobspace.geo import EARTH_RADIUS_MILES, geo_to_unit_vector, haversine_miles

lat_st = st.floats(min_value=-90.0, max_value=90.0, allow_nan=False)
lon_st = st.floats(min_value=-180.0, max_value=180.0, allow_nan=False)


def test_origin_maps_to_x_axis():
    assert np.allclose(geo_to_unit_vector(0.0, 0.0), [1.0, 0.0, 0.0], atol=1e-15)


def test_north_pole():
    assert np.allclose(geo_to_unit_vector(90.0, 0.0), [0.0, 0.0, 1.0], atol=1e-15)


def test_mid_latitude_quarter_turn():
    v = geo_to_unit_vector(45.0, 90.0)
    assert np.allclose(v, [0.0, math.sqrt(2) / 2, math.sqrt(2) / 2], atol=1e-12)


@pytest.mark.parametrize("lat,lon", [(91.0, 0.0), (-90.5, 0.0), (0.0, 180.5), (0.0, -181.0)])
def test_out_of_range_rejected(lat, lon):
    with pytest.raises(ValueError):
        geo_to_unit_vector(lat, lon)
    with pytest.raises(ValueError):
        haversine_miles(lat, lon, 0.0, 0.0)


def test_haversine_identity():
    assert haversine_miles(33.75, -84.39, 33.75, -84.39) == 0.0


def test_haversine_antipodal_half_circumference():
    expected = math.pi * EARTH_RADIUS_MILES
    assert abs(haversine_miles(0.0, 0.0, 0.0, 180.0) - expected) < 0.01


def test_haversine_one_degree_along_equator():
    expected = 2.0 * math.pi * EARTH_RADIUS_MILES / 360.0
    assert abs(haversine_miles(0.0, 0.0, 0.0, 1.0) - expected) < 0.01
    assert abs(expected - 69.09) < 0.01


@settings(max_examples=300, deadline=None)
@given(lat=lat_st, lon=lon_st)
def test_unit_norm_property(lat, lon):
    v = geo_to_unit_vector(lat, lon)
    assert abs(float(v @ v) - 1.0) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(lat1=lat_st, lon1=lon_st, lat2=lat_st, lon2=lon_st)
def test_chord_arc_consistency(lat1, lon1, lat2, lon2):
    # Euclidean distance between unit vectors must equal 2 sin(angle / 2)
    chord = float(np.linalg.norm(geo_to_unit_vector(lat1, lon1) - geo_to_unit_vector(lat2, lon2)))
    angle = haversine_miles(lat1, lon1, lat2, lon2) / EARTH_RADIUS_MILES
    assert abs(chord - 2.0 * math.sin(angle / 2.0)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(lat1=lat_st, lon1=lon_st, lat2=lat_st, lon2=lon_st)
def test_haversine_symmetry(lat1, lon1, lat2, lon2):
    assert haversine_miles(lat1, lon1, lat2, lon2) == pytest.approx(
        haversine_miles(lat2, lon2, lat1, lon1), abs=1e-9
    )


def test_triangle_inequality_spot_checks():
    rng = np.random.default_rng(7)
    for _ in range(200):
        pts = [(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180))) for _ in range(3)]
        (a, b, c) = pts
        ab = haversine_miles(*a, *b)
        bc = haversine_miles(*b, *c)
        ac = haversine_miles(*a, *c)
        assert ac <= ab + bc + 1e-9
