import numpy as np
import pytest

from schro_ldp.errors import ValidationError
from schro_ldp.events import EventSet
from schro_ldp.paths import Path, uniform_grid


def zero_tube(radius: float = 0.25) -> EventSet:
    return EventSet.tube(Path.from_knots([[0.0, 0.0], [1.0, 0.0]]), radius)


class TestTube:
    def test_contains(self):
        grid = uniform_grid(4)
        inside = np.full((5, 1), 0.2)
        outside = inside.copy()
        outside[2] = 0.3
        np.testing.assert_array_equal(zero_tube().contains(np.stack([inside, outside]), grid), [True, False])

    def test_boundary_is_included(self):
        assert zero_tube().contains(np.full((3, 1), 0.25), uniform_grid(2))[0]

    def test_admits_endpoints(self):
        tube = zero_tube()
        assert tube.admits_endpoints(0.1, -0.2)
        assert not tube.admits_endpoints(0.0, 1.0)

    def test_radius_must_be_positive(self):
        with pytest.raises(ValidationError):
            zero_tube(0.0)


class TestEndpoint:
    def test_pairs(self):
        event = EventSet.endpoint(pairs=[[0.0, 1.0], [0.0, -1.0]])
        assert event.dim == 1
        values = np.stack([np.linspace(0, 1, 3)[:, None], np.linspace(0, 0.5, 3)[:, None]])
        np.testing.assert_array_equal(event.contains(values, uniform_grid(2)), [True, False])

    def test_box(self):
        event = EventSet.endpoint(lower=[-0.1, 0.9], upper=[0.1, 1.1])
        assert event.admits_endpoints(0.0, 1.0)
        assert not event.admits_endpoints(0.0, 0.5)

    def test_needs_exactly_one_description(self):
        with pytest.raises(ValidationError):
            EventSet.endpoint()
        with pytest.raises(ValidationError):
            EventSet.endpoint(pairs=[[0.0, 1.0]], lower=[0.0, 0.0], upper=[1.0, 1.0])


class TestTwoPoint:
    def test_membership_is_not_defined(self):
        event = EventSet.two_point(0.25, 0.75, [[0.5, 0.5]])
        with pytest.raises(ValidationError):
            event.contains(np.zeros((1, 3, 1)), uniform_grid(2))

    def test_time_order(self):
        with pytest.raises(ValidationError):
            EventSet.two_point(0.75, 0.25, [[0.5, 0.5]])


class TestSerialization:
    def test_tube_round_trip(self):
        event = EventSet.tube(Path.from_knots([[0.0, 0.0], [0.5, 1.0], [1.0, 0.0]]), 0.25)
        back = EventSet.from_dict(event.to_dict())
        assert back.kind == "tube"
        assert back.radius == 0.25
        np.testing.assert_allclose(back.center.values, event.center.values)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValidationError, match="Unknown event keys"):
            EventSet.from_dict({"kind": "tube", "center": [[0, 0], [1, 0]], "radius": 1, "colour": "red"})

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            EventSet.from_dict({"kind": "ball"})
