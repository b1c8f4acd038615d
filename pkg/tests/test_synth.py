"""Synthetic station generator: determinism, geometric consistency with the
annotation pipeline, and the separability/ambiguity contract."""

import numpy as np
import pytest

from legibility.corpus import assign_segment
from legibility.errors import ConfigError
from legibility.synth import RoomTexture, SynthSpec, synth_station


def textures_equal(a: RoomTexture, b: RoomTexture) -> bool:
    scalar = (a.stripe_freq == b.stripe_freq and a.wall_lat_lo == b.wall_lat_lo
              and a.wall_lat_hi == b.wall_lat_hi)
    arrays = all(np.array_equal(getattr(a, f), getattr(b, f))
                 for f in ("wall_a", "wall_b", "floor", "ceiling"))
    return scalar and arrays and a.glyphs == b.glyphs


class TestSpecValidation:
    def test_too_few_segments(self):
        with pytest.raises(ConfigError):
            SynthSpec(num_segments=1)

    def test_too_few_panoramas(self):
        with pytest.raises(ConfigError):
            SynthSpec(panos_per_segment=3)

    def test_ambiguity_range(self):
        with pytest.raises(ConfigError):
            SynthSpec(ambiguity=1.5)

    def test_shared_pair_bounds(self):
        with pytest.raises(ConfigError):
            SynthSpec(num_segments=4, shared_pair=(0, 9))

    def test_default_pair_is_last_two(self):
        spec = SynthSpec(num_segments=6, ambiguity=1.0)
        assert spec.resolved_pair() == (4, 5)

    def test_no_pair_without_ambiguity(self):
        assert SynthSpec(num_segments=6).resolved_pair() is None


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        spec = SynthSpec(num_segments=3, panos_per_segment=4, pano_height=32)
        a = synth_station(spec, seed=5)
        b = synth_station(spec, seed=5)
        assert all(np.array_equal(pa.pixels, pb.pixels)
                   for pa, pb in zip(a.panoramas, b.panoramas))
        assert a.trajectory == b.trajectory
        assert all(np.array_equal(sa.footprint, sb.footprint)
                   for sa, sb in zip(a.segments, b.segments))

    def test_different_seed_differs(self):
        spec = SynthSpec(num_segments=3, panos_per_segment=4, pano_height=32)
        a = synth_station(spec, seed=5)
        b = synth_station(spec, seed=6)
        assert not np.array_equal(a.panoramas[0].pixels, b.panoramas[0].pixels)


class TestStructure:
    @pytest.fixture(scope="class")
    def station(self):
        return synth_station(SynthSpec(num_segments=8, panos_per_segment=4,
                                       pano_height=32), seed=2)

    def test_counts(self, station):
        assert len(station.segments) == 8
        assert len(station.panoramas) == 8 * 4
        assert len(station.trajectory) == len(station.panoramas)

    def test_pano_ids_unique_and_timestamps_increase(self, station):
        ids = [p.id for p in station.panoramas]
        assert len(set(ids)) == len(ids)
        times = [p.timestamp for p in station.panoramas]
        assert all(t2 > t1 for t1, t2 in zip(times, times[1:]))

    def test_panos_are_valid_equirects(self, station):
        for p in station.panoramas:
            assert p.pixels.shape == (32, 64, 3)
            assert p.pixels.dtype == np.uint8

    def test_poses_lie_inside_their_rooms(self, station):
        per_seg = len(station.panoramas) // len(station.segments)
        for i, pose in enumerate(station.trajectory):
            expected = station.segments[i // per_seg].id
            assert assign_segment(pose, station.segments) == expected

    def test_metadata_covers_floors_programs_halls(self, station):
        assert {s.floor for s in station.segments} == {1, 2}
        assert {s.program for s in station.segments} == {"commercial", "waiting", "corridor"}
        assert all(s.hall for s in station.segments)

    def test_same_floor_rooms_do_not_overlap(self, station):
        from legibility.corpus import check_footprints
        check_footprints(station.segments)


class TestSeparability:
    def test_two_segments_distinguishable_by_mean_color(self):
        station = synth_station(SynthSpec(num_segments=2, panos_per_segment=6,
                                          pano_height=32), seed=3)
        means = np.array([p.pixels.reshape(-1, 3).mean(axis=0)
                          for p in station.panoramas])
        labels = np.repeat([0, 1], 6)
        centroids = np.array([means[labels == s].mean(axis=0) for s in (0, 1)])
        pred = np.argmin(
            ((means[:, None, :] - centroids[None]) ** 2).sum(axis=2), axis=1)
        assert (pred == labels).all()

    def test_shared_pair_textures_identical_at_full_ambiguity(self):
        spec = SynthSpec(num_segments=6, panos_per_segment=4, pano_height=32,
                         ambiguity=1.0, shared_pair=(1, 4))
        station = synth_station(spec, seed=4)
        assert textures_equal(station.textures[1], station.textures[4])
        others = [t for i, t in enumerate(station.textures) if i != 4]
        for i, a in enumerate(others):
            for b in others[i + 1:]:
                assert not textures_equal(a, b)

    def test_partial_ambiguity_blends(self):
        base = synth_station(SynthSpec(num_segments=4, panos_per_segment=4,
                                       pano_height=32), seed=9)
        half = synth_station(SynthSpec(num_segments=4, panos_per_segment=4,
                                       pano_height=32, ambiguity=0.5,
                                       shared_pair=(2, 3)), seed=9)
        moved = half.textures[3].wall_a
        lo = np.minimum(base.textures[2].wall_a, base.textures[3].wall_a)
        hi = np.maximum(base.textures[2].wall_a, base.textures[3].wall_a)
        assert ((moved >= lo - 1e-9) & (moved <= hi + 1e-9)).all()
