import numpy as np
import pytest

from carovol.analysis import (
    CentroidPath,
    VesselNotFoundError,
    centroid_path,
    cut_longitudinal,
    detect_plaque_slices,
    measure_label_volume,
    plaque_size,
    scan_diagnosis,
    slice_centroid,
    stenosis_diameter,
    stenosis_grade,
    wall_thickness_profile,
)
from carovol.phantom import BumpSpec, PhantomSpec, generate_sweep
from carovol.recon import ReconConfig, Volume, reconstruct_mask_volume


def annulus(n=64, ps=0.2, r_mab=5.0, r_lib=4.0, center=None, lib_offset=(0.0, 0.0)):
    c = center or ((n - 1) / 2.0, (n - 1) / 2.0)
    yy, xx = np.mgrid[0:n, 0:n]
    r_wall = np.sqrt((xx - c[0]) ** 2 + (yy - c[1]) ** 2) * ps
    r_lum = np.sqrt((xx - c[0] - lib_offset[0]) ** 2 + (yy - c[1] - lib_offset[1]) ** 2) * ps
    return r_wall <= r_mab, r_lum <= r_lib


def tube_volume(spec=None, n_frames=41, pitch=0.25, spacing=0.2):
    spec = spec or PhantomSpec(length_mm=10.0)
    _, masks, gt = generate_sweep(spec, n_frames=n_frames, frame_pitch_mm=pitch)
    vol = reconstruct_mask_volume(
        masks, gt, spec.pixel_spacing_mm, ReconConfig(spacing=spacing, hole_fill_radius=3)
    )
    return spec, vol


class TestSliceCentroid:
    def test_single_pixel(self):
        m = np.zeros((20, 20), bool)
        m[10, 10] = True
        np.testing.assert_allclose(slice_centroid(m, 0.5), [5.0, 5.0])

    def test_disk_center(self):
        mab, _ = annulus(center=(30.0, 25.0))
        c = slice_centroid(mab, 0.2)
        np.testing.assert_allclose(c, [30.0 * 0.2, 25.0 * 0.2], atol=0.1)

    def test_empty_returns_none(self):
        assert slice_centroid(np.zeros((5, 5), bool)) is None


class TestStenosisDiameter:
    def test_zero_wall(self):
        mab, _ = annulus()
        s, _ = stenosis_diameter(mab, mab, 0.2)
        assert s == 0.0

    def test_concentric_five_four(self):
        mab, lib = annulus(n=512, ps=0.025)
        s, _ = stenosis_diameter(mab, lib, 0.025)
        assert s == pytest.approx(0.2, abs=0.005)

    def test_occluded(self):
        mab, _ = annulus()
        s, _ = stenosis_diameter(mab, np.zeros_like(mab), 0.2)
        assert s == 1.0

    def test_scale_consistency(self):
        mab, lib = annulus(n=96, ps=0.2, lib_offset=(2.0, 1.0), r_lib=3.0)
        s1, a1 = stenosis_diameter(mab, lib, 0.2)
        s2, a2 = stenosis_diameter(mab, lib, 0.6)  # same rasters, scaled pixels
        assert s1 == pytest.approx(s2, abs=1e-12)
        assert a1 == a2

    def test_rotation_equivariance(self):
        mab, lib = annulus(n=96, ps=0.2, lib_offset=(2.0, 1.0), r_lib=3.0)
        s1, _ = stenosis_diameter(mab, lib, 0.2)
        s2, _ = stenosis_diameter(np.rot90(mab).copy(), np.rot90(lib).copy(), 0.2)
        assert s2 == pytest.approx(s1, abs=0.02)

    def test_empty_mab_rejected(self):
        with pytest.raises(ValueError):
            stenosis_diameter(np.zeros((8, 8), bool), np.zeros((8, 8), bool), 1.0)

    def test_lib_outside_mab_rejected(self):
        mab = np.zeros((8, 8), bool)
        mab[2:5, 2:5] = True
        lib = np.zeros((8, 8), bool)
        lib[6, 6] = True
        with pytest.raises(ValueError):
            stenosis_diameter(mab, lib, 1.0)

    def test_eccentric_matches_bruteforce(self):
        from oracles import brute_force_stenosis

        rng = np.random.default_rng(21)
        for _ in range(10):
            n = int(rng.integers(24, 33))
            r_mab = rng.uniform(0.30, 0.42) * n
            r_lib = rng.uniform(0.45, 0.75) * r_mab
            margin = r_mab - r_lib
            off = rng.uniform(-0.4, 0.4, 2) * margin
            mab, lib = annulus(n=n, ps=1.0, r_mab=r_mab, r_lib=r_lib, lib_offset=tuple(off))
            s_impl, _ = stenosis_diameter(mab, lib, 1.0)
            s_brute = brute_force_stenosis(mab, lib)
            assert s_impl == pytest.approx(s_brute, abs=0.02)


class TestWallThickness:
    def test_concentric_annulus_constant(self):
        mab, lib = annulus(n=256, ps=0.05)
        prof = wall_thickness_profile(mab, lib, 0.05)
        np.testing.assert_allclose(prof, 1.0, atol=0.05)

    def test_zero_for_equal_masks(self):
        mab, _ = annulus()
        prof = wall_thickness_profile(mab, mab, 0.2)
        np.testing.assert_allclose(prof, 0.0, atol=1e-9)

    def test_one_sided_bump_peaks_at_bump_angle(self):
        # lumen pushed toward -x: thick wall on the +x side (angle ~0); the
        # analytic peak is flat so allow a window around it
        mab, lib = annulus(n=128, ps=0.1, r_mab=5.0, r_lib=3.0, lib_offset=(-15.0, 0.0))
        prof = wall_thickness_profile(mab, lib, 0.1)
        peak = int(np.argmax(prof))
        assert min(peak, 180 - peak) <= 10
        assert prof.max() == pytest.approx(2.0 + 1.5, abs=0.15)
        # thinnest chord is perpendicular to the offset
        assert prof[90] == pytest.approx(5.0 - np.sqrt(9.0 - 2.25), abs=0.15)


class TestPlaqueDetection:
    def test_all_thin(self):
        profiles = [np.full(180, 1.0) for _ in range(6)]
        assert not detect_plaque_slices(profiles).any()

    def test_single_thick_slice(self):
        profiles = [np.full(180, 1.0) for _ in range(6)]
        profiles[3] = np.full(180, 1.6)
        flags = detect_plaque_slices(profiles)
        assert flags[3] and flags.sum() == 1

    def test_boundary_is_strict(self):
        profiles = [np.full(180, 1.5)]
        assert not detect_plaque_slices(profiles).any()

    def test_none_profiles_are_healthy(self):
        assert not detect_plaque_slices([None, None]).any()


class TestScanDiagnosis:
    def test_five_consecutive_diseased(self):
        flags = [False] * 3 + [True] * 5 + [False] * 2
        assert scan_diagnosis(flags).diseased

    def test_four_consecutive_healthy(self):
        flags = [False] * 3 + [True] * 4 + [False] * 2
        assert not scan_diagnosis(flags).diseased

    def test_all_false(self):
        assert not scan_diagnosis([False] * 10).diseased

    def test_monotone_adding_flags(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            flags = rng.random(12) < 0.5
            if scan_diagnosis(flags).diseased:
                more = flags.copy()
                more[int(rng.integers(0, 12))] = True
                assert scan_diagnosis(more).diseased

    def test_exhaustive_vs_bruteforce(self):
        from oracles import brute_force_run_exists

        for n in range(0, 13):
            for bits in range(1 << n):
                flags = [(bits >> i) & 1 == 1 for i in range(n)]
                assert scan_diagnosis(flags, 5).diseased == brute_force_run_exists(flags, 5)

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            scan_diagnosis([True], 0)


class TestPlaqueSize:
    def test_no_flags(self):
        m = plaque_size([False] * 5, [None] * 5, 0.2)
        assert m.length_mm == 0.0 and m.thickness_mm == 0.0 and m.slice_range is None

    def test_fifty_slices_arithmetic(self):
        flags = [False] * 5 + [True] * 50 + [False] * 5
        profiles = [np.full(180, 1.0)] * 5 + [np.full(180, 3.0)] * 50 + [np.full(180, 1.0)] * 5
        m = plaque_size(flags, profiles, 0.2)
        assert m.length_mm == pytest.approx(10.0)
        assert m.thickness_mm == pytest.approx(3.0)
        assert m.slice_range == (5, 55)

    def test_longest_run_wins(self):
        flags = [True] * 3 + [False] + [True] * 6
        profiles = [np.full(180, 2.0)] * 10
        m = plaque_size(flags, profiles, 1.0)
        assert m.slice_range == (4, 10)
        assert len(m.runs) == 2


class TestVolumeAnalysis:
    def test_uniform_tube_grade_constant(self):
        spec, vol = tube_volume()
        report = stenosis_grade(vol)
        designed = 1 - spec.lib_radius_mm / spec.mab_radius_mm
        values = [v for v in report.per_slice if v is not None]
        assert len(values) > 30
        interior = values[3:-3]
        assert np.ptp(interior) < 0.04
        assert report.grade == pytest.approx(designed, abs=0.05)
        assert report.grade >= max(values) - 1e-12

    def test_bump_phantom_grade(self):
        spec = PhantomSpec(
            length_mm=30.0,
            mab_radius_mm=4.0,
            lib_radius_mm=3.2,
            bump=BumpSpec(center_mm=15.0, length_mm=10.0, depth_mm=1.2),
        )
        _, vol = tube_volume(spec, n_frames=121, pitch=0.25)
        report = stenosis_grade(vol)
        assert report.grade == pytest.approx(0.5, abs=0.05)
        z_mm = vol.origin[2] + report.argmax_slice * vol.spacing
        assert 10.0 <= z_mm <= 20.0

    def test_no_vessel_raises(self):
        empty = Volume(
            origin=np.zeros(3),
            spacing=0.2,
            voxels=np.zeros((10, 10, 10), np.uint8),
            label_mode=True,
            fill_mask=np.ones((10, 10, 10), bool),
        )
        with pytest.raises(VesselNotFoundError):
            stenosis_grade(empty)

    def test_measure_healthy_tube(self):
        spec, vol = tube_volume()
        report = measure_label_volume(vol)
        assert report["diseased"] is False
        assert report["plaque_length_mm"] == 0.0
        assert report["flags_source"] == "thickness"

    def test_measure_bump_phantom(self):
        spec = PhantomSpec(
            length_mm=30.0,
            mab_radius_mm=4.0,
            lib_radius_mm=3.2,
            bump=BumpSpec(center_mm=15.0, length_mm=10.0, depth_mm=1.2),
        )
        _, vol = tube_volume(spec, n_frames=121, pitch=0.25)
        report = measure_label_volume(vol)
        assert report["diseased"] is True
        assert report["grade"] == pytest.approx(0.5, abs=0.05)
        assert report["plaque_length_mm"] == pytest.approx(10.0, abs=0.5)
        assert report["plaque_thickness_mm"] == pytest.approx(2.0, abs=0.25)

    def test_external_flags_override(self):
        spec, vol = tube_volume()
        nz = vol.dims[2]
        flags = [False] * nz
        for i in range(10, 15):
            flags[i] = True
        report = measure_label_volume(vol, external_flags=flags)
        assert report["diseased"] is True
        assert report["flags_source"] == "external"
        assert report["plaque_slice_range"] == [10, 15]

    def test_bifurcation_largest_component_used(self):
        # two disjoint tubes in one volume: the larger one drives the report
        n = 96
        vox = np.zeros((n, n, 8), np.uint8)
        yy, xx = np.mgrid[0:n, 0:n]
        big_mab = np.sqrt((xx - 30.0) ** 2 + (yy - 48.0) ** 2) * 0.2 <= 5.0
        big_lib = np.sqrt((xx - 30.0) ** 2 + (yy - 48.0) ** 2) * 0.2 <= 4.0
        small_mab = np.sqrt((xx - 75.0) ** 2 + (yy - 48.0) ** 2) * 0.2 <= 2.0
        small_lib = np.sqrt((xx - 75.0) ** 2 + (yy - 48.0) ** 2) * 0.2 <= 1.0
        sl = np.zeros((n, n), np.uint8)
        sl[big_mab | small_mab] = 1
        sl[big_lib | small_lib] = 2
        for iz in range(8):
            vox[:, :, iz] = sl.T
        vol = Volume(np.zeros(3), 0.2, vox, label_mode=True)
        report = stenosis_grade(vol)
        assert report.bifurcation_slices == list(range(8))
        # the big annulus has S = 0.2; the ignored small one would give 0.5
        assert report.grade == pytest.approx(0.2, abs=0.03)


class TestCentroidPathAndCut:
    def test_path_follows_axis(self):
        spec, vol = tube_volume()
        path = centroid_path(vol)
        ax, ay = spec.axis_xy()
        valid = path.valid
        assert valid.sum() > 30
        np.testing.assert_allclose(path.points[valid, 0], ax, atol=0.15)
        np.testing.assert_allclose(path.points[valid, 1], ay, atol=0.15)

    def test_symmetric_tube_cuts_identical_across_angles(self):
        spec = PhantomSpec(length_mm=10.0)
        seq, masks, gt = generate_sweep(spec, n_frames=41, frame_pitch_mm=0.25)
        from carovol.recon import fdp_reconstruct, hole_fill

        vol = hole_fill(fdp_reconstruct(seq, ReconConfig(spacing=0.2)), 3)
        label = reconstruct_mask_volume(
            masks, gt, spec.pixel_spacing_mm, ReconConfig(spacing=0.2, hole_fill_radius=3)
        )
        path = centroid_path(label)
        cuts = [cut_longitudinal(vol, path, t) for t in (0.0, 15.0, -15.0, 30.0, -30.0)]
        mid = cuts[0].image.shape[0] // 2
        band = int(round(6.0 / cuts[0].sample_step_mm))  # vessel + margin
        ref = cuts[0].image[mid - band : mid + band + 1]
        core = int(round(2.0 / cuts[0].sample_step_mm))  # deep lumen rows
        for cut in cuts[1:]:
            img = cut.image[mid - band : mid + band + 1]
            # deep plateaus are exactly equal; only voxelized boundaries wobble
            np.testing.assert_array_equal(
                img[band - core : band + core + 1], ref[band - core : band + core + 1]
            )
            assert np.mean(np.abs(img - ref)) < 8.0

    def test_tube_walls_are_straight_bands(self):
        spec = PhantomSpec(length_mm=10.0)
        seq, masks, gt = generate_sweep(spec, n_frames=41, frame_pitch_mm=0.25)
        from carovol.recon import fdp_reconstruct, hole_fill

        vol = hole_fill(fdp_reconstruct(seq, ReconConfig(spacing=0.2)), 3)
        label = reconstruct_mask_volume(
            masks, gt, spec.pixel_spacing_mm, ReconConfig(spacing=0.2, hole_fill_radius=3)
        )
        path = centroid_path(label)
        cut = cut_longitudinal(vol, path, 0.0)
        img = cut.image[:, path.valid]
        mid = img.shape[0] // 2
        # lumen band centered on the centroid row
        assert np.all(np.abs(img[mid] - spec.lumen_intensity) < 20)
        # wall bands at +- lumen radius .. mab radius
        wall_row = mid + int(round((spec.lib_radius_mm + 0.4) / cut.sample_step_mm))
        assert np.median(img[wall_row]) > 100

    def test_mirror_symmetry(self):
        # volume symmetric under y-mirror but not x-mirror: cuts at theta and
        # -theta are mirror images of each other along the sample axis
        spec = PhantomSpec(length_mm=10.0, lib_radius_mm=2.6, lumen_offset_mm=(1.0, 0.0))
        seq, masks, gt = generate_sweep(spec, n_frames=41, frame_pitch_mm=0.25)
        from carovol.recon import fdp_reconstruct, hole_fill

        vol = hole_fill(fdp_reconstruct(seq, ReconConfig(spacing=0.2)), 3)
        nz = vol.dims[2]
        ax, ay = spec.axis_xy()
        pts = np.tile([ax, ay, 0.0], (nz, 1))
        pts[:, 2] = vol.origin[2] + np.arange(nz) * vol.spacing
        path = CentroidPath(points=pts, valid=np.ones(nz, bool))
        plus = cut_longitudinal(vol, path, 25.0).image
        minus = cut_longitudinal(vol, path, -25.0).image
        assert np.mean(np.abs(minus - plus[::-1])) < 2.0
        assert np.mean(np.abs(minus - plus)) > np.mean(np.abs(minus - plus[::-1]))

    def test_rejects_bad_theta_and_empty_path(self):
        spec, vol = tube_volume()
        path = centroid_path(vol)
        with pytest.raises(ValueError):
            cut_longitudinal(vol, path, 90.0)
        empty = CentroidPath(
            points=np.full((vol.dims[2], 3), np.nan), valid=np.zeros(vol.dims[2], bool)
        )
        with pytest.raises(ValueError):
            cut_longitudinal(vol, empty, 0.0)
