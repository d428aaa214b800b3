"""
Tests for triangular families: constructors, separation and mesh constants,
separated subfamilies and the family file format.
"""

import math

import numpy as np
import pytest

from bandlimit_lab.families import (
    TriangularFamily,
    extract_separated_subfamily,
    family_from_levels,
    format_family,
    make_grid_family,
    make_random_family,
    mesh_constant,
    parse_family,
    perturb_family,
    read_family,
    separation_constant,
    separation_report,
    union_family,
    write_family,
)
from bandlimit_lab.manifold import Sphere2, Torus2, create_manifold, pairwise_distances
from bandlimit_lab.utils import ConfigError, InvalidParameterError, MissingLevelError


@pytest.fixture
def torus():
    """Flat unit torus."""
    return Torus2()


@pytest.fixture
def random_family(torus):
    """Uniform random torus family at two bandwidths."""
    return make_random_family(torus, [8, 12], nu=2.0, seed=11)


# Test the family container
def test_family_levels_sorted_and_read_only(torus):
    """Levels are keyed by float L in increasing order and cannot be modified."""
    Z = family_from_levels(torus, {12: np.zeros((3, 2)), 4: np.full((2, 2), 0.5)}, "loaded")
    assert Z.bandwidths == [4.0, 12.0]
    assert Z.m_L(12) == 3
    assert Z.total_points() == 5
    assert 4 in Z and 5 not in Z
    with pytest.raises(ValueError):
        Z[4][0, 0] = 0.1


def test_family_canonicalizes_points(torus):
    """Stored points lie in the chart's canonical range."""
    Z = family_from_levels(torus, {5: np.array([[1.25, -0.25]])})
    assert np.allclose(Z[5], [[0.25, 0.75]])


def test_family_missing_level(torus):
    """Asking for an absent level raises MissingLevelError."""
    Z = make_grid_family(torus, [4], nu=1.5)
    with pytest.raises(MissingLevelError):
        Z[5]


def test_family_rejects_bad_input(torus):
    """Empty families, empty levels and unknown provenances are invalid."""
    with pytest.raises(InvalidParameterError):
        TriangularFamily(torus, {}, "grid")
    with pytest.raises(InvalidParameterError):
        TriangularFamily(torus, {3.0: np.zeros((0, 2))}, "grid")
    with pytest.raises(InvalidParameterError):
        TriangularFamily(torus, {3.0: np.zeros((1, 2))}, "handmade")


# Test constructors
def test_grid_family_sizes(torus):
    """The torus grid family has ceil(nu L)^2 points per level."""
    Z = make_grid_family(torus, [10, 20], nu=1.5)
    assert Z.m_L(10) == 15 * 15
    assert Z.m_L(20) == 30 * 30
    assert Z.provenance == "grid"


def test_sphere_grid_family_sizes():
    """The sphere grid family has ceil((nu L)^2) points per level."""
    Z = make_grid_family(Sphere2(), [5, 9], nu=1.3)
    assert Z.m_L(5) == math.ceil((1.3 * 5) ** 2)
    assert Z.m_L(9) == math.ceil((1.3 * 9) ** 2)


def test_random_family_matches_grid_sizes(torus):
    """Random levels have the grid sizes and are reproducible from the seed."""
    grid = make_grid_family(torus, [6, 9], nu=2.0)
    first = make_random_family(torus, [6, 9], nu=2.0, seed=3)
    second = make_random_family(torus, [9, 6], nu=2.0, seed=3)
    assert [first.m_L(L) for L in first] == [grid.m_L(L) for L in grid]
    for L in first:
        assert np.array_equal(first[L], second[L])


@pytest.mark.parametrize("nu", [0.0, -1.0])
def test_constructors_reject_nonpositive_oversampling(torus, nu):
    """Oversampling must be positive."""
    with pytest.raises(InvalidParameterError):
        make_grid_family(torus, [5], nu)
    with pytest.raises(InvalidParameterError):
        make_random_family(torus, [5], nu)


# Test separation and mesh constants
def test_lattice_separation_and_mesh(torus):
    """A 20x20 lattice at L = 10 has s = 0.5 and eta = 10 sqrt(2) / 40."""
    Z = make_grid_family(torus, [10], nu=2.0)
    assert separation_constant(torus, Z[10], 10) == pytest.approx(0.5)
    assert mesh_constant(torus, Z[10], 10) == pytest.approx(10 * math.sqrt(2) / 40)


def test_single_point_separation_is_infinite(torus):
    """One point has no pairs."""
    assert separation_constant(torus, np.array([[0.2, 0.3]]), 4) == math.inf


def test_separation_report_rows(torus):
    """Rows carry L, m_L, k_L, ratio, s and eta for every level."""
    Z = make_grid_family(torus, [7, 13], nu=1.5)
    report = separation_report(torus, Z)
    rows = report.rows()
    assert [row["L"] for row in rows] == [7.0, 13.0]
    assert rows[1]["k_L"] == 13
    assert rows[1]["ratio"] == pytest.approx(Z.m_L(13) / 13)
    assert report.min_separation == pytest.approx(min(row["s"] for row in rows))
    assert report[13].mesh == rows[1]["eta"]
    with pytest.raises(MissingLevelError):
        report[99]


# Test separated subfamilies
def test_extracted_subfamily_is_separated(torus, random_family):
    """Kept points are target_s/L apart and every dropped point is near a kept one."""
    target = 0.8
    sub = extract_separated_subfamily(torus, random_family, target)
    assert sub.provenance == "separated"
    for L in random_family:
        kept = sub[L]
        assert separation_constant(torus, kept, L) >= target * (1 - 2e-9)
        d = pairwise_distances(torus, random_family[L], kept)
        assert d.min(axis=1).max() < target / L + 1e-12


def test_extraction_keeps_separated_lattice(torus):
    """A lattice already at the target separation survives intact."""
    Z = make_grid_family(torus, [10], nu=2.0)
    sub = extract_separated_subfamily(torus, Z, 0.5)
    assert sub.m_L(10) == Z.m_L(10)


def test_extraction_rejects_nonpositive_target(torus, random_family):
    """The target separation must be positive."""
    with pytest.raises(InvalidParameterError):
        extract_separated_subfamily(torus, random_family, 0.0)


# Test perturbation and union
def test_perturbation_stays_within_radius(torus):
    """Each point moves by at most delta/L."""
    Z = make_grid_family(torus, [6, 10], nu=2.0)
    moved = perturb_family(torus, Z, delta=0.3, seed=5)
    assert moved.provenance == "perturbed"
    for L in Z:
        shift = torus.paired_distances(Z[L], moved[L])
        assert shift.max() <= 0.3 / L + 1e-12
        assert shift.max() > 0


def test_zero_perturbation_copies(torus):
    """delta = 0 leaves every point where it was."""
    Z = make_grid_family(torus, [6], nu=2.0)
    assert np.array_equal(perturb_family(torus, Z, 0.0)[6], Z[6])
    with pytest.raises(InvalidParameterError):
        perturb_family(torus, Z, -0.1)


def test_union_concatenates_shared_levels(torus):
    """The union keeps shared levels only, with point counts added."""
    a = make_grid_family(torus, [5, 8], nu=1.5)
    b = make_random_family(torus, [8, 11], nu=1.0, seed=2)
    both = union_family(a, b)
    assert both.bandwidths == [8.0]
    assert both.m_L(8) == a.m_L(8) + b.m_L(8)
    with pytest.raises(MissingLevelError):
        union_family(a, make_grid_family(torus, [20], nu=1.0))


def test_union_requires_same_manifold(torus):
    """Families on different manifolds cannot be united."""
    a = make_grid_family(torus, [5], nu=1.5)
    b = make_grid_family(Sphere2(), [5], nu=1.5)
    with pytest.raises(InvalidParameterError):
        union_family(a, b)


# Test the family file format
def test_family_file_layout(torus):
    """Lines read 'L j coords' with j counted from 1 within each level."""
    Z = family_from_levels(torus, {3: [[0.0, 0.5], [0.25, 0.75]], 1.5: [[0.125, 0.0]]})
    lines = format_family(Z).splitlines()
    assert lines == ["1.5 1 0.125 0.0", "3.0 1 0.0 0.5", "3.0 2 0.25 0.75"]


def test_family_file_preserves_coordinates(tmp_path):
    """Writing and reading a family keeps every coordinate bit for bit."""
    M = create_manifold("product(torus2,circle)")
    Z = make_random_family(M, [4, 6], nu=1.0, seed=8)
    path = write_family(tmp_path / "nested" / "family.txt", Z)
    loaded = read_family(path, M)
    assert loaded.provenance == "loaded"
    assert loaded.bandwidths == Z.bandwidths
    for L in Z:
        assert np.array_equal(loaded[L], Z[L])


@pytest.mark.parametrize(
    "text",
    [
        "",
        "# only a comment\n",
        "4 1 0.1\n",
        "4 1 0.1 zero\n",
        "4 2 0.1 0.2\n",
        "4 1 0.1 0.2\n4 3 0.3 0.4\n",
        "4 1 nan 0.2\n",
    ],
)
def test_parse_family_rejects_malformed_text(torus, text):
    """Malformed family files raise ConfigError."""
    with pytest.raises(ConfigError):
        parse_family(torus, text)


def test_parse_family_skips_comments_and_blank_lines(torus):
    """Comments and blank lines carry no points."""
    Z = parse_family(torus, "# header\n\n2 1 0.1 0.2\n  \n2 2 0.3 0.4\n")
    assert Z.m_L(2) == 2


def test_read_missing_family_file(torus, tmp_path):
    """A missing file is a configuration error."""
    with pytest.raises(ConfigError):
        read_family(tmp_path / "absent.txt", torus)
