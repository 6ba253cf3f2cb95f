import itertools
import math
import random

import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from docqa.errors import DataError
from docqa.geometry import BoundingBox, Document, Word
from docqa.ordering import (
    OrderStrategy,
    RasterScanParams,
    ReadingOrder,
    load_orders,
    order_distance,
    raster_scan_order,
    save_orders,
    shuffled_order,
    standard_order,
)
from layouts import (
    grid_layout,
    layout_suite,
    permuted_copy,
    raster_oracle,
    scaled_copy,
    text_sequence,
    two_column_layout,
)


def doc_from_boxes(boxes, doc_id="d0", reading_ordered=False):
    words = [
        Word(index=i, text=f"t{i}", box=BoundingBox(*b)) for i, b in enumerate(boxes)
    ]
    return Document(doc_id=doc_id, words=words, provided_order_is_reading_order=reading_ordered)


class TestStandardOrder:
    def test_identity_permutation(self):
        doc = doc_from_boxes([(0, 0, 1, 1), (2, 0, 3, 1), (4, 0, 5, 1)], reading_ordered=True)
        order = standard_order(doc)
        assert list(order.permutation) == [0, 1, 2]
        assert order.strategy is OrderStrategy.STANDARD

    def test_empty_document(self):
        doc = Document(doc_id="d0", words=[], provided_order_is_reading_order=True)
        assert list(standard_order(doc).permutation) == []

    def test_unordered_document_refused(self):
        doc = doc_from_boxes([(0, 0, 1, 1)], reading_ordered=False)
        with pytest.raises(DataError, match="document carries no standard reading order"):
            standard_order(doc)


class TestRasterScan:
    def test_singleton(self):
        doc = doc_from_boxes([(3, 3, 4, 4)])
        assert list(raster_scan_order(doc).permutation) == [0]

    def test_two_by_two_grid_hand_trace(self):
        # Unit boxes at the four grid corners, fed in the order
        # bottom-right, top-left, bottom-left, top-right. Worked by hand:
        # seed is the top-left word, its line picks up top-right, then the
        # bottom row repeats the same left-to-right pass.
        doc = doc_from_boxes(
            [
                (20, 20, 21, 21),  # bottom-right
                (0, 0, 1, 1),      # top-left
                (0, 20, 1, 21),    # bottom-left
                (20, 0, 21, 1),    # top-right
            ]
        )
        assert list(raster_scan_order(doc).permutation) == [1, 3, 2, 0]

    def test_aligned_columns_merge_into_lines(self):
        # Two columns with shared baselines: each row reads across both
        # columns, left to right.
        doc = two_column_layout("cols", rows=2, aligned=True)
        # Words 0,1 are the left column rows, 2,3 the right column rows.
        assert list(raster_scan_order(doc).permutation) == [0, 2, 1, 3]

    def test_matches_oracle_on_layout_suite(self):
        for doc in layout_suite(40, seed=11):
            got = list(raster_scan_order(doc).permutation)
            assert got == raster_oracle(doc, 0.5), doc.doc_id

    def test_threshold_factor_is_honored(self):
        # Rows 10 apart, box height 4: factor 0.5 keeps them separate lines,
        # a large factor swallows everything into one line.
        doc = grid_layout("g", rows=2, cols=2, y_gap=6.0, height=4.0)
        narrow = raster_scan_order(doc, RasterScanParams(line_threshold_factor=0.5))
        wide = raster_scan_order(doc, RasterScanParams(line_threshold_factor=10.0))
        assert list(narrow.permutation) == [0, 1, 2, 3]
        # One giant line sorts by centroid_x alone, interleaving the rows.
        assert list(wide.permutation) == [0, 2, 1, 3]
        assert len(wide.line_groups) == 1

    def test_input_order_invariance(self):
        base = grid_layout("g", rows=3, cols=4)
        expected = text_sequence(base, raster_scan_order(base).permutation)
        for seed in range(5):
            shuffled = permuted_copy(base, seed)
            got = text_sequence(shuffled, raster_scan_order(shuffled).permutation)
            assert got == expected

    def test_uniform_scaling_invariance(self):
        base = two_column_layout("cols", rows=3, aligned=True)
        expected = list(raster_scan_order(base).permutation)
        for factor in (0.5, 2.0, 4.0):
            assert list(raster_scan_order(scaled_copy(base, factor)).permutation) == expected

    def test_line_groups_flatten_to_permutation(self):
        doc = grid_layout("g", rows=2, cols=3)
        order = raster_scan_order(doc)
        assert order.line_groups is not None
        flattened = [i for group in order.line_groups for i in group]
        assert flattened == list(order.permutation)

    def test_nonpositive_factor_rejected(self):
        with pytest.raises(ValueError):
            RasterScanParams(line_threshold_factor=0.0)


class TestShuffledOrder:
    def test_singleton_any_seed(self):
        doc = doc_from_boxes([(0, 0, 1, 1)])
        assert list(shuffled_order(doc, 12345).permutation) == [0]

    def test_same_seed_same_permutation(self):
        doc = grid_layout("g", rows=1, cols=5)
        first = shuffled_order(doc, 7)
        second = shuffled_order(doc, 7)
        assert first.permutation == second.permutation
        assert first.params == {"seed": 7}

    def test_different_seeds_usually_differ(self):
        doc = grid_layout("g", rows=2, cols=5)
        perms = {shuffled_order(doc, seed).permutation for seed in range(20)}
        assert len(perms) > 1

    def test_negative_seed_rejected(self):
        doc = grid_layout("g", rows=1, cols=2)
        with pytest.raises(ValueError):
            shuffled_order(doc, -1)

    def test_uniform_over_permutations(self):
        # 10,000 seeded shuffles of 5 items: every one of the 120 permutations
        # should land within 5 sigma of the uniform expectation.
        doc = grid_layout("g", rows=1, cols=5)
        counts: dict[tuple[int, ...], int] = {}
        draws = 10_000
        for seed in range(draws):
            perm = shuffled_order(doc, seed).permutation
            counts[perm] = counts.get(perm, 0) + 1
        assert len(counts) == 120
        p = 1.0 / 120.0
        sigma = math.sqrt(draws * p * (1 - p))
        for perm, count in counts.items():
            assert abs(count - draws * p) <= 5 * sigma, perm


def brute_force_kendall(perm_a, perm_b):
    pos_a = {v: i for i, v in enumerate(perm_a)}
    pos_b = {v: i for i, v in enumerate(perm_b)}
    discordant = 0
    for x, y in itertools.combinations(perm_a, 2):
        if (pos_a[x] - pos_a[y]) * (pos_b[x] - pos_b[y]) < 0:
            discordant += 1
    return discordant


def make_order(perm, doc_id="d0"):
    return ReadingOrder(
        doc_id=doc_id,
        permutation=tuple(perm),
        strategy=OrderStrategy.SHUFFLED,
        params={"seed": 0},
    )


class TestOrderDistance:
    def test_identical_orders(self):
        assert order_distance(make_order([0, 1, 2]), make_order([0, 1, 2])) == 0

    def test_full_reversal_three_items(self):
        # All 3 pairs disagree.
        assert order_distance(make_order([0, 1, 2]), make_order([2, 1, 0])) == 3

    def test_single_swap(self):
        assert order_distance(make_order([0, 1]), make_order([1, 0])) == 1

    def test_mismatched_doc_id_rejected(self):
        with pytest.raises(DataError, match="doc"):
            order_distance(make_order([0, 1]), make_order([0, 1], doc_id="other"))

    def test_mismatched_length_rejected(self):
        with pytest.raises(DataError, match="length"):
            order_distance(make_order([0, 1]), make_order([0, 1, 2]))

    def test_matches_brute_force_on_random_permutations(self):
        rng = random.Random(3)
        for n in (2, 3, 5, 8, 13, 30):
            for _ in range(10):
                a = list(range(n))
                b = list(range(n))
                rng.shuffle(a)
                rng.shuffle(b)
                assert order_distance(make_order(a), make_order(b)) == brute_force_kendall(a, b)

    def test_agrees_with_scipy_kendalltau(self):
        rng = random.Random(9)
        n = 40
        a = list(range(n))
        b = list(range(n))
        rng.shuffle(a)
        rng.shuffle(b)
        pos_a = {v: i for i, v in enumerate(a)}
        pos_b = {v: i for i, v in enumerate(b)}
        xs = [pos_a[v] for v in range(n)]
        ys = [pos_b[v] for v in range(n)]
        tau = scipy.stats.kendalltau(xs, ys).statistic
        expected = round((1 - tau) * n * (n - 1) / 4)
        assert order_distance(make_order(a), make_order(b)) == expected


class TestReadingOrderType:
    def test_non_bijection_rejected(self):
        with pytest.raises(ValueError):
            make_order([0, 0, 1])
        with pytest.raises(ValueError):
            make_order([0, 2])

    def test_round_trip_through_orders_file(self, tmp_path):
        doc = grid_layout("g", rows=2, cols=2)
        orders = [
            standard_order(
                Document(
                    doc_id="plain",
                    words=doc.words,
                    provided_order_is_reading_order=True,
                )
            ),
            raster_scan_order(doc),
            shuffled_order(doc, 42),
        ]
        path = tmp_path / "orders.jsonl"
        save_orders(path, orders)
        loaded = load_orders(path)
        assert [o.doc_id for o in loaded] == ["plain", "g", "g"]
        assert [o.strategy for o in loaded] == [
            OrderStrategy.STANDARD,
            OrderStrategy.RASTER_SCAN,
            OrderStrategy.SHUFFLED,
        ]
        assert loaded[1].permutation == orders[1].permutation
        assert loaded[2].params == {"seed": 42}

    def test_load_rejects_bad_permutation(self, tmp_path):
        path = tmp_path / "orders.jsonl"
        path.write_text(
            '{"doc_id": "d", "strategy": "standard", "params": {}, "permutation": [0, 0]}\n'
        )
        with pytest.raises(DataError, match="line 1"):
            load_orders(path)


@st.composite
def random_documents(draw):
    n = draw(st.integers(min_value=0, max_value=12))
    boxes = []
    for _ in range(n):
        x = draw(st.floats(0, 500))
        y = draw(st.floats(0, 500))
        w = draw(st.floats(0, 40))
        h = draw(st.floats(0, 40))
        boxes.append((x, y, x + w, y + h))
    return doc_from_boxes(boxes)


@settings(max_examples=60)
@given(doc=random_documents(), factor=st.floats(0.05, 3.0))
def test_raster_output_is_always_a_permutation(doc, factor):
    perm = raster_scan_order(doc, RasterScanParams(line_threshold_factor=factor)).permutation
    assert sorted(perm) == list(range(len(doc.words)))


@settings(max_examples=60)
@given(doc=random_documents(), seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_shuffle_output_is_always_a_permutation(doc, seed):
    perm = shuffled_order(doc, seed).permutation
    assert sorted(perm) == list(range(len(doc.words)))
