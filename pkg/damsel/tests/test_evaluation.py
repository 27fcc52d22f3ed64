# %% IMPORTS
# Package imports
import numpy as np
import pytest

# DAMSEL imports
from damsel.autodiff import double_precision
from damsel.evaluation import (CaseMetrics, ConfusionCounts, confusion_counts,
                               dense_infer, dense_probabilities, domain_accuracy,
                               evaluate_cases, fresh_probe_accuracy, metrics_table,
                               probe_domain_accuracy, segmentation_metrics, summarize,
                               tile_lattice, train_probe_discriminator)
from damsel.networks import (DiscriminatorSpec, SegmenterSpec, TapSet,
                             build_discriminator, build_segmenter, tap_channels)
from damsel.sampling import CaseRecord, UnlabelledCase

# Marks tests in this module as quick
pytestmark = pytest.mark.quick


def tiny_segmenter(seed=2):
    return build_segmenter(SegmenterSpec.with_widths([1]*8, fused_width=2), seed)


def random_case(shape, seed=0, domain='S', case_id='S00'):
    rng = np.random.default_rng(seed)
    image = rng.normal(size=(2,) + tuple(shape)).astype(np.float32)
    labels = (rng.random(shape) < 0.1).astype(np.uint8)
    return CaseRecord(image, domain, case_id, labels=labels)


# %% PYTEST DEFINITIONS
class TestTileLattice(object):
    @pytest.mark.parametrize('size, out', [(24, 9), (20, 9), (1, 9), (30, 25), (7, 3)])
    def test_every_voxel_once(self, size, out):
        (tiles,) = tile_lattice((size,), out, 3)
        covered = np.zeros(size, dtype=int)
        step = 3 * (out // 3)
        for center, start, stop in tiles:
            assert center % step == 0
            assert center - out // 2 <= start and stop <= center - out // 2 + out
            covered[start:stop] += 1
        assert np.all(covered == 1)

    def test_step_below_factor(self):
        with pytest.raises(ValueError):
            tile_lattice((10, 10, 10), 2, 3)


class TestDenseInference(object):
    def test_label_map(self):
        segmenter = tiny_segmenter()
        case = random_case((24, 21, 17))
        labels = dense_infer(segmenter, case)
        assert labels.shape == (24, 21, 17)
        assert labels.dtype == np.uint8
        assert set(np.unique(labels)) <= {0, 1}
        probs = dense_probabilities(segmenter, case, batch_size=3)
        assert probs.shape == (2, 24, 21, 17)
        assert np.allclose(probs.sum(axis=0), 1, atol=1e-5)
        assert np.array_equal(np.argmax(probs, axis=0), labels)

    def test_tiling_invariance(self):
        segmenter = tiny_segmenter(5)
        case = random_case((30, 30, 30), seed=1)
        with double_precision(*segmenter.parameters().values()):
            small = dense_probabilities(segmenter, case, tile_extent=25)
            large = dense_probabilities(segmenter, case, tile_extent=41)
        assert np.allclose(small, large, rtol=0, atol=1e-6)

    def test_constant_input(self):
        segmenter = tiny_segmenter()
        case = UnlabelledCase(np.zeros((2, 20, 20, 20), dtype=np.float32), 'T', 'T00')
        probs = dense_probabilities(segmenter, case)
        assert np.allclose(probs, probs[:, :1, :1, :1], rtol=0, atol=1e-6)

    def test_invalid_tiles(self):
        segmenter = tiny_segmenter()
        case = random_case((20, 20, 20))
        with pytest.raises(ValueError):
            dense_infer(segmenter, case, tile_extent=17)
        with pytest.raises(ValueError):
            dense_infer(segmenter, case, tile_extent=26)
        assert dense_infer(segmenter, case, tile_extent=19).shape == (20, 20, 20)


class TestMetrics(object):
    def test_counts(self):
        pred = np.array([1, 1, 0, 0, 1, 0])
        truth = np.array([1, 0, 1, 0, 1, 0])
        counts = confusion_counts(pred, truth)
        assert counts == ConfusionCounts(tp=2, fp=1, fn=1, tn=2)
        assert counts.total == 6
        mask = np.array([1, 1, 1, 0, 0, 0], dtype=bool)
        assert confusion_counts(pred, truth, mask) == ConfusionCounts(1, 1, 1, 0)
        assert (counts + counts).as_dict() == {'tp': 4, 'fp': 2, 'fn': 2, 'tn': 4}

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            confusion_counts(np.zeros(4), np.zeros(5))
        with pytest.raises(ValueError):
            confusion_counts(np.zeros(4), np.zeros(4), np.ones(3))
        with pytest.raises(ValueError):
            ConfusionCounts(tp=-1)

    def test_values(self):
        metrics = segmentation_metrics(ConfusionCounts(tp=6, fp=2, fn=4, tn=100), 'a')
        assert metrics.dsc == pytest.approx(12/18)
        assert metrics.recall == pytest.approx(0.6)
        assert metrics.precision == pytest.approx(0.75)
        assert metrics.case_id == 'a'

    def test_degenerate_cases(self):
        both_empty = segmentation_metrics(ConfusionCounts(tn=10))
        assert (both_empty.dsc, both_empty.recall, both_empty.precision) == (1, 1, 1)
        empty_truth = segmentation_metrics(ConfusionCounts(fp=3, tn=7))
        assert (empty_truth.dsc, empty_truth.recall, empty_truth.precision) == (0, 1, 0)
        empty_pred = segmentation_metrics(ConfusionCounts(fn=3, tn=7))
        assert (empty_pred.dsc, empty_pred.recall, empty_pred.precision) == (0, 0, 1)

    def test_against_direct_computation(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            size = rng.integers(1, 40)
            pred = rng.random(size) < rng.random()
            truth = rng.random(size) < rng.random()
            metrics = segmentation_metrics(confusion_counts(pred, truth))
            inter = np.sum(pred & truth)
            if pred.any() or truth.any():
                assert metrics.dsc == pytest.approx(2*inter / (pred.sum() + truth.sum()))
            if truth.any():
                assert metrics.recall == pytest.approx(inter / truth.sum())
            if pred.any():
                assert metrics.precision == pytest.approx(inter / pred.sum())
            swapped = segmentation_metrics(confusion_counts(truth, pred))
            assert swapped.dsc == pytest.approx(metrics.dsc)
            assert 0 <= metrics.dsc <= 1

    def test_table(self):
        metrics = [CaseMetrics('b', 0.5, 0.4, 0.6, ConfusionCounts(1, 1, 1, 1)),
                   CaseMetrics('a', 0.7, 0.8, 0.6, ConfusionCounts(3, 1, 3, 1))]
        table = metrics_table(metrics)
        assert list(table.columns) == ['case_id', 'dsc', 'recall', 'precision',
                                       'tp', 'fp', 'fn', 'tn']
        assert list(table['case_id']) == ['a', 'b', 'mean', 'std']
        assert table['dsc'].iloc[2] == pytest.approx(0.6)
        assert table['dsc'].iloc[3] == pytest.approx(0.1)
        assert table['tp'].iloc[3] == pytest.approx(1.0)
        assert summarize(metrics) == 'DSC 60.0 (10.0), Recall 60.0 (20.0), Precision 60.0 (0.0)'
        with pytest.raises(ValueError):
            metrics_table([])

    def test_evaluate_cases(self):
        segmenter = tiny_segmenter()
        cases = [random_case((18, 18, 18), seed=i, case_id='S{:02d}'.format(i))
                 for i in (2, 1)]
        mask = np.zeros((18, 18, 18), dtype=bool)
        mask[4:14, 4:14, 4:14] = True
        cases[0].mask = mask
        metrics = evaluate_cases(segmenter, cases)
        assert [m.case_id for m in metrics] == ['S01', 'S02']
        assert metrics[1].counts.total == 1000
        assert metrics[0].counts.total == 18**3
        assert all(0 <= m.dsc <= 1 for m in metrics)
        assert evaluate_cases(segmenter, cases, use_mask=False)[1].counts.total == 18**3

    def test_evaluate_needs_labels(self):
        case = UnlabelledCase(np.zeros((2, 10, 10, 10)), 'T', 'T00')
        with pytest.raises(ValueError):
            evaluate_cases(tiny_segmenter(), [case])
        with pytest.raises(ValueError):
            evaluate_cases(tiny_segmenter(), [])


class TestProbe(object):
    def setup_method(self):
        spec = SegmenterSpec.with_widths([1]*8, fused_width=2)
        self.tap_set = TapSet.parse('L4,6,8,10')
        self.segmenter = build_segmenter(spec, 1)
        self.discriminator = build_discriminator(DiscriminatorSpec(fm_count=2),
                                                 tap_channels(spec, self.tap_set), 1)

    def test_domain_accuracy(self):
        logits = np.zeros((4, 2, 1, 1, 1))
        logits[:, 1] = [[[[1.0]]], [[[-1.0]]], [[[2.0]]], [[[0.5]]]]
        assert domain_accuracy(logits, np.array([1, 0, 0, 1])) == 0.75
        averaged = np.zeros((2, 2, 3, 1, 1))
        averaged[0, 1] = [[[3.0]], [[-1.0]], [[-1.0]]]
        averaged[1, 0] = [[[1.0]], [[1.0]], [[-5.0]]]
        assert domain_accuracy(averaged, np.array([1, 0])) == 0.5

    def test_indistinguishable_domains(self):
        volume = np.zeros((2, 16, 16, 16), dtype=np.float32)
        source = [UnlabelledCase(volume, 'S', 'S00')]
        target = [UnlabelledCase(volume, 'T', 'T00')]
        accuracy = probe_domain_accuracy(self.segmenter, self.discriminator, source,
                                         target, 10, np.random.default_rng(0),
                                         self.tap_set, batch_size=4)
        assert accuracy == 0.5

    def test_probe_errors(self):
        case = UnlabelledCase(np.zeros((2, 16, 16, 16)), 'S', 'S00')
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            probe_domain_accuracy(self.segmenter, self.discriminator, [case], [case], 0, rng)
        with pytest.raises(ValueError):
            probe_domain_accuracy(self.segmenter, self.discriminator, [case], [case], 3, rng)
        with pytest.raises(ValueError):
            probe_domain_accuracy(self.segmenter, self.discriminator, [case], [], 4, rng)

    def test_fresh_probe_keeps_segmenter(self):
        rng = np.random.default_rng(3)
        source = [UnlabelledCase(rng.normal(size=(2, 16, 16, 16)), 'S', 'S00')]
        target = [UnlabelledCase(rng.normal(3.0, 1.0, size=(2, 16, 16, 16)), 'T', 'T00')]
        before = self.segmenter.parameter_values()
        discriminator = train_probe_discriminator(
            self.segmenter, source, target, self.tap_set, spec=DiscriminatorSpec(fm_count=2),
            steps=3, n_adv=2, rng=np.random.default_rng(4))
        assert discriminator.tap_channels == self.discriminator.tap_channels
        for name, value in self.segmenter.parameter_values().items():
            assert np.array_equal(value, before[name])
        accuracy = fresh_probe_accuracy(self.segmenter, source, target, source, target, 4,
                                        np.random.default_rng(5), self.tap_set,
                                        spec=DiscriminatorSpec(fm_count=2), steps=2, n_adv=2)
        assert 0 <= accuracy <= 1
