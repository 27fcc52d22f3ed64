# %% IMPORTS
# Built-in imports
import logging

# Package imports
import numpy as np
import pytest

# DAMSEL imports
from damsel.networks import SegmenterSpec, build_segmenter
from damsel.sampling import (
    CaseRecord, DatasetManifest, SegmentGeometry, UnlabelledCase,
    build_adv_batch, build_seg_batch, extract_segment, fill_missing_channel,
    normalize_volume, split_domain_channel, split_folds)

# Marks tests in this module as quick
pytestmark = pytest.mark.quick


def sort_quantile(values, q):
    # Linear interpolation between sorted ranks
    values = np.sort(values)
    rank = q*(values.size - 1)
    lo = int(np.floor(rank))
    hi = min(lo + 1, values.size - 1)
    return values[lo] + (rank - lo)*(values[hi] - values[lo])


def lesion_case(shape=(32, 32, 32), n_lesion=0, domain='S', case_id='c0', seed=0):
    rng = np.random.default_rng(seed)
    image = rng.normal(size=(2,) + shape).astype(np.float32)
    labels = np.zeros(shape, dtype=np.uint8)
    if n_lesion:
        labels.flat[rng.choice(labels.size, n_lesion, replace=False)] = 1
    return CaseRecord(image, domain, case_id, labels=labels)


class ExplodingCase(object):
    # Case whose labels must never be read
    def __init__(self, case):
        self.image = case.image
        self.mask = case.mask
        self.domain = case.domain
        self.case_id = case.case_id

    @property
    def labels(self):
        raise AssertionError('labels were read')


# %% PYTEST DEFINITIONS
class TestNormalization(object):
    def test_standardized(self):
        rng = np.random.default_rng(0)
        image = rng.gamma(2.0, 3.0, size=(3, 16, 16, 16)) + 7
        mask = rng.random((16, 16, 16)) > 0.3
        out = normalize_volume(image, mask)
        assert out.dtype == np.float32
        for c in range(3):
            values = out[c][mask].astype(np.float64)
            assert abs(values.mean()) <= 1e-5
            assert abs(values.std() - 1) <= 1e-3

    def test_constant_channel(self):
        image = np.ones((2, 8, 8, 8))
        image[1] = np.random.default_rng(1).normal(size=(8, 8, 8))
        out = normalize_volume(image)
        assert np.all(out[0] == 0)
        assert np.all(np.isfinite(out))

    def test_outlier_is_clamped(self):
        rng = np.random.default_rng(2)
        image = rng.normal(size=(1, 20, 20, 20))
        image[0, 3, 4, 5] = 1e6
        out = normalize_volume(image)
        values = image[0].ravel()
        low, high = sort_quantile(values, 0.02), sort_quantile(values, 0.98)
        clipped = np.clip(values, low, high)
        expected_max = (high - clipped.mean())/clipped.std()
        assert np.isclose(out.max(), expected_max, rtol=1e-5)
        assert out.max() < 5

    def test_empty_mask(self):
        with pytest.raises(ValueError):
            normalize_volume(np.ones((1, 4, 4, 4)), np.zeros((4, 4, 4), dtype=bool))

    def test_fill_missing_channel(self):
        rng = np.random.default_rng(3)
        image = rng.normal(size=(2, 5, 5, 5)).astype(np.float32)
        out = fill_missing_channel(image, 1)
        assert np.all(out[1] == -4)
        assert np.array_equal(out[0], image[0])
        assert np.array_equal(fill_missing_channel(out, 1), out)
        assert not np.all(image[1] == -4)
        with pytest.raises(IndexError):
            fill_missing_channel(image, 2)


class TestSegments(object):
    def test_extents(self):
        case = lesion_case((64, 64, 64))
        sample = extract_segment(case, (32, 32, 32), 25, 19, 3)
        assert sample.normal.shape == (2, 25, 25, 25)
        assert sample.low.shape == (2, 19, 19, 19)
        assert sample.labels.shape == (9, 9, 9)
        assert np.array_equal(sample.normal, case.image[:, 20:45, 20:45, 20:45])
        assert np.array_equal(sample.low, case.image[:, 5:60:3, 5:60:3, 5:60:3])
        assert np.array_equal(sample.labels, case.labels[28:37, 28:37, 28:37])

    def test_unit_factor_is_crop(self):
        case = lesion_case((30, 30, 30))
        sample = extract_segment(case, (15, 14, 13), 25, 19, 1)
        assert np.array_equal(sample.low, case.image[:, 6:25, 5:24, 4:23])

    def test_border_padding(self):
        case = lesion_case((32, 32, 32), n_lesion=500)
        case.labels[:] = 1
        sample = extract_segment(case, (0, 31, 5), 25, 19, 3)
        assert np.all(sample.normal[:, :12] == 0)
        assert np.all(sample.normal[:, :, 13:] == 0)
        assert np.all(sample.normal[:, :, :, :7] == 0)
        assert np.array_equal(sample.normal[:, 12:, :13, 7:], case.image[:, :13, 19:, :18])
        assert np.all(sample.labels[:4] == 0)
        assert np.all(sample.labels[4:, :5, :] == 1)
        assert np.all(sample.labels[:, 5:] == 0)

    def test_center_outside(self):
        with pytest.raises(ValueError):
            extract_segment(lesion_case((16, 16, 16)), (16, 0, 0), 25, 19, 3)

    def test_geometry_from_spec(self):
        spec = SegmenterSpec()
        assert SegmentGeometry.from_spec(spec) == SegmentGeometry(25, 19, 3, 9)
        assert SegmentGeometry.from_spec(spec, 41) == SegmentGeometry(41, 25, 3, 25)

    def test_labels_match_segmenter_output(self):
        # A segmenter copying the centre of its receptive field to class 1
        spec = SegmenterSpec.with_widths([1]*8, fused_width=1, in_channels=1)
        seg = build_segmenter(spec, seed=0)
        values = {}
        for name, value in seg.parameter_values().items():
            value = np.zeros_like(value)
            if name.startswith('seg.path_norm') and name.endswith('kernels'):
                value[0, 0, 1, 1, 1] = 1
            values[name] = value
        values['seg.fused.layer9.kernels'][0, 0] = 1
        values['seg.fused.layer10.kernels'][0, 0] = 1
        values['seg.classifier.kernels'][1, 0] = 1
        values['seg.classifier.bias'][0] = 0.5
        seg.load_parameter_values(values)

        shape = (24, 24, 24)
        labels = np.zeros(shape, dtype=np.uint8)
        labels[10, 12, 9] = 1
        case = CaseRecord(labels[None].astype(np.float32), 'S', 'marked', labels=labels)
        for center in [(10, 12, 9), (8, 14, 11), (13, 10, 6), (6, 12, 9)]:
            sample = extract_segment(case, center, 25, 19, 3)
            logits, _ = seg.forward(sample.normal[None], sample.low[None])
            prediction = logits.data[0].argmax(axis=0)
            assert sample.labels.sum() == 1
            assert np.array_equal(prediction, sample.labels)


class TestBatches(object):
    def test_seg_batch_foreground_count(self):
        case = lesion_case(n_lesion=50)
        rng = np.random.default_rng(0)
        for _ in range(20):
            batch = build_seg_batch([case], n=10, fg_fraction=0.5, rng=rng)
            assert batch.foreground.sum() == 5
            assert batch.labels.shape == (10, 9, 9, 9)
            assert np.all(batch.labels[batch.foreground][:, 4, 4, 4] == 1)
            assert np.all(batch.domains == 0)
        assert build_seg_batch([case], n=7, fg_fraction=0.5, rng=rng).foreground.sum() == 4

    def test_seg_batch_empty_foreground(self, caplog):
        case = lesion_case(n_lesion=0)
        with caplog.at_level(logging.WARNING):
            batch = build_seg_batch([case], n=10, rng=np.random.default_rng(1))
        assert batch.foreground.sum() == 0
        assert 'no foreground' in caplog.text

    def test_seg_batch_requires_labels(self):
        case = lesion_case()
        with pytest.raises(ValueError):
            build_seg_batch([case.unlabelled()], rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            build_seg_batch([], rng=np.random.default_rng(0))

    def test_weighted_sampling_beats_uniform(self):
        case = lesion_case((32, 32, 32), n_lesion=int(0.01*32**3), seed=4)
        rng = np.random.default_rng(2)
        weighted = np.mean([build_seg_batch([case], n=10, rng=rng).labels.mean()
                            for _ in range(300)])
        uniform = np.mean([build_seg_batch([case], n=10, fg_fraction=0, rng=rng).labels.mean()
                           for _ in range(300)])
        assert weighted > uniform

    def test_adv_batch_balance(self):
        geometry = SegmentGeometry(5, 3, 1, 1)
        sources = [lesion_case((8, 8, 8), case_id='s{}'.format(i)) for i in range(3)]
        targets = [lesion_case((8, 8, 8), domain='T', case_id='t{}'.format(i))
                   for i in range(2)]
        rng = np.random.default_rng(3)
        for _ in range(10000):
            batch = build_adv_batch(sources, targets, n=20, rng=rng, geometry=geometry)
            assert np.sum(batch.domains == 0) == 10
            assert np.sum(batch.domains == 1) == 10
        batch = build_adv_batch(sources, targets, n=2, rng=rng, geometry=geometry)
        assert list(batch.domains) == [0, 1]

    def test_adv_batch_is_label_blind(self):
        sources = [ExplodingCase(lesion_case(n_lesion=10))]
        targets = [ExplodingCase(lesion_case(domain='T', case_id='t'))]
        batch = build_adv_batch(sources, targets, n=4, rng=np.random.default_rng(4))
        assert len(batch) == 4
        assert all(s.labels is None for s in batch.samples)

    def test_adv_batch_errors(self):
        case = lesion_case()
        with pytest.raises(ValueError):
            build_adv_batch([case], [case], n=3)
        with pytest.raises(ValueError, match='target domain has no cases'):
            build_adv_batch([case], [], n=20)

    def test_adv_batch_mask(self):
        case = lesion_case((16, 16, 16), domain='T')
        case.mask = np.zeros((16, 16, 16), dtype=bool)
        case.mask[2, 3, 4] = True
        batch = build_adv_batch([case], [case], n=4, rng=np.random.default_rng(0),
                                use_mask=True)
        assert all(c == (2, 3, 4) for c in batch.centers)

    def test_seeded_determinism(self):
        sources = [lesion_case(n_lesion=30)]
        targets = [lesion_case(domain='T', case_id='t')]
        a = build_adv_batch(sources, targets, rng=np.random.default_rng(7))
        b = build_adv_batch(sources, targets, rng=np.random.default_rng(7))
        assert a.centers == b.centers
        assert np.array_equal(a.normal, b.normal)
        c = build_seg_batch(sources, rng=np.random.default_rng(7))
        d = build_seg_batch(sources, rng=np.random.default_rng(7))
        assert c.centers == d.centers


class TestCases(object):
    def test_invariants(self):
        with pytest.raises(ValueError):
            CaseRecord(np.zeros((1, 4, 4, 4)), 'X', 'a')
        with pytest.raises(ValueError):
            CaseRecord(np.zeros((1, 4, 4, 4)), 'S', 'a', labels=np.zeros((4, 4, 3)))
        with pytest.raises(ValueError):
            CaseRecord(np.zeros((1, 4, 4, 4)), 'S', 'a', mask=np.zeros((3, 4, 4)))

    def test_unlabelled_view(self):
        view = lesion_case(n_lesion=3).unlabelled()
        assert isinstance(view, UnlabelledCase)
        assert not hasattr(view, 'labels')

    def test_manifest_round_trip(self, tmp_path):
        cases = [lesion_case((6, 6, 6), n_lesion=4, case_id='S_001'),
                 lesion_case((6, 6, 6), domain='T', case_id='T_001')]
        cases[1].mask = np.ones((6, 6, 6), dtype=bool)
        manifest, manifest_path = DatasetManifest.write_cases(cases, str(tmp_path))
        loaded = DatasetManifest.load(manifest_path)
        assert loaded.case_ids() == ['S_001', 'T_001']
        assert loaded.case_ids('T') == ['T_001']
        case = loaded.load_case('S_001')
        assert np.array_equal(case.image, cases[0].image)
        assert np.array_equal(case.labels, cases[0].labels)
        assert case.mask is None
        target = loaded.load_case('T_001', labels=False)
        assert not hasattr(target, 'labels')
        assert target.mask.all()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            DatasetManifest.load(str(tmp_path/'nothing.json'))

    def test_duplicate_ids(self):
        entry = {'case_id': 'a', 'image': 'a.json', 'labels': None, 'mask': None,
                 'domain': 'S'}
        with pytest.raises(ValueError):
            DatasetManifest([entry, entry])

    def test_folds(self):
        folds = split_folds(['T_3', 'T_1', 'T_2', 'T_0', 'T_4'], 2)
        assert folds == [['T_0', 'T_1', 'T_2'], ['T_3', 'T_4']]
        with pytest.raises(ValueError):
            split_folds(['a'], 2)

    def test_split_domain_channel(self):
        source = lesion_case(n_lesion=2)
        target = lesion_case(domain='T', case_id='t', seed=1)
        s = split_domain_channel(source, 1)
        t = split_domain_channel(target, 1)
        assert s.image.shape[0] == t.image.shape[0] == 3
        assert np.array_equal(s.image[:2], source.image)
        assert np.all(s.image[2] == -4)
        assert np.array_equal(t.image[0], target.image[0])
        assert np.all(t.image[1] == -4)
        assert np.array_equal(t.image[2], target.image[1])
        assert np.array_equal(s.labels, source.labels)
