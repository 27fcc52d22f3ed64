# %% IMPORTS
# Built-in imports
import filecmp
import os
from os import path

# Package imports
import numpy as np
import pytest

# DAMSEL imports
from damsel.sampling import DatasetManifest
from damsel.synthdata import (SynthConfig, case_generator, ellipsoid_mask,
                              gen_case, gen_dataset, render_case, smooth_field)

# Marks tests in this module as quick
pytestmark = pytest.mark.quick


def small_config(**kwargs):
    settings = dict(extent=24, n_source=3, n_target=2, lesion_radius=(2.0, 3.0), seed=9)
    settings.update(kwargs)
    return SynthConfig(**settings)


# %% PYTEST DEFINITIONS
class TestConfig(object):
    def test_defaults(self):
        config = SynthConfig(seed=1)
        assert config.validate() == []
        assert config.tissue_means == [[1.0, 0.4], [0.6, 1.0]]
        assert len(SynthConfig(channels=3, lesion_channel=2, shift_channel=2,
                               seed=1).tissue_means) == 3

    @pytest.mark.parametrize('field, value', [
        ('extent', 16), ('n_target', 0), ('lesion_count', (3, 1)),
        ('lesion_radius', (0.0, 2.0)), ('lesion_radius', (2.0, 20.0)),
        ('shift_channel', 2), ('tissue_fraction', 1.5), ('noise_std', -1.0)])
    def test_invalid(self, field, value):
        assert SynthConfig(**{field: value}).validate()

    def test_json_round_trip(self, tmp_path):
        config = small_config(shift_gain=-1.0)
        config.to_json(str(tmp_path / 'synth.json'))
        assert SynthConfig.from_json(str(tmp_path / 'synth.json')) == config


class TestRendering(object):
    def test_smooth_field(self):
        field = smooth_field((20, 22, 24), 4, np.random.default_rng(0))
        assert field.shape == (20, 22, 24)
        assert field.mean() == pytest.approx(0, abs=1e-10)
        assert field.std() == pytest.approx(1)
        # Neighbouring voxels are strongly correlated
        assert np.corrcoef(field[:-1].ravel(), field[1:].ravel())[0, 1] > 0.8

    def test_mask(self):
        mask = ellipsoid_mask(24)
        assert mask.shape == (24, 24, 24)
        assert mask[12, 12, 12] and not mask[0, 0, 0]
        assert 0.2 < mask.mean() < 0.4

    def test_determinism(self):
        config = small_config()
        first = gen_case(config, 'S', case_generator(config, 'S', 4), 'S004')
        second = gen_case(config, 'S', case_generator(config, 'S', 4), 'S004')
        assert np.array_equal(first.image, second.image)
        assert np.array_equal(first.labels, second.labels)
        other = gen_case(config, 'S', case_generator(config, 'S', 5))
        assert not np.array_equal(first.image, other.image)
        target = gen_case(config, 'T', case_generator(config, 'T', 4))
        assert not np.array_equal(first.image, target.image)

    def test_no_lesions(self):
        config = small_config(lesion_count=(0, 0))
        parts = render_case(config, 'S', np.random.default_rng(1))
        assert not parts['labels'].any()
        assert not parts['lesion_offset'].any()

    def test_lesions(self):
        config = small_config()
        for index in range(100):
            parts = render_case(config, 'S', case_generator(config, 'S', index))
            labels, mask = parts['labels'] > 0, parts['mask']
            assert labels.any()
            assert not (labels & ~mask).any()
            assert 0 < labels.sum() / mask.sum() <= 0.1
            assert np.array_equal(parts['lesion_offset'] > 0, labels)
            assert not parts['image'][:, ~mask].any()

    def test_contrast_shift(self):
        config = small_config(lesion_count=(2, 2))
        for domain, sign in (('S', 1), ('T', -1)):
            parts = render_case(config, domain, case_generator(config, domain, 0))
            labels, mask = parts['labels'] > 0, parts['mask']
            lesion_channel = parts['image'][config.lesion_channel]
            contrast = lesion_channel[labels].mean() - lesion_channel[mask & ~labels].mean()
            assert np.sign(contrast) == sign

    def test_shared_distribution(self):
        config = small_config(shift_enabled=False)
        source = render_case(config, 'S', np.random.default_rng(2))
        target = render_case(config, 'T', np.random.default_rng(2))
        assert np.array_equal(source['image'], target['image'])


class TestDataset(object):
    def test_gen_dataset(self, tmp_path):
        config = small_config()
        manifest, manifest_path = gen_dataset(config, str(tmp_path / 'data'))
        assert manifest_path == path.join(str(tmp_path / 'data'), 'manifest.json')
        assert len(manifest) == 5
        assert manifest.case_ids('S') == ['S000', 'S001', 'S002']
        assert manifest.case_ids('T') == ['T000', 'T001']
        assert SynthConfig.from_json(str(tmp_path / 'data' / 'synth_config.json')) == config

        loaded = DatasetManifest.load(manifest_path)
        case = loaded.load_case('T001')
        assert case.domain == 'T' and case.has_labels
        expected = gen_case(config, 'T', case_generator(config, 'T', 1))
        assert np.allclose(case.image, expected.image)
        assert np.array_equal(case.labels, expected.labels)
        assert np.array_equal(case.mask, expected.mask)

    def test_regeneration_is_identical(self, tmp_path):
        config = small_config(n_source=2, n_target=2)
        first, _ = gen_dataset(config, str(tmp_path / 'a'))
        gen_dataset(config, str(tmp_path / 'b'))
        names = sorted(os.listdir(str(tmp_path / 'a' / 'cases')))
        assert names == sorted(os.listdir(str(tmp_path / 'b' / 'cases')))
        match, mismatch, errors = filecmp.cmpfiles(str(tmp_path / 'a' / 'cases'),
                                                   str(tmp_path / 'b' / 'cases'),
                                                   names, shallow=False)
        assert mismatch == [] and errors == []
        assert filecmp.cmp(str(tmp_path / 'a' / 'manifest.json'),
                           str(tmp_path / 'b' / 'manifest.json'), shallow=False)

    def test_invalid_config(self, tmp_path):
        with pytest.raises(ValueError):
            gen_dataset(small_config(extent=10), str(tmp_path))
