# %% IMPORTS
# Built-in imports
import importlib
import sys
from os import path

# Package imports
import numpy as np
import pytest

# DAMSEL imports
from damsel.tools import (ConfigError, SpecBase, Timer, derived_generator,
                          is_master, load_checkpoint, load_object, load_volume,
                          mpi_arrange, mpi_barrier, mpi_gather, mpi_scatter_items,
                          rc, read_json, save_checkpoint, save_object, save_volume,
                          seed_generator, spawn_generators, write_json)
from damsel.tools import mpi_helper
from damsel.tools.config import read_rc_from_env

# Marks tests in this module as quick
pytestmark = pytest.mark.quick


class Window(SpecBase):
    FIELDS = ['width', 'centre']

    def __init__(self, width=3, centre=(0, 0)):
        super().__init__()
        self.width = width
        self.centre = tuple(centre)

    def validate(self):
        return [] if self.width > 0 else ['width must be positive']


# %% PYTEST DEFINITIONS
class TestConfig(object):
    def test_rc_from_env(self, monkeypatch):
        monkeypatch.setitem(rc, 'default_seed', 1)
        monkeypatch.setenv('DAMSEL_DEFAULT_SEED', '42')
        read_rc_from_env()
        assert rc['default_seed'] == 42

    def test_config_error(self):
        error = ConfigError(['a is missing', 'b is negative'])
        assert error.problems == ['a is missing', 'b is negative']
        assert 'a is missing; b is negative' in str(error)
        assert isinstance(error, ValueError)
        assert ConfigError('single').problems == ['single']


class TestSpecBase(object):
    def test_round_trip(self, tmp_path):
        window = Window(5, (1, 2))
        assert window.to_dict() == {'spec_version': 1, 'width': 5, 'centre': [1, 2]}
        window.to_json(str(tmp_path / 'window.json'))
        assert Window.from_json(str(tmp_path / 'window.json')) == window
        assert Window.from_dict({'width': 4}) == Window(4)
        assert repr(window) == 'Window(width=5, centre=(1, 2))'

    def test_rejections(self):
        with pytest.raises(KeyError):
            Window.from_dict({'height': 3})
        with pytest.raises(ValueError):
            Window.from_dict({'spec_version': 2})
        with pytest.raises(ValueError):
            Window(0).check()
        assert Window(0) != Window(1)


class TestRandomSeed(object):
    def test_seed_generator(self):
        assert seed_generator(12) == 12
        assert seed_generator(0) == 0
        assert seed_generator(np.int64(3)) == 3
        with pytest.raises(ValueError):
            seed_generator(-1)
        with pytest.raises(TypeError):
            seed_generator(1.5)

    def test_streams(self):
        streams = spawn_generators(5, ['seg', 'adv'])
        again = spawn_generators(5, ['adv'])
        assert streams['adv'].random() == again['adv'].random()
        assert (derived_generator(5, 'seg').integers(1 << 30)
                != derived_generator(5, 'adv').integers(1 << 30))
        assert (derived_generator(5, 'synth', 'T', 3).random()
                == derived_generator(5, 'synth', 'T', 3).random())
        assert (derived_generator(5, 'synth', 'T', 3).random()
                != derived_generator(6, 'synth', 'T', 3).random())

    def test_seed_zero_is_reproducible(self):
        first = spawn_generators(0, ['seg', 'adv'])
        second = spawn_generators(0, ['seg', 'adv'])
        for name in ('seg', 'adv'):
            assert np.array_equal(first[name].integers(1 << 30, size=8),
                                  second[name].integers(1 << 30, size=8))
        assert (spawn_generators(0, ['seg'])['seg'].random()
                != spawn_generators(1, ['seg'])['seg'].random())


class TestTimer(object):
    def test_timed(self):
        timer = Timer()
        with timer.timed('event'):
            pass
        assert timer.record['event'] >= 0
        with pytest.raises(KeyError):
            timer.tock('other')
        with pytest.raises(NotImplementedError):
            timer.record = {}


class TestIO(object):
    def test_json(self, tmp_path):
        filepath = str(tmp_path / 'data.json')
        write_json(filepath, {'a': [1, 2]})
        assert read_json(filepath) == {'a': [1, 2]}

    def test_checkpoint(self, tmp_path):
        parameters = {'seg.layer1.kernels': np.arange(6.0).reshape(1, 2, 3),
                      'seg.layer1.bias': np.array([0.5])}
        directory = str(tmp_path / 'ckpt')
        save_checkpoint(directory, parameters, momentum=0.9, epoch=3,
                        extra={'network': 'segmenter'})
        blob = np.fromfile(path.join(directory, 'seg.layer1.bias.bin'), dtype='<f4')
        assert blob.tolist() == [0.5]
        values, manifest = load_checkpoint(directory)
        assert list(values) == list(parameters)
        assert values['seg.layer1.kernels'].dtype == np.float32
        assert np.array_equal(values['seg.layer1.kernels'], parameters['seg.layer1.kernels'])
        assert manifest['epoch'] == 3 and manifest['momentum'] == 0.9
        assert manifest['network'] == 'segmenter'
        assert manifest['parameters'][0] == {'name': 'seg.layer1.kernels',
                                             'shape': [1, 2, 3]}

    def test_checkpoint_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(str(tmp_path))
        directory = str(tmp_path / 'ckpt')
        save_checkpoint(directory, {'w': np.zeros(4)})
        with open(path.join(directory, 'w.bin'), 'wb') as f:
            f.write(b'\x00'*8)
        with pytest.raises(ValueError):
            load_checkpoint(directory)
        manifest = read_json(path.join(directory, 'manifest.json'))
        manifest['format_version'] = 99
        write_json(path.join(directory, 'manifest.json'), manifest)
        with pytest.raises(ValueError):
            load_checkpoint(directory)

    def test_volumes(self, tmp_path):
        image = np.random.default_rng(0).normal(size=(2, 3, 4, 5))
        save_volume(str(tmp_path / 'img'), image, domain='T')
        loaded, sidecar = load_volume(str(tmp_path / 'img.json'))
        assert loaded.dtype == np.float32
        assert np.allclose(loaded, image, atol=1e-6)
        assert sidecar == {'shape': [2, 3, 4, 5], 'dtype': 'f32le', 'order': 'row-major',
                           'domain': 'T'}
        assert path.getsize(str(tmp_path / 'img.raw')) == 4 * image.size

        labels = np.zeros((3, 4, 5), dtype=bool)
        labels[1, 2, 3] = True
        save_volume(str(tmp_path / 'lab'), labels)
        loaded, sidecar = load_volume(str(tmp_path / 'lab'))
        assert sidecar['dtype'] == 'u8' and loaded.dtype == np.uint8
        assert loaded.sum() == 1 and loaded[1, 2, 3] == 1
        with pytest.raises(ValueError):
            save_volume(str(tmp_path / 'bad'), np.array([[[300]]]))
        with pytest.raises(TypeError):
            save_volume(str(tmp_path / 'bad'), np.array([['a']]))

    def test_objects(self, tmp_path):
        obj = {'timer': Timer(), 'scale': lambda x: 2*x}
        save_object(obj, str(tmp_path / 'obj.pkl'))
        loaded = load_object(str(tmp_path / 'obj.pkl'))
        assert loaded['scale'](4) == 8
        assert isinstance(loaded['timer'], Timer)


class TestMPI(object):
    def test_arrange(self, monkeypatch):
        monkeypatch.setitem(rc, 'distribute_cases', False)
        assert mpi_arrange(7) == (0, 7)
        assert mpi_scatter_items(['a', 'b']) == ['a', 'b']
        assert mpi_gather([1, 2]) == [1, 2]
        assert is_master()
        mpi_barrier()
        with pytest.raises(ValueError):
            mpi_arrange(-1)

    def test_single_process(self):
        items = list(range(5))
        assert mpi_gather(mpi_scatter_items(items)) == items

    def test_without_mpi4py(self, monkeypatch):
        monkeypatch.setitem(sys.modules, 'mpi4py', None)
        try:
            helper = importlib.reload(mpi_helper)
            assert not helper.has_mpi
            assert helper.comm is None
            assert (helper.mpisize, helper.mpirank) == (1, 0)
            items = ['S000', 'S001', 'T000']
            assert helper.mpi_scatter_items(items) == items
            assert helper.mpi_gather(items) == items
            assert helper.is_master()
            helper.mpi_barrier()
        finally:
            monkeypatch.undo()
            importlib.reload(mpi_helper)
