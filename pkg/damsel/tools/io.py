"""
On-disk formats used by DAMSEL.

Parameter checkpoints
    A directory holding `manifest.json` (format version, parameter names
    and shapes, momentum coefficient, epoch) plus one raw little-endian
    single-precision blob per parameter, named after the parameter path
    (e.g. `seg.path_norm.layer3.kernels.bin`).

Volumes
    A `<name>.json` sidecar (`shape`, `dtype` 'f32le' or 'u8', `order`,
    `domain`) next to the raw `<name>.raw` blob.

Trainer state
    The whole trainer serialized with `cloudpickle` (see
    :py:meth:`damsel.training.AdversarialTrainer.save`).
"""

# %% IMPORTS
# Built-in imports
import json
import logging as log
import os
from os import path

# Package imports
import cloudpickle
import numpy as np

# DAMSEL imports
from damsel.tools.config import rc

# All declaration
__all__ = ['save_checkpoint', 'load_checkpoint', 'save_volume',
           'load_volume', 'save_object', 'load_object', 'write_json',
           'read_json']

# Supported volume dtypes (name used in the sidecar -> numpy dtype)
VOLUME_DTYPES = {'f32le': np.dtype('<f4'),
                 'u8': np.dtype('u1')}


# %% FUNCTION DEFINITIONS
def write_json(filepath, data):
    """Writes `data` as an indented JSON document"""
    with open(filepath, 'w') as f:
        json.dump(data, f, indent=2)
        f.write('\n')


def read_json(filepath):
    """Reads a JSON document"""
    with open(filepath, 'r') as f:
        return json.load(f)


def save_checkpoint(directory, parameters, *, momentum=None, epoch=None,
                    extra=None):
    """
    Saves a set of parameters as a checkpoint directory

    Parameters
    ----------
    directory : str
        Target directory (created if needed).
    parameters : dict
        Dictionary parameter path -> array (or Tensor) in the order that
        should be preserved in the manifest.
    momentum : float
        Momentum coefficient of the optimizer that produced the parameters.
    epoch : int
        Last completed epoch.
    extra : dict
        Additional JSON-compatible information stored in the manifest.

    Returns
    -------
    manifest_path : str
    """
    log.debug('@ io::save_checkpoint')
    os.makedirs(directory, exist_ok=True)

    entries = []
    for name, value in parameters.items():
        array = np.asarray(getattr(value, 'data', value))
        array.astype('<f4').tofile(path.join(directory, name + '.bin'))
        entries.append({'name': name, 'shape': list(array.shape)})

    manifest = {'format_version': rc['checkpoint_format_version'],
                'parameters': entries,
                'momentum': momentum,
                'epoch': epoch}
    if extra:
        manifest.update(extra)

    manifest_path = path.join(directory, 'manifest.json')
    write_json(manifest_path, manifest)
    log.info('Checkpoint with {} parameters saved to {}'.format(len(entries),
                                                               directory))
    return manifest_path


def load_checkpoint(directory):
    """
    Loads a checkpoint directory written by :py:func:`save_checkpoint`

    Parameters
    ----------
    directory : str
        Checkpoint directory.

    Returns
    -------
    parameters : dict
        Parameter path -> `float32` array, in manifest order.
    manifest : dict
        The decoded `manifest.json`.
    """
    log.debug('@ io::load_checkpoint')
    manifest_path = path.join(directory, 'manifest.json')
    if not path.isfile(manifest_path):
        raise FileNotFoundError('No checkpoint manifest at {}'.format(manifest_path))
    manifest = read_json(manifest_path)

    if manifest.get('format_version') != rc['checkpoint_format_version']:
        raise ValueError('Unsupported checkpoint format version {}'.format(
            manifest.get('format_version')))

    parameters = {}
    for entry in manifest['parameters']:
        shape = tuple(entry['shape'])
        blob = path.join(directory, entry['name'] + '.bin')
        array = np.fromfile(blob, dtype='<f4')
        if array.size != int(np.prod(shape)):
            raise ValueError('Blob {} holds {} values, expected shape {}'.format(
                blob, array.size, shape))
        parameters[entry['name']] = array.reshape(shape).astype(np.float32)
    return parameters, manifest


def save_volume(stem, array, *, domain=None):
    """
    Writes a volume as `<stem>.json` + `<stem>.raw`

    Parameters
    ----------
    stem : str
        Path without extension.
    array : numpy.ndarray
        Image (`[C,X,Y,Z]`, stored as 'f32le') or label/mask map
        (`[X,Y,Z]` integer/bool, stored as 'u8').
    domain : str
        Domain tag ('S' or 'T') recorded in the sidecar.
    """
    log.debug('@ io::save_volume')
    array = np.asarray(array)
    if np.issubdtype(array.dtype, np.floating):
        dtype_name = 'f32le'
    elif (np.issubdtype(array.dtype, np.integer) or array.dtype == bool):
        if array.size and (array.min() < 0 or array.max() > 255):
            raise ValueError('Label maps must hold values in [0, 255]')
        dtype_name = 'u8'
    else:
        raise TypeError('Unsupported volume dtype {}'.format(array.dtype))

    sidecar = {'shape': list(array.shape),
               'dtype': dtype_name,
               'order': 'row-major',
               'domain': domain}
    write_json(stem + '.json', sidecar)
    np.ascontiguousarray(array, dtype=VOLUME_DTYPES[dtype_name]).tofile(stem + '.raw')


def load_volume(stem):
    """
    Reads a volume written by :py:func:`save_volume`

    Parameters
    ----------
    stem : str
        Path without extension (a trailing '.json' or '.raw' is tolerated).

    Returns
    -------
    array : numpy.ndarray
        `float32` for images, `uint8` for label maps.
    sidecar : dict
    """
    log.debug('@ io::load_volume')
    stem, ext = path.splitext(stem)
    if ext not in ('.json', '.raw'):
        stem = stem + ext
    sidecar = read_json(stem + '.json')
    if sidecar.get('order', 'row-major') != 'row-major':
        raise ValueError('Only row-major volumes are supported')
    dtype = VOLUME_DTYPES[sidecar['dtype']]
    array = np.fromfile(stem + '.raw', dtype=dtype)
    shape = tuple(sidecar['shape'])
    if array.size != int(np.prod(shape)):
        raise ValueError('Volume {}.raw does not match its shape {}'.format(stem, shape))
    array = array.reshape(shape)
    if dtype == VOLUME_DTYPES['f32le']:
        array = array.astype(np.float32)
    return array, sidecar


def save_object(obj, filepath):
    """
    Serializes an arbitrary object (e.g. a trainer) with `cloudpickle`
    """
    log.debug('@ io::save_object')
    with open(filepath, 'wb') as f:
        cloudpickle.dump(obj, f)
    return filepath


def load_object(filepath):
    """
    Loads an object saved with :py:func:`save_object`
    """
    log.debug('@ io::load_object')
    with open(filepath, 'rb') as f:
        return cloudpickle.load(f)
