"""
Cases and dataset manifests.

A :py:class:`CaseRecord` holds one multi-channel volume, its optional label
map and mask, and its domain tag. :py:class:`UnlabelledCase` is the
label-free view handed to everything that must not see labels (the B_adv
builder, target cases in unsupervised adaptation).

A :py:class:`DatasetManifest` is the JSON list of
`{case_id, image, labels|null, mask|null, domain}` entries describing a
dataset on disk (paths relative to the manifest).
"""

# %% IMPORTS
# Built-in imports
import logging as log
import os
from os import path

# Package imports
import numpy as np

# DAMSEL imports
from damsel.tools.io import load_volume, read_json, save_volume, write_json

# All declaration
__all__ = ['CaseRecord', 'UnlabelledCase', 'DatasetManifest', 'DOMAINS',
           'DOMAIN_LABELS', 'split_folds', 'split_domain_channel']

DOMAINS = ('S', 'T')
DOMAIN_LABELS = {'S': 0, 'T': 1}


# %% CLASS DEFINITIONS
class UnlabelledCase(object):
    """
    Label-free view of a case: image, mask, domain and case id only

    Parameters
    ----------
    image : numpy.ndarray
        `[C, X, Y, Z]` volume.
    domain : str
        'S' or 'T'.
    case_id : str
        Identifier.
    mask : numpy.ndarray
        Optional boolean `[X, Y, Z]` foreground (brain) mask.
    """
    def __init__(self, image, domain, case_id, mask=None):
        image = np.asarray(image, dtype=np.float32)
        if image.ndim != 4:
            raise ValueError('Case images must be [C,X,Y,Z], got shape {}'.format(image.shape))
        if domain not in DOMAINS:
            raise ValueError('Unknown domain {!r} (expected S or T)'.format(domain))
        if mask is not None:
            mask = np.asarray(mask).astype(bool)
            if mask.shape != image.shape[1:]:
                raise ValueError('Mask shape {} does not match image {}'.format(
                    mask.shape, image.shape[1:]))
        self.image = image
        self.mask = mask
        self.domain = domain
        self.case_id = str(case_id)

    @property
    def spatial_shape(self):
        return self.image.shape[1:]

    @property
    def channels(self):
        return self.image.shape[0]

    @property
    def domain_label(self):
        """0 for the source domain, 1 for the target domain"""
        return DOMAIN_LABELS[self.domain]

    def mask_or_all(self):
        """The mask, or an all-*True* array when there is none"""
        if self.mask is None:
            return np.ones(self.spatial_shape, dtype=bool)
        return self.mask

    def __repr__(self):
        return '{}({!r}, domain={!r}, shape={})'.format(type(self).__name__, self.case_id,
                                                       self.domain, self.image.shape)


class CaseRecord(UnlabelledCase):
    """
    One case: image, optional label map and mask, domain tag

    Parameters
    ----------
    image : numpy.ndarray
        `[C, X, Y, Z]` volume.
    domain : str
        'S' or 'T'.
    case_id : str
        Identifier.
    labels : numpy.ndarray
        Optional `[X, Y, Z]` map of class ids.
    mask : numpy.ndarray
        Optional boolean `[X, Y, Z]` mask.
    """
    def __init__(self, image, domain, case_id, labels=None, mask=None):
        super().__init__(image, domain, case_id, mask=mask)
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != self.spatial_shape:
                raise ValueError('Label shape {} does not match image {}'.format(
                    labels.shape, self.spatial_shape))
            labels = labels.astype(np.uint8)
        self.labels = labels

    @property
    def has_labels(self):
        return self.labels is not None

    def unlabelled(self):
        """Label-free view sharing the image and mask arrays"""
        return UnlabelledCase(self.image, self.domain, self.case_id, mask=self.mask)


class DatasetManifest(object):
    """
    List of cases stored on disk

    Parameters
    ----------
    entries : list of dict
        `{case_id, image, labels, mask, domain}` dictionaries; paths are
        relative to `root`.
    root : str
        Directory the paths are relative to (that of the manifest file).
    """
    def __init__(self, entries, root='.'):
        self.entries = [dict(e) for e in entries]
        self.root = root
        ids = [e['case_id'] for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError('Case ids in a manifest must be unique')
        for e in self.entries:
            if e.get('domain') not in DOMAINS:
                raise ValueError('Case {!r} has no valid domain tag'.format(e['case_id']))

    def __len__(self):
        return len(self.entries)

    @classmethod
    def load(cls, filepath):
        """Reads a manifest JSON file"""
        log.debug('@ cases::DatasetManifest.load')
        if not path.isfile(filepath):
            raise FileNotFoundError('Manifest not found: {}'.format(filepath))
        entries = read_json(filepath)
        if not isinstance(entries, list):
            raise ValueError('A manifest must be a JSON list of cases: {}'.format(filepath))
        return cls(entries, root=path.dirname(path.abspath(filepath)))

    def save(self, filepath):
        """Writes the manifest JSON file"""
        log.debug('@ cases::DatasetManifest.save')
        write_json(filepath, self.entries)
        return filepath

    def case_ids(self, domain=None):
        """Sorted case ids (optionally of one domain)"""
        return sorted(e['case_id'] for e in self.entries
                      if domain is None or e['domain'] == domain)

    def entry(self, case_id):
        for e in self.entries:
            if e['case_id'] == case_id:
                return e
        raise KeyError('No case {!r} in the manifest'.format(case_id))

    def _path(self, relpath):
        return path.join(self.root, relpath)

    def load_case(self, case_id, *, labels=True):
        """
        Reads one case

        Parameters
        ----------
        case_id : str
            Case identifier.
        labels : bool
            If *False* the label map is not read and an
            :py:class:`UnlabelledCase` is returned.

        Returns
        -------
        CaseRecord or UnlabelledCase
        """
        log.debug('@ cases::DatasetManifest.load_case')
        e = self.entry(case_id)
        image, _ = load_volume(self._path(e['image']))
        mask = None
        if e.get('mask'):
            mask, _ = load_volume(self._path(e['mask']))
        if not labels:
            return UnlabelledCase(image, e['domain'], e['case_id'], mask=mask)
        label_map = None
        if e.get('labels'):
            label_map, _ = load_volume(self._path(e['labels']))
        return CaseRecord(image, e['domain'], e['case_id'], labels=label_map, mask=mask)

    def load_cases(self, domain=None, case_ids=None, *, labels=True):
        """Reads several cases, in sorted case id order"""
        if case_ids is None:
            case_ids = self.case_ids(domain)
        return [self.load_case(cid, labels=labels) for cid in sorted(case_ids)]

    @classmethod
    def write_cases(cls, cases, directory, filename='manifest.json'):
        """
        Writes cases as volume files plus a manifest

        Parameters
        ----------
        cases : list of CaseRecord
            Cases to store.
        directory : str
            Output directory (created if needed).

        Returns
        -------
        manifest : DatasetManifest
        manifest_path : str
        """
        log.debug('@ cases::DatasetManifest.write_cases')
        os.makedirs(path.join(directory, 'cases'), exist_ok=True)
        entries = []
        for case in sorted(cases, key=lambda c: c.case_id):
            stem = path.join('cases', case.case_id)
            save_volume(path.join(directory, stem + '_image'), case.image, domain=case.domain)
            entry = {'case_id': case.case_id, 'image': stem + '_image.json',
                     'labels': None, 'mask': None, 'domain': case.domain}
            if getattr(case, 'labels', None) is not None:
                save_volume(path.join(directory, stem + '_labels'), case.labels,
                            domain=case.domain)
                entry['labels'] = stem + '_labels.json'
            if case.mask is not None:
                save_volume(path.join(directory, stem + '_mask'), case.mask.astype(np.uint8),
                            domain=case.domain)
                entry['mask'] = stem + '_mask.json'
            entries.append(entry)
        manifest = cls(entries, root=path.abspath(directory))
        manifest_path = manifest.save(path.join(directory, filename))
        log.info('Wrote {} cases and manifest {}'.format(len(entries), manifest_path))
        return manifest, manifest_path


# %% FUNCTION DEFINITIONS
def split_folds(case_ids, n_folds=2):
    """
    Splits case ids into contiguous folds of the sorted id list

    Parameters
    ----------
    case_ids : list of str
    n_folds : int

    Returns
    -------
    folds : list of list of str
    """
    if n_folds < 1:
        raise ValueError('n_folds must be at least 1')
    ids = sorted(case_ids)
    if len(ids) < n_folds:
        raise ValueError('Cannot split {} cases into {} folds'.format(len(ids), n_folds))
    return [list(block) for block in np.array_split(np.array(ids, dtype=object), n_folds)]


def split_domain_channel(case, channel, fill=-4.0):
    """
    Moves the target-domain version of `channel` to a channel of its own

    The result has one extra channel: source cases keep `channel` and get
    the extra (last) channel filled with `fill`; target cases move
    `channel` to the last position and get `channel` filled with `fill`.
    Labels, mask, domain and id are kept.
    """
    image = case.image
    if not 0 <= channel < image.shape[0]:
        raise IndexError('Channel {} out of range for {} channels'.format(channel,
                                                                        image.shape[0]))
    extra = np.full((1,) + image.shape[1:], fill, dtype=image.dtype)
    if case.domain == 'S':
        new_image = np.concatenate([image, extra])
    else:
        new_image = np.concatenate([image, image[channel:channel + 1]])
        new_image[channel] = fill
    if isinstance(case, CaseRecord):
        return CaseRecord(new_image, case.domain, case.case_id, labels=case.labels,
                          mask=case.mask)
    return UnlabelledCase(new_image, case.domain, case.case_id, mask=case.mask)
