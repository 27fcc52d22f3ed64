#!/usr/bin/env python3
# -*- coding: utf-8 -*-

# %% IMPORTS
# Built-in imports
import json

# All declaration
__all__ = ['BaseClass', 'SpecBase']


# %% CLASS DEFINITIONS
# Define a base class that automatically checks for missing attributes
class BaseClass(object):
    # Class attributes
    REQ_ATTRS = []

    def __init__(self):
        # Check if all required class attributes are defined
        self._check_class_attrs()

    # This function checks if all required class attributes are available
    def _check_class_attrs(self):
        # Loop over all required attributes in REQ_ATTRS and check if it exists
        for attr in self.REQ_ATTRS:
            if not hasattr(self, attr):
                # Raise error if attribute is not found
                raise AttributeError("Required class attribute %r is not "
                                     "defined!" % (attr))


class SpecBase(BaseClass):
    """
    Base class for the JSON-mirrored description objects (architecture
    specs, schedules, synthetic data configurations).

    Subclasses list their fields in the class attribute `FIELDS` (in the
    order they are written to disk) and implement :py:meth:`validate`,
    which must return a list of human readable problems (empty if the
    object is valid).

    Attributes
    ----------
    SPEC_VERSION : int
        Version written to the `spec_version` key of the JSON document.
    """
    # Class attributes
    REQ_ATTRS = ['FIELDS']
    SPEC_VERSION = 1

    def validate(self):
        """
        Lists the problems found in this object

        Returns
        -------
        problems : list of str
            Empty if the object is consistent.
        """
        return []

    def check(self):
        """
        Raises :py:class:`ValueError` listing every problem reported by
        :py:meth:`validate`, if there is any.
        """
        problems = self.validate()
        if problems:
            raise ValueError('Invalid {}: {}'.format(type(self).__name__,
                                                     '; '.join(problems)))
        return self

    def to_dict(self):
        """Field-for-field dictionary representation (JSON compatible)"""
        out = {'spec_version': self.SPEC_VERSION}
        for field in self.FIELDS:
            value = getattr(self, field)
            if isinstance(value, tuple):
                value = list(value)
            out[field] = value
        return out

    @classmethod
    def from_dict(cls, data):
        """
        Builds the object from a dictionary produced by :py:meth:`to_dict`
        (unknown keys are rejected, missing ones take their defaults).
        """
        data = dict(data)
        version = data.pop('spec_version', cls.SPEC_VERSION)
        if version != cls.SPEC_VERSION:
            raise ValueError('Unsupported spec_version {} for {} '
                             '(expected {})'.format(version, cls.__name__,
                                                    cls.SPEC_VERSION))
        unknown = set(data) - set(cls.FIELDS)
        if unknown:
            raise KeyError('Unknown {} fields: {}'.format(
                cls.__name__, ', '.join(sorted(unknown))))
        return cls(**data)

    def to_json(self, path):
        """Writes the object to a JSON file"""
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=False)

    @classmethod
    def from_json(cls, path):
        """Reads an object previously written with :py:meth:`to_json`"""
        with open(path, 'r') as f:
            return cls.from_dict(json.load(f))

    def __eq__(self, other):
        return (type(self) is type(other)) and (self.to_dict() == other.to_dict())

    def __repr__(self):
        args = ', '.join('{}={!r}'.format(k, getattr(self, k))
                         for k in self.FIELDS)
        return '{}({})'.format(type(self).__name__, args)
