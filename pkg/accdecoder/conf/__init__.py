import collections
import collections.abc

# attrdict (pulled in via flexisettings -> configloader) still imports these
# ABCs from `collections`, which Python 3.10 removed; without them configloader
# silently falls back to a plain dict and attribute access on `settings` fails.
for _name in ('Mapping', 'MutableMapping', 'Sequence'):
    if not hasattr(collections, _name):
        setattr(collections, _name, getattr(collections.abc, _name))

from flexisettings import Settings  # noqa: E402


settings = Settings('ACCDECODER', 'accdecoder.conf.defaults')
