"""zrpfluct version information."""

try:
    from importlib.metadata import version as _distribution_version
except ImportError:  # python 3.7
    import pkg_resources

    def _distribution_version(name: str) -> str:
        return str(pkg_resources.get_distribution(name).version)


try:
    __version__ = _distribution_version('zrpfluct')
except Exception:
    __version__ = 'unknown'
