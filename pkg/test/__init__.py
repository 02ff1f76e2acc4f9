"""Use zrpfluct.testing instead for test reusables."""
