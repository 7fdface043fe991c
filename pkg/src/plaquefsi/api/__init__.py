"""HTTP service layer; see :mod:`plaquefsi.api.app`."""
