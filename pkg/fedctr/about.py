import inspect
import os
import sys
import time
from typing import Dict, Optional

import h5py
import joblib
import matplotlib
import numba
import numpy
import scipy

import fedctr


_BLAS_VENDORS = (("mkl", "INTEL MKL"), ("openblas", "OPENBLAS"))


def _blas_info() -> str:
    """Names the BLAS vendor numpy was linked against, or ``"Generic"``."""
    config = numpy.__config__
    info = getattr(config, "blas_ilp64_opt_info", None)
    if info is None:
        info = getattr(config, "blas_opt_info", {})
    libraries = " ".join(info.get("libraries", []))
    for key, vendor in _BLAS_VENDORS:
        if hasattr(config, f"{key}_info") or key in libraries:
            return vendor
    if "-Wl,Accelerate" in info.get("extra_link_args", []):
        return "Accelerate"
    return "Generic"


def version_dict() -> Dict[str, str]:
    """Returns a dictionary containing the versions of important dependencies."""
    cpu_count = [joblib.cpu_count(only_physical_cores=b) for b in (True, False)]
    version = fedctr.__version__
    if fedctr.__git_revision__ is not None:
        version = version + f"; git revision {fedctr.__git_revision__}"
    return {
        "fedctr": version,
        "Numpy": numpy.__version__,
        "SciPy": scipy.__version__,
        "h5py": h5py.__version__,
        "numba": numba.__version__,
        "matplotlib": matplotlib.__version__,
        "joblib": joblib.__version__,
        "Python": sys.version.replace("\n", " "),
        "OS": f"{os.name} [{sys.platform}]",
        "Number of CPUs": f"Physical: {cpu_count[0]}, Logical: {cpu_count[1]}",
        "BLAS Info": _blas_info(),
    }


def version_table(
    version_info: Optional[Dict[str, str]] = None, verbose: bool = False
) -> str:
    """Returns a plain-text table with the versions of important dependencies."""
    if version_info is None:
        version_info = version_dict()
    rows = list(version_info.items())
    if verbose:
        install_path = os.path.dirname(inspect.getsourcefile(fedctr))
        rows.append(("Installation path", install_path))
    width = max(len(name) for name, _ in rows)
    lines = [f"{'Software'.ljust(width)}  Version", "-" * (width + 9)]
    lines.extend(f"{name.ljust(width)}  {version}" for name, version in rows)
    lines.append(time.strftime("%a %b %d %H:%M:%S %Y %Z"))
    return "\n".join(lines)
