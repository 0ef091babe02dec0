import inspect
import os
import sys
import time
from typing import Dict, Optional

import joblib
import matplotlib
import numba
import numpy
import pint
import scipy
import skimage

import wrtomo


def _blas_info() -> str:
    config = numpy.__config__
    if hasattr(config, "blas_ilp64_opt_info"):
        blas_info = config.blas_ilp64_opt_info
    elif hasattr(config, "blas_opt_info"):
        blas_info = config.blas_opt_info
    else:
        blas_info = {}
    libraries = blas_info.get("libraries", [])
    if hasattr(config, "mkl_info") or any("mkl" in lib for lib in libraries):
        return "INTEL MKL"
    if hasattr(config, "openblas_info") or any("openblas" in lib for lib in libraries):
        return "OPENBLAS"
    if "-Wl,Accelerate" in blas_info.get("extra_link_args", []):
        return "Accelerate"
    return "Generic"


def version_dict() -> Dict[str, str]:
    """Returns a dictionary containing the versions of important dependencies."""
    cpu_count = [joblib.cpu_count(only_physical_cores=b) for b in (True, False)]
    version = wrtomo.__version__
    if wrtomo.__git_revision__ is not None:
        version = version + f"; git revision {wrtomo.__git_revision__}"
    return {
        "wrtomo": version,
        "Numpy": numpy.__version__,
        "SciPy": scipy.__version__,
        "scikit-image": skimage.__version__,
        "matplotlib": matplotlib.__version__,
        "numba": numba.__version__,
        "pint": pint.__version__,
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
        install_path = os.path.dirname(inspect.getsourcefile(wrtomo))
        rows.append(("Installation path", install_path))
    width = max(len(name) for name, _ in rows + [("Software", "")])
    lines = [f"{'Software':<{width}}  Version", "-" * (width + 9)]
    lines.extend(f"{name:<{width}}  {version}" for name, version in rows)
    lines.append(time.strftime("%a %b %d %H:%M:%S %Y %Z"))
    return "\n".join(lines)
