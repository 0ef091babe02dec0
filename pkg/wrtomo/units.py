from typing import Optional, Union

import pint

ureg = pint.UnitRegistry()

LENGTH_UNITS = "um"
WAVELENGTH_UNITS = "angstrom"


def to_magnitude(
    value: Union[float, int, str, pint.Quantity],
    units: str,
    registry: Optional[pint.UnitRegistry] = None,
) -> float:
    """Converts a value to a float in the given units.

    Args:
        value: A bare number, which is assumed to already be in ``units``,
            a string like ``"50 um"`` or ``"0.05 mm"``, or a ``pint.Quantity``.
        units: The target units.
        registry: The ``pint.UnitRegistry`` to use. Defaults to ``ureg``.

    Returns:
        The magnitude of ``value`` in ``units``.
    """
    if registry is None:
        registry = ureg
    if isinstance(value, bool):
        raise TypeError(f"Expected a number or quantity, got {value!r}.")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        value = registry(value)
        if not isinstance(value, pint.Quantity):
            return float(value)
    if not isinstance(value, pint.Quantity):
        raise TypeError(f"Expected a number or quantity, got {value!r}.")
    try:
        return float(value.to(units).magnitude)
    except pint.DimensionalityError as e:
        raise ValueError(
            f"Cannot convert {value} to {units!r}: incompatible dimensions."
        ) from e


def to_microns(value: Union[float, str, pint.Quantity]) -> float:
    """Length in microns."""
    return to_magnitude(value, LENGTH_UNITS)


def to_angstrom(value: Union[float, str, pint.Quantity]) -> float:
    """Wavelength in Angstrom."""
    return to_magnitude(value, WAVELENGTH_UNITS)
