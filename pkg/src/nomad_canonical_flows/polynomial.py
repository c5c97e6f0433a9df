#
# Copyright The NOMAD Authors.
#
# This file is part of NOMAD. See https://nomad-lab.eu for further info.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
"""
Exact bivariate polynomials in the canonical coordinates (q, p).

Coefficients are arbitrary-precision rationals. The arithmetic is delegated to
`sympy.Poly` over the rational field, which keeps every value in canonical form,
so structural equality of two observables is equality of their term maps.
"""

import math
import re
from collections.abc import Callable, Mapping
from fractions import Fraction
from numbers import Rational
from tokenize import TokenError
from typing import Union

import numpy as np
import sympy
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    rationalize,
    standard_transformations,
)
from sympy.polys.polyerrors import BasePolynomialError

from nomad_canonical_flows.errors import ModelConfigError

_q, _p = sympy.symbols('q p')

# sums of terms c*q^i*p^j; division only by a numeric literal
_NUMBER = r'(?:\d+(?:\.\d*)?|\.\d+)'
_FACTOR = rf'(?:{_NUMBER}|[qp](?:\s*(?:\^|\*\*)\s*\d+)?)'
_TERM = rf'{_FACTOR}(?:\s*(?:\*\s*{_FACTOR}|/\s*{_NUMBER}))*'
_POLYNOMIAL_TEXT = re.compile(rf'\s*[+-]?\s*{_TERM}(?:\s*[+-]\s*{_TERM})*\s*')
_POWER = re.compile(r'[qp](?:\s*(?:\^|\*\*)\s*(\d+))?')
MAX_DEGREE = 64
_TRANSFORMATIONS = (*standard_transformations, convert_xor, rationalize)
_PARSER_NAMESPACE = {
    'Integer': sympy.Integer,
    'Rational': sympy.Rational,
    'Float': sympy.Float,
    'Symbol': sympy.Symbol,
}

Scalar = Union[int, Fraction, str, float]
Monomial = tuple[int, int]


def to_fraction(value: Scalar | sympy.Rational) -> Fraction:
    """
    Converts a number to an exact `Fraction`.

    Strings are read as decimal (`'0.25'`) or rational (`'3/4'`) literals; floats are
    converted exactly from their binary value.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, sympy.Rational):
        return Fraction(int(value.p), int(value.q))
    if isinstance(value, bool):
        raise TypeError('booleans are not coefficients')
    if isinstance(value, int | Rational | str):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f'non-finite coefficient {value!r}')
        return Fraction(value)
    raise TypeError(f'cannot convert {type(value).__name__} to a rational number')


def _format_monomial(i: int, j: int) -> str:
    parts = []
    if i:
        parts.append('q' if i == 1 else f'q^{i}')
    if j:
        parts.append('p' if j == 1 else f'p^{j}')
    return '*'.join(parts)


class PolynomialObservable:
    """
    A polynomial f(q, p) with rational coefficients.

    Instances are immutable and hashable. Arithmetic accepts other observables and
    rational scalars.

    Args:
        terms (Mapping[tuple[int, int], Scalar] | None): Map from the exponent pair
            (q-exponent, p-exponent) to the coefficient. Zero coefficients are
            dropped.
    """

    def __init__(self, terms: Mapping[Monomial, Scalar] | None = None):
        rep = {}
        for (i, j), value in (terms or {}).items():
            if i < 0 or j < 0:
                raise ValueError(f'negative exponent in monomial {(i, j)}')
            coefficient = to_fraction(value)
            if coefficient:
                rep[(int(i), int(j))] = sympy.Rational(
                    coefficient.numerator, coefficient.denominator
                )
        if rep:
            self._poly = sympy.Poly.from_dict(rep, _q, _p, domain=sympy.QQ)
        else:
            self._poly = sympy.Poly(0, _q, _p, domain=sympy.QQ)
        self._hash = None
        self._numpy = None

    @classmethod
    def _from_poly(cls, poly: sympy.Poly) -> 'PolynomialObservable':
        obj = cls.__new__(cls)
        obj._poly = poly
        obj._hash = None
        obj._numpy = None
        return obj

    @classmethod
    def constant(cls, value: Scalar) -> 'PolynomialObservable':
        return cls({(0, 0): value})

    @classmethod
    def parse(cls, text: str) -> 'PolynomialObservable':
        """
        Parses the text form `c*q^i*p^j + ...`.

        Coefficients may be integers, decimals or rationals like `3/4`. A term is a
        product of numbers and powers `q^i`, `p^j` (`**` is accepted for `^`),
        divided only by numbers; parentheses are not accepted. The total degree of
        a term is at most `MAX_DEGREE`.

        Raises:
            ModelConfigError: The text is not a polynomial in q and p.
        """
        if not isinstance(text, str) or not _POLYNOMIAL_TEXT.fullmatch(text):
            raise ModelConfigError(f'invalid polynomial text: {text!r}')
        for term in re.split(r'[+-]', text):
            degree = sum(int(e) if e else 1 for e in _POWER.findall(term))
            if degree > MAX_DEGREE:
                raise ModelConfigError(
                    f'term {term.strip()!r} exceeds degree {MAX_DEGREE}'
                )
        try:
            expr = parse_expr(
                text,
                local_dict={'q': _q, 'p': _p},
                global_dict=_PARSER_NAMESPACE,
                transformations=_TRANSFORMATIONS,
            )
            poly = sympy.Poly(expr, _q, _p, domain=sympy.QQ)
        except (
            sympy.SympifyError,
            BasePolynomialError,
            SyntaxError,
            TokenError,
            TypeError,
            ValueError,
            ZeroDivisionError,
        ) as e:
            raise ModelConfigError(f'invalid polynomial text: {text!r} ({e})') from e
        return cls._from_poly(poly)

    @property
    def terms(self) -> dict[Monomial, Fraction]:
        return {
            monom: to_fraction(coefficient)
            for monom, coefficient in self._poly.terms()
            if coefficient != 0
        }

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial has degree -1."""
        if self.is_zero():
            return -1
        return max(i + j for i, j in self.terms)

    @property
    def constant_term(self) -> Fraction:
        return self.terms.get((0, 0), Fraction(0))

    def coefficient(self, i: int, j: int) -> Fraction:
        return self.terms.get((i, j), Fraction(0))

    def is_zero(self) -> bool:
        return self._poly.is_zero

    def is_constant(self) -> bool:
        return self.degree <= 0

    def diff_q(self) -> 'PolynomialObservable':
        return PolynomialObservable._from_poly(self._poly.diff(_q))

    def diff_p(self) -> 'PolynomialObservable':
        return PolynomialObservable._from_poly(self._poly.diff(_p))

    def integrate_q(self) -> 'PolynomialObservable':
        """Antiderivative in q vanishing on q = 0."""
        return PolynomialObservable._from_poly(self._poly.integrate(_q))

    def integrate_p(self) -> 'PolynomialObservable':
        """Antiderivative in p vanishing on p = 0."""
        return PolynomialObservable._from_poly(self._poly.integrate(_p))

    def evaluate(self, q: Scalar, p: Scalar) -> Fraction:
        """Exact value at a rational point."""
        q, p = to_fraction(q), to_fraction(p)
        return sum(
            (c * q**i * p**j for (i, j), c in self.terms.items()), start=Fraction(0)
        )

    def to_numpy(self) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        """
        Returns a vectorized float evaluator `f(q, p)` compiled with `sympy.lambdify`.

        The result always has the broadcast shape of the arguments, also for
        constant polynomials.
        """
        if self._numpy is None:
            if self.is_constant():
                value = float(self.constant_term)

                def evaluate_constant(q, p):
                    return np.full(np.broadcast(q, p).shape, value)

                self._numpy = evaluate_constant
            else:
                compiled = sympy.lambdify(
                    (_q, _p), self._poly.as_expr(), modules='numpy'
                )

                def evaluate(q, p):
                    return np.broadcast_to(compiled(q, p), np.broadcast(q, p).shape)

                self._numpy = evaluate
        return self._numpy

    def to_sympy(self) -> sympy.Expr:
        return self._poly.as_expr()

    def __add__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return PolynomialObservable._from_poly(self._poly + other._poly)

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return PolynomialObservable._from_poly(self._poly - other._poly)

    def __rsub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return PolynomialObservable._from_poly(other._poly - self._poly)

    def __mul__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return PolynomialObservable._from_poly(self._poly * other._poly)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, PolynomialObservable):
            return NotImplemented
        divisor = to_fraction(other)
        if not divisor:
            raise ZeroDivisionError('division of a polynomial by zero')
        return self * (1 / divisor)

    def __neg__(self):
        return PolynomialObservable._from_poly(-self._poly)

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int) or exponent < 0:
            return NotImplemented
        return PolynomialObservable._from_poly(self._poly**exponent)

    def __eq__(self, other):
        if isinstance(other, str):
            return NotImplemented
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return self._poly == other._poly

    def __hash__(self):
        # a constant hashes like the scalar it equals
        if self._hash is None:
            if self.is_constant():
                self._hash = hash(self.constant_term)
            else:
                self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __reduce__(self):
        return (PolynomialObservable, (self.terms,))

    def __repr__(self):
        return f'PolynomialObservable({str(self)!r})'

    def __str__(self):
        """Text form in descending graded-lexicographic order, q before p."""
        pieces = []
        for (i, j), value in self._poly.terms(order='grlex'):
            coefficient = to_fraction(value)
            if not coefficient:
                continue
            monomial = _format_monomial(i, j)
            magnitude = abs(coefficient)
            if not monomial:
                body = str(magnitude)
            elif magnitude == 1:
                body = monomial
            else:
                body = f'{magnitude}*{monomial}'
            if not pieces:
                pieces.append(f'-{body}' if coefficient < 0 else body)
            else:
                pieces.append(f'- {body}' if coefficient < 0 else f'+ {body}')
        return ' '.join(pieces) if pieces else '0'


def _coerce(value) -> PolynomialObservable:
    if isinstance(value, PolynomialObservable):
        return value
    try:
        return PolynomialObservable.constant(to_fraction(value))
    except (TypeError, ValueError):
        return NotImplemented


ZERO = PolynomialObservable()
ONE = PolynomialObservable.constant(1)
POSITION = PolynomialObservable({(1, 0): 1})
MOMENTUM = PolynomialObservable({(0, 1): 1})


def random_polynomial(
    rng: np.random.Generator,
    degree: int,
    coefficient_bound: int = 5,
    density: float = 0.6,
    denominators: tuple[int, ...] = (1, 2, 3),
) -> PolynomialObservable:
    """
    Draws a polynomial of total degree at most `degree` with small rational
    coefficients.

    Args:
        rng (np.random.Generator): Source of randomness.
        degree (int): Maximal total degree.
        coefficient_bound (int): Numerators are drawn from
            [-coefficient_bound, coefficient_bound].
        density (float): Probability that a monomial is present.
        denominators (tuple[int, ...]): Candidate denominators.

    Returns:
        PolynomialObservable: The random polynomial.
    """
    terms = {}
    for total in range(degree + 1):
        for i in range(total + 1):
            if rng.random() < density:
                numerator = int(rng.integers(-coefficient_bound, coefficient_bound + 1))
                denominator = int(rng.choice(denominators))
                terms[(i, total - i)] = Fraction(numerator, denominator)
    return PolynomialObservable(terms)
