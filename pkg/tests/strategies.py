"""Hypothesis strategies for polynomials, vector fields and models."""

from fractions import Fraction

from hypothesis import strategies as st

from nomad_canonical_flows.poisson_algebra import (
    ModelSpec,
    NoiseChannel,
    VectorField,
)
from nomad_canonical_flows.polynomial import PolynomialObservable

rationals = st.fractions(min_value=-5, max_value=5, max_denominator=4)
positive_rationals = st.fractions(
    min_value=Fraction(1, 4), max_value=4, max_denominator=4
)


@st.composite
def polynomials(draw, max_degree: int = 3) -> PolynomialObservable:
    monomials = [
        (i, total - i) for total in range(max_degree + 1) for i in range(total + 1)
    ]
    terms = draw(st.dictionaries(st.sampled_from(monomials), rationals, max_size=6))
    return PolynomialObservable(terms)


@st.composite
def vector_fields(draw, max_degree: int = 3) -> VectorField:
    return VectorField(draw(polynomials(max_degree)), draw(polynomials(max_degree)))


@st.composite
def models(draw, max_degree: int = 3, pairs: bool = True) -> ModelSpec:
    channels = [
        NoiseChannel.plain(draw(polynomials(max_degree)))
        for _ in range(draw(st.integers(0, 2)))
    ]
    if pairs:
        channels += [
            NoiseChannel.pair(
                draw(polynomials(max_degree)), draw(polynomials(max_degree))
            )
            for _ in range(draw(st.integers(0, 2)))
        ]
    return ModelSpec(
        draw(polynomials(max_degree)), tuple(channels), draw(positive_rationals)
    )
